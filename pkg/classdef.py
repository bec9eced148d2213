"""
Especificaciones de clases de Fraïssé: gramática, validación, oráculo de
pertenencia, enumeración acotada y comprobaciones de herencia y amalgamación.
"""
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, permutations, product
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

from config import settings
from errors import CapExceeded, SignatureError, SpecParseError, SpecValidationError
from models import CheckReport
from relstruct import Injection, Signature, Structure, iso_canonical_form, iter_embeddings, restrict
from search import Completion, all_atoms

logger = logging.getLogger(__name__)

Lookup = Callable[[str, Tuple[int, ...]], Optional[bool]]


# ---------------------------------------------------------------------------
# Fórmulas sin cuantificadores (lógica trivalente de Kleene)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    symbol: str
    args: Tuple[str, ...]

    def eval3(self, env: Mapping[str, int], lookup: Lookup) -> Optional[bool]:
        return lookup(self.symbol, tuple(env[a] for a in self.args))

    def atoms(self, env):
        return [(self.symbol, tuple(env[a] for a in self.args))]

    def variables(self):
        return set(self.args)

    def render(self) -> str:
        return f"{self.symbol}({', '.join(self.args)})"


@dataclass(frozen=True)
class Equal:
    left: str
    right: str

    def eval3(self, env, lookup):
        return env[self.left] == env[self.right]

    def atoms(self, env):
        return []

    def variables(self):
        return {self.left, self.right}

    def render(self) -> str:
        return f"{self.left} = {self.right}"


@dataclass(frozen=True)
class Const:
    value: bool

    def eval3(self, env, lookup):
        return self.value

    def atoms(self, env):
        return []

    def variables(self):
        return set()

    def render(self) -> str:
        return "true" if self.value else "false"


@dataclass(frozen=True)
class Not:
    arg: object

    def eval3(self, env, lookup):
        value = self.arg.eval3(env, lookup)
        return None if value is None else not value

    def atoms(self, env):
        return self.arg.atoms(env)

    def variables(self):
        return self.arg.variables()

    def render(self) -> str:
        if isinstance(self.arg, Equal):
            return f"{self.arg.left} != {self.arg.right}"
        return f"!{_wrap(self.arg)}"


@dataclass(frozen=True)
class And:
    args: Tuple[object, ...]

    def eval3(self, env, lookup):
        unknown = False
        for arg in self.args:
            value = arg.eval3(env, lookup)
            if value is False:
                return False
            if value is None:
                unknown = True
        return None if unknown else True

    def atoms(self, env):
        return [a for arg in self.args for a in arg.atoms(env)]

    def variables(self):
        return set().union(*(arg.variables() for arg in self.args)) if self.args else set()

    def render(self) -> str:
        return " & ".join(_wrap(a) for a in self.args) if self.args else "true"


@dataclass(frozen=True)
class Or:
    args: Tuple[object, ...]

    def eval3(self, env, lookup):
        unknown = False
        for arg in self.args:
            value = arg.eval3(env, lookup)
            if value is True:
                return True
            if value is None:
                unknown = True
        return None if unknown else False

    def atoms(self, env):
        return [a for arg in self.args for a in arg.atoms(env)]

    def variables(self):
        return set().union(*(arg.variables() for arg in self.args)) if self.args else set()

    def render(self) -> str:
        return " | ".join(_wrap(a) for a in self.args) if self.args else "false"


@dataclass(frozen=True)
class Implies:
    premise: object
    conclusion: object

    def eval3(self, env, lookup):
        premise = self.premise.eval3(env, lookup)
        if premise is False:
            return True
        conclusion = self.conclusion.eval3(env, lookup)
        if conclusion is True:
            return True
        if premise is True and conclusion is False:
            return False
        return None

    def atoms(self, env):
        return self.premise.atoms(env) + self.conclusion.atoms(env)

    def variables(self):
        return self.premise.variables() | self.conclusion.variables()

    def render(self) -> str:
        return f"{_wrap(self.premise)} -> {_wrap(self.conclusion)}"


@dataclass(frozen=True)
class Iff:
    left: object
    right: object

    def eval3(self, env, lookup):
        left = self.left.eval3(env, lookup)
        right = self.right.eval3(env, lookup)
        if left is None or right is None:
            return None
        return left == right

    def atoms(self, env):
        return self.left.atoms(env) + self.right.atoms(env)

    def variables(self):
        return self.left.variables() | self.right.variables()

    def render(self) -> str:
        return f"{_wrap(self.left)} <-> {_wrap(self.right)}"


def _wrap(node) -> str:
    if isinstance(node, (Atom, Const, Equal)):
        return node.render()
    if isinstance(node, Not) and isinstance(node.arg, (Atom, Const, Equal)):
        return node.render()
    return f"({node.render()})"


def conj(*args) -> object:
    args = tuple(a for a in args if a != Const(True))
    if not args:
        return Const(True)
    return args[0] if len(args) == 1 else And(args)


def disj(*args) -> object:
    args = tuple(a for a in args if a != Const(False))
    if not args:
        return Const(False)
    return args[0] if len(args) == 1 else Or(args)


@dataclass(frozen=True)
class Constraint:
    variables: Tuple[str, ...]
    body: object
    label: str = ""

    def holds_in(self, S: Structure) -> bool:
        lookup = lambda name, tup: S.holds(name, tup)
        for values in product(S.universe, repeat=len(self.variables)):
            if not self.body.eval3(dict(zip(self.variables, values)), lookup):
                return False
        return True

    def render(self) -> str:
        if self.variables:
            return f"constraint forall {', '.join(self.variables)} : {self.body.render()};"
        return f"constraint {self.body.render()};"


# ---------------------------------------------------------------------------
# Declaraciones y especificación de clase
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EqRelDecl:
    id: str
    relation: str
    domain: Optional[str] = None
    length: int = 1
    star: Optional[str] = None
    count: Optional[int] = None
    sides: Tuple[Tuple[str, str], ...] = ()

    @property
    def infinite(self) -> bool:
        return self.count is None

    def side_of(self, symbol: str) -> Optional[str]:
        return dict(self.sides).get(symbol)

    def in_domain(self, args: Sequence[str]):
        if self.domain is None:
            return Const(True)
        return Atom(self.domain, tuple(args))

    def domain_tuples(self, S: Structure) -> List[Tuple[int, ...]]:
        if self.domain is None:
            return list(product(S.universe, repeat=self.length))
        return sorted(S.rel(self.domain))

    def render(self) -> str:
        lines = [f"eqrel {self.id} {{"]
        if self.domain is not None:
            lines.append(f"  domain {self.domain};")
        lines.append(f"  relation {self.relation};")
        lines.append(f"  length {self.length};")
        lines.append(f"  star {self.star or 'trivial'};")
        lines.append(f"  count {'inf' if self.count is None else self.count};")
        for symbol, side in self.sides:
            lines.append(f"  side {symbol} {side};")
        lines.append("}")
        return "\n".join(lines)


@dataclass(frozen=True)
class ClassSpec:
    sig: Signature
    constraints: Tuple[Constraint, ...] = ()
    eqrels: Tuple[EqRelDecl, ...] = ()
    name: str = field(default="", compare=False)
    oracle: Optional[Callable[[Structure], bool]] = field(default=None, compare=False, repr=False)
    oracle_hereditary: bool = field(default=True, compare=False)

    def eqrel(self, rid: str) -> EqRelDecl:
        for decl in self.eqrels:
            if decl.id == rid:
                return decl
        raise SpecValidationError(f"Relación de equivalencia desconocida: {rid}")

    def star_chain(self, rid: str) -> List[str]:
        """Ids estrictamente más gruesos que `rid` siguiendo las estrellas declaradas."""
        chain = []
        current = self.eqrel(rid).star
        while current is not None:
            chain.append(current)
            current = self.eqrel(current).star
        return chain

    def infinite_eqrels(self) -> List[EqRelDecl]:
        return [d for d in self.eqrels if d.infinite]

    def finite_eqrels(self) -> List[EqRelDecl]:
        return [d for d in self.eqrels if not d.infinite]

    @cached_property
    def compiled(self) -> Tuple[Constraint, ...]:
        """Restricciones del usuario más los axiomas de cada relación de equivalencia declarada."""
        compiled = list(self.constraints)
        for decl in self.eqrels:
            compiled.extend(eqrel_axioms(decl, self))
        return tuple(compiled)


def _tuple_vars(prefix: str, k: int) -> Tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(1, k + 1)) if k > 1 else (prefix,)


def eqrel_axioms(decl: EqRelDecl, K: ClassSpec, nesting: bool = True, counting: bool = True) -> List[Constraint]:
    """Axiomas de equivalencia sobre el dominio, anidamiento en la estrella y cota de clases."""
    k = decl.length
    x, y, z = _tuple_vars("x", k), _tuple_vars("y", k), _tuple_vars("z", k)
    P = lambda a, b: Atom(decl.relation, a + b)
    V = decl.in_domain
    axioms = [
        Constraint(x, Implies(V(x), P(x, x)), f"{decl.id}:reflexiva"),
        Constraint(x + y, Implies(conj(V(x), V(y), P(x, y)), P(y, x)), f"{decl.id}:simétrica"),
        Constraint(
            x + y + z,
            Implies(conj(V(x), V(y), V(z), P(x, y), P(y, z)), P(x, z)),
            f"{decl.id}:transitiva",
        ),
    ]
    star = K.eqrel(decl.star) if decl.star is not None else None
    if star is not None and nesting:
        Q = lambda a, b: Atom(star.relation, a + b)
        axioms.append(Constraint(x + y, Implies(conj(V(x), V(y), P(x, y)), Q(x, y)), f"{decl.id}:anidada"))
    if decl.count is not None and counting:
        groups = [_tuple_vars(f"w{i}_", k) for i in range(decl.count + 1)]
        premise = [V(g) for g in groups]
        if star is not None:
            premise += [Atom(star.relation, a + b) for a, b in combinations(groups, 2)]
        conclusion = disj(*(P(a, b) for a, b in combinations(groups, 2)))
        variables = tuple(v for g in groups for v in g)
        axioms.append(Constraint(variables, Implies(conj(*premise), conclusion), f"{decl.id}:cuenta"))
    return axioms


# ---------------------------------------------------------------------------
# Analizador
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<space>[ \t\r]+)|(?P<newline>\n)|(?P<comment>#[^\n]*)"
    r"|(?P<iff><->)|(?P<implies>->)|(?P<neq>!=)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<number>[0-9]+)"
    r"|(?P<punct>[{}();,:/!&|=*])"
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    line, start = 1, 0
    pos = 0
    while pos < len(text):
        match = _TOKEN.match(text, pos)
        if match is None:
            raise SpecParseError(f"Carácter inesperado {text[pos]!r}", line, pos - start + 1)
        kind = match.lastgroup
        if kind == "newline":
            line += 1
            start = match.end()
        elif kind not in ("space", "comment"):
            tokens.append(_Token(kind, match.group(), line, pos - start + 1))
        pos = match.end()
    tokens.append(_Token("eof", "", line, pos - start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, name: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.name = name
        self.symbols: Dict[str, int] = {}
        self.constraints: List[Constraint] = []
        self.eqrels: List[EqRelDecl] = []

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.tok
        return SpecParseError(message, tok.line, tok.column)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind != "eof":
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Token:
        tok = self.tok
        if not self.accept(text):
            raise self.error(f"Se esperaba {text!r} y se encontró {tok.text or 'fin de fichero'!r}")
        return tok

    def ident(self) -> _Token:
        tok = self.tok
        if tok.kind != "ident":
            raise self.error(f"Se esperaba un identificador y se encontró {tok.text or 'fin de fichero'!r}")
        self.i += 1
        return tok

    def number(self) -> int:
        tok = self.tok
        if tok.kind != "number":
            raise self.error(f"Se esperaba un número y se encontró {tok.text or 'fin de fichero'!r}")
        self.i += 1
        return int(tok.text)

    def parse(self) -> ClassSpec:
        while self.tok.kind != "eof":
            tok = self.ident()
            if tok.text == "signature":
                self.signature()
            elif tok.text == "constraint":
                self.constraint()
            elif tok.text == "eqrel":
                self.eqrel(tok)
            else:
                raise self.error(f"Bloque desconocido {tok.text!r}", tok)
        sig = Signature.of(*self.symbols.items())
        return ClassSpec(sig, tuple(self.constraints), tuple(self.eqrels), name=self.name)

    def signature(self) -> None:
        self.expect("{")
        while not self.accept("}"):
            tok = self.ident()
            self.expect("/")
            arity = self.number()
            if arity < 1:
                raise self.error(f"Aridad inválida para {tok.text}", tok)
            if tok.text in self.symbols:
                raise self.error(f"Símbolo repetido {tok.text}", tok)
            self.symbols[tok.text] = arity
            self.expect(";")

    def constraint(self) -> None:
        variables: List[str] = []
        if self.tok.text == "forall":
            self.i += 1
            variables.append(self.ident().text)
            while self.accept(","):
                variables.append(self.ident().text)
            self.expect(":")
        if len(set(variables)) != len(variables):
            raise self.error("Variables cuantificadas repetidas")
        if len(variables) > settings.CONSTRAINT_VAR_CAP:
            raise self.error(f"Demasiadas variables ({len(variables)} > {settings.CONSTRAINT_VAR_CAP})")
        self.bound = set(variables)
        body = self.formula()
        self.expect(";")
        self.constraints.append(Constraint(tuple(variables), body))

    def variable(self) -> str:
        tok = self.ident()
        if tok.text not in self.bound:
            raise self.error(f"Variable no cuantificada {tok.text!r}", tok)
        return tok.text

    def formula(self):
        left = self.implication()
        while self.accept("<->"):
            left = Iff(left, self.implication())
        return left

    def implication(self):
        left = self.disjunction()
        if self.accept("->"):
            return Implies(left, self.implication())
        return left

    def disjunction(self):
        args = [self.conjunction()]
        while self.accept("|"):
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def conjunction(self):
        args = [self.unary()]
        while self.accept("&"):
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self):
        if self.accept("!"):
            return Not(self.unary())
        if self.accept("("):
            inner = self.formula()
            self.expect(")")
            return inner
        tok = self.ident()
        if tok.text in ("true", "false"):
            return Const(tok.text == "true")
        if self.accept("("):
            if tok.text not in self.symbols:
                raise self.error(f"Símbolo desconocido {tok.text!r}", tok)
            args = [self.variable()]
            while self.accept(","):
                args.append(self.variable())
            self.expect(")")
            if len(args) != self.symbols[tok.text]:
                raise self.error(
                    f"Aridad incorrecta en {tok.text}: se esperaban {self.symbols[tok.text]} argumentos, hay {len(args)}",
                    tok,
                )
            return Atom(tok.text, tuple(args))
        if tok.text not in self.bound:
            raise self.error(f"Variable no cuantificada {tok.text!r}", tok)
        if self.accept("="):
            return Equal(tok.text, self.variable())
        if self.accept("!="):
            return Not(Equal(tok.text, self.variable()))
        raise self.error(f"Se esperaba '(' , '=' o '!=' tras {tok.text!r}")

    def eqrel(self, start: _Token) -> None:
        rid = self.ident().text
        if any(d.id == rid for d in self.eqrels):
            raise self.error(f"Relación de equivalencia repetida {rid}", start)
        fields: Dict[str, object] = {"sides": []}
        self.expect("{")
        while not self.accept("}"):
            key = self.ident()
            if key.text in ("domain", "relation"):
                tok = self.ident()
                if tok.text not in self.symbols:
                    raise self.error(f"Símbolo desconocido {tok.text!r}", tok)
                fields[key.text] = tok.text
            elif key.text == "length":
                fields["length"] = self.number()
            elif key.text == "star":
                tok = self.ident()
                if tok.text != "trivial" and not any(d.id == tok.text for d in self.eqrels):
                    raise self.error(f"La estrella {tok.text!r} no es una declaración anterior", tok)
                fields["star"] = None if tok.text == "trivial" else tok.text
            elif key.text == "count":
                if self.tok.text == "inf":
                    self.i += 1
                    fields["count"] = None
                else:
                    count = self.number()
                    if count < 1:
                        raise self.error("La cuenta debe ser positiva", key)
                    fields["count"] = count
            elif key.text == "side":
                tok = self.ident()
                if tok.text not in self.symbols:
                    raise self.error(f"Símbolo desconocido {tok.text!r}", tok)
                side = self.ident()
                if side.text not in ("class", "element"):
                    raise self.error(f"Lado desconocido {side.text!r}", side)
                fields["sides"].append((tok.text, side.text))
            else:
                raise self.error(f"Campo desconocido {key.text!r}", key)
            self.expect(";")
        if "relation" not in fields:
            raise self.error(f"Falta 'relation' en {rid}", start)
        length = fields.get("length", 1)
        relation = fields["relation"]
        if self.symbols[relation] != 2 * length:
            raise self.error(f"{relation} debe tener aridad {2 * length}", start)
        domain = fields.get("domain")
        if domain is not None and self.symbols[domain] != length:
            raise self.error(f"{domain} debe tener aridad {length}", start)
        count = fields.get("count")
        if count is None and length > 1:
            raise self.error(f"{rid}: cuenta infinita exige longitud 1", start)
        star = fields.get("star")
        if star is not None:
            star_decl = next(d for d in self.eqrels if d.id == star)
            if star_decl.length != length or star_decl.domain != domain:
                raise self.error(f"{rid}: la estrella debe compartir dominio y longitud", start)
        self.eqrels.append(EqRelDecl(
            id=rid, relation=relation, domain=domain, length=length,
            star=star, count=count, sides=tuple(fields["sides"]),
        ))


def parse_spec(text: str, name: str = "") -> ClassSpec:
    spec = _Parser(text, name).parse()
    logger.debug(f"📄 Clase {name or '(anónima)'}: {len(spec.sig)} símbolos, {len(spec.eqrels)} relaciones de equivalencia")
    return spec


def render_spec(K: ClassSpec) -> str:
    lines = ["signature {"]
    lines += [f"  {s.name}/{s.arity};" for s in K.sig.symbols]
    lines.append("}")
    lines += [c.render() for c in K.constraints]
    lines += [d.render() for d in K.eqrels]
    return "\n".join(lines) + "\n"


def load_spec(name_or_path: Union[str, Path]) -> ClassSpec:
    """Carga un fichero .kspec o una clase incluida por nombre (p. ej. 'equiv')."""
    path = Path(name_or_path)
    if not path.exists():
        stem = path.name[:-len(".kspec")] if path.name.endswith(".kspec") else path.name
        path = settings.kspec_path / f"{stem}.kspec"
    if not path.exists():
        raise SpecValidationError(f"No existe la especificación {name_or_path}")
    return parse_spec(path.read_text(encoding="utf-8"), name=path.stem)


# ---------------------------------------------------------------------------
# Pertenencia y enumeración
# ---------------------------------------------------------------------------

def satisfies(K: ClassSpec, S: Structure) -> bool:
    """Pertenencia sin cota de tamaño."""
    if S.sig != K.sig:
        raise SignatureError("La estructura no está sobre la firma de la clase")
    if not all(c.holds_in(S) for c in K.compiled):
        return False
    return K.oracle is None or bool(K.oracle(S))


def contains(K: ClassSpec, S: Structure, cap: Optional[int] = None) -> bool:
    cap = settings.MEMBERSHIP_CAP if cap is None else cap
    if len(S) > cap:
        raise CapExceeded(f"Universo de tamaño {len(S)} supera la cota de pertenencia {cap}")
    return satisfies(K, S)


def complete(
    K: ClassSpec,
    universe: Iterable[int],
    fixed: Mapping,
    free: Sequence,
) -> Iterator[Structure]:
    """Miembros de K sobre `universe` que extienden `fixed`, decidiendo solo los átomos `free`."""
    universe = tuple(sorted(set(universe)))
    checkpoints = {}
    if K.oracle is not None and K.oracle_hereditary:
        position = {a: i for i, a in enumerate(free)}
        for m in range(1, len(universe)):
            prefix = universe[:m]
            inside = [position[a] for a in free if all(x in prefix for x in a[1])]
            if inside and max(inside) + 1 == len(inside):
                checkpoints[len(inside)] = _prefix_check(K, prefix)
    engine = Completion(K.sig, universe, fixed, free, K.compiled, checkpoints)
    for S in engine.solutions():
        if K.oracle is None or K.oracle(S):
            yield S


def _prefix_check(K: ClassSpec, prefix: Tuple[int, ...]):
    def check(true_atoms) -> bool:
        members = set(prefix)
        facts = [a for a in true_atoms if all(x in members for x in a[1])]
        return bool(K.oracle(Structure.build(K.sig, prefix, facts)))
    return check


def enumerate_structures(K: ClassSpec, n: int, cap: Optional[int] = None) -> List[Structure]:
    """Todos los miembros de K con universo {1..n}, en orden lexicográfico."""
    cap = settings.ENUM_CAP if cap is None else cap
    if n > cap:
        raise CapExceeded(f"n={n} supera la cota de enumeración {cap}")
    universe = tuple(range(1, n + 1))
    members = list(complete(K, universe, {}, all_atoms(K.sig, universe)))
    logger.debug(f"🔍 {K.name}: {len(members)} miembros de tamaño {n}")
    return members


def enumerate_upto(K: ClassSpec, n: int, cap: Optional[int] = None) -> List[Structure]:
    return [S for m in range(n + 1) for S in enumerate_structures(K, m, cap)]


def enumerate_iso(K: ClassSpec, n: int, cap: Optional[int] = None) -> List[Structure]:
    """Un representante (el primero en orden) por clase de isomorfía."""
    seen = set()
    reps = []
    for S in enumerate_structures(K, n, cap):
        key = iso_canonical_form(S)
        if key not in seen:
            seen.add(key)
            reps.append(S)
    return reps


def one_point_extensions(K: ClassSpec, S: Structure, point: Optional[int] = None) -> Iterator[Structure]:
    point = (max(S.universe) + 1 if S.universe else 1) if point is None else point
    universe = S.universe + (point,)
    free = [a for a in all_atoms(K.sig, universe) if point in a[1]]
    fixed = {atom: True for atom in S.facts()}
    return complete(K, universe, fixed, free)


def check_hereditary(K: ClassSpec, n: int) -> CheckReport:
    logger.info(f"🔍 Comprobando herencia de {K.name or 'clase'} hasta n={n}")
    for m in range(1, n + 1):
        for S in enumerate_structures(K, m):
            for x in S.universe:
                sub = restrict(S, [y for y in S.universe if y != x])
                if not satisfies(K, sub):
                    logger.info(f"❌ Restricción fuera de la clase (tamaño {len(sub)})")
                    return CheckReport(
                        check="hereditary", class_name=K.name, bound=n, holds=False,
                        witness=[S.to_text(), sub.to_text()],
                        detail=f"eliminar {x} saca la estructura de la clase",
                    )
    logger.info(f"✅ Hereditaria hasta n={n}")
    return CheckReport(check="hereditary", class_name=K.name, bound=n, holds=True)


def _relabel_into(base: Structure, T1: Structure, f0: Injection, f1: Injection) -> Tuple[Dict[int, int], int]:
    """Mapa de T1 al universo del amalgama: imágenes de la base vía f0, el resto a ids nuevos."""
    mapping = {}
    start = max(base.universe, default=0) + 1
    for y in T1.universe:
        if y in f1.image:
            mapping[y] = f0(f1.inverse()(y))
        else:
            mapping[y] = start
            start += 1
    return mapping, start


def amalgamate_two(
    K: ClassSpec, S: Structure, T0: Structure, f0: Injection, T1: Structure, f1: Injection,
) -> Optional[Structure]:
    """Busca U ∈ K con T0 ⊆ U y una copia de T1 pegada a lo largo de S.

    Primero el amalgama disjunto; después identificaciones de puntos de T1
    fuera de la imagen con puntos de T0 fuera de la imagen, de menos a más.
    """
    mapping, _ = _relabel_into(T0, T1, f0, f1)
    rest1 = [y for y in T1.universe if y not in f1.image]
    rest0 = [x for x in T0.universe if x not in f0.image]
    for size in range(0, min(len(rest0), len(rest1)) + 1):
        for chosen in combinations(rest1, size):
            for targets in permutations(rest0, size):
                glued = dict(mapping)
                glued.update(zip(chosen, targets))
                found = _glue(K, T0, T1, glued)
                if found is not None:
                    return found
    return None


def _glue(K: ClassSpec, T0: Structure, T1: Structure, glued: Dict[int, int]) -> Optional[Structure]:
    universe = sorted(set(T0.universe) | set(glued.values()))
    fixed: Dict = {}
    for name, tup in T0.facts():
        fixed[(name, tup)] = True
    covered0 = set(T0.universe)
    image1 = set(glued.values())
    for sym in K.sig.symbols:
        for tup in product(T1.universe, repeat=sym.arity):
            atom = (sym.name, tuple(glued[x] for x in tup))
            value = T1.holds(sym.name, tup)
            if atom in fixed and fixed[atom] != value:
                return None
            if all(x in covered0 for x in atom[1]) and not fixed.get(atom, False) and value:
                return None
            fixed[atom] = value
    free = [
        a for a in all_atoms(K.sig, universe)
        if a not in fixed and not all(x in covered0 for x in a[1]) and not all(x in image1 for x in a[1])
    ]
    return next(complete(K, universe, fixed, free), None)


def check_amalgamation(K: ClassSpec, n: int) -> CheckReport:
    logger.info(f"🔍 Comprobando amalgamación de {K.name or 'clase'} hasta n={n}")
    reps = [S for m in range(n + 1) for S in enumerate_iso(K, m)]
    # Si |T_i| = |S| la inclusión es un isomorfismo y el amalgama es inmediato
    for S in reps:
        for i, T0 in enumerate(reps):
            if len(T0) <= len(S):
                continue
            for T1 in reps[i:]:
                if len(T1) <= len(S):
                    continue
                for f0 in iter_embeddings(S, T0):
                    for f1 in iter_embeddings(S, T1):
                        if amalgamate_two(K, S, T0, f0, T1, f1) is None:
                            logger.info("❌ Sin amalgama")
                            return CheckReport(
                                check="amalgamation", class_name=K.name, bound=n, holds=False,
                                witness=[S.to_text(), T0.to_text(), T1.to_text()],
                                detail=f"f0={dict(f0.pairs)} f1={dict(f1.pairs)}",
                            )
    logger.info(f"✅ Amalgamación hasta n={n}")
    return CheckReport(check="amalgamation", class_name=K.name, bound=n, holds=True)
