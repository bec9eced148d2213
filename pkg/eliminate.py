"""
Eliminación de relaciones de equivalencia declaradas.

Con cuenta finita v la clase se expande con predicados de etiqueta
P_1..P_v que marcan la clase de cada tupla. Con cuenta infinita cada clase
pasa a ser un punto nuevo marcado con C y los símbolos se reparten entre el
lado de las clases, el lado de los elementos y el lado duplicado (aridad 2m).

En ambos casos las reglas sobre la clase transformada se levantan a reglas
sobre la clase original, y `eliminate_all` encadena las etapas de la última
relación declarada a la primera.
"""
import logging
import weakref
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import combinations, permutations, product
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from amalgam import PartitionLabeling, validate_labeling
from classdef import Atom as Lit
from classdef import (
    ClassSpec, Const, Constraint, EqRelDecl, Equal, Iff, Implies, Not,
    complete, conj, disj, enumerate_upto, eqrel_axioms, render_spec, satisfies,
)
from config import settings
from equiv import (
    EQ, Blur, Handle, blur_set, canonical_key, element_classes, handle_leq, normalize, sort_handles,
)
from errors import (
    EliminationError, LabelingError, MembershipIndeterminate, RuleError, SaturationError,
    SideTagIndeterminate, SignatureError, StructureError,
)
from models import CheckReport, EliminationManifest, StageInfo
from relstruct import Injection, Signature, Structure, is_embedding
from sampler import Draws, Query, TypeRule
from search import all_atoms

logger = logging.getLogger(__name__)

Tup = Tuple[int, ...]
SIDES = ("class", "element", "doubled")


def _vars(prefix: str, k: int) -> Tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(1, k + 1))


class _RowDraws(Draws):
    """Las filas `rows` de otra fuente de extracciones."""

    def __init__(self, draws: Draws, rows: np.ndarray):
        self.draws = draws
        self.rows = rows
        self.size = len(rows)

    def uniform(self, key: bytes) -> np.ndarray:
        return np.broadcast_to(self.draws.uniform(key), (self.draws.size,))[self.rows]

    def permutation(self, key: bytes, m: int) -> np.ndarray:
        perm = self.draws.permutation(key, m)
        return np.broadcast_to(perm, (self.draws.size, m))[self.rows]


# ---------------------------------------------------------------------------
# Cuenta finita: predicados de etiqueta
# ---------------------------------------------------------------------------

def label_symbol(decl: EqRelDecl, i: int) -> str:
    return f"{decl.relation}_{decl.id}_{i}"


@dataclass(frozen=True)
class FinExpansion:
    base: ClassSpec
    decl: EqRelDecl
    labels: Tuple[str, ...]

    kind = "finite"

    @cached_property
    def signature(self) -> Signature:
        return self.base.sig.extend((name, self.decl.length) for name in self.labels)

    @cached_property
    def target(self) -> ClassSpec:
        """La base sin la declaración de d, más los axiomas de d y los del etiquetado."""
        d = self.decl
        x, y = _vars("x", d.length), _vars("y", d.length)
        V = d.in_domain
        R = Lit(d.relation, x + y)
        star = [Lit(self.base.eqrel(d.star).relation, x + y)] if d.star is not None else []
        rules = [Constraint(x, Implies(V(x), disj(*(Lit(p, x) for p in self.labels))), f"{d.id}:etiquetada")]
        for p, q in combinations(self.labels, 2):
            rules.append(Constraint(x, Not(conj(Lit(p, x), Lit(q, x))), f"{d.id}:{p}/{q}"))
        for p in self.labels:
            if d.domain is not None:
                rules.append(Constraint(x, Implies(Lit(p, x), V(x)), f"{d.id}:{p} en el dominio"))
            rules.append(Constraint(x + y, Implies(conj(V(x), V(y), R, Lit(p, x)), Lit(p, y)), f"{d.id}:{p} constante"))
            rules.append(Constraint(
                x + y, Implies(conj(V(x), V(y), *star, Lit(p, x), Lit(p, y)), R), f"{d.id}:{p} inyectiva",
            ))
        constraints = self.base.constraints + tuple(eqrel_axioms(d, self.base, counting=False)) + tuple(rules)
        oracle = None
        if self.base.oracle is not None:
            base = self.base
            oracle = lambda S: bool(base.oracle(S.reduct(base.sig)))
        return ClassSpec(
            self.signature,
            constraints,
            tuple(e for e in self.base.eqrels if e.id != d.id),
            name=f"{self.base.name}~{d.id}",
            oracle=oracle,
            oracle_hereditary=self.base.oracle_hereditary,
        )

    def lift(self, f: TypeRule) -> TypeRule:
        return lift_rule_fin(self, f)

    def info(self, spec_file: Optional[str] = None) -> StageInfo:
        return StageInfo(
            eqrel=self.decl.id, kind="finite", count=self.decl.count,
            class_name=self.target.name, added_symbols=list(self.labels), spec_file=spec_file,
        )


def fin_expansion(K: ClassSpec, rid: str) -> FinExpansion:
    decl = K.eqrel(rid)
    if decl.infinite:
        raise EliminationError(f"{rid} tiene cuenta infinita")
    dependants = [e.id for e in K.eqrels if e.star == rid]
    if dependants:
        raise EliminationError(f"Hay que eliminar antes {dependants}, que tienen a {rid} como estrella")
    sig, labels = K.sig, []
    for i in range(1, decl.count + 1):
        name = sig.fresh_name(label_symbol(decl, i))
        labels.append(name)
        sig = sig.extend([(name, decl.length)])
    return FinExpansion(K, decl, tuple(labels))


def class_fin(K: ClassSpec, rid: str) -> ClassSpec:
    return fin_expansion(K, rid).target


def expand_fin(exp: FinExpansion, S: Structure, labeling: Mapping[Tup, int]) -> Structure:
    """S^η: añade P_i = {x : η(x) = i}."""
    d = exp.decl
    labeling = {tuple(t): int(lab) for t, lab in labeling.items()}
    if set(labeling) != set(d.domain_tuples(S)):
        raise LabelingError(f"{d.id}: el etiquetado no cubre exactamente el dominio")
    validate_labeling(exp.base, S, PartitionLabeling.of({d.id: labeling}))
    extra = {name: [t for t, lab in labeling.items() if lab == i] for i, name in enumerate(exp.labels, 1)}
    return S.expand(exp.signature, extra)


def reduct_fin(exp: FinExpansion, S: Structure) -> Structure:
    if S.sig != exp.signature:
        raise SignatureError("La estructura no está sobre la firma expandida")
    return S.reduct(exp.base.sig)


def labeling_of(exp: FinExpansion, S: Structure) -> Dict[Tup, int]:
    return {t: i for i, name in enumerate(exp.labels, 1) for t in S.rel(name)}


def _star_classes(S: Structure, arity: int, star: Optional[str], domain: Optional[str]) -> List[Tuple[Tup, ...]]:
    tuples = sorted(S.rel(domain)) if domain is not None else list(product(S.universe, repeat=arity))
    if star is None:
        return [tuple(tuples)] if tuples else []
    blocks, seen = [], set()
    for x in tuples:
        if x in seen:
            continue
        block = tuple(y for y in tuples if S.holds(star, x + y))
        seen.update(block)
        blocks.append(block)
    return blocks


def permute_classes(
    S: Structure,
    preds: Sequence[str],
    pi: Sequence[int],
    C: Iterable[Tup],
    star: Optional[str] = None,
    domain: Optional[str] = None,
) -> Structure:
    """S_{π|C}: dentro de la clase estrella C, P_{π(i)} pasa a valer lo que valía P_i."""
    preds, pi = tuple(preds), tuple(pi)
    if sorted(pi) != list(range(len(preds))):
        raise EliminationError(f"{pi} no es una permutación de {len(preds)} etiquetas")
    block = {tuple(t) for t in C}
    arity = S.sig.arity(preds[0]) if preds else 1
    if block not in [set(c) for c in _star_classes(S, arity, star, domain)]:
        raise EliminationError("C no es una clase estrella de la estructura")
    old = {p: S.rel(p) for p in preds}
    updates = {p: {t for t in old[p] if t not in block} for p in preds}
    for i, p in enumerate(preds):
        updates[preds[pi[i]]] |= {t for t in old[p] if t in block}
    return S.with_relations(updates)


def check_symmetric_within(
    K: ClassSpec,
    preds: Sequence[str],
    star: Optional[str],
    domain: Optional[str],
    n: int,
    earlier: Sequence[Tuple[Sequence[str], Optional[str], Optional[str]]] = (),
) -> CheckReport:
    """La pertenencia es cerrada por permutar las etiquetas dentro de cada clase estrella, hasta tamaño n."""
    groups = [(tuple(preds), star, domain)] + [(tuple(p), s, v) for p, s, v in earlier]
    logger.info(f"🔍 Simetría de {K.name} en {len(groups)} grupo(s) de etiquetas hasta n={n}")
    for S in enumerate_upto(K, n):
        for labels, star_rel, dom in groups:
            if len(labels) < 2:
                continue
            identity = tuple(range(len(labels)))
            for C in _star_classes(S, K.sig.arity(labels[0]), star_rel, dom):
                for pi in permutations(identity):
                    if pi == identity:
                        continue
                    T = permute_classes(S, labels, pi, C, star_rel, dom)
                    if not satisfies(K, T):
                        logger.info(f"❌ Permutar {labels} según {pi} saca la estructura de la clase")
                        return CheckReport(
                            check="symmetric-within", class_name=K.name, bound=n, holds=False,
                            witness=[S.to_text(), T.to_text()], detail=f"{list(labels)} permutadas por {list(pi)}",
                        )
    logger.info(f"✅ Simétrica hasta n={n}")
    return CheckReport(check="symmetric-within", class_name=K.name, bound=n, holds=True)


class _LabeledQuery(Query):
    """Vista de la regla interna: el tipo local lleva las etiquetas de d fijadas."""

    def __init__(self, S: Structure, K: ClassSpec, s: Sequence[int], draws: Draws, include_empty: bool, local: Structure):
        super().__init__(S, K, s, draws, include_empty)
        self._local = local

    @property
    def local(self) -> Structure:
        return self._local


def lift_rule_fin(exp: FinExpansion, f: TypeRule) -> TypeRule:
    """f′(S, ξ, ≺, η) = f(S^{η_d}, ξ, ≺, η sin d). Las claves de los blurs no cambian."""
    d = exp.decl

    def decide(name: str, tup: Tup, q: Query) -> np.ndarray:
        local = q.local
        tuples = d.domain_tuples(local)
        if not tuples:
            inner = _LabeledQuery(q.ambient, exp.target, q.s, q.draws, q.include_empty, expand_fin(exp, local, {}))
            return f.decide(name, tup, inner)
        labels = np.stack([np.broadcast_to(q.eta(d.id, t), (q.size,)) for t in tuples], axis=1)
        values, inverse = np.unique(labels, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        out = np.zeros(q.size, dtype=bool)
        for g, row in enumerate(values):
            rows = np.flatnonzero(inverse == g)
            expanded = expand_fin(exp, local, dict(zip(tuples, row.tolist())))
            inner = _LabeledQuery(q.ambient, exp.target, q.s, _RowDraws(q.draws, rows), q.include_empty, expanded)
            out[rows] = np.broadcast_to(np.asarray(f.decide(name, tup, inner), dtype=bool), (len(rows),))
        return out

    return TypeRule(
        name=f"{f.name}^{d.id}", target=f.target, decide=decide, cuts=f.cuts,
        description=f"{f.name} con las etiquetas de {d.id} leídas de η",
    )


# ---------------------------------------------------------------------------
# Cuenta infinita: etiquetas de lado
# ---------------------------------------------------------------------------

def _eqrel_of(K: ClassSpec, symbol: str) -> Optional[EqRelDecl]:
    return next((e for e in K.eqrels if e.relation == symbol), None)


def _constant_on_classes(K: ClassSpec, decl: EqRelDecl, symbol: str, bound: int) -> bool:
    """Comprobación acotada: el predicado unario es constante en las clases de `decl`."""
    evidence = False
    for S in enumerate_upto(K, bound):
        for block in element_classes(S, decl):
            if len(block) < 2:
                continue
            evidence = True
            if len({S.holds(symbol, (x,)) for x in block}) > 1:
                return False
    if not evidence:
        raise SideTagIndeterminate(
            f"{symbol}: ninguna clase de {decl.id} con dos elementos hasta tamaño {bound}; declare 'side {symbol} ...;'"
        )
    return True


def side_tag(K: ClassSpec, symbol: str, rid: str, bound: Optional[int] = None) -> str:
    """Lado de `symbol` al eliminar `rid`: class, element o doubled."""
    bound = settings.SIDE_TAG_BOUND if bound is None else bound
    d = K.eqrel(rid)
    if symbol == K.sig.fresh_name("C") or symbol == d.relation:
        return "class"
    if symbol == d.domain:
        return "element"
    declared = d.side_of(symbol)
    if declared is not None:
        if declared not in SIDES:
            raise EliminationError(f"Lado desconocido para {symbol}: {declared}")
        return declared
    e = _eqrel_of(K, symbol)
    if e is not None:
        if e.id in K.star_chain(rid):
            return "class"
        if rid in K.star_chain(e.id):
            raise EliminationError(f"{e.id} refina a {rid}: hay que eliminarla antes")
        return "element"
    if K.sig.arity(symbol) == 1:
        return "class" if _constant_on_classes(K, d, symbol, bound) else "element"
    return "doubled"


def side_tags(K: ClassSpec, rid: str, bound: Optional[int] = None) -> Dict[str, str]:
    return {name: side_tag(K, name, rid, bound) for name in K.sig.names}


# ---------------------------------------------------------------------------
# Cuenta infinita: estructuras con puntos de clase
# ---------------------------------------------------------------------------

class Parts(NamedTuple):
    C: Tuple[int, ...]
    V: Tuple[int, ...]
    E: Tuple[int, ...]


class Minus(NamedTuple):
    structure: Structure
    pairs: Dict[int, Tuple[int, int]]


@dataclass(frozen=True)
class InfExpansion:
    base: ClassSpec
    decl: EqRelDecl
    C: str
    sides: Tuple[Tuple[str, str], ...]
    eqrels: Tuple[EqRelDecl, ...]

    kind = "infinite"

    @cached_property
    def tags(self) -> Dict[str, str]:
        return dict(self.sides)

    @cached_property
    def signature(self) -> Signature:
        pairs = [(self.C, 1)]
        for s in self.base.sig.symbols:
            pairs.append((s.name, 2 * s.arity if self.tags[s.name] == "doubled" else s.arity))
        return Signature.of(*pairs)

    def _is_V(self, v: str):
        if self.decl.domain is not None:
            return Lit(self.decl.domain, (v,))
        return Not(Lit(self.C, (v,)))

    def _is_E(self, v: str):
        if self.decl.domain is None:
            return Const(False)
        return conj(Not(Lit(self.C, (v,))), Not(Lit(self.decl.domain, (v,))))

    @cached_property
    def meaningful(self) -> Tuple[Constraint, ...]:
        """Condiciones de buena formación sobre la firma duplicada."""
        isC = lambda v: Lit(self.C, (v,))
        out = []
        for sym in self.base.sig.symbols:
            tag = self.tags[sym.name]
            if sym.name == self.decl.relation:
                body = Iff(Lit(sym.name, ("x", "y")), conj(isC("x"), Equal("x", "y")))
                out.append(Constraint(("x", "y"), body, f"{sym.name}: diagonal en {self.C}"))
            elif tag == "class":
                xs = _vars("x", sym.arity)
                body = Implies(Lit(sym.name, xs), conj(*(Not(self._is_V(v)) for v in xs)))
                out.append(Constraint(xs, body, f"{sym.name}: lado de las clases"))
            elif tag == "element":
                xs = _vars("x", sym.arity)
                body = Implies(Lit(sym.name, xs), conj(*(Not(isC(v)) for v in xs)))
                out.append(Constraint(xs, body, f"{sym.name}: lado de los elementos"))
            else:
                xs, ys = _vars("x", sym.arity), _vars("y", sym.arity)
                args = tuple(a for pair in zip(xs, ys) for a in pair)
                ok = conj(*(
                    disj(conj(self._is_V(a), isC(b)), conj(self._is_E(a), Equal(a, b)))
                    for a, b in zip(xs, ys)
                ))
                out.append(Constraint(args, Implies(Lit(sym.name, args), ok), f"{sym.name}: pares de U"))
        return tuple(out)

    @cached_property
    def frame(self) -> ClassSpec:
        """Solo las condiciones sintácticas; sirve para buscar extensiones."""
        return ClassSpec(self.signature, self.meaningful, name=f"{self.base.name}~{self.decl.id}:marco")

    @cached_property
    def target(self) -> ClassSpec:
        return ClassSpec(
            self.signature, self.meaningful, self.eqrels,
            name=f"{self.base.name}~{self.decl.id}", oracle=self.contains, oracle_hereditary=True,
        )

    def contains(self, S: Structure) -> bool:
        return class_inf_contains(self, S)

    def lift(self, f: TypeRule) -> TypeRule:
        return lift_rule_inf(self, f)

    def info(self, spec_file: Optional[str] = None) -> StageInfo:
        return StageInfo(
            eqrel=self.decl.id, kind="infinite", class_name=self.target.name,
            added_symbols=[self.C], side_tags=dict(self.tags, **{self.C: "class"}), spec_file=spec_file,
        )


def _carry(K: ClassSpec, d: EqRelDecl, e: EqRelDecl, C: str, tags: Mapping[str, str]) -> EqRelDecl:
    """La declaración de `e` en la clase sin `d`, con el dominio trasladado a su lado."""
    if tags[e.relation] == "class":
        if e.domain is None:
            if d.domain is not None:
                raise EliminationError(f"{e.id} relaciona puntos fuera del dominio de {d.id}: sin dominio expresable")
            domain = C
        elif tags[e.domain] == "class":
            domain = e.domain
        else:
            raise EliminationError(f"El dominio {e.domain} de {e.id} no está del lado de las clases")
        return EqRelDecl(e.id, e.relation, domain, e.length, e.star, e.count, e.sides)
    if e.domain is None or tags.get(e.domain) != "element":
        raise EliminationError(f"{e.id} necesita un dominio del lado de los elementos para sobrevivir a {d.id}")
    if e.star is not None and tags[K.eqrel(e.star).relation] != "element":
        raise EliminationError(f"La estrella de {e.id} queda del lado de las clases")
    return e


def inf_expansion(K: ClassSpec, rid: str, bound: Optional[int] = None) -> InfExpansion:
    d = K.eqrel(rid)
    if not d.infinite:
        raise EliminationError(f"{rid} tiene cuenta finita")
    if d.length != 1:
        raise EliminationError(f"{rid}: solo se eliminan relaciones infinitas de longitud 1")
    C = K.sig.fresh_name("C")
    tags = side_tags(K, rid, bound)
    carried = tuple(_carry(K, d, e, C, tags) for e in K.eqrels if e.id != rid)
    logger.info(f"📦 Eliminando {rid} de {K.name}: {C} nuevo, lados {tags}")
    return InfExpansion(K, d, C, tuple(sorted(tags.items())), carried)


def class_inf(K: ClassSpec, rid: str) -> ClassSpec:
    return inf_expansion(K, rid).target


def parts(exp: InfExpansion, S: Structure) -> Parts:
    C = {t[0] for t in S.rel(exp.C)}
    if exp.decl.domain is not None:
        V = {t[0] for t in S.rel(exp.decl.domain)} - C
    else:
        V = set(S.universe) - C
    E = set(S.universe) - C - V
    return Parts(tuple(sorted(C)), tuple(sorted(V)), tuple(sorted(E)))


def is_meaningful(exp: InfExpansion, S: Structure) -> bool:
    if S.sig != exp.signature:
        raise SignatureError("La estructura no está sobre la firma duplicada")
    return all(c.holds_in(S) for c in exp.meaningful)


def is_large_enough(exp: InfExpansion, S: Structure) -> bool:
    p = parts(exp, S)
    return len(p.C) >= 1 and len(p.V) >= 1


def minus(exp: InfExpansion, S: Structure) -> Minus:
    """S⁻ sobre (V×C) ∪ E; los pares compuestos reciben ids nuevos a partir de max+1."""
    if not is_meaningful(exp, S):
        raise EliminationError("La estructura no es significativa")
    p = parts(exp, S)
    pairs: Dict[int, Tuple[int, int]] = {}
    next_id = max(S.universe, default=0) + 1
    for v in p.V:
        for c in p.C:
            pairs[next_id] = (v, c)
            next_id += 1
    for e in p.E:
        pairs[e] = (e, e)
    index = {pair: i for i, pair in pairs.items()}
    by_class: Dict[int, List[int]] = {c: [] for c in p.C}
    by_elem: Dict[int, List[int]] = {v: [] for v in p.V}
    for i, (v, c) in pairs.items():
        if v != c:
            by_class[c].append(i)
            by_elem[v].append(i)
    pre_C = lambda z: by_class.get(z, [z])
    pre_V = lambda z: by_elem.get(z, [z])

    facts: Dict[str, set] = {}
    for sym in exp.base.sig.symbols:
        tag = exp.tags[sym.name]
        out = set()
        for tup in S.rel(sym.name):
            if tag == "class":
                out.update(product(*(pre_C(z) for z in tup)))
            elif tag == "element":
                out.update(product(*(pre_V(z) for z in tup)))
            else:
                out.add(tuple(index[(tup[2 * i], tup[2 * i + 1])] for i in range(len(tup) // 2)))
        facts[sym.name] = out
    return Minus(Structure.build(exp.base.sig, pairs, facts), pairs)


def class_inf_contains(exp: InfExpansion, S: Structure, bound: Optional[int] = None) -> bool:
    """S ∈ K_{~d}: significativa y con una extensión suficientemente grande cuya S⁻ está en K.

    Basta añadir un punto de clase y un punto de V cuando faltan: cualquier
    extensión válida se restringe a una de ese tamaño.
    """
    bound = settings.EXTENSION_BOUND if bound is None else bound
    if not is_meaningful(exp, S):
        return False
    p = parts(exp, S)
    missing = [kind for kind, items in (("C", p.C), ("V", p.V)) if not items]
    if not missing:
        return satisfies(exp.base, minus(exp, S).structure)
    if len(missing) > bound:
        raise MembershipIndeterminate(f"Hacen falta {len(missing)} puntos nuevos y la cota es {bound}")
    start = max(S.universe, default=0) + 1
    new = {start + i: kind for i, kind in enumerate(missing)}
    universe = S.universe + tuple(new)
    fixed = {atom: True for atom in S.facts()}
    for point, kind in new.items():
        fixed[(exp.C, (point,))] = kind == "C"
        if exp.decl.domain is not None:
            fixed[(exp.decl.domain, (point,))] = kind == "V"
    free = [a for a in all_atoms(exp.signature, universe) if any(x in new for x in a[1]) and a not in fixed]
    for T in complete(exp.frame, universe, fixed, free):
        if satisfies(exp.base, minus(exp, T).structure):
            logger.debug(f"🔍 Extensión con {missing} válida para {exp.target.name}")
            return True
    return False


@dataclass
class ClassEmbedding:
    """S_{~d} junto con la correspondencia elemento → punto de clase."""
    base: Structure
    S: Structure
    class_of: Dict[int, int]
    members: Dict[int, Tuple[int, ...]]
    pi: Optional[Injection] = None
    minus: Optional[Minus] = None


def embed_with_classes(exp: InfExpansion, S: Structure, verify: bool = True) -> ClassEmbedding:
    """Construye S_{~d} añadiendo un punto por clase de d; con `verify` comprueba que S se sumerge en S_{~d}⁻."""
    d = exp.decl
    if not satisfies(exp.base, S):
        raise StructureError(f"La estructura no pertenece a {exp.base.name}")
    start = max(S.universe, default=0) + 1
    members = {start + i: tuple(block) for i, block in enumerate(element_classes(S, d))}
    class_of = {v: c for c, block in members.items() for v in block}
    pre = lambda z: members.get(z, (z,))
    img = lambda z: class_of.get(z, z)

    facts: Dict[str, List[Tup]] = {exp.C: [(c,) for c in members]}
    for sym in exp.base.sig.symbols:
        tag = exp.tags[sym.name]
        rel = S.rel(sym.name)
        if sym.name == d.relation:
            facts[sym.name] = [(c, c) for c in members]
        elif tag == "class":
            candidates = {tuple(img(z) for z in t) for t in rel}
            facts[sym.name] = [t for t in candidates if all(u in rel for u in product(*(pre(z) for z in t)))]
        elif tag == "element":
            facts[sym.name] = list(rel)
        else:
            facts[sym.name] = [tuple(w for z in t for w in (z, img(z))) for t in rel]
    doubled = Structure.build(exp.signature, S.universe + tuple(members), facts)
    emb = ClassEmbedding(S, doubled, class_of, members)
    if not members:
        logger.warning(f"⚠️ Sin clases de {d.id}: S_~{d.id} no es suficientemente grande")
    if verify:
        decoded = minus(exp, doubled)
        index = {pair: i for i, pair in decoded.pairs.items()}
        pi = Injection.from_dict({x: index[(x, img(x))] for x in S.universe})
        if not is_embedding(pi, S, decoded.structure):
            raise SaturationError(f"S no se sumerge en S_~{d.id}⁻: algún símbolo del lado de las clases no es constante")
        emb.pi, emb.minus = pi, decoded
    return emb


# ---------------------------------------------------------------------------
# Cuenta infinita: salidas duplicadas
# ---------------------------------------------------------------------------

def doubled_signature(sig: Signature) -> Signature:
    return Signature.of(*((s.name, 2 * s.arity) for s in sig.symbols))


def halved_signature(sig: Signature) -> Signature:
    if any(s.arity % 2 for s in sig.symbols):
        raise RuleError("La firma de salida no está duplicada")
    return Signature.of(*((s.name, s.arity // 2) for s in sig.symbols))


def dbl_structure(T: Structure, pairs: Mapping[int, Tuple[int, int]], carrier: Iterable[int]) -> Structure:
    """T^dbl: cada elemento de T se escribe como su par (x, y) del soporte."""
    if set(T.universe) != set(pairs):
        raise EliminationError("El universo de T no coincide con los pares")
    facts = [
        (name, tuple(w for z in tup for w in pairs[z]))
        for name, tup in T.facts()
    ]
    return Structure.build(doubled_signature(T.sig), carrier, facts)


def minus_dbl(T: Structure, pairs: Mapping[int, Tuple[int, int]], sig: Signature) -> Structure:
    index = {tuple(pair): i for i, pair in pairs.items()}
    facts = []
    for name, tup in T.facts():
        chunks = [tuple(tup[i:i + 2]) for i in range(0, len(tup), 2)]
        if any(c not in index for c in chunks):
            raise EliminationError(f"{name}{tup} usa un par fuera de U")
        facts.append((name, tuple(index[c] for c in chunks)))
    return Structure.build(sig, pairs, facts)


# ---------------------------------------------------------------------------
# Cuenta infinita: blurs y levantamiento
# ---------------------------------------------------------------------------

def doubled_range(emb: ClassEmbedding, s: Iterable[int]) -> Tup:
    s = set(s)
    return tuple(sorted(s | {emb.class_of[y] for y in s if y in emb.class_of}))


def to_class_handle(exp: InfExpansion, emb: ClassEmbedding, h: Handle, s: Sequence[int]) -> Handle:
    """Handle de S como handle de S_{~d}."""
    if h.kind == EQ:
        return h
    if h.kind == exp.decl.id:
        moved = Handle(EQ, emb.class_of[h.anchor])
    elif exp.tags[exp.base.eqrel(h.kind).relation] == "class":
        moved = Handle(h.kind, emb.class_of.get(h.anchor, h.anchor))
    else:
        moved = h
    return normalize(exp.target, emb.S, moved, doubled_range(emb, s))


def from_class_handle(exp: InfExpansion, emb: ClassEmbedding, h: Handle, s: Sequence[int]) -> Handle:
    """Handle de S_{~d} como handle de S; un punto de clase se ancla en el menor elemento de s de su clase."""
    back = lambda z: min(y for y in s if emb.class_of.get(y) == z) if z in emb.members else z
    if h.kind == EQ:
        moved = Handle(exp.decl.id, back(h.anchor)) if h.anchor in emb.members else h
    else:
        moved = Handle(h.kind, back(h.anchor))
    return normalize(exp.base, emb.base, moved, s)


def hat_blur(exp: InfExpansion, emb: ClassEmbedding, blur: Blur, s: Sequence[int]) -> Blur:
    """Se queda con los handles traducidos que no tienen otro estrictamente más fino."""
    mapped = {from_class_handle(exp, emb, h, s) for h in blur}
    kept = [h for h in mapped if not any(g != h and handle_leq(g, h, emb.base, exp.base) for g in mapped)]
    return Blur(sort_handles(exp.base, kept))


def fiber(exp: InfExpansion, emb: ClassEmbedding, blur: Blur, s: Sequence[int]) -> List[Blur]:
    """Blurs de s_{~d} cuyo hat es `blur`, ordenados por clave canónica."""
    found = [
        b for b in blur_set(emb.S, doubled_range(emb, s), exp.target)
        if hat_blur(exp, emb, b, s) == blur
    ]
    return sorted(found, key=lambda b: canonical_key(b, emb.S, exp.target))


def splitter(xi: np.ndarray, m: int) -> List[np.ndarray]:
    """Reparte los 53 bits de la variable entre m flujos (bit j va al flujo j mod m).

    Cada flujo se reempaqueta como el punto medio de su celda diádica; con
    m = 1 la variable se devuelve tal cual.
    """
    if m < 1:
        raise EliminationError(f"Número de flujos inválido: {m}")
    xi = np.asarray(xi, dtype=np.float64)
    if m == 1:
        return [xi]
    word = (xi * 2.0**53).astype(np.uint64)
    streams = []
    for j in range(m):
        acc = np.zeros_like(word)
        bits = 0
        for k in range(j, 53, m):
            acc = (acc << np.uint64(1)) | ((word >> np.uint64(52 - k)) & np.uint64(1))
            bits += 1
        streams.append((acc.astype(np.float64) + 0.5) * 2.0**-bits)
    return streams


class LiftedQuery(Query):
    """Consulta sobre S_{~d} cuya aleatoriedad sale de la consulta sobre S."""

    def __init__(self, outer: Query, exp: InfExpansion, emb: ClassEmbedding):
        super().__init__(emb.S, exp.target, doubled_range(emb, outer.s), outer.draws, outer.include_empty)
        self.outer = outer
        self.exp = exp
        self.emb = emb
        self._sources: Dict[Blur, Tuple[Blur, int, int]] = {}

    def source(self, b: Blur) -> Tuple[Blur, int, int]:
        """(τ, posición en la fibra, tamaño de la fibra)."""
        if b not in self._sources:
            tau = hat_blur(self.exp, self.emb, b, self.outer.s)
            fib = fiber(self.exp, self.emb, tau, self.outer.s)
            self._sources[b] = (tau, fib.index(b), len(fib))
        return self._sources[b]

    def xi(self, b: Blur) -> np.ndarray:
        tau, i, m = self.source(b)
        return splitter(self.outer.xi(tau), m)[i]

    def order(self, b: Blur) -> np.ndarray:
        tau, i, _ = self.source(b)
        key = b"ord|" + self.outer.key(tau) + b"|" + str(i).encode()
        perm = self.draws.permutation(key, len(b))
        return np.argsort(perm, axis=1, kind="stable")

    def eta(self, rid: str, t: Sequence[int]) -> np.ndarray:
        back = [
            min(y for y in self.outer.s if self.emb.class_of.get(y) == z) if z in self.emb.members else z
            for z in t
        ]
        return self.outer.eta(rid, back)


def lift_rule_inf(exp: InfExpansion, f: TypeRule) -> TypeRule:
    """Evalúa f sobre S_{~d} en el átomo duplicado: y ↦ (y, [y]) o (y, y)."""
    target = halved_signature(f.target)

    @lru_cache(maxsize=8)
    def embedding(S: Structure) -> ClassEmbedding:
        return embed_with_classes(exp, S, verify=False)

    inner_queries: "weakref.WeakKeyDictionary[Query, LiftedQuery]" = weakref.WeakKeyDictionary()

    def decide(name: str, tup: Tup, q: Query) -> np.ndarray:
        if q not in inner_queries:
            inner_queries[q] = LiftedQuery(q, exp, embedding(q.ambient))
        inner = inner_queries[q]
        doubled = tuple(w for y in tup for w in (y, inner.emb.class_of.get(y, y)))
        return f.decide(name, doubled, inner)

    return TypeRule(
        name=f"{f.name}^{exp.decl.id}", target=target, decide=decide, cuts=f.cuts,
        description=f"{f.name} evaluada sobre los puntos de clase de {exp.decl.id}",
    )


# ---------------------------------------------------------------------------
# Tubería completa
# ---------------------------------------------------------------------------

Expansion = Union[FinExpansion, InfExpansion]
_KIND_ES = {"finite": "finita", "infinite": "infinita"}


def eliminate(K: ClassSpec, rid: str, bound: Optional[int] = None) -> Expansion:
    decl = K.eqrel(rid)
    return inf_expansion(K, rid, bound) if decl.infinite else fin_expansion(K, rid)


@dataclass(frozen=True)
class Pipeline:
    base: ClassSpec
    stages: Tuple[Expansion, ...] = ()

    @property
    def terminal(self) -> ClassSpec:
        return self.stages[-1].target if self.stages else self.base

    def lift(self, f: TypeRule) -> TypeRule:
        """Regla sobre la clase terminal → regla sobre la base."""
        for exp in reversed(self.stages):
            f = exp.lift(f)
        return f

    def check_symmetric_within(self, n: int) -> List[CheckReport]:
        reports, earlier = [], []
        for exp in self.stages:
            if not isinstance(exp, FinExpansion):
                continue
            star = exp.base.eqrel(exp.decl.star).relation if exp.decl.star is not None else None
            group = (exp.labels, star, exp.decl.domain)
            present = [g for g in earlier if all(p in exp.target.sig for p in g[0])]
            reports.append(check_symmetric_within(exp.target, *group, n, earlier=present))
            earlier.append(group)
        return reports

    def manifest(self, spec_files: Optional[Sequence[str]] = None) -> EliminationManifest:
        files = list(spec_files) if spec_files is not None else [None] * len(self.stages)
        return EliminationManifest(
            class_name=self.base.name,
            stages=[exp.info(name) for exp, name in zip(self.stages, files)],
            terminal_class=self.terminal.name,
        )


def eliminate_all(K: ClassSpec, bound: Optional[int] = None) -> Pipeline:
    """Elimina las relaciones de la última declarada a la primera."""
    stages: List[Expansion] = []
    current = K
    for rid in [e.id for e in reversed(K.eqrels)]:
        exp = eliminate(current, rid, bound)
        stages.append(exp)
        current = exp.target
    logger.info(f"✅ {K.name}: {len(stages)} etapa(s), clase terminal {current.name}")
    return Pipeline(K, tuple(stages))


def write_stage_specs(pipeline: Pipeline, out: Union[str, Path]) -> EliminationManifest:
    """Escribe una especificación por etapa y devuelve el manifiesto con sus nombres."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, exp in enumerate(pipeline.stages, 1):
        name = f"{i}_{exp.decl.id}.kspec"
        header = f"# {exp.target.name}: eliminación {_KIND_ES[exp.kind]} de {exp.decl.id} en {exp.base.name}\n"
        if isinstance(exp, InfExpansion) or exp.base.oracle is not None:
            header += f"# Pertenencia derivada: además de estas restricciones, la reducción debe estar en {exp.base.name}\n"
        (out / name).write_text(header + render_spec(exp.target), encoding="utf-8")
        names.append(name)
        logger.info(f"📄 {out / name}")
    return pipeline.manifest(names)
