"""
Estructuras relacionales finitas: firmas, tipos sin cuantificadores,
restricciones, pullbacks por inyecciones, embeddings e isomorfismos.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations, product
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from errors import ElementNotInUniverse, InjectionError, SignatureError, StructureError

logger = logging.getLogger(__name__)

Element = int
Tup = Tuple[int, ...]
Fact = Tuple[str, Tup]


@dataclass(frozen=True, order=True)
class Symbol:
    name: str
    arity: int


@dataclass(frozen=True)
class Signature:
    symbols: Tuple[Symbol, ...]

    def __post_init__(self):
        names = [s.name for s in self.symbols]
        if len(set(names)) != len(names):
            raise SignatureError(f"Símbolos repetidos en la firma: {names}")
        for s in self.symbols:
            if s.arity < 1:
                raise SignatureError(f"Aridad inválida para {s.name}: {s.arity}")

    @classmethod
    def of(cls, *pairs: Tuple[str, int]) -> "Signature":
        return cls(tuple(Symbol(name, arity) for name, arity in pairs))

    @cached_property
    def _index(self) -> Dict[str, int]:
        return {s.name: i for i, s in enumerate(self.symbols)}

    @property
    def names(self) -> List[str]:
        return [s.name for s in self.symbols]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise SignatureError(f"Símbolo desconocido: {name}")

    def arity(self, name: str) -> int:
        return self.symbols[self.index(name)].arity

    def extend(self, extra: Iterable[Tuple[str, int]]) -> "Signature":
        return Signature(self.symbols + tuple(Symbol(n, a) for n, a in extra))

    def without(self, names: Iterable[str]) -> "Signature":
        drop = set(names)
        return Signature(tuple(s for s in self.symbols if s.name not in drop))

    def fresh_name(self, base: str) -> str:
        name = base
        while name in self:
            name += "_"
        return name


@dataclass(frozen=True)
class QfType:
    carrier: FrozenSet[int]
    facts: FrozenSet[Fact]


@dataclass(frozen=True)
class Structure:
    sig: Signature
    universe: Tuple[int, ...]
    relations: Tuple[FrozenSet[Tup], ...]

    @classmethod
    def build(cls, sig: Signature, universe: Iterable[int], facts=()) -> "Structure":
        """Construye y valida. `facts` admite un mapping símbolo -> tuplas o un iterable de (símbolo, tupla)."""
        elems = tuple(sorted(set(universe)))
        if any((not isinstance(e, int)) or e < 0 for e in elems):
            raise StructureError(f"Los elementos deben ser enteros no negativos: {elems}")
        buckets: List[set] = [set() for _ in sig.symbols]
        items = facts.items() if isinstance(facts, Mapping) else None
        if items is not None:
            pairs = ((name, tup) for name, tups in items for tup in tups)
        else:
            pairs = iter(facts)
        members = set(elems)
        for name, tup in pairs:
            tup = tuple(tup)
            i = sig.index(name)
            if len(tup) != sig.symbols[i].arity:
                raise StructureError(f"Aridad incorrecta en {name}{tup}")
            outside = [x for x in tup if x not in members]
            if outside:
                raise ElementNotInUniverse(outside)
            buckets[i].add(tup)
        return cls(sig, elems, tuple(frozenset(b) for b in buckets))

    @classmethod
    def empty(cls, sig: Signature) -> "Structure":
        return cls(sig, (), tuple(frozenset() for _ in sig.symbols))

    @cached_property
    def universe_set(self) -> FrozenSet[int]:
        return frozenset(self.universe)

    def __len__(self) -> int:
        return len(self.universe)

    def rel(self, name: str) -> FrozenSet[Tup]:
        return self.relations[self.sig.index(name)]

    def holds(self, name: str, tup: Tup) -> bool:
        return tuple(tup) in self.relations[self.sig.index(name)]

    def facts(self) -> Iterator[Fact]:
        for sym, tups in zip(self.sig.symbols, self.relations):
            for tup in sorted(tups):
                yield sym.name, tup

    def with_relations(self, updates: Mapping[str, Iterable[Tup]]) -> "Structure":
        rels = list(self.relations)
        for name, tups in updates.items():
            rels[self.sig.index(name)] = frozenset(tuple(t) for t in tups)
        return Structure.build(self.sig, self.universe, {s.name: r for s, r in zip(self.sig.symbols, rels)})

    def reduct(self, sig: Signature) -> "Structure":
        """Olvida los símbolos que no están en `sig`."""
        return Structure(sig, self.universe, tuple(self.rel(s.name) for s in sig.symbols))

    def expand(self, sig: Signature, extra: Mapping[str, Iterable[Tup]]) -> "Structure":
        facts = {s.name: (self.rel(s.name) if s.name in self.sig else extra.get(s.name, ())) for s in sig.symbols}
        return Structure.build(sig, self.universe, facts)

    def to_text(self) -> str:
        lines = ["universe:" + "".join(f" {e}" for e in self.universe)]
        for name, tup in self.facts():
            lines.append(" ".join([name] + [str(x) for x in tup]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, sig: Signature) -> "Structure":
        universe = None
        facts = []
        for number, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if universe is None:
                if not line.startswith("universe:"):
                    raise StructureError(f"Se esperaba la cabecera 'universe:' en la línea {number}")
                try:
                    universe = [int(tok) for tok in line[len("universe:"):].split()]
                except ValueError:
                    raise StructureError(f"Universo mal formado en la línea {number}")
                continue
            name, *args = line.split()
            try:
                facts.append((name, tuple(int(a) for a in args)))
            except ValueError:
                raise StructureError(f"Hecho mal formado en la línea {number}: {raw!r}")
        if universe is None:
            raise StructureError("Texto de estructura vacío")
        return cls.build(sig, universe, facts)


@dataclass(frozen=True)
class Injection:
    pairs: Tuple[Tuple[int, int], ...]
    _map: Dict[int, int] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        mapping = dict(self.pairs)
        if len(mapping) != len(self.pairs):
            raise InjectionError("Dominio repetido en la inyección")
        if len(set(mapping.values())) != len(mapping):
            raise InjectionError(f"La aplicación no es inyectiva: {mapping}")
        object.__setattr__(self, "pairs", tuple(sorted(mapping.items())))
        object.__setattr__(self, "_map", mapping)

    @classmethod
    def from_dict(cls, mapping: Mapping[int, int]) -> "Injection":
        return cls(tuple(mapping.items()))

    @classmethod
    def identity(cls, elements: Iterable[int]) -> "Injection":
        return cls(tuple((e, e) for e in elements))

    def __call__(self, x: int) -> int:
        return self._map[x]

    def apply(self, tup: Tup) -> Tup:
        return tuple(self._map[x] for x in tup)

    @property
    def domain(self) -> Tuple[int, ...]:
        return tuple(a for a, _ in self.pairs)

    @property
    def image(self) -> Tuple[int, ...]:
        return tuple(b for _, b in self.pairs)

    def as_dict(self) -> Dict[int, int]:
        return dict(self._map)

    def compose(self, inner: "Injection") -> "Injection":
        """self ∘ inner (primero inner)."""
        missing = set(inner.image) - set(self.domain)
        if missing:
            raise InjectionError(f"Composición imposible, faltan {sorted(missing)}")
        return Injection(tuple((a, self._map[b]) for a, b in inner.pairs))

    def inverse(self) -> "Injection":
        return Injection(tuple((b, a) for a, b in self.pairs))


def _check_subset(M: Structure, s: Iterable[int]) -> FrozenSet[int]:
    s = frozenset(s)
    outside = s - M.universe_set
    if outside:
        raise ElementNotInUniverse(outside)
    return s


def qf_type(M: Structure, s: Iterable[int]) -> QfType:
    s = _check_subset(M, s)
    facts = frozenset(
        (sym.name, tup)
        for sym, tups in zip(M.sig.symbols, M.relations)
        for tup in tups
        if all(x in s for x in tup)
    )
    return QfType(s, facts)


def restrict(M: Structure, s: Iterable[int]) -> Structure:
    s = _check_subset(M, s)
    if s == M.universe_set:
        return M
    rels = tuple(frozenset(t for t in tups if all(x in s for x in t)) for tups in M.relations)
    return Structure(M.sig, tuple(sorted(s)), rels)


def pullback(M: Structure, phi: Injection) -> Structure:
    outside = set(phi.image) - M.universe_set
    if outside:
        raise ElementNotInUniverse(outside)
    back = phi.inverse().as_dict()
    rels = []
    for tups in M.relations:
        rels.append(frozenset(
            tuple(back[x] for x in t) for t in tups if all(x in back for x in t)
        ))
    return Structure(M.sig, tuple(sorted(phi.domain)), tuple(rels))


def is_embedding(phi: Injection, S: Structure, M: Structure) -> bool:
    if set(phi.domain) != S.universe_set:
        raise InjectionError("El dominio de la inyección no coincide con el universo")
    if S.sig != M.sig:
        raise SignatureError("Firmas distintas")
    return pullback(M, phi) == S


def _level_tuples(sig: Signature, dom: Sequence[int]) -> List[List[Tuple[int, Tup]]]:
    """Para cada posición i, las tuplas (índice de símbolo, tupla de posiciones) cuyo máximo es i."""
    levels: List[List[Tuple[int, Tup]]] = [[] for _ in dom]
    for i in range(len(dom)):
        for k, sym in enumerate(sig.symbols):
            for positions in product(range(i + 1), repeat=sym.arity):
                if i in positions:
                    levels[i].append((k, positions))
    return levels


def iter_embeddings(S: Structure, M: Structure) -> Iterator[Injection]:
    if S.sig != M.sig:
        raise SignatureError("Firmas distintas")
    dom = S.universe
    if len(dom) > len(M.universe):
        return
    levels = _level_tuples(S.sig, dom)
    image: List[int] = []
    used = set()

    def backtrack(i: int) -> Iterator[Injection]:
        if i == len(dom):
            yield Injection(tuple(zip(dom, image)))
            return
        for y in M.universe:
            if y in used:
                continue
            image.append(y)
            ok = True
            for k, positions in levels[i]:
                src = tuple(dom[p] for p in positions)
                dst = tuple(image[p] for p in positions)
                if (src in S.relations[k]) != (dst in M.relations[k]):
                    ok = False
                    break
            if ok:
                used.add(y)
                yield from backtrack(i + 1)
                used.discard(y)
            image.pop()

    yield from backtrack(0)


def enumerate_embeddings(S: Structure, M: Structure) -> List[Injection]:
    return list(iter_embeddings(S, M))


def are_isomorphic(S: Structure, T: Structure) -> Optional[Injection]:
    if S.sig != T.sig or len(S) != len(T):
        return None
    return next(iter_embeddings(S, T), None)


def canonical_form(S: Structure) -> bytes:
    """Forma etiquetada: el texto canónico codificado en UTF-8."""
    return S.to_text().encode("utf-8")


def _relabeled_facts(S: Structure, order: Sequence[int]) -> Tuple:
    pos = {x: i for i, x in enumerate(order)}
    return tuple(tuple(sorted(tuple(pos[x] for x in t) for t in tups)) for tups in S.relations)


def iso_canonical_form(S: Structure) -> bytes:
    """Mínimo lexicográfico sobre todos los reetiquetados a 0..n-1."""
    best = None
    for order in permutations(S.universe):
        candidate = _relabeled_facts(S, order)
        if best is None or candidate < best:
            best = candidate
    n = len(S.universe)
    relabeled = Structure(
        S.sig,
        tuple(range(n)),
        tuple(frozenset(tups) for tups in (best if best is not None else tuple(() for _ in S.sig.symbols))),
    )
    return b"iso\n" + relabeled.to_text().encode("utf-8")


def relabel(S: Structure, mapping: Mapping[int, int]) -> Structure:
    """Copia de S con los elementos renombrados según `mapping` (biyección sobre el universo)."""
    return pullback(S, Injection.from_dict(mapping).inverse())
