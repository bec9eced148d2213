"""
Clases de equivalencia, identidades de clase (handles), blurs y
falsificadores acotados de las condiciones sobre las relaciones declaradas.
"""
import logging
import struct
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from classdef import ClassSpec, EqRelDecl, complete, enumerate_upto
from config import settings
from errors import EquivalenceError
from models import CheckReport
from relstruct import Structure, iter_embeddings
from search import all_atoms

logger = logging.getLogger(__name__)

Tup = Tuple[int, ...]
EQ = "eq"


def classes(S: Structure, decl: EqRelDecl) -> List[List[Tup]]:
    """Cociente de V por la relación: bloques ordenados, y ordenados por su menor tupla."""
    domain = decl.domain_tuples(S)
    rel = S.rel(decl.relation)
    blocks: List[List[Tup]] = []
    seen = set()
    for x in domain:
        if x in seen:
            continue
        block = [y for y in domain if x + y in rel]
        if x not in block:
            raise EquivalenceError(f"{decl.relation} no es reflexiva en {x}")
        for y in block:
            if y + x not in rel:
                raise EquivalenceError(f"{decl.relation} no es simétrica en {x}, {y}")
            for z in block:
                if y + z not in rel:
                    raise EquivalenceError(f"{decl.relation} no es transitiva en {x}, {y}, {z}")
            if y in seen:
                raise EquivalenceError(f"{decl.relation} no es transitiva en {x}, {y}")
        seen.update(block)
        blocks.append(block)
    return blocks


def element_classes(S: Structure, decl: EqRelDecl) -> List[List[int]]:
    """Igual que `classes` para relaciones de longitud 1, con elementos en lugar de tuplas."""
    return [[t[0] for t in block] for block in classes(S, decl)]


def star_blocks(K: ClassSpec, S: Structure, decl: EqRelDecl) -> List[List[List[Tup]]]:
    """Bloques de `decl` agrupados por clase de su estrella."""
    blocks = classes(S, decl)
    if decl.star is None:
        return [blocks] if blocks else []
    star = K.eqrel(decl.star)
    groups: List[List[List[Tup]]] = []
    for star_block in classes(S, star):
        members = set(star_block)
        group = [b for b in blocks if b[0] in members]
        if group:
            groups.append(group)
    return groups


@dataclass(frozen=True, order=True)
class Handle:
    kind: str
    anchor: int

    def label(self) -> str:
        return f"[{self.anchor}]_{'=' if self.kind == EQ else self.kind}"


@dataclass(frozen=True)
class Blur:
    handles: Tuple[Handle, ...] = ()

    def __iter__(self):
        return iter(self.handles)

    def __len__(self) -> int:
        return len(self.handles)

    def label(self) -> str:
        return "{" + ", ".join(h.label() for h in self.handles) + "}"


def _kind_order(K: ClassSpec) -> Dict[str, int]:
    order = {EQ: 0}
    for i, decl in enumerate(K.infinite_eqrels(), 1):
        order[decl.id] = i
    return order


def sort_handles(K: ClassSpec, handles) -> Tuple[Handle, ...]:
    order = _kind_order(K)
    return tuple(sorted(set(handles), key=lambda h: (order[h.kind], h.anchor)))


def related(K: ClassSpec, S: Structure, kind: str, x: int, y: int) -> bool:
    if kind == EQ:
        return x == y
    return S.holds(K.eqrel(kind).relation, (x, y))


def in_domain(decl: EqRelDecl, S: Structure, y: int) -> bool:
    return decl.domain is None or S.holds(decl.domain, (y,))


def normalize(K: ClassSpec, S: Structure, h: Handle, within: Sequence[int]) -> Handle:
    """Ancla mínima de la clase del handle dentro de `within`."""
    if h.kind == EQ:
        return h
    anchor = min(z for z in within if related(K, S, h.kind, h.anchor, z))
    return Handle(h.kind, anchor)


def handle_set(S: Structure, s: Sequence[int], K: ClassSpec) -> Tuple[Handle, ...]:
    """E(s): un handle por clase de ≃, anclado en el menor elemento de s de la clase."""
    s = sorted(set(s))
    handles = []
    for y in s:
        handles.append(Handle(EQ, y))
        for decl in K.infinite_eqrels():
            if decl.length == 1 and in_domain(decl, S, y):
                handles.append(normalize(K, S, Handle(decl.id, y), s))
    return sort_handles(K, handles)


def handle_leq(h1: Handle, h2: Handle, S: Structure, K: ClassSpec) -> bool:
    if h1 == h2:
        return True
    if h1.kind == EQ:
        if h2.kind == EQ:
            return h1.anchor == h2.anchor
        return related(K, S, h2.kind, h1.anchor, h2.anchor)
    if h2.kind == EQ:
        return False
    if h1.kind == h2.kind:
        return related(K, S, h1.kind, h1.anchor, h2.anchor)
    return h2.kind in K.star_chain(h1.kind) and related(K, S, h2.kind, h1.anchor, h2.anchor)


def comparable(h1: Handle, h2: Handle, S: Structure, K: ClassSpec) -> bool:
    return handle_leq(h1, h2, S, K) or handle_leq(h2, h1, S, K)


def antichains(handles: Sequence[Handle], S: Structure, K: ClassSpec, include_empty: bool = True) -> List[Blur]:
    chains: List[Tuple[Handle, ...]] = []
    current: List[Handle] = []

    def grow(i: int) -> None:
        if i == len(handles):
            chains.append(tuple(current))
            return
        grow(i + 1)
        h = handles[i]
        if all(not comparable(h, g, S, K) for g in current):
            current.append(h)
            grow(i + 1)
            current.pop()

    grow(0)
    index = {h: i for i, h in enumerate(handles)}
    chains.sort(key=lambda c: (len(c), [index[h] for h in c]))
    return [Blur(c) for c in chains if c or include_empty]


def blur_set(S: Structure, s: Sequence[int], K: ClassSpec, include_empty: bool = True) -> List[Blur]:
    """B(s): todas las anticadenas de E(s), con ∅ primero salvo que se excluya."""
    return antichains(handle_set(S, s, K), S, K, include_empty)


def subset_blur(t: Sequence[int]) -> Blur:
    """La anticadena de handles de igualdad de t (indexación por subconjuntos)."""
    return Blur(tuple(Handle(EQ, y) for y in sorted(set(t))))


def least_anchor(h: Handle, S: Structure, K: ClassSpec) -> int:
    if h.kind == EQ:
        return h.anchor
    return min(z for z in S.universe if related(K, S, h.kind, h.anchor, z))


def canonical_key(b: Blur, S: Structure, K: ClassSpec) -> bytes:
    """Clave estable de un blur.

    Formato: número de handles (2 bytes, big endian) y, por cada handle en
    orden (tipo, ancla mínima en S): longitud del tipo (1 byte), el tipo en
    UTF-8 y el ancla (8 bytes, big endian).
    """
    entries = sorted((h.kind, least_anchor(h, S, K)) for h in b.handles)
    out = [struct.pack(">H", len(entries))]
    for kind, anchor in entries:
        raw = kind.encode("utf-8")
        out.append(struct.pack(">B", len(raw)) + raw + struct.pack(">Q", anchor))
    return b"".join(out)


# ---------------------------------------------------------------------------
# Falsificadores acotados
# ---------------------------------------------------------------------------

def _extensions(K: ClassSpec, S: Structure, extra: int, forced: Dict) -> Iterator[Structure]:
    """Miembros de K que extienden S con `extra` puntos nuevos y respetan `forced`."""
    start = max(S.universe, default=0) + 1
    new = tuple(range(start, start + extra))
    universe = S.universe + new
    fixed = {atom: True for atom in S.facts()}
    fixed.update(forced)
    free = [a for a in all_atoms(K.sig, universe) if any(x in new for x in a[1]) and a not in forced]
    return complete(K, universe, fixed, free)


def _new_point(S: Structure, extra: int) -> int:
    """El último punto añadido por `_extensions` con `extra` puntos."""
    return max(S.universe, default=0) + extra


def _can_add_class(K: ClassSpec, S: Structure, decl: EqRelDecl, group: List[List[Tup]], bound: int) -> bool:
    star = K.eqrel(decl.star) if decl.star is not None else None
    anchor = group[0][0][0]
    members = [t[0] for block in group for t in block]
    for extra in range(1, bound + 1):
        p = _new_point(S, extra)
        forced = {(decl.relation, (p, x)): False for x in members}
        forced.update({(decl.relation, (x, p)): False for x in members})
        if star is not None:
            forced[(star.relation, (p, anchor))] = True
        if decl.domain is not None:
            forced[(decl.domain, (p,))] = True
        if next(_extensions(K, S, extra, forced), None) is not None:
            return True
    return False


def _report(check: str, K: ClassSpec, n: int, witness: Optional[List[str]] = None, detail: str = None) -> CheckReport:
    holds = witness is None
    if holds:
        logger.info(f"✅ {check}: sin contraejemplo hasta n={n}")
    else:
        logger.info(f"❌ {check}: contraejemplo encontrado ({detail})")
    return CheckReport(check=check, class_name=K.name, bound=n, holds=holds, witness=witness or [], detail=detail)


def falsify_evenly(K: ClassSpec, rid: str, n: int, bound: Optional[int] = None) -> CheckReport:
    """Busca una clase estrella en la que no se pueda añadir otra clase de `rid` aunque la cuenta lo pida."""
    bound = settings.EXTENSION_BOUND if bound is None else bound
    decl = K.eqrel(rid)
    if decl.length != 1:
        logger.warning(f"⚠️ {rid}: solo se buscan extensiones para longitud 1")
        return _report("evenly", K, n)
    for S in enumerate_upto(K, n):
        for group in star_blocks(K, S, decl):
            if decl.count is not None and len(group) >= decl.count:
                continue
            if not _can_add_class(K, S, decl, group, bound):
                anchor = group[0][0][0]
                return _report(
                    "evenly", K, n, [S.to_text()],
                    f"la clase estrella de {anchor} no admite una clase nueva de {rid} con {bound} puntos extra",
                )
    return _report("evenly", K, n)


def _swap_ok(K: ClassSpec, S: Structure, decl: EqRelDecl, d1: List[int], d2: List[int], T: Structure, sigma) -> bool:
    rel = decl.relation
    for x in S.universe:
        y = sigma(x)
        if x in d1:
            target = d2[0]
        elif x in d2:
            target = d1[0]
        elif in_domain(decl, S, x):
            target = x
        else:
            continue
        if not T.holds(rel, (y, target)):
            return False
    return True


def falsify_freely(K: ClassSpec, rid: str, n: int, bound: Optional[int] = None) -> CheckReport:
    """Busca dos clases de `rid` dentro de una clase estrella que no se puedan intercambiar.

    El intercambio se realiza como un embedding σ de S en una extensión
    T ⊇ S (hasta `bound` puntos extra) que lleva una clase a la otra y deja
    las demás clases en su sitio.
    """
    bound = settings.EXTENSION_BOUND if bound is None else bound
    decl = K.eqrel(rid)
    if decl.length != 1:
        logger.warning(f"⚠️ {rid}: solo se comprueban relaciones de longitud 1")
        return _report("freely", K, n)
    for S in enumerate_upto(K, n):
        for group in star_blocks(K, S, decl):
            for b1, b2 in combinations(group, 2):
                d1, d2 = [t[0] for t in b1], [t[0] for t in b2]
                if not _swappable(K, S, decl, d1, d2, bound):
                    return _report(
                        "freely", K, n, [S.to_text()],
                        f"no se pueden intercambiar las clases de {d1[0]} y {d2[0]}",
                    )
    return _report("freely", K, n)


def _swappable(K: ClassSpec, S: Structure, decl: EqRelDecl, d1, d2, bound: int) -> bool:
    for extra in range(0, bound + 1):
        candidates = [S] if extra == 0 else _extensions(K, S, extra, {})
        for T in candidates:
            for sigma in iter_embeddings(S, T):
                if _swap_ok(K, S, decl, d1, d2, T, sigma):
                    return True
    return False


def falsify_orthogonal(K: ClassSpec, rid: str, qid: str, n: int, bound: Optional[int] = None) -> CheckReport:
    """Busca una clase de `rid` y otra de `qid` dentro de la misma clase estrella que no puedan cortarse."""
    bound = settings.EXTENSION_BOUND if bound is None else bound
    decl, other = K.eqrel(rid), K.eqrel(qid)
    if decl.length != 1 or other.length != 1:
        logger.warning("⚠️ Solo se comprueban relaciones de longitud 1")
        return _report("orthogonal", K, n)
    star = K.eqrel(decl.star) if decl.star is not None else None
    for S in enumerate_upto(K, n):
        for group in star_blocks(K, S, decl):
            inside = {t[0] for block in group for t in block}
            for block in group:
                for q_block in element_classes(S, other):
                    if not set(q_block) <= inside or set(q_block) & {t[0] for t in block}:
                        continue
                    if not _can_meet(K, S, decl, other, star, block[0][0], q_block[0], bound):
                        return _report(
                            "orthogonal", K, n, [S.to_text()],
                            f"las clases de {block[0][0]} ({rid}) y {q_block[0]} ({qid}) no se cortan",
                        )
    return _report("orthogonal", K, n)


def _can_meet(K, S, decl, other, star, a: int, b: int, bound: int) -> bool:
    for extra in range(1, bound + 1):
        p = _new_point(S, extra)
        forced = {
            (decl.relation, (p, a)): True,
            (other.relation, (p, b)): True,
        }
        for d in (decl, other):
            if d.domain is not None:
                forced[(d.domain, (p,))] = True
        if star is not None:
            forced[(star.relation, (p, a))] = True
        if next(_extensions(K, S, extra, forced), None) is not None:
            return True
    return False
