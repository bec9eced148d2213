"""
Planes de amalgamación, búsqueda de amalgamas, n-DAP y n-DAP salvo una
sucesión declarada de relaciones de equivalencia (con etiquetados de
particiones coherentes).
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, permutations, product
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

from classdef import ClassSpec, EqRelDecl, complete, satisfies
from equiv import classes, star_blocks
from errors import LabelingError, PlanError
from models import DapVerdict, PlanReport
from relstruct import Structure, restrict
from search import all_atoms

logger = logging.getLogger(__name__)

Tup = Tuple[int, ...]
# rid -> tupla del dominio -> etiqueta
Labels = Dict[str, Dict[Tup, int]]


@dataclass(frozen=True)
class AmalgamationPlan:
    n: int
    parts: Tuple[Structure, ...]

    def report(self, labelings: Optional[Sequence["PartitionLabeling"]] = None) -> PlanReport:
        return PlanReport(
            parts=[p.to_text() for p in self.parts],
            labelings=[lab.as_json() for lab in labelings] if labelings is not None else None,
        )


@dataclass(frozen=True)
class PartitionLabeling:
    labels: Tuple[Tuple[str, Tuple[Tuple[Tup, int], ...]], ...]

    @classmethod
    def of(cls, labels: Mapping[str, Mapping[Tup, int]]) -> "PartitionLabeling":
        return cls(tuple(sorted((rid, tuple(sorted(m.items()))) for rid, m in labels.items())))

    def as_dict(self) -> Labels:
        return {rid: dict(items) for rid, items in self.labels}

    def as_json(self) -> Dict[str, Dict[str, int]]:
        return {rid: {",".join(map(str, t)): lab for t, lab in items} for rid, items in self.labels}

    def restrict(self, elements) -> "PartitionLabeling":
        elements = set(elements)
        return PartitionLabeling.of({
            rid: {t: lab for t, lab in m.items() if set(t) <= elements}
            for rid, m in self.as_dict().items()
        })


def _part_universe(n: int, i: int) -> Tuple[int, ...]:
    return tuple(x for x in range(1, n + 1) if x != i)


def is_plan(parts: Sequence[Structure]) -> bool:
    n = len(parts)
    for i, part in enumerate(parts, 1):
        if part.universe != _part_universe(n, i):
            raise PlanError(f"La parte {i} no tiene universo [n]\\{{{i}}}: {list(part.universe)}")
    for i, j in combinations(range(1, n + 1), 2):
        shared = [x for x in range(1, n + 1) if x not in (i, j)]
        if restrict(parts[i - 1], shared) != restrict(parts[j - 1], shared):
            return False
    return True


def make_plan(parts: Sequence[Structure]) -> AmalgamationPlan:
    if not is_plan(parts):
        raise PlanError("Las partes no son consistentes dos a dos")
    return AmalgamationPlan(len(parts), tuple(parts))


def enumerate_plans(K: ClassSpec, n: int) -> Iterator[AmalgamationPlan]:
    """Planes de tamaño n sobre K, en orden lexicográfico del índice de cada parte."""
    if n < 1:
        return
    candidates = []
    for i in range(1, n + 1):
        universe = _part_universe(n, i)
        candidates.append(list(complete(K, universe, {}, all_atoms(K.sig, universe))))
    chosen: List[Structure] = []

    def backtrack(i: int) -> Iterator[AmalgamationPlan]:
        if i == n:
            yield AmalgamationPlan(n, tuple(chosen))
            return
        for part in candidates[i]:
            ok = True
            for j, previous in enumerate(chosen):
                shared = [x for x in range(1, n + 1) if x not in (i + 1, j + 1)]
                if restrict(part, shared) != restrict(previous, shared):
                    ok = False
                    break
            if ok:
                chosen.append(part)
                yield from backtrack(i + 1)
                chosen.pop()

    yield from backtrack(0)


def _fixed_from(parts: Sequence[Structure]) -> Dict:
    fixed = {}
    for part in parts:
        for atom in part.facts():
            fixed[atom] = True
    return fixed


def _search(
    K: ClassSpec,
    universe: Tuple[int, ...],
    parts: Sequence[Structure],
    labels: Optional[Labels] = None,
) -> Optional[Structure]:
    """Amalgama sobre `universe`: solo se deciden los átomos cuyo rango es todo el universo."""
    full = set(universe)
    free = [a for a in all_atoms(K.sig, universe) if set(a[1]) == full]
    fixed = _fixed_from(parts)
    if labels:
        forced = _forced_atoms(K, universe, labels, set(free))
        fixed.update(forced)
        free = [a for a in free if a not in forced]
    for S in complete(K, universe, fixed, free):
        if not labels or admits_labeling(K, S, labels):
            return S
    return None


def find_amalgam(plan: AmalgamationPlan, K: ClassSpec, labels: Optional[Labels] = None) -> Optional[Structure]:
    """La amalgama lexicográficamente menor del plan en K, o None."""
    for i, part in enumerate(plan.parts, 1):
        if not satisfies(K, part):
            raise PlanError(f"La parte {i} no pertenece a la clase")
    return _search(K, tuple(range(1, plan.n + 1)), plan.parts, labels)


def check_ndap(K: ClassSpec, n: int) -> DapVerdict:
    logger.info(f"🔍 Comprobando {n}-DAP en {K.name or 'clase'}")
    checked = 0
    for plan in enumerate_plans(K, n):
        checked += 1
        if find_amalgam(plan, K) is None:
            logger.info(f"❌ Plan sin amalgama tras {checked} planes")
            return DapVerdict(class_name=K.name, n=n, holds=False, plans_checked=checked,
                              counterexample=plan.report())
    logger.info(f"✅ {n}-DAP se cumple ({checked} planes)")
    return DapVerdict(class_name=K.name, n=n, holds=True, plans_checked=checked)


# ---------------------------------------------------------------------------
# Etiquetados de particiones
# ---------------------------------------------------------------------------

def _same_class(S: Structure, decl: EqRelDecl, x: Tup, y: Tup) -> bool:
    return S.holds(decl.relation, x + y)


def _same_star(K: ClassSpec, S: Structure, decl: EqRelDecl, x: Tup, y: Tup) -> bool:
    if decl.star is None:
        return True
    return S.holds(K.eqrel(decl.star).relation, x + y)


def _global_tags(decl: EqRelDecl) -> bool:
    """Con cuenta infinita o estrella trivial, etiqueta igual equivale a misma clase."""
    return decl.infinite or decl.star is None


def validate_labeling(K: ClassSpec, S: Structure, labeling: PartitionLabeling) -> None:
    labels = labeling.as_dict()
    for decl in K.eqrels:
        mapping = labels.get(decl.id, {})
        domain = decl.domain_tuples(S)
        for t in mapping:
            if t not in domain:
                raise LabelingError(f"{decl.id}: la tupla {t} no está en el dominio")
        for t, lab in mapping.items():
            if decl.count is not None and not 1 <= lab <= decl.count:
                raise LabelingError(f"{decl.id}: etiqueta {lab} fuera de [1, {decl.count}]")
        for x, y in combinations(sorted(mapping), 2):
            same = _same_class(S, decl, x, y)
            if same and mapping[x] != mapping[y]:
                raise LabelingError(f"{decl.id}: etiquetas distintas en una misma clase")
            if not same and mapping[x] == mapping[y] and (_global_tags(decl) or _same_star(K, S, decl, x, y)):
                raise LabelingError(f"{decl.id}: el etiquetado no es inyectivo")


def full_labelings(K: ClassSpec, S: Structure, decl: EqRelDecl) -> List[Dict[Tup, int]]:
    """Todos los etiquetados de las clases de `decl` en S (inyectivos dentro de cada clase estrella).

    Con cuenta infinita se etiqueta con 1, 2, ... por orden de menor ancla.
    """
    blocks = classes(S, decl)
    if decl.count is None:
        return [{t: i for i, block in enumerate(blocks, 1) for t in block}]
    groups = star_blocks(K, S, decl)
    choices = []
    for group in groups:
        choices.append(_injections(len(group), decl.count))
    result = []
    for combo in product(*choices):
        mapping = {}
        for group, labs in zip(groups, combo):
            for block, lab in zip(group, labs):
                for t in block:
                    mapping[t] = lab
        result.append(mapping)
    return result


def _injections(k: int, c: int) -> List[Tuple[int, ...]]:
    return list(permutations(range(1, c + 1), k))


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = self.parent[x]
        if root != x:
            root = self.parent[x] = self.find(root)
        return root

    def union(self, x, y):
        x, y = self.find(x), self.find(y)
        if x != y:
            if y < x:
                x, y = y, x
            self.parent[y] = x


def _labelings_for(K: ClassSpec, decl: EqRelDecl, parts: Sequence[Structure]) -> List[Dict[Tup, int]]:
    tuples = sorted({t for part in parts for t in decl.domain_tuples(part)})
    uf = _UnionFind(tuples)
    apart = []
    for part in parts:
        dom = decl.domain_tuples(part)
        for x, y in combinations(dom, 2):
            if _same_class(part, decl, x, y):
                uf.union(x, y)
            elif _global_tags(decl) or _same_star(K, part, decl, x, y):
                apart.append((x, y))
    roots = sorted({uf.find(t) for t in tuples})
    index = {r: i for i, r in enumerate(roots)}
    separated = set()
    for x, y in apart:
        a, b = index[uf.find(x)], index[uf.find(y)]
        if a == b:
            return []
        separated.add((min(a, b), max(a, b)))
    limit = decl.count if decl.count is not None else len(roots)
    assignments: List[List[int]] = []
    current: List[int] = []

    def grow(i: int, used: int) -> None:
        if i == len(roots):
            assignments.append(list(current))
            return
        for lab in range(1, min(used + 1, limit) + 1):
            if any((j, i) in separated and current[j] == lab for j in range(i)):
                continue
            current.append(lab)
            grow(i + 1, max(used, lab))
            current.pop()

    grow(0, 0)
    return [{t: labs[index[uf.find(t)]] for t in tuples} for labs in assignments]


def coherent_labelings(plan: AmalgamationPlan, K: ClassSpec) -> Iterator[Labels]:
    """Etiquetados coherentes del plan, como etiquetado global de las tuplas, salvo renombrar etiquetas."""
    per_rel = []
    for decl in K.eqrels:
        options = _labelings_for(K, decl, plan.parts)
        if not options:
            return
        per_rel.append(options)
    for combo in product(*per_rel):
        yield {decl.id: mapping for decl, mapping in zip(K.eqrels, combo)}


def split_labels(labels: Labels, parts: Sequence[Structure]) -> List[PartitionLabeling]:
    return [
        PartitionLabeling.of({
            rid: {t: lab for t, lab in m.items() if set(t) <= set(part.universe)}
            for rid, m in labels.items()
        })
        for part in parts
    ]


def coherent(plan: AmalgamationPlan, labelings: Sequence[PartitionLabeling], K: Optional[ClassSpec] = None) -> bool:
    if len(labelings) != len(plan.parts):
        raise LabelingError("Hay que dar un etiquetado por parte")
    if K is not None:
        for part, lab in zip(plan.parts, labelings):
            validate_labeling(K, part, lab)
    maps = [lab.as_dict() for lab in labelings]
    for a, b in combinations(range(len(maps)), 2):
        for rid in set(maps[a]) & set(maps[b]):
            shared = set(maps[a][rid]) & set(maps[b][rid])
            if any(maps[a][rid][t] != maps[b][rid][t] for t in shared):
                return False
    return True


def _forced_atoms(K: ClassSpec, universe, labels: Labels, free: set) -> Dict:
    forced = {}
    for decl in K.eqrels:
        mapping = labels.get(decl.id, {})
        for x, y in product(sorted(mapping), repeat=2):
            if not set(x + y) <= set(universe):
                continue
            atom = (decl.relation, x + y)
            if atom not in free:
                continue
            if mapping[x] != mapping[y]:
                forced[atom] = False
            elif _global_tags(decl):
                forced[atom] = True
    return forced


def admits_labeling(K: ClassSpec, S: Structure, labels: Labels) -> bool:
    """S admite un etiquetado de particiones que extiende `labels`."""
    for decl in K.eqrels:
        mapping = {t: lab for t, lab in labels.get(decl.id, {}).items() if set(t) <= S.universe_set}
        for x, y in combinations(sorted(mapping), 2):
            same = _same_class(S, decl, x, y)
            if same and mapping[x] != mapping[y]:
                return False
            if not same and mapping[x] == mapping[y] and (_global_tags(decl) or _same_star(K, S, decl, x, y)):
                return False
    return True


def check_ndap_upto(K: ClassSpec, n: int, weak: bool = False) -> DapVerdict:
    mode = "weak-upto" if weak else "upto"
    logger.info(f"🔍 Comprobando {n}-DAP salvo equivalencias en {K.name or 'clase'} ({mode})")
    checked = 0
    for plan in enumerate_plans(K, n):
        checked += 1
        labelings = coherent_labelings(plan, K)
        if weak:
            first = next(labelings, None)
            if first is not None and find_amalgam(plan, K) is None:
                return _upto_failure(K, n, mode, checked, plan, first)
            continue
        for labels in labelings:
            if find_amalgam(plan, K, labels) is None:
                return _upto_failure(K, n, mode, checked, plan, labels)
    logger.info(f"✅ {n}-DAP salvo equivalencias se cumple ({checked} planes)")
    return DapVerdict(class_name=K.name, n=n, mode=mode, holds=True, plans_checked=checked)


def _upto_failure(K, n, mode, checked, plan, labels) -> DapVerdict:
    logger.info(f"❌ Plan etiquetado sin amalgama tras {checked} planes")
    return DapVerdict(
        class_name=K.name, n=n, mode=mode, holds=False, plans_checked=checked,
        counterexample=plan.report(split_labels(labels, plan.parts)),
    )


# ---------------------------------------------------------------------------
# Amalgamación de familias
# ---------------------------------------------------------------------------

def _merge_labelings(labelings: Sequence[PartitionLabeling]) -> Labels:
    merged: Labels = {}
    for lab in labelings:
        for rid, mapping in lab.as_dict().items():
            target = merged.setdefault(rid, {})
            for t, value in mapping.items():
                if target.get(t, value) != value:
                    raise LabelingError(f"Etiquetados incoherentes en {rid} para {t}")
                target[t] = value
    return merged


def amalgamate_family(
    structures: Sequence[Structure],
    labelings: Optional[Sequence[PartitionLabeling]],
    K: ClassSpec,
) -> Optional[Structure]:
    """Estructura sobre la unión de universos que restringe a cada entrada.

    Recursión memoizada sobre subconjuntos X de la unión: si X cabe en una
    entrada se restringe; si no, las estructuras de X menos un punto forman
    un plan y se amalgaman respetando los etiquetados.
    """
    structures = list(structures)
    if not structures:
        return None
    for a, b in combinations(structures, 2):
        shared = a.universe_set & b.universe_set
        if restrict(a, shared) != restrict(b, shared):
            raise PlanError("Las estructuras no coinciden en su intersección")
    labels = _merge_labelings(labelings) if labelings else {}
    if labelings:
        for S, lab in zip(structures, labelings):
            validate_labeling(K, S, lab)
    union = tuple(sorted(set().union(*(S.universe_set for S in structures))))

    @lru_cache(maxsize=None)
    def build(X: FrozenSet[int]) -> Optional[Structure]:
        for S in structures:
            if X <= S.universe_set:
                return restrict(S, X)
        parts = []
        for x in sorted(X):
            sub = build(X - {x})
            if sub is None:
                return None
            parts.append(sub)
        found = _search(K, tuple(sorted(X)), parts, labels)
        if found is None:
            logger.debug(f"⚠️ Sin amalgama sobre {sorted(X)}")
        return found

    return build(frozenset(union))
