"""
Proceso intercambiable canónico: aleatoriedad indexada por blurs, órdenes,
etiquetados de particiones y evaluación de reglas atómicas, más los
verificadores de eq-simetría y de intercambiabilidad.

Cada extracción es una fila: las reglas trabajan vectorizadas sobre `Draws`
y devuelven un vector booleano por átomo.
"""
import hashlib
import logging
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import permutations
from math import factorial, prod
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from classdef import ClassSpec, enumerate_upto, satisfies
from config import settings
from equiv import EQ, Blur, Handle, blur_set, canonical_key, classes, in_domain, normalize, sort_handles, star_blocks
from errors import CapExceeded, MissingProfileError, RuleError, StructureError
from models import EqSymReport, ExchReport, FailedRepReport
from relstruct import QfType, Signature, Structure, canonical_form, iter_embeddings, qf_type, restrict
from search import Atom, all_atoms
from stats import EmpiricalDist, tv_distance, tv_exact, verdict

logger = logging.getLogger(__name__)

Tup = Tuple[int, ...]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix64(x) -> np.ndarray:
    z = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def key_word(key: bytes) -> int:
    """Palabra de 64 bits derivada de la clave con blake2b."""
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")


# ---------------------------------------------------------------------------
# Fuente de aleatoriedad
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RandomnessSource:
    seed: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise RuleError(f"Semilla fuera de rango: {self.seed}")

    def stream(self, size: int, tag: bytes = b"", offset: int = 0) -> np.ndarray:
        """Semillas por extracción: una por fila, derivadas de (semilla, tag, índice)."""
        base = splitmix64(np.array([self.seed ^ key_word(tag)], dtype=np.uint64))
        with np.errstate(over="ignore"):
            index = base + np.arange(offset, offset + size, dtype=np.uint64)
        return splitmix64(index)

    def uniform(self, seeds: np.ndarray, key: bytes) -> np.ndarray:
        bits = splitmix64(seeds ^ np.uint64(key_word(key)))
        return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


class Draws:
    """Interfaz de consumo de aleatoriedad: variables uniformes y permutaciones por clave."""
    size: int = 1

    def uniform(self, key: bytes) -> np.ndarray:
        raise NotImplementedError

    def permutation(self, key: bytes, m: int) -> np.ndarray:
        """Matriz (size, m); cada fila es una permutación uniforme de 0..m-1."""
        raise NotImplementedError


class KeyedDraws(Draws):
    def __init__(self, source: RandomnessSource, size: int, tag: bytes = b"", offset: int = 0):
        self.source = source
        self.size = size
        self.seeds = source.stream(size, tag, offset)
        self._uniform: Dict[bytes, np.ndarray] = {}

    def uniform(self, key: bytes) -> np.ndarray:
        if key not in self._uniform:
            self._uniform[key] = self.source.uniform(self.seeds, key)
        return self._uniform[key]

    def permutation(self, key: bytes, m: int) -> np.ndarray:
        if m == 0:
            return np.zeros((self.size, 0), dtype=np.int64)
        u = np.stack([self.uniform(key + b"#" + str(i).encode()) for i in range(m)], axis=1)
        return np.argsort(u, axis=1, kind="stable")


class RecordingDraws(Draws):
    """Registra qué entradas lee una regla; devuelve valores fijos de tamaño 1."""

    def __init__(self):
        self.size = 1
        self.uniform_keys: List[bytes] = []
        self.perm_sizes: Dict[bytes, int] = {}

    def uniform(self, key: bytes) -> np.ndarray:
        if key not in self.uniform_keys:
            self.uniform_keys.append(key)
        return np.full(1, 0.5)

    def permutation(self, key: bytes, m: int) -> np.ndarray:
        if self.perm_sizes.setdefault(key, m) != m:
            raise RuleError(f"Permutación {key!r} pedida con tamaños distintos")
        return np.arange(m, dtype=np.int64)[None, :]


def _cells(cuts: Sequence[Fraction]) -> List[Tuple[float, Fraction]]:
    """Intervalos de [0,1] cortados en los umbrales: (punto medio, longitud)."""
    points = sorted({Fraction(c) for c in cuts if 0 < Fraction(c) < 1})
    bounds = [Fraction(0)] + points + [Fraction(1)]
    return [(float((a + b) / 2), b - a) for a, b in zip(bounds, bounds[1:])]


class AtomDraws(Draws):
    """Una fila por átomo del cubo de variables cortado en los umbrales por todas las permutaciones."""

    def __init__(self, recorded: RecordingDraws, cuts: Sequence[Fraction], cap: Optional[int] = None):
        cap = settings.EXACT_ATOM_CAP if cap is None else cap
        cells = _cells(cuts)
        radices = [len(cells)] * len(recorded.uniform_keys) + [factorial(m) for m in recorded.perm_sizes.values()]
        self.size = prod(radices)
        if self.size > cap:
            raise CapExceeded(f"{self.size} átomos superan la cota exacta {cap}")
        index = np.arange(self.size, dtype=np.int64)
        values = np.array([v for v, _ in cells])
        cell_weights = np.array([w for _, w in cells], dtype=object)
        weights = np.full(self.size, Fraction(1), dtype=object)
        stride = 1
        self._uniform: Dict[bytes, np.ndarray] = {}
        for key in recorded.uniform_keys:
            digit = (index // stride) % len(cells)
            stride *= len(cells)
            self._uniform[key] = values[digit]
            weights = weights * cell_weights[digit]
        self._perm: Dict[bytes, np.ndarray] = {}
        for key, m in recorded.perm_sizes.items():
            table = np.array(list(permutations(range(m))), dtype=np.int64).reshape(factorial(m), m)
            digit = (index // stride) % len(table)
            stride *= len(table)
            self._perm[key] = table[digit]
            weights = weights * Fraction(1, len(table))
        self.weights = weights

    def uniform(self, key: bytes) -> np.ndarray:
        if key not in self._uniform:
            raise RuleError(f"Entrada no registrada: {key!r}")
        return self._uniform[key]

    def permutation(self, key: bytes, m: int) -> np.ndarray:
        if key not in self._perm:
            raise RuleError(f"Permutación no registrada: {key!r}")
        return self._perm[key]


# ---------------------------------------------------------------------------
# Vista de una regla
# ---------------------------------------------------------------------------

class Query:
    """Entradas de una regla para s = rango de la tupla: tipo local, blurs, variables, órdenes y etiquetas."""

    def __init__(
        self,
        S: Structure,
        K: ClassSpec,
        s: Sequence[int],
        draws: Draws,
        include_empty: bool = True,
        groups: Optional[Dict] = None,
    ):
        self._S = S
        self.K = K
        self.s = tuple(sorted(set(s)))
        self.draws = draws
        self.include_empty = include_empty
        self._groups = {} if groups is None else groups
        self._keys: Dict[Blur, bytes] = {}

    @property
    def size(self) -> int:
        return self.draws.size

    @property
    def ambient(self) -> Structure:
        return self._S

    @cached_property
    def local(self) -> Structure:
        return restrict(self._S, self.s)

    @cached_property
    def blurs(self) -> List[Blur]:
        return blur_set(self._S, self.s, self.K, self.include_empty)

    @cached_property
    def _blur_index(self) -> set:
        return set(self.blurs)

    def handle(self, kind: str, y: int) -> Handle:
        if y not in self.s:
            raise RuleError(f"{y} no está en {self.s}")
        if kind != EQ:
            decl = self.K.eqrel(kind)
            if not decl.infinite or decl.length != 1:
                raise RuleError(f"{kind} no tiene identidades de clase")
            if not in_domain(decl, self._S, y):
                raise RuleError(f"{y} no está en el dominio de {kind}")
        return normalize(self.K, self._S, Handle(kind, y), self.s)

    def blur(self, *handles: Handle) -> Blur:
        b = Blur(sort_handles(self.K, handles))
        if b not in self._blur_index:
            raise RuleError(f"{b.label()} no es un blur de {self.s}")
        return b

    def key(self, b: Blur) -> bytes:
        if b not in self._keys:
            self._keys[b] = canonical_key(b, self._S, self.K)
        return self._keys[b]

    def xi(self, b: Blur) -> np.ndarray:
        return self.draws.uniform(b"xi|" + self.key(b))

    def order(self, b: Blur) -> np.ndarray:
        """Posición de cada handle de `b` (en su orden) dentro del orden aleatorio del blur."""
        perm = self.draws.permutation(b"ord|" + self.key(b), len(b))
        return np.argsort(perm, axis=1, kind="stable")

    def order_subset(self, t: Sequence[int]) -> np.ndarray:
        """Orden aleatorio de un subconjunto t ⊆ s, como blur de handles de igualdad."""
        return self.order(self.blur(*(Handle(EQ, y) for y in sorted(set(t)))))

    def precedes(self, b: Blur, h1: Handle, h2: Handle) -> np.ndarray:
        ranks = self.order(b)
        i, j = b.handles.index(h1), b.handles.index(h2)
        return ranks[:, i] < ranks[:, j]

    def eta(self, rid: str, t: Sequence[int]) -> np.ndarray:
        """Etiqueta en [count] de la clase de t; inyectiva dentro de cada clase de la estrella."""
        decl = self.K.eqrel(rid)
        if decl.infinite:
            raise RuleError(f"{rid} tiene cuenta infinita: no hay etiquetas")
        t = tuple(t)
        if not set(t) <= set(self.s):
            raise RuleError(f"{t} no está contenido en {self.s}")
        if rid not in self._groups:
            self._groups[rid] = star_blocks(self.K, self._S, decl)
        for group in self._groups[rid]:
            for j, block in enumerate(group):
                if t in block:
                    anchor = "*" if decl.star is None else ",".join(map(str, group[0][0]))
                    key = b"eta|" + rid.encode() + b"|" + anchor.encode()
                    return self.draws.permutation(key, decl.count)[:, j] + 1
        raise RuleError(f"{t} no está en el dominio de {rid}")


QueryFactory = Callable[[Structure, ClassSpec, Sequence[int], Draws, bool, Dict], Query]


@dataclass(frozen=True)
class TypeRule:
    name: str
    target: Signature
    decide: Callable[[str, Tup, Query], np.ndarray]
    cuts: Optional[Tuple[Fraction, ...]] = None
    description: str = ""


# ---------------------------------------------------------------------------
# Evaluación
# ---------------------------------------------------------------------------

def _require_member(K: ClassSpec, S: Structure) -> None:
    if not satisfies(K, S):
        raise StructureError(f"La estructura no pertenece a la clase {K.name}")


def evaluate(
    S: Structure,
    K: ClassSpec,
    f: TypeRule,
    draws: Draws,
    include_empty: bool = True,
    elements: Optional[Sequence[int]] = None,
    query: QueryFactory = Query,
) -> Tuple[List[Atom], np.ndarray]:
    """Matriz (extracciones × átomos de la firma destino) con la decisión de la regla."""
    universe = S.universe if elements is None else tuple(sorted(set(elements)))
    atoms = all_atoms(f.target, universe)
    bits = np.zeros((draws.size, len(atoms)), dtype=bool)
    queries: Dict[Tup, Query] = {}
    groups: Dict = {}
    for j, (name, tup) in enumerate(atoms):
        s = tuple(sorted(set(tup)))
        if s not in queries:
            queries[s] = query(S, K, s, draws, include_empty, groups)
        value = np.asarray(f.decide(name, tup, queries[s]))
        try:
            bits[:, j] = np.broadcast_to(value.astype(bool), (draws.size,))
        except ValueError:
            raise RuleError(f"{f.name}: forma de salida {value.shape} inválida en {name}{tup}")
    return atoms, bits


def unique_rows(bits: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Filas distintas, índice inverso y conteos."""
    n = bits.shape[0]
    if bits.shape[1] == 0:
        return bits[:1], np.zeros(n, dtype=np.int64), np.array([n])
    packed = np.ascontiguousarray(np.packbits(bits, axis=1))
    view = packed.view(np.dtype((np.void, packed.shape[1]))).ravel()
    _, first, inverse, counts = np.unique(view, return_index=True, return_inverse=True, return_counts=True)
    return bits[first], inverse.ravel(), counts


def row_structure(sig: Signature, universe: Sequence[int], atoms: Sequence[Atom], row: np.ndarray) -> Structure:
    return Structure.build(sig, universe, [a for a, bit in zip(atoms, row) if bit])


def _distribution(bits: np.ndarray, atoms: Sequence[Atom], sig: Signature, universe: Sequence[int]) -> EmpiricalDist:
    rows, _, counts = unique_rows(bits)
    keys = [canonical_form(row_structure(sig, universe, atoms, row)) for row in rows]
    return EmpiricalDist.from_counts(dict(zip(keys, counts.tolist())))


def sample_batch(
    S: Structure,
    K: ClassSpec,
    f: TypeRule,
    seed: int,
    count: int,
    include_empty: bool = True,
    offset: int = 0,
) -> List[Structure]:
    _require_member(K, S)
    draws = KeyedDraws(RandomnessSource(seed), count, offset=offset)
    atoms, bits = evaluate(S, K, f, draws, include_empty)
    return [row_structure(f.target, S.universe, atoms, row) for row in bits]


def sample_structure(S: Structure, K: ClassSpec, f: TypeRule, seed: int, index: int = 0, include_empty: bool = True) -> Structure:
    return sample_batch(S, K, f, seed, 1, include_empty, offset=index)[0]


def sample_marginal(
    S: Structure,
    K: ClassSpec,
    f: TypeRule,
    seed: int,
    s: Sequence[int],
    index: int = 0,
    include_empty: bool = True,
) -> QfType:
    """Tipo de s en la muestra, evaluando solo los átomos con rango dentro de s."""
    _require_member(K, S)
    part = restrict(S, s)
    draws = KeyedDraws(RandomnessSource(seed), 1, offset=index)
    atoms, bits = evaluate(S, K, f, draws, include_empty, elements=part.universe)
    return qf_type(row_structure(f.target, part.universe, atoms, bits[0]), part.universe)


def restriction_coherent(S: Structure, K: ClassSpec, f: TypeRule, seed: int, s: Sequence[int]) -> bool:
    """Restringir la muestra de S coincide con muestrear la restricción con la misma semilla."""
    whole = restrict(sample_structure(S, K, f, seed), s)
    return whole == sample_structure(restrict(S, s), K, f, seed)


def restriction_coherent_in_law(
    S: Structure,
    K: ClassSpec,
    f: TypeRule,
    s: Sequence[int],
    include_empty: bool = True,
    cap: Optional[int] = None,
) -> bool:
    """Igualdad exacta de leyes entre la muestra de S restringida a s y la muestra de la restricción.

    Las reglas que leen etiquetas de particiones solo son coherentes en este
    sentido: las etiquetas se sortean una vez sobre las clases de la
    estructura y la posición de cada clase cambia al restringir.
    """
    pushed: Dict[bytes, Fraction] = {}
    for key, p in exact_distribution(S, K, f, include_empty, cap).items():
        small = canonical_form(restrict(Structure.from_text(key.decode("utf-8"), f.target), s))
        pushed[small] = pushed.get(small, Fraction(0)) + p
    direct = exact_distribution(restrict(S, s), K, f, include_empty, cap)
    logger.debug(f"📊 {f.name}: TV exacta por restricción {tv_exact(pushed, direct)}")
    return pushed == direct


# ---------------------------------------------------------------------------
# Modo exacto
# ---------------------------------------------------------------------------

def _label_columns(S: Structure, K: ClassSpec, draws: Draws) -> Tuple[List[Tuple[str, Tup]], np.ndarray]:
    """Etiqueta de cada clase de cada relación con cuenta finita, una columna por clase."""
    q = Query(S, K, S.universe, draws)
    columns, values = [], []
    for decl in K.finite_eqrels():
        for block in classes(S, decl):
            columns.append((decl.id, block[0]))
            values.append(np.broadcast_to(q.eta(decl.id, block[0]), (draws.size,)))
    if not values:
        return columns, np.zeros((draws.size, 0), dtype=np.int64)
    return columns, np.stack(values, axis=1)


def _exact_draws(S: Structure, K: ClassSpec, f: TypeRule, include_empty: bool, cap: Optional[int], labels: bool = False) -> AtomDraws:
    if f.cuts is None:
        raise MissingProfileError(f"La regla {f.name} no declara umbrales")
    recorder = RecordingDraws()
    evaluate(S, K, f, recorder, include_empty)
    if labels:
        _label_columns(S, K, recorder)
    return AtomDraws(recorder, f.cuts, cap)


def _weigh(keys: Sequence[bytes], inverse: np.ndarray, weights: np.ndarray) -> Dict[bytes, Fraction]:
    table: Dict[bytes, Fraction] = {}
    for i, w in zip(inverse.tolist(), weights.tolist()):
        table[keys[i]] = table.get(keys[i], Fraction(0)) + w
    return table


def exact_distribution(
    S: Structure,
    K: ClassSpec,
    f: TypeRule,
    include_empty: bool = True,
    cap: Optional[int] = None,
) -> Dict[bytes, Fraction]:
    """Tabla racional exacta de la salida, indexada por forma canónica."""
    _require_member(K, S)
    draws = _exact_draws(S, K, f, include_empty, cap)
    atoms, bits = evaluate(S, K, f, draws, include_empty)
    rows, inverse, _ = unique_rows(bits)
    keys = [canonical_form(row_structure(f.target, S.universe, atoms, row)) for row in rows]
    table = _weigh(keys, inverse, draws.weights)
    logger.debug(f"📊 {f.name}: {draws.size} átomos, {len(table)} resultados")
    return table


def event_probability(table: Dict[bytes, Fraction], sig: Signature, event: Callable[[Structure], bool]) -> Fraction:
    return sum(
        (p for key, p in table.items() if event(Structure.from_text(key.decode("utf-8"), sig))),
        Fraction(0),
    )


# ---------------------------------------------------------------------------
# Verificadores
# ---------------------------------------------------------------------------

def _labeling_json(columns: Sequence[Tuple[str, Tup]], values: Sequence[int]) -> Dict[str, Dict[str, int]]:
    out: Dict[str, Dict[str, int]] = {}
    for (rid, t), lab in zip(columns, values):
        out.setdefault(rid, {})[",".join(map(str, t))] = int(lab)
    return out


def check_eq_symmetry(
    S: Structure,
    K: ClassSpec,
    f: TypeRule,
    mode: str = "exact",
    samples: Optional[int] = None,
    seed: int = 0,
    tv_threshold: Optional[float] = None,
    include_empty: bool = True,
) -> EqSymReport:
    """Compara la salida condicionada a cada valor de los etiquetados con la incondicional."""
    _require_member(K, S)
    if not K.finite_eqrels():
        logger.info(f"✅ {f.name}: sin relaciones de cuenta finita, eq-simetría trivial")
        return EqSymReport(rule=f.name, mode=mode, passed=True, labelings_checked=0, worst_tv=0.0, worst_tv_exact="0" if mode == "exact" else None)
    if mode == "exact":
        draws = _exact_draws(S, K, f, include_empty, None, labels=True)
    elif mode == "montecarlo":
        draws = KeyedDraws(RandomnessSource(seed), samples or settings.MC_SAMPLES, tag=b"eqsym")
    else:
        raise RuleError(f"Modo desconocido: {mode}")
    atoms, bits = evaluate(S, K, f, draws, include_empty)
    columns, labels = _label_columns(S, K, draws)
    label_values, label_inverse = np.unique(labels, axis=0, return_inverse=True)
    label_inverse = label_inverse.ravel()

    worst, worst_exact, worst_index = 0.0, Fraction(0), None
    if mode == "exact":
        rows, inverse, _ = unique_rows(bits)
        keys = [canonical_form(row_structure(f.target, S.universe, atoms, row)) for row in rows]
        overall = _weigh(keys, inverse, draws.weights)
        for v in range(len(label_values)):
            mask = label_inverse == v
            conditional = _weigh(keys, inverse[mask], draws.weights[mask])
            mass = sum(conditional.values(), Fraction(0))
            tv = tv_exact({k: p / mass for k, p in conditional.items()}, overall)
            if worst_index is None or tv > worst_exact:
                worst_exact, worst_index = tv, v
        worst = float(worst_exact)
        passed = worst_exact == 0
    else:
        tv_threshold = settings.TV_THRESHOLD if tv_threshold is None else tv_threshold
        overall = _distribution(bits, atoms, f.target, S.universe)
        for v in range(len(label_values)):
            conditional = _distribution(bits[label_inverse == v], atoms, f.target, S.universe)
            tv = tv_distance(conditional, overall)
            if worst_index is None or tv > worst:
                worst, worst_index = tv, v
        passed = worst <= tv_threshold

    icon = "✅" if passed else "❌"
    logger.info(f"{icon} eq-simetría de {f.name} ({mode}): {len(label_values)} etiquetados, TV máxima {worst:.4f}")
    return EqSymReport(
        rule=f.name,
        mode=mode,
        passed=passed,
        labelings_checked=len(label_values),
        worst_tv=worst,
        worst_tv_exact=str(worst_exact) if mode == "exact" else None,
        worst_labeling=_labeling_json(columns, label_values[worst_index]) if worst_index is not None else None,
    )


def check_exchangeability(
    K: ClassSpec,
    f: TypeRule,
    n: int,
    samples: Optional[int] = None,
    seed: int = 0,
    tv_threshold: Optional[float] = None,
    p_threshold: Optional[float] = None,
    cap: Optional[int] = None,
    include_empty: bool = True,
) -> ExchReport:
    """Para cada S, T de K hasta n y cada inmersión π: S → T compara la muestra de S con el pullback de la de T."""
    samples = settings.MC_SAMPLES if samples is None else samples
    tv_threshold = settings.TV_THRESHOLD if tv_threshold is None else tv_threshold
    p_threshold = settings.P_THRESHOLD if p_threshold is None else p_threshold
    source = RandomnessSource(seed)
    structures = [S for S in enumerate_upto(K, n, cap) if len(S) > 0]
    logger.info(f"🔍 {f.name} sobre {K.name}: {len(structures)} estructuras hasta n={n}, {samples} extracciones")

    batches: Dict[Tuple[bytes, bytes], Tuple[List[Atom], np.ndarray]] = {}

    def batch(S: Structure, side: bytes) -> Tuple[List[Atom], np.ndarray]:
        key = (side, canonical_form(S))
        if key not in batches:
            draws = KeyedDraws(source, samples, tag=side + b"|" + key[1])
            batches[key] = evaluate(S, K, f, draws, include_empty)
        return batches[key]

    worst_tv, worst_pair, min_p, comparisons = 0.0, None, 1.0, 0
    for S in structures:
        atoms_S, bits_S = batch(S, b"src")
        direct = _distribution(bits_S, atoms_S, f.target, S.universe)
        for T in structures:
            if len(T) < len(S):
                continue
            atoms_T, bits_T = batch(T, b"dst")
            column = {a: j for j, a in enumerate(atoms_T)}
            for phi in iter_embeddings(S, T):
                cols = [column[(name, phi.apply(tup))] for name, tup in atoms_S]
                pulled = _distribution(bits_T[:, cols], atoms_S, f.target, S.universe)
                result = verdict(direct, pulled, tv_threshold, p_threshold)
                comparisons += 1
                min_p = min(min_p, result.p_value)
                if worst_pair is None or result.tv > worst_tv:
                    worst_tv = result.tv
                    worst_pair = f"{S.to_text().strip()} -> {T.to_text().strip()} via {phi.as_dict()}".replace("\n", "; ")
                logger.debug(f"📊 π={phi.as_dict()}: TV {result.tv:.4f}, p {result.p_value:.3g}")
    p_value = min(1.0, min_p * comparisons) if comparisons else 1.0
    passed = worst_tv <= tv_threshold and p_value >= p_threshold
    icon = "✅" if passed else "❌"
    logger.info(f"{icon} {f.name}: {comparisons} comparaciones, TV máxima {worst_tv:.4f}, p {p_value:.3g}")
    return ExchReport(
        class_name=K.name, rule=f.name, n=n, samples=samples, seed=seed,
        comparisons=comparisons, worst_tv=worst_tv, worst_pair=worst_pair,
        p_value=p_value, passed=passed,
    )


# ---------------------------------------------------------------------------
# Reglas elemento a elemento con un umbral
# ---------------------------------------------------------------------------

def _elementwise_rule(g: int, a: Fraction, b: Fraction, cuts: Tuple[Fraction, ...]) -> TypeRule:
    """x ∈ P según la función booleana g de (ξ_∅ ≤ a, ξ_x ≤ b)."""

    def decide(name: str, tup: Tup, q: Query) -> np.ndarray:
        u = (q.xi(q.blur()) <= a).astype(np.int64)
        v = (q.xi(q.blur(q.handle(EQ, tup[0]))) <= b).astype(np.int64)
        return (np.right_shift(g, 2 * u + v) & 1).astype(bool)

    return TypeRule(name=f"elementwise-{g}-{a}-{b}", target=Signature.of(("P", 1)), decide=decide, cuts=cuts)


def failed_rep_search(K: ClassSpec, S: Structure, same: Tup, cross: Tup, cuts: Sequence[Fraction] = None) -> FailedRepReport:
    """Recorre las reglas elemento a elemento buscando P(par de la misma clase) = 1/2 y P(par cruzado) = 1/4 a la vez."""
    cuts = tuple(Fraction(c) for c in (cuts or (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))))
    def both_in(pair: Tup) -> Callable[[Structure], bool]:
        return lambda T: all(T.holds("P", (x,)) for x in pair)

    same_hits = cross_hits = both = checked = 0
    for g in range(16):
        for a in cuts:
            for b in cuts:
                rule = _elementwise_rule(g, a, b, cuts)
                table = exact_distribution(S, K, rule)
                p_same = event_probability(table, rule.target, both_in(same))
                p_cross = event_probability(table, rule.target, both_in(cross))
                hit_same, hit_cross = p_same == Fraction(1, 2), p_cross == Fraction(1, 4)
                same_hits += hit_same
                cross_hits += hit_cross
                both += hit_same and hit_cross
                checked += 1
    logger.info(f"🔍 {checked} reglas elemento a elemento: {both} alcanzan ambas probabilidades")
    return FailedRepReport(
        cuts=[str(c) for c in cuts],
        rules_checked=checked,
        same_class_hits=same_hits,
        cross_class_hits=cross_hits,
        both_hits=both,
    )
