"""
Arrays jerárquicamente intercambiables sobre rejillas finitas de ℕ^r y sus
productos: estructura de índices, correspondencia blur ↔ segmento inicial,
codificación binaria de valores reales, muestreo y test de invarianza.
"""
import logging
import struct
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, product
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from classdef import ClassSpec, EqRelDecl
from config import settings
from equiv import EQ, Blur, Handle, blur_set, sort_handles
from errors import HierarchyError
from models import ApReport
from relstruct import Injection, Signature, Structure
from sampler import Draws, KeyedDraws, RandomnessSource
from stats import EmpiricalDist, verdict

logger = logging.getLogger(__name__)

IndexPoint = Tuple[Tuple[int, ...], ...]
Segment = Tuple[Tuple[int, ...], ...]
Lengths = Tuple[int, ...]
Mixer = Callable[[Dict[Lengths, np.ndarray], Optional[IndexPoint]], np.ndarray]


@dataclass(frozen=True)
class ApIndex:
    """Rejilla de puntos con sus relaciones de prefijo común como estructura y clase."""
    depths: Tuple[int, ...]
    bounds: Tuple[Tuple[int, ...], ...]
    plus: Optional[int]
    points: Tuple[IndexPoint, ...]
    S: Structure
    K: ClassSpec
    kinds: Dict[str, Tuple[int, int]] = field(compare=False)

    @property
    def is_product(self) -> bool:
        return self.plus is not None

    @cached_property
    def _elements(self) -> Dict[IndexPoint, int]:
        return {p: e for e, p in enumerate(self.points)}

    def element(self, point: IndexPoint) -> int:
        try:
            return self._elements[tuple(tuple(c) for c in point)]
        except KeyError:
            raise HierarchyError(f"Punto fuera de la rejilla: {point}")

    def point(self, element: int) -> IndexPoint:
        return self.points[element]

    def lengths(self) -> List[Lengths]:
        """Longitudes de prefijo por nivel, de la más corta a la completa."""
        return sorted(product(*(range(r + 1) for r in self.depths)), key=lambda L: (sum(L), L))


def _check_points(count: int) -> None:
    if count > settings.AP_POINT_CAP:
        raise HierarchyError(f"{count} puntos superan la cota {settings.AP_POINT_CAP}")


def _per_coordinate(bounds: Union[int, Sequence[int]], r: int) -> Tuple[int, ...]:
    if isinstance(bounds, int):
        bounds = (bounds,) * r
    bounds = tuple(bounds)
    if len(bounds) != r or any(b < 1 for b in bounds):
        raise HierarchyError(f"Cotas inválidas {bounds} para profundidad {r}")
    return bounds


def _build(depths, bounds, plus, levels) -> ApIndex:
    """`levels`: (id, relación, nivel m, longitud j, estrella)."""
    coords = [list(product(*(range(b) for b in level))) for level in bounds]
    tails = [((a,),) for a in range(plus)] if plus is not None else [()]
    total = int(np.prod([len(c) for c in coords])) * len(tails)
    _check_points(total)
    points = tuple(tuple(combo) + tail for combo in product(*coords) for tail in tails)

    facts: Dict[str, List[Tuple[int, int]]] = {}
    for rid, name, m, j, _ in levels:
        blocks: Dict[Tuple[int, ...], List[int]] = {}
        for e, p in enumerate(points):
            blocks.setdefault(p[m][:j], []).append(e)
        facts[name] = [(x, y) for block in blocks.values() for x in block for y in block]
    sig = Signature.of(*((name, 2) for _, name, _, _, _ in levels))
    S = Structure.build(sig, range(len(points)), facts)
    decls = tuple(EqRelDecl(id=rid, relation=name, star=star) for rid, name, _, _, star in levels)
    K = ClassSpec(sig, (), decls, name=f"ap{'x'.join(map(str, depths))}")
    kinds = {rid: (m, j) for rid, _, m, j, _ in levels}
    logger.info(f"📦 Rejilla {K.name}: {len(points)} puntos, {len(levels)} relaciones")
    return ApIndex(tuple(depths), tuple(bounds), plus, points, S, K, kinds)


def build_ap_structure(r: int, bounds: Union[int, Sequence[int]]) -> ApIndex:
    """Rejilla de ℕ^r con R_i = coincidir en las i primeras coordenadas (i < r)."""
    if r < 1:
        raise HierarchyError("La profundidad debe ser al menos 1")
    per = _per_coordinate(bounds, r)
    levels = [(f"r{i}", f"R{i}", 0, i, f"r{i - 1}" if i > 1 else None) for i in range(1, r)]
    return _build((r,), (per,), None, levels)


def build_ap_product(depths: Sequence[int], bounds: Union[int, Sequence[int]], plus: int = 2) -> ApIndex:
    """Producto de rejillas con la coordenada extra α₊; R_{m,j} compara los j primeros valores del nivel m."""
    depths = tuple(depths)
    if not depths or any(r < 1 for r in depths) or plus < 1:
        raise HierarchyError(f"Profundidades inválidas: {depths}")
    if isinstance(bounds, int):
        bounds = (bounds,) * len(depths)
    if len(bounds) != len(depths):
        raise HierarchyError("Una cota por nivel")
    per = tuple(_per_coordinate(b, r) for b, r in zip(bounds, depths))
    levels = [
        (f"r{m + 1}_{j}", f"R{m + 1}_{j}", m, j, f"r{m + 1}_{j - 1}" if j > 1 else None)
        for m, r in enumerate(depths)
        for j in range(1, r + 1)
    ]
    return _build(depths, per, plus, levels)


# ---------------------------------------------------------------------------
# Blurs y segmentos iniciales
# ---------------------------------------------------------------------------

def blur_to_lengths(index: ApIndex, blur: Blur) -> Lengths:
    lengths = [0] * len(index.depths)
    for h in blur.handles:
        if h.kind == EQ:
            if index.is_product:
                raise HierarchyError("{[α]_=} depende de α₊")
            lengths[0] = index.depths[0]
        else:
            m, j = index.kinds[h.kind]
            lengths[m] = j
    return tuple(lengths)


def blur_to_segment(blur: Blur, alpha: IndexPoint, index: ApIndex) -> Segment:
    e = index.element(alpha)
    if blur not in blur_set(index.S, [e], index.K):
        raise HierarchyError(f"{blur.label()} no es un blur de {alpha}")
    if any(h.anchor != e for h in blur.handles):
        raise HierarchyError(f"{blur.label()} no está anclado en {alpha}")
    lengths = blur_to_lengths(index, blur)
    return tuple(alpha[m][:j] for m, j in enumerate(lengths))


def segment_to_blur(segment: Segment, alpha: IndexPoint, index: ApIndex) -> Blur:
    e = index.element(alpha)
    if len(segment) != len(index.depths):
        raise HierarchyError(f"El segmento {segment} no tiene un prefijo por nivel")
    handles = []
    for m, beta in enumerate(segment):
        beta = tuple(beta)
        if alpha[m][:len(beta)] != beta:
            raise HierarchyError(f"{beta} no es prefijo de {alpha[m]}")
        j = len(beta)
        if j == 0:
            continue
        if index.is_product:
            handles.append(Handle(f"r{m + 1}_{j}", e))
        elif j == index.depths[0]:
            handles.append(Handle(EQ, e))
        else:
            handles.append(Handle(f"r{j}", e))
    return Blur(sort_handles(index.K, handles))


def segment_key(segment: Segment) -> bytes:
    """Codificación con etiqueta y prefijos de longitud."""
    out = [b"seg", struct.pack(">H", len(segment))]
    for beta in segment:
        out.append(struct.pack(">H", len(beta)))
        out.extend(struct.pack(">Q", c) for c in beta)
    return b"".join(out)


# ---------------------------------------------------------------------------
# Valores reales como predicados unarios
# ---------------------------------------------------------------------------

def _check_precision(p: int) -> int:
    if not 1 <= p <= 53:
        raise HierarchyError(f"Precisión fuera de rango: {p}")
    return p


def encode_bits(values: np.ndarray, p: int) -> np.ndarray:
    """Matriz (..., p): bit i-ésimo de la expansión binaria truncada."""
    _check_precision(p)
    scaled = np.minimum(np.floor(np.asarray(values, dtype=np.float64) * 2.0**p), 2.0**p - 1).astype(np.uint64)
    shifts = np.arange(p - 1, -1, -1, dtype=np.uint64)
    return ((scaled[..., None] >> shifts) & np.uint64(1)).astype(bool)


def encode_real(x: float, p: Optional[int] = None) -> FrozenSet[int]:
    """Índices i con U_i: los bits a 1 de x truncado a p bits."""
    p = settings.AP_PRECISION if p is None else p
    bits = encode_bits(np.array([x]), p)[0]
    return frozenset(int(i) + 1 for i in np.flatnonzero(bits))


def decode_real(facts: Iterable[int], p: Optional[int] = None) -> float:
    p = settings.AP_PRECISION if p is None else _check_precision(p)
    return float(sum(2.0**-i for i in set(facts) if 1 <= i <= p))


# ---------------------------------------------------------------------------
# Mezcladores
# ---------------------------------------------------------------------------

def mix_root(variates: Dict[Lengths, np.ndarray], point: Optional[IndexPoint] = None) -> np.ndarray:
    return variates[min(variates)]


def mix_leaf(variates: Dict[Lengths, np.ndarray], point: Optional[IndexPoint] = None) -> np.ndarray:
    return variates[max(variates, key=lambda L: (sum(L), L))]


def mix_chain_mean(variates: Dict[Lengths, np.ndarray], point: Optional[IndexPoint] = None) -> np.ndarray:
    return np.mean(np.stack([variates[L] for L in sorted(variates)]), axis=0)


def mix_coord_parity(variates: Dict[Lengths, np.ndarray], point: Optional[IndexPoint] = None) -> np.ndarray:
    """Lee la última coordenada de los niveles: no es invariante."""
    if point is None:
        raise HierarchyError("coord_parity necesita las coordenadas del punto")
    size = next(iter(variates.values())).shape
    return np.full(size, 0.75 if point[-1][-1] % 2 else 0.25)


MIXERS: Dict[str, Mixer] = {
    "root": mix_root,
    "leaf": mix_leaf,
    "chain_mean": mix_chain_mean,
    "coord_parity": mix_coord_parity,
}


def get_mixer(name: str) -> Mixer:
    if name not in MIXERS:
        raise HierarchyError(f"Mezclador desconocido: {name}")
    return MIXERS[name]


# ---------------------------------------------------------------------------
# Muestreo
# ---------------------------------------------------------------------------

def _base_point(index: ApIndex, point: IndexPoint) -> IndexPoint:
    """Coordenadas de los niveles, sin α₊."""
    return point[:len(index.depths)]


def ap_values(index: ApIndex, mix: Mixer, draws: Draws, points: Sequence[IndexPoint]) -> np.ndarray:
    """Matriz (extracciones × puntos) con X_α = mix((ξ_β)_{β⊑α})."""
    columns = []
    for point in points:
        base = _base_point(index, point)
        variates = {
            L: draws.uniform(segment_key(tuple(base[m][:j] for m, j in enumerate(L))))
            for L in index.lengths()
        }
        columns.append(np.broadcast_to(mix(variates, base), (draws.size,)))
    return np.stack(columns, axis=1) if columns else np.zeros((draws.size, 0))


def sample_ap_array(index: ApIndex, mix: Union[str, Mixer], seed: int, samples: int = 1, p: Optional[int] = None) -> np.ndarray:
    """Valores truncados a p bits en toda la rejilla."""
    p = settings.AP_PRECISION if p is None else _check_precision(p)
    mix = get_mixer(mix) if isinstance(mix, str) else mix
    draws = KeyedDraws(RandomnessSource(seed), samples, tag=b"ap")
    values = ap_values(index, mix, draws, index.points)
    return np.floor(np.minimum(values, 1 - 2.0**-p) * 2.0**p) / 2.0**p


def ap_structure(index: ApIndex, values: Sequence[float], p: Optional[int] = None) -> Structure:
    """Estructura sobre U_1..U_p que codifica una fila de valores."""
    p = settings.AP_PRECISION if p is None else p
    sig = Signature.of(*((f"U{i}", 1) for i in range(1, p + 1)))
    bits = encode_bits(np.asarray(values), p)
    facts = [(f"U{i + 1}", (e,)) for e in range(len(index.points)) for i in np.flatnonzero(bits[e])]
    return Structure.build(sig, range(len(index.points)), facts)


# ---------------------------------------------------------------------------
# Permutaciones que preservan segmentos iniciales
# ---------------------------------------------------------------------------

PointMap = Callable[[IndexPoint], IndexPoint]


def random_block_permutation(index: ApIndex, rng: np.random.Generator) -> PointMap:
    """Permuta los bloques del primer nivel y recurre dentro de cada bloque, por separado en cada nivel."""
    memo: Dict[Tuple, np.ndarray] = {}

    def sigma(level: int, prefix: Tuple[int, ...]) -> np.ndarray:
        key = (level, prefix)
        if key not in memo:
            memo[key] = rng.permutation(index.bounds[level][len(prefix)])
        return memo[key]

    plus_perm = rng.permutation(index.plus) if index.is_product else None

    def apply(point: IndexPoint) -> IndexPoint:
        out = []
        for m, alpha in enumerate(_base_point(index, point)):
            image = tuple(int(sigma(m, alpha[:i])[alpha[i]]) for i in range(len(alpha)))
            out.append(image)
        if plus_perm is not None:
            out.append((int(plus_perm[point[-1][0]]),))
        return tuple(out)

    return apply


def level_shift(index: ApIndex, level: int, coordinate: int) -> PointMap:
    """Desplazamiento cíclico de una coordenada, igual para todos los prefijos."""
    bound = index.bounds[level][coordinate]

    def apply(point: IndexPoint) -> IndexPoint:
        out = [tuple(c) for c in point]
        alpha = list(out[level])
        alpha[coordinate] = (alpha[coordinate] + 1) % bound
        out[level] = tuple(alpha)
        return tuple(out)

    return apply


def as_injection(index: ApIndex, pi: PointMap) -> Injection:
    return Injection.from_dict({e: index.element(pi(p)) for e, p in enumerate(index.points)})


def _window(index: ApIndex) -> List[IndexPoint]:
    """Origen y su desplazamiento en cada coordenada de cada nivel."""
    origin = index.points[0]
    window = [origin]
    for m, r in enumerate(index.depths):
        window.extend(level_shift(index, m, i)(origin) for i in range(r) if index.bounds[m][i] > 1)
    return list(dict.fromkeys(window))


def _sub_arrays(size: int) -> List[Tuple[int, ...]]:
    """Columnas sueltas y pares de columnas de la ventana."""
    return [(j,) for j in range(size)] + list(combinations(range(size), 2))


def _quantized(values: np.ndarray, bits: int) -> EmpiricalDist:
    codes = encode_bits(values, bits).reshape(values.shape[0], -1)
    packed = np.packbits(codes, axis=1)
    return EmpiricalDist.from_keys(row.tobytes() for row in packed)


def _sub_array_dists(values: np.ndarray, subsets: Sequence[Tuple[int, ...]], bits: int) -> List[EmpiricalDist]:
    # pares: mitad de bits por columna
    return [_quantized(values[:, list(cols)], bits if len(cols) == 1 else max(1, bits // 2)) for cols in subsets]


def check_hierarchical_invariance(
    index: ApIndex,
    mix: Union[str, Mixer],
    samples: Optional[int] = None,
    seed: int = 0,
    permutations: Optional[int] = None,
    shifts: bool = True,
    bits: Optional[int] = None,
    tv_threshold: Optional[float] = None,
    p_threshold: Optional[float] = None,
) -> ApReport:
    """Compara marginales y pares de la ventana sin permutar con su imagen por permutaciones de H_r."""
    samples = settings.MC_SAMPLES if samples is None else samples
    permutations = settings.INVARIANCE_PERMUTATIONS if permutations is None else permutations
    bits = _check_precision(settings.AP_INVARIANCE_BITS if bits is None else bits)
    tv_threshold = settings.TV_THRESHOLD if tv_threshold is None else tv_threshold
    p_threshold = settings.P_THRESHOLD if p_threshold is None else p_threshold
    mix_name = mix if isinstance(mix, str) else getattr(mix, "__name__", "custom")
    mix = get_mixer(mix) if isinstance(mix, str) else mix
    source = RandomnessSource(seed)
    rng = np.random.default_rng(seed)

    maps: List[PointMap] = []
    if shifts:
        for m, r in enumerate(index.depths):
            maps.extend(level_shift(index, m, i) for i in range(r) if index.bounds[m][i] > 1)
    maps.extend(random_block_permutation(index, rng) for _ in range(permutations))
    if not maps:
        maps.append(lambda point: point)

    window = _window(index)
    subsets = _sub_arrays(len(window))
    base_values = ap_values(index, mix, KeyedDraws(source, samples, tag=b"ap|base"), window)
    base = _sub_array_dists(base_values, subsets, bits)
    worst_tv, min_p, comparisons = 0.0, 1.0, 0
    for i, pi in enumerate(maps):
        draws = KeyedDraws(source, samples, tag=b"ap|perm|" + str(i).encode())
        moved = _sub_array_dists(ap_values(index, mix, draws, [pi(p) for p in window]), subsets, bits)
        map_tv = 0.0
        for reference, image in zip(base, moved):
            result = verdict(reference, image, tv_threshold, p_threshold)
            map_tv = max(map_tv, result.tv)
            min_p = min(min_p, result.p_value)
            comparisons += 1
        worst_tv = max(worst_tv, map_tv)
        logger.debug(f"📊 permutación {i}: TV {map_tv:.4f} en {len(subsets)} subarrays")
    p_value = min(1.0, min_p * comparisons)
    passed = worst_tv <= tv_threshold and p_value >= p_threshold
    icon = "✅" if passed else "❌"
    logger.info(f"{icon} Invarianza jerárquica de {mix_name}: {len(maps)} permutaciones, TV máxima {worst_tv:.4f}")
    return ApReport(
        depths=list(index.depths),
        bounds=[b for level in index.bounds for b in level] + ([index.plus] if index.is_product else []),
        mix=mix_name,
        seed=seed,
        samples=samples,
        permutations_checked=len(maps),
        worst_tv=worst_tv,
        p_value=p_value,
        passed=passed,
    )
