"""Comparación de distribuciones empíricas y exactas."""
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional

import numpy as np
from scipy.stats import chi2_contingency

from config import settings
from errors import StatsError
from models import Discrepancy, StatsVerdict

logger = logging.getLogger(__name__)


@dataclass
class EmpiricalDist:
    counts: Counter = field(default_factory=Counter)

    @classmethod
    def from_keys(cls, keys: Iterable[bytes]) -> "EmpiricalDist":
        return cls(Counter(keys))

    @classmethod
    def from_counts(cls, counts: Mapping[bytes, int]) -> "EmpiricalDist":
        if any(v < 0 for v in counts.values()):
            raise StatsError("Conteos negativos")
        return cls(Counter({k: int(v) for k, v in counts.items() if v}))

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def add(self, key: bytes, count: int = 1) -> None:
        self.counts[key] += count

    def __add__(self, other: "EmpiricalDist") -> "EmpiricalDist":
        return EmpiricalDist(self.counts + other.counts)

    def probabilities(self) -> Dict[bytes, float]:
        total = self.total
        if total == 0:
            raise StatsError("Distribución vacía")
        return {k: v / total for k, v in self.counts.items()}


def tv_distance(d1: EmpiricalDist, d2: EmpiricalDist) -> float:
    p1, p2 = d1.probabilities(), d2.probabilities()
    support = set(p1) | set(p2)
    return 0.5 * sum(abs(p1.get(k, 0.0) - p2.get(k, 0.0)) for k in support)


def tv_exact(t1: Mapping[bytes, Fraction], t2: Mapping[bytes, Fraction]) -> Fraction:
    """Distancia de variación total entre tablas exactas."""
    support = set(t1) | set(t2)
    return sum((abs(t1.get(k, Fraction(0)) - t2.get(k, Fraction(0))) for k in support), Fraction(0)) / 2


def _pooled_table(d1: EmpiricalDist, d2: EmpiricalDist, min_expected: float) -> np.ndarray:
    """Tabla 2×k; las categorías con conteo esperado pequeño se agrupan en una sola columna."""
    support = sorted(set(d1.counts) | set(d2.counts))
    table = np.array([[d1.counts.get(k, 0) for k in support], [d2.counts.get(k, 0) for k in support]], dtype=float)
    rows = table.sum(axis=1, keepdims=True)
    expected = rows * table.sum(axis=0, keepdims=True) / table.sum()
    small = expected.min(axis=0) < min_expected
    kept = table[:, ~small]
    if small.any():
        pooled = table[:, small].sum(axis=1, keepdims=True)
        pooled_expected = rows * pooled.sum() / table.sum()
        if pooled_expected.min() < min_expected and kept.shape[1] > 0:
            # la columna agrupada sigue siendo pequeña: se suma a la menor de las restantes
            j = int(np.argmin(kept.sum(axis=0)))
            kept = kept.copy()
            kept[:, j:j + 1] += pooled
        else:
            kept = np.hstack([kept, pooled])
    return kept


def multinomial_two_sample(d1: EmpiricalDist, d2: EmpiricalDist, min_expected: Optional[float] = None) -> float:
    """p-valor del test chi-cuadrado de homogeneidad de dos muestras."""
    min_expected = settings.POOL_MIN_EXPECTED if min_expected is None else min_expected
    if d1.total < 2 or d2.total < 2:
        raise StatsError("Se necesitan al menos dos observaciones por muestra")
    table = _pooled_table(d1, d2, min_expected)
    if table.shape[1] < 2:
        return 1.0
    return float(chi2_contingency(table, correction=False)[1])


def discrepancies(d1: EmpiricalDist, d2: EmpiricalDist, top: int = 5) -> List[Discrepancy]:
    p1, p2 = d1.probabilities(), d2.probabilities()
    rows = []
    for key in set(p1) | set(p2):
        a, b = p1.get(key, 0.0), p2.get(key, 0.0)
        rows.append(Discrepancy(outcome=_label(key), p1=a, p2=b, diff=abs(a - b)))
    rows.sort(key=lambda r: (-r.diff, r.outcome))
    return rows[:top]


def _label(key: bytes) -> str:
    return key.decode("utf-8", errors="replace").strip().replace("\n", "; ")


def verdict(
    d1: EmpiricalDist,
    d2: EmpiricalDist,
    tv_threshold: Optional[float] = None,
    p_threshold: Optional[float] = None,
) -> StatsVerdict:
    tv_threshold = settings.TV_THRESHOLD if tv_threshold is None else tv_threshold
    p_threshold = settings.P_THRESHOLD if p_threshold is None else p_threshold
    tv = tv_distance(d1, d2)
    try:
        p_value = multinomial_two_sample(d1, d2)
    except StatsError as e:
        logger.warning(f"⚠️ Test chi-cuadrado no aplicable: {e}")
        p_value = 1.0
    passed = tv <= tv_threshold and p_value >= p_threshold
    return StatsVerdict(
        passed=passed, tv=tv, p_value=p_value,
        tv_threshold=tv_threshold, p_threshold=p_threshold,
        diagnostics=discrepancies(d1, d2),
    )
