from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from errors import StatsError
from stats import EmpiricalDist, discrepancies, multinomial_two_sample, tv_distance, tv_exact, verdict

counts = st.dictionaries(st.sampled_from([b"a", b"b", b"c", b"d"]), st.integers(1, 50), min_size=1)


def test_identical_samples_pass():
    d = EmpiricalDist.from_counts({b"a": 500, b"b": 500})
    result = verdict(d, EmpiricalDist.from_counts({b"a": 500, b"b": 500}))
    assert result.tv == 0.0
    assert result.p_value == pytest.approx(1.0)
    assert result.passed


def test_disjoint_samples_fail():
    result = verdict(EmpiricalDist.from_counts({b"a": 200}), EmpiricalDist.from_counts({b"b": 200}))
    assert result.tv == pytest.approx(1.0)
    assert result.p_value < 1e-6
    assert not result.passed
    assert result.diagnostics[0].diff == pytest.approx(1.0)


def test_rare_outcomes_are_pooled():
    d1 = EmpiricalDist.from_counts({b"a": 1000, b"b": 1})
    d2 = EmpiricalDist.from_counts({b"a": 1000, b"c": 1})
    assert multinomial_two_sample(d1, d2) == 1.0


def test_empty_or_tiny_samples():
    with pytest.raises(StatsError):
        EmpiricalDist().probabilities()
    with pytest.raises(StatsError):
        multinomial_two_sample(EmpiricalDist.from_keys([b"a"]), EmpiricalDist.from_keys([b"a", b"b"]))
    with pytest.raises(StatsError):
        EmpiricalDist.from_counts({b"a": -1})


def test_from_keys_and_add():
    d = EmpiricalDist.from_keys([b"x", b"y", b"x"])
    d.add(b"y", 3)
    assert d.counts == {b"x": 2, b"y": 4}
    assert d.total == 6


def test_tv_exact():
    t1 = {b"a": Fraction(1, 2), b"b": Fraction(1, 2)}
    t2 = {b"a": Fraction(1, 4), b"b": Fraction(1, 4), b"c": Fraction(1, 2)}
    assert tv_exact(t1, t2) == Fraction(1, 2)
    assert tv_exact(t1, t1) == 0


def test_discrepancies_sorted():
    d1 = EmpiricalDist.from_counts({b"a": 3, b"b": 1})
    d2 = EmpiricalDist.from_counts({b"a": 1, b"b": 3})
    rows = discrepancies(d1, d2, top=1)
    assert len(rows) == 1
    assert rows[0].outcome == "a"


@given(counts, counts)
def test_tv_is_a_symmetric_distance(c1, c2):
    d1, d2 = EmpiricalDist.from_counts(c1), EmpiricalDist.from_counts(c2)
    tv = tv_distance(d1, d2)
    assert 0.0 <= tv <= 1.0 + 1e-12
    assert tv == pytest.approx(tv_distance(d2, d1))


@given(counts, counts, counts)
def test_tv_triangle_inequality(c1, c2, c3):
    d1, d2, d3 = (EmpiricalDist.from_counts(c) for c in (c1, c2, c3))
    assert tv_distance(d1, d3) <= tv_distance(d1, d2) + tv_distance(d2, d3) + 1e-12
