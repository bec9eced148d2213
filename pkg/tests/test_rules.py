from fractions import Fraction

import numpy as np
import pytest

from errors import RuleError
from hierarchy import decode_real
from relstruct import Structure
from rules import RULES, ap_array_rule, builtin_rules
from sampler import event_probability, exact_distribution, sample_batch
from tests.conftest import equivalence


def test_registry():
    assert {"classcoin", "twoclass_pick", "twoclass_pick_bad", "tournament", "ap_array"} <= set(RULES)
    with pytest.raises(RuleError):
        builtin_rules("no_existe")
    assert builtin_rules("classcoin").cuts == (Fraction(1, 2),)
    assert builtin_rules("ap_array").cuts is None


def test_twoclass_pick_chooses_one_whole_class(equiv2):
    S = equivalence(equiv2, [[1, 3], [2]])
    for T in sample_batch(S, equiv2, builtin_rules("twoclass_pick"), seed=5, count=50):
        chosen = {x for x in T.universe if T.holds("P", (x,))}
        assert chosen in ({1, 3}, {2})


def test_twoclass_pick_needs_a_finite_relation(equiv):
    with pytest.raises(RuleError):
        sample_batch(equivalence(equiv, [[1]]), equiv, builtin_rules("twoclass_pick"), seed=1, count=1)


def test_tournament_orients_each_pair(free):
    S = Structure.build(free.sig, [1, 2, 3])
    samples = sample_batch(S, free, builtin_rules("tournament"), seed=9, count=40)
    for T in samples:
        assert not any(T.holds("T", (x, x)) for x in T.universe)
        for x, y in [(1, 2), (1, 3), (2, 3)]:
            assert T.holds("T", (x, y)) != T.holds("T", (y, x))
    table = exact_distribution(Structure.build(free.sig, [1, 2]), free, builtin_rules("tournament"))
    assert event_probability(table, builtin_rules("tournament").target, lambda T: T.holds("T", (1, 2))) == Fraction(1, 2)


def test_two_eq_demo_reads_both_classes(two_eq, nested_eq):
    S = Structure.build(
        two_eq.sig, [1, 2],
        [("R", (x, y)) for x in (1, 2) for y in (1, 2)] + [("S", (1, 1)), ("S", (2, 2))],
    )
    f = builtin_rules("two_eq_demo")
    table = exact_distribution(S, two_eq, f)
    both = event_probability(table, f.target, lambda T: T.holds("P", (1,)) and T.holds("P", (2,)))
    assert both == Fraction(1, 4)
    # en la clase anidada solo cuenta la clase más fina
    N = Structure.build(
        nested_eq.sig, [1, 2],
        [("R", (x, y)) for x in (1, 2) for y in (1, 2)] + [("S", (x, y)) for x in (1, 2) for y in (1, 2)],
    )
    table = exact_distribution(N, nested_eq, f)
    same = event_probability(table, f.target, lambda T: T.holds("P", (1,)) == T.holds("P", (2,)))
    assert same == 1


def test_constant_and_planted_rules(equiv):
    S = equivalence(equiv, [[1, 2]])
    (T,) = sample_batch(S, equiv, builtin_rules("constant_empty"), seed=0, count=1)
    assert not T.rel("P")
    (T,) = sample_batch(S, equiv, builtin_rules("elem_one"), seed=0, count=1)
    assert T.rel("P") == frozenset({(1,)})


def test_classcoin_doubled_needs_class_points(free):
    S = Structure.build(free.sig, [1])
    with pytest.raises(RuleError):
        sample_batch(S, free, builtin_rules("classcoin_doubled"), seed=0, count=1)


def test_ap_array_rule_encodes_a_value(free):
    f = ap_array_rule(p=8)
    assert f.target.names == [f"U{i}" for i in range(1, 9)]
    S = Structure.build(free.sig, [1, 2])
    for T in sample_batch(S, free, f, seed=2, count=10):
        value = decode_real([int(name[1:]) for name, tup in T.facts() if tup == (1,)], 8)
        assert 0.0 <= value < 1.0
        assert value * 256 == np.floor(value * 256)
