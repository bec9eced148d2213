from fractions import Fraction

import numpy as np
import pytest

from errors import MissingProfileError, RuleError, StructureError
from relstruct import Structure, qf_type, restrict
from rules import builtin_rules
from sampler import (
    KeyedDraws,
    RandomnessSource,
    check_eq_symmetry,
    check_exchangeability,
    event_probability,
    exact_distribution,
    failed_rep_search,
    restriction_coherent,
    restriction_coherent_in_law,
    sample_batch,
    sample_marginal,
    sample_structure,
)
from tests.conftest import equivalence


def test_seed_range():
    with pytest.raises(RuleError):
        RandomnessSource(-1)
    with pytest.raises(RuleError):
        RandomnessSource(2**64)


def test_keyed_draws_are_deterministic_and_offset_stable():
    source = RandomnessSource(42)
    batch = KeyedDraws(source, 5, tag=b"t").uniform(b"xi|k")
    again = KeyedDraws(RandomnessSource(42), 5, tag=b"t").uniform(b"xi|k")
    assert np.array_equal(batch, again)
    single = KeyedDraws(source, 1, tag=b"t", offset=3).uniform(b"xi|k")
    assert single[0] == batch[3]
    assert np.all((batch >= 0) & (batch < 1))
    assert not np.array_equal(batch, KeyedDraws(source, 5, tag=b"t").uniform(b"xi|other"))


def test_keyed_permutations():
    perms = KeyedDraws(RandomnessSource(1), 200).permutation(b"ord|k", 4)
    assert perms.shape == (200, 4)
    assert all(sorted(row) == [0, 1, 2, 3] for row in perms.tolist())


def test_sampling_is_reproducible(equiv):
    S = equivalence(equiv, [[1, 2], [3]])
    f = builtin_rules("classcoin")
    first = sample_batch(S, equiv, f, seed=7, count=4)
    assert first == sample_batch(S, equiv, f, seed=7, count=4)
    assert sample_structure(S, equiv, f, seed=7, index=2) == first[2]
    assert all(T.holds("P", (1,)) == T.holds("P", (2,)) for T in first)


def test_sampling_requires_a_member(equiv2):
    S = equivalence(equiv2, [[1], [2], [3]])
    with pytest.raises(StructureError):
        sample_batch(S, equiv2, builtin_rules("twoclass_pick"), seed=1, count=1)


def test_marginal_and_restriction(equiv):
    S = equivalence(equiv, [[1, 2], [3]])
    f = builtin_rules("classcoin")
    whole = sample_structure(S, equiv, f, seed=11)
    assert sample_marginal(S, equiv, f, seed=11, s=[1, 3]) == qf_type(restrict(whole, [1, 3]), [1, 3])
    assert restriction_coherent(S, equiv, f, seed=11, s=[1, 3])


def test_label_rules_are_coherent_in_law(equiv2):
    S = equivalence(equiv2, [[1], [2, 3]])
    f = builtin_rules("twoclass_pick")
    assert restriction_coherent_in_law(S, equiv2, f, s=[2, 3])
    assert restriction_coherent_in_law(S, equiv2, f, s=[1, 2])
    both = lambda T: T.holds("P", (2,)) and T.holds("P", (3,))
    whole = event_probability(exact_distribution(S, equiv2, f), f.target, both)
    part = event_probability(exact_distribution(restrict(S, [2, 3]), equiv2, f), f.target, both)
    assert whole == part == Fraction(1, 2)


def test_labels_follow_class_order_when_all_classes_survive(equiv2):
    S = equivalence(equiv2, [[1], [2, 3]])
    f = builtin_rules("twoclass_pick")
    assert all(restriction_coherent(S, equiv2, f, seed=seed, s=[1, 2]) for seed in range(5))


def test_exact_classcoin_probabilities(equiv):
    S = equivalence(equiv, [[1, 2], [3]])
    f = builtin_rules("classcoin")
    table = exact_distribution(S, equiv, f)
    assert sum(table.values()) == 1
    both = lambda pair: (lambda T: all(T.holds("P", (x,)) for x in pair))
    assert event_probability(table, f.target, both((1, 2))) == Fraction(1, 2)
    assert event_probability(table, f.target, both((1, 3))) == Fraction(1, 4)


def test_exact_mode_needs_cuts(equiv):
    S = equivalence(equiv, [[1]])
    with pytest.raises(MissingProfileError):
        exact_distribution(S, equiv, builtin_rules("ap_array"))


def test_eq_symmetry_exact(equiv2):
    S = equivalence(equiv2, [[1], [2]])
    good = check_eq_symmetry(S, equiv2, builtin_rules("twoclass_pick"))
    assert good.passed
    assert good.worst_tv_exact == "0"
    assert good.labelings_checked == 2

    bad = check_eq_symmetry(S, equiv2, builtin_rules("twoclass_pick_bad"))
    assert not bad.passed
    assert bad.worst_tv_exact == "1/2"
    assert bad.worst_labeling is not None


def test_eq_symmetry_montecarlo(equiv2):
    S = equivalence(equiv2, [[1], [2]])
    report = check_eq_symmetry(S, equiv2, builtin_rules("twoclass_pick"), mode="montecarlo", samples=20_000, seed=3)
    assert report.passed
    assert report.worst_tv_exact is None
    bad = check_eq_symmetry(S, equiv2, builtin_rules("twoclass_pick_bad"), mode="montecarlo", samples=2_000, seed=3)
    assert not bad.passed


def test_eq_symmetry_without_finite_relations(equiv):
    report = check_eq_symmetry(equivalence(equiv, [[1]]), equiv, builtin_rules("classcoin"))
    assert report.passed and report.labelings_checked == 0


def test_eq_symmetry_unknown_mode(equiv2):
    with pytest.raises(RuleError):
        check_eq_symmetry(equivalence(equiv2, [[1]]), equiv2, builtin_rules("twoclass_pick"), mode="otro")


@pytest.mark.slow
def test_classcoin_is_exchangeable(equiv):
    report = check_exchangeability(equiv, builtin_rules("classcoin"), 3, samples=100_000, seed=1)
    assert report.passed
    assert report.worst_tv <= 0.02
    assert report.comparisons > 0


def test_element_identity_is_not_exchangeable(equiv):
    report = check_exchangeability(equiv, builtin_rules("elem_one"), 2, samples=2_000, seed=1)
    assert not report.passed
    assert report.worst_tv >= 0.1
    assert report.worst_pair is not None


@pytest.mark.slow
def test_no_elementwise_rule_separates_classes(equiv):
    S = equivalence(equiv, [[1, 2], [3]])
    report = failed_rep_search(equiv, S, same=(1, 2), cross=(1, 3))
    assert report.rules_checked == 16 * 3 * 3
    assert report.both_hits == 0
