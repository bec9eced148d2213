import pytest

from amalgam import (
    PartitionLabeling,
    amalgamate_family,
    check_ndap,
    check_ndap_upto,
    coherent,
    coherent_labelings,
    enumerate_plans,
    find_amalgam,
    full_labelings,
    is_plan,
    make_plan,
    split_labels,
    validate_labeling,
)
from errors import LabelingError, PlanError
from relstruct import Structure
from tests.conftest import equivalence


def pair(K, a, b, related):
    return equivalence(K, [[a, b]] if related else [[a], [b]])


def triangle(K, r23, r13, r12):
    """Plan de tamaño 3: la parte i vive sobre {1, 2, 3} menos i."""
    return make_plan([pair(K, 2, 3, r23), pair(K, 1, 3, r13), pair(K, 1, 2, r12)])


def test_plan_universes_are_checked(equiv):
    with pytest.raises(PlanError):
        is_plan([pair(equiv, 1, 2, True), pair(equiv, 1, 3, True)])


def test_plans_of_size_three(equiv):
    plans = list(enumerate_plans(equiv, 3))
    assert len(plans) == 8
    assert all(is_plan(p.parts) for p in plans)


def test_failing_triangle_has_no_amalgam(equiv):
    assert find_amalgam(triangle(equiv, False, True, True), equiv) is None
    found = find_amalgam(triangle(equiv, True, True, True), equiv)
    assert found is not None and found.holds("R", (1, 3))


def test_two_dap_holds_for_equivalence(equiv):
    verdict = check_ndap(equiv, 2)
    assert verdict.holds
    assert verdict.plans_checked == 1


def test_three_dap_fails_for_equivalence(equiv):
    verdict = check_ndap(equiv, 3)
    assert not verdict.holds
    assert verdict.plans_checked == 4
    parts = [Structure.from_text(text, equiv.sig) for text in verdict.counterexample.parts]
    assert [p.universe for p in parts] == [(2, 3), (1, 3), (1, 2)]
    # 2 ≁ 3 pero 1 ~ 3 y 1 ~ 2
    assert not parts[0].holds("R", (2, 3))
    assert parts[1].holds("R", (1, 3))
    assert parts[2].holds("R", (1, 2))


def test_three_dap_up_to_equivalence_holds(equiv):
    assert check_ndap_upto(equiv, 3).holds
    assert check_ndap_upto(equiv, 3, weak=True).holds


def test_bounded_count_needs_labelings(equiv2):
    plain = check_ndap(equiv2, 3)
    assert not plain.holds
    assert plain.plans_checked == 1
    assert check_ndap_upto(equiv2, 3).holds


def test_coherent_labelings_of_discrete_plan(equiv):
    labels = list(coherent_labelings(triangle(equiv, False, False, False), equiv))
    assert labels == [{"r": {(1,): 1, (2,): 2, (3,): 3}}]


def test_incoherent_plan_has_no_labelings(equiv):
    assert list(coherent_labelings(triangle(equiv, False, True, True), equiv)) == []


def test_split_labels_are_coherent(equiv):
    plan = triangle(equiv, True, False, False)
    labels = next(coherent_labelings(plan, equiv))
    pieces = split_labels(labels, plan.parts)
    assert coherent(plan, pieces, equiv)
    assert pieces[0].as_dict() == {"r": {(2,): labels["r"][(2,)], (3,): labels["r"][(3,)]}}
    assert labels["r"][(2,)] == labels["r"][(3,)] != labels["r"][(1,)]


def test_validate_labeling(equiv, equiv2):
    S = equivalence(equiv, [[1], [2]])
    with pytest.raises(LabelingError):
        validate_labeling(equiv, S, PartitionLabeling.of({"r": {(1,): 1, (2,): 1}}))
    validate_labeling(equiv, S, PartitionLabeling.of({"r": {(1,): 1, (2,): 2}}))
    with pytest.raises(LabelingError):
        validate_labeling(equiv2, equivalence(equiv2, [[1], [2]]), PartitionLabeling.of({"r": {(1,): 1, (2,): 3}}))


def test_full_labelings(equiv, equiv2):
    two = equivalence(equiv2, [[1], [2, 3]])
    assert len(full_labelings(equiv2, two, equiv2.eqrel("r"))) == 2
    assert full_labelings(equiv, equivalence(equiv, [[1], [2, 3]]), equiv.eqrel("r")) == [
        {(1,): 1, (2,): 2, (3,): 2}
    ]


def test_amalgamate_family(equiv):
    ab, bc = pair(equiv, 1, 2, True), pair(equiv, 2, 3, True)
    joined = amalgamate_family([ab, bc, pair(equiv, 1, 3, True)], None, equiv)
    assert joined is not None and joined.universe == (1, 2, 3)
    assert joined.holds("R", (1, 3))
    assert amalgamate_family([ab, bc, pair(equiv, 1, 3, False)], None, equiv) is None


def test_amalgamate_family_rejects_disagreement(equiv):
    with pytest.raises(PlanError):
        amalgamate_family([pair(equiv, 1, 2, True), pair(equiv, 1, 2, False)], None, equiv)
