import pytest

from equiv import (
    EQ,
    Blur,
    Handle,
    blur_set,
    canonical_key,
    classes,
    element_classes,
    falsify_evenly,
    falsify_freely,
    falsify_orthogonal,
    handle_leq,
    handle_set,
    least_anchor,
    star_blocks,
    subset_blur,
)
from errors import EquivalenceError
from relstruct import Structure
from tests.conftest import equivalence


def single_point(K):
    return Structure.build(K.sig, [1], [(name, (1, 1)) for name in K.sig.names])


def test_handle_labels():
    assert Handle("r", 3).label() == "[3]_r"
    assert Handle(EQ, 3).label() == "[3]_="
    assert Blur((Handle(EQ, 1), Handle("r", 2))).label() == "{[1]_=, [2]_r}"


def test_classes_in_order(equiv):
    S = equivalence(equiv, [[2, 4], [1, 3]])
    assert element_classes(S, equiv.eqrel("r")) == [[1, 3], [2, 4]]
    assert classes(S, equiv.eqrel("r"))[0] == [(1,), (3,)]


def test_classes_reject_non_equivalences(equiv):
    S = Structure.build(equiv.sig, [1, 2], [("R", (1, 1))])
    with pytest.raises(EquivalenceError):
        classes(S, equiv.eqrel("r"))


def test_star_blocks_group_finer_classes(nested_eq):
    S = Structure.build(
        nested_eq.sig, [1, 2, 3],
        [("R", (x, y)) for x in (1, 2, 3) for y in (1, 2, 3)]
        + [("S", (x, y)) for x in (1, 2) for y in (1, 2)] + [("S", (3, 3))],
    )
    groups = star_blocks(nested_eq, S, nested_eq.eqrel("s"))
    assert [[[t[0] for t in block] for block in group] for group in groups] == [[[1, 2], [3]]]


def test_handle_set_of_related_pair(two_eq):
    S = Structure.build(
        two_eq.sig, [1, 2],
        [("R", (x, y)) for x in (1, 2) for y in (1, 2)] + [("S", (1, 1)), ("S", (2, 2))],
    )
    handles = handle_set(S, [1, 2], two_eq)
    assert handles == (Handle(EQ, 1), Handle(EQ, 2), Handle("r", 1), Handle("s", 1), Handle("s", 2))


def test_handle_order(two_eq, nested_eq):
    S = single_point(two_eq)
    assert handle_leq(Handle(EQ, 1), Handle("r", 1), S, two_eq)
    assert not handle_leq(Handle("r", 1), Handle(EQ, 1), S, two_eq)
    assert not handle_leq(Handle("r", 1), Handle("s", 1), S, two_eq)
    assert not handle_leq(Handle("s", 1), Handle("r", 1), S, two_eq)
    T = single_point(nested_eq)
    assert handle_leq(Handle("s", 1), Handle("r", 1), T, nested_eq)


def test_blur_counts_for_two_relations(two_eq, nested_eq):
    independent = blur_set(single_point(two_eq), [1], two_eq)
    assert len(independent) == 5
    assert independent[0] == Blur()
    assert Blur((Handle("r", 1), Handle("s", 1))) in independent
    assert len(blur_set(single_point(two_eq), [1], two_eq, include_empty=False)) == 4

    nested = blur_set(single_point(nested_eq), [1], nested_eq)
    assert len(nested) == 4
    assert all(len(b) <= 1 for b in nested)
    assert len(blur_set(single_point(nested_eq), [1], nested_eq, include_empty=False)) == 3


def test_canonical_key_uses_least_anchor(equiv):
    S = equivalence(equiv, [[1, 2], [3]])
    assert least_anchor(Handle("r", 2), S, equiv) == 1
    assert canonical_key(Blur((Handle("r", 2),)), S, equiv) == canonical_key(Blur((Handle("r", 1),)), S, equiv)
    assert canonical_key(Blur((Handle("r", 3),)), S, equiv) != canonical_key(Blur((Handle("r", 1),)), S, equiv)
    assert canonical_key(Blur(), S, equiv) == b"\x00\x00"


def test_subset_blur():
    assert subset_blur([3, 1, 3]) == Blur((Handle(EQ, 1), Handle(EQ, 3)))


def test_falsifiers_accept_equivalences(equiv, equiv2):
    assert falsify_evenly(equiv, "r", 2).holds
    assert falsify_evenly(equiv2, "r", 2).holds
    assert falsify_freely(equiv, "r", 3).holds
    assert falsify_freely(equiv2, "r", 3).holds


def test_orthogonal_independent_relations(two_eq):
    assert falsify_orthogonal(two_eq, "s", "r", 2).holds


def test_evenly_detects_one_sided_refinement(prs):
    report = falsify_evenly(prs, "s", 2)
    assert not report.holds
    assert report.check == "evenly"
    witness = Structure.from_text(report.witness[0], prs.sig)
    assert any(not witness.holds("P", (x,)) for x in witness.universe)
