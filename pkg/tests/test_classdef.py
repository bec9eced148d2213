import pytest

from classdef import (
    check_amalgamation,
    check_hereditary,
    contains,
    enumerate_iso,
    enumerate_structures,
    enumerate_upto,
    load_spec,
    one_point_extensions,
    parse_spec,
    render_spec,
    satisfies,
)
from errors import CapExceeded, SignatureError, SpecParseError, SpecValidationError
from relstruct import Signature, Structure
from tests.conftest import equivalence

BUILTIN = ["equiv", "equiv2", "equiv_partial", "free", "nested_eq", "prs", "two_eq"]


@pytest.mark.parametrize("name", BUILTIN)
def test_builtin_specs_render_and_parse_back(name):
    K = load_spec(name)
    assert K.name == name
    assert parse_spec(render_spec(K)) == K


def test_load_spec_accepts_file_suffix():
    assert load_spec("equiv.kspec") == load_spec("equiv")


def test_load_spec_unknown_name():
    with pytest.raises(SpecValidationError):
        load_spec("no_such_class")


def test_parsed_declarations(nested_eq, equiv2):
    r, s = nested_eq.eqrels
    assert (r.id, r.relation, r.star, r.count) == ("r", "R", None, None)
    assert (s.id, s.relation, s.star) == ("s", "S", "r")
    assert nested_eq.star_chain("s") == ["r"]
    assert equiv2.eqrel("r").count == 2
    assert equiv2.finite_eqrels() == [equiv2.eqrel("r")]


def test_parse_error_reports_position():
    with pytest.raises(SpecParseError) as info:
        parse_spec("signature {\n  R/0;\n}\n")
    assert (info.value.line, info.value.column) == (2, 3)


@pytest.mark.parametrize(
    "text",
    [
        "signature { P/1; }\nconstraint forall x : P(y);",
        "signature { P/1; }\nconstraint forall x : P(x, x);",
        "signature { R/2; }\neqrel r { relation R; star s; }",
        "signature { R/3; }\neqrel r { relation R; }",
        "signature { P/1; }\nsignature { P/1; }",
    ],
)
def test_invalid_specs_are_rejected(text):
    with pytest.raises(SpecParseError):
        parse_spec(text)


def test_membership_uses_equivalence_axioms(equiv, equiv2):
    assert satisfies(equiv, equivalence(equiv, [[1, 2], [3]]))
    not_transitive = Structure.build(
        equiv.sig, [1, 2, 3],
        [("R", (x, x)) for x in (1, 2, 3)] + [("R", (1, 2)), ("R", (2, 1)), ("R", (2, 3)), ("R", (3, 2))],
    )
    assert not satisfies(equiv, not_transitive)
    assert satisfies(equiv2, equivalence(equiv2, [[1], [2, 3]]))
    assert not satisfies(equiv2, equivalence(equiv2, [[1], [2], [3]]))


def test_membership_checks_signature(equiv):
    with pytest.raises(SignatureError):
        satisfies(equiv, Structure.build(Signature.of(("P", 1)), [1]))


def test_contains_respects_cap(equiv):
    big = equivalence(equiv, [[x] for x in range(1, 10)])
    with pytest.raises(CapExceeded):
        contains(equiv, big)
    assert contains(equiv, big, cap=9)


def test_enumeration_counts(equiv, equiv2, free):
    # números de Bell y particiones en a lo sumo dos bloques
    assert [len(enumerate_structures(equiv, n)) for n in range(5)] == [1, 1, 2, 5, 15]
    assert [len(enumerate_structures(equiv2, n)) for n in range(5)] == [1, 1, 2, 4, 8]
    assert len(enumerate_structures(free, 2)) == 4
    assert len(enumerate_upto(equiv, 3)) == 1 + 1 + 2 + 5
    assert len(enumerate_iso(equiv, 4)) == 5


def test_enumeration_order_and_universe(equiv):
    first, second = enumerate_structures(equiv, 2)
    assert first.universe == (1, 2)
    assert not first.holds("R", (1, 2))
    assert second.holds("R", (1, 2))


def test_enumeration_cap(equiv):
    with pytest.raises(CapExceeded):
        enumerate_structures(equiv, 7)


def test_one_point_extensions(equiv):
    S = equivalence(equiv, [[1]])
    extensions = list(one_point_extensions(equiv, S))
    assert len(extensions) == 2
    assert all(T.universe == (1, 2) for T in extensions)


@pytest.mark.parametrize("name", ["equiv", "equiv2", "nested_eq", "prs"])
def test_universal_classes_are_hereditary(name):
    assert check_hereditary(load_spec(name), 3).holds


def test_amalgamation_of_equivalences(equiv, equiv2):
    assert check_amalgamation(equiv, 3).holds
    assert check_amalgamation(equiv2, 3).holds
