import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from errors import ElementNotInUniverse, InjectionError, SignatureError, StructureError
from relstruct import (
    Injection,
    Signature,
    Structure,
    are_isomorphic,
    canonical_form,
    enumerate_embeddings,
    is_embedding,
    iso_canonical_form,
    pullback,
    qf_type,
    relabel,
    restrict,
)

GRAPH = Signature.of(("E", 2))


@st.composite
def graphs(draw, max_size=4):
    n = draw(st.integers(0, max_size))
    universe = list(range(1, n + 1))
    pairs = [(x, y) for x in universe for y in universe]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return Structure.build(GRAPH, universe, [("E", p) for p in chosen])


def path(*edges):
    universe = sorted({x for e in edges for x in e})
    return Structure.build(GRAPH, universe, [("E", e) for e in edges])


def test_signature_rejects_repeated_symbols():
    with pytest.raises(SignatureError):
        Signature.of(("E", 2), ("E", 1))


def test_fresh_name_avoids_existing_symbols():
    sig = Signature.of(("C", 1), ("R", 2))
    assert sig.fresh_name("C") == "C_"
    assert sig.fresh_name("D") == "D"


def test_build_checks_universe_and_arity():
    with pytest.raises(ElementNotInUniverse) as info:
        Structure.build(GRAPH, [1, 2], [("E", (1, 3))])
    assert info.value.elements == [3]
    with pytest.raises(StructureError):
        Structure.build(GRAPH, [1, 2], [("E", (1,))])


def test_text_format_is_canonical():
    S = path((2, 1), (1, 2))
    assert S.to_text() == "universe: 1 2\nE 1 2\nE 2 1\n"
    assert Structure.from_text("# comentario\nuniverse: 2 1\nE 2 1\nE 1 2\n", GRAPH) == S
    assert canonical_form(S) == S.to_text().encode("utf-8")


def test_from_text_requires_header():
    with pytest.raises(StructureError):
        Structure.from_text("E 1 2\n", GRAPH)


def test_restrict_and_qf_type():
    S = path((1, 2), (2, 3))
    sub = restrict(S, [1, 2])
    assert sub.universe == (1, 2)
    assert sub.rel("E") == frozenset({(1, 2)})
    assert qf_type(S, [2, 3]).facts == frozenset({("E", (2, 3))})
    with pytest.raises(ElementNotInUniverse):
        restrict(S, [4])


def test_injection_must_be_injective():
    with pytest.raises(InjectionError):
        Injection.from_dict({1: 5, 2: 5})


def test_embeddings_of_an_edge_into_a_path():
    edge = path((1, 2))
    M = path((1, 2), (2, 3))
    found = [phi.as_dict() for phi in enumerate_embeddings(edge, M)]
    assert found == [{1: 1, 2: 2}, {1: 2, 2: 3}]
    for phi in enumerate_embeddings(edge, M):
        assert is_embedding(phi, edge, M)


def test_isomorphism_and_iso_canonical_form():
    S = path((1, 2), (2, 3))
    T = path((3, 1), (1, 2))
    assert are_isomorphic(S, T) is not None
    assert iso_canonical_form(S) == iso_canonical_form(T)
    assert iso_canonical_form(S).startswith(b"iso\n")
    assert are_isomorphic(S, path((1, 2), (1, 3))) is None


@given(graphs())
def test_pullback_by_identity(M):
    assert pullback(M, Injection.identity(M.universe)) == M


@hyp_settings(max_examples=50)
@given(graphs(), st.data())
def test_pullback_is_functorial(M, data):
    image = data.draw(st.permutations(list(M.universe)))
    g = Injection.from_dict(dict(zip(M.universe, image)))
    size = data.draw(st.integers(0, len(M)))
    f = Injection.identity(M.universe[:size])
    assert pullback(pullback(M, g), f) == pullback(M, g.compose(f))


@hyp_settings(max_examples=50)
@given(graphs(), st.data())
def test_relabel_preserves_isomorphism_type(M, data):
    targets = data.draw(st.permutations([x + 10 for x in M.universe]))
    T = relabel(M, dict(zip(M.universe, targets)))
    assert sorted(T.universe) == sorted(targets)
    assert iso_canonical_form(T) == iso_canonical_form(M)
