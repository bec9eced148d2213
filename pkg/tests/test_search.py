from classdef import parse_spec
from relstruct import Signature
from search import Completion, all_atoms

SYMMETRIC = """
signature {
  R/2;
}
constraint forall x, y : R(x, y) -> R(y, x);
"""


def test_atoms_ordered_by_largest_element():
    sig = Signature.of(("P", 1), ("R", 2))
    assert all_atoms(sig, [1, 2]) == [
        ("P", (1,)), ("R", (1, 1)), ("P", (2,)), ("R", (1, 2)), ("R", (2, 1)), ("R", (2, 2)),
    ]


def test_symmetric_completions():
    K = parse_spec(SYMMETRIC)
    atoms = all_atoms(K.sig, [1, 2])
    solutions = list(Completion(K.sig, [1, 2], {}, atoms, K.constraints).solutions())
    assert len(solutions) == 8
    assert not any(S.rel("R") for S in solutions[:1])
    for S in solutions:
        assert S.holds("R", (1, 2)) == S.holds("R", (2, 1))


def test_fixed_atoms_propagate():
    K = parse_spec(SYMMETRIC)
    free = [a for a in all_atoms(K.sig, [1, 2]) if a != ("R", (1, 2))]
    solutions = list(Completion(K.sig, [1, 2], {("R", (1, 2)): True}, free, K.constraints).solutions())
    assert len(solutions) == 4
    assert all(S.holds("R", (2, 1)) for S in solutions)


def test_checkpoints_prune():
    K = parse_spec(SYMMETRIC)
    atoms = all_atoms(K.sig, [1, 2])
    no_loops = {len(atoms): lambda true: not any(tup[0] == tup[1] for _, tup in true)}
    completion = Completion(K.sig, [1, 2], {}, atoms, K.constraints, checkpoints=no_loops)
    assert [sorted(S.rel("R")) for S in completion.solutions()] == [[], [(1, 2), (2, 1)]]
    assert completion.first() is not None
