from typing import Iterable, Sequence

import pytest

from classdef import ClassSpec, load_spec
from relstruct import Structure


def equivalence(K: ClassSpec, blocks: Sequence[Iterable[int]], relation: str = "R") -> Structure:
    """Estructura de K cuya relación `relation` tiene exactamente los bloques dados."""
    blocks = [tuple(b) for b in blocks]
    universe = [x for b in blocks for x in b]
    facts = [(relation, (x, y)) for b in blocks for x in b for y in b]
    return Structure.build(K.sig, universe, facts)


@pytest.fixture
def equiv():
    return load_spec("equiv")


@pytest.fixture
def equiv2():
    return load_spec("equiv2")


@pytest.fixture
def two_eq():
    return load_spec("two_eq")


@pytest.fixture
def nested_eq():
    return load_spec("nested_eq")


@pytest.fixture
def equiv_partial():
    return load_spec("equiv_partial")


@pytest.fixture
def prs():
    return load_spec("prs")


@pytest.fixture
def free():
    return load_spec("free")
