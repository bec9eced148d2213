import numpy as np
import pytest

from equiv import EQ, Blur, Handle, blur_set
from errors import HierarchyError
from hierarchy import (
    as_injection,
    blur_to_segment,
    build_ap_product,
    build_ap_structure,
    check_hierarchical_invariance,
    decode_real,
    encode_bits,
    encode_real,
    get_mixer,
    level_shift,
    random_block_permutation,
    sample_ap_array,
    segment_key,
    segment_to_blur,
)
from relstruct import is_embedding


def test_single_level_index():
    index = build_ap_structure(3, 2)
    assert index.K.name == "ap3"
    assert len(index.points) == 8
    assert [d.id for d in index.K.eqrels] == ["r1", "r2"]
    assert index.point(index.element(((1, 0, 1),))) == ((1, 0, 1),)
    with pytest.raises(HierarchyError):
        index.element(((2, 0, 0),))


@pytest.mark.parametrize("r", [1, 2, 3])
def test_blurs_are_initial_segments(r):
    index = build_ap_structure(r, 2)
    alpha = index.points[-1]
    e = index.element(alpha)
    blurs = blur_set(index.S, [e], index.K)
    assert len(blurs) == r + 1
    segments = {blur_to_segment(b, alpha, index) for b in blurs}
    assert segments == {(alpha[0][:j],) for j in range(r + 1)}
    for b in blurs:
        assert segment_to_blur(blur_to_segment(b, alpha, index), alpha, index) == b


def test_full_segment_is_the_equality_handle():
    index = build_ap_structure(2, 3)
    alpha = ((2, 1),)
    e = index.element(alpha)
    assert segment_to_blur(((2, 1),), alpha, index) == Blur((Handle(EQ, e),))
    assert segment_to_blur(((2,),), alpha, index) == Blur((Handle("r1", e),))
    assert segment_to_blur(((),), alpha, index) == Blur()
    with pytest.raises(HierarchyError):
        segment_to_blur(((1,),), alpha, index)


def test_product_blurs():
    index = build_ap_product((2, 2), 2)
    assert index.K.name == "ap2x2"
    assert len(index.points) == 32
    alpha = index.points[5]
    e = index.element(alpha)
    for b in blur_set(index.S, [e], index.K):
        if any(h.kind == EQ for h in b):
            with pytest.raises(HierarchyError):
                blur_to_segment(b, alpha, index)
            continue
        segment = blur_to_segment(b, alpha, index)
        assert len(segment) == 2
        assert segment_to_blur(segment, alpha, index) == b


def test_point_cap():
    with pytest.raises(HierarchyError):
        build_ap_structure(2, 200)
    with pytest.raises(HierarchyError):
        build_ap_structure(0, 2)


def test_segment_keys_are_distinct():
    assert segment_key(((0,),)) != segment_key(((), (0,)))
    assert segment_key(((0, 1),)) != segment_key(((0,), (1,)))


def test_real_encoding():
    assert encode_real(0.625, 4) == frozenset({1, 3})
    assert decode_real({1, 3}, 4) == 0.625
    assert decode_real({1, 3, 9}, 4) == 0.625
    assert encode_bits(np.array([1.0]), 3).tolist() == [[True, True, True]]
    with pytest.raises(HierarchyError):
        encode_real(0.5, 0)


def test_unknown_mixer():
    with pytest.raises(HierarchyError):
        get_mixer("otro")


def test_sampling_ignores_the_extra_coordinate():
    index = build_ap_product((2, 1), 2)
    values = sample_ap_array(index, "chain_mean", seed=3, samples=5, p=16)
    assert values.shape == (5, len(index.points))
    assert np.array_equal(values[:, 0::2], values[:, 1::2])
    assert np.all((values >= 0) & (values < 1))


def test_root_mixer_is_constant():
    index = build_ap_structure(2, 2)
    values = sample_ap_array(index, "root", seed=1, samples=3)
    assert np.all(values == values[:, :1])
    assert np.array_equal(values, sample_ap_array(index, "root", seed=1, samples=3))


def test_block_permutations_are_automorphisms():
    index = build_ap_structure(3, 2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        pi = as_injection(index, random_block_permutation(index, rng))
        assert is_embedding(pi, index.S, index.S)
    assert is_embedding(as_injection(index, level_shift(index, 0, 1)), index.S, index.S)


@pytest.mark.slow
def test_chain_mean_is_invariant():
    report = check_hierarchical_invariance(build_ap_structure(2, 2), "chain_mean", samples=100_000, seed=4)
    assert report.passed
    assert report.mix == "chain_mean"


def test_coordinate_parity_is_not_invariant():
    report = check_hierarchical_invariance(build_ap_structure(2, 2), "coord_parity", samples=500, seed=4)
    assert not report.passed
    assert report.worst_tv == pytest.approx(1.0)


def mix_low_bit_parity(variates, point):
    size = next(iter(variates.values())).shape
    return np.full(size, 0.875 if point[-1][-1] % 2 else 0.625)


def mix_middle_flip(variates, point):
    root = variates[min(variates)]
    return root if point[0][1] == 0 else 1 - root


def test_parity_below_the_top_bit_is_not_invariant():
    report = check_hierarchical_invariance(build_ap_structure(2, 2), mix_low_bit_parity, samples=500, seed=4)
    assert not report.passed
    assert report.mix == "mix_low_bit_parity"
    assert report.worst_tv == pytest.approx(1.0)


def test_middle_level_pairs_are_compared():
    index = build_ap_structure(3, 3)
    report = check_hierarchical_invariance(index, mix_middle_flip, samples=2000, seed=1, permutations=0)
    assert not report.passed
    assert report.worst_tv == pytest.approx(1.0)
