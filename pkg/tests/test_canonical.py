import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rankscope.canonical import (
    RESIDUAL_TOL,
    last_slice_normalize,
    multi_canonicalize,
    pattern,
    pencil_canonicalize,
)
from rankscope.errors import BadShape, DomainError
from rankscope.tensor import Tensor3


def gaussian(seed, u, s, t):
    return Tensor3(np.random.default_rng(seed).standard_normal((u, s, t)))


def check_transforms(t, res):
    recomputed = np.einsum("ij,kjl,lm->kim", res.pmat.data, t.as_float(), res.qmat.data)
    assert np.allclose(recomputed, res.canonical.data, atol=1e-12)


def test_pattern_layout():
    x = pattern(3, 5, 2)
    assert np.array_equal(x[0], np.hstack([np.eye(3), np.zeros((3, 2))]))
    assert np.array_equal(x[1], np.hstack([np.zeros((3, 2)), np.eye(3)]))
    with pytest.raises(BadShape):
        pattern(3, 5, 3)


def test_last_slice_fixed_point():
    t = Tensor3(np.stack([np.ones((2, 4)), np.hstack([np.zeros((2, 2)), np.eye(2)])]))
    res = last_slice_normalize(t)
    assert np.array_equal(res.qmat.data, np.eye(4)) and res.residual == 0.0


def test_last_slice_random():
    t = gaussian(0, 3, 2, 4)
    res = last_slice_normalize(t)
    check_transforms(t, res)
    assert np.allclose(res.canonical.data[-1], np.hstack([np.zeros((2, 2)), np.eye(2)]), atol=1e-10)


def test_last_slice_needs_full_row_rank():
    t = Tensor3(np.stack([np.ones((2, 4)), np.zeros((2, 4))]))
    with pytest.raises(DomainError):
        last_slice_normalize(t)


def test_pencil_fixed_point():
    res = pencil_canonicalize(Tensor3(pattern(2, 3, 2)))
    assert np.allclose(res.pmat.data, np.eye(2), atol=1e-12)
    assert np.allclose(res.qmat.data, np.eye(3), atol=1e-12)
    assert res.residual <= 1e-12


@given(st.integers(0, 2**32 - 1), st.sampled_from([(2, 3), (3, 5), (3, 7), (1, 3), (2, 5)]))
def test_pencil_random(seed, st_shape):
    s, t = st_shape
    ten = gaussian(seed, 2, s, t)
    res = pencil_canonicalize(ten, seed=seed)
    check_transforms(ten, res)
    assert res.residual <= RESIDUAL_TOL


def test_pencil_rejects():
    with pytest.raises(DomainError):
        pencil_canonicalize(Tensor3(np.zeros((2, 2, 3))))
    with pytest.raises(BadShape):
        pencil_canonicalize(gaussian(0, 3, 2, 3))
    with pytest.raises(BadShape):
        pencil_canonicalize(gaussian(0, 2, 3, 3))


@pytest.mark.parametrize("s,t,u", [(3, 5, 2), (2, 5, 3), (2, 6, 3), (3, 10, 4), (4, 9, 3)])
def test_multi_fixed_point(s, t, u):
    res = multi_canonicalize(Tensor3(pattern(s, t, u)))
    assert np.allclose(res.pmat.data, np.eye(s), atol=1e-12)
    assert np.allclose(res.qmat.data, np.eye(t), atol=1e-12)
    assert res.residual <= 1e-12


def test_multi_block_structure():
    # s=2, t=6, u=3: v=2, so M is 2x2 with its top two rows zero, i.e. M = O
    ten = gaussian(5, 3, 2, 6)
    res = multi_canonicalize(ten)
    check_transforms(ten, res)
    assert np.allclose(res.canonical.data, pattern(2, 6, 3), atol=1e-8)


def test_multi_keeps_free_block_when_v_small():
    # s=3, t=7, u=3: v=1, M is 3x3 with only its first row forced to zero
    ten = gaussian(11, 3, 3, 7)
    res = multi_canonicalize(ten)
    canon = res.canonical.data
    x = pattern(3, 7, 3)
    assert np.allclose(canon[1:], x[1:], atol=1e-8)
    assert np.allclose(canon[0][:, :4], x[0][:, :4], atol=1e-8)
    assert np.allclose(canon[0][0, 4:], 0, atol=1e-8)
    assert np.abs(canon[0][1:, 4:]).max() > 1e-3


@given(st.integers(0, 2**32 - 1), st.sampled_from([(3, 5, 2), (2, 5, 3), (3, 8, 3), (2, 7, 4)]))
def test_multi_random(seed, shape):
    s, t, u = shape
    ten = gaussian(seed, u, s, t)
    try:
        res = multi_canonicalize(ten, seed=seed)
    except DomainError:
        # rare near-boundary samples; success rates are checked separately
        assume(False)
    check_transforms(ten, res)
    assert res.residual <= RESIDUAL_TOL


def test_multi_rejects():
    with pytest.raises(BadShape):
        multi_canonicalize(gaussian(0, 3, 3, 5))
    with pytest.raises(DomainError):
        multi_canonicalize(Tensor3(np.zeros((3, 2, 5))))


def test_result_serializes():
    doc = pencil_canonicalize(gaussian(1, 2, 2, 3)).to_dict()
    assert set(doc) == {"P", "Q", "canonical", "residual", "condP", "condQ"}


@given(st.integers(0, 2**32 - 1))
def test_transforms_invertible_and_flattenings_preserved(seed):
    from rankscope.tensor import flatten_ranks

    ten = gaussian(seed, 3, 4, 9)
    try:
        res = multi_canonicalize(ten, seed=seed)
    except DomainError:
        assume(False)
    pm = res.pmat.data
    assert np.abs(pm @ np.linalg.inv(pm) - np.eye(4)).max() <= 1e-10
    assert np.isfinite(res.cond_p) and np.isfinite(res.cond_q)
    assert flatten_ranks(res.canonical) == flatten_ranks(ten)


def test_generic_success_rate_4x9x3():
    hits = 0
    for i in range(200):
        try:
            hits += multi_canonicalize(gaussian(i, 3, 4, 9), seed=i).residual <= RESIDUAL_TOL
        except DomainError:
            pass
    assert hits >= 190
