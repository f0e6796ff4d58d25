import csv
import io

import numpy as np
import pytest

from rankscope.constructions import build_misc, sp_afr_to_seq
from rankscope.errors import BadShape
from rankscope.hurwitz_radon import E2, ans_tensor
from rankscope.tensor import Kind, Mat, Tensor3
from rankscope.typical_rank import (
    STATUSES,
    DetectorStatus,
    detector,
    detector_params,
    lower_bound_check,
    mc_experiment,
    rank_leq_oracle,
    rank_nn2,
    sample_tensor,
    stacked_test_tensor,
    witness_from_seq,
)


def test_detector_params():
    assert detector_params(3, 5, 3) == (1, 2)
    assert detector_params(4, 8, 3) == (0, 4)
    with pytest.raises(BadShape):
        detector_params(3, 3, 3)
    with pytest.raises(BadShape):
        detector_params(3, 7, 3)


def test_witness_is_certified_higher_rank():
    seq = sp_afr_to_seq(build_misc("M3", 3), 1)
    y = witness_from_seq(seq)
    assert y.shape == (3, 5, 3)
    v = detector(y)
    assert v.status is DetectorStatus.HIGHER_RANK and v.certified


def test_witness_l_zero():
    seq = sp_afr_to_seq(ans_tensor(4, 3), 0)
    v = detector(witness_from_seq(seq))
    assert v.status is DetectorStatus.HIGHER_RANK and v.certified


def test_zero_first_slice_is_outside_domain():
    t = sample_tensor(3, 3, 5, 0, 0).data.copy()
    t[0] = 0
    assert detector(Tensor3(t)).status is DetectorStatus.DOMAIN_ERROR


def test_stacked_tensor_pattern():
    z = np.zeros((3, 3, 5))
    z[0, :, :3] = np.eye(3)
    z[1, :, 2:] = np.eye(3)
    z[2] = np.arange(15.0).reshape(3, 5)
    stacked, cond_v = stacked_test_tensor(z, 3, 1)
    assert stacked.shape == (3, 6, 3)
    assert cond_v == pytest.approx(1.0)
    assert np.array_equal(stacked[-1], np.vstack([np.eye(3), np.eye(3)]))
    assert np.all(stacked[0][:3, 2:] == 0) and np.all(stacked[1][3:, :1] == 0)


def test_detector_is_invariant_under_equivalence(rng):
    seq = sp_afr_to_seq(build_misc("M3", 3), 1)
    y = witness_from_seq(seq).data
    p = rng.standard_normal((3, 3)) + 2 * np.eye(3)
    q = rng.standard_normal((5, 5)) + 3 * np.eye(5)
    moved = Tensor3(np.einsum("ij,kjl,lm->kim", p, y, q))
    assert detector(moved).status is DetectorStatus.HIGHER_RANK


def test_rank_nn2_examples(e2_a):
    assert rank_nn2(e2_a) == 3
    assert rank_nn2(Tensor3.from_slices([E2, Mat.exact([[1, 0], [0, 2]])])) == 2
    jordan = Tensor3.from_slices([E2, Mat.exact([[0, 1], [0, 0]])])
    assert rank_nn2(jordan) == 3
    assert rank_nn2(jordan.to_real()) == 3
    assert rank_nn2(e2_a.to_real()) == 3
    assert rank_nn2(Tensor3.from_slices([Mat.zeros(2, 2), E2])) is None
    with pytest.raises(BadShape):
        rank_nn2(ans_tensor(4, 3))


def test_rank_nn2_agrees_with_oracle():
    jordan = Tensor3.from_slices([E2, Mat.exact([[0, 1], [0, 0]])])
    assert not rank_leq_oracle(jordan, 2).found
    assert rank_leq_oracle(jordan, 3).found


def test_rank_nn2_exact_higher_order():
    # two 2x2 rotation blocks with the same eigenvalue pair: two non-real blocks
    rot = np.array([[0, 1], [-1, 0]])
    m = np.kron(np.eye(2, dtype=np.int64), rot)
    assert rank_nn2(Tensor3(np.stack([np.eye(4, dtype=np.int64), m]))) == 6


def test_lower_bound_check_examples(e2_a):
    a, b, c = np.array([1.0, 2.0]), np.array([1.0, -1.0, 3.0]), np.array([2.0, 1.0])
    assert lower_bound_check(Tensor3(np.einsum("k,i,j->kij", c, a, b)))
    assert lower_bound_check(e2_a)
    gen = np.random.default_rng(0)
    for _ in range(20):
        assert lower_bound_check(Tensor3(gen.integers(-3, 4, size=(2, 2, 2)), Kind.EXACT))


def test_sample_tensor_is_indexed_by_seed_and_index():
    a = sample_tensor(3, 3, 5, 42, 7)
    assert a.shape == (3, 5, 3)
    assert a == sample_tensor(3, 3, 5, 42, 7)
    assert a != sample_tensor(3, 3, 5, 42, 8)


def test_mc_tallies_and_formats():
    summary = mc_experiment(3, 3, 5, 12, seed=1, crosscheck=True, workers=1)
    assert sum(summary.counts.values()) == 12 and set(summary.counts) == set(STATUSES)
    doc = summary.to_dict(with_runtime=False)
    assert "runtime" not in doc and doc["shape"] == {"m": 3, "n": 3, "p": 5}
    rows = list(csv.DictReader(io.StringIO(summary.to_csv(with_runtime=False))))
    assert len(rows) == 1 and int(rows[0]["samples"]) == 12


def test_mc_independent_of_worker_count():
    one = mc_experiment(3, 3, 5, 16, seed=3, workers=1)
    many = mc_experiment(3, 3, 5, 16, seed=3, workers=3)
    assert one.to_dict(with_runtime=False) == many.to_dict(with_runtime=False)


def test_mc_rejects_bad_shape():
    with pytest.raises(BadShape):
        mc_experiment(3, 3, 3, 10)


def test_detector_equivalence_stable():
    y = witness_from_seq(sp_afr_to_seq(build_misc("M3", 3), 1)).data
    gen = np.random.default_rng(8)
    higher = domain = 0
    for trial in range(50):
        p = gen.standard_normal((3, 3))
        q = gen.standard_normal((5, 5))
        v = detector(Tensor3(np.einsum("ij,kjl,lm->kim", p, y, q)), seed=trial, restarts=16)
        higher += v.status is DetectorStatus.HIGHER_RANK
        domain += v.status is DetectorStatus.DOMAIN_ERROR
    assert higher >= 0.95 * (50 - domain)


def test_rank_nn2_matches_smallest_fit():
    from rankscope.typical_rank import smallest_fit_rank

    gen = np.random.default_rng(222)
    compared = 0
    for i in range(100):
        t = Tensor3(gen.standard_normal((2, 2, 2)))
        r = rank_nn2(t)
        if r is None:
            continue
        assert smallest_fit_rank(t, restarts=10, seed=i) == r, i
        compared += 1
    assert compared >= 90


def test_mc_domain_errors_rare():
    s = mc_experiment(3, 3, 5, 200, seed=5, workers=1)
    assert s.counts["DomainError"] <= 2
    assert s.counts["HigherRank"] + s.counts["NotInU"] + s.counts["DomainError"] == 200
