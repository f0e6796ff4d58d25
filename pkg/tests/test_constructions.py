import numpy as np
import pytest

from rankscope.afr import afr_check, exact_certify
from rankscope.constructions import (
    CondSeq,
    build_misc,
    build_misc_parent,
    case_dims,
    load_seq,
    normalize_last,
    save_seq,
    seq_to_stacked,
    sp_afr_check,
    sp_afr_from_ans,
    sp_afr_to_seq,
    sp_afr_verdict,
)
from rankscope.errors import BadCongruence, BadIndex, BadShape, PreconditionViolation
from rankscope.hurwitz_radon import A, E2, P, ans_tensor
from rankscope.tensor import Kind, Mat, Tensor3, kron

CASES = [("M3", 3), ("M3", 7), ("M4", 6), ("M4", 10), ("M6", 12), ("M6", 20), ("M10", 24), ("M10", 56)]


@pytest.mark.parametrize("case,n", CASES)
def test_cases_are_special_afr(case, n):
    m, l = case_dims(case)
    t = build_misc(case, n)
    assert t.shape == (n + l, n, m)
    assert np.all(t.data[2:, n:, :] == 0)
    assert sp_afr_check(t, l)
    parent, parent_l = build_misc_parent(case, n)
    assert parent_l == l and parent.m == parent.n and exact_certify(parent)


def test_m3_literal_construction():
    expected = Tensor3.from_slices([kron(A, E2), kron(P, A), Mat.identity(4)]).data[:, :, :3]
    assert build_misc("M3", 3) == Tensor3(expected)


def test_m4_zero_block():
    t = build_misc("M4", 6)
    assert t.shape == (8, 6, 4)
    assert np.all(t.data[2, 6:, :] == 0)


def test_bad_inputs():
    with pytest.raises(BadCongruence):
        build_misc("M3", 4)
    with pytest.raises(BadIndex):
        build_misc("M5", 3)


def test_sp_afr_examples():
    assert sp_afr_check(ans_tensor(4, 4), 0)
    t = build_misc("M3", 3).data.copy()
    t[2, 3, 0] = 1
    report = sp_afr_verdict(Tensor3(t), 1)
    assert not report.ok and not report.zero_rows
    with pytest.raises(BadShape):
        sp_afr_check(ans_tensor(4, 4), 1)


def test_sp_afr_from_ans_pads_rows():
    t = sp_afr_from_ans(4, 3, 0)
    assert t == ans_tensor(4, 3)


def test_stacked_shape_and_degenerate_partition():
    b1 = Mat.exact([[1, 2], [3, 4]])
    b2 = Mat.exact([[5, 6], [7, 8]])
    seq = CondSeq(2, 0, 3, Mat.exact(np.hstack([b1.data, b2.data])), (Mat.identity(2),))
    st = seq_to_stacked(seq)
    assert st.shape == (4, 2, 3)
    assert st.slices[0] == Mat.exact(np.vstack([b1.data, b1.data]))
    assert st.slices[1] == Mat.exact(np.vstack([b2.data, b2.data]))


def test_condseq_validation():
    with pytest.raises(BadShape):
        CondSeq(3, 1, 3, Mat.zeros(3, 4), (Mat.identity(3),))
    with pytest.raises(BadShape):
        CondSeq(3, 3, 3, Mat.zeros(3, 3), (Mat.identity(3),))


@pytest.mark.parametrize("case,n", [("M3", 3), ("M3", 7), ("M4", 6)])
def test_extraction_round_trip(case, n):
    _, l = case_dims(case)
    seq = sp_afr_to_seq(build_misc(case, n), l)
    assert (seq.n, seq.l) == (n, l)
    verdict = afr_check(seq_to_stacked(seq))
    assert verdict.certified


def test_extraction_l_zero_is_trivial_split():
    t = ans_tensor(4, 3)
    seq = sp_afr_to_seq(t, 0)
    assert seq.a == Mat.exact(np.hstack([t.data[0], t.data[1]]))
    assert seq.extras == (t.slices[2],)


def test_extraction_rejects_non_afr():
    t = Tensor3(np.stack([np.eye(3), np.eye(3), np.eye(3)]).astype(np.int64))
    with pytest.raises(PreconditionViolation):
        sp_afr_to_seq(t, 0)


def test_normalize_last_keeps_afr():
    seq = sp_afr_to_seq(build_misc("M3", 3), 1)
    norm = normalize_last(seq)
    assert np.allclose(norm.extras[-1].data, np.eye(3))
    assert afr_check(seq_to_stacked(norm)).certified


def test_seq_json_round_trip(tmp_path):
    seq = sp_afr_to_seq(ans_tensor(4, 3), 0)
    save_seq(seq, tmp_path / "s.json")
    back = load_seq(tmp_path / "s.json")
    assert back == seq and back.kind is Kind.EXACT


@pytest.mark.parametrize("case,n", CASES)
def test_entries_are_signs(case, n):
    assert set(np.unique(build_misc(case, n).data.astype(int))) <= {-1, 0, 1}


@pytest.mark.parametrize("n,m", [(4, 3), (4, 4), (8, 5)])
def test_row_padding_keeps_special_afr(n, m):
    for l in range(n):
        assert sp_afr_check(sp_afr_from_ans(n, m, l), l)


@pytest.mark.parametrize("case,n", [("M6", 12), ("M10", 24)])
def test_extraction_round_trip_many_slices(case, n):
    # beyond four slices no grid certificate exists; the stacked tensor must survive falsification
    _, l = case_dims(case)
    seq = sp_afr_to_seq(build_misc(case, n), l)
    assert not afr_check(seq_to_stacked(seq)).falsified
