import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankscope.errors import BadIndex, InvalidFamily, NotConstructible
from rankscope.hurwitz_radon import (
    A,
    E2,
    HRFamily,
    ans_tensor,
    hr_base,
    hr_compose,
    hr_double,
    hr_family,
    load_family,
    rho,
    save_family,
    validate_hr,
)
from rankscope.tensor import Mat, kron


def test_rho_values():
    assert [rho(n) for n in (1, 2, 4, 6, 8, 12, 16, 32, 64, 128)] == [1, 2, 4, 2, 8, 4, 9, 10, 12, 16]
    with pytest.raises(BadIndex):
        rho(0)


@given(st.integers(0, 200), st.integers(0, 30))
def test_rho_depends_only_on_two_adic_part(a, k):
    assert rho((2 * a + 1) * 2**k) == rho(2**k)


@given(st.integers(0, 40))
def test_rho_periodicity(k):
    assert rho(2 ** (k + 4)) == rho(2**k) + 8


def test_base_families():
    assert hr_base(2).members == (A,)
    for order, size in ((2, 1), (4, 3), (8, 7)):
        fam = hr_base(order)
        assert len(fam) == size and validate_hr(fam)
    with pytest.raises(BadIndex):
        hr_base(16)


def test_double_and_compose():
    assert len(hr_double(hr_base(2))) == 2
    assert hr_double(HRFamily(1, ())).members == (A,)
    sixteen = hr_double(hr_base(8))
    assert sixteen.order == 16 and len(sixteen) == 8 and validate_hr(sixteen)
    assert len(hr_compose(hr_base(8), HRFamily(1, ()))) == 8
    c32 = hr_compose(hr_base(8), hr_base(2))
    assert c32.order == 32 and len(c32) == 9 and validate_hr(c32)
    c128 = hr_compose(hr_base(8), hr_base(8))
    assert c128.order == 128 and len(c128) == 15 and validate_hr(c128)


def test_combinators_reject_invalid_input():
    with pytest.raises(InvalidFamily):
        hr_double(HRFamily(2, (E2,)))


@pytest.mark.parametrize("order", [1, 2, 3, 6, 12, 16, 24, 48])
def test_family_is_maximal_and_valid(order):
    fam = hr_family(order)
    assert fam.order == order and len(fam) == rho(order) - 1 and validate_hr(fam)


def test_family_small_orders():
    assert hr_family(1).members == ()
    assert hr_family(6).members == (kron(Mat.identity(3), A),)


def test_validate_rejects():
    assert not validate_hr(HRFamily(2, (E2,)))
    assert not validate_hr(HRFamily(2, (A, A)))


def test_ans_examples():
    assert ans_tensor(2, 2).slices == (A, E2)
    assert ans_tensor(5, 1).slices == (Mat.identity(5),)
    with pytest.raises(NotConstructible):
        ans_tensor(4, 5)


@given(st.sampled_from([2, 4, 8]), st.data())
def test_ans_gram_identity(n, data):
    t = ans_tensor(n, rho(n))
    x = data.draw(st.lists(st.integers(-50, 50), min_size=t.p, max_size=t.p))
    comb = sum((Mat.exact(s.data * c) for s, c in zip(t.slices[1:], x[1:])), Mat.exact(t.slices[0].data * x[0]))
    expect = Mat.identity(n).scale(sum(v * v for v in x))
    assert comb.T @ comb == expect


def test_ans_determinant_is_sum_of_squares():
    t = ans_tensor(2, 2)
    for x1, x2 in ((1, 0), (3, -4), (2, 7)):
        mat = x1 * t.data[0].astype(float) + x2 * t.data[1].astype(float)
        assert round(np.linalg.det(mat)) == x1 * x1 + x2 * x2


def test_family_json_round_trip(tmp_path):
    fam = hr_family(16)
    path = tmp_path / "fam.json"
    save_family(fam, path)
    assert load_family(path) == fam


@given(st.sampled_from([4, 8, 16, 24, 32]), st.data())
def test_subfamilies_validate(order, data):
    fam = hr_family(order)
    k = data.draw(st.integers(0, len(fam)))
    assert validate_hr(fam.subfamily(k))


@pytest.mark.parametrize("order", [2, 4, 8])
def test_double_and_compose_bookkeeping(order):
    fam = hr_base(order)
    doubled = hr_double(fam)
    assert doubled.order == 2 * order and len(doubled) == len(fam) + 1
    other = hr_base(2)
    composed = hr_compose(fam, other)
    assert composed.order == 2 * order * 2 and len(composed) == len(fam) + len(other) + 1
