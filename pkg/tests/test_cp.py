import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rankscope.cp import FIT_TOL, cp_fit
from rankscope.errors import BadIndex
from rankscope.tensor import Tensor3


def low_rank(seed, shape, r):
    gen = np.random.default_rng(seed)
    p, m, n = shape
    a, b, c = gen.standard_normal((m, r)), gen.standard_normal((n, r)), gen.standard_normal((p, r))
    return Tensor3(np.einsum("ir,jr,kr->kij", a, b, c))


def test_rank_one_fits_tightly():
    fit = cp_fit(low_rank(0, (3, 4, 2), 1), 1)
    assert fit.found and fit.residual <= 1e-10


def test_e2_a_needs_three_terms(e2_a):
    two = cp_fit(e2_a, 2, restarts=20)
    assert not two.found and two.residual >= 0.1
    assert two.to_dict()["status"] == "NoFit" and "bestResidual" in two.to_dict()
    three = cp_fit(e2_a, 3, restarts=20)
    assert three.found and three.residual <= FIT_TOL


@given(st.integers(0, 10_000), st.integers(1, 3))
def test_generated_low_rank_tensors_fit(seed, r):
    fit = cp_fit(low_rank(seed, (3, 4, 3), r), r, restarts=10, seed=seed)
    assert fit.found


def test_zero_tensor_is_trivially_fit():
    assert cp_fit(Tensor3(np.zeros((2, 2, 2))), 1).found


def test_seeding_is_deterministic():
    t = Tensor3(np.random.default_rng(4).standard_normal((3, 3, 5)))
    assert cp_fit(t, 4, restarts=3, seed=9) == cp_fit(t, 4, restarts=3, seed=9)


def test_bad_arguments(e2_a):
    with pytest.raises(BadIndex):
        cp_fit(e2_a, 0)
    with pytest.raises(BadIndex):
        cp_fit(e2_a, 2, restarts=0)
