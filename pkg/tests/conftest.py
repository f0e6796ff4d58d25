import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rankscope.hurwitz_radon import A, E2
from rankscope.tensor import Tensor3

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def e2_a() -> Tensor3:
    """The 2x2x2 tensor (E_2; A) of real rank 3."""
    return Tensor3.from_slices([E2, A])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
