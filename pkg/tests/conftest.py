import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from mvno_pricing.market import reference_params
from mvno_pricing.oracle import sample_params

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def p0():
    return reference_params()


def markets(**fixed):
    """Hypothesis strategy: a random valid market, reproducible from its seed."""
    return st.integers(0, 2**32 - 1).map(lambda seed: sample_params(np.random.default_rng(seed), **fixed))
