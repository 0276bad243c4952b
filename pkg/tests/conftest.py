import numpy as np
import pytest
from hypothesis import settings, strategies as st

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

seeds = st.integers(0, 2**32 - 1)
modes = st.integers(1, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
