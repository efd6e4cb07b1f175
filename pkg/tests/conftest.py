import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from tworec.market import Market

# first calls into the numba kernels include compilation
settings.register_profile("tworec", deadline=None)
settings.load_profile("tworec")


def random_market(rng: np.random.Generator, I: int, J: int, cmax: int = 5, density: float = 1.0, scale: float = 1.0) -> Market:
    """Dense (or randomly thinned) market with uniform rates; ``scale`` shrinks like rates."""
    eligible = rng.random((I, J)) < density if density < 1.0 else None
    return Market.from_dense(
        rng.random(I),
        rng.random(J),
        rng.random((I, J)) * scale,
        rng.random((I, J)),
        rng.integers(1, cmax + 1, size=I),
        eligible=eligible,
    )


@st.composite
def markets(draw, max_side: int = 12, cmax: int = 4, sparse: bool = True):
    I = draw(st.integers(1, max_side))
    J = draw(st.integers(1, max_side))
    seed = draw(st.integers(0, 2**32 - 1))
    density = draw(st.sampled_from([1.0, 0.6, 0.3])) if sparse else 1.0
    rng = np.random.default_rng(seed)
    m = random_market(rng, I, J, cmax=cmax, density=density)
    if m.n_pairs == 0:
        m = random_market(rng, I, J, cmax=cmax)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
