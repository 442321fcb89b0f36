import numpy as np
import pytest

from couette_gevrey.coordinates import GammaStack, couette_state
from couette_gevrey.functionals import EvalContext
from couette_gevrey.spectral import ChannelGrid
from couette_gevrey.weights import WeightParams, build_cascade, eval_q


@pytest.fixture(scope="session")
def grid64():
    return ChannelGrid(64, kmax=8)


@pytest.fixture(scope="session")
def grid96():
    return ChannelGrid(96, kmax=8)


@pytest.fixture(scope="session")
def params():
    return WeightParams()


@pytest.fixture(scope="session")
def cascade(params):
    return build_cascade(params, 34)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def make_ctx(grid, params, cascade, nu=1e-3, floor=0.0):
    return EvalContext(grid, params, cascade, nu=nu, floor_rel=floor, tail_multiplier=0.0)


@pytest.fixture()
def ctx64(grid64, params, cascade):
    return make_ctx(grid64, params, cascade)


def random_stack(grid, rng, k=2, t=0.7, M=4, modes=6):
    """A directly constructed stack of random band-limited complex fields."""
    theta = np.arccos(np.clip(grid.nodes, -1, 1))
    gamma_pows = []
    for _ in range(M + 1):
        coef = rng.normal(size=modes) + 1j * rng.normal(size=modes)
        vals = sum(c * np.cos(j * theta) for j, c in enumerate(coef))
        gamma_pows.append(vals.astype(complex))
    q = eval_q(grid.nodes)
    return GammaStack(
        k=k,
        t=t,
        M=M,
        grid=grid,
        gamma_pows=gamma_pows,
        q_pows=np.array([q**n for n in range(M + 1)]),
        tails=np.zeros(M + 1),
    )
