"""Shared fixtures and oracle helpers."""

import numpy as np
import pytest

from grownet import kernels
from grownet.linalg import make_rng
from grownet.network import NetworkSpec, init_network


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    """Compile the hot kernels once so timed tests measure steady state."""
    kernels.warmup()


@pytest.fixture
def rng():
    return make_rng(12345)


def random_symmetric(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return (a + a.T) / 2.0


def random_network(rng, n0=2, nT=2, n=3, hidden=2, pair="swish+tanh",
                   loss="mse", sparsity=0.0, sigma_n=0.4):
    """A non-degenerate small network with O(1) weights."""
    spec = NetworkSpec(n0=n0, nT=nT, n=n, hidden_count=hidden,
                       activation_pair=pair, input_sparsity=sparsity,
                       loss_kind=loss)
    return init_network(spec, rng, sigma_n=sigma_n)


def random_batch(rng, size, n0, nT, loss="mse"):
    """Inputs plus labels of matching kind (one-hot rows for cross-entropy)."""
    inputs = rng.standard_normal((size, n0))
    if loss == "cross-entropy":
        labels = np.zeros((size, nT))
        labels[np.arange(size), rng.integers(0, nT, size)] = 1.0
    else:
        labels = rng.standard_normal((size, nT))
    return inputs, labels


def central_difference(f, x, step):
    """Scalar central difference of a one-parameter callable."""
    return (f(x + step) - f(x - step)) / (2.0 * step)


def fd_gradient(f, x, step):
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (f(xp) - f(xm)) / (2.0 * step)
    return grad
