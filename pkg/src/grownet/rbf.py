"""Scalar residual chain with Gaussian-bump layers: the width-1 proof of concept.

Each layer maps x -> x + g(x; theta) with three parameters,

    g(x; theta) = t3 * exp(-(t1*x + t2 - c)^2 / 2) - t3 * exp(-c^2 / 2),

so theta = 0 is an exact identity with zero first derivatives in both x and
theta. The insertion-sensitivity matrix at interface l (after layer l, with
candidates l = 1..layer_count) is the closed-form symmetric 3x3

    Q_l = (c1 / 2) * [[0, 0, A], [0, 0, B], [A, B, 0]]

with c1 = c * exp(-c^2 / 2), A = sum_s p_{s,l} x_{s,l}, B = sum_s p_{s,l}.
Because the width is 1 there is a single block per interface and the combined
width m is always 1 (or 0 when no positive eigenvalue exists).

The heavy sweeps (forward, adjoint, whole training epochs) run in the
backend-selected kernels from :mod:`grownet.kernels`.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import Dataset
from .linalg import NumericError, jacobi_eigh
from .topo import InterfaceReport, TopoReport


def _as_vector(a, name):
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64)).ravel()
    if a.ndim != 1:
        raise ValueError("%s must be 1-d" % name)
    return a


class RbfChain:
    """Ordered Gaussian-bump layers with a shared activation parameter c."""

    def __init__(self, thetas, c=0.1):
        thetas = np.array(thetas, dtype=np.float64)
        if thetas.ndim != 2 or thetas.shape[1] != 3:
            raise ValueError("thetas must be (layer_count, 3)")
        if not np.isfinite(thetas).all():
            raise ValueError("thetas must be finite")
        if c == 0.0:
            raise ValueError("c must be nonzero")
        self.thetas = thetas
        self.c = float(c)
        self.trainable_rows = np.ones(thetas.shape[0], dtype=bool)

    @property
    def layer_count(self):
        return self.thetas.shape[0]

    def param_count(self):
        return int(self.thetas.size)

    def clone(self):
        out = RbfChain(self.thetas.copy(), self.c)
        out.trainable_rows = self.trainable_rows.copy()
        return out

    def snapshot(self):
        return self.thetas.copy()

    def restore(self, snap):
        self.thetas[:] = snap

    def forward_states(self, inputs):
        """States x_{s,t} for t = 0..layer_count, shape (layer_count+1, S)."""
        x = _as_vector(inputs, "inputs")
        states = np.empty((self.layer_count + 1, x.shape[0]))
        kernels.rbf_states(x, self.thetas, self.c, states)
        return states

    def predict(self, inputs):
        return self.forward_states(inputs)[-1]

    def loss(self, inputs, labels):
        x = _as_vector(inputs, "inputs")
        y = _as_vector(labels, "labels")
        if x.shape != y.shape:
            raise ValueError("inputs and labels must have the same length")
        j = float(kernels.rbf_loss(x, y, self.thetas, self.c))
        if not np.isfinite(j):
            raise NumericError("non-finite chain loss")
        return j


@dataclass
class RbfTrace:
    """States, adjoints (both (layer_count+1, S)), and parameter gradients."""

    inputs: np.ndarray
    labels: np.ndarray
    states: np.ndarray
    adjoints: np.ndarray
    param_grads: np.ndarray
    loss: float


def chain_trace(chain, inputs, labels):
    """Forward and adjoint sweeps in one pass; gradients follow the descent
    convention (gradient of the mean loss J)."""
    x = _as_vector(inputs, "inputs")
    y = _as_vector(labels, "labels")
    if x.shape != y.shape:
        raise ValueError("inputs and labels must have the same length")
    states = np.empty((chain.layer_count + 1, x.shape[0]))
    adjoints = np.empty_like(states)
    grads = np.empty((chain.layer_count, 3))
    j = float(kernels.rbf_trace(x, y, chain.thetas, chain.c, states, adjoints, grads))
    if not np.isfinite(j):
        raise NumericError("non-finite chain loss")
    return RbfTrace(inputs=x, labels=y, states=states, adjoints=adjoints,
                    param_grads=grads, loss=j)


def rbf_block(trace, position, c):
    """The closed-form 3x3 sensitivity block at one interface."""
    lcount = trace.states.shape[0] - 1
    if not 1 <= position <= lcount:
        raise ValueError("interface must be in 1..%d, got %d" % (lcount, position))
    x = trace.states[position]
    p = trace.adjoints[position]
    c1 = c * np.exp(-0.5 * c * c)
    a = float(p @ x)
    b = float(p.sum())
    half = 0.5 * c1
    return np.array([
        [0.0, 0.0, half * a],
        [0.0, 0.0, half * b],
        [half * a, half * b, 0.0],
    ])


def scan_chain(chain, inputs, labels):
    """Rank every chain interface by the top eigenvalue of its block.

    Mirrors the network scan with m forced to 1: score = lambda_top, chosen is
    the strictly greatest score over ascending l, and an interface with no
    positive eigenvalue contributes no direction (m = 0).
    """
    trace = chain_trace(chain, inputs, labels)
    interfaces = []
    chosen = None
    max_score = -np.inf
    for l in range(1, chain.layer_count + 1):
        eig = jacobi_eigh(rbf_block(trace, l, chain.c))
        lam = float(eig.values[0])
        if lam > 0.0:
            m_used, phi = 1, eig.vectors[:, 0].copy()
        else:
            m_used, phi = 0, None
        interfaces.append(InterfaceReport(
            l=l, lam=lam, m=m_used, top_block_eigs=[lam], phi=phi, score=lam,
        ))
        if m_used > 0 and lam > max_score:
            max_score = lam
            chosen = l
    if chosen is None:
        max_score = max((e.score for e in interfaces), default=-np.inf)
    return TopoReport(interfaces=interfaces, chosen=chosen, mode="fixed",
                      max_score=float(max_score))


def insert_chain(chain, position, direction, eps):
    """New chain with a layer of parameters eps * direction spliced in after
    layer `position` (direction: unit vector of length 3, unless eps == 0)."""
    if not 1 <= position <= chain.layer_count:
        raise ValueError(
            "insertion position must be in 1..%d, got %d" % (chain.layer_count, position)
        )
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    if eps == 0.0 and direction is None:
        row = np.zeros(3)
    else:
        direction = np.asarray(direction, dtype=np.float64)
        if direction.shape != (3,):
            raise ValueError("direction must have length 3")
        if eps != 0.0 and abs(np.linalg.norm(direction) - 1.0) > 1e-10:
            raise ValueError("direction must be a unit vector")
        row = eps * direction
    out = RbfChain(np.insert(chain.thetas, position, row, axis=0), chain.c)
    out.trainable_rows = np.insert(chain.trainable_rows, position, True)
    return out


def numerical_derivative(chain, inputs, labels, position, direction, eps_list):
    """(J(chain) - J(chain with eps*direction at position)) / eps^2 for each
    eps in the positive, strictly descending eps_list."""
    eps_arr = [float(e) for e in eps_list]
    if not eps_arr:
        raise ValueError("eps_list must be non-empty")
    if any(e <= 0.0 for e in eps_arr):
        raise ValueError("eps_list entries must be positive")
    if any(b >= a for a, b in zip(eps_arr, eps_arr[1:])):
        raise ValueError("eps_list must be strictly descending")
    j0 = chain.loss(inputs, labels)
    out = []
    for eps in eps_arr:
        grown = insert_chain(chain, position, direction, eps)
        out.append((j0 - grown.loss(inputs, labels)) / (eps * eps))
    return np.array(out)


def make_truth_chain(rng, layers=15, theta_std=np.sqrt(3.0), c=0.1):
    """Ground-truth chain with layer parameters drawn from N(0, theta_std^2)."""
    return RbfChain(theta_std * rng.standard_normal((layers, 3)), c)


def gen_rbf_dataset(seed, train=5000, val=500, test=1000, truth=None,
                    x_low=-2.0, x_high=2.0):
    """Synthetic scalar datasets labeled by a ground-truth chain.

    Draws the truth (15 layers, theta ~ N(0, 3I), c = 0.1) from the seeded
    stream unless one is supplied, then samples inputs uniformly on
    [x_low, x_high]. Returns (train, val, test, truth); datasets store columns
    x0 and y0. Deterministic per seed.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    if truth is None:
        truth = make_truth_chain(rng)
    splits = []
    for size in (train, val, test):
        x = rng.uniform(x_low, x_high, size=size)
        y = truth.predict(x)
        splits.append(Dataset(x.reshape(-1, 1), y.reshape(-1, 1)))
    return splits[0], splits[1], splits[2], truth
