"""Residual fully-connected networks: forward states, adjoint sweeps, layer insertion.

Architecture: an input map n0 -> n (tanh, with an optional frozen sparsity
mask), hidden_count residual layers x <- x + sigma(Wx + b) at constant width
n, and a linear output map n -> nT. The per-sample state trace is indexed by
interfaces t = 0..T: t=0 is the post-input state, t=1..hidden_count follow
each residual layer, and t=T=hidden_count+1 is the network output.

The adjoint sweep propagates p_T = -(1/S) dPhi(x_T) backward through the
transpose Jacobians; parameter gradients are gradients of the mean loss J
(descent convention), verified against finite differences in the test suite.

New residual layers are inserted at interfaces l = 1..hidden_count. A zero
inserted layer is an exact identity: states, loss, and every pre-existing
gradient are bit-identical, and the inserted layer's own gradient is exactly
zero because the activation has exactly zero slope at the origin.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .activations import ActivationSpec, make_admissible
from .linalg import NumericError

LOSS_KINDS = ("mse", "cross-entropy")


@dataclass(frozen=True)
class NetworkSpec:
    """Shape and semantics of a residual network."""

    n0: int
    nT: int
    n: int
    hidden_count: int
    activation_pair: str
    input_sparsity: float = 0.0
    loss_kind: str = "mse"

    def __post_init__(self):
        if min(self.n0, self.nT, self.n) < 1:
            raise ValueError("dimensions n0, nT, n must be >= 1")
        if self.hidden_count < 0:
            raise ValueError("hidden_count must be >= 0")
        if not 0.0 <= self.input_sparsity < 1.0:
            raise ValueError("input_sparsity must lie in [0, 1)")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError("loss_kind must be one of %s" % (LOSS_KINDS,))


@dataclass
class Trace:
    """States, adjoints, and parameter gradients from one forward/backward sweep."""

    inputs: np.ndarray
    labels: np.ndarray
    states: list
    z_in: np.ndarray
    zs: list
    loss: float
    adjoints: list = None
    param_grads: list = None


def loss_values(y, labels, kind):
    """Per-sample loss Phi(y)."""
    if kind == "mse":
        d = y - labels
        return 0.5 * np.sum(d * d, axis=1)
    m = y.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.sum(np.exp(y - m), axis=1))
    return lse - np.sum(y * labels, axis=1)


def loss_gradients(y, labels, kind):
    """Per-sample gradient dPhi/dy."""
    if kind == "mse":
        return y - labels
    m = y.max(axis=1, keepdims=True)
    e = np.exp(y - m)
    return e / e.sum(axis=1, keepdims=True) - labels


class Network:
    """A residual network with explicit parameter arrays."""

    def __init__(self, spec, act, w_in, b_in, mask_in, ws, bs, w_out, b_out,
                 input_trainable=True, hidden_trainable=None):
        self.spec = spec
        self.act = act
        self.w_in = w_in
        self.b_in = b_in
        self.mask_in = mask_in
        self.ws = list(ws)
        self.bs = list(bs)
        self.w_out = w_out
        self.b_out = b_out
        self.input_trainable = input_trainable
        self.hidden_trainable = (
            list(hidden_trainable) if hidden_trainable is not None
            else [True] * len(self.ws)
        )

    @property
    def hidden_count(self):
        return len(self.ws)

    def params(self):
        """Parameter arrays in canonical order (views, not copies)."""
        out = [self.w_in, self.b_in]
        for w, b in zip(self.ws, self.bs):
            out.extend((w, b))
        out.extend((self.w_out, self.b_out))
        return out

    def trainable_flags(self):
        """Per-parameter-array trainability, aligned with params()."""
        flags = [self.input_trainable, self.input_trainable]
        for t in self.hidden_trainable:
            flags.extend((t, t))
        flags.extend((True, True))
        return flags

    def param_count(self):
        """Trainable scalar count (input entries removed by the mask excluded)."""
        total = sum(p.size for p in self.params())
        return int(total - (self.mask_in == 0.0).sum())

    def clone(self):
        return Network(
            self.spec, self.act, self.w_in.copy(), self.b_in.copy(),
            self.mask_in.copy(), [w.copy() for w in self.ws],
            [b.copy() for b in self.bs], self.w_out.copy(), self.b_out.copy(),
            self.input_trainable, list(self.hidden_trainable),
        )

    def snapshot(self):
        return [p.copy() for p in self.params()]

    def restore(self, snap):
        for p, s in zip(self.params(), snap):
            p[:] = s

    def loss(self, inputs, labels):
        return forward(self, inputs, labels)[1]


def init_network(spec, rng, sigma_n=0.01, act=None):
    """Fresh network with N(0, sigma_n^2) parameters and a seeded sparsity mask.

    The mask removes round(input_sparsity * n * n0) input-map entries, chosen
    by a seeded permutation; those entries stay exactly zero forever.
    """
    act = act or make_admissible(spec.activation_pair)
    n, n0, nT = spec.n, spec.n0, spec.nT
    w_in = sigma_n * rng.standard_normal((n, n0))
    b_in = sigma_n * rng.standard_normal(n)
    mask_in = np.ones((n, n0))
    k = int(round(spec.input_sparsity * n * n0))
    if k > 0:
        drop = rng.permutation(n * n0)[:k]
        mask_in.ravel()[drop] = 0.0
        w_in *= mask_in
    ws, bs = [], []
    for _ in range(spec.hidden_count):
        ws.append(sigma_n * rng.standard_normal((n, n)))
        bs.append(sigma_n * rng.standard_normal(n))
    w_out = sigma_n * rng.standard_normal((nT, n))
    b_out = sigma_n * rng.standard_normal(nT)
    return Network(spec, act, w_in, b_in, mask_in, ws, bs, w_out, b_out)


def forward(net, inputs, labels):
    """Run the network on a batch, recording states at every interface.

    Returns (trace, J) with J the mean per-sample loss. Raises ValueError on
    shape mismatch and NumericError (naming the first bad interface) if a
    non-finite value appears.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    spec = net.spec
    if inputs.ndim != 2 or inputs.shape[1] != spec.n0:
        raise ValueError("inputs must be (S, %d), got %r" % (spec.n0, inputs.shape))
    if labels.shape != (inputs.shape[0], spec.nT):
        raise ValueError(
            "labels must be (%d, %d), got %r" % (inputs.shape[0], spec.nT, labels.shape)
        )
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        z_in = inputs @ net.w_in.T + net.b_in
        x = np.tanh(z_in)
        states = [x]
        zs = []
        for w, b in zip(net.ws, net.bs):
            z = states[-1] @ w.T + b
            zs.append(z)
            states.append(states[-1] + net.act.eval(z))
        y = states[-1] @ net.w_out.T + net.b_out
        states.append(y)
        per_sample = loss_values(y, labels, spec.loss_kind)
        loss = float(per_sample.mean())
    if not np.isfinite(loss):
        for t, s in enumerate(states):
            if not np.isfinite(s).all():
                raise NumericError("non-finite state at interface %d" % t)
        raise NumericError("non-finite loss")
    trace = Trace(inputs=inputs, labels=labels, states=states, z_in=z_in,
                  zs=zs, loss=loss)
    return trace, loss


def adjoint(net, trace):
    """Backward sweep: fills trace.adjoints and trace.param_grads, returns trace.

    adjoints[t] holds p_t for every interface; param_grads aligns with
    net.params() and contains the gradient of the mean loss J.
    """
    if trace.states is None or len(trace.states) != net.hidden_count + 2:
        raise ValueError("trace does not match the network (run forward first)")
    s = trace.inputs.shape[0]
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        y = trace.states[-1]
        p_out = -loss_gradients(y, trace.labels, net.spec.loss_kind) / s
        adjoints = [None] * (net.hidden_count + 2)
        adjoints[-1] = p_out
        g_w_out = -(p_out.T @ trace.states[-2])
        g_b_out = -p_out.sum(axis=0)
        p = p_out @ net.w_out
        adjoints[net.hidden_count] = p
        g_hidden = [None] * net.hidden_count
        for t in range(net.hidden_count - 1, -1, -1):
            q = net.act.d1(trace.zs[t]) * p
            g_hidden[t] = (-(q.T @ trace.states[t]), -q.sum(axis=0))
            p = p + q @ net.ws[t]
            adjoints[t] = p
        q_in = (1.0 - trace.states[0] ** 2) * p
        g_w_in = -(q_in.T @ trace.inputs) * net.mask_in
        g_b_in = -q_in.sum(axis=0)
    grads = [g_w_in, g_b_in]
    for gw, gb in g_hidden:
        grads.extend((gw, gb))
    grads.extend((g_w_out, g_b_out))
    trace.adjoints = adjoints
    trace.param_grads = grads
    return trace


def insert_layer(net, position, direction, eps):
    """New network with a residual layer spliced in at interface `position`.

    The inserted weights are eps * direction reshaped to (n, n) with row r
    holding direction[r*n:(r+1)*n]; the bias starts at zero. direction must be
    a unit vector (to 1e-10) unless eps == 0.
    """
    n = net.spec.n
    if not 1 <= position <= net.hidden_count:
        raise ValueError(
            "insertion position must be in 1..%d, got %d" % (net.hidden_count, position)
        )
    if eps < 0.0:
        raise ValueError("eps must be >= 0")
    if eps == 0.0 and direction is None:
        w_new = np.zeros((n, n))
    else:
        direction = np.asarray(direction, dtype=np.float64)
        if direction.shape != (n * n,):
            raise ValueError("direction must have length n*n = %d" % (n * n))
        if eps != 0.0 and abs(np.linalg.norm(direction) - 1.0) > 1e-10:
            raise ValueError("direction must be a unit vector")
        w_new = eps * direction.reshape(n, n)
    out = net.clone()
    out.ws.insert(position, w_new)
    out.bs.insert(position, np.zeros(n))
    out.hidden_trainable.insert(position, True)
    out.spec = dataclasses.replace(net.spec, hidden_count=net.hidden_count + 1)
    return out


def fd_param_gradients(net, inputs, labels, step=1e-5):
    """Central-difference gradient of the mean loss for every parameter array.

    Masked-out input-map entries are fixed at zero by construction, so they
    are skipped and reported as zero, matching the adjoint convention.
    """
    grads = []
    for p in net.params():
        mask = net.mask_in if p is net.w_in else None
        g = np.zeros_like(p)
        flat, gf = p.ravel(), g.ravel()
        mf = mask.ravel() if mask is not None else None
        for i in range(flat.size):
            if mf is not None and mf[i] == 0.0:
                continue
            orig = flat[i]
            flat[i] = orig + step
            jp = net.loss(inputs, labels)
            flat[i] = orig - step
            jm = net.loss(inputs, labels)
            flat[i] = orig
            gf[i] = (jp - jm) / (2.0 * step)
        grads.append(g)
    return grads


def hamiltonian_at(net, trace, position, theta):
    """Inner product of interface-`position` adjoints with a candidate layer map.

    Returns sum_s p_{s,l} . (x_{s,l} + sigma(Theta x_{s,l})) where Theta is
    theta reshaped to (n, n). Its Hessian in theta at zero is twice the
    insertion-sensitivity matrix assembled by the topo module.
    """
    if trace.adjoints is None:
        raise ValueError("trace has no adjoints (run adjoint first)")
    n = net.spec.n
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (n * n,):
        raise ValueError("theta must have length n*n = %d" % (n * n))
    if not 1 <= position <= net.hidden_count:
        raise ValueError(
            "interface must be in 1..%d, got %d" % (net.hidden_count, position)
        )
    x = trace.states[position]
    p = trace.adjoints[position]
    mapped = x + net.act.eval(x @ theta.reshape(n, n).T)
    return float(np.sum(p * mapped))
