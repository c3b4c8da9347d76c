"""Numerical hot loops: Jacobi rotations and scalar-chain sweeps.

Two families live here.

* Single-source kernels (Jacobi rotation sweeps): plain scalar-loop code that
  the numba backend compiles and the numpy backend interprets as-is. Both
  backends execute identical operations in identical order.

* Dual implementations (scalar residual chain): a per-sample scalar loop for
  numba and a vectorized numpy equivalent for the fallback, because the
  interpreted scalar loop would be orders of magnitude too slow. The two agree
  to ~1e-12 relative (sequential vs pairwise summation).

The active variants are bound to the plain names (`jacobi_rotate`,
`rbf_states`, ...) according to :mod:`grownet.backend`; the numpy variants stay
importable under ``*_numpy`` names for tests and benchmarks.
"""

import numpy as np

from .backend import USE_NUMBA, compile_kernel


# ---------------------------------------------------------------------------
# Jacobi rotations (single source)
# ---------------------------------------------------------------------------

def _jacobi_rotate_impl(a, v, max_sweeps, off_tol_sq):
    # Cyclic Jacobi: sweep the strict upper triangle in row order, rotating
    # (p,q) planes until the off-diagonal mass falls below off_tol_sq.
    # a is reduced toward diagonal in place; v accumulates the rotations.
    n = a.shape[0]
    sweeps = 0
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if off <= off_tol_sq:
            break
        sweeps = sweep + 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return sweeps


jacobi_rotate_numpy = _jacobi_rotate_impl
jacobi_rotate = compile_kernel(_jacobi_rotate_impl)


# ---------------------------------------------------------------------------
# Scalar residual chain with Gaussian-bump layers
# ---------------------------------------------------------------------------
# One layer maps x -> x + g(x; t1, t2, t3) with
#   g = t3*exp(-(t1*x + t2 - c)^2 / 2) - t3*exp(-c^2 / 2)
# so zero parameters give the identity and zero first derivatives.

def _rbf_states_impl(x0, th, c, states):
    L = th.shape[0]
    S = x0.shape[0]
    e0 = np.exp(-0.5 * c * c)
    for s in range(S):
        x = x0[s]
        states[0, s] = x
        for i in range(L):
            u = th[i, 0] * x + th[i, 1] - c
            x = x + th[i, 2] * np.exp(-0.5 * u * u) - th[i, 2] * e0
            states[i + 1, s] = x
    return 0


def _rbf_loss_impl(x0, y, th, c):
    L = th.shape[0]
    S = x0.shape[0]
    e0 = np.exp(-0.5 * c * c)
    total = 0.0
    for s in range(S):
        x = x0[s]
        for i in range(L):
            u = th[i, 0] * x + th[i, 1] - c
            x = x + th[i, 2] * np.exp(-0.5 * u * u) - th[i, 2] * e0
        d = x - y[s]
        total += 0.5 * d * d
    return total / S


def _rbf_trace_impl(x0, y, th, c, states, adjoints, grads):
    L = th.shape[0]
    S = x0.shape[0]
    e0 = np.exp(-0.5 * c * c)
    total = 0.0
    for s in range(S):
        x = x0[s]
        states[0, s] = x
        for i in range(L):
            u = th[i, 0] * x + th[i, 1] - c
            x = x + th[i, 2] * np.exp(-0.5 * u * u) - th[i, 2] * e0
            states[i + 1, s] = x
        d = x - y[s]
        total += 0.5 * d * d
        adjoints[L, s] = -d / S
    for i in range(L - 1, -1, -1):
        t1 = th[i, 0]
        t2 = th[i, 1]
        t3 = th[i, 2]
        g1 = 0.0
        g2 = 0.0
        g3 = 0.0
        for s in range(S):
            x = states[i, s]
            u = t1 * x + t2 - c
            e = np.exp(-0.5 * u * u)
            w = -t3 * e * u
            p = adjoints[i + 1, s]
            g1 -= p * w * x
            g2 -= p * w
            g3 -= p * (e - e0)
            adjoints[i, s] = p * (1.0 + w * t1)
        grads[i, 0] = g1
        grads[i, 1] = g2
        grads[i, 2] = g3
    return total / S


def _rbf_epoch_impl(x, y, order, th, m, v, t0, lr, b1, b2, eps, bs, c):
    # One pass over the permuted samples in minibatches of bs, taking one
    # adaptive-moment step per minibatch. Returns (mean minibatch loss, t).
    L = th.shape[0]
    S = x.shape[0]
    e0 = np.exp(-0.5 * c * c)
    nb = (S + bs - 1) // bs
    st = np.empty(L + 1)
    g = np.empty((L, 3))
    t = t0
    total = 0.0
    for b in range(nb):
        lo = b * bs
        hi = min(S, lo + bs)
        B = hi - lo
        for i in range(L):
            g[i, 0] = 0.0
            g[i, 1] = 0.0
            g[i, 2] = 0.0
        jb = 0.0
        for k in range(lo, hi):
            idx = order[k]
            st[0] = x[idx]
            for i in range(L):
                u = th[i, 0] * st[i] + th[i, 1] - c
                st[i + 1] = st[i] + th[i, 2] * np.exp(-0.5 * u * u) - th[i, 2] * e0
            d = st[L] - y[idx]
            jb += 0.5 * d * d
            p = -d / B
            for i in range(L - 1, -1, -1):
                u = th[i, 0] * st[i] + th[i, 1] - c
                e = np.exp(-0.5 * u * u)
                w = -th[i, 2] * e * u
                g[i, 0] -= p * w * st[i]
                g[i, 1] -= p * w
                g[i, 2] -= p * (e - e0)
                p = p * (1.0 + w * th[i, 0])
        total += jb / B
        t += 1
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        for i in range(L):
            for j in range(3):
                gij = g[i, j]
                m[i, j] = b1 * m[i, j] + (1.0 - b1) * gij
                v[i, j] = b2 * v[i, j] + (1.0 - b2) * gij * gij
                th[i, j] -= lr * (m[i, j] / bc1) / (np.sqrt(v[i, j] / bc2) + eps)
    return total / nb, t


def _rbf_states_numpy(x0, th, c, states):
    L = th.shape[0]
    e0 = np.exp(-0.5 * c * c)
    states[0] = x0
    for i in range(L):
        u = th[i, 0] * states[i] + th[i, 1] - c
        states[i + 1] = states[i] + th[i, 2] * np.exp(-0.5 * u * u) - th[i, 2] * e0
    return 0


def _rbf_loss_numpy(x0, y, th, c):
    L = th.shape[0]
    e0 = np.exp(-0.5 * c * c)
    x = x0
    for i in range(L):
        u = th[i, 0] * x + th[i, 1] - c
        x = x + th[i, 2] * np.exp(-0.5 * u * u) - th[i, 2] * e0
    d = x - y
    return 0.5 * float(d @ d) / x0.shape[0]


def _rbf_trace_numpy(x0, y, th, c, states, adjoints, grads):
    L = th.shape[0]
    S = x0.shape[0]
    e0 = np.exp(-0.5 * c * c)
    _rbf_states_numpy(x0, th, c, states)
    d = states[L] - y
    adjoints[L] = -d / S
    for i in range(L - 1, -1, -1):
        xi = states[i]
        u = th[i, 0] * xi + th[i, 1] - c
        e = np.exp(-0.5 * u * u)
        w = -th[i, 2] * e * u
        p = adjoints[i + 1]
        grads[i, 0] = -float(p @ (w * xi))
        grads[i, 1] = -float(p @ w)
        grads[i, 2] = -float(p @ (e - e0))
        adjoints[i] = p * (1.0 + w * th[i, 0])
    return 0.5 * float(d @ d) / S


def _rbf_epoch_numpy(x, y, order, th, m, v, t0, lr, b1, b2, eps, bs, c):
    L = th.shape[0]
    S = x.shape[0]
    nb = (S + bs - 1) // bs
    t = t0
    total = 0.0
    states = np.empty((L + 1, min(S, bs)))
    adjoints = np.empty((L + 1, min(S, bs)))
    g = np.empty((L, 3))
    for b in range(nb):
        sel = order[b * bs:min(S, (b + 1) * bs)]
        xb = x[sel]
        yb = y[sel]
        B = xb.shape[0]
        total += _rbf_trace_numpy(xb, yb, th, c, states[:, :B], adjoints[:, :B], g)
        t += 1
        bc1 = 1.0 - b1 ** t
        bc2 = 1.0 - b2 ** t
        m[:] = b1 * m + (1.0 - b1) * g
        v[:] = b2 * v + (1.0 - b2) * g * g
        th -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return total / nb, t


rbf_states_numpy = _rbf_states_numpy
rbf_loss_numpy = _rbf_loss_numpy
rbf_trace_numpy = _rbf_trace_numpy
rbf_epoch_numpy = _rbf_epoch_numpy

if USE_NUMBA:
    rbf_states = compile_kernel(_rbf_states_impl)
    rbf_loss = compile_kernel(_rbf_loss_impl)
    rbf_trace = compile_kernel(_rbf_trace_impl)
    rbf_epoch = compile_kernel(_rbf_epoch_impl)
else:
    rbf_states = _rbf_states_numpy
    rbf_loss = _rbf_loss_numpy
    rbf_trace = _rbf_trace_numpy
    rbf_epoch = _rbf_epoch_numpy


def warmup():
    """Trigger JIT compilation of every kernel on tiny inputs."""
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    v = np.eye(2)
    jacobi_rotate(a, v, 30, 1e-30)
    x = np.array([0.1, -0.2, 0.3])
    y = np.array([0.0, 0.1, -0.1])
    th = np.array([[0.1, 0.2, 0.3]])
    states = np.empty((2, 3))
    adjoints = np.empty((2, 3))
    grads = np.empty((1, 3))
    rbf_states(x, th, 0.1, states)
    rbf_loss(x, y, th, 0.1)
    rbf_trace(x, y, th, 0.1, states, adjoints, grads)
    order = np.arange(3, dtype=np.int64)
    m = np.zeros((1, 3))
    v2 = np.zeros((1, 3))
    rbf_epoch(x, y, order, th.copy(), m, v2, 0, 1e-3, 0.9, 0.999, 1e-8, 2, 0.1)
