"""Activation construction for insertable residual layers.

Residual layers stay exact identities at zero parameters only if the
activation satisfies sigma(0) = 0 and sigma'(0) = 0. Such a sigma is built as
a mixture of two stock activations,

    sigma(x) = alpha1*sigma1(x) + sigma2(x),  alpha1 = -sigma2'(0)/sigma1'(0),

which cancels the slope at the origin while keeping the curvature sigma''(0)
nonzero; that curvature is the scalar every layer-insertion sensitivity block
is proportional to.

sigma' is evaluated as alpha1*(sigma1'(x) - sigma1'(0)) + (sigma2'(x) -
sigma2'(0)) with the constants taken from the same numeric routines, so
sigma'(0) is exactly 0.0 in floating point and a freshly inserted layer has
exactly zero gradient. The induced constant offset is below one ulp of the
surrounding arithmetic.
"""

from dataclasses import dataclass, field

import numpy as np


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _swish(x):
    return x * _sigmoid(x)


def _swish_d1(x):
    s = _sigmoid(x)
    return s + x * s * (1.0 - s)


def _swish_d2(x):
    s = _sigmoid(x)
    s1 = s * (1.0 - s)
    return 2.0 * s1 + x * s1 * (1.0 - 2.0 * s)


def _tanh(x):
    return np.tanh(x)


def _tanh_d1(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _tanh_d2(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


def _mish(x):
    return x * np.tanh(np.logaddexp(0.0, x))


def _mish_d1(x):
    u = np.tanh(np.logaddexp(0.0, x))
    return u + x * (1.0 - u * u) * _sigmoid(x)


def _mish_d2(x):
    s = _sigmoid(x)
    u = np.tanh(np.logaddexp(0.0, x))
    du = (1.0 - u * u) * s
    ddu = -2.0 * u * du * s + (1.0 - u * u) * s * (1.0 - s)
    return 2.0 * du + x * ddu


_PARTS = {
    "swish": (_swish, _swish_d1, _swish_d2),
    "tanh": (_tanh, _tanh_d1, _tanh_d2),
    "mish": (_mish, _mish_d1, _mish_d2),
}

PAIR_NAMES = ("swish+tanh", "mish+tanh", "swish+mish")


@dataclass(frozen=True)
class ActivationSpec:
    """A built activation with exact zero value and slope at the origin."""

    name: str
    alpha1: float
    d2_at_zero: float
    eval: callable = field(repr=False)
    d1: callable = field(repr=False)
    d2: callable = field(repr=False)


@dataclass(frozen=True)
class PlainActivation:
    """A stock activation used outside the residual trunk."""

    name: str
    eval: callable = field(repr=False)
    d1: callable = field(repr=False)


PLAIN = {
    "tanh": PlainActivation("tanh", _tanh, _tanh_d1),
    "identity": PlainActivation(
        "identity", lambda x: np.asarray(x, dtype=np.float64), lambda x: np.ones_like(x)
    ),
}


def make_admissible(pair):
    """Build the mixed activation named by pair, e.g. 'swish+tanh'.

    The first-named function is sigma1 (the one whose coefficient is alpha1).
    Raises ValueError for names outside PAIR_NAMES.
    """
    if pair not in PAIR_NAMES:
        raise ValueError(
            "unknown activation pair %r; expected one of %s" % (pair, ", ".join(PAIR_NAMES))
        )
    name1, name2 = pair.split("+")
    f1, f1d, f1dd = _PARTS[name1]
    f2, f2d, f2dd = _PARTS[name2]
    zero = np.zeros(1)
    c1 = float(f1d(zero)[0])
    c2 = float(f2d(zero)[0])
    alpha1 = -c2 / c1
    d2_at_zero = alpha1 * float(f1dd(zero)[0]) + float(f2dd(zero)[0])

    def eval_(x):
        x = np.asarray(x, dtype=np.float64)
        return alpha1 * f1(x) + f2(x)

    def d1(x):
        x = np.asarray(x, dtype=np.float64)
        return alpha1 * (f1d(x) - c1) + (f2d(x) - c2)

    def d2(x):
        x = np.asarray(x, dtype=np.float64)
        return alpha1 * f1dd(x) + f2dd(x)

    return ActivationSpec(
        name=pair, alpha1=alpha1, d2_at_zero=d2_at_zero, eval=eval_, d1=d1, d2=d2
    )


def second_derivative_at_zero(spec):
    """Curvature of the built activation at the origin."""
    return spec.d2_at_zero
