"""Datasets: CSV ingestion, standardization, and synthetic generators.

CSV schema: a header row `x0,...,x{n0-1},y0,...,y{nT-1}` followed by one row
per sample. Files ending in `.gz` are read and written through gzip
transparently. Loading is strict: wrong header, wrong column count, a
non-numeric cell, or a non-finite value fail with the 1-based line number;
no row is ever silently dropped.
"""

import gzip
import warnings
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Dataset:
    """An in-memory sample set: inputs (S, n0) and labels (S, nT)."""

    inputs: np.ndarray
    labels: np.ndarray
    name: str = ""
    stats: "Stats" = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.inputs.ndim != 2 or self.labels.ndim != 2:
            raise ValueError("inputs and labels must be 2-d")
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels must have the same sample count")
        if self.inputs.shape[0] < 1:
            raise ValueError("dataset must hold at least one sample")
        if not (np.isfinite(self.inputs).all() and np.isfinite(self.labels).all()):
            raise ValueError("dataset contains non-finite values")

    @property
    def size(self):
        return self.inputs.shape[0]

    @property
    def n0(self):
        return self.inputs.shape[1]

    @property
    def nT(self):
        return self.labels.shape[1]


@dataclass
class Stats:
    """Per-input-feature affine normalization x -> (x - mean) / std."""

    mean: np.ndarray
    std: np.ndarray
    clamped: list = field(default_factory=list)

    def apply(self, dataset):
        return Dataset((dataset.inputs - self.mean) / self.std,
                       dataset.labels.copy(), name=dataset.name, stats=self)

    def invert(self, inputs):
        return inputs * self.std + self.mean


def _open_text(path, mode):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _header(n0, nT):
    return ["x%d" % i for i in range(n0)] + ["y%d" % i for i in range(nT)]


def load_csv(path, n0, nT, name=""):
    """Read a Dataset from the strict CSV schema; errors carry line numbers."""
    if n0 < 1 or nT < 1:
        raise ValueError("n0 and nT must be >= 1")
    expected = _header(n0, nT)
    rows = []
    with _open_text(path, "r") as fh:
        header_line = fh.readline()
        if not header_line:
            raise ValueError("%s: empty file" % path)
        header = [c.strip() for c in header_line.rstrip("\r\n").split(",")]
        if header != expected:
            raise ValueError(
                "%s: line 1: header mismatch, expected %s, got %s"
                % (path, ",".join(expected), ",".join(header))
            )
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if line == "" and not rows:
                continue
            cells = line.split(",")
            if len(cells) != n0 + nT:
                raise ValueError(
                    "%s: line %d: expected %d columns, got %d"
                    % (path, lineno, n0 + nT, len(cells))
                )
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise ValueError(
                    "%s: line %d: non-numeric cell" % (path, lineno)
                ) from None
            if not all(np.isfinite(v) for v in values):
                raise ValueError("%s: line %d: non-finite value" % (path, lineno))
            rows.append(values)
    if not rows:
        raise ValueError("%s: no data rows" % path)
    arr = np.array(rows, dtype=np.float64)
    return Dataset(arr[:, :n0], arr[:, n0:], name=name or str(path))


def save_csv(dataset, path):
    """Write the strict CSV schema with 17 significant digits (round-trip exact)."""
    with _open_text(path, "w") as fh:
        fh.write(",".join(_header(dataset.n0, dataset.nT)) + "\n")
        both = np.hstack([dataset.inputs, dataset.labels])
        for row in both:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def peek_csv_header(path):
    """(n0, nT) implied by a file's header, without reading the body."""
    with _open_text(path, "r") as fh:
        header = [c.strip() for c in fh.readline().rstrip("\r\n").split(",")]
    n0 = sum(1 for c in header if c.startswith("x"))
    nT = len(header) - n0
    if n0 < 1 or nT < 1 or header != _header(n0, nT):
        raise ValueError("%s: line 1: not a recognized dataset header" % path)
    return n0, nT


def standardize(train, *others):
    """Normalize input features to zero mean / unit variance on the train split
    and apply the same affine map everywhere. Returns (stats, datasets...) in
    the argument order. Zero-variance features are clamped to std 1 with a
    warning and pass through unchanged."""
    mean = train.inputs.mean(axis=0)
    std = train.inputs.std(axis=0)
    clamped = [int(i) for i in np.nonzero(std < 1e-12)[0]]
    if clamped:
        warnings.warn(
            "standardize: zero-variance input feature(s) %s clamped to std 1"
            % clamped
        )
        std = std.copy()
        std[clamped] = 1.0
        mean = mean.copy()
        mean[clamped] = 0.0
    stats = Stats(mean=mean, std=std, clamped=clamped)
    return (stats,) + tuple(stats.apply(d) for d in (train,) + others)


def gen_gaussian_regression(seed, size, n0, nT, teacher_scale=1.0, noise=0.0,
                            hidden=32):
    """Gaussian inputs labeled by a fixed random one-hidden-layer teacher.

    inputs ~ N(0, I); labels = teacher_scale * W2 tanh(W1 x + b1) + noise * xi.
    The teacher is drawn first from the seeded stream, so the same seed always
    produces the same dataset.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    w1 = rng.standard_normal((hidden, n0)) / np.sqrt(n0)
    b1 = rng.standard_normal(hidden)
    w2 = rng.standard_normal((nT, hidden)) / np.sqrt(hidden)
    x = rng.standard_normal((size, n0))
    y = teacher_scale * (np.tanh(x @ w1.T + b1) @ w2.T)
    if noise > 0.0:
        y = y + noise * rng.standard_normal(y.shape)
    return Dataset(x, y, name="gaussian-regression-seed%d" % seed)
