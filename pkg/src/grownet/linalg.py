"""Dense symmetric eigensolver and seeded randomness.

Everything downstream (direction selection, derivative reports) consumes the
eigendecompositions produced here, so the contract is strict: float64 only,
eigenvalues sorted descending with ties broken by original index, orthonormal
eigenvectors, and bit-identical output for identical input.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

_MAX_SWEEPS = 100


class NumericError(ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues (descending) and matching orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray


def make_rng(seed):
    """Deterministic random generator for a 64-bit seed.

    Uses the permuted-congruential PCG64 bit generator, whose streams are
    stable across runs and platforms for a fixed seed.
    """
    return np.random.Generator(np.random.PCG64(int(seed)))


def jacobi_eigh(a):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns an EigenDecomposition with eigenvalues sorted descending (ties
    broken by original diagonal index, ascending) and eigenvector columns in
    matching order, each scaled so its largest-magnitude entry is positive.

    Raises ValueError for non-square or asymmetric input and NumericError for
    non-finite entries or (never observed) failure to converge.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix, got shape %r" % (a.shape,))
    if not np.isfinite(a).all():
        raise NumericError("matrix has non-finite entries")
    scale = np.abs(a).max()
    if scale > 0.0:
        asym = np.abs(a - a.T).max()
        if asym > 1e-12 * scale:
            raise ValueError(
                "matrix is not symmetric (relative asymmetry %.3e)" % (asym / scale)
            )
    n = a.shape[0]
    work = np.array(a, dtype=np.float64, order="C", copy=True)
    vecs = np.eye(n)
    fro = float(np.sqrt((work * work).sum()))
    off_tol = 1e-15 * max(fro, np.finfo(np.float64).tiny)
    kernels.jacobi_rotate(work, vecs, _MAX_SWEEPS, off_tol * off_tol)
    off = float(np.sqrt(np.sum(np.tril(work, -1) ** 2 + np.triu(work, 1) ** 2)))
    if not off <= 1e-12 * max(fro, np.finfo(np.float64).tiny) and n > 1:
        raise NumericError("rotation sweeps did not converge")
    diag = np.diagonal(work).copy()
    order = np.argsort(-diag, kind="stable")
    values = diag[order]
    vectors = vecs[:, order]
    for j in range(n):
        col = vectors[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0.0:
            vectors[:, j] = -col
    return EigenDecomposition(values=values, vectors=vectors)


def top_eigenpair(a):
    """Largest eigenvalue and its unit eigenvector of a symmetric matrix."""
    dec = jacobi_eigh(a)
    return float(dec.values[0]), dec.vectors[:, 0].copy()
