"""Eigensolver against LAPACK, power iteration, and closed forms."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from grownet.linalg import (EigenDecomposition, NumericError, jacobi_eigh,
                            make_rng, top_eigenpair)

from conftest import random_symmetric


def power_top_eigenpair(a, iters=20000):
    """Independent top-eigenpair oracle: shifted power iteration."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    shift = float(np.abs(a).sum()) + 1.0
    b = a + shift * np.eye(n)
    v = np.ones(n) / np.sqrt(n)
    for _ in range(iters):
        w = b @ v
        v = w / np.linalg.norm(w)
    lam = float(v @ a @ v)
    return lam, v


class TestAgainstLapack:
    def test_eigenvalues_match(self, rng):
        for n in (1, 2, 3, 5, 8, 12):
            a = random_symmetric(rng, n)
            dec = jacobi_eigh(a)
            ref = np.linalg.eigvalsh(a)[::-1]
            np.testing.assert_allclose(dec.values, ref, atol=1e-12)

    def test_eigenvectors_satisfy_definition(self, rng):
        a = random_symmetric(rng, 6)
        dec = jacobi_eigh(a)
        for j in range(6):
            v = dec.vectors[:, j]
            np.testing.assert_allclose(a @ v, dec.values[j] * v, atol=1e-12)

    def test_vectors_orthonormal(self, rng):
        a = random_symmetric(rng, 7)
        v = jacobi_eigh(a).vectors
        np.testing.assert_allclose(v.T @ v, np.eye(7), atol=1e-12)


class TestClosedForms:
    def test_one_by_one(self):
        dec = jacobi_eigh(np.array([[-3.5]]))
        assert dec.values[0] == -3.5
        assert dec.vectors[0, 0] == 1.0

    def test_two_by_two_hand_formula(self, rng):
        for _ in range(20):
            a, b, d = rng.standard_normal(3)
            m = np.array([[a, b], [b, d]])
            half_tr = (a + d) / 2.0
            rad = np.sqrt(((a - d) / 2.0) ** 2 + b * b)
            dec = jacobi_eigh(m)
            np.testing.assert_allclose(
                dec.values, [half_tr + rad, half_tr - rad], atol=1e-13)

    def test_known_spectrum_via_orthogonal_conjugation(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        lam = np.array([5.0, 2.0, 2.0, -1.0])
        a = q @ np.diag(lam) @ q.T
        dec = jacobi_eigh((a + a.T) / 2.0)
        np.testing.assert_allclose(dec.values, lam, atol=1e-12)


class TestConventions:
    def test_descending_order(self, rng):
        for _ in range(10):
            vals = jacobi_eigh(random_symmetric(rng, 6)).values
            assert np.all(np.diff(vals) <= 1e-15)

    def test_sign_rule_largest_entry_positive(self, rng):
        for _ in range(10):
            vecs = jacobi_eigh(random_symmetric(rng, 5)).vectors
            for j in range(5):
                col = vecs[:, j]
                assert col[np.argmax(np.abs(col))] > 0.0

    def test_identity_matrix(self):
        dec = jacobi_eigh(np.eye(3))
        np.testing.assert_array_equal(dec.values, np.ones(3))
        np.testing.assert_array_equal(dec.vectors, np.eye(3))


class TestTopEigenpair:
    def test_against_power_iteration(self, rng):
        for n in (2, 4, 7):
            a = random_symmetric(rng, n)
            lam, v = top_eigenpair(a)
            lam_ref, v_ref = power_top_eigenpair(a)
            assert abs(lam - lam_ref) < 1e-9
            assert abs(abs(v @ v_ref) - 1.0) < 1e-6

    def test_unit_norm(self, rng):
        _, v = top_eigenpair(random_symmetric(rng, 5))
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12


class TestValidation:
    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            jacobi_eigh(np.ones((2, 3)))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_finite(self):
        with pytest.raises(NumericError):
            jacobi_eigh(np.array([[np.nan, 0.0], [0.0, 1.0]]))


class TestSeededRng:
    def test_same_seed_same_stream(self):
        a = make_rng(99).standard_normal(8)
        b = make_rng(99).standard_normal(8)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        a = make_rng(1).standard_normal(8)
        b = make_rng(2).standard_normal(8)
        assert not np.array_equal(a, b)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**32 - 1))
def test_reconstruction_property(n, seed):
    """V diag(w) V^T rebuilds the input for any random symmetric matrix."""
    a = random_symmetric(make_rng(seed), n, scale=3.0)
    dec = jacobi_eigh(a)
    rebuilt = dec.vectors @ np.diag(dec.values) @ dec.vectors.T
    np.testing.assert_allclose(rebuilt, a, atol=1e-11 * max(1.0, np.abs(a).max()))
