"""Dense linear-algebra kernel tests: Hankel assembly, Sylvester solves,
matrix exponentials and the small structural predicates."""

import numpy as np
import pytest

from vesselkit.algebra import (
    SpectraOverlap,
    det,
    hankel,
    is_posdef,
    mat_exp,
    self_adjoint_residual,
    sl_params,
    solve_sylvester,
)

RTOL = 1e-12
SEED = 20260825


def test_hankel_identity_example():
    H = hankel((1, 0, 1), 0)
    assert H.shape == (2, 2)
    assert np.array_equal(H, np.eye(2))


def test_hankel_shifted_example():
    H = hankel((2, 3, 5, 9), 1)
    assert np.array_equal(H, np.array([[3.0, 5.0], [5.0, 9.0]]))


def test_hankel_sizes_follow_sequence_length():
    # (L - 1 - shift) // 2 + 1 rows: the largest square window that fits.
    for L in range(1, 9):
        m = np.arange(1.0, L + 1.0)
        for shift in (0, 1):
            if L - 1 - shift < 0:
                continue
            H = hankel(m, shift)
            n = (L - 1 - shift) // 2 + 1
            assert H.shape == (n, n)
            for j in range(n):
                for k in range(n):
                    assert H[j, k] == m[j + k + shift]


def test_solve_sylvester_random_residuals():
    rng = np.random.default_rng(SEED)
    for _ in range(25):
        n = int(rng.integers(1, 6))
        A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        B += 3.0 * np.eye(n)  # keep the spectra of A and -B apart
        Q = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        X = solve_sylvester(A, B, Q)
        res = np.linalg.norm(A @ X + X @ B - Q)
        assert res <= 1e-10 * max(1.0, np.linalg.norm(Q))


def test_solve_sylvester_detects_overlap():
    A = np.diag([1.0 + 2.0j, -1.0])
    B = -A  # eigenvalues of A exactly cancel eigenvalues of -B
    Q = np.eye(2, dtype=complex)
    with pytest.raises(SpectraOverlap):
        solve_sylvester(A, B, Q)


def test_mat_exp_nilpotent():
    N = np.array([[0.0, 1.0], [0.0, 0.0]])
    E = mat_exp(N)
    assert np.allclose(E, [[1.0, 1.0], [0.0, 1.0]], rtol=0, atol=1e-15)


def test_mat_exp_scale_matches_power():
    rng = np.random.default_rng(SEED + 1)
    M = rng.normal(size=(3, 3))
    E1 = mat_exp(M, 0.5)
    E2 = mat_exp(M, 1.0)
    assert np.allclose(E1 @ E1, E2, rtol=1e-12, atol=1e-12)


def test_mat_exp_diagonal():
    d = np.array([0.3, -1.2, 2.0 + 1.0j])
    E = mat_exp(np.diag(d), 1.0)
    assert np.allclose(np.diag(E), np.exp(d), rtol=1e-13, atol=0)


def test_is_posdef_examples():
    assert is_posdef(np.array([[2.0, 3.0], [3.0, 5.0]])) is True
    assert is_posdef(np.array([[1.0, 2.0], [2.0, 1.0]])) is False


def test_is_posdef_tolerance_shifts_the_cut():
    M = np.diag([1.0, 1e-12])
    assert is_posdef(M) is True
    assert is_posdef(M, tol=1e-6) is False


def test_det_two_by_two():
    M = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=complex)
    assert abs(det(M) - (-2.0)) < 1e-14


def test_det_singular_returns_zero():
    M = np.array([[1.0, 2.0], [2.0, 4.0]], dtype=complex)
    assert abs(det(M)) < 1e-14


def test_self_adjoint_residual():
    H = np.array([[1.0, 2.0 + 1.0j], [2.0 - 1.0j, 3.0]])
    assert self_adjoint_residual(H) < 1e-16
    H[0, 1] += 1e-3
    assert self_adjoint_residual(H) >= 5e-4


def test_sl_params_fixed_matrices():
    p = sl_params()
    assert np.array_equal(p.sigma1, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.array_equal(p.sigma2, np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert np.array_equal(p.gamma, np.array([[0.0, 0.0], [0.0, 1.0j]]))
    # sigma1 is the pairing, sigma2 the projector, gamma skew-adjoint
    assert self_adjoint_residual(p.sigma1) == 0.0
    assert self_adjoint_residual(p.sigma2) == 0.0
    assert np.allclose(p.gamma.conj().T, -p.gamma)
