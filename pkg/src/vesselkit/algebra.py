"""Dense complex linear algebra for small matrices and block operators.

Everything in this package lives at "desk scale": 2x2 parameter matrices
and block operators of size 2K x 2K for a handful of atoms K.  This module
supplies the shared kernel -- matrix exponentials, Sylvester solves,
determinants, Hankel construction and positive-definiteness tests -- plus
the standard Sturm-Liouville parameter triple used everywhere else.

Matrices are plain ``numpy.ndarray`` objects with complex128 entries.  A
"tall" operator is (2K, 2), a "wide" one is (2, 2K); block operators are
square (2K, 2K) arrays addressed as a K x K grid of 2x2 blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


class SpectraOverlap(Exception):
    """Spectra of the two coefficient matrices nearly intersect.

    Raised by :func:`solve_sylvester` when the minimum eigenvalue gap
    falls below ``separation_tol``; callers are expected to fall back to
    an integration-based construction of the unknown.
    """


#: Default minimum on |lambda_i(A) + lambda_j(B)| before a Sylvester
#: system counts as singular.
SEPARATION_TOL = 1e-8


def mat_exp(M: np.ndarray, s: float | complex = 1.0) -> np.ndarray:
    """Matrix exponential exp(s*M).

    Parameters
    ----------
    M : ndarray
        Square complex matrix.
    s : scalar, optional
        Scale factor applied before exponentiation.

    Returns
    -------
    ndarray
        exp(s*M), computed by scaling-and-squaring with a Pade-type
        rational kernel (deterministic; no iteration-count sensitivity).
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"mat_exp needs a square matrix, got shape {M.shape}")
    if s == 0:
        return np.eye(M.shape[0], dtype=complex)
    return scipy.linalg.expm(np.asarray(s * M, dtype=complex))


def solve_sylvester(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    separation_tol: float = SEPARATION_TOL,
) -> np.ndarray:
    """Solve A X + X B = Q for X by dense Kronecker vectorization.

    The unknown is unique exactly when no eigenvalue of ``A`` is the
    negative of an eigenvalue of ``B``.  The eigen-gap is checked first;
    a gap below ``separation_tol`` raises :class:`SpectraOverlap` instead
    of returning an ill-conditioned solve.

    Notes
    -----
    Dimensions here are tiny (a few dozen at most), so the O(n^6)
    vectorized solve is preferred over Bartels-Stewart for its
    transparency: ``(I (x) A + B^T (x) I) vec(X) = vec(Q)`` with
    column-major stacking.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    Q = np.asarray(Q, dtype=complex)
    ea = np.linalg.eigvals(A)
    eb = np.linalg.eigvals(B)
    gap = np.abs(ea[:, None] + eb[None, :]).min() if ea.size and eb.size else np.inf
    if gap < separation_tol:
        raise SpectraOverlap(
            f"eigenvalue gap {gap:.3e} below separation tolerance {separation_tol:.1e}"
        )
    n, m = A.shape[0], B.shape[0]
    K = np.kron(np.eye(m), A) + np.kron(B.T, np.eye(n))
    x = np.linalg.solve(K, Q.flatten(order="F"))
    return x.reshape((n, m), order="F")


def det(M: np.ndarray) -> complex:
    """Determinant of a square complex matrix (LU-based).

    Zero is a legitimate return value -- downstream code uses it to
    detect the boundary of the invertibility region -- so no error is
    raised for singular input.
    """
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        return 1.0 + 0j
    return complex(np.linalg.det(M))


def hankel(m, shift: int = 0) -> np.ndarray:
    """Hankel matrix H[j, k] = m[j + k + shift] of maximal square size.

    For a sequence of length L the returned matrix is (N+1) x (N+1) with
    N = (L - 1 - shift) // 2, i.e. the largest square Hankel fitting in
    the available entries.  ``shift=1`` produces the "shifted" family
    whose positivity encodes support on the half line.
    """
    m = np.asarray(m, dtype=float)
    if shift not in (0, 1):
        raise ValueError("shift must be 0 or 1")
    if m.ndim != 1 or len(m) < 1 + shift:
        raise ValueError(f"sequence too short for shift={shift}: length {len(m)}")
    N = (len(m) - 1 - shift) // 2
    idx = np.arange(N + 1)
    return m[idx[:, None] + idx[None, :] + shift]


def is_posdef(M: np.ndarray, tol: float = 0.0) -> bool:
    """Positive-definiteness via Cholesky pivots.

    Returns True iff the (symmetrized) Cholesky factorization completes
    with every pivot strictly greater than ``tol``.  Input must be
    symmetric up to roundoff; grossly asymmetric matrices are rejected.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("is_posdef needs a square matrix")
    scale = max(1.0, np.abs(M).max())
    if np.abs(M - M.T).max() > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (M + M.T)
    n = A.shape[0]
    L = np.zeros_like(A)
    for j in range(n):
        pivot = A[j, j] - np.dot(L[j, :j], L[j, :j])
        if not pivot > tol:
            return False
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (A[i, j] - np.dot(L[i, :j], L[j, :j])) / L[j, j]
    return True


# ---------------------------------------------------------------------------
# Vessel parameter matrices
# ---------------------------------------------------------------------------

SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA2 = np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex)
GAMMA = np.array([[0.0, 0.0], [0.0, 1.0j]], dtype=complex)


@dataclass(frozen=True)
class VesselParams:
    """The constant-parameter triple (sigma1, sigma2, gamma).

    sigma1 must be self-adjoint and invertible, sigma2 self-adjoint, and
    gamma anti-self-adjoint.  The Sturm-Liouville triple wired through
    the rest of the package is available from :func:`sl_params`.
    """

    sigma1: np.ndarray
    sigma2: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        s1 = np.asarray(self.sigma1, dtype=complex)
        s2 = np.asarray(self.sigma2, dtype=complex)
        g = np.asarray(self.gamma, dtype=complex)
        if np.abs(s1 - s1.conj().T).max() > 1e-12:
            raise ValueError("sigma1 must be self-adjoint")
        if abs(np.linalg.det(s1)) < 1e-12:
            raise ValueError("sigma1 must be invertible")
        if np.abs(s2 - s2.conj().T).max() > 1e-12:
            raise ValueError("sigma2 must be self-adjoint")
        if np.abs(g + g.conj().T).max() > 1e-12:
            raise ValueError("gamma must be anti-self-adjoint")
        object.__setattr__(self, "sigma1", s1)
        object.__setattr__(self, "sigma2", s2)
        object.__setattr__(self, "gamma", g)

    @property
    def sigma1_inv(self) -> np.ndarray:
        return np.linalg.inv(self.sigma1)

    @property
    def is_sturm_liouville(self) -> bool:
        return (
            np.abs(self.sigma1 - SIGMA1).max() < 1e-14
            and np.abs(self.sigma2 - SIGMA2).max() < 1e-14
            and np.abs(self.gamma - GAMMA).max() < 1e-14
        )


def sl_params() -> VesselParams:
    """The Sturm-Liouville parameter triple.

    sigma1 = [[0,1],[1,0]] (its own inverse), sigma2 = [[1,0],[0,0]],
    gamma = [[0,0],[0,i]].  This is the triple under which the recovered
    potential obeys the Korteweg-de Vries flow.
    """
    return VesselParams(SIGMA1.copy(), SIGMA2.copy(), GAMMA.copy())


def self_adjoint_residual(M: np.ndarray) -> float:
    """Max-entry deviation of M from its conjugate transpose."""
    M = np.asarray(M, dtype=complex)
    return float(np.abs(M - M.conj().T).max())
