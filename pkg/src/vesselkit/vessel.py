"""Static vessels: from an atomic spectral measure to tau and the potential.

A measure with K atoms defines a finite node: a block-diagonal generator A
on C^(2K), a tall operator B0 of stacked identities, a wide operator C0 of
stacked weight matrices, and the companion generator Azeta fixed by the
algebraic (Lyapunov) identity at the base point.  Moving in x, the tall
and wide operators evolve through closed forms, the Gram-type operator X
integrates d X/dx = B s2 C from X(0) = I, and everything of interest is
read off X:

    tau      = det X                    (vanishes on the bad set)
    H0       = C X^{-1} B               (base moment)
    gstar    = gamma + s2 H0 s1 - s1 H0 s2
    q        = -2 (i (H0_21 - H0_12) - H0_11^2)

Two independent constructions of X are provided -- a dense Sylvester solve
of the algebraic identity (exact, pointwise, needs eigenvalue separation)
and high-order quadrature marching (works for every measure, including the
structurally degenerate rank-one-weight ones where the Sylvester system is
singular for all x).  Their agreement is one of the package's invariants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .algebra import (
    SEPARATION_TOL,
    SpectraOverlap,
    VesselParams,
    mat_exp,
    sl_params,
    solve_sylvester,
)
from .fundsol import ODE_TOL, QEvaluator, phi, phi_input, phi_star
from .moments import StructureViolation
from .series import TruncSeries
from .spectrum import SpectralMeasure

#: Default tolerances for snapshot validation.
LYAP_TOL = 1e-9
INV_TOL = 1e-7
TAU_FLOOR = 1e-10
SHAPE_TOL = 1e-9

#: Gauss-Legendre order used by the quadrature marcher.
_GL_POINTS = 10

#: Substep budget: no substep sees more than this much accumulated phase.
_PHASE_BUDGET = 0.5


class PoleAtLambda(Exception):
    """Transfer function evaluated at (or too near) a generator eigenvalue."""


class OmegaBoundary(Exception):
    """tau is below the invertibility floor at the requested point."""


def _gl_rule():
    nodes, weights = np.polynomial.legendre.leggauss(_GL_POINTS)
    return nodes, weights


_GL_X, _GL_W = _gl_rule()


class VesselData:
    """Immutable finite node built from a spectral measure.

    Exposes the standing operators (A, B0, C0, Azeta), the vectorized
    x- and t-generators of the wide operator's evolution, the eigenvalue
    separation that decides whether the Sylvester path is usable, and a
    couple of internal caches for quadrature marching.
    """

    def __init__(self, meas: SpectralMeasure, params: VesselParams | None = None):
        self.meas = meas
        self.params = params if params is not None else sl_params()
        K = meas.K
        self.K = K
        mu = meas.mu
        self.A = np.diag(np.repeat(1j * mu, 2)) if K else np.zeros((0, 0), complex)
        self.B0 = np.tile(np.eye(2, dtype=complex), (K, 1))
        W = meas.weight_matrices()
        self.C0 = (
            np.concatenate(list(W), axis=1) if K else np.zeros((2, 0), complex)
        )
        s1, s2, g = self.params.sigma1, self.params.sigma2, self.params.gamma
        s1i = self.params.sigma1_inv
        self.Azeta = -self.A - self.B0 @ s1 @ self.C0
        # Vectorized generators (column-major stacking of the wide operator).
        if K:
            I2K = np.eye(2 * K)
            self.Mx = np.kron(I2K, s1i @ g) - np.kron(self.Azeta.T, s1i @ s2)
            self.Mt = -1j * np.kron(self.Azeta.T, np.eye(2)) @ self.Mx
            comm = self.Mx @ self.Mt - self.Mt @ self.Mx
            scale = np.linalg.norm(self.Mx) * np.linalg.norm(self.Mt)
            if scale > 0 and np.linalg.norm(comm) > 1e-12 * scale:
                raise StructureViolation(
                    "x- and t-generators of the wide operator do not commute"
                )
            ea = np.diag(self.A)
            ez = np.linalg.eigvals(self.Azeta)
            self.separation = float(np.abs(ea[:, None] + ez[None, :]).min())
        else:
            self.Mx = np.zeros((0, 0), complex)
            self.Mt = np.zeros((0, 0), complex)
            self.separation = np.inf
        mu_top = float(mu.max()) if K else 0.0
        self.freq_x = 1.0 + 2.0 * math.sqrt(mu_top)
        self.freq_t = 1.0 + 2.0 * mu_top * math.sqrt(mu_top)
        self._c0vec = self.C0.flatten(order="F")
        self._prop_cache: dict = {}
        self._x_anchors: dict = {0: (np.eye(2 * K, dtype=complex), self._c0vec)}
        self._anchor_step = 0.25
        self._t_caches: dict = {}

    # -- propagators ----------------------------------------------------

    def _prop(self, tag: str, step: float) -> np.ndarray:
        key = (tag, step)
        P = self._prop_cache.get(key)
        if P is None:
            M = self.Mx if tag == "x" else self.Mt
            P = mat_exp(M, step)
            self._prop_cache[key] = P
        return P

    def node_residual(self) -> float:
        """Defect of the base-point algebraic identity (zero by construction)."""
        s1 = self.params.sigma1
        R = self.A + self.Azeta + self.B0 @ s1 @ self.C0
        return float(np.abs(R).max()) if self.K else 0.0


def build_node(meas: SpectralMeasure, params: VesselParams | None = None) -> VesselData:
    """Finite node realizing the measure; the base identity holds exactly."""
    return VesselData(meas, params)


# ---------------------------------------------------------------------------
# Closed-form evolution of the tall and wide operators
# ---------------------------------------------------------------------------

def _B_stack(v: VesselData, args: np.ndarray) -> np.ndarray:
    """Tall operators for per-atom arguments.

    ``args`` has shape (K, n): row k holds the effective positions for
    atom k.  Returns (n, 2K, 2).
    """
    K = v.K
    n = args.shape[1] if args.ndim == 2 else 1
    out = np.zeros((n, 2 * K, 2), dtype=complex)
    for k in range(K):
        blk = phi(v.meas.mu[k], np.atleast_1d(args[k]))
        out[:, 2 * k : 2 * k + 2, :] = blk
    return out


def evolve_B(v: VesselData, x: float) -> np.ndarray:
    """Tall operator at x: block k is the free-system matrix at (mu_k, x)."""
    if v.K == 0:
        return v.B0.copy()
    args = np.full((v.K, 1), float(x))
    return _B_stack(v, args)[0]


def evolve_C(v: VesselData, x: float) -> np.ndarray:
    """Wide operator at x: exact matrix exponential of the vectorized flow."""
    if v.K == 0:
        return v.C0.copy()
    vec = mat_exp(v.Mx, x) @ v._c0vec
    return vec.reshape((2, 2 * v.K), order="F")


def _B_deriv(v: VesselData, B: np.ndarray) -> np.ndarray:
    p = v.params
    return -(v.A @ B @ p.sigma2 + B @ p.gamma) @ p.sigma1_inv


def _C_deriv(v: VesselData, C: np.ndarray) -> np.ndarray:
    p = v.params
    return p.sigma1_inv @ (p.gamma @ C - p.sigma2 @ C @ v.Azeta)


# ---------------------------------------------------------------------------
# The Gram-type operator X: Sylvester path and quadrature path
# ---------------------------------------------------------------------------

def solve_X(
    v: VesselData,
    B: np.ndarray,
    C: np.ndarray,
    separation_tol: float = SEPARATION_TOL,
) -> np.ndarray:
    """X from the algebraic identity A X + X Azeta = -B s1 C.

    Exact pointwise (no path dependence) but requires the spectra of A
    and -Azeta to stay separated; measures with rank-one weight blocks
    violate that for every x and must use :func:`integrate_X`.
    """
    if v.K == 0:
        return np.zeros((0, 0), complex)
    Q = -B @ v.params.sigma1 @ C
    return solve_sylvester(v.A, v.Azeta, Q, separation_tol=separation_tol)


def _substeps(h: float, freq: float) -> int:
    return max(1, int(math.ceil(abs(h) * freq / _PHASE_BUDGET)))


def _march_X(v: VesselData, x0: float, x1: float, X0, c0vec, factor: int = 1):
    """Quadrature march of X and the wide operator from x0 to x1.

    Gauss-Legendre accumulation of B s2 C over substeps short enough that
    the integrand's phase stays resolved; exact to roundoff for the
    trigonometric/exponential integrands at hand.  Returns (X1, c1vec).
    """
    h = x1 - x0
    if h == 0.0 or v.K == 0:
        return X0.copy(), c0vec.copy()
    m = _substeps(h, v.freq_x) * factor
    hs = h / m
    s2 = v.params.sigma2
    offs = 0.5 * hs * (_GL_X + 1.0)
    props = [v._prop("x", o) for o in offs]
    E_step = v._prop("x", hs)
    X = X0.copy()
    c = c0vec
    mu = v.meas.mu
    base = x0
    for _ in range(m):
        acc = np.zeros_like(X)
        for j, Pj in enumerate(props):
            cj = (Pj @ c).reshape((2, 2 * v.K), order="F")
            xj = base + offs[j]
            Bj = _B_stack(v, np.full((v.K, 1), xj))[0]
            acc += _GL_W[j] * ((Bj @ s2) @ cj)
        X = X + (0.5 * hs) * acc
        c = E_step @ c
        base += hs
    return X, c


def integrate_X(v: VesselData, x: float, rtol: float = 1e-12) -> np.ndarray:
    """X(x) by integrating d X/dx = B s2 C from the identity at 0.

    The quadrature density is refined (doubled) until two successive
    answers agree to ``rtol`` relative; for the entire integrands at hand
    the first refinement already sits at roundoff.
    """
    if v.K == 0:
        return np.zeros((0, 0), complex)
    I = np.eye(2 * v.K, dtype=complex)
    coarse, _ = _march_X(v, 0.0, float(x), I, v._c0vec, factor=1)
    for factor in (2, 4, 8):
        fine, _ = _march_X(v, 0.0, float(x), I, v._c0vec, factor=factor)
        scale = max(1.0, float(np.abs(fine).max()))
        if np.abs(fine - coarse).max() <= rtol * scale:
            return fine
        coarse = fine
    return coarse


def _X_static(v: VesselData, x: float):
    """Cached anchor-and-bridge evaluation of (X(x), wide-vec(x)) at t = 0."""
    if v.K == 0:
        return np.zeros((0, 0), complex), v._c0vec
    a = v._anchor_step
    k = int(round(x / a))
    sgn = 1 if k >= 0 else -1
    built = v._x_anchors
    # extend the anchor chain toward k
    j = 0
    while sgn * j < sgn * k:
        nxt = j + sgn
        if nxt not in built:
            Xj, cj = built[j]
            built[nxt] = _march_X(v, j * a, nxt * a, Xj, cj)
        j = nxt
    Xk, ck = built[k]
    return _march_X(v, k * a, float(x), Xk, ck)


def _X_at(v: VesselData, x: float, separation_tol: float = SEPARATION_TOL) -> np.ndarray:
    """X(x) by the fastest valid path (Sylvester if separated, else marching)."""
    if v.K == 0:
        return np.zeros((0, 0), complex)
    if v.separation > separation_tol:
        B = evolve_B(v, x)
        C = evolve_C(v, x)
        return solve_X(v, B, C, separation_tol=separation_tol)
    return _X_static(v, x)[0]


def lyapunov_residual(v: VesselData, B, C, X) -> float:
    """Max-entry defect of A X + X Azeta + B s1 C."""
    if v.K == 0:
        return 0.0
    R = v.A @ X + X @ v.Azeta + B @ v.params.sigma1 @ C
    return float(np.abs(R).max())


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VesselSnapshot:
    """Everything recoverable at a single x."""

    x: float
    B: np.ndarray
    C: np.ndarray
    X: np.ndarray
    tau: complex
    H0: np.ndarray
    gamma_star: np.ndarray
    q: complex
    cond_X: float
    lyap_residual: float


def _h0_from(v: VesselData, B, C, X) -> np.ndarray:
    if v.K == 0:
        return np.zeros((2, 2), complex)
    return C @ np.linalg.solve(X, B)


def _gamma_star_from(v: VesselData, H0: np.ndarray) -> np.ndarray:
    p = v.params
    return p.gamma + p.sigma2 @ H0 @ p.sigma1 - p.sigma1 @ H0 @ p.sigma2


def _q_from(H0: np.ndarray) -> complex:
    return complex(-2.0 * (1j * (H0[1, 0] - H0[0, 1]) - H0[0, 0] ** 2))


def _check_shape(gamma_star: np.ndarray, shape_tol: float) -> None:
    worst = max(
        abs(gamma_star[1, 1] - 1j),
        abs(gamma_star[0, 1] + gamma_star[1, 0]),
        abs(gamma_star[0, 0].real),
    )
    if worst > shape_tol:
        raise StructureViolation(
            f"output parameter matrix off its rigid shape by {worst:.3e}"
        )


def snapshot(
    v: VesselData,
    x: float,
    tau_floor: float = TAU_FLOOR,
    lyap_tol: float = LYAP_TOL,
    shape_tol: float = SHAPE_TOL,
) -> VesselSnapshot:
    """Full state at x; validates the algebraic identity and shape rules.

    Raises :class:`OmegaBoundary` when |tau| sits below
    ``tau_floor * max(1, ||X||)`` -- the point is outside (or on the
    boundary of) the invertibility region and no potential is reported.
    """
    B = evolve_B(v, x)
    C = evolve_C(v, x)
    X = _X_at(v, x)
    if v.K == 0:
        return VesselSnapshot(
            float(x), B, C, X, 1.0 + 0j, np.zeros((2, 2), complex),
            v.params.gamma.copy(), 0.0 + 0j, 1.0, 0.0,
        )
    tau = complex(np.linalg.det(X))
    scale = max(1.0, float(np.linalg.norm(X)))
    if abs(tau) <= tau_floor * scale:
        raise OmegaBoundary(f"|tau|={abs(tau):.3e} at x={x} is below the floor")
    lyap = lyapunov_residual(v, B, C, X)
    lyap_scale = max(1.0, float(np.abs(X).max()) * float(np.abs(v.A).max() + 1.0))
    if lyap > lyap_tol * lyap_scale:
        raise StructureViolation(f"algebraic identity defect {lyap:.3e} at x={x}")
    H0 = _h0_from(v, B, C, X)
    gs = _gamma_star_from(v, H0)
    q = _q_from(H0) if self_adjoint_sl(v) else complex(np.nan)
    if self_adjoint_sl(v):
        _check_shape(gs, shape_tol)
    return VesselSnapshot(
        float(x), B, C, X, tau, H0, gs, q, float(np.linalg.cond(X)), lyap
    )


def self_adjoint_sl(v: VesselData) -> bool:
    """True when the standard Sturm-Liouville parameter triple is in force."""
    return v.params.is_sturm_liouville


# ---------------------------------------------------------------------------
# Batched evaluation along an x-grid
# ---------------------------------------------------------------------------

@dataclass
class SnapshotGrid:
    """Vectorized snapshots over an increasing x-grid (t = 0)."""

    x: np.ndarray
    B: np.ndarray           # (n, 2K, 2)
    C: np.ndarray           # (n, 2, 2K)
    X: np.ndarray           # (n, 2K, 2K)
    tau: np.ndarray         # (n,)
    H0: np.ndarray          # (n, 2, 2)
    gamma_star: np.ndarray  # (n, 2, 2)
    q: np.ndarray           # (n,)
    in_omega: np.ndarray    # (n,) bool
    lyap_max: float


def _march_chain(v: VesselData, xs: np.ndarray, X0, c0vec):
    """March (X, wide-vec) along consecutive points of a uniform chain.

    xs[0] is the starting point with state (X0, c0vec).  Returns stacked
    X (n, 2K, 2K) and wide-vecs (n, 4K).  Vectorizes the quadrature over
    all cells at once; coarse chains are refined internally so every cell
    is a single resolved substep.
    """
    n = len(xs)
    K = v.K
    Xs = np.empty((n, 2 * K, 2 * K), dtype=complex)
    cs = np.empty((n, 4 * K), dtype=complex)
    Xs[0], cs[0] = X0, c0vec
    if n == 1:
        return Xs, cs
    h = xs[1] - xs[0]
    m = _substeps(h, v.freq_x)
    if m > 1:
        fine = xs[0] + (h / m) * np.arange((n - 1) * m + 1)
        Xf, cf = _march_chain(v, fine, X0, c0vec)
        return Xf[::m].copy(), cf[::m].copy()
    E = v._prop("x", h)
    for i in range(1, n):
        cs[i] = E @ cs[i - 1]
    offs = 0.5 * h * (_GL_X + 1.0)
    s2 = v.params.sigma2
    mu = v.meas.mu
    starts = xs[:-1]
    acc = np.zeros((n - 1, 2 * K, 2 * K), dtype=complex)
    cmat = cs[:-1].T  # (4K, n-1)
    for j, off in enumerate(offs):
        cj = (v._prop("x", off) @ cmat).reshape((2, 2 * K, n - 1), order="F")
        cj = np.moveaxis(cj, 2, 0)  # (n-1, 2, 2K)
        args = starts[None, :] + off  # same position for every atom row
        Bj = _B_stack(v, np.broadcast_to(args, (K, n - 1)))
        u = Bj @ s2  # (n-1, 2K, 2)
        acc += _GL_W[j] * (
            u[:, :, 0, None] * cj[:, None, 0, :] + u[:, :, 1, None] * cj[:, None, 1, :]
        )
    cells = (0.5 * h) * acc
    Xs[1:] = Xs[0] + np.cumsum(cells, axis=0)
    return Xs, cs


def grid_snapshots(
    v: VesselData,
    xs,
    tau_floor: float = TAU_FLOOR,
) -> SnapshotGrid:
    """Snapshots over a uniform increasing grid, batched.

    Points where |tau| falls below the floor are masked out (q is NaN
    there) rather than raising; pointwise callers who want the error
    behavior should use :func:`snapshot`.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 1 or len(xs) == 0:
        raise ValueError("x-grid must be a nonempty 1-d array")
    if len(xs) > 1:
        h = xs[1] - xs[0]
        if h <= 0 or np.abs(np.diff(xs) - h).max() > 1e-9 * abs(h):
            raise ValueError("x-grid must be uniform and increasing")
    K = v.K
    n = len(xs)
    if K == 0:
        I0 = np.zeros((n, 0, 0), complex)
        z2 = np.zeros((n, 2, 2), complex)
        gs = np.broadcast_to(v.params.gamma, (n, 2, 2)).copy()
        return SnapshotGrid(
            xs, np.zeros((n, 0, 2), complex), np.zeros((n, 2, 0), complex),
            I0, np.ones(n, complex), z2, gs, np.zeros(n, complex),
            np.ones(n, bool), 0.0,
        )
    I = np.eye(2 * K, dtype=complex)
    right = xs >= 0.0
    Xs = np.empty((n, 2 * K, 2 * K), dtype=complex)
    cs = np.empty((n, 4 * K), dtype=complex)
    if right.any():
        i0 = int(np.argmax(right))
        Xb, cb = _march_X(v, 0.0, xs[i0], I, v._c0vec)
        Xr, cr = _march_chain(v, xs[i0:], Xb, cb)
        Xs[i0:], cs[i0:] = Xr, cr
    if (~right).any():
        i1 = int(np.argmax(right)) if right.any() else n
        left = xs[:i1][::-1]  # descending from the largest negative
        Xb, cb = _march_X(v, 0.0, left[0], I, v._c0vec)
        Xl, cl = _march_chain(v, left, Xb, cb)
        Xs[:i1], cs[:i1] = Xl[::-1], cl[::-1]
    C = np.moveaxis(cs.T.reshape((2, 2 * K, n), order="F"), 2, 0)
    B = _B_stack(v, np.broadcast_to(xs[None, :], (K, n)))
    tau = np.linalg.det(Xs)
    scale = np.maximum(1.0, np.abs(Xs).max(axis=(1, 2)))
    mask = np.abs(tau) > tau_floor * scale
    H0 = np.full((n, 2, 2), np.nan, dtype=complex)
    if mask.any():
        Y = np.linalg.solve(Xs[mask], B[mask])
        H0[mask] = C[mask] @ Y
    p = v.params
    gs = p.gamma[None] + np.einsum(
        "ab,nbc,cd->nad", p.sigma2, H0, p.sigma1
    ) - np.einsum("ab,nbc,cd->nad", p.sigma1, H0, p.sigma2)
    q = -2.0 * (1j * (H0[:, 1, 0] - H0[:, 0, 1]) - H0[:, 0, 0] ** 2)
    q[~mask] = np.nan
    # algebraic-identity defect, batched
    s1 = p.sigma1
    diagA = np.diag(v.A)
    lyap = (
        diagA[None, :, None] * Xs
        + Xs @ v.Azeta
        + (B @ s1) @ C
    )
    lyap_max = float(np.abs(lyap).max())
    return SnapshotGrid(xs, B, C, Xs, tau, H0, gs, q, mask, lyap_max)


# ---------------------------------------------------------------------------
# Transfer function and its verifications
# ---------------------------------------------------------------------------

def transfer(v: VesselData, snap: VesselSnapshot, lam: complex) -> np.ndarray:
    """S(lambda, x) = I - C X^{-1} (lambda - A)^{-1} B s1."""
    lam = complex(lam)
    if v.K == 0:
        return np.eye(2, dtype=complex)
    gaps = np.abs(lam - np.diag(v.A))
    if gaps.min() < 1e-12 * (1.0 + abs(lam)):
        raise PoleAtLambda(f"lambda={lam} sits on the generator spectrum")
    R = snap.B / (lam - np.diag(v.A))[:, None]
    return np.eye(2) - snap.C @ np.linalg.solve(snap.X, R) @ v.params.sigma1


def _transfer_grid(v: VesselData, grid: SnapshotGrid, lam: complex) -> np.ndarray:
    lam = complex(lam)
    if v.K == 0:
        return np.broadcast_to(np.eye(2, dtype=complex), (len(grid.x), 2, 2)).copy()
    gaps = np.abs(lam - np.diag(v.A))
    if gaps.min() < 1e-12 * (1.0 + abs(lam)):
        raise PoleAtLambda(f"lambda={lam} sits on the generator spectrum")
    R = grid.B / (lam - np.diag(v.A))[None, :, None]
    Y = np.linalg.solve(grid.X, R)
    return np.eye(2)[None] - (grid.C @ Y) @ v.params.sigma1


def backlund_check(v: VesselData, x_grid, lam: complex) -> float:
    """Defect of the transplanted solutions in the output system.

    y = S(lambda, x) u(lambda, x), with u the free fundamental matrix,
    must satisfy lam*s2*y - s1*y' + gstar(x)*y = 0; the derivative is
    evaluated by central differences, so the defect is O(h^2).
    """
    xs = np.asarray(x_grid, dtype=float)
    if len(xs) < 3:
        raise ValueError("need at least three grid points")
    grid = grid_snapshots(v, xs)
    if not grid.in_omega.all():
        raise OmegaBoundary("backlund grid crosses the invertibility boundary")
    S = _transfer_grid(v, grid, lam)
    U = phi_input(lam, xs)
    Y = S @ U
    h = xs[1] - xs[0]
    dY = (Y[2:] - Y[:-2]) / (2.0 * h)
    mid = Y[1:-1]
    p = v.params
    res = (
        lam * np.einsum("ab,nbc->nac", p.sigma2, mid)
        - np.einsum("ab,nbc->nac", p.sigma1, dY)
        + grid.gamma_star[1:-1] @ mid
    )
    return float(np.abs(res).max())


def vessel_q_evaluator(v: VesselData, span: float = 6.0) -> QEvaluator:
    """The recovered potential as a pointwise evaluator on [-span, span]."""

    def q_of(x: float) -> float:
        return snapshot(v, float(x)).q.real

    return QEvaluator(q_of, -span, span, source="vessel")


def _base_gauge(v: VesselData) -> float:
    """(1,1) entry of the base moment C0 B0; the output gauge value at 0."""
    if v.K == 0:
        return 0.0
    return float((v.C0 @ v.B0)[0, 0].real)


def intertwine_check(
    v: VesselData, x: float, mu: float, ode_tol: float = ODE_TOL
) -> float:
    """Agreement of S with the fundamental-matrix conjugation at lambda = i mu.

    ||S(i mu, x) - Phi*(i mu, x) S(i mu, 0) Phi(i mu, x)^{-1}||, with Phi*
    integrated from the vessel's own recovered potential.  Composition of
    independently tested parts; expect integrator-level agreement.
    """
    lam = 1j * float(mu)
    s_x = transfer(v, snapshot(v, x), lam)
    s_0 = transfer(v, snapshot(v, 0.0), lam)
    q_eval = vessel_q_evaluator(v, span=abs(x) + 1.0)
    Pstar = phi_star(q_eval, mu, x, ode_tol=ode_tol, h0=_base_gauge(v))
    Pin = phi_input(lam, x)
    inv_Pin = np.array(
        [[Pin[1, 1], -Pin[0, 1]], [-Pin[1, 0], Pin[0, 0]]], dtype=complex
    )  # unit determinant
    return float(np.abs(s_x - Pstar @ s_0 @ inv_Pin).max())


# ---------------------------------------------------------------------------
# Inverse vessel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InverseVesselSnapshot:
    """State of the inverse family at one point."""

    x: float
    Bstar: np.ndarray
    Cstar: np.ndarray
    Xstar: np.ndarray
    t: float = 0.0


def _gamma_star_at(v: VesselData, x: float) -> np.ndarray:
    B = evolve_B(v, x)
    C = evolve_C(v, x)
    X = _X_at(v, x)
    return _gamma_star_from(v, _h0_from(v, B, C, X))


def inverse_vessel_sweep(
    v: VesselData, xs, ode_tol: float = ODE_TOL
) -> list[InverseVesselSnapshot]:
    """Inverse family along a set of x values (one integration per sign).

    Integrates the defining first-order system for (B*, C*, X*) from the
    base point, driven by the forward family's output parameter matrix.
    """
    xs = np.asarray(xs, dtype=float)
    K = v.K
    if K == 0:
        return [
            InverseVesselSnapshot(
                float(x), v.B0.astype(complex), v.C0.astype(complex),
                np.zeros((0, 0), complex),
            )
            for x in xs
        ]
    p = v.params
    s1i, s2 = p.sigma1_inv, p.sigma2
    nB, nX = 4 * K, 4 * K * K

    # The forward wide-operator vector and Gram matrix ride along in the same
    # state so the driving output parameter is closed-form at every stage.
    def pack(c, X, Bs, Cs, Xs):
        return np.concatenate([c, X.ravel(), Bs.ravel(), Cs.ravel(), Xs.ravel()])

    def unpack(y):
        c = y[:nB]
        X = y[nB : nB + nX].reshape(2 * K, 2 * K)
        Bs = y[nB + nX : 2 * nB + nX].reshape(2 * K, 2)
        Cs = y[2 * nB + nX : 3 * nB + nX].reshape(2, 2 * K)
        Xs = y[3 * nB + nX :].reshape(2 * K, 2 * K)
        return c, X, Bs, Cs, Xs

    def rhs(s, y):
        c, X, Bs, Cs, Xs = unpack(y)
        B = _B_stack(v, np.full((K, 1), s))[0] if K else v.B0.astype(complex)
        C = c.reshape((2, 2 * K), order="F")
        H0 = C @ np.linalg.solve(X, B)
        gs = _gamma_star_from(v, H0)
        dc = v.Mx @ c
        dX = B @ s2 @ C
        dBs = (v.Azeta @ Bs @ s2 - Bs @ gs) @ s1i
        dCs = s1i @ (s2 @ Cs @ v.A + gs @ Cs)
        dXs = -Bs @ s2 @ Cs
        return pack(dc, dX, dBs, dCs, dXs)

    y0 = pack(
        v._c0vec.astype(complex),
        np.eye(2 * K, dtype=complex),
        v.B0.astype(complex),
        v.C0.astype(complex),
        np.eye(2 * K, dtype=complex),
    )
    out: dict[float, InverseVesselSnapshot] = {}
    for sgn in (-1.0, 1.0):
        side = sorted({float(x) for x in xs if sgn * x > 0})
        if sgn < 0:
            side = side[::-1]
        if not side:
            continue
        sol = solve_ivp(
            rhs,
            (0.0, side[-1]),
            y0,
            method="RK45",
            rtol=ode_tol,
            atol=ode_tol,
            t_eval=side,
            dense_output=False,
        )
        if not sol.success:
            raise RuntimeError(f"inverse integration failed: {sol.message}")
        for i, s in enumerate(sol.t):
            _, _, Bs, Cs, Xs = unpack(sol.y[:, i])
            out[float(s)] = InverseVesselSnapshot(float(s), Bs, Cs, Xs)
    for x in xs:
        if float(x) == 0.0:
            out[0.0] = InverseVesselSnapshot(
                0.0, v.B0.astype(complex), v.C0.astype(complex),
                np.eye(2 * K, dtype=complex),
            )
    return [out[float(x)] for x in xs]


def inverse_vessel(v: VesselData, x: float, ode_tol: float = ODE_TOL) -> InverseVesselSnapshot:
    """Inverse family at a single x."""
    return inverse_vessel_sweep(v, [float(x)], ode_tol=ode_tol)[0]


def inverse_identity_residuals(
    v: VesselData, inv: InverseVesselSnapshot, snap: VesselSnapshot
) -> dict:
    """All cross-identities tying the inverse family to the forward one."""
    if v.K == 0:
        return {k: 0.0 for k in
                ("xxs", "xsx", "cstar_x", "xstar_b", "cstar_b", "lyapunov")}
    I = np.eye(2 * v.K)
    out = {
        "xxs": float(np.abs(snap.X @ inv.Xstar - I).max()) if v.K else 0.0,
        "xsx": float(np.abs(inv.Xstar @ snap.X - I).max()) if v.K else 0.0,
        "cstar_x": float(np.abs(inv.Cstar @ snap.X - snap.C).max()),
        "xstar_b": float(np.abs(inv.Xstar @ snap.B - inv.Bstar).max()),
        "cstar_b": float(np.abs(inv.Cstar @ snap.B - snap.H0).max()),
        "lyapunov": float(
            np.abs(
                v.Azeta @ inv.Xstar + inv.Xstar @ v.A
                + inv.Bstar @ v.params.sigma1 @ inv.Cstar
            ).max()
        )
        if v.K
        else 0.0,
    }
    return out


# ---------------------------------------------------------------------------
# Moments of the vessel and series recovery of the potential
# ---------------------------------------------------------------------------

def vessel_moments(v: VesselData, snap: VesselSnapshot, n: int) -> np.ndarray:
    """n-th moment C X^{-1} A^n B at the snapshot point."""
    if n < 0:
        raise ValueError("moment index must be nonnegative")
    if v.K == 0:
        return np.zeros((2, 2), complex)
    An = np.diag(np.diag(v.A) ** n)
    return snap.C @ np.linalg.solve(snap.X, An @ snap.B)


def vessel_moments_spectral(
    v: VesselData, x: float, n: int, ode_tol: float = ODE_TOL
) -> np.ndarray:
    """Same moment through the fundamental-matrix sandwich formula.

    sum_k Phi*(i mu_k, x) W_k (i mu_k)^n Phi_adj(mu_k, x), with Phi*
    integrated from the recovered potential; agreement with
    :func:`vessel_moments` is integrator-limited.
    """
    q_eval = vessel_q_evaluator(v, span=abs(x) + 1.0)
    h0 = _base_gauge(v)
    out = np.zeros((2, 2), dtype=complex)
    W = v.meas.weight_matrices()
    for k in range(v.K):
        mu = v.meas.mu[k]
        Pk = phi_star(q_eval, mu, x, ode_tol=ode_tol, h0=h0)
        out += Pk @ W[k] @ ((1j * mu) ** n * phi(mu, x))
    return out


def _mser(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cauchy product of stacked coefficient matrices: out_l = sum A_a B_{l-a}."""
    L = min(A.shape[0], B.shape[0])
    out = np.zeros((L,) + (A.shape[1], B.shape[2]), dtype=complex)
    for l in range(L):
        for a in range(l + 1):
            out[l] += A[a] @ B[l - a]
    return out


def taylor_of_recovered_q(v: VesselData, order: int) -> TruncSeries:
    """Taylor coefficients of the recovered potential at 0, algebraically.

    All x-dependent operators are expanded as matrix-coefficient series
    (the tall operator from the cosine/sinc expansions, the wide operator
    from powers of its vectorized generator), X is integrated termwise,
    inverted as a Neumann series, and q is read off the base moment.  No
    numerical differentiation is involved.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    K = v.K
    L = order + 1
    if K == 0:
        return TruncSeries(np.zeros(L))
    # tall operator as a series in x
    Bs = np.zeros((L, 2 * K, 2), dtype=complex)
    for k in range(K):
        mu = v.meas.mu[k]
        cosc = np.zeros(L, dtype=complex)
        sincc = np.zeros(L, dtype=complex)
        for j in range(0, (L + 1) // 2 + 1):
            if 2 * j < L:
                cosc[2 * j] = (-mu) ** j / math.factorial(2 * j)
            if 2 * j + 1 < L:
                sincc[2 * j + 1] = (-mu) ** j / math.factorial(2 * j + 1)
        Bs[:, 2 * k, 0] = cosc
        Bs[:, 2 * k + 1, 1] = cosc
        Bs[:, 2 * k, 1] = -1j * mu * sincc
        Bs[:, 2 * k + 1, 0] = -1j * sincc
    # wide operator series from generator powers
    Cs = np.zeros((L, 2, 2 * K), dtype=complex)
    vec = v._c0vec.copy()
    Cs[0] = vec.reshape((2, 2 * K), order="F")
    for l in range(1, L):
        vec = (v.Mx @ vec) / l
        Cs[l] = vec.reshape((2, 2 * K), order="F")
    # X = I + antiderivative of B s2 C
    P = _mser(Bs @ v.params.sigma2, Cs)
    Xs = np.zeros((L, 2 * K, 2 * K), dtype=complex)
    Xs[0] = np.eye(2 * K)
    for l in range(1, L):
        Xs[l] = P[l - 1] / l
    # Neumann inversion of X (its zeroth coefficient is the identity)
    Ns = Xs.copy()
    Ns[0] -= np.eye(2 * K)
    Ys = np.zeros_like(Xs)
    for _ in range(L):
        Ys = -_mser(Ns, Ys)
        Ys[0] += np.eye(2 * K)
    H0s = _mser(Cs, _mser(Ys, Bs))
    h11 = H0s[:, 0, 0]
    sq = np.convolve(h11, h11)[:L]
    qs = -2.0 * (1j * (H0s[:, 1, 0] - H0s[:, 0, 1]) - sq)
    return TruncSeries(qs)
