"""Fundamental solutions of the input and output linear systems.

The "input" first-order 2x2 system is potential-free and solved in closed
form; :func:`phi` returns the adjoint-form matrix used as the building
block of the tall operator B, and :func:`phi_input` the plain fundamental
matrix for arbitrary complex spectral parameter.

The "output" system carries a Sturm-Liouville potential q.  Its
fundamental matrix :func:`phi_star` is assembled from the classical
solutions of -y'' + q y = mu y with unit initial data, integrated by an
adaptive high-order scheme together with the running half-integral of q.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .algebra import GAMMA, SIGMA1, SIGMA2

#: Default absolute/relative tolerance for Sturm-Liouville integration.
ODE_TOL = 1e-10


class IntegratorFailure(Exception):
    """The adaptive integrator gave up (step underflow or bad RHS)."""


@dataclass(frozen=True)
class QEvaluator:
    """A real-valued potential with an explicit trust interval.

    ``source`` tags where the values come from ("series" for Taylor
    models, "grid" for tabulated data, "vessel" for recovered potentials).
    """

    fn: Callable[[float], float]
    x_min: float
    x_max: float
    source: str = "series"

    def __call__(self, x: float) -> float:
        if not (self.x_min <= x <= self.x_max):
            raise ValueError(
                f"x={x} outside trust interval [{self.x_min}, {self.x_max}]"
            )
        return float(self.fn(x))


def zero_potential(span: float = 50.0) -> QEvaluator:
    return QEvaluator(lambda x: 0.0, -span, span, source="series")


def phi(mu: float, x) -> np.ndarray:
    """Free-system block at spectral point mu >= 0 (adjoint form).

    Closed form [[cos(r x), -i r sin(r x)], [-i sin(r x)/r, cos(r x)]]
    with r = sqrt(mu); the mu -> 0 limit is [[1, 0], [-i x, 1]].  Unit
    determinant for every (mu, x).  ``x`` may be an array, in which case
    the result has shape x.shape + (2, 2).
    """
    if mu < 0:
        raise ValueError("spectral point must be nonnegative")
    xarr = np.asarray(x, dtype=float)
    out = np.zeros(xarr.shape + (2, 2), dtype=complex)
    if mu == 0.0:
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        out[..., 1, 0] = -1j * xarr
    else:
        r = np.sqrt(mu)
        c = np.cos(r * xarr)
        s = np.sin(r * xarr)
        out[..., 0, 0] = c
        out[..., 1, 1] = c
        out[..., 0, 1] = -1j * r * s
        out[..., 1, 0] = -1j * s / r
    if np.isscalar(x) or xarr.ndim == 0:
        return out.reshape(2, 2)
    return out


def phi_input(lam: complex, x) -> np.ndarray:
    """Fundamental matrix of the free input system at complex lambda.

    Solves u' = M u with M = [[0, i], [lambda, 0]] and unit initial data:
    cosh(w x) I + sinh(w x)/w * M with w = sqrt(i*lambda).  The w -> 0
    degeneration is I + x M.  At lambda = i*mu this is exactly the
    conjugate transpose of :func:`phi`.
    """
    lam = complex(lam)
    xarr = np.asarray(x, dtype=float)
    M = np.array([[0.0, 1j], [lam, 0.0]], dtype=complex)
    w = np.sqrt(1j * lam)
    out = np.zeros(xarr.shape + (2, 2), dtype=complex)
    if abs(w) < 1e-8:
        # sinh(wx)/w = x (1 + (wx)^2/6 + ...) -- keep the quadratic term.
        ch = 1.0 + (w * xarr) ** 2 / 2.0
        sh_over_w = xarr * (1.0 + (w * xarr) ** 2 / 6.0)
    else:
        ch = np.cosh(w * xarr)
        sh_over_w = np.sinh(w * xarr) / w
    out[..., 0, 0] = ch
    out[..., 1, 1] = ch
    out[..., 0, 1] = 1j * sh_over_w
    out[..., 1, 0] = lam * sh_over_w
    if np.isscalar(x) or xarr.ndim == 0:
        return out.reshape(2, 2)
    return out


def input_lde_residual(lam: complex, x_grid) -> float:
    """Finite-difference defect of the free system along a uniform grid.

    Both columns of :func:`phi_input` are pushed through
    lam*s2*u - s1*u' + gamma*u with a central-difference derivative; the
    maximum interior defect is O(h^2) in the grid step.
    """
    xs = np.asarray(x_grid, dtype=float)
    if len(xs) < 3:
        raise ValueError("need at least three grid points")
    h = xs[1] - xs[0]
    if np.abs(np.diff(xs) - h).max() > 1e-12 * max(1.0, abs(h)):
        raise ValueError("grid must be uniform")
    U = phi_input(lam, xs)
    dU = (U[2:] - U[:-2]) / (2.0 * h)
    mid = U[1:-1]
    res = lam * (SIGMA2 @ mid) - SIGMA1 @ dU + GAMMA @ mid
    return float(np.abs(res).max())


def sl_solutions(
    q: QEvaluator, mu: float, x: float, ode_tol: float = ODE_TOL, fp0: float = 0.0
):
    """Solutions of -y'' + q y = mu y with unit data, plus beta(x).

    Returns (phi, phi', psi, psi', beta) at x, where phi(0)=1, phi'(0)=fp0,
    psi(0)=0, psi'(0)=1 and beta is the running half-integral of q.
    """
    if x == 0.0:
        return 1.0, fp0, 0.0, 1.0, 0.0

    def rhs(s, y):
        qs = q(s)
        return [y[1], (qs - mu) * y[0], y[3], (qs - mu) * y[2], 0.5 * qs]

    sol = solve_ivp(
        rhs,
        (0.0, x),
        [1.0, fp0, 0.0, 1.0, 0.0],
        method="RK45",
        rtol=ode_tol,
        atol=ode_tol,
    )
    if not sol.success:
        raise IntegratorFailure(f"Sturm-Liouville integration failed: {sol.message}")
    return tuple(float(v) for v in sol.y[:, -1])


def phi_star(
    q: QEvaluator, mu: float, x: float, ode_tol: float = ODE_TOL, h0: float = 0.0
) -> np.ndarray:
    """Fundamental matrix of the potential-bearing output system.

    Assembled as [[phi, i psi], [-i (phi' + h phi), psi' + h psi]] with
    h(x) = h0 - beta(x) from the Sturm-Liouville solutions; equals the
    identity at x = 0 and reduces to the free fundamental matrix when q
    vanishes.  h0 is the base value of the output gauge function: the
    default 0 gives the plain potential-only system, while a realized node
    needs h0 equal to the (1,1) entry of its base moment so that the
    columns solve the node's own output system.
    """
    if mu < 0:
        raise ValueError("spectral point must be nonnegative")
    f, fp, g, gp, beta = sl_solutions(q, mu, x, ode_tol, fp0=-h0)
    h = h0 - beta
    return np.array(
        [
            [f, 1j * g],
            [-1j * (fp + h * f), gp + h * g],
        ],
        dtype=complex,
    )


def wronskian_check(q: QEvaluator, mu: float, x: float, ode_tol: float = ODE_TOL) -> float:
    """|phi psi' - phi' psi - 1| at x; integrator self-consistency probe."""
    f, fp, g, gp, _ = sl_solutions(q, mu, x, ode_tol)
    return abs(f * gp - fp * g - 1.0)
