"""Forward moment engine: potential Taylor series -> moment matrices.

Given a potential q as a truncated series, this module generates the
2x2 moment matrices H_0(x), H_1(x), ... as series in x and extracts their
structured initial values.  Each level is determined by the previous one
through first-order ODEs in x (solved exactly on truncated series), at
the cost of two series orders per level, plus one free real constant per
level (the value of the (2,2) entry at 0).

At x = 0 every moment has the rigid form

    H_n(0) = i^n * [[r, i b], [-i b, d]]      (r, b, d real)

and the triples (r_n, b_n, d_n) are the data handed to the signed moment
solver to build a spectral measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import TruncSeries

#: Tolerance on the imaginary residue of the structured triples at x=0.
STRUCT_TOL = 1e-10


class StructureViolation(Exception):
    """A quantity violated its rigid algebraic shape beyond tolerance."""


class OrderExhausted(Exception):
    """Not enough series order left to advance the recursion."""


@dataclass(frozen=True)
class PotentialModel:
    """A potential q with its derived accumulants.

    beta is the half-integral of q from 0 (so beta(0) = 0 and q = 2*beta'),
    and pi11 = beta' - beta**2 is the coefficient that appears in the
    linkage matrix alongside beta.
    """

    q: TruncSeries
    beta: TruncSeries = field(init=False)
    pi11: TruncSeries = field(init=False)

    def __post_init__(self):
        beta = self.q.antider(0.0) * 0.5
        pi11 = beta.diff() - beta * beta
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "pi11", pi11)

    @staticmethod
    def from_coefficients(coeffs) -> "PotentialModel":
        return PotentialModel(TruncSeries(coeffs))

    def gamma_star_series(self):
        """Entries of the output parameter matrix [[-i*pi11, -beta], [beta, i]]."""
        return [
            [self.pi11 * (-1j), -self.beta],
            [self.beta, TruncSeries.const(1j, self.pi11.order)],
        ]


@dataclass(frozen=True)
class MomentMatrixSeries:
    """One moment level: four series entries plus bookkeeping."""

    n: int
    h11: TruncSeries
    h12: TruncSeries
    h21: TruncSeries
    h22: TruncSeries
    h22_init: float = 0.0

    @property
    def order(self) -> int:
        """Trust order of the least-resolved entry."""
        return min(e.order for e in (self.h11, self.h12, self.h21, self.h22))

    def at_zero(self) -> np.ndarray:
        return np.array(
            [[self.h11[0], self.h12[0]], [self.h21[0], self.h22[0]]], dtype=complex
        )


@dataclass(frozen=True)
class MomentTable:
    """Moment levels 0..M with their structured triples at x = 0."""

    entries: list
    triples: list

    def __len__(self) -> int:
        return len(self.entries)

    def triple_arrays(self):
        t = np.asarray(self.triples, dtype=float)
        return t[:, 0].copy(), t[:, 1].copy(), t[:, 2].copy()


def _closure_h22(h12: TruncSeries, p: PotentialModel, init: complex) -> TruncSeries:
    # The (2,2) entry is pinned, up to a constant, by the requirement that
    # the level's internal ODE system closes: 2i * h22' = h12'' - 2*beta*h12'.
    rhs = (h12.diff().diff() - 2.0 * (p.beta * h12.diff())) * (1.0 / 2.0j)
    return rhs.antider(init)


def build_h0(p: PotentialModel, h22_init: float = 0.0) -> MomentMatrixSeries:
    """Base moment level from the potential's accumulants.

    h11 = -beta, off-diagonals are -+ i*pi11/2, and h22 integrates the
    closure ODE from the supplied real constant.
    """
    h11 = -p.beta
    h12 = p.pi11 * (-0.5j)
    h21 = -h12
    h22 = _closure_h22(h12, p, h22_init)
    return MomentMatrixSeries(0, h11, h12, h21, h22, float(h22_init))


def next_moment(
    Hn: MomentMatrixSeries,
    p: PotentialModel,
    h22_init: float = 0.0,
    sum_init: float = 0.0,
) -> MomentMatrixSeries:
    """Advance one moment level; consumes two series orders.

    The (1,1) entry is algebraic in the previous level; the difference of
    the off-diagonals is algebraic in the new (1,1); their sum and the
    (2,2) entry integrate first-order ODEs from caller-chosen constants
    (scaled by i^(n+1) so the constants stay real in the structured form).
    """
    if Hn.order < 2:
        raise OrderExhausted(
            f"level {Hn.n} has order {Hn.order}; need >= 2 to advance"
        )
    n1 = Hn.n + 1
    beta, pi11 = p.beta, p.pi11
    p11 = 1j * Hn.h22 - Hn.h12.diff() + beta * Hn.h12
    dif = 1j * (p11.diff() - beta * p11)
    ssum = ((-1j) * (pi11 * p11) + beta * dif).antider(1j ** (n1 + 1) * sum_init)
    p12 = (ssum + dif) * 0.5
    p21 = (ssum - dif) * 0.5
    p22 = _closure_h22(p12, p, 1j ** n1 * h22_init)
    return MomentMatrixSeries(n1, p11, p12, p21, p22, float(h22_init))


def moments_at_zero(
    p: PotentialModel,
    M: int,
    inits=None,
    struct_tol: float = STRUCT_TOL,
) -> MomentTable:
    """Moment levels 0..M with structured triples extracted at x = 0.

    ``inits`` supplies the free real (2,2) constants, one per level
    (default all zero).  Raises :class:`OrderExhausted` if q carries
    fewer than 2M+2 Taylor coefficients past the constant term, and
    :class:`StructureViolation` if any extracted triple has an imaginary
    residue above ``struct_tol`` (which would signal a recursion bug or
    invalid initial data, not roundoff).
    """
    if inits is None:
        inits = [0.0] * (M + 1)
    if len(inits) < M + 1:
        raise ValueError(f"need {M + 1} initial constants, got {len(inits)}")
    if p.q.order < 2 * M + 2:
        raise OrderExhausted(
            f"potential order {p.q.order} < {2 * M + 2} required for M={M}"
        )
    entries = [build_h0(p, inits[0])]
    for n in range(M):
        entries.append(next_moment(entries[-1], p, h22_init=inits[n + 1]))
    triples = []
    for H in entries:
        scale = (-1j) ** H.n
        h11_0 = H.h11[0] * scale
        h12_0 = H.h12[0] * scale
        h21_0 = H.h21[0] * scale
        h22_0 = H.h22[0] * scale
        r, b, d = h11_0.real, h12_0.imag, h22_0.real
        resid = max(
            abs(h11_0.imag),
            abs(h12_0.real),
            abs(h21_0.real),
            abs(h12_0 + h21_0),
            abs(h22_0.imag),
        )
        if resid > struct_tol:
            raise StructureViolation(
                f"moment level {H.n} off its structured form by {resid:.3e}"
            )
        triples.append((r, b, d))
    return MomentTable(entries, triples)


# ---------------------------------------------------------------------------
# Consistency diagnostics
# ---------------------------------------------------------------------------

def _mat(H: MomentMatrixSeries):
    return [[H.h11, H.h12], [H.h21, H.h22]]


def _matmul2(A, B):
    out = []
    for i in range(2):
        row = []
        for j in range(2):
            row.append(A[i][0] * B[0][j] + A[i][1] * B[1][j])
        out.append(row)
    return out


def _matsub(A, B):
    return [[A[i][j] - B[i][j] for j in range(2)] for i in range(2)]


def _matadd(A, B):
    return [[A[i][j] + B[i][j] for j in range(2)] for i in range(2)]


def _max_coeff(A) -> float:
    worst = 0.0
    for row in A:
        for e in row:
            worst = max(worst, float(np.abs(e.coeffs).max()))
    return worst


# Constant 2x2 matrices in scalar form (entries are exact scalars).
_S1S2 = [[0.0, 0.0], [1.0, 0.0]]   # sigma1^{-1} sigma2
_S2S1 = [[0.0, 1.0], [0.0, 0.0]]   # sigma2 sigma1^{-1}
_GS1 = [[0.0, 0.0], [1j, 0.0]]     # gamma sigma1^{-1}


def _scalar_matmul(S, B):
    """Product of a scalar 2x2 matrix with a series 2x2 matrix."""
    out = []
    for i in range(2):
        row = []
        for j in range(2):
            row.append(S[i][0] * B[0][j] + S[i][1] * B[1][j])
        out.append(row)
    return out


def _matmul_scalar(A, S):
    out = []
    for i in range(2):
        row = []
        for j in range(2):
            row.append(A[i][0] * S[0][j] + A[i][1] * S[1][j])
        out.append(row)
    return out


def dhn_residual(table: MomentTable, p: PotentialModel) -> float:
    """Residual of the level-coupling ODE over all adjacent pairs.

    For each n the derivative of H_n must equal
    s1^{-1} s2 H_{n+1} - H_{n+1} s2 s1^{-1} + s1^{-1} gstar H_n - H_n gamma s1^{-1},
    coefficientwise as series.  Returns the worst coefficient magnitude of
    the defect; self-consistent tables sit at roundoff.
    """
    if len(table) < 2:
        raise ValueError("need at least two moment levels")
    gs = p.gamma_star_series()
    # sigma1^{-1} gstar with sigma1 = [[0,1],[1,0]] swaps the rows of gstar.
    s1gs = [gs[1], gs[0]]
    worst = 0.0
    for n in range(len(table) - 1):
        Hn = _mat(table.entries[n])
        Hn1 = _mat(table.entries[n + 1])
        dHn = [[Hn[i][j].diff() for j in range(2)] for i in range(2)]
        rhs = _matadd(
            _matsub(_scalar_matmul(_S1S2, Hn1), _matmul_scalar(Hn1, _S2S1)),
            _matsub(_matmul2(s1gs, Hn), _matmul_scalar(Hn, _GS1)),
        )
        worst = max(worst, _max_coeff(_matsub(dHn, rhs)))
    return worst


def recovered_potential(H0: MomentMatrixSeries) -> TruncSeries:
    """Reconstruct q from the base moment: -2*(i*(h21 - h12) - h11**2).

    For tables built by this module the result reproduces the input q
    coefficientwise; the vessel applies the same closed form to its own
    base moment.
    """
    return (1j * (H0.h21 - H0.h12) - H0.h11 * H0.h11) * (-2.0)
