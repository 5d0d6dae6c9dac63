"""Signed truncated Stieltjes moment solver and atomic spectral measures.

Given a finite window of real moments m_0..m_{2J-1} (possibly signed),
this module constructs an atomic measure on [0, inf) matching them:

1. split the sequence as m = v - u where v and u are both Stieltjes
   moment sequences (all plain and shifted Hankel matrices positive
   definite), choosing each new entry just above every Schur-complement
   threshold;
2. realize v and u by J-point Gauss quadrature rules (orthogonal
   polynomial three-term recurrence via Cholesky of the Hankel matrix,
   nodes from the Jacobi matrix eigenvalues);
3. subtract the rules and coalesce nearly coincident nodes.

Three scalar problems assembled entrywise produce the 2x2 matrix-weighted
measure consumed by the vessel builder.  Persistence is a small JSON
schema with bit-exact round-tripping.
"""

from __future__ import annotations

import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field

import numpy as np

from .algebra import hankel, is_posdef

MEASURE_SCHEMA = "vesselkit-measure-v1"

#: Weight magnitude above which downstream conditioning degrades.
WEIGHT_GUARD = 1e6

#: Nodes within this of zero (from below) are clamped onto the half line.
NODE_CLAMP_TOL = 1e-8


class HankelNotPD(Exception):
    """A Hankel matrix expected to be positive definite is not."""


class NegativeNode(Exception):
    """A quadrature node landed below the half line beyond clamping tolerance."""


class MeasureFormatError(Exception):
    """Measure file is malformed or carries an unknown schema."""


def merge_tol_for(nodes) -> float:
    """Coalescing tolerance, scaled to the largest node present."""
    top = float(np.max(np.abs(nodes))) if len(nodes) else 0.0
    return 1e-9 * (1.0 + top)


# ---------------------------------------------------------------------------
# Splitting a signed sequence into two Stieltjes sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSequences:
    """A decomposition m = v - u with both halves Stieltjes-admissible."""

    v: np.ndarray
    u: np.ndarray
    m: np.ndarray

    def hankel_families(self):
        """The four matrices whose positivity certifies admissibility."""
        return (
            hankel(self.v, 0),
            hankel(self.v, 1),
            hankel(self.u, 0),
            hankel(self.u, 1),
        )


def _split_nodes(L: int) -> np.ndarray:
    """Fixed support grid for the split: scaled Chebyshev points on (0, 3]."""
    n = max(2 * L, 8)
    k = np.arange(n)
    x = np.cos(np.pi * (2 * k + 1) / (2 * n))[::-1]
    a, b = 0.15, 3.0
    return a + 0.5 * (b - a) * (x + 1.0)


def split_signed(m, margin: float = 1.0) -> SplitSequences:
    """Split a signed moment sequence into a difference of Stieltjes ones.

    A signed atomic pre-measure on a fixed node grid is fit to the window
    (minimum-norm least squares), and both sign parts are padded by a
    shared positive background scaled by ``margin`` (the padding cancels
    in the difference).  v collects the moments of the padded positive
    part and u = v - m exactly; both are then moments of genuine atomic
    measures with spread support on (0, inf), so every plain and shifted
    Hankel window is positive definite with polynomially bounded entries.
    (Greedy Schur-threshold completion also certifies positivity but its
    entries grow doubly exponentially with the window, which destroys the
    quadrature step in double precision.)
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 1 or len(m) == 0:
        raise ValueError("moment sequence must be a nonempty 1-d array")
    if not margin > 0:
        raise ValueError("margin must be positive")
    L = len(m)
    nodes = _split_nodes(L)
    V = nodes[None, :] ** np.arange(L)[:, None]
    w = np.linalg.lstsq(V, m, rcond=None)[0]
    pad = margin / (1.0 + nodes) ** max(L - 2, 1)
    v = V @ (np.clip(w, 0.0, None) + pad)
    u = v - m
    out = SplitSequences(v, u, m)
    for H in out.hankel_families():
        if not is_posdef(H, tol=0.0):
            raise HankelNotPD("split produced a non-PD Hankel family")
    return out


# ---------------------------------------------------------------------------
# Gauss quadrature from a positive definite moment window
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AtomicScalarMeasure:
    """Finitely many weighted points; weights may be signed."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be matching 1-d arrays")
        if len(nodes) > 1 and not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        if not (np.all(np.isfinite(nodes)) and np.all(np.isfinite(weights))):
            raise ValueError("nodes and weights must be finite")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.nodes)

    def moment(self, n: int) -> float:
        if len(self.nodes) == 0:
            return 0.0
        return float(np.sum(self.weights * self.nodes ** n))


def _polish_rule(nodes, weights, v, iters: int = 4):
    """Newton refinement of a quadrature rule against its moment window.

    The Cholesky/Jacobi construction loses about cond(Hankel) digits of
    moment matching; a few Newton steps on the 2J equations
    sum_j w_j x_j^n = v_n (unknowns: J weights and J nodes) bring the
    residual back to roundoff.  Falls back to the input rule whenever the
    Newton system degenerates or fails to improve.
    """
    J = len(nodes)
    if J == 0:
        return nodes, weights
    ns = np.arange(2 * J)
    scale = np.maximum(1.0, np.abs(v))

    def residual(x, w):
        P = x[None, :] ** ns[:, None]
        F = P @ w - v
        return F, P, float(np.max(np.abs(F) / scale))

    x, w = nodes.copy(), weights.copy()
    F, P, best_res = residual(x, w)
    best = (x.copy(), w.copy())
    for _ in range(iters):
        with np.errstate(divide="ignore", invalid="ignore"):
            dP = ns[:, None] * w[None, :] * x[None, :] ** (ns[:, None] - 1)
        dP[0, :] = 0.0
        dP = np.nan_to_num(dP, nan=0.0, posinf=0.0, neginf=0.0)
        jac = np.hstack([P, dP])
        try:
            step = np.linalg.solve(jac, -F)
        except np.linalg.LinAlgError:
            break
        w = w + step[:J]
        x = x + step[J:]
        F, P, res = residual(x, w)
        if res < best_res:
            best_res, best = res, (x.copy(), w.copy())
        if res < 1e-15:
            break
    x, w = best
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    if len(x) > 1 and np.any(np.diff(x) <= 0.0):
        return nodes, weights  # collision: keep the spectral rule
    return x, w


def gauss_atoms(
    v,
    nonneg: bool = True,
    node_clamp_tol: float = NODE_CLAMP_TOL,
) -> AtomicScalarMeasure:
    """J-point quadrature matching moments v_0..v_{2J-1} of a PD window.

    The Jacobi matrix of the underlying orthogonal polynomials is
    L^{-1} H' L^{-T} with H = Hankel(v), H' its shift and L the Cholesky
    factor of H; nodes are its eigenvalues, weights v_0 times the squared
    first eigenvector components, and the rule is then polished by Newton
    iteration on the moment equations to remove the conditioning loss of
    the factorization.  With the shifted Hankel also positive definite
    the nodes land on (0, inf); ``nonneg=False`` relaxes that (plain
    Hamburger data) and skips the sign check.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or len(v) < 2 or len(v) % 2:
        raise ValueError("need an even number (>= 2) of moments")
    J = len(v) // 2
    H = hankel(v[: 2 * J - 1], 0)
    Hs = hankel(v, 1)
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise HankelNotPD(f"moment window is not positive definite: {exc}") from exc
    Y = np.linalg.solve(L, Hs)
    T = np.linalg.solve(L, Y.T).T
    T = 0.5 * (T + T.T)
    nodes, U = np.linalg.eigh(T)
    weights = v[0] * U[0, :] ** 2
    nodes, weights = _polish_rule(nodes, weights, v)
    if nonneg:
        low = nodes.min() if len(nodes) else 0.0
        if low < -node_clamp_tol:
            raise NegativeNode(f"node {low:.3e} below the half line")
        nodes = np.maximum(nodes, 0.0)
    return AtomicScalarMeasure(nodes, weights)


def _coalesce(nodes: np.ndarray, weight_rows: np.ndarray, tol: float):
    """Merge sorted nodes closer than tol, summing weight rows."""
    if len(nodes) == 0:
        return np.zeros(0), np.zeros((0,) + weight_rows.shape[1:])
    out_nodes = []
    out_rows = []
    for k in np.argsort(nodes, kind="stable"):
        if out_nodes and nodes[k] - out_nodes[-1] <= tol:
            out_rows[-1] = out_rows[-1] + weight_rows[k]
        else:
            out_nodes.append(float(nodes[k]))
            out_rows.append(weight_rows[k].astype(float, copy=True))
    return np.asarray(out_nodes), np.asarray(out_rows)


def solve_signed_stieltjes(m, margin: float = 1.0) -> AtomicScalarMeasure:
    """Atomic signed measure on [0, inf) matching a signed moment window.

    Composition of :func:`split_signed` and two Gauss rules; the negative
    part enters with inverted weights, coincident nodes are merged, and
    exact cancellations are dropped.
    """
    m = np.asarray(m, dtype=float)
    split = split_signed(m, margin=margin)
    pos = gauss_atoms(split.v[: 2 * (len(m) // 2)])
    neg = gauss_atoms(split.u[: 2 * (len(m) // 2)])
    nodes = np.concatenate([pos.nodes, neg.nodes])
    weights = np.concatenate([pos.weights, -neg.weights])
    nodes, rows = _coalesce(nodes, weights[:, None], merge_tol_for(nodes))
    keep = rows[:, 0] != 0.0
    measure = AtomicScalarMeasure(nodes[keep], rows[keep, 0])
    if len(measure) and np.abs(measure.weights).max() > WEIGHT_GUARD:
        warnings.warn(
            "measure weights exceed 1e6; tau conditioning will degrade",
            RuntimeWarning,
            stacklevel=2,
        )
    return measure


# ---------------------------------------------------------------------------
# Matrix-weighted measures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralMeasure:
    """Atoms mu_k >= 0 with self-adjoint weights [[w11, i w12], [-i w12, w22]]."""

    mu: np.ndarray
    w11: np.ndarray
    w12: np.ndarray
    w22: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        fields = {}
        for name in ("w11", "w12", "w22"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != mu.shape:
                raise ValueError(f"{name} shape {arr.shape} != mu shape {mu.shape}")
            fields[name] = arr
        if len(mu) and mu.min() < -NODE_CLAMP_TOL:
            raise ValueError(f"atom location {mu.min():.3e} below the half line")
        mu = np.maximum(mu, 0.0)
        if len(mu) > 1 and not np.all(np.diff(mu) > 0):
            raise ValueError("atom locations must be strictly increasing")
        object.__setattr__(self, "mu", mu)
        for name, arr in fields.items():
            object.__setattr__(self, name, arr)

    @property
    def K(self) -> int:
        return len(self.mu)

    def weight_matrix(self, k: int) -> np.ndarray:
        return np.array(
            [
                [self.w11[k], 1j * self.w12[k]],
                [-1j * self.w12[k], self.w22[k]],
            ],
            dtype=complex,
        )

    def weight_matrices(self) -> np.ndarray:
        W = np.zeros((self.K, 2, 2), dtype=complex)
        W[:, 0, 0] = self.w11
        W[:, 0, 1] = 1j * self.w12
        W[:, 1, 0] = -1j * self.w12
        W[:, 1, 1] = self.w22
        return W

    def scaled(self, factor: float) -> "SpectralMeasure":
        return SpectralMeasure(
            self.mu.copy(),
            factor * self.w11,
            factor * self.w12,
            factor * self.w22,
            dict(self.meta),
        )


def assemble_measure(r, b, d, margin: float = 1.0, meta: dict | None = None) -> SpectralMeasure:
    """Matrix measure whose structured moments reproduce three real windows.

    Solves one signed scalar problem per weight channel (r -> w11,
    b -> w12, d -> w22) and merges the three node sets; a node missing
    from a channel simply carries zero weight there.
    """
    r = np.asarray(r, dtype=float)
    b = np.asarray(b, dtype=float)
    d = np.asarray(d, dtype=float)
    if not (len(r) == len(b) == len(d)):
        raise ValueError("the three moment windows must have equal length")
    window = 2 * (len(r) // 2)
    parts = [
        solve_signed_stieltjes(seq[:window], margin=margin) for seq in (r, b, d)
    ]
    nodes = np.concatenate([p.nodes for p in parts])
    rows = []
    for ch, p in enumerate(parts):
        block = np.zeros((len(p), 3))
        block[:, ch] = p.weights
        rows.append(block)
    rows = np.concatenate(rows, axis=0) if len(nodes) else np.zeros((0, 3))
    nodes, rows = _coalesce(nodes, rows, merge_tol_for(nodes))
    full_meta = {"moment_window": window, "source": ""}
    if meta:
        full_meta.update(meta)
    return SpectralMeasure(
        nodes, rows[:, 0], rows[:, 1], rows[:, 2], full_meta
    )


def measure_moments(meas: SpectralMeasure, n: int) -> np.ndarray:
    """n-th structured moment: sum_k (i mu_k)^n W_k (exact finite sum)."""
    if n < 0:
        raise ValueError("moment index must be nonnegative")
    if meas.K == 0:
        return np.zeros((2, 2), dtype=complex)
    factors = (1j * meas.mu.astype(complex)) ** n
    return np.einsum("k,kij->ij", factors, meas.weight_matrices())


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_measure(meas: SpectralMeasure, path: str) -> None:
    """Write a measure as schema-v1 JSON (atomically, 17 significant digits)."""
    atoms = []
    for k in range(meas.K):
        atoms.append(
            "    {"
            + f'"mu": {_fmt(meas.mu[k])}, "w11": {_fmt(meas.w11[k])}, '
            + f'"w12": {_fmt(meas.w12[k])}, "w22": {_fmt(meas.w22[k])}'
            + "}"
        )
    window = int(meas.meta.get("moment_window", 0))
    source = json.dumps(str(meas.meta.get("source", "")))
    body = (
        "{\n"
        + f'  "schema": "{MEASURE_SCHEMA}",\n'
        + '  "atoms": [\n'
        + ",\n".join(atoms)
        + ("\n" if atoms else "")
        + "  ],\n"
        + f'  "meta": {{"moment_window": {window}, "source": {source}}}\n'
        + "}\n"
    )
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(body)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_measure(path: str) -> SpectralMeasure:
    """Read a schema-v1 measure; unknown fields warn, missing ones fail."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MeasureFormatError(f"cannot read measure file {path!r}: {exc}") from exc
    if not isinstance(raw, dict) or raw.get("schema") != MEASURE_SCHEMA:
        raise MeasureFormatError(
            f"unsupported measure schema {raw.get('schema') if isinstance(raw, dict) else raw!r}"
        )
    known_top = {"schema", "atoms", "meta"}
    extra = set(raw) - known_top
    if extra:
        warnings.warn(f"ignoring unknown measure fields {sorted(extra)}", stacklevel=2)
    if "atoms" not in raw:
        raise MeasureFormatError("measure file missing 'atoms'")
    mu, w11, w12, w22 = [], [], [], []
    for k, atom in enumerate(raw["atoms"]):
        for fieldname in ("mu", "w11", "w12", "w22"):
            if fieldname not in atom:
                raise MeasureFormatError(f"atom {k} missing field {fieldname!r}")
        unknown = set(atom) - {"mu", "w11", "w12", "w22"}
        if unknown:
            warnings.warn(
                f"ignoring unknown atom fields {sorted(unknown)}", stacklevel=2
            )
        mu.append(float(atom["mu"]))
        w11.append(float(atom["w11"]))
        w12.append(float(atom["w12"]))
        w22.append(float(atom["w22"]))
    meta = raw.get("meta", {}) or {}
    return SpectralMeasure(
        np.asarray(mu), np.asarray(w11), np.asarray(w12), np.asarray(w22), dict(meta)
    )
