"""Command-line interface.

Subcommands:

* ``realize``   -- polynomial potential -> atomic spectral measure (JSON)
* ``evolve``    -- measure -> field on an (x, t) grid (CSV)
* ``verify``    -- run the invariant suite against a measure file
* ``roundtrip`` -- potential -> measure -> vessel -> Taylor coefficients,
  compared against the input
* ``soliton``   -- write a bundled demonstration measure, field and report

All outputs are deterministic (no timestamps, fixed float format) and
written atomically.  Exit codes are part of the contract; see each
command's docstring.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from .kdv import (
    GridTooCoarse,
    estimate_Tx,
    gamma_star_t_residual,
    kdv_residual,
    q_field,
    xt_inverse_residual,
)
from .moments import PotentialModel, StructureViolation, moments_at_zero
from .spectrum import (
    HankelNotPD,
    MeasureFormatError,
    SpectralMeasure,
    assemble_measure,
    load_measure,
    measure_moments,
    save_measure,
)
from .vessel import (
    OmegaBoundary,
    backlund_check,
    build_node,
    grid_snapshots,
    integrate_X,
    inverse_identity_residuals,
    inverse_vessel_sweep,
    snapshot,
    solve_X,
    taylor_of_recovered_q,
    vessel_moments,
)

_FLOAT_FMT = "%.17g"

#: defaults; a config file and then command-line flags override these
_DEFAULTS = {
    "order": 8,
    "grid": "-4:4:161,-0.3:0.3:25",
    "tau_floor": 1e-10,
    "margin": 1.0,
    "h22_init": 0.0,
    "out_dir": ".",
}


# ---------------------------------------------------------------------------
# Deterministic serialization
# ---------------------------------------------------------------------------

def _jval(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if not np.isfinite(f):
            return '"inf"' if f > 0 else ('"-inf"' if f < 0 else '"nan"')
        return _FLOAT_FMT % f
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_jval(x) for x in v) + "]"
    if isinstance(v, dict):
        items = ", ".join(f"{json.dumps(str(k))}: {_jval(x)}" for k, x in v.items())
        return "{" + items + "}"
    if v is None:
        return "null"
    raise TypeError(f"cannot serialize {type(v)!r}")


def _write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_report(path: str, payload: dict) -> None:
    _write_text(path, _jval(payload) + "\n")


def _field_csv(field) -> str:
    lines = ["x,t,tau_re,tau_im,q_re,q_im,in_omega"]
    f = _FLOAT_FMT
    for i, t in enumerate(field.t):
        for j, x in enumerate(field.x):
            tau = field.tau[i, j]
            q = field.q[i, j]
            lines.append(
                ",".join(
                    (
                        f % x, f % t,
                        f % tau.real, f % tau.imag,
                        f % q.real, f % q.imag,
                        "1" if field.in_omega[i, j] else "0",
                    )
                )
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

def _load_config(args) -> dict:
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            file_cfg = json.load(fh)
        for k in cfg:
            if k in file_cfg:
                cfg[k] = file_cfg[k]
    overrides = {
        "order": args.order,
        "grid": args.grid,
        "tau_floor": args.tol_tau_floor,
        "margin": args.margin,
        "h22_init": args.h22_init,
        "out_dir": args.out_dir,
    }
    for k, val in overrides.items():
        if val is not None:
            cfg[k] = val
    cfg["order"] = int(cfg["order"])
    cfg["tau_floor"] = float(cfg["tau_floor"])
    cfg["margin"] = float(cfg["margin"])
    cfg["h22_init"] = float(cfg["h22_init"])
    return cfg


def _parse_grid(spec: str):
    """'a:b:n[,c:d:m]' -> (x array, t array or None)."""

    def one(part):
        bits = part.split(":")
        if len(bits) != 3:
            raise ValueError(f"bad grid component {part!r}; expected MIN:MAX:N")
        a, b, n = float(bits[0]), float(bits[1]), int(bits[2])
        if n < 1:
            raise ValueError("grid needs at least one point")
        return np.linspace(a, b, n)

    parts = spec.split(",")
    if len(parts) == 1:
        return one(parts[0]), None
    if len(parts) == 2:
        return one(parts[0]), one(parts[1])
    raise ValueError(f"bad grid spec {spec!r}")


def _parse_coeffs(text: str) -> list[float]:
    vals = [float(tok) for tok in text.replace(" ", "").split(",") if tok != ""]
    if not vals:
        raise ValueError("empty coefficient list")
    return vals


# ---------------------------------------------------------------------------
# Shared pipeline pieces
# ---------------------------------------------------------------------------

def _inits(order, h22_init):
    return [float(h22_init)] * (order + 1)


def _realize_measure(coeffs, order, margin, h22_init):
    """Polynomial coefficients -> (measure, triples (r, b, d))."""
    need = 2 * order + 3  # coefficients required to run the window
    padded = list(coeffs) + [0.0] * max(0, need - len(coeffs))
    model = PotentialModel.from_coefficients(padded)
    table = moments_at_zero(model, order, inits=_inits(order, h22_init))
    r, b, d = table.triple_arrays()
    src = _jval(
        {
            "coefficients": [float(c) for c in coeffs],
            "order": order,
            "margin": margin,
            "h22_init": h22_init,
        }
    )
    meas = assemble_measure(r, b, d, margin=margin)
    meta = dict(meas.meta)
    meta["source"] = src
    meas = SpectralMeasure(meas.mu, meas.w11, meas.w12, meas.w22, meta=meta)
    return meas, (r, b, d)


def _moment_match_residuals(meas: SpectralMeasure, r, b, d) -> list[float]:
    out = []
    for n in range(2 * (len(r) // 2)):  # only the even-length window is matched
        target = (1j**n) * np.array(
            [[r[n], 1j * b[n]], [-1j * b[n], d[n]]], dtype=complex
        )
        got = measure_moments(meas, n)
        scale = max(1.0, float(np.abs(target).max()))
        out.append(float(np.abs(got - target).max()) / scale)
    return out


def _moment_match_residual(meas: SpectralMeasure, r, b, d) -> float:
    return max(_moment_match_residuals(meas, r, b, d), default=0.0)


# Atom weights for "one" and "two" place the nearest tau valley roughly
# 0.9 units outside the demonstration window [-5, 5] x [-1, 1]: inside the
# window tau stays bounded away from zero, the evolution residual stays
# below 1e-4 at steps (0.01, 0.001), and halving both steps improves it
# by well over 4x.  The "signed" entry demonstrates an indefinite weight.
_BUNDLED = {
    "one": {"mu": [0.3], "w11": [0.277], "w12": [0.0], "w22": [0.0]},
    "two": {
        "mu": [0.15, 0.3],
        "w11": [0.291, 0.1],
        "w12": [0.0, 0.0],
        "w22": [0.0, 0.0],
    },
    "signed": {
        "mu": [1.0, 2.5],
        "w11": [0.12, -0.05],
        "w12": [0.0, 0.0],
        "w22": [0.0, 0.0],
    },
}


_BUNDLED_ALIASES = {
    "one-atom": "one",
    "two-atom": "two",
    "signed-two-atom": "signed",
}


def bundled_measure(name: str) -> SpectralMeasure:
    """One of the shipped demonstration measures (one, two, signed)."""
    key = name.strip().lower()
    key = _BUNDLED_ALIASES.get(key, key)
    if key not in _BUNDLED:
        raise KeyError(f"unknown bundled measure {name!r}")
    spec = _BUNDLED[key]
    return SpectralMeasure(
        np.array(spec["mu"]),
        np.array(spec["w11"]),
        np.array(spec["w12"]),
        np.array(spec["w22"]),
        meta={"moment_window": 0, "source": ""},
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_realize(args) -> int:
    """Potential -> measure.  Exit 2: structure violation; 3: I/O failure."""
    cfg = _load_config(args)
    try:
        coeffs = _parse_coeffs(args.q)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    order = cfg["order"]
    if len(coeffs) < 2 * order + 2:
        print(
            f"structure violation: order {order} needs at least {2 * order + 2} "
            f"coefficients, got {len(coeffs)} (pad with zeros for a polynomial)",
            file=sys.stderr,
        )
        return 2
    try:
        meas, (r, b, d) = _realize_measure(
            coeffs, order, cfg["margin"], cfg["h22_init"]
        )
    except (StructureViolation, HankelNotPD) as exc:
        print(f"structure violation: {exc}", file=sys.stderr)
        return 2
    resids = _moment_match_residuals(meas, r, b, d)
    worst = max(resids, default=0.0)
    out = args.out or os.path.join(cfg["out_dir"], "measure.json")
    report = args.report or os.path.join(cfg["out_dir"], "realize_report.json")
    try:
        save_measure(meas, out)
        _write_report(
            report,
            {
                "command": "realize",
                "atoms": meas.K,
                "moment_window": order,
                "triples": {
                    "r": [float(x) for x in r],
                    "b": [float(x) for x in b],
                    "d": [float(x) for x in d],
                },
                "match_residuals": resids,
                "match_residual": worst,
                "measure": out,
            },
        )
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    print(f"realize: {meas.K} atoms, window {order}, match residual {worst:.3e}")
    return 0


def cmd_evolve(args) -> int:
    """Measure -> field CSV + residual report.  Exit 2: bad measure file; 4: region empty."""
    cfg = _load_config(args)
    try:
        meas = load_measure(args.measure)
    except (MeasureFormatError, OSError) as exc:
        print(f"measure error: {exc}", file=sys.stderr)
        return 2
    xs, ts = _parse_grid(cfg["grid"])
    if ts is None:
        ts = np.array([0.0])
    v = build_node(meas)
    field = q_field(v, xs, ts, tau_floor=cfg["tau_floor"])
    if not field.in_omega.any():
        print("error: invertibility region is empty on this grid", file=sys.stderr)
        return 4
    out = args.out or os.path.join(cfg["out_dir"], "field.csv")
    _write_text(out, _field_csv(field))
    warning = None
    try:
        res = kdv_residual(field)
    except (GridTooCoarse, OmegaBoundary) as exc:
        res, warning = None, str(exc)
    # window half-width estimates on at most 33 x samples
    stride = max(1, (len(xs) - 1) // 32) if len(xs) > 1 else 1
    windows = []
    for x in xs[::stride]:
        tx = estimate_Tx(v, float(x))
        windows.append({"x": float(x), "halfwidth": tx})
    inside = np.abs(field.tau[field.in_omega])
    report = args.report or os.path.join(cfg["out_dir"], "evolve_report.json")
    _write_report(
        report,
        {
            "command": "evolve",
            "atoms": meas.K,
            "grid": {"nx": len(xs), "nt": len(ts)},
            "evolution_residual": res,
            "warning": warning,
            "region_fraction": float(field.in_omega.mean()),
            "region_points": int(field.in_omega.sum()),
            "min_abs_tau": float(inside.min()) if len(inside) else None,
            "identity_defect": field.lyap_max,
            "t_windows": windows,
        },
    )
    frac = float(field.in_omega.mean())
    print(f"evolve: {len(ts)}x{len(xs)} grid, {frac:.1%} inside the region -> {out}")
    if warning:
        print(f"warning: {warning}")
    return 0


def _verify_measure(meas: SpectralMeasure, cfg) -> tuple[list[str], bool]:
    lines = []
    ok = True

    def check(name, tol, fn):
        nonlocal ok
        try:
            with np.errstate(over="raise", invalid="raise"):
                value = fn()
        except Exception as exc:  # a blown-up check is a failed check
            ok = False
            lines.append(f"FAIL {name}: {type(exc).__name__}: {exc}")
            return
        good = value <= tol
        ok = ok and good
        lines.append(f"{'PASS' if good else 'FAIL'} {name}: {value:.3e} (tol {tol:.1e})")

    v = build_node(meas)
    check("node-identity", 1e-13, v.node_residual)

    def sweep_and_shape():
        xs = np.linspace(-2.0, 2.0, 41)
        grid = grid_snapshots(v, xs, tau_floor=cfg["tau_floor"])
        gs = grid.gamma_star[grid.in_omega]
        shape = max(
            float(np.abs(gs[:, 1, 1] - 1j).max()),
            float(np.abs(gs[:, 0, 1] + gs[:, 1, 0]).max()),
            float(np.abs(gs[:, 0, 0].real).max()),
        ) if len(gs) else 0.0
        return grid.lyap_max, shape

    try:
        with np.errstate(over="raise", invalid="raise"):
            lyap_max, shape = sweep_and_shape()
        check("sweep-identity", 1e-8, lambda: lyap_max)
        check("output-parameter-shape", 1e-8, lambda: shape)
    except Exception as exc:
        ok = False
        lines.append(f"FAIL sweep-identity: {type(exc).__name__}: {exc}")
        lines.append(f"FAIL output-parameter-shape: {type(exc).__name__}: {exc}")

    if v.separation > 1e-8 and v.K:
        def gram_two_ways():
            worst = 0.0
            for x in (-1.5, 0.7, 2.3):
                s = snapshot(v, x)
                d = np.abs(solve_X(v, s.B, s.C) - integrate_X(v, x)).max()
                worst = max(worst, float(d))
            return worst

        check("gram-two-ways", 1e-8, gram_two_ways)
    else:
        lines.append("SKIP gram-two-ways: degenerate spectra (quadrature path only)")

    check(
        "output-system-defect", 1e-4,
        lambda: backlund_check(v, np.linspace(-1.0, 1.0, 2001), 1.0 + 1.0j),
    )

    def trace_formula():
        # H0_11 against the log-determinant derivative tau'/tau
        if v.K == 0:
            return 0.0
        xs_tr = np.linspace(-1.0, 1.0, 201)
        g_tr = grid_snapshots(v, xs_tr, tau_floor=cfg["tau_floor"])
        h = xs_tr[1] - xs_tr[0]
        ok3 = g_tr.in_omega[:-2] & g_tr.in_omega[1:-1] & g_tr.in_omega[2:]
        dlog = (g_tr.tau[2:] - g_tr.tau[:-2]) / (2.0 * h * g_tr.tau[1:-1])
        h11 = g_tr.H0[1:-1, 0, 0]
        return float(np.abs((dlog - h11)[ok3]).max()) if ok3.any() else 0.0

    check("trace-formula", 1e-4, trace_formula)

    def moment_equations():
        # centered x-derivative of the n-th moment vs the closed form from
        # the (n+1)-st moment and the output parameter
        p = v.params
        s1i, s2 = p.sigma1_inv, p.sigma2
        delta = 1e-3
        worst = 0.0
        sc = snapshot(v, 0.4, tau_floor=cfg["tau_floor"])
        sp = snapshot(v, 0.4 + delta, tau_floor=cfg["tau_floor"])
        sm = snapshot(v, 0.4 - delta, tau_floor=cfg["tau_floor"])
        for n in range(4):
            fd = (vessel_moments(v, sp, n) - vessel_moments(v, sm, n)) / (2.0 * delta)
            hn = vessel_moments(v, sc, n)
            hn1 = vessel_moments(v, sc, n + 1)
            rhs = (
                s1i @ s2 @ hn1 - hn1 @ s2 @ s1i
                + s1i @ sc.gamma_star @ hn - hn @ p.gamma @ s1i
            )
            scale = max(1.0, float(np.abs(rhs).max()))
            worst = max(worst, float(np.abs(fd - rhs).max()) / scale)
        return worst

    check("moment-equations", 1e-5, moment_equations)

    def inverse_identities():
        xs_inv = np.linspace(-1.5, 1.5, 7)
        invs = inverse_vessel_sweep(v, xs_inv)
        worst = 0.0
        for xv, inv in zip(xs_inv, invs):
            s_at = snapshot(v, float(xv), tau_floor=cfg["tau_floor"])
            worst = max(worst, max(inverse_identity_residuals(v, inv, s_at).values()))
        return worst

    # adaptive integrations can stall on blown-up operators, so the
    # ODE-driven checks only run when the structural ones are clean
    if ok:
        check("inverse-identities", 1e-6, inverse_identities)
        check("evolved-inverse", 1e-6, lambda: xt_inverse_residual(v, 0.7, [0.15, -0.15]))
        check("evolution-equations", 1e-6, lambda: gamma_star_t_residual(v, 0.3, 0.1))
    else:
        for name in ("inverse-identities", "evolved-inverse", "evolution-equations"):
            lines.append(f"SKIP {name}: skipped after earlier failures")

    src = meas.meta.get("source", "")
    if src:
        def moment_roundtrip():
            info = json.loads(src)
            order = int(info["order"])
            model = PotentialModel.from_coefficients(
                list(info["coefficients"])
                + [0.0] * max(0, 2 * order + 3 - len(info["coefficients"]))
            )
            table = moments_at_zero(model, order, inits=_inits(order, info["h22_init"]))
            r, b, d = table.triple_arrays()
            return _moment_match_residual(meas, r, b, d)

        # the split's conditioning amplifies roundoff on large windows
        check("moment-roundtrip", 1e-6, moment_roundtrip)
    tx = estimate_Tx(v, 0.0)
    lines.append(f"INFO invertibility-window-halfwidth: {tx if np.isfinite(tx) else 'inf'}")
    return lines, ok


def cmd_verify(args) -> int:
    """Invariant suite; exit 1 when any check fails, 2 on a bad measure file."""
    cfg = _load_config(args)
    try:
        meas = load_measure(args.measure)
    except (MeasureFormatError, OSError) as exc:
        print(f"measure error: {exc}", file=sys.stderr)
        return 2
    lines, ok = _verify_measure(meas, cfg)
    for ln in lines:
        print(ln)
    if args.report:
        _write_report(args.report, {"command": "verify", "pass": ok, "checks": lines})
    return 0 if ok else 1


def cmd_roundtrip(args) -> int:
    """Potential -> measure -> vessel -> Taylor coefficients; exit 1 on mismatch."""
    cfg = _load_config(args)
    coeffs = _parse_coeffs(args.q)
    order = cfg["order"]
    try:
        meas, _ = _realize_measure(coeffs, order, cfg["margin"], cfg["h22_init"])
    except (StructureViolation, HankelNotPD) as exc:
        print(f"structure violation: {exc}", file=sys.stderr)
        return 2
    v = build_node(meas)
    n_pinned = order - 1
    rec = taylor_of_recovered_q(v, n_pinned - 1).real_coeffs()
    given = np.zeros(n_pinned)
    upto = min(len(coeffs), n_pinned)
    given[:upto] = coeffs[:upto]
    errs = []
    ok = True
    for j in range(n_pinned):
        err = abs(rec[j] - given[j])
        rel = err / max(abs(given[j]), 1.0)
        good = err <= 1e-8 or rel <= 1e-6
        ok = ok and good
        errs.append(err)
        print(
            f"{'PASS' if good else 'FAIL'} c{j}: given {given[j]:+.12g} "
            f"recovered {rec[j]:+.12g} |err| {err:.3e}"
        )
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    save_measure(meas, os.path.join(out_dir, "roundtrip_measure.json"))
    _write_report(
        os.path.join(out_dir, "roundtrip_report.json"),
        {
            "command": "roundtrip",
            "pass": ok,
            "order": order,
            "coefficients": [float(c) for c in coeffs],
            "recovered": [float(c) for c in rec],
            "abs_errors": [float(e) for e in errs],
            "atoms": meas.K,
        },
    )
    print(f"roundtrip: {'PASS' if ok else 'FAIL'} ({meas.K} atoms, window {order})")
    return 0 if ok else 1


def cmd_soliton(args) -> int:
    """Write a bundled measure, a small field CSV and a report.  Exit 2: unknown name."""
    cfg = _load_config(args)
    try:
        meas = bundled_measure(args.name)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    save_measure(meas, os.path.join(out_dir, f"measure_{args.name}.json"))
    xs, ts = _parse_grid(cfg["grid"])
    if ts is None:
        ts = np.linspace(-0.3, 0.3, 25)
    v = build_node(meas)
    field = q_field(v, xs, ts, tau_floor=cfg["tau_floor"])
    _write_text(os.path.join(out_dir, f"field_{args.name}.csv"), _field_csv(field))
    try:
        res = kdv_residual(field)
    except (GridTooCoarse, OmegaBoundary) as exc:
        res = {"max": float("nan"), "mean": float("nan"), "count": 0, "note": str(exc)}
    _write_report(
        os.path.join(out_dir, f"report_{args.name}.json"),
        {
            "command": "soliton",
            "name": args.name,
            "atoms": meas.K,
            "evolution_residual": res,
            "region_fraction": float(field.in_omega.mean()),
            "identity_defect": field.lyap_max,
        },
    )
    print(
        f"soliton {args.name}: residual max {res['max']:.3e} "
        f"over {res['count']} stencil points -> {out_dir}"
    )
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with default options")
    p.add_argument("--order", type=int, help="moment-window size")
    p.add_argument("--grid", help="grid spec MIN:MAX:N[,MIN:MAX:N] (x[,t])")
    p.add_argument("--tol-tau-floor", type=float, dest="tol_tau_floor",
                   help="relative floor on |tau| for the invertibility region")
    p.add_argument("--margin", type=float, help="positivity margin for the split")
    p.add_argument("--h22-init", type=float, dest="h22_init",
                   help="free initial value for the lower-right moment channel")
    p.add_argument("--out-dir", dest="out_dir", help="directory for outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="vesselkit",
        description="finite-rank vessels: potentials, spectral measures, and their evolution",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("realize", help="polynomial potential -> measure JSON")
    p.add_argument("--q", required=True, help="comma-separated Taylor coefficients")
    p.add_argument("--out", help="measure output path")
    p.add_argument("--report", help="write a JSON report here")
    _shared_flags(p)
    p.set_defaults(fn=cmd_realize)

    p = sub.add_parser("evolve", help="measure JSON -> field CSV + residual report")
    p.add_argument("--measure", required=True)
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--report", help="write the JSON report here")
    _shared_flags(p)
    p.set_defaults(fn=cmd_evolve)

    p = sub.add_parser("verify", help="invariant suite for a measure")
    p.add_argument("--measure", required=True)
    p.add_argument("--report", help="write a JSON report here")
    _shared_flags(p)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("roundtrip", help="potential -> measure -> recovered potential")
    p.add_argument("--q", required=True, help="comma-separated Taylor coefficients")
    _shared_flags(p)
    p.set_defaults(fn=cmd_roundtrip)

    p = sub.add_parser("soliton", help="write a bundled measure, field and report")
    p.add_argument("--name", required=True, help="one | two | signed")
    _shared_flags(p)
    p.set_defaults(fn=cmd_soliton)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
