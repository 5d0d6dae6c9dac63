"""Moment recursion at x = 0: structured triples, the differential
recurrence they satisfy, and recovery of the potential from the base
moment."""

import dataclasses

import numpy as np
import pytest

import vesselkit.moments as M
from vesselkit.series import TruncSeries

HEADROOM = 15          # Taylor coefficients carried by test potentials
DHN_TOL = 1e-12        # healthy tables satisfy the recurrence to roundoff
SENSITIVITY = 1e-4     # a 1e-3 corruption must be clearly visible


def _model(coeffs):
    full = list(coeffs) + [0.0] * (HEADROOM - len(coeffs))
    return M.PotentialModel.from_coefficients(full)


def test_constant_potential_triples():
    # q == c: the base triple is (0, -c/4, 0), every residue term r_n = 0.
    for c in (1.0, 2.0, -0.7):
        tab = M.moments_at_zero(_model([c]), 4)
        r, b, d = tab.triple_arrays()
        assert abs(r[0]) < 1e-14
        assert abs(b[0] - (-c / 4.0)) < 1e-14
        assert abs(d[0]) < 1e-14
        assert np.all(np.abs(r) < 1e-13)
        assert np.all(np.abs(d) < 1e-13)


def test_constant_potential_h22_slope():
    # q == c forces (H_0)_22 to grow with slope c^2/8 at the origin.
    for c in (1.0, 3.0):
        tab = M.moments_at_zero(_model([c]), 2)
        h22 = tab.entries[0].h22.coeffs
        assert abs(h22[1] - c * c / 8.0) < 1e-14


def test_constant_potential_first_moment_vanishes_at_zero():
    tab = M.moments_at_zero(_model([1.0]), 2)
    assert abs(tab.entries[1].h11.eval(0.0)) < 1e-14


def test_inits_flow_into_free_constants():
    inits = [0.3, -0.1, 0.2, 0.0, 0.1]
    tab = M.moments_at_zero(_model([1.0]), 4, inits=inits)
    _, _, d = tab.triple_arrays()
    assert np.allclose(d, inits)


def test_inits_length_checked():
    with pytest.raises(ValueError):
        M.moments_at_zero(_model([1.0]), 4, inits=[1.0])


def test_order_exhausted_without_headroom():
    p = M.PotentialModel.from_coefficients([1.0])
    with pytest.raises(M.OrderExhausted):
        M.moments_at_zero(p, 4)


def test_recurrence_residual_healthy():
    for coeffs in ([0.0], [1.0], [0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0]):
        p = _model(coeffs)
        tab = M.moments_at_zero(p, 5)
        assert M.dhn_residual(tab, p) < DHN_TOL


def test_recurrence_residual_detects_corruption():
    p = _model([1.0])
    tab = M.moments_at_zero(p, 4)
    e2 = tab.entries[2]
    bad = dataclasses.replace(e2, h11=TruncSeries(e2.h11.coeffs + 1e-3))
    corrupted = M.MomentTable(
        entries=[*tab.entries[:2], bad, *tab.entries[3:]],
        triples=tab.triples,
    )
    assert M.dhn_residual(corrupted, p) >= SENSITIVITY


def test_recovered_potential_inverts_base_moment():
    for coeffs in ([0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 1.0], [2.0, -0.5]):
        p = _model(coeffs)
        h0 = M.build_h0(p)
        q_back = M.recovered_potential(h0)
        want = np.zeros(q_back.order + 1)
        want[: len(coeffs)] = coeffs
        assert np.allclose(q_back.coeffs[: len(want)], want, atol=1e-12)


def test_gamma_star_series_shape_invariants():
    # [[h12 - h21, h11], [-h11, i]] as series identities.
    p = _model([0.0, 1.0])
    g = p.gamma_star_series()
    h0 = M.build_h0(p)
    n = min(g[0][1].order, h0.h11.order)
    assert np.allclose(g[0][1].coeffs[: n + 1], h0.h11.coeffs[: n + 1], atol=1e-13)
    assert np.allclose(g[1][0].coeffs[: n + 1], -g[0][1].coeffs[: n + 1], atol=1e-13)
    g22 = g[1][1].coeffs
    assert abs(g22[0] - 1j) < 1e-14
    assert np.all(np.abs(g22[1:]) < 1e-14)


def test_moment_count_matches_request():
    tab = M.moments_at_zero(_model([1.0]), 6)
    assert len(tab.entries) == 7
    assert len(tab.triples) == 7
    assert all(e.n == n for n, e in enumerate(tab.entries))
