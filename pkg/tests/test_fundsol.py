"""Fundamental matrices of the input and output systems: free closed
forms, unimodularity, gauge normalization, and grid defects."""

import numpy as np

import vesselkit.fundsol as F

ODE_TOL = 1e-10
SEED = 20260825


def _free_matrix(mu, x):
    rmu = np.sqrt(mu)
    return np.array(
        [
            [np.cos(rmu * x), 1j * np.sin(rmu * x) / rmu],
            [1j * rmu * np.sin(rmu * x), np.cos(rmu * x)],
        ]
    )


def test_phi_input_free_closed_form():
    for mu in (0.5, 1.0, 2.0, 5.0):
        for x in (-2.0, -0.3, 0.0, 1.0, 3.0):
            assert np.abs(F.phi_input(1j * mu, x) - _free_matrix(mu, x)).max() < 1e-12


def test_phi_is_adjoint_of_phi_input():
    for mu in (0.7, 2.0):
        for x in (-1.0, 0.4, 2.0):
            got = F.phi(mu, x)
            want = F.phi_input(1j * mu, x).conj().T
            assert np.abs(got - want).max() < 1e-13


def test_phi_input_unimodular():
    rng = np.random.default_rng(SEED)
    for _ in range(15):
        lam = complex(rng.normal(), rng.normal())
        x = float(rng.uniform(-2, 2))
        d = np.linalg.det(F.phi_input(lam, x))
        assert abs(d - 1.0) < 1e-12


def test_phi_star_reduces_to_free_when_q_vanishes():
    z = F.zero_potential()
    for mu in (0.5, 2.0):
        for x in (-1.5, 0.8):
            P = F.phi_star(z, mu, x, ode_tol=ODE_TOL)
            assert np.abs(P - _free_matrix(mu, x)).max() < 1e-8


def test_phi_star_identity_at_origin_any_gauge():
    z = F.zero_potential()
    for h0 in (0.0, 0.7, -1.3):
        P = F.phi_star(z, 2.0, 0.0, h0=h0)
        assert np.abs(P - np.eye(2)).max() == 0.0


def test_sl_solutions_constant_potential():
    # -y'' + y = 2 y is the harmonic oscillator: f = cos, g = sin.
    q1 = F.QEvaluator(lambda x: 1.0, -50.0, 50.0, source="const")
    for x in (0.5, 1.0, 2.0):
        f, fp, g, gp, beta = F.sl_solutions(q1, 2.0, x)
        assert abs(f - np.cos(x)) < 1e-9
        assert abs(fp + np.sin(x)) < 1e-9
        assert abs(g - np.sin(x)) < 1e-9
        assert abs(gp - np.cos(x)) < 1e-9
        assert abs(beta - 0.5 * x) < 1e-9  # beta carries the running mean of q


def test_sl_solutions_at_spectral_match():
    # q == c probed exactly at mu = c: zero curvature, f == 1 and g == x.
    c = 1.7
    qc = F.QEvaluator(lambda x: c, -50.0, 50.0, source="const")
    f, fp, g, gp, beta = F.sl_solutions(qc, c, 2.0)
    assert abs(f - 1.0) < 1e-9
    assert abs(fp) < 1e-9
    assert abs(g - 2.0) < 1e-9
    assert abs(gp - 1.0) < 1e-9


def test_wronskian_preserved():
    q1 = F.QEvaluator(lambda x: 1.0 + 0.3 * np.sin(x), -50.0, 50.0, source="const")
    for mu in (0.5, 3.0):
        for x in (-2.0, 1.5):
            assert F.wronskian_check(q1, mu, x) < 1e-8


def test_input_defect_second_order():
    lam = 1.0 + 1.0j
    grid1 = np.linspace(-1.0, 1.0, 2001)   # step 1e-3
    grid2 = np.linspace(-1.0, 1.0, 4001)   # step 5e-4
    r1 = F.input_lde_residual(lam, grid1)
    r2 = F.input_lde_residual(lam, grid2)
    assert r1 <= 1e-5
    assert 3.0 <= r1 / r2 <= 5.0
