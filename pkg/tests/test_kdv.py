"""Time evolution of the node: evolved fields, the evolution-equation
residual, its convergence order, and the t-direction identities."""

import numpy as np
import pytest

import vesselkit as vk

SEED = 20260825


def _one_atom(mu=0.3, w=0.277):
    return vk.SpectralMeasure(np.array([mu]), np.array([w]), np.array([0.0]), np.array([0.0]))


def _two_atom():
    return vk.SpectralMeasure(
        np.array([1.0, 3.0]), np.array([0.3, -0.2]),
        np.array([0.1, 0.0]), np.array([0.05, 0.1]),
    )


def test_snapshot_xt_matches_static_at_t0():
    v = vk.build_node(_two_atom())
    for x in (-0.7, 0.0, 1.1):
        s0 = vk.snapshot(v, x)
        st = vk.snapshot_xt(v, x, 0.0)
        assert abs(st.q - s0.q) <= 1e-10
        assert st.lyap_residual <= 1e-9


def test_field_flags_and_reality():
    v = vk.build_node(_one_atom())
    f = vk.q_field(v, np.linspace(-1.0, 1.0, 201), np.linspace(-0.05, 0.05, 101))
    assert f.in_omega.all()
    assert f.lyap_max <= 1e-9
    assert np.abs(np.asarray(f.q).imag).max() <= 1e-9


def test_field_of_empty_measure_is_zero():
    e = vk.SpectralMeasure(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    v = vk.build_node(e)
    f = vk.q_field(v, np.linspace(-1.0, 1.0, 21), np.linspace(-0.01, 0.01, 5))
    assert np.abs(f.q).max() == 0.0
    assert f.in_omega.all()


def test_evolution_residual_small_on_smooth_field():
    v = vk.build_node(_one_atom())
    f = vk.q_field(v, np.linspace(-1.0, 1.0, 201), np.linspace(-0.05, 0.05, 101))
    r = vk.kdv_residual(f)
    assert set(r) == {"max", "mean", "count"}
    assert r["max"] <= 1e-7
    assert r["mean"] <= r["max"]
    assert r["count"] > 0


def test_order_check_improves_on_refinement():
    v = vk.build_node(_one_atom())
    f = vk.q_field(v, np.linspace(-1.0, 1.0, 201), np.linspace(-0.05, 0.05, 101))
    oc = vk.kdv_order_check(f)
    assert oc["fine"] < oc["coarse"]
    assert oc["ratio"] >= 4.0


def test_residual_requires_minimum_grid():
    v = vk.build_node(_one_atom())
    with pytest.raises(vk.GridTooCoarse):
        vk.kdv_residual(vk.q_field(v, np.linspace(-0.1, 0.1, 5), np.linspace(-0.01, 0.01, 3)))
    with pytest.raises(vk.GridTooCoarse):
        vk.kdv_residual(vk.q_field(v, np.linspace(-0.5, 0.5, 21), np.linspace(-0.01, 0.01, 2)))


def test_time_equations_hold_pointwise():
    v = vk.build_node(_two_atom())
    for x, t in ((0.4, 0.1), (-0.6, -0.05), (0.0, 0.0)):
        assert vk.gamma_star_t_residual(v, x, t) <= 1e-7


def test_time_equations_trivial_for_empty_measure():
    e = vk.SpectralMeasure(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))
    assert vk.gamma_star_t_residual(vk.build_node(e), 0.3, 0.2) == 0.0


def test_inverse_family_along_t():
    v = vk.build_node(_two_atom())
    assert vk.xt_inverse_residual(v, 0.4, np.linspace(-0.1, 0.1, 11)) <= 1e-6
