"""Truncated power-series arithmetic: ring operations, calculus, and
evaluation all follow fixed-order polynomial semantics."""

import numpy as np

from vesselkit.series import TruncSeries, s_add, s_antider, s_diff, s_eval, s_mul

SEED = 20260825


def test_constructors():
    x = TruncSeries.identity(3)
    assert x.order == 3
    assert np.allclose(x.coeffs, [0, 1, 0, 0])
    c = TruncSeries.const(2.5, 2)
    assert np.allclose(c.coeffs, [2.5, 0, 0])
    z = TruncSeries.zero(2)
    assert np.allclose(z.coeffs, 0)


def test_add_and_mul_match_polynomial_arithmetic():
    a = TruncSeries([1.0, 2.0, 3.0])
    b = TruncSeries([0.5, -1.0, 0.25])
    s = s_add(a, b)
    assert np.allclose(s.coeffs, [1.5, 1.0, 3.25])
    p = s_mul(a, b)
    # (1 + 2x + 3x^2)(0.5 - x + 0.25x^2) truncated at order 2
    assert np.allclose(p.coeffs, [0.5, 0.0, -0.25])


def test_mul_truncates_to_common_order():
    a = TruncSeries([1.0, 1.0])          # 1 + x, order 1
    b = TruncSeries([1.0, 1.0, 1.0])     # order 2
    p = s_mul(a, b)
    assert p.order == 1
    assert np.allclose(p.coeffs, [1.0, 2.0])


def test_diff_then_antider_roundtrip():
    a = TruncSeries([4.0, -2.0, 3.0, 1.0])
    back = s_antider(s_diff(a), c0=4.0)
    assert back.order == a.order
    assert np.allclose(back.coeffs, a.coeffs)


def test_diff_drops_order():
    a = TruncSeries([1.0, 2.0, 3.0])
    d = a.diff()
    assert d.order == 1
    assert np.allclose(d.coeffs, [2.0, 6.0])


def test_eval_horner_matches_numpy():
    rng = np.random.default_rng(SEED)
    for _ in range(20):
        c = rng.normal(size=6)
        a = TruncSeries(c)
        for x in (-1.5, -0.3, 0.0, 0.7, 2.0):
            expected = np.polyval(c[::-1], x)
            assert abs(s_eval(a, x) - expected) < 1e-12 * max(1.0, abs(expected))
            assert abs(a.eval(x) - expected) < 1e-12 * max(1.0, abs(expected))


def test_truncate():
    a = TruncSeries([1.0, 2.0, 3.0, 4.0])
    t = a.truncate(1)
    assert t.order == 1
    assert np.allclose(t.coeffs, [1.0, 2.0])


def test_real_coeffs_and_max_imag():
    a = TruncSeries([1.0 + 1e-12j, 2.0])
    assert a.max_imag() == 1e-12
    r = a.real_coeffs()
    assert r.dtype.kind == "f"
    assert np.allclose(r, [1.0, 2.0])


def test_product_of_squares_example():
    a = TruncSeries([1.0, 1.0, 0.0])     # 1 + x at order 2
    sq = s_mul(a, a)
    assert np.allclose(sq.coeffs, [1.0, 2.0, 1.0])
