import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyk.hyformula import (
    SpinDensities,
    hy_third_order_f,
    hy_third_order_f_direct,
    f_at_one,
    huang_yang_energy,
    lss_second_order,
)


def test_f_zero():
    assert hy_third_order_f(0.0) == 0.0


def test_f_one_two_paths():
    # closed form vs the general evaluator with the factored log prefactor
    assert abs(hy_third_order_f(1.0) - f_at_one()) <= 1e-12 * f_at_one()


def test_f_one_against_mpmath():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    exact = mp.mpf(48) / 35 * (11 - 2 * mp.log(2)) * (6 * mp.pi**2) ** (mp.mpf(1) / 3)
    assert hy_third_order_f(1.0) == pytest.approx(float(exact), rel=1e-14)


@pytest.mark.parametrize("x", [0.125, 0.25, 0.5, 2.0, 4.0, 8.0])
def test_reciprocal_symmetry(x):
    lhs = hy_third_order_f(x)
    rhs = x ** (7.0 / 3.0) * hy_third_order_f(1.0 / x)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_direct_matches_factored_away_from_one():
    for x in np.geomspace(0.01, 100.0, 41):
        if abs(1.0 - x ** (1.0 / 3.0)) > 1e-6:
            a = hy_third_order_f(float(x))
            b = hy_third_order_f_direct(float(x))
            assert a == pytest.approx(b, rel=1e-9)


def test_continuity_at_one():
    f1 = hy_third_order_f(1.0)
    for h in (1e-4, 1e-6, 1e-8):
        for x in (1.0 - h, 1.0 + h):
            dev = abs(hy_third_order_f(x) - f1)
            assert dev <= 60.0 * 4.0 * h * max(1.0, math.log(1.0 / h))


def test_f_nonnegative_dense_grid():
    xs = np.linspace(0.0, 100.0, 2001)
    assert np.all(hy_third_order_f(xs) >= -1e-12)


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        hy_third_order_f(-0.5)


def test_breakdown_symmetric_case():
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40
    rho, a = 1e-3, 0.2384
    b = huang_yang_energy(SpinDensities(rho / 2, rho / 2), a)
    kin_exact = 0.6 * (3 * math.pi**2) ** (2.0 / 3.0) * rho ** (5.0 / 3.0)
    assert b.kinetic == pytest.approx(kin_exact, rel=1e-13)
    assert b.second_order == pytest.approx(2.0 * math.pi * a * rho**2, rel=1e-13)
    # third-term coefficient (4/35)(11-2 log 2)(9 pi)^(2/3), decimal frozen from mpmath
    coef = mp.mpf(4) / 35 * (11 - 2 * mp.log(2)) * (9 * mp.pi) ** (mp.mpf(2) / 3)
    assert float(coef) == pytest.approx(10.1971237, rel=1e-8)
    assert b.third_order == pytest.approx(float(coef) * a**2 * rho ** (7.0 / 3.0), rel=1e-12)


def test_breakdown_polarized():
    b = huang_yang_energy(SpinDensities(1e-3, 0.0), 0.3)
    assert b.second_order == 0.0
    assert b.third_order == 0.0
    assert b.total == pytest.approx(0.6 * (6 * math.pi**2) ** (2 / 3) * (1e-3) ** (5 / 3), rel=1e-13)


def test_breakdown_zero_a():
    b = huang_yang_energy(SpinDensities(1e-3, 2e-3), 0.0)
    assert b.second_order == 0.0 and b.third_order == 0.0


def test_third_order_swap_symmetric():
    b1 = huang_yang_energy(SpinDensities(1e-3, 3e-4), 0.25)
    b2 = huang_yang_energy(SpinDensities(3e-4, 1e-3), 0.25)
    assert abs(b1.third_order - b2.third_order) <= 1e-12 * b1.third_order


def test_lss_equals_total_minus_third():
    d = SpinDensities(2e-3, 1e-3)
    b = huang_yang_energy(d, 0.3)
    assert lss_second_order(d, 0.3) == b.total - b.third_order


def test_term_scaling_exponents():
    # e(lambda^3-scaled density): terms scale as rho^(5/3), rho^2, rho^(7/3)
    a = 0.2384
    rhos = np.geomspace(1e-5, 1e-2, 7)
    terms = np.array([
        [huang_yang_energy(SpinDensities(r / 2, r / 2), a).kinetic for r in rhos],
        [huang_yang_energy(SpinDensities(r / 2, r / 2), a).second_order for r in rhos],
        [huang_yang_energy(SpinDensities(r / 2, r / 2), a).third_order for r in rhos],
    ])
    for row, expect in zip(terms, (5.0 / 3.0, 2.0, 7.0 / 3.0)):
        slope = np.polyfit(np.log(rhos), np.log(row), 1)[0]
        assert slope == pytest.approx(expect, abs=1e-6)


@given(st.floats(1e-8, 1e-1), st.floats(0.0, 1.0))
@settings(max_examples=30, deadline=None)
def test_breakdown_nonnegative(rho, frac):
    b = huang_yang_energy(SpinDensities(rho * frac, rho * (1 - frac)), 0.3)
    assert b.kinetic >= 0 and b.second_order >= 0 and b.third_order >= -1e-300


def test_negative_density_rejected():
    with pytest.raises(ValueError):
        SpinDensities(-1e-3, 1e-3)
