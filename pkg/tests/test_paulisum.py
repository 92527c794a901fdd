import math

import numpy as np
import pytest
from scipy.integrate import quad, simpson

from hyk import _accel
from hyk import _pauli_kernels as pk
from hyk.hyformula import SpinDensities, hy_third_order_f, f_at_one
from hyk.paulisum import (
    MCParams,
    pauli_blocked_integral,
    corr_constant,
    domain_split_report,
    build_weight_pack,
    subtracted_tail_exponent,
)

GL12 = np.polynomial.legendre.leggauss(12)
NULL = np.zeros(1)


def _sample_const(rv, pv, k1, k2, eps, order=12):
    glx, glw = np.polynomial.legendre.leggauss(order)
    gc, _, _ = pk._sample_pair(
        rv[0], rv[1], rv[2], pv[0], pv[1], pv[2], k1, k2, eps, 0.0, 0, 0.0,
        1.0, NULL, NULL, 1.0, 0, 0, 0, 0, glx, glw, glx, glw,
    )
    return gc


def _oracle_bracket(rv, pv, k1, k2, eps, nang=64):
    """Independent check: lab-frame angular grid, indicator bisection, radial quad."""
    d = rv - pv
    big_p = 3000.0 * max(k1, k2)
    ct, wt = np.polynomial.legendre.leggauss(nang)
    phis = (np.arange(2 * nang) + 0.5) * math.pi / nang
    total = 0.0
    for c_t, w_t in zip(ct, wt):
        s_t = math.sqrt(1 - c_t * c_t)
        for ph in phis:
            om = np.array([s_t * math.cos(ph), s_t * math.sin(ph), c_t])

            def outside(rho):
                p3 = rho * om
                return (np.dot(rv + p3, rv + p3) > k1 * k1) and (np.dot(pv - p3, pv - p3) > k2 * k2)

            lo, hi = 0.0, 2.0000001 * (k1 + k2) + 1e-9
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if outside(mid):
                    hi = mid
                else:
                    lo = mid
            rs = 0.5 * (lo + hi)
            cc = float(d @ om)
            val = 0.5 * rs + quad(
                lambda r_: (cc * r_ + eps) / (2 * (r_ * r_ + cc * r_ + eps)), rs, big_p, limit=400,
            )[0]
            val += (eps - cc * cc / 2) / (2 * big_p)  # even tail; odd part cancels on the grid
            total += w_t * (math.pi / nang) * val
    return total


def test_exactly_solvable_concentric():
    # r = r' = 0: integral = 2 pi max(k1,k2) at eps=0
    z = np.zeros(3)
    for k1, k2 in ((1.0, 0.8), (0.5, 1.2)):
        val = _sample_const(z, z, k1, k2, 0.0)
        assert val == pytest.approx(2 * math.pi * max(k1, k2), rel=1e-13)


def test_exactly_solvable_with_eps():
    z = np.zeros(3)
    eps = 0.3
    exact = 2 * math.pi + 2 * math.pi * eps * (math.pi / 2 - math.atan(1 / math.sqrt(eps))) / math.sqrt(eps)
    assert _sample_const(z, z, 1.0, 1.0, eps) == pytest.approx(exact, rel=1e-13)


@pytest.mark.parametrize("eps", [0.0, 0.05])
def test_sample_kernel_vs_independent_oracle(eps):
    rng = np.random.default_rng(5)
    k1, k2 = 1.0, 0.8
    for _ in range(2):
        u = rng.random(6)
        rv = k1 * u[0] ** (1 / 3) * _dir(2 * u[1] - 1, 2 * math.pi * u[2])
        pv = k2 * u[3] ** (1 / 3) * _dir(2 * u[4] - 1, 2 * math.pi * u[5])
        mine = _sample_const(rv, pv, k1, k2, eps)
        ref = _oracle_bracket(rv, pv, k1, k2, eps)
        assert mine == pytest.approx(ref, rel=2e-3)  # oracle-limited tolerance


def test_sample_kernel_internally_converged():
    rng = np.random.default_rng(7)
    u = rng.random(6)
    rv = 1.0 * u[0] ** (1 / 3) * _dir(2 * u[1] - 1, 2 * math.pi * u[2])
    pv = 0.9 * u[3] ** (1 / 3) * _dir(2 * u[4] - 1, 2 * math.pi * u[5])
    coarse = _sample_const(rv, pv, 1.0, 0.9, 0.0, order=12)
    fine = _sample_const(rv, pv, 1.0, 0.9, 0.0, order=32)
    assert coarse == pytest.approx(fine, rel=1e-9)


def _dir(cz, phi):
    sz = math.sqrt(max(1.0 - cz * cz, 0.0))
    return np.array([sz * math.cos(phi), sz * math.sin(phi), cz])


def test_weighted_channel_vs_oracle(well_solution):
    sol = well_solution
    k = 0.31
    pack = build_weight_pack(sol, k)
    eps = 1e-5

    def wfun(p):
        x = np.asarray(p, dtype=float) / pack.dp
        j = np.minimum(x.astype(int), len(pack.wtab) - 2)
        f = x - j
        return pack.wtab[j] * (1 - f) + pack.wtab[j + 1] * f

    rng = np.random.default_rng(9)
    u = rng.random(6)
    rv = k * u[0] ** (1 / 3) * _dir(2 * u[1] - 1, 2 * math.pi * u[2])
    pv = k * u[3] ** (1 / 3) * _dir(2 * u[4] - 1, 2 * math.pi * u[5])
    glx, glw = GL12
    _, gw, _ = pk._sample_pair(
        rv[0], rv[1], rv[2], pv[0], pv[1], pv[2], k, k, 0.0, eps, 1, 0.0,
        pack.dp, pack.wtab, pack.cwtab, pack.b_split,
        pack.m1, pack.m2, pack.m3, pack.m4, glx, glw, glx, glw,
    )
    # oracle: same structure, dense radial simpson, coarse angular grid
    d = rv - pv
    nang = 40
    ct, wt = np.polynomial.legendre.leggauss(nang)
    total = 0.0
    for c_t, w_t in zip(ct, wt):
        s_t = math.sqrt(1 - c_t * c_t)
        for ph in (np.arange(2 * nang) + 0.5) * math.pi / nang:
            om = np.array([s_t * math.cos(ph), s_t * math.sin(ph), c_t])

            def outside(rho):
                p3 = rho * om
                return (np.dot(rv + p3, rv + p3) > k * k) and (np.dot(pv - p3, pv - p3) > k * k)

            lo, hi = 0.0, 2.0000001 * 2 * k + 1e-9
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if outside(mid):
                    hi = mid
                else:
                    lo = mid
            rs = 0.5 * (lo + hi)
            cc = float(d @ om)
            xs = np.linspace(rs, pack.p_max, 30001)
            v1 = simpson(wfun(np.linspace(0, rs, 1001)), x=np.linspace(0, rs, 1001)) * 0.5
            v2 = simpson(wfun(xs) * (cc * xs + eps) / (2 * (xs**2 + cc * xs + eps)), x=xs)
            total += w_t * (math.pi / nang) * (v1 + v2)
    assert gw == pytest.approx(total, rel=2e-3)


class TestMonteCarlo:
    def test_empty_ball(self):
        est = pauli_blocked_integral(1.0, 0.0, 0.0, MCParams(samples=1000))
        assert est.value == 0.0

    def test_negative_inputs(self):
        with pytest.raises(ValueError):
            pauli_blocked_integral(-1.0, 1.0, 0.0)

    def test_matches_closed_form(self):
        k = 1.0
        rho = k**3 / (6 * math.pi**2)
        target = rho ** (7.0 / 3.0) * f_at_one()
        est = pauli_blocked_integral(k, k, 0.0, MCParams(samples=30000, seed=11, quad_check=False))
        assert abs(est.value - target) < max(4.0 * est.std_error, 0.015 * target)

    @pytest.mark.parametrize("ratio", [0.25, 4.0])
    def test_matches_closed_form_asymmetric(self, ratio):
        k_up = 1.0
        k_dn = k_up * ratio ** (1.0 / 3.0)
        rho_u = k_up**3 / (6 * math.pi**2)
        target = rho_u ** (7.0 / 3.0) * float(hy_third_order_f(ratio))
        est = pauli_blocked_integral(k_up, k_dn, 0.0, MCParams(samples=50000, seed=13, quad_check=False))
        assert abs(est.value - target) < max(4.0 * est.std_error, 0.015 * target)

    def test_eps_monotone(self):
        mc = MCParams(samples=8000, seed=3, quad_check=False)
        lo = pauli_blocked_integral(1.0, 1.0, 0.0, mc)
        hi = pauli_blocked_integral(1.0, 1.0, 0.5, mc)
        joint = 3.0 * math.hypot(lo.std_error, hi.std_error)
        assert hi.value - lo.value > joint

    def test_seed_determinism(self):
        mc = MCParams(samples=4096, seed=99, quad_check=False)
        a = pauli_blocked_integral(1.0, 0.7, 0.1, mc)
        b = pauli_blocked_integral(1.0, 0.7, 0.1, mc)
        assert a.value == b.value and a.std_error == b.std_error

    def test_worker_count_invariance(self):
        vals = []
        for workers in (1, 4, 8):
            mc = MCParams(samples=4096, seed=42, workers=workers, chunk_size=512, quad_check=False)
            vals.append(pauli_blocked_integral(0.9, 1.1, 0.0, mc).value)
        assert vals[0] == vals[1] == vals[2]

    def test_dimensional_scaling(self):
        mc = MCParams(samples=4096, seed=5, quad_check=False)
        g1 = pauli_blocked_integral(1.0, 1.0, 0.0, mc)
        g2 = pauli_blocked_integral(2.0, 2.0, 0.0, mc)
        assert g2.value == pytest.approx(2.0**7 * g1.value, rel=1e-11)

    def test_std_error_scaling(self):
        # std error drops like n^(-1/2) under sample doubling
        ses = []
        ns = (4096, 16384, 65536)
        for n in ns:
            est = pauli_blocked_integral(1.0, 1.0, 0.0, MCParams(samples=n, seed=8, quad_check=False))
            ses.append(est.std_error)
        slope = np.polyfit(np.log(ns), np.log(ses), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.1)

    def test_backend_paths_agree(self):
        mc_jit = MCParams(samples=512, seed=77, chunk_size=256, quad_check=False, jit=True)
        mc_py = MCParams(samples=512, seed=77, chunk_size=256, quad_check=False, jit=False)
        a = pauli_blocked_integral(1.0, 0.8, 0.05, mc_jit)
        b = pauli_blocked_integral(1.0, 0.8, 0.05, mc_py)
        assert a.value == pytest.approx(b.value, rel=1e-12)


def test_subtracted_tail_exponent():
    assert subtracted_tail_exponent(1.0, 0.8, 0.0) <= -3.8


class TestCorrConstant:
    def test_polarized_vanishes(self, well_solution):
        rec = corr_constant(well_solution, SpinDensities(1e-3, 0.0), 1e-5)
        assert rec.value == 0.0 and rec.pauli_term == 0.0

    def test_deficit_positive_and_resolved(self, well_solution):
        d = SpinDensities(5e-4, 5e-4)
        rec = corr_constant(well_solution, d, 1e-3 ** (5.0 / 3.0),
                            MCParams(samples=20000, seed=3, quad_check=False))
        assert rec.deficit > 3.0 * rec.deficit_std_error
        assert rec.value > rec.second_order  # correlation constant above second order

    def test_deficit_seed_determinism(self, well_solution):
        d = SpinDensities(5e-4, 5e-4)
        mc = MCParams(samples=4096, seed=21, quad_check=False)
        a = corr_constant(well_solution, d, 1e-5, mc)
        b = corr_constant(well_solution, d, 1e-5, mc)
        assert a.deficit == b.deficit and a.value == b.value


def test_domain_split_report(well_solution):
    d = SpinDensities(5e-4, 5e-4)
    rep = domain_split_report(well_solution, d, 1e-3 ** (5.0 / 3.0), 0.1,
                              MCParams(samples=20000, seed=9, quad_check=False))
    scale = abs(rep["counterterm_outer"])
    assert abs(rep["counterterm_sum"]) <= 1e-10 * scale
    # partition: inner + outer = total
    assert rep["inner_value"] + rep["outer_value"] == pytest.approx(rep["total_value"], rel=1e-12)
    # outer region approaches -2 rho_u rho_d grad-norm (rescaled) plus counterterm
    assert rep["outer_value"] == pytest.approx(rep["expected_outer"], rel=0.2)
    assert rep["inner_value"] <= 0.0
