"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``.  Tolerances are pinned
here; numbers in comments record the typical measured values.
"""

import math
import time

import numpy as np
import pytest

from hyk.hyformula import SpinDensities, hy_third_order_f, f_at_one
from hyk.potential import square_well
from hyk.scattering import (
    solve_zero_energy,
    periodize,
    energy_identity_residual,
    eight_pi_a_residual,
)
from hyk.paulisum import MCParams, pauli_blocked_integral, corr_constant
from hyk import lattice as lat
from hyk import fockcheck as fs
from hyk.cli import fock_preset


def _report(num, ok, detail):
    line = f"ACCEPTANCE {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    assert ok, line


def test_criterion_01_f_at_one():
    t0 = time.time()
    direct = hy_third_order_f(1.0)
    closed = f_at_one()
    rel = abs(direct - closed) / closed
    _report(1, rel <= 1e-12 and time.time() - t0 < 1.0, f"F(1) two-path rel dev {rel:.2e}")


def test_criterion_02_reciprocal_symmetry():
    t0 = time.time()
    worst = 0.0
    for x in (0.125, 0.25, 0.5, 2.0, 4.0, 8.0):
        lhs = hy_third_order_f(x)
        worst = max(worst, abs(lhs - x ** (7.0 / 3.0) * hy_third_order_f(1.0 / x)) / abs(lhs))
    _report(2, worst <= 1e-10 and time.time() - t0 < 1.0, f"max reciprocal dev {worst:.2e}")


def test_criterion_03_pauli_integral_vs_closed_form():
    t0 = time.time()
    k = 1.0
    details = []
    ok = True
    for ratio in (1.0, 0.5, 2.0):
        k_dn = k * ratio ** (1.0 / 3.0)
        est = pauli_blocked_integral(k, k_dn, 0.0, MCParams(samples=1_000_000, seed=2024))
        rho_u = k**3 / (6 * math.pi**2)
        target = rho_u ** (7.0 / 3.0) * float(hy_third_order_f(ratio))
        dev = abs(est.value - target)
        comb = est.combined_error()
        ok &= dev <= 3.0 * comb and dev <= 0.01 * target
        details.append(f"x={ratio}: dev {dev/target:.2%} ({dev/comb:.2f} sigma)")
    elapsed = time.time() - t0
    ok &= elapsed < 600.0
    _report(3, ok, "; ".join(details) + f"; {elapsed:.0f}s")


def test_criterion_04_scattering_oracle():
    t0 = time.time()
    sol = solve_zero_energy(square_well(2.0, 1.0))
    dev_a = abs(sol.a - (1.0 - math.tanh(1.0))) / (1.0 - math.tanh(1.0))
    r1 = eight_pi_a_residual(sol)
    r2 = energy_identity_residual(sol)
    ok = dev_a <= 1e-8 and r1 <= 1e-8 and r2 <= 1e-6 and time.time() - t0 < 5.0
    _report(4, ok, f"a dev {dev_a:.2e}, 8pia resid {r1:.2e}, energy identity {r2:.2e}")


def test_criterion_05_corr_constant_lower_bound():
    t0 = time.time()
    sol = solve_zero_energy(square_well(2.0, 1.0))
    rhos = np.geomspace(1e-4, 1e-3, 5)
    deficits = []
    ok = True
    details = []
    for i, rho in enumerate(rhos):
        d = SpinDensities(rho / 2.0, rho / 2.0)
        eps = rho ** (2.0 / 3.0 + 1.0)  # delta = 1
        rec = corr_constant(sol, d, eps, MCParams(samples=100_000, seed=31 + i, quad_check=False))
        lower_ok = rec.deficit >= -3.0 * rec.deficit_std_error
        ok &= lower_ok
        deficits.append(rec.deficit)
        details.append(f"rho={rho:.1e}: D={rec.deficit:.2e}+-{rec.deficit_std_error:.0e}")
    slope = float(np.polyfit(np.log(rhos), np.log(np.abs(deficits)), 1)[0])
    elapsed = time.time() - t0
    ok &= slope >= 2.38 and elapsed < 1800.0
    _report(5, ok, f"deficit slope {slope:.3f} (need >= 2.38); " + "; ".join(details) + f"; {elapsed:.0f}s")


def test_criterion_06_lattice_to_continuum():
    t0 = time.time()
    rho = 1e-3
    d = SpinDensities(rho / 2.0, rho / 2.0)
    kf = d.k_fermi("up")
    target = 0.6 * (6 * math.pi**2) ** (2.0 / 3.0) * 2.0 * (rho / 2.0) ** (5.0 / 3.0)
    pts = [(kfl / kf, lat.ffg_kinetic_shells(kfl / kf, kf, kf)) for kfl in np.linspace(150, 400, 30)]
    ffg_dev = abs(lat.extrapolate(pts)["limit"] - target) / target
    sol = solve_zero_energy(square_well(2.0, 1.0))
    eps = rho ** (2.0 / 3.0 + 1.0)
    L = lat.matched_box(d, 42.0, 50.0)
    sp = 2.0 * math.pi / L
    ll = lat.build(L, d, kf * 1.2)
    per = periodize(sol, L, 0.1, (2.1 * kf + 2.0 * sp) * 1.05, rho)
    rec = lat.correction_lattice_sum(ll, per, eps)
    cc = corr_constant(sol, d, eps, MCParams(samples=150_000, seed=12, quad_check=False))
    gap = abs(rec["per_volume"] - cc.pauli_term) / cc.pauli_term
    elapsed = time.time() - t0
    ok = ffg_dev <= 5e-3 and gap <= 0.02 and kf * L >= 40.0 and elapsed < 600.0
    _report(6, ok, f"ffg extrapolation dev {ffg_dev:.2%}, correction-sum gap {gap:.2%} "
                   f"at kF*L={kf*L:.1f}; {elapsed:.0f}s")


def test_criterion_07_t_integral_scalings():
    t0 = time.time()
    gamma, kappa = 0.1, 0.02
    d = SpinDensities(5e-5, 5e-5)
    kf = d.k_fermi("up")
    fits = lat.t_integral_suite(d, gamma, 1.0, 110.0 / kf, kappa=kappa)
    refs = lat.t_suite_reference_exponents(gamma, kappa)
    devs = {f.label: f.slope - refs[f.label] for f in fits}
    worst = max(abs(v) for v in devs.values())
    elapsed = time.time() - t0
    ok = worst <= 0.05 and elapsed < 300.0
    _report(7, ok, "; ".join(f"{k}: {v:+.3f}" for k, v in devs.items()) + f" (|dev|<=0.05); {elapsed:.0f}s")


def test_criterion_08_heat_kernel():
    t0 = time.time()
    rho, gamma = 1e-3, 0.1
    d = SpinDensities(rho / 2.0, rho / 2.0)
    L = 40.0 / d.k_fermi("up")
    scale = rho ** (2.0 / 3.0 - 2.0 * gamma)
    ts = np.geomspace(0.02 / scale, 0.2 / scale, 8)
    l1_dev = 0.0
    vals = []
    for t in ts:
        rec = lat.heat_kernel_norms(float(t), L, rho, gamma)
        l1_dev = max(l1_dev, abs(rec["l1"] - 1.0))
        vals.append(rec["l2_tail"] * math.exp(4.5 * t * scale))
    slope = float(np.polyfit(np.log(ts), np.log(vals), 1)[0])
    elapsed = time.time() - t0
    ok = l1_dev <= 1e-10 and slope <= -0.70 and elapsed < 60.0
    _report(8, ok, f"l1 dev {l1_dev:.2e}, rescaled tail t-exponent {slope:.3f}; {elapsed:.0f}s")


def test_criterion_09_fock_identity_suite():
    t0 = time.time()
    fock34, tabs34 = fock_preset("square-vphi-tiny")
    fockrr, tabsrr = fock_preset("anticommutator-tiny")
    car = max(fs.car_residuals(fock34)["mixed"], fs.car_residuals(fock34)["aa"],
              fs.car_residuals(fockrr)["mixed"], fs.car_residuals(fockrr)["aa"])
    ph = fs.particle_hole(fock34)
    ph_res = max(ph["unitarity"], ph["law"], ph["r_omega"])
    vphi = fs.verify_vphi_square_identity(fock34, tabs34)
    tups = fs.admissible_tt_tuples(fockrr, 20, seed=4)
    tt = max(fs.verify_tt_anticommutator(fockrr, tups))
    eps = 0.3 * fockrr.k_fermi[0] ** 2
    rr = fs.verify_rr_decomposition(fockrr, tabsrr["phi"], eps)
    signs_ok = all(rr["extremal"][n] >= -1e-10 for n in ("I4", "I5", "I6", "I7", "I8"))
    signs_ok &= all(rr["extremal"][n] <= 1e-10 for n in ("I9", "I10"))
    conj = fs.conjugation_lower_bound_check(fock34, tabs34, trials=100, seed=5)
    elapsed = time.time() - t0
    ok = (
        car <= 1e-13
        and ph_res <= 1e-12
        and vphi["global"] <= 1e-10
        and len(tups) == 20 and tt <= 1e-12
        and rr["residual"] <= 1e-9
        and signs_ok
        and conj["min_gap"] >= -1e-10
        and elapsed < 300.0
    )
    _report(9, ok, f"CAR {car:.1e}; PH {ph_res:.1e}; Vphi {vphi['global']:.1e}; "
                   f"TT {tt:.1e}; RR {rr['residual']:.1e}; signs {'ok' if signs_ok else 'BAD'}; "
                   f"conj gap {conj['min_gap']:.1e}; {elapsed:.0f}s")


def test_criterion_10_determinism_across_workers():
    t0 = time.time()
    vals = []
    for workers in (1, 4, 8):
        mc = MCParams(samples=8192, seed=777, workers=workers, chunk_size=512, quad_check=False)
        vals.append(pauli_blocked_integral(1.0, 0.8, 0.05, mc).value)
    mc_ok = vals[0] == vals[1] == vals[2]
    rho = 2e-3
    d = SpinDensities(rho / 2.0, rho / 2.0)
    kf = d.k_fermi("up")
    sol = solve_zero_energy(square_well(2.0, 1.0))
    L = 16.0 / kf
    sp = 2.0 * math.pi / L
    ll = lat.build(L, d, kf * 1.2)
    per = periodize(sol, L, 0.1, (2.1 * kf + 2.0 * sp) * 1.05, rho)
    sums = [lat.correction_lattice_sum(ll, per, 1e-4, workers=w)["value"] for w in (1, 4, 8)]
    lat_ok = sums[0] == sums[1] == sums[2]
    _report(10, mc_ok and lat_ok,
            f"MC bit-identical across 1/4/8 workers: {mc_ok}; lattice sums: {lat_ok}; "
            f"{time.time()-t0:.0f}s")
