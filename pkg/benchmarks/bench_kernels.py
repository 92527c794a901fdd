#!/usr/bin/env python3
"""Compare the jitted and pure-python kernel backends.

Usage: python benchmarks/bench_kernels.py [--samples N]

The same chunks run through both paths; reported are wall times, the
speedup, and the relative deviation of the results (expected ~1e-15).
Set HYK_DISABLE_NUMBA=1 to make the fallback the package default.
"""

import argparse
import math
import time

import numpy as np

from hyk.hyformula import SpinDensities
from hyk.paulisum import MCParams, pauli_blocked_integral
from hyk.scattering import periodize, solve_zero_energy
from hyk.potential import square_well
from hyk import lattice as lat


def bench_pauli(samples: int):
    out = {}
    for jit in (True, False):
        mc = MCParams(samples=samples, seed=7, quad_check=False, jit=jit)
        pauli_blocked_integral(1.0, 1.0, 0.0, MCParams(samples=64, seed=7, jit=jit, quad_check=False))
        t0 = time.time()
        est = pauli_blocked_integral(1.0, 0.8, 0.05, mc)
        out[jit] = (time.time() - t0, est.value)
    return out


def bench_lattice(kfl: float):
    rho = 2e-3
    d = SpinDensities(rho / 2, rho / 2)
    kf = d.k_fermi("up")
    L = kfl / kf
    sp = 2 * math.pi / L
    sol = solve_zero_energy(square_well(2.0, 1.0))
    ll = lat.build(L, d, kf * 1.2)
    per = periodize(sol, L, 0.1, (2.1 * kf + 2 * sp) * 1.05, rho)
    out = {}
    for jit in (True, False):
        lat.correction_lattice_sum(ll, per, 1e-4, jit=jit)  # warm up compilation
        t0 = time.time()
        rec = lat.correction_lattice_sum(ll, per, 1e-4, jit=jit)
        out[jit] = (time.time() - t0, rec["value"])
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--kfl", type=float, default=16.0)
    args = ap.parse_args()

    print(f"pauli kernel, {args.samples} samples:")
    res = bench_pauli(args.samples)
    tj, vj = res[True]
    tp, vp = res[False]
    print(f"  numba : {tj:8.2f} s   value {vj:.12e}")
    print(f"  python: {tp:8.2f} s   value {vp:.12e}")
    print(f"  speedup {tp / tj:.1f}x, rel dev {abs(vj - vp) / abs(vj):.2e}")

    print(f"lattice correction sum, kF*L = {args.kfl}:")
    res = bench_lattice(args.kfl)
    tj, vj = res[True]
    tp, vp = res[False]
    print(f"  numba : {tj:8.2f} s   value {vj:.12e}")
    print(f"  python: {tp:8.2f} s   value {vp:.12e}")
    print(f"  speedup {tp / tj:.1f}x, rel dev {abs(vj - vp) / abs(vj):.2e}")


if __name__ == "__main__":
    main()
