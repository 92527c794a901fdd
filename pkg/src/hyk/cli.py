"""Command-line front end: deterministic runs with manifest emission.

Every run writes its results (CSV or JSON) plus ``<output>.manifest.json``
holding the fully resolved configuration; re-running from a manifest
reproduces all values bit for bit.  HYK_THREADS overrides the worker pool.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import _accel
from .hyformula import SpinDensities, huang_yang_energy, hy_third_order_f, f_at_one
from .potential import square_well, truncated_gaussian, load_tabulated, zero_potential
from .scattering import (
    solve_zero_energy,
    periodize,
    energy_identity_residual,
    eight_pi_a_residual,
)
from .paulisum import MCParams, pauli_blocked_integral, corr_constant, domain_split_report
from . import lattice as latmod
from . import fockcheck as fs


def _config_seed(cfg: dict) -> int:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:6], "big")


def _emit(path: str | None, fmt: str, rows, header, summary: dict, cfg: dict, t0: float):
    """Write rows + summary and the manifest; print summary to stdout."""
    payload = {"summary": summary, "rows": [dict(zip(header, r)) for r in rows]} if fmt == "json" else None
    if path:
        if fmt == "json":
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=2, default=float)
        else:
            with open(path, "w") as fh:
                fh.write(",".join(_csv_quote(h) for h in header) + "\r\n")
                for r in rows:
                    fh.write(",".join(_csv_quote(x) for x in r) + "\r\n")
            with open(path + ".plot.py", "w") as fh:
                fh.write(_PLOT_SCRIPT.format(csv=os.path.basename(path), x=header[0], y=header[1]))
        manifest = {
            "config": cfg,
            "version": __version__,
            "wall_time_s": time.time() - t0,
            "summary": summary,
        }
        with open(path + ".manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, default=float)
    print(json.dumps(summary, indent=2, default=float))


_PLOT_SCRIPT = '''\
#!/usr/bin/env python3
"""Plot {csv} (generated alongside the data; no plotting dependency in hyk)."""
import csv
import matplotlib.pyplot as plt

with open("{csv}") as fh:
    rows = list(csv.DictReader(fh))
xs = [float(r["{x}"]) for r in rows]
ys = [float(r["{y}"]) for r in rows]
plt.plot(xs, ys, marker=".")
plt.xlabel("{x}")
plt.ylabel("{y}")
plt.tight_layout()
plt.savefig("{csv}.png", dpi=150)
'''


def _csv_quote(x) -> str:
    s = repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def _potential_from(args):
    params = {}
    if args.params:
        for item in args.params.split(","):
            key, val = item.split("=")
            params[key.strip()] = float(val)
    kind = args.potential
    if kind == "square_well":
        return square_well(params.get("V0", 2.0), params.get("R", 1.0))
    if kind == "gaussian":
        return truncated_gaussian(params.get("V0", 1.0), params.get("w", 0.5), params.get("R", 2.0))
    if kind == "tabulated":
        return load_tabulated(args.table)
    if kind == "zero":
        return zero_potential()
    raise SystemExit(f"unknown potential {kind!r}")


def _add_common(p):
    p.add_argument("--emit", choices=("csv", "json"), default="json")
    p.add_argument("--out", default=None, help="output path (manifest written alongside)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON config or manifest; flags override")


def _merge_config(args, argv):
    if not args.config:
        return args
    with open(args.config) as fh:
        data = json.load(fh)
    cfg = data.get("config", data)
    passed = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv[1:] if a.startswith("--")}
    for key, val in cfg.items():
        if key not in passed and hasattr(args, key) and key != "config":
            setattr(args, key, val)
    return args


def cmd_scatter(args):
    t0 = time.time()
    pot = _potential_from(args)
    heights = [float(h) for h in args.ladder.split(",")] if args.ladder else [None]
    rows = []
    summary = {}
    for h in heights:
        p = square_well(h, pot.support_radius or 1.0) if h is not None else pot
        sol = solve_zero_energy(p, r_max=args.rmax, nodes=args.nodes)
        if h is None:
            rows = list(zip(sol.r_grid.tolist(), sol.phi.tolist(), sol.u.tolist()))
            summary = {
                "a": sol.a,
                "residual_8pia": eight_pi_a_residual(sol),
                "residual_energy_identity": energy_identity_residual(sol),
            }
        else:
            rows.append((h, solve_zero_energy(p).a))
    header = ("r", "phi", "u") if heights == [None] else ("height", "a")
    if args.ladder:
        summary = {"ladder_heights": heights, "a_values": [r[1] for r in rows]}
    cfg = vars(args).copy()
    cfg.pop("func", None)
    _emit(args.out, args.emit, rows, header, summary, cfg, t0)
    return 0


def cmd_hy(args):
    t0 = time.time()
    if args.symmetric:
        d = SpinDensities(args.rho / 2.0, args.rho / 2.0)
    else:
        d = SpinDensities(args.rho_up, args.rho_down)
    b = huang_yang_energy(d, args.a)
    summary = {
        "rho_up": d.rho_up,
        "rho_down": d.rho_down,
        "a": args.a,
        "kinetic": b.kinetic,
        "second_order": b.second_order,
        "third_order": b.third_order,
        "total": b.total,
    }
    cfg = vars(args).copy()
    cfg.pop("func", None)
    _emit(args.out, args.emit, [tuple(summary.values())], tuple(summary.keys()), summary, cfg, t0)
    return 0


def cmd_fcurve(args):
    t0 = time.time()
    xs = np.linspace(args.xmin, args.xmax, args.n)
    rows = [(float(x), float(hy_third_order_f(float(x)))) for x in xs]
    summary = {"n": args.n, "f_at_one": f_at_one()}
    cfg = vars(args).copy()
    cfg.pop("func", None)
    _emit(args.out, args.emit, rows, ("x", "F"), summary, cfg, t0)
    return 0


def cmd_pauli_mc(args):
    t0 = time.time()
    cfg = vars(args).copy()
    cfg.pop("func", None)
    seed = args.seed if args.seed is not None else _config_seed(cfg)
    mc = MCParams(samples=args.samples, seed=seed, strata=args.strata, workers=args.workers)
    est = pauli_blocked_integral(args.kup, args.kdown, args.eps, mc)
    summary = {
        "value": est.value,
        "std_error": est.std_error,
        "quad_rel_error": est.quad_rel_error,
        "n_samples": est.n_samples,
        "seed": seed,
    }
    if args.oracle:
        rho_u = args.kup**3 / (6 * math.pi**2)
        rho_d = args.kdown**3 / (6 * math.pi**2)
        big, small = max(rho_u, rho_d), min(rho_u, rho_d)
        summary["oracle_closed_form"] = big ** (7.0 / 3.0) * float(hy_third_order_f(small / big))
    rows = [(i, float(v)) for i, v in enumerate(est.breakdown)] if est.breakdown is not None else []
    cfg["seed"] = seed
    _emit(args.out, args.emit, rows, ("stratum", "value"), summary, cfg, t0)
    return 0


def cmd_lattice(args):
    t0 = time.time()
    d = SpinDensities(args.rho_up, args.rho_down)
    kf = max(d.k_fermi("up"), d.k_fermi("down"))
    L = args.boxsize if args.boxsize else latmod.matched_box(d, 40.0, 60.0)
    lat = latmod.build(L, d, args.cutoff if args.cutoff else kf * 1.2)
    rec = latmod.ffg_energy(lat, 0.0)
    summary = {"L": L, "n_up": rec["n_up"], "n_down": rec["n_down"],
               "kinetic_per_volume": rec["kinetic_per_volume"]}
    rows = [tuple(summary.values())]
    header = tuple(summary.keys())
    if args.extrapolate:
        import numpy as _np

        kfu, kfd = d.k_fermi("up"), d.k_fermi("down")
        pts = [(kfl / kf, latmod.ffg_kinetic_shells(kfl / kf, kfu, kfd))
               for kfl in _np.linspace(150.0, 400.0, 30)]
        ex = latmod.extrapolate(pts)
        summary.update({"kinetic_extrapolated": ex["limit"], "extrapolation_residual": ex["residual"],
                        "low_confidence": ex["low_confidence"]})
        rows = [(float(l), float(v)) for l, v in pts]
        header = ("L", "kinetic_per_volume")
    if args.correction:
        pot = square_well(args.v0, args.range)
        sol = solve_zero_energy(pot)
        sp = 2 * math.pi / L
        p_split = 2.1 * kf + 2 * sp
        per = periodize(sol, L, args.gamma, p_split * 1.05, d.total)
        eps = args.eps if args.eps else d.total ** (2.0 / 3.0 + 1.0)
        cs = latmod.correction_lattice_sum(lat, per, eps, workers=args.workers)
        summary.update({"correction_sum": cs["value"], "correction_per_volume": cs["per_volume"],
                        "truncation_bound": cs["truncation_bound"], "eps": eps})
        if not args.extrapolate:
            rows = [tuple(summary.values())]
            header = tuple(summary.keys())
    cfg = vars(args).copy()
    cfg.pop("func", None)
    _emit(args.out, args.emit, rows, header, summary, cfg, t0)
    return 0


def cmd_tscaling(args):
    t0 = time.time()
    if args.gamma >= 1.0 / 6.0 or args.gamma <= 0:
        raise SystemExit("gamma must lie in (0, 1/6)")
    d = SpinDensities(args.rho / 2.0, args.rho / 2.0)
    kf = d.k_fermi("up")
    fits = latmod.t_integral_suite(d, args.gamma, args.delta, args.kfl / kf, n_points=args.points)
    refs = latmod.t_suite_reference_exponents(args.gamma, args.kappa)
    rows = [(f.label, f.slope, refs[f.label], f.slope - refs[f.label], f.r_squared) for f in fits]
    summary = {r[0]: {"slope": r[1], "reference": r[2], "deviation": r[3]} for r in rows}
    summary["kappa_declared"] = args.kappa
    cfg = vars(args).copy()
    cfg.pop("func", None)
    _emit(args.out, args.emit, rows, ("label", "slope", "reference", "deviation", "r2"), summary, cfg, t0)
    return 0


def cmd_heatkernel(args):
    t0 = time.time()
    d_kf = (6 * math.pi**2 * args.rho / 2) ** (1 / 3)
    L = args.kfl / d_kf
    ts = np.geomspace(args.tmin, args.tmax, args.points)
    rows = []
    scale = args.rho ** (2.0 / 3.0 - 2.0 * args.gamma)
    for t in ts:
        rec = latmod.heat_kernel_norms(float(t), L, args.rho, args.gamma)
        rows.append((float(t), rec["l1"], rec["l2_tail"], rec["l2_tail"] * math.exp(4.5 * t * scale)))
    slope = float(np.polyfit(np.log(ts), np.log([r[3] for r in rows]), 1)[0])
    summary = {"l1_max_dev": max(abs(r[1] - 1.0) for r in rows), "rescaled_t_exponent": slope}
    cfg = vars(args).copy()
    cfg.pop("func", None)
    _emit(args.out, args.emit, rows, ("t", "l1", "l2_tail", "l2_rescaled"), summary, cfg, t0)
    return 0


def fock_preset(name: str):
    """Mode sets for the verification presets (see fockcheck docstrings)."""
    L = 8.0
    spc = 2 * math.pi / L
    if name == "square-vphi-tiny":
        rho_s = 0.5 * spc**3 / (6 * math.pi**2)
        modes = [((dx, 0, 0), s) for s in (0, 1) for dx in (-1, 0, 1)]
        n_tab = 40
    elif name == "anticommutator-tiny":
        rho_s = (1.2 * spc) ** 3 / (6 * math.pi**2)
        modes = [((dx, 0, 0), s) for s in (0, 1) for dx in (-2, -1, 1, 2)]
        n_tab = 64
    else:
        raise SystemExit(f"unknown preset {name!r}")
    d = SpinDensities(rho_s, rho_s)
    lat = latmod.build(L, d, 6 * spc)
    sol = solve_zero_energy(square_well(2.0, 1.0))
    fock = fs.build_fock(lat, modes)
    tabs = fs.kernel_tables(sol, L, n_tab)
    return fock, tabs


def _parse_modes(spec: str):
    """Parse 'up:0,0,0;1,0,0|down:0,0,0' into a [(kvec, spin)] list."""
    out = []
    for part in spec.split("|"):
        name, _, rest = part.partition(":")
        spin = 0 if name.strip() in ("up", "0") else 1
        for triple in rest.split(";"):
            kx, ky, kz = (int(t) for t in triple.split(","))
            out.append(((kx, ky, kz), spin))
    return out


def fock_custom(modes_spec: str, kf_units: float):
    L = 8.0
    spc = 2 * math.pi / L
    rho_s = (kf_units * spc) ** 3 / (6 * math.pi**2)
    d = SpinDensities(rho_s, rho_s)
    lat = latmod.build(L, d, 12 * spc)
    sol = solve_zero_energy(square_well(2.0, 1.0))
    modes = _parse_modes(modes_spec)
    fock = fs.build_fock(lat, modes)
    n_tab = int(3 * max(abs(c) for k, _ in modes for c in k)) ** 2 * 3 + 1
    tabs = fs.kernel_tables(sol, L, max(n_tab, 16))
    return fock, tabs


def cmd_fock_verify(args):
    t0 = time.time()
    if args.modes:
        fock, tabs = fock_custom(args.modes, args.kfermi)
    else:
        fock, tabs = fock_preset(args.preset)
    checks = args.checks.split(",") if args.checks else ["car", "ph", "vphi", "tt", "rr", "conj"]
    rows = []
    status = 0
    tol = {"car": 1e-13, "ph": 1e-12, "vphi": 1e-10, "tt": 1e-12, "rr": 1e-9, "conj": 1e-10,
           "ops": 1e-11}
    kernel_key = {"v": "v", "vphi": "vphi", "vf": "vf"}[args.kernel]
    for check in checks:
        if check == "car":
            r = fs.car_residuals(fock)
            val = max(r.values())
        elif check == "ph":
            r = fs.particle_hole(fock)
            val = max(r["unitarity"], r["law"], r["r_omega"])
        elif check == "vphi":
            val = fs.verify_vphi_square_identity(fock, tabs)["global"]
        elif check == "tt":
            tups = fs.admissible_tt_tuples(fock, 20, seed=4)
            res = fs.verify_tt_anticommutator(fock, tups)
            val = max(res) if res else float("nan")
        elif check == "rr":
            eps = 0.3 * fock.k_fermi[0] ** 2
            val = fs.verify_rr_decomposition(fock, tabs["phi"], eps)["residual"]
        elif check == "conj":
            r = fs.conjugation_lower_bound_check(fock, tabs, trials=args.trials)
            val = max(-r["min_gap"], r["operator_residual"])
        elif check == "ops":
            # hermiticity plus conservation of the particle-hole charge
            # N_out - N_in per spin (the charge every transformed piece keeps)
            table = tabs[kernel_key]
            val = 0.0
            for which in ("Q2", "Q3", "Q4"):
                op = fs.q_term(fock, table, which)
                val = max(val, fs._spnorm(op - op.T))
                for spin in (0, 1):
                    q_op = fock.number_op(spin=spin, ball=False) - fock.number_op(spin=spin, ball=True)
                    val = max(val, fs._spnorm(op @ q_op - q_op @ op))
        else:
            raise SystemExit(f"unknown check {check!r}")
        ok = val <= tol[check]
        rows.append((check, val, tol[check], "pass" if ok else "FAIL"))
        if not ok:
            status = 1
    summary = {r[0]: {"residual": r[1], "tolerance": r[2], "status": r[3]} for r in rows}
    cfg = vars(args).copy()
    cfg.pop("func", None)
    _emit(args.out, args.emit, rows, ("check", "residual", "tolerance", "status"), summary, cfg, t0)
    return status


def cmd_corr(args):
    t0 = time.time()
    pot = square_well(args.v0, args.range)
    sol = solve_zero_energy(pot)
    d = SpinDensities(args.rho / 2.0, args.rho / 2.0)
    cfg = vars(args).copy()
    cfg.pop("func", None)
    seed = args.seed if args.seed is not None else _config_seed(cfg)
    eps = args.eps if args.eps else d.total ** (2.0 / 3.0 + args.delta)
    mc = MCParams(samples=args.samples, seed=seed, workers=args.workers)
    rec = corr_constant(sol, d, eps, mc)
    summary = {
        "corr_constant": rec.value,
        "second_order": rec.second_order,
        "third_order": rec.third_order,
        "deficit": rec.deficit,
        "deficit_std_error": rec.deficit_std_error,
        "seed": seed,
    }
    if args.split_gamma:
        summary["domain_split"] = domain_split_report(sol, d, eps, args.split_gamma, mc)
    cfg["seed"] = seed
    _emit(args.out, args.emit, [tuple(summary.values())[:5]],
          ("corr_constant", "second", "third", "deficit", "deficit_se"), summary, cfg, t0)
    return 0


def cmd_sweep(args):
    with open(args.plan) as fh:
        plan = json.load(fh)
    status = 0
    for entry in plan["runs"]:
        argv = [entry["command"]] + [str(x) for x in entry.get("args", [])]
        status = max(status, main(argv))
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hyk", description="dilute Fermi gas energy toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("scatter", help="solve the zero-energy scattering problem")
    p.add_argument("--potential", default="square_well")
    p.add_argument("--params", default="V0=2,R=1")
    p.add_argument("--table", default=None, help="two-column file for tabulated potentials")
    p.add_argument("--rmax", type=float, default=None)
    p.add_argument("--nodes", type=int, default=4001)
    p.add_argument("--ladder", default=None, help="comma list of square-well heights (soft-sphere ladder)")
    _add_common(p)
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser("hy", help="three-term energy breakdown")
    p.add_argument("--rho", type=float, default=1e-3)
    p.add_argument("--rho-up", dest="rho_up", type=float, default=None)
    p.add_argument("--rho-down", dest="rho_down", type=float, default=None)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--symmetric", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_hy)

    p = sub.add_parser("fcurve", help="tabulate F(x)")
    p.add_argument("--xmin", type=float, default=0.0)
    p.add_argument("--xmax", type=float, default=4.0)
    p.add_argument("--n", type=int, default=401)
    _add_common(p)
    p.set_defaults(func=cmd_fcurve)

    p = sub.add_parser("pauli-mc", help="Pauli-blocked correction integral")
    p.add_argument("--kup", type=float, required=True)
    p.add_argument("--kdown", type=float, required=True)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--strata", type=int, default=8)
    p.add_argument("--oracle", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_pauli_mc)

    p = sub.add_parser("lattice", help="finite-volume sums")
    p.add_argument("--boxsize", type=float, default=None)
    p.add_argument("--rho-up", dest="rho_up", type=float, required=True)
    p.add_argument("--rho-down", dest="rho_down", type=float, required=True)
    p.add_argument("--cutoff", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--correction", action="store_true")
    p.add_argument("--extrapolate", action="store_true")
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--v0", type=float, default=2.0)
    p.add_argument("--range", type=float, default=1.0)
    _add_common(p)
    p.set_defaults(func=cmd_lattice)

    p = sub.add_parser("tscaling", help="t-integral scaling suite")
    p.add_argument("--rho", type=float, default=10 ** -3.5)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--kappa", type=float, default=0.02)
    p.add_argument("--kfl", type=float, default=110.0)
    p.add_argument("--points", type=int, default=6)
    _add_common(p)
    p.set_defaults(func=cmd_tscaling)

    p = sub.add_parser("heatkernel", help="periodic heat-kernel norms")
    p.add_argument("--rho", type=float, default=1e-3)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--kfl", type=float, default=40.0)
    p.add_argument("--tmin", type=float, default=None)
    p.add_argument("--tmax", type=float, default=None)
    p.add_argument("--points", type=int, default=8)
    _add_common(p)
    p.set_defaults(func=cmd_heatkernel)

    p = sub.add_parser("fock-verify", help="exact operator-identity suite")
    p.add_argument("--preset", default="square-vphi-tiny")
    p.add_argument("--modes", default=None,
                   help="explicit mode list, e.g. 'up:0,0,0;1,0,0;-1,0,0|down:0,0,0;1,0,0;-1,0,0'")
    p.add_argument("--kfermi", type=float, default=0.5, help="Fermi radius in lattice-spacing units")
    p.add_argument("--kernel", choices=("v", "vphi", "vf"), default="v")
    p.add_argument("--checks", default=None)
    p.add_argument("--trials", type=int, default=100)
    _add_common(p)
    p.set_defaults(func=cmd_fock_verify)

    p = sub.add_parser("corr", help="correlation-energy constant and deficit")
    p.add_argument("--rho", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--v0", type=float, default=2.0)
    p.add_argument("--range", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=50000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--split-gamma", dest="split_gamma", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_corr)

    p = sub.add_parser("sweep", help="run a JSON plan of subcommands")
    p.add_argument("plan")
    p.set_defaults(func=cmd_sweep)

    argv = list(sys.argv[1:]) if argv is None else list(argv)
    args = parser.parse_args(argv)
    if hasattr(args, "config"):
        args = _merge_config(args, argv)
    if getattr(args, "rho_up", None) is None and hasattr(args, "rho_up") and hasattr(args, "rho"):
        args.rho_up = args.rho / 2.0
        args.rho_down = args.rho / 2.0
    if hasattr(args, "tmin") and args.tmin is None:
        scale = args.rho ** (2.0 / 3.0 - 2.0 * args.gamma)
        args.tmin, args.tmax = 0.02 / scale, 0.2 / scale
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
