"""Zero-energy scattering: profile, scattering length, transforms, periodization.

The zero-energy scattering equation in these units (kinetic operator
-Laplacian) reads  2*Lap(phi) + V*(1-phi) = 0 with phi -> 0 at infinity.
Writing phi = 1 - u/(c r) reduces it to the regular radial problem
u'' = (V/2) u, u(0) = 0, which is what we integrate.  Outside the support
u is affine, u = c*(r - a), and a is the s-wave scattering length.

Fourier conventions: on R^3, F(g)(p) = int g(x) exp(-i p.x) dx; for radial g
this is the spherical transform (4 pi / p) int g(r) sin(p r) r dr.  On a box
of side L the coefficients of the periodized profile coincide with F at the
nonzero lattice momenta, and the zero mode is set to 0 by definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp, simpson

from .potential import RadialPotential

__all__ = [
    "ScatteringSolution",
    "PeriodicScattering",
    "ConvergenceError",
    "solve_zero_energy",
    "fourier_phi",
    "vf_hat",
    "v_hat",
    "vphi2_hat",
    "energy_identity_residual",
    "periodize",
    "bethe_goldstone_kernel",
    "chi_hat",
    "phi_gt_norms",
]

TWO_PI = 2.0 * math.pi


class ConvergenceError(RuntimeError):
    """ODE or quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class ScatteringSolution:
    """Solved zero-energy profile on a radial grid.

    ``u`` is normalized so that u(r) = r - a outside the support; ``phi``
    is 1 - u/r there, i.e. phi = a/r.  The grid contains the support radius
    as the node ``i_support`` so quadratures can split there (V jumps, u''
    kinks).  Immutable, thread-safe.
    """

    a: float
    r_grid: np.ndarray
    phi: np.ndarray
    u: np.ndarray
    du: np.ndarray  # du/dr on the grid, same normalization as u
    potential: RadialPotential
    i_support: int

    @property
    def r_max(self) -> float:
        return float(self.r_grid[-1])

    def dphi(self) -> np.ndarray:
        """phi'(r) on the grid (exactly 0 at r=0 by parity)."""
        r = self.r_grid
        out = np.zeros_like(r)
        out[1:] = -(self.du[1:] * r[1:] - self.u[1:]) / r[1:] ** 2
        return out

    def split_integral(self, values: np.ndarray) -> float:
        """Integrate values(r) dr over the grid, split at the support node."""
        i = self.i_support
        r = self.r_grid
        if i <= 0:
            return float(simpson(values, x=r))
        total = float(simpson(values[: i + 1], x=r[: i + 1]))
        if i < len(r) - 1:
            total += float(simpson(values[i:], x=r[i:]))
        return total

    def interior_integral(self, values: np.ndarray) -> float:
        """Integrate values(r) dr over [0, support] only (V vanishes outside)."""
        i = self.i_support
        if i <= 0:
            return 0.0
        return float(simpson(values[: i + 1], x=self.r_grid[: i + 1]))


def solve_zero_energy(
    potential: RadialPotential,
    r_max: float | None = None,
    nodes: int = 4001,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> ScatteringSolution:
    """Integrate u'' = (V/2) u outward and extract the scattering length.

    The grid is uniform on [0, r_max] with ``r_max > support_radius``
    (default 1.5x the support, or 1.0 for the zero potential).
    """
    support = potential.support_radius
    if r_max is None:
        r_max = 1.5 * support if support > 0 else 1.0
    if support > 0 and r_max <= support:
        raise ValueError("r_max must exceed the potential support")
    if nodes < 3:
        raise ValueError("need at least 3 grid nodes")
    if support > 0:
        # default nodes puts >= 200 inside the support; explicit coarser grids
        # are allowed down to a sanity floor (used by refinement studies)
        n_in = max(33, int(round(nodes * support / r_max)) | 1)
        n_out = max(65, nodes - n_in)
        r = np.concatenate([np.linspace(0.0, support, n_in), np.linspace(support, r_max, n_out)[1:]])
        i_sup = n_in - 1
    else:
        r = np.linspace(0.0, r_max, nodes)
        i_sup = 0

    if potential.kind == "zero" or (potential.kind == "square_well" and potential.params["height"] == 0.0):
        u = r.copy()
        du = np.ones_like(r)
        phi = np.zeros_like(r)
        return ScatteringSolution(0.0, r, phi, u, du, potential, i_sup)

    def rhs(t, y):
        return [y[1], 0.5 * potential.eval(t) * y[0]]

    sol = solve_ivp(
        rhs,
        (0.0, r_max),
        [0.0, 1.0],
        method="DOP853",
        t_eval=r,
        rtol=rtol,
        atol=atol,
        max_step=max(support / 400.0, r_max / 4000.0),
    )
    if not sol.success:
        raise ConvergenceError(f"radial ODE failed: {sol.message}")
    u_raw, du_raw = sol.y
    c = du_raw[-1]
    if c <= 0:
        raise ConvergenceError("nonpositive exterior slope; potential too singular for the solver")
    a = r_max - u_raw[-1] / c
    u = u_raw / c
    du = du_raw / c
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(r > 0, 1.0 - u / np.where(r > 0, r, 1.0), 1.0 - 1.0 / c)
    phi = np.clip(phi, 0.0, 1.0)
    return ScatteringSolution(float(a), r, phi, u, du, potential, i_sup)


def fourier_phi(sol: ScatteringSolution, p) -> float | np.ndarray:
    """Continuum transform of the scattering profile at radial momentum p >= 0.

    The a/r exterior tail beyond the grid is integrated analytically and
    contributes 4 pi a cos(p r_max) / p^2.  At p = 0 the transform diverges
    (phi is not integrable); the conventional flag value +inf is returned.
    """
    parr = np.atleast_1d(np.asarray(p, dtype=float))
    if np.any(parr < 0):
        raise ValueError("momentum must be nonnegative")
    r, phi = sol.r_grid, sol.phi
    out = np.empty_like(parr)
    for i, pi in enumerate(parr):
        if pi == 0.0:
            out[i] = math.inf if sol.a != 0.0 else 0.0
            continue
        interior = 4.0 * math.pi / pi * sol.split_integral(phi * r * np.sin(pi * r))
        tail = 4.0 * math.pi * sol.a * math.cos(pi * sol.r_max) / pi**2
        out[i] = interior + tail
    return out if np.ndim(p) else float(out[0])


def _interior_ft(sol: ScatteringSolution, values: np.ndarray, p: float) -> float:
    if p == 0.0:
        return 4.0 * math.pi * sol.interior_integral(values * sol.r_grid**2)
    return 4.0 * math.pi / p * sol.interior_integral(values * sol.r_grid * np.sin(p * sol.r_grid))


def vf_hat(sol: ScatteringSolution, p) -> float | np.ndarray:
    """Transform of V*(1-phi); equals 2 p^2 phi_hat(p) by the scattering equation."""
    parr = np.atleast_1d(np.asarray(p, dtype=float))
    vals = sol.potential.eval(sol.r_grid) * (1.0 - sol.phi)
    out = np.array([_interior_ft(sol, vals, pi) for pi in parr])
    return out if np.ndim(p) else float(out[0])


def v_hat(potential: RadialPotential, p, nodes: int = 4001) -> float | np.ndarray:
    """Transform of the bare potential (integrated over its support only)."""
    parr = np.atleast_1d(np.asarray(p, dtype=float))
    if potential.support_radius == 0.0:
        out = np.zeros_like(parr)
        return out if np.ndim(p) else 0.0
    r = np.linspace(0.0, potential.support_radius, nodes)
    vals = potential.eval(r)
    out = np.empty_like(parr)
    for i, pi in enumerate(parr):
        if pi == 0.0:
            out[i] = 4.0 * math.pi * float(simpson(vals * r * r, x=r))
        else:
            out[i] = 4.0 * math.pi / pi * float(simpson(vals * r * np.sin(pi * r), x=r))
    return out if np.ndim(p) else float(out[0])


def vphi2_hat(sol: ScatteringSolution, p) -> float | np.ndarray:
    """Transform of V*phi^2 (compactly supported)."""
    parr = np.atleast_1d(np.asarray(p, dtype=float))
    vals = sol.potential.eval(sol.r_grid) * sol.phi**2
    out = np.array([_interior_ft(sol, vals, pi) for pi in parr])
    return out if np.ndim(p) else float(out[0])


def vphi_hat(sol: ScatteringSolution, p) -> float | np.ndarray:
    """Transform of V*phi."""
    parr = np.atleast_1d(np.asarray(p, dtype=float))
    vals = sol.potential.eval(sol.r_grid) * sol.phi
    out = np.array([_interior_ft(sol, vals, pi) for pi in parr])
    return out if np.ndim(p) else float(out[0])


def gradient_norm_sq(sol: ScatteringSolution) -> float:
    """int |grad phi|^2 over R^3, grid part plus the exact a^2/r tail."""
    r, dphi = sol.r_grid, sol.dphi()
    grid_part = 4.0 * math.pi * sol.split_integral(dphi**2 * r * r)
    tail = 4.0 * math.pi * sol.a**2 / sol.r_max
    return grid_part + tail


def energy_identity_residual(sol: ScatteringSolution) -> float:
    """Residual of  int V(1-phi^2) - 2 int |grad phi|^2 = 8 pi a  (relative for a>0)."""
    vvals = sol.potential.eval(sol.r_grid)
    i_v = 4.0 * math.pi * sol.interior_integral(vvals * (1.0 - sol.phi**2) * sol.r_grid**2)
    i_grad = 2.0 * gradient_norm_sq(sol)
    target = 8.0 * math.pi * sol.a
    resid = abs(i_v - i_grad - target)
    return resid / abs(target) if target != 0.0 else resid


def eight_pi_a_residual(sol: ScatteringSolution) -> float:
    """Relative residual of 8 pi a = int V (1 - phi)."""
    target = 8.0 * math.pi * sol.a
    val = vf_hat(sol, 0.0)
    return abs(val - target) / abs(target) if target != 0.0 else abs(val)


# --- smooth momentum cutoff --------------------------------------------------

def _smooth_step(s):
    """C-infinity step: 0 for s<=0, 1 for s>=1, monotone in between."""
    s = np.asarray(s, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        fa = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
        fb = np.where(1 - s > 0, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)
    return fa / (fa + fb)


def chi_hat(t):
    """Radial bump with 1 on |t|<=1 and 0 on |t|>=5/4, smooth in between."""
    t = np.abs(np.asarray(t, dtype=float))
    return 1.0 - _smooth_step((t - 1.0) / 0.25)


# --- periodization ------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicScattering:
    """Fourier table of the periodized profile on the lattice (2 pi / L) Z^3.

    Coefficients are stored per integer shell n = |p L / 2 pi|^2 up to the
    cutoff; ``phi_hat[0] = 0`` by definition.  ``phi_lt``/``phi_gt`` are the
    smooth low/high split at scale 4 rho^(1/3 - gamma).  Entries at n that
    are not sums of three squares are never used and hold NaN.
    """

    L: float
    gamma: float
    rho: float
    p_cutoff: float
    n_max: int
    phi_hat: np.ndarray
    phi_lt: np.ndarray
    phi_gt: np.ndarray
    solution: ScatteringSolution = field(repr=False)

    @property
    def spacing(self) -> float:
        return TWO_PI / self.L

    def p_of_n(self, n) -> np.ndarray:
        return self.spacing * np.sqrt(np.asarray(n, dtype=float))

    def phi_hat_n(self, n: int) -> float:
        if n > self.n_max:
            raise KeyError(f"shell {n} beyond the coefficient cutoff {self.n_max}")
        val = self.phi_hat[n]
        if math.isnan(val):
            raise KeyError(f"shell {n} is not a representable lattice magnitude")
        return float(val)


def periodize(
    sol: ScatteringSolution,
    L: float,
    gamma: float,
    p_cutoff: float,
    rho: float,
) -> PeriodicScattering:
    """Tabulate phi_hat on the lattice up to |p| <= p_cutoff with the gamma-split.

    ``rho`` is the total density fixing the split scale 4 rho^(1/3-gamma).
    """
    if L <= 2.0 * sol.potential.support_radius:
        raise ValueError("box must exceed twice the potential support")
    if not 0.0 < gamma < 1.0 / 6.0:
        raise ValueError("gamma must lie in (0, 1/6)")
    if rho <= 0:
        raise ValueError("rho must be positive")
    spacing = TWO_PI / L
    n_max = int(math.floor((p_cutoff / spacing) ** 2 + 1e-9))
    ns = _three_square_shells(n_max)
    phi_tab = np.full(n_max + 1, np.nan)
    phi_tab[0] = 0.0
    ps = spacing * np.sqrt(ns[ns > 0].astype(float))
    vals = fourier_phi(sol, ps)
    phi_tab[ns[ns > 0]] = vals
    scale = 4.0 * rho ** (1.0 / 3.0 - gamma)
    pg = spacing * np.sqrt(np.arange(n_max + 1, dtype=float))
    lt = phi_tab * chi_hat(pg / scale)
    gt = phi_tab - lt
    return PeriodicScattering(L, gamma, rho, p_cutoff, n_max, phi_tab, lt, gt, sol)


def _three_square_shells(n_max: int) -> np.ndarray:
    """Integers n <= n_max representable as a sum of three squares."""
    m = int(math.isqrt(n_max)) + 1
    sq = np.arange(-m, m + 1) ** 2
    s2 = np.unique(sq[:, None] + sq[None, :])
    s2 = s2[s2 <= n_max]
    s3 = np.unique((s2[:, None] + np.unique(sq)[None, :]).ravel())
    return s3[s3 <= n_max].astype(np.int64)


def bethe_goldstone_kernel(sol: ScatteringSolution, r, rp, p, eps: float) -> float:
    """Regularized ladder kernel 2|p|^2 phi_hat(p) / (lam_{p,r} + lam_{-p,r'} + 2 eps).

    ``r``, ``rp`` and ``p`` are 3-vectors; lam_{p,r} = |r+p|^2 - |r|^2.
    Raises on a nonpositive denominator (outside the Pauli-allowed region).
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    p = np.asarray(p, dtype=float)
    lam1 = float(np.dot(r + p, r + p) - np.dot(r, r))
    lam2 = float(np.dot(rp - p, rp - p) - np.dot(rp, rp))
    den = lam1 + lam2 + 2.0 * eps
    if den <= 0:
        raise ValueError("nonpositive energy denominator; momenta violate Pauli constraints")
    pm = float(np.linalg.norm(p))
    return 2.0 * pm**2 * fourier_phi(sol, pm) / den


def phi_gt_norms(per: PeriodicScattering, grid_half_width: int | None = None) -> dict:
    """L1/L2 norms of the high-momentum part phi_> on the torus via FFT synthesis.

    Coefficients beyond the table cutoff are dropped; the induced L2 tail
    error is reported alongside the norms.
    """
    k = grid_half_width if grid_half_width is not None else int(math.isqrt(per.n_max))
    axis = np.fft.fftfreq(2 * k + 1, d=1.0 / (2 * k + 1)).astype(int)
    nx, ny, nz = np.meshgrid(axis, axis, axis, indexing="ij")
    n2 = nx * nx + ny * ny + nz * nz
    coeff = np.zeros_like(n2, dtype=float)
    inside = n2 <= per.n_max
    vals = per.phi_gt[n2[inside]]
    coeff[inside] = np.nan_to_num(vals)
    # f(x) = (1/L^3) sum phi_hat e^{ipx}: inverse FFT times (grid points / L^3)
    grid = np.fft.ifftn(coeff).real * coeff.size / per.L**3
    cell = (per.L / (2 * k + 1)) ** 3
    l1 = float(np.sum(np.abs(grid)) * cell)
    l2 = float(math.sqrt(np.sum(grid * grid) * cell))
    dropped = ~inside & (n2 > 0)
    spacing = per.spacing
    # crude |phi_hat| <= 8 pi a / (2 p^2) bound on the dropped shells
    pmin = spacing * math.sqrt(float(per.n_max))
    tail_l2 = 8 * math.pi * abs(per.solution.a) / (2 * pmin**2) * math.sqrt(dropped.sum() / per.L**3)
    return {"l1": l1, "l2": l2, "l2_tail_bound": float(tail_l2), "grid_half_width": k}
