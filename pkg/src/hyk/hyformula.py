"""Closed-form third-order function F and the three-term energy expansion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SpinDensities",
    "EnergyBreakdown",
    "hy_third_order_f",
    "hy_third_order_f_direct",
    "f_at_one",
    "huang_yang_energy",
    "lss_second_order",
]

SIX_PI_SQ = 6.0 * math.pi**2


@dataclass(frozen=True)
class SpinDensities:
    """Number densities of the two spin components."""

    rho_up: float
    rho_down: float

    def __post_init__(self):
        if self.rho_up < 0 or self.rho_down < 0:
            raise ValueError("densities must be nonnegative")

    @property
    def total(self) -> float:
        return self.rho_up + self.rho_down

    def k_fermi(self, spin: str | int) -> float:
        """Fermi momentum (6 pi^2 rho_sigma)^(1/3)."""
        rho = self.rho_up if spin in ("up", 0) else self.rho_down
        return (SIX_PI_SQ * rho) ** (1.0 / 3.0)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy density split into kinetic, second-order and third-order terms."""

    kinetic: float
    second_order: float
    third_order: float

    @property
    def total(self) -> float:
        return self.kinetic + self.second_order + self.third_order


def _f_bracket(y: float) -> float:
    """The bracket of F at y = x^(1/3), with the near-y=1 log factorized.

    The polynomial multiplying ln|1-y| has the exact factorization
    (1-y)^4 (y^3 + 4y^2 + 4y + 1), so the product (1-y)^4 ln|1-y| is
    evaluated directly and vanishes smoothly at y = 1.
    """
    x73 = y**7
    t = 1.0 - y
    log_t4 = 0.0 if t == 0.0 else t**4 * math.log(abs(t))
    cubic = y**3 + 4.0 * y**2 + 4.0 * y + 1.0
    terms = [
        48.0 * x73 * math.log(y) if y > 0.0 else 0.0,  # 16 x^{7/3} ln x = 48 x^{7/3} ln y
        -48.0 * (x73 + 1.0) * math.log1p(y),
        6.0 * (15.0 * y - 4.0 * y**2 + 33.0 * y**3 + 33.0 * y**4 - 4.0 * y**5 + 15.0 * y**6),
        21.0 * cubic * log_t4,
        -21.0 * cubic * t**4 * math.log1p(y),
    ]
    return math.fsum(terms)


def hy_third_order_f(x) -> float | np.ndarray:
    """The universal function F(x) of the density ratio, finite on [0, inf)."""
    xarr = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xarr < 0):
        raise ValueError("F is defined for nonnegative arguments")
    pref = SIX_PI_SQ ** (1.0 / 3.0) / 35.0
    out = np.array([pref * _f_bracket(xi ** (1.0 / 3.0)) for xi in xarr])
    return out if np.ndim(x) else float(out[0])


def hy_third_order_f_direct(x: float) -> float:
    """Literal term-by-term evaluation of F; ill-conditioned at x = 1.

    Kept as an independent cross-check path for x away from 1.
    """
    if x < 0:
        raise ValueError("F is defined for nonnegative arguments")
    if x == 0.0:
        return 0.0
    y = x ** (1.0 / 3.0)
    poly = 1.0 - 6.0 * y**2 + 5.0 * y**3 + 5.0 * y**4 - 6.0 * y**5 + y**7
    bracket = math.fsum(
        [
            16.0 * x ** (7.0 / 3.0) * math.log(x),
            -48.0 * (x ** (7.0 / 3.0) + 1.0) * math.log(1.0 + y),
            6.0 * (15.0 * y - 4.0 * y**2 + 33.0 * x + 33.0 * y**4 - 4.0 * y**5 + 15.0 * x**2),
            21.0 * poly * math.log(abs(1.0 - y) / (1.0 + y)) if y != 1.0 else 0.0,
        ]
    )
    return SIX_PI_SQ ** (1.0 / 3.0) / 35.0 * bracket


def f_at_one() -> float:
    """Closed-form F(1) = (48/35) (11 - 2 ln 2) (6 pi^2)^(1/3)."""
    return 48.0 / 35.0 * (11.0 - 2.0 * math.log(2.0)) * SIX_PI_SQ ** (1.0 / 3.0)


def huang_yang_energy(d: SpinDensities, a: float) -> EnergyBreakdown:
    """Three-term energy density at scattering length a >= 0.

    The third-order term is written on the majority-spin base so the
    expression is symmetric under exchanging the two densities.
    """
    if a < 0:
        raise ValueError("scattering length must be nonnegative")
    ru, rd = d.rho_up, d.rho_down
    kinetic = 0.6 * SIX_PI_SQ ** (2.0 / 3.0) * (ru ** (5.0 / 3.0) + rd ** (5.0 / 3.0))
    second = 8.0 * math.pi * a * ru * rd
    big, small = (ru, rd) if ru >= rd else (rd, ru)
    if big == 0.0:
        third = 0.0
    else:
        third = a**2 * big ** (7.0 / 3.0) * hy_third_order_f(small / big)
    return EnergyBreakdown(kinetic, second, third)


def lss_second_order(d: SpinDensities, a: float) -> float:
    """Two-term expansion: kinetic plus 8 pi a rho_up rho_down."""
    b = huang_yang_energy(d, a)
    return b.total - b.third_order
