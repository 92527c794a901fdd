"""Numerical toolkit for the dilute spin-1/2 Fermi gas energy expansion.

Units: hbar = 1, particle mass m = 1/2, so the one-body kinetic operator is
-Laplacian.  Lengths, momenta and energies are all expressed in these units.
"""

from .potential import RadialPotential, square_well, truncated_gaussian, tabulated
from .scattering import ScatteringSolution, PeriodicScattering, solve_zero_energy
from .hyformula import SpinDensities, EnergyBreakdown, hy_third_order_f, huang_yang_energy

__all__ = [
    "RadialPotential",
    "square_well",
    "truncated_gaussian",
    "tabulated",
    "ScatteringSolution",
    "PeriodicScattering",
    "solve_zero_energy",
    "SpinDensities",
    "EnergyBreakdown",
    "hy_third_order_f",
    "huang_yang_energy",
]

__version__ = "0.1.0"
