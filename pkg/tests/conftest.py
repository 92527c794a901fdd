import pytest

from hyk.potential import square_well
from hyk.scattering import solve_zero_energy


@pytest.fixture(scope="session")
def well_solution():
    """Solved square well V0=2, R=1 (closed-form a = 1 - tanh 1)."""
    return solve_zero_energy(square_well(2.0, 1.0))
