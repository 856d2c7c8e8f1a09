import numpy as np
import pytest

from waveholtz import (
    BoundarySpec,
    HelmholtzProblem,
    ScalarField,
    UniformGrid,
)


def gaussian_forcing_1d(grid, omega):
    x = grid.axis_coords(0)
    return ScalarField(grid, omega**2 * np.exp(-((omega * x) ** 2)))


def delta_forcing(grid):
    vals = np.zeros(grid.shape)
    idx = tuple(
        int(np.argmin(np.abs(grid.axis_coords(d) - 0.5 * (grid.lo[d] + grid.hi[d]))))
        for d in range(grid.dim)
    )
    vals[idx] = -1.0 / grid.cell_volume
    return ScalarField(grid, vals)


def problem_1d(omega=1.22, n=100, lo=0.0, hi=1.0, bc="dirichlet",
               forcing="gaussian", csq=1.0):
    grid = UniformGrid.line(lo, hi, n)
    if bc == "dirichlet":
        bcs = BoundarySpec.all_dirichlet(1)
    elif bc == "neumann":
        bcs = BoundarySpec.all_neumann(1)
    elif bc == "impedance":
        bcs = BoundarySpec.all_impedance(1)
    else:
        bcs = BoundarySpec(bc)
    if forcing == "gaussian":
        f = gaussian_forcing_1d(grid, omega)
    elif forcing == "delta":
        f = delta_forcing(grid)
    else:
        f = ScalarField.zeros(grid)
    if np.isscalar(csq):
        c = ScalarField.constant(grid, csq)
    else:
        c = ScalarField(grid, csq)
    return HelmholtzProblem(grid, c, f, omega, bcs)


def gaussian_forcing_2d(grid, omega):
    X, Y = grid.meshgrid()
    sigma = max(36.0, omega**2)
    return ScalarField(
        grid, -(omega**2) * np.exp(-sigma * ((X - 0.01) ** 2 + (Y - 0.015) ** 2))
    )


def problem_2d(omega=8.5, n=None, bc="dirichlet", lo=-1.0, hi=1.0):
    if n is None:
        n = 8 * int(np.ceil(omega))
    grid = UniformGrid.box(lo, hi, n)
    if bc == "dirichlet":
        bcs = BoundarySpec.all_dirichlet(2)
    elif bc == "impedance":
        bcs = BoundarySpec.all_impedance(2)
    else:
        bcs = BoundarySpec(bc)
    f = gaussian_forcing_2d(grid, omega)
    c = ScalarField.constant(grid, 1.0)
    return HelmholtzProblem(grid, c, f, omega, bcs)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_interior_field(grid, rng):
    vals = rng.standard_normal(grid.shape)
    for axis in range(grid.dim):
        sl = [slice(None)] * grid.dim
        sl[axis] = 0
        vals[tuple(sl)] = 0.0
        sl[axis] = -1
        vals[tuple(sl)] = 0.0
    return ScalarField(grid, vals)
