"""Independent reference machinery used to verify the iterative solvers.

Everything here takes the slow-but-transparent route: closed-form sine
spectra for constant-coefficient Dirichlet boxes, dense/sparse factorised
Helmholtz solves, an eigenspace implementation of the filtered-wave operator,
and the trapezoid-rule reference with its exact closed form

    T_h(alpha) = g(h alpha) * sin(alpha)/alpha,   g(x) = x / (2 tan(x/2)).

Sine transforms are direct O(N^2) sums; these are test-scale tools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import (
    DIRICHLET,
    HelmholtzProblem,
    ScalarField,
    _lap_values,
    apply_discrete_laplacian,
    norm2,
)
from .filters import (
    beta_by_quadrature,
    corrected_forcing_frequency,
    shifted_eigenvalue,
)
from .iteration import WaveHoltzConfig

_ASSEMBLY_CAP = 20_000  # free nodes; column probing beyond this is impractical


class ResonanceError(RuntimeError):
    """The shifted frequency coincides with an operator eigenvalue."""


class UnsupportedProblemError(ValueError):
    """The oracle has no closed form for this configuration."""


def _require_constant_dirichlet(problem: HelmholtzProblem):
    if any(s != DIRICHLET for s in problem.bcs.sides):
        raise UnsupportedProblemError("closed-form spectrum needs all-Dirichlet sides")
    c = problem.csq.values
    if float(np.ptp(c)) > 1e-13 * float(np.max(c)):
        raise UnsupportedProblemError("closed-form spectrum needs constant c^2")
    return math.sqrt(float(c.flat[0]))


@dataclass
class SpectralDecomposition:
    """Eigenpairs of the Dirichlet box stencil, sorted by eigenvalue.

    lambdas[k] is the square root of the k-th eigenvalue; mode(k) evaluates
    the matching sine (product) eigenvector on the grid.  delta_h is the
    relative spectral gap min_j |lambda_j - omega| / omega.
    """

    problem: HelmholtzProblem
    c: float
    lambdas: np.ndarray
    indices: list[tuple[int, ...]]
    delta_h: float

    def mode(self, k: int) -> ScalarField:
        grid = self.problem.grid
        axes = []
        for d, j in enumerate(self.indices[k]):
            x = grid.axis_coords(d)
            L = grid.hi[d] - grid.lo[d]
            axes.append(np.sin(j * math.pi * (x - grid.lo[d]) / L))
        vals = axes[0] if grid.dim == 1 else np.outer(axes[0], axes[1])
        return ScalarField(grid, vals)

    def shifted_lambdas(self, dt: float) -> np.ndarray:
        """Leapfrog-shifted values lambda_tilde = (2/dt) asin(dt lambda / 2)."""
        return shifted_eigenvalue(self.lambdas, dt)


def _axis_sqrt_eigenvalues(problem: HelmholtzProblem, c: float, axis: int):
    n = problem.grid.n[axis]
    h = problem.grid.h[axis]
    j = np.arange(1, n)
    return c * (2.0 / h) * np.sin(j * math.pi / (2.0 * n))


def dirichlet_box_spectrum(problem: HelmholtzProblem) -> SpectralDecomposition:
    """Closed-form spectrum of the constant-coefficient all-Dirichlet stencil.

    1D: lambda_j^2 = c^2 (4/h^2) sin^2(j pi / (2 n)) with sine modes;
    2D: tensor sums over both axes.
    """
    c = _require_constant_dirichlet(problem)
    if problem.grid.dim == 1:
        lam = _axis_sqrt_eigenvalues(problem, c, 0)
        idx = [(j,) for j in range(1, problem.grid.n[0])]
    else:
        lx = _axis_sqrt_eigenvalues(problem, c, 0)
        ly = _axis_sqrt_eigenvalues(problem, c, 1)
        lam2 = lx[:, None] ** 2 + ly[None, :] ** 2
        lam = np.sqrt(lam2).ravel()
        idx = [(j, k)
               for j in range(1, problem.grid.n[0])
               for k in range(1, problem.grid.n[1])]
    order = np.argsort(lam)
    lam_sorted = lam[order]
    idx_sorted = [idx[i] for i in order]
    delta_h = float(np.min(np.abs(lam_sorted - problem.omega)) / problem.omega)
    return SpectralDecomposition(problem, c, lam_sorted, idx_sorted, delta_h)


@lru_cache(maxsize=16)
def _sine_matrix(n: int) -> np.ndarray:
    i = np.arange(1, n)
    return np.sin(np.outer(i, i) * (math.pi / n))


def sine_transform(field: ScalarField) -> np.ndarray:
    """Interior sine coefficients; exact inverse of inverse_sine_transform."""
    grid = field.grid
    if grid.dim == 1:
        n = grid.n[0]
        return (2.0 / n) * (_sine_matrix(n) @ field.values[1:-1])
    nx, ny = grid.n
    inner = field.values[1:-1, 1:-1]
    return (2.0 / nx) * (2.0 / ny) * (_sine_matrix(nx) @ inner @ _sine_matrix(ny))


def inverse_sine_transform(coeffs: np.ndarray, grid) -> ScalarField:
    vals = np.zeros(grid.shape)
    if grid.dim == 1:
        vals[1:-1] = _sine_matrix(grid.n[0]) @ coeffs
    else:
        vals[1:-1, 1:-1] = _sine_matrix(grid.n[0]) @ coeffs @ _sine_matrix(grid.n[1])
    return ScalarField(grid, vals)


def assemble_operator(problem: HelmholtzProblem):
    """Assemble L on the non-Dirichlet nodes by probing unit vectors.

    Returns (matrix, free_flat_indices); dense below 4096 unknowns, CSC above.
    Reusing the stencil application keeps this a single-source-of-truth
    assembly (probing is O(N^2) work, fine at verification scales).
    """
    if not problem.bcs.energy_conserving:
        raise UnsupportedProblemError("assembly covers energy-conserving problems")
    mask = problem.dirichlet_mask
    free = np.flatnonzero(~mask.ravel())
    nfree = free.size
    if nfree > _ASSEMBLY_CAP:
        raise UnsupportedProblemError(
            f"{nfree} unknowns exceeds the probing-assembly cap {_ASSEMBLY_CAP}"
        )
    shape = problem.grid.shape
    dense = nfree <= 4096
    if dense:
        M = np.zeros((nfree, nfree))
    else:
        from scipy.sparse import lil_matrix

        M = lil_matrix((nfree, nfree))
    e = np.zeros(shape)
    flat = e.ravel()
    for k, idx in enumerate(free):
        flat[idx] = 1.0
        col = _lap_values(problem, e).ravel()[free]
        if dense:
            M[:, k] = col
        else:
            nz = np.nonzero(col)[0]
            for r in nz:
                M[r, k] = col[r]
        flat[idx] = 0.0
    if not dense:
        M = M.tocsc()
    return M, free


def direct_helmholtz_solve(problem: HelmholtzProblem, sigma: float) -> ScalarField:
    """Factorised solve of -L v + sigma^2 v = f on the free nodes.

    ``sigma`` is the frequency whose square shifts the operator: pass
    problem.omega for the true discrete equation or the modified frequency to
    reproduce an uncorrected iteration limit.  Exact resonance (sigma^2 equal
    to an eigenvalue to 1e-12 relative, checkable on constant-c Dirichlet
    boxes) raises ResonanceError.
    """
    try:
        spec = dirichlet_box_spectrum(problem)
    except UnsupportedProblemError:
        spec = None
    if spec is not None:
        gap = np.min(np.abs(sigma**2 - spec.lambdas**2))
        if gap <= 1e-12 * sigma**2:
            raise ResonanceError(
                f"sigma^2 = {sigma**2:.12g} coincides with an eigenvalue"
            )
    L, free = assemble_operator(problem)
    f = problem.forcing.values.ravel()[free]
    if hasattr(L, "toarray") and not isinstance(L, np.ndarray):
        from scipy.sparse import identity
        from scipy.sparse.linalg import splu

        A = (sigma**2) * identity(free.size, format="csc") - L
        sol = splu(A.tocsc()).solve(f)
    else:
        A = sigma**2 * np.eye(free.size) - L
        sol = np.linalg.solve(A, f)
    out = np.zeros(problem.grid.num_nodes)
    out[free] = sol
    return ScalarField(problem.grid, out.reshape(problem.grid.shape))


def helmholtz_residual(problem: HelmholtzProblem, v: ScalarField,
                       sigma: float) -> float:
    """Relative residual ||-L v + sigma^2 v - f|| / ||f||."""
    Lv = apply_discrete_laplacian(problem, v)
    r = ScalarField(problem.grid,
                    -Lv.values + sigma**2 * v.values - problem.forcing.values)
    return norm2(r) / norm2(problem.forcing)


def _mode_lambda_grid(problem: HelmholtzProblem, c: float):
    if problem.grid.dim == 1:
        return _axis_sqrt_eigenvalues(problem, c, 0)
    lx = _axis_sqrt_eigenvalues(problem, c, 0)
    ly = _axis_sqrt_eigenvalues(problem, c, 1)
    return np.sqrt(lx[:, None] ** 2 + ly[None, :] ** 2)


def pi_apply_spectral(v: ScalarField, problem: HelmholtzProblem,
                      config: WaveHoltzConfig) -> ScalarField:
    """Eigenspace implementation of the filtered-wave operator (leapfrog).

    Expands v and f in sine modes and applies the exact per-mode affine map

        out_j = (v_j - vinf_j) beta_h(lambda_tilde_j) + vinf_j beta_h(omega_d)

    where vinf_j = f_j / (sigma^2 - lambda_j^2), omega_d is the drive
    frequency (omega, or omega_bar under correction) and sigma is its
    leapfrog image.  Must agree with the time-stepping operator to roundoff.
    """
    if config.scheme != "leapfrog":
        raise UnsupportedProblemError("spectral reference covers leapfrog only")
    c = _require_constant_dirichlet(problem)
    tg = config.tg
    lam = _mode_lambda_grid(problem, c)
    lam_t = shifted_eigenvalue(lam, tg.dt)

    omega_d = problem.omega
    if config.correction:
        omega_d = corrected_forcing_frequency(problem.omega, tg.dt)
    sigma = 2.0 * math.sin(0.5 * tg.dt * omega_d) / tg.dt

    vhat = sine_transform(v)
    fhat = sine_transform(problem.forcing)
    vinf = fhat / (sigma**2 - lam**2)

    beta_modes = beta_by_quadrature(lam_t.ravel(), config.spec, tg).reshape(lam.shape)
    beta_drive = beta_by_quadrature(omega_d, config.spec, tg)
    out_hat = (vhat - vinf) * beta_modes + vinf * beta_drive
    return inverse_sine_transform(out_hat, problem.grid)


def g_factor(x):
    """g(x) = x / (2 tan(x/2)) with g(0) = 1; 0 <= g <= 1 - x^2/12 on |x| <= pi."""
    x_arr = np.asarray(x, dtype=float)
    out = np.ones_like(x_arr)
    nz = x_arr != 0.0
    out[nz] = x_arr[nz] / (2.0 * np.tan(0.5 * x_arr[nz]))
    return float(out) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class TrapezoidReference:
    """Direct trapezoid sum of cos(alpha t) on [0, 1] against its closed form."""

    alpha: float
    steps: int
    direct: float
    closed: float
    exact: float  # sin(alpha)/alpha, the integral being approximated
    error_bound: float  # h^2 |alpha| / 12, valid for |h alpha| <= pi


def trapezoid_reference(alpha: float, M: int) -> TrapezoidReference:
    if M < 1:
        raise ValueError("need at least one step")
    h = 1.0 / M
    if abs(h * alpha) > math.pi:
        raise ValueError(f"|alpha/M| = {abs(h * alpha):.6g} must be <= pi")
    t = np.arange(M + 1) * h
    eta = np.ones(M + 1)
    eta[0] = eta[-1] = 0.5
    direct = float(h * (eta @ np.cos(alpha * t)))
    exact = math.sin(alpha) / alpha if alpha != 0.0 else 1.0
    closed = g_factor(h * alpha) * exact
    bound = h * h * abs(alpha) / 12.0
    return TrapezoidReference(alpha, M, direct, closed, exact, bound)
