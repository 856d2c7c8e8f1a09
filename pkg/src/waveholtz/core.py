"""Grids, scalar fields, boundary specifications and the discrete wave operator.

Fields live on uniform Cartesian node grids (boundary nodes included) and the
spatial operator is the conservative second-order stencil

    (L w)_i = -sum_d D+_d( c2_{mid} D-_d w ) ,

so ``L`` approximates ``-div(c^2 grad)`` and is positive semidefinite.
Dirichlet boundary values are stored as hard zeros, never eliminated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
IMPEDANCE = "impedance"

_TAGS = (DIRICHLET, NEUMANN, IMPEDANCE)


class GridMismatchError(ValueError):
    """Raised when fields defined on different grids are combined."""


@dataclass(frozen=True)
class UniformGrid:
    """Uniform node grid on a box, ``dim`` in {1, 2}.

    Node coordinates along axis d are ``lo[d] + i * h[d]`` (a single
    multiply-add, never a running sum), with ``i = 0 .. n[d]``.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(a) for a in self.lo))
        object.__setattr__(self, "hi", tuple(float(b) for b in self.hi))
        object.__setattr__(self, "n", tuple(int(m) for m in self.n))
        if not (len(self.lo) == len(self.hi) == len(self.n)):
            raise ValueError("lo, hi and n must have the same length")
        if self.dim not in (1, 2):
            raise ValueError(f"only 1D and 2D grids are supported, got dim={self.dim}")
        for a, b, m in zip(self.lo, self.hi, self.n):
            if m < 2:
                raise ValueError("need at least 2 cells per dimension")
            if not b > a:
                raise ValueError("grid extents must satisfy hi > lo")

    @classmethod
    def line(cls, lo, hi, n):
        return cls((lo,), (hi,), (n,))

    @classmethod
    def box(cls, lo, hi, n):
        lo = tuple(lo) if np.iterable(lo) else (lo, lo)
        hi = tuple(hi) if np.iterable(hi) else (hi, hi)
        n = tuple(n) if np.iterable(n) else (n, n)
        return cls(lo, hi, n)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / m for a, b, m in zip(self.lo, self.hi, self.n))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(m + 1 for m in self.n)

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    def axis_coords(self, d: int) -> np.ndarray:
        return self.lo[d] + np.arange(self.n[d] + 1) * self.h[d]

    def meshgrid(self):
        axes = [self.axis_coords(d) for d in range(self.dim)]
        if self.dim == 1:
            return (axes[0],)
        return np.meshgrid(*axes, indexing="ij")


@dataclass
class ScalarField:
    """Nodal scalar data over every node of a grid (row-major)."""

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            if self.values.size == self.grid.num_nodes:
                self.values = self.values.reshape(self.grid.shape)
            else:
                raise GridMismatchError(
                    f"field of size {self.values.size} does not fit grid "
                    f"with {self.grid.num_nodes} nodes"
                )

    @classmethod
    def zeros(cls, grid: UniformGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: UniformGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: UniformGrid, fn) -> "ScalarField":
        return cls(grid, fn(*grid.meshgrid()))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


# Side ordering: (x_lo, x_hi) in 1D, (x_lo, x_hi, y_lo, y_hi) in 2D.
@dataclass(frozen=True)
class BoundarySpec:
    """One condition tag per side of the box.

    Impedance sides impose ``alpha * w_t + beta * (n . grad w) = 0`` with
    ``alpha^2 + beta^2 = 1``; the degenerate pairs (1, 0) and (0, 1) are the
    Dirichlet and Neumann tags and must be requested as such.
    """

    sides: tuple[str, ...]
    impedance_alpha: float = math.sqrt(0.5)

    def __post_init__(self):
        object.__setattr__(self, "sides", tuple(s.lower() for s in self.sides))
        if len(self.sides) not in (2, 4):
            raise ValueError("expected 2 (1D) or 4 (2D) side tags")
        for s in self.sides:
            if s not in _TAGS:
                raise ValueError(f"unknown boundary tag {s!r}")
        a = self.impedance_alpha
        if any(s == IMPEDANCE for s in self.sides) and not 0.0 < a < 1.0:
            raise ValueError("impedance_alpha must lie strictly inside (0, 1)")

    @classmethod
    def all_dirichlet(cls, dim: int) -> "BoundarySpec":
        return cls((DIRICHLET,) * (2 * dim))

    @classmethod
    def all_neumann(cls, dim: int) -> "BoundarySpec":
        return cls((NEUMANN,) * (2 * dim))

    @classmethod
    def all_impedance(cls, dim: int, alpha: float = math.sqrt(0.5)) -> "BoundarySpec":
        return cls((IMPEDANCE,) * (2 * dim), impedance_alpha=alpha)

    @property
    def dim(self) -> int:
        return len(self.sides) // 2

    @property
    def energy_conserving(self) -> bool:
        return all(s != IMPEDANCE for s in self.sides)

    @property
    def impedance_beta(self) -> float:
        return math.sqrt(1.0 - self.impedance_alpha**2)

    def side(self, axis: int, end: int) -> str:
        """Tag of the side at the low (end=0) or high (end=1) face of an axis."""
        return self.sides[2 * axis + end]


@dataclass(eq=False)
class HelmholtzProblem:
    """Time-harmonic problem ``div(c^2 grad u) + omega^2 u = f`` on a box.

    ``csq`` holds c^2 per node (strictly positive), ``forcing`` holds f.
    Forcing values on Dirichlet boundary nodes are zeroed at construction.
    """

    grid: UniformGrid
    csq: ScalarField
    forcing: ScalarField
    omega: float
    bcs: BoundarySpec

    def __post_init__(self):
        if self.csq.grid != self.grid or self.forcing.grid != self.grid:
            raise GridMismatchError("csq/forcing grids do not match the problem grid")
        if self.bcs.dim != self.grid.dim:
            raise ValueError("boundary spec dimension does not match grid")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if not np.all(self.csq.values > 0):
            raise ValueError("c^2 must be strictly positive everywhere")
        f = self.forcing.values.copy()
        f[self.dirichlet_mask] = 0.0
        self.forcing = ScalarField(self.grid, f)

    @cached_property
    def dirichlet_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid.shape, dtype=bool)
        for axis in range(self.grid.dim):
            for end in (0, 1):
                if self.bcs.side(axis, end) == DIRICHLET:
                    sl = [slice(None)] * self.grid.dim
                    sl[axis] = 0 if end == 0 else -1
                    mask[tuple(sl)] = True
        return mask

    @cached_property
    def impedance_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid.shape, dtype=bool)
        for axis in range(self.grid.dim):
            for end in (0, 1):
                if self.bcs.side(axis, end) == IMPEDANCE:
                    sl = [slice(None)] * self.grid.dim
                    sl[axis] = 0 if end == 0 else -1
                    mask[tuple(sl)] = True
        mask &= ~self.dirichlet_mask
        return mask

    @cached_property
    def _csq_mid(self) -> list[np.ndarray]:
        """Per axis, midpoint c^2 extended by one mirrored ghost value per end.

        Along axis d the array has n[d] + 2 entries in that direction:
        [m_1/2, m_1/2, m_3/2, ..., m_{n-1/2}, m_{n-1/2}].
        """
        out = []
        c = self.csq.values
        for axis in range(self.grid.dim):
            lo = [slice(None)] * self.grid.dim
            hi = [slice(None)] * self.grid.dim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            mid = 0.5 * (c[tuple(lo)] + c[tuple(hi)])
            first = [slice(None)] * self.grid.dim
            last = [slice(None)] * self.grid.dim
            first[axis] = slice(0, 1)
            last[axis] = slice(-1, None)
            out.append(
                np.concatenate(
                    [mid[tuple(first)], mid, mid[tuple(last)]], axis=axis
                )
            )
        return out

    @property
    def max_wave_speed(self) -> float:
        return float(np.sqrt(self.csq.values.max()))

    def lambda_max_estimate(self) -> float:
        """Analytic bound 2*sqrt(sum_d c2_max/h_d^2) on the largest sqrt-eigenvalue."""
        c2max = float(self.csq.values.max())
        return 2.0 * math.sqrt(sum(c2max / hd**2 for hd in self.grid.h))


def _ghost_slabs(problem: HelmholtzProblem, w: np.ndarray, v, axis: int):
    """Ghost node slabs (lo, hi) closing the stencil across one axis.

    Neumann mirrors the first interior neighbour.  Impedance substitutes the
    ghost from ``alpha*v + beta*(n . D0 w) = 0`` (outflow-dissipative form),
    which at either end reads ghost = inner_neighbour - 2h*(alpha/beta)*v.
    Dirichlet ghosts are irrelevant (rows are zeroed) and set to 0.
    """
    dim = problem.grid.dim
    h = problem.grid.h[axis]
    bcs = problem.bcs
    ratio = bcs.impedance_alpha / bcs.impedance_beta if not bcs.energy_conserving else 0.0

    def take(arr, idx):
        sl = [slice(None)] * dim
        sl[axis] = slice(idx, idx + 1 if idx != -1 else None)
        return arr[tuple(sl)]

    slabs = []
    for end, inner_idx, bdry_idx in ((0, 1, 0), (1, -2, -1)):
        tag = bcs.side(axis, end)
        if tag == NEUMANN:
            slabs.append(take(w, inner_idx))
        elif tag == IMPEDANCE:
            if v is None:
                slabs.append(np.zeros_like(take(w, inner_idx)))
            else:
                slabs.append(take(w, inner_idx) - 2.0 * h * ratio * take(v, bdry_idx))
        else:
            slabs.append(np.zeros_like(take(w, inner_idx)))
    return slabs


def _lap_values(problem: HelmholtzProblem, w: np.ndarray, v=None) -> np.ndarray:
    """Apply L (= -div(c^2 grad), stencil form) to raw node values.

    ``v`` supplies velocity data for impedance ghost closures; without it,
    impedance boundary rows are zeroed (they belong to the first-order
    solver).  Dirichlet rows are always zeroed.
    """
    grid = problem.grid
    out = np.zeros_like(w)
    for axis in range(grid.dim):
        h2 = grid.h[axis] ** 2
        ghost_lo, ghost_hi = _ghost_slabs(problem, w, v, axis)
        wext = np.concatenate([ghost_lo, w, ghost_hi], axis=axis)
        flux = problem._csq_mid[axis] * np.diff(wext, axis=axis)
        out -= np.diff(flux, axis=axis) / h2
    out[problem.dirichlet_mask] = 0.0
    if v is None and not problem.bcs.energy_conserving:
        out[problem.impedance_mask] = 0.0
    return out


def apply_discrete_laplacian(problem: HelmholtzProblem, w: ScalarField) -> ScalarField:
    """L w for the conservative second-order stencil with boundary closure.

    Dirichlet rows of the result are identically zero, Neumann rows use a
    mirrored ghost value, and impedance rows are zeroed here because their
    closure needs velocity data (see :func:`waveholtz.wavesolver.first_order_rhs`).
    """
    if w.grid != problem.grid:
        raise GridMismatchError("field grid does not match problem grid")
    return ScalarField(problem.grid, _lap_values(problem, w.values))


def inner_product(a: ScalarField, b: ScalarField) -> float:
    """Discrete L2 product sum(a_i b_i) * prod_d h_d over all nodes."""
    if a.grid != b.grid:
        raise GridMismatchError("inner product of fields on different grids")
    return float(np.vdot(a.values, b.values)) * a.grid.cell_volume


def norm2(a: ScalarField) -> float:
    return math.sqrt(inner_product(a, a))


@dataclass
class WaveState:
    """Displacement/velocity pair evolved by the first-order integrators."""

    w: ScalarField
    v: ScalarField
    t: float = 0.0

    def __post_init__(self):
        if self.w.grid != self.v.grid:
            raise GridMismatchError("w and v must live on the same grid")

    @classmethod
    def zeros(cls, grid: UniformGrid) -> "WaveState":
        return cls(ScalarField.zeros(grid), ScalarField.zeros(grid), 0.0)

    def copy(self) -> "WaveState":
        return WaveState(self.w.copy(), self.v.copy(), self.t)
