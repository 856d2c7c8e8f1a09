"""The filtered-wave fixed-point iteration and its Krylov-ready reformulation.

One application of the iteration operator Pi evolves the wave equation with
harmonic forcing over the filter window and takes the weighted time average.
Pi is affine, Pi(v) = S v + b, and the fixed point solves the discrete
Helmholtz equation at the modified frequency (or the true one under the
corrected drive).  ``as_affine_system`` exposes A = I - S and b so standard
Krylov methods apply; on energy-conserving leapfrog problems A is symmetric
positive definite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    HelmholtzProblem,
    ScalarField,
    WaveState,
    norm2,
)
from .filters import FilterSpec, TimeGrid
from .krylov import (
    IterationReport,
    KrylovConfig,
    LinearOperator,
    cg_solve,
    gmres_solve,
    measured_rate,
)
from .wavesolver import (
    ForcingSchedule,
    default_leapfrog_steps,
    default_rk4_steps,
    evolve_and_filter,
)


class SamplingConditionError(RuntimeError):
    """No well-conditioned extraction sampling times exist on the step grid."""


@dataclass
class WaveHoltzConfig:
    """Time grid, filter, scheme and stopping parameters for one solve."""

    tg: TimeGrid
    spec: FilterSpec
    scheme: str = "leapfrog"
    max_iters: int = 500
    tol: float = 1e-10
    correction: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.scheme not in ("leapfrog", "rk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @classmethod
    def build(cls, problem: HelmholtzProblem, *, periods: int = 1,
              steps: int | None = None, scheme: str | None = None,
              spec: FilterSpec | None = None, omegas=None,
              max_iters: int = 500, tol: float = 1e-10,
              correction: bool = False, dt_safety: float = 0.7,
              rk4_safety: float = 1.0) -> "WaveHoltzConfig":
        """Defaults: leapfrog when energy conserving (else rk4); dt from the
        scheme's stability rule with M rounded up so M*dt = T exactly.

        ``omegas`` (multi-frequency) makes the window span ``periods`` of the
        lowest frequency and sizes dt against the highest.
        """
        if scheme is None:
            scheme = "leapfrog" if problem.bcs.energy_conserving else "rk4"
        base = problem.omega if omegas is None else float(min(omegas))
        top = problem.omega if omegas is None else float(max(omegas))
        if steps is None:
            if scheme == "leapfrog":
                steps = default_leapfrog_steps(problem, base, periods,
                                               omega_max=top, safety=dt_safety)
            else:
                steps = default_rk4_steps(problem, base, periods, safety=rk4_safety)
        steps = int(math.ceil(steps / periods)) * periods  # whole steps per period
        tg = TimeGrid(base, periods, steps)
        if spec is None:
            spec = FilterSpec.standard(base, periods=periods)
        return cls(tg=tg, spec=spec, scheme=scheme, max_iters=max_iters,
                   tol=tol, correction=correction)


def _schedule_for(problem, config, schedule):
    if schedule is not None:
        if config.correction and not schedule.correction:
            schedule = replace(schedule, correction=True)
        return schedule
    return ForcingSchedule.single(problem, correction=config.correction)


def pi_apply(v, problem: HelmholtzProblem, config: WaveHoltzConfig,
             schedule: ForcingSchedule | None = None):
    """One application of the filtered-wave operator Pi."""
    schedule = _schedule_for(problem, config, schedule)
    out, _ = evolve_and_filter(v, schedule, problem, config.tg, config.spec,
                               config.scheme)
    return out


def _zero_iterate(problem, config):
    if config.scheme == "leapfrog":
        return ScalarField.zeros(problem.grid)
    return WaveState.zeros(problem.grid)


def _iterate_norm(u) -> float:
    if isinstance(u, WaveState):
        return math.hypot(norm2(u.w), norm2(u.v))
    return norm2(u)


def _iterate_diff(a, b):
    if isinstance(a, WaveState):
        return WaveState(
            ScalarField(a.w.grid, a.w.values - b.w.values),
            ScalarField(a.v.grid, a.v.values - b.v.values),
            0.0,
        )
    return ScalarField(a.grid, a.values - b.values)


def fixed_point_solve(problem: HelmholtzProblem, config: WaveHoltzConfig,
                      schedule: ForcingSchedule | None = None):
    """Plain iteration v <- Pi(v) from v = 0.

    The residual is ||v_k - v_{k-1}|| / ||v_1 - v_0||.  Stagnation (e.g. near
    resonance) shows up as converged=False after max_iters, never as an
    exception.  Returns (iterate, report); for rk4 the iterate is a WaveState
    whose displacement is the Helmholtz solution.
    """
    t0 = time.perf_counter()
    schedule = _schedule_for(problem, config, schedule)
    v = _zero_iterate(problem, config)
    history: list[float] = []
    denom = None
    converged = False
    iters = 0
    for k in range(config.max_iters):
        v_new, _ = evolve_and_filter(v, schedule, problem, config.tg,
                                     config.spec, config.scheme)
        inc = _iterate_norm(_iterate_diff(v_new, v))
        v = v_new
        iters = k + 1
        if denom is None:
            denom = inc if inc > 0 else 1.0
        history.append(inc / denom)
        if history[-1] <= config.tol:
            converged = True
            break
    report = IterationReport(history or [0.0], iters, converged,
                             measured_rate(history), time.perf_counter() - t0,
                             iters)
    return v, report


def _flatten(u) -> np.ndarray:
    if isinstance(u, WaveState):
        return np.concatenate([u.w.values.ravel(), u.v.values.ravel()])
    return u.values.ravel().copy()


def _unflatten(x: np.ndarray, problem, config):
    shape = problem.grid.shape
    if config.scheme == "rk4":
        half = x.size // 2
        return WaveState(
            ScalarField(problem.grid, x[:half].reshape(shape).copy()),
            ScalarField(problem.grid, x[half:].reshape(shape).copy()),
            0.0,
        )
    return ScalarField(problem.grid, x.reshape(shape).copy())


def as_affine_system(problem: HelmholtzProblem, config: WaveHoltzConfig,
                     schedule: ForcingSchedule | None = None):
    """Linear system (A, b) with A v = v - (Pi(v) - Pi(0)) and b = Pi(0).

    Solving A v = b is equivalent to the fixed point.  Each application of A
    costs one homogeneous (zero-forcing) wave solve; b costs one forced solve
    from zero data.  A is returned as a matrix-free LinearOperator on flat
    vectors (displacement, or the stacked pair for rk4).
    """
    schedule = _schedule_for(problem, config, schedule)
    b_it = pi_apply(_zero_iterate(problem, config), problem, config, schedule)
    b = _flatten(b_it)
    symmetric = config.scheme == "leapfrog" and problem.bcs.energy_conserving
    omegas = schedule.omegas

    def apply(x: np.ndarray) -> np.ndarray:
        u = _unflatten(x, problem, config)
        su, _ = evolve_and_filter(u, None, problem, config.tg, config.spec,
                                  config.scheme, filter_omegas=omegas)
        return x - _flatten(su)

    A = LinearOperator(dimension=b.size, apply=apply, symmetric_hint=symmetric)
    return A, b


def solve(problem: HelmholtzProblem, config: WaveHoltzConfig,
          method: str = "fixed_point", krylov: KrylovConfig | None = None,
          schedule: ForcingSchedule | None = None):
    """Drive one solve with the chosen outer method.

    method: "fixed_point", "gmres" or "cg".  Krylov methods run on the
    affine reformulation; their report counts operator applications, i.e.
    wave solves.  Returns (iterate, report).
    """
    if method == "fixed_point":
        return fixed_point_solve(problem, config, schedule)
    if method not in ("gmres", "cg"):
        raise ValueError(f"unknown method {method!r}")
    if krylov is None:
        krylov = KrylovConfig(method=method, tol=config.tol,
                              max_iters=config.max_iters)
    A, b = as_affine_system(problem, config, schedule)
    t0 = time.perf_counter()
    if method == "gmres":
        x, report = gmres_solve(A, b, krylov)
    else:
        x, report = cg_solve(A, b, krylov)
    report.wall_time = time.perf_counter() - t0
    report.operator_applications += 1  # the forced solve that built b
    return _unflatten(x, problem, config), report


def extraction_matrix(freqs, times) -> np.ndarray:
    """Matrix a_ij = cos(omega_j t_i) relating samples to per-frequency parts."""
    freqs = np.asarray(freqs, dtype=float)
    times = np.asarray(times, dtype=float)
    return np.cos(np.outer(times, freqs))


def choose_sampling_times(freqs, m_per_period: int, dt: float,
                          cond_limit: float = 1e8, seed: int = 0):
    """Pick N distinct step-aligned times in one base period for extraction.

    Candidates are structured patterns (equispaced interior points, half-period
    spreads) plus seeded random draws from the step grid; the set with the
    smallest condition number of cos(omega_j t_i) wins.  Deterministic for a
    fixed seed.
    """
    freqs = np.asarray(freqs, dtype=float)
    N = freqs.size
    if N == 1:
        return np.array([0.0])
    if m_per_period < N:
        raise SamplingConditionError("fewer time steps per period than frequencies")

    patterns = []
    for p in (N + 1, 2 * N - 1, 2 * N, 2 * N + 1):
        patterns.append([round(i * m_per_period / p) for i in range(1, N + 1)])
        patterns.append([round(i * m_per_period / p) for i in range(N)])
    patterns.append([round(i * m_per_period / (2 * (N - 1))) for i in range(N)])

    rng = np.random.default_rng(seed)
    for _ in range(200):
        patterns.append(sorted(rng.choice(m_per_period, size=N, replace=False)))

    best_idx, best_cond = None, np.inf
    for idx in patterns:
        idx = sorted(set(int(i) % m_per_period for i in idx))
        if len(idx) != N:
            continue
        times = np.array(idx, dtype=float) * dt
        c = np.linalg.cond(extraction_matrix(freqs, times))
        if c < best_cond:
            best_cond, best_idx = c, idx
    if best_idx is None or not best_cond < cond_limit:
        raise SamplingConditionError(
            f"no sampling pattern reached condition < {cond_limit:.1e} "
            f"(best {best_cond:.3e}); try a finer step grid or other times"
        )
    return np.array(best_idx, dtype=float) * dt


@dataclass
class MultiFrequencyResult:
    solutions: list[ScalarField]
    report: IterationReport
    sample_times: np.ndarray
    condition: float
    combined: ScalarField


def multifreq_solve(problem: HelmholtzProblem, schedule: ForcingSchedule,
                    config: WaveHoltzConfig, method: str = "cg",
                    krylov: KrylovConfig | None = None) -> MultiFrequencyResult:
    """Solve for several integer-related frequencies in one iteration.

    The combined field is converged with the summed drive and the combined
    filter weight, then evolved one more base period and sampled at N
    step-aligned times; inverting cos(omega_j t_i) separates the individual
    solutions.  Frequencies must be integer multiples of the lowest so the
    window is a common period.
    """
    omegas = schedule.omegas
    ratios = omegas / omegas[0]
    if not np.allclose(ratios, np.round(ratios), atol=1e-9):
        raise ValueError("frequencies must be integer multiples of the lowest")
    if config.scheme != "leapfrog":
        raise ValueError("multi-frequency extraction is implemented for leapfrog")

    v, report = solve(problem, config, method=method, krylov=krylov,
                      schedule=schedule)

    tg = config.tg
    if tg.steps % tg.periods != 0:
        raise ValueError("steps must divide into whole periods for extraction")
    m1 = tg.steps // tg.periods
    drive_freqs = schedule.drive_frequencies(tg.dt)
    times = choose_sampling_times(drive_freqs, m1, tg.dt)
    A = extraction_matrix(drive_freqs, times)
    cond = float(np.linalg.cond(A))

    steps = [int(round(t / tg.dt)) for t in times]
    one_period = TimeGrid(tg.omega, 1, m1)
    spec1 = replace(config.spec, periods=1)
    _, samples = evolve_and_filter(v, schedule, problem, one_period, spec1,
                                   config.scheme, sample_steps=steps)
    W = np.stack([samples[s].ravel() for s in steps])
    U = np.linalg.solve(A, W)
    shape = problem.grid.shape
    sols = [ScalarField(problem.grid, U[i].reshape(shape).copy())
            for i in range(len(omegas))]
    return MultiFrequencyResult(sols, report, times, cond, v)
