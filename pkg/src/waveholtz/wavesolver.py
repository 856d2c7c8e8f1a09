"""Time-domain integrators for the forced wave equation plus the online filter.

Two schemes:

* leapfrog on the second-order form, for energy-conserving (Dirichlet/Neumann)
  boundaries; the iterate is the displacement field with zero initial velocity,
* classic RK4 on the first-order system (w, v), required when impedance sides
  are present; the ghost closure ties the boundary velocity to the outward
  normal derivative so outflow dissipates.

The filtered time average is accumulated online (running weighted sum), so a
solve never stores the trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    GridMismatchError,
    HelmholtzProblem,
    ScalarField,
    WaveState,
    _lap_values,
)
from .filters import FilterSpec, TimeGrid, corrected_forcing_frequency, filter_weights


class InstabilityError(RuntimeError):
    """A time integration produced non-finite values."""


@dataclass
class ForcingSchedule:
    """Spatial forcings f_i driven at cos(omega_i t), summed.

    With ``correction`` enabled each drive runs at the dispersion-corrected
    frequency omega_bar_i (depends on dt), so the converged limit solves the
    unmodified discrete Helmholtz equation at omega_i.
    """

    forcings: list[ScalarField]
    omegas: np.ndarray
    correction: bool = False

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=float)
        if len(self.forcings) != len(self.omegas):
            raise ValueError("need one forcing field per frequency")
        if len(self.forcings) == 0:
            raise ValueError("empty forcing schedule")
        grid = self.forcings[0].grid
        for f in self.forcings:
            if f.grid != grid:
                raise GridMismatchError("all forcings must share one grid")
        if np.any(np.diff(self.omegas) <= 0):
            raise ValueError("frequencies must be strictly increasing")

    @classmethod
    def single(cls, problem: HelmholtzProblem, correction: bool = False):
        return cls([problem.forcing], np.array([problem.omega]), correction)

    @property
    def stacked(self) -> np.ndarray:
        return np.stack([f.values for f in self.forcings])

    def drive_frequencies(self, dt: float) -> np.ndarray:
        if not self.correction:
            return self.omegas
        return np.array([corrected_forcing_frequency(w, dt) for w in self.omegas])


class _Drive:
    """Precomputed drive evaluator: t -> sum_i f_i cos(omega_hat_i t)."""

    def __init__(self, schedule: ForcingSchedule | None, dt: float | None):
        if schedule is None:
            self.fstack = None
            return
        if schedule.correction and dt is None:
            raise ValueError("frequency correction needs the time step dt")
        self.fstack = schedule.stacked
        self.freqs = schedule.drive_frequencies(dt) if dt is not None else schedule.omegas
        if not np.any(self.fstack):
            self.fstack = None

    def __call__(self, t: float):
        if self.fstack is None:
            return None
        return np.tensordot(np.cos(self.freqs * t), self.fstack, axes=(0, 0))


def leapfrog_initialize(v: ScalarField, schedule: ForcingSchedule | None,
                        problem: HelmholtzProblem, dt: float):
    """Start-up pair (w^0, w^-1) = (v, v - dt^2/2 (L v + f(0))).

    Encodes zero initial discrete velocity.  Only valid for energy-conserving
    boundaries (the second-order form has no impedance closure).
    """
    if not problem.bcs.energy_conserving:
        raise ValueError("leapfrog requires energy-conserving boundary conditions")
    if v.grid != problem.grid:
        raise GridMismatchError("initial field grid does not match problem")
    drive = _Drive(schedule, dt)
    w0 = v.values.copy()
    w0[problem.dirichlet_mask] = 0.0
    rhs = _lap_values(problem, w0)
    d0 = drive(0.0)
    if d0 is not None:
        rhs = rhs + d0
        rhs[problem.dirichlet_mask] = 0.0
    wm1 = w0 - 0.5 * dt * dt * rhs
    return ScalarField(problem.grid, w0), ScalarField(problem.grid, wm1)


def leapfrog_step(w_n: ScalarField, w_nm1: ScalarField, t_n: float,
                  schedule: ForcingSchedule | None, problem: HelmholtzProblem,
                  dt: float) -> ScalarField:
    """One update w^{n+1} = 2 w^n - w^{n-1} - dt^2 (L w^n + f cos(omega t_n))."""
    drive = _Drive(schedule, dt)
    out = _leapfrog_step_values(w_n.values, w_nm1.values, t_n, drive, problem, dt, 0)
    return ScalarField(problem.grid, out)


def _leapfrog_step_values(wn, wnm1, t_n, drive, problem, dt, step_index):
    rhs = _lap_values(problem, wn)
    d = drive(t_n)
    if d is not None:
        rhs = rhs + d
        rhs[problem.dirichlet_mask] = 0.0
    out = 2.0 * wn - wnm1 - dt * dt * rhs
    if not np.isfinite(out).all():
        raise InstabilityError(f"leapfrog produced non-finite values at step {step_index}")
    return out


def first_order_rhs(state: WaveState, t: float, schedule: ForcingSchedule | None,
                    problem: HelmholtzProblem, dt: float | None = None):
    """(dw/dt, dv/dt) = (v, -L w - f(t)) with impedance ghosts closed from v.

    On impedance sides the ghost value enforces alpha*v + beta*(n . D0 w) = 0
    at the boundary node before the stencil is applied; Dirichlet rows stay
    zero.  ``dt`` is only needed when the schedule corrects drive frequencies.
    """
    drive = _Drive(schedule, dt)
    dw, dv = _first_order_rhs_values(state.w.values, state.v.values, t, drive, problem)
    return ScalarField(problem.grid, dw), ScalarField(problem.grid, dv)


def _first_order_rhs_values(w, v, t, drive, problem):
    dv = -_lap_values(problem, w, v)
    d = drive(t)
    if d is not None:
        dv -= d
    dw = v.copy()
    mask = problem.dirichlet_mask
    dw[mask] = 0.0
    dv[mask] = 0.0
    return dw, dv


def rk4_step(state: WaveState, t: float, dt: float,
             schedule: ForcingSchedule | None, problem: HelmholtzProblem) -> WaveState:
    """Classic four-stage Runge-Kutta update of (w, v)."""
    drive = _Drive(schedule, dt)
    w, v = _rk4_step_values(state.w.values, state.v.values, t, dt, drive, problem, 0)
    return WaveState(ScalarField(problem.grid, w), ScalarField(problem.grid, v),
                     state.t + dt)


def _rk4_step_values(w, v, t, dt, drive, problem, step_index):
    f = lambda wv, vv, tt: _first_order_rhs_values(wv, vv, tt, drive, problem)
    k1w, k1v = f(w, v, t)
    k2w, k2v = f(w + 0.5 * dt * k1w, v + 0.5 * dt * k1v, t + 0.5 * dt)
    k3w, k3v = f(w + 0.5 * dt * k2w, v + 0.5 * dt * k2v, t + 0.5 * dt)
    k4w, k4v = f(w + dt * k3w, v + dt * k3v, t + dt)
    wn = w + (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    vn = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    if not (np.isfinite(wn).all() and np.isfinite(vn).all()):
        raise InstabilityError(f"rk4 produced non-finite values at step {step_index}")
    return wn, vn


def evolve_and_filter(v_in, schedule: ForcingSchedule | None,
                      problem: HelmholtzProblem, tg: TimeGrid, spec: FilterSpec,
                      scheme: str, sample_steps=None, filter_omegas=None):
    """Integrate 0 -> T and return the filtered time average (and samples).

    The average (2 dt / T) sum_n eta_n weight(t_n) w^n is accumulated online.
    For rk4 the same scalar weight multiplies both components of (w, v) and a
    filtered WaveState is returned.  ``sample_steps`` requests copies of the
    displacement at those step indices (for multi-frequency extraction).

    ``filter_omegas`` pins the multi-frequency filter weight independently of
    the drive, so the homogeneous (zero-forcing) runs behind the affine
    reformulation average with the same weight as the forced ones.

    Returns (filtered, samples) where samples maps step index -> ndarray.
    """
    if filter_omegas is None:
        filter_omegas = schedule.omegas if schedule is not None else None
    weights = tg.eta() * filter_weights(spec, tg, filter_omegas)
    scale = 2.0 * tg.dt / tg.T
    wanted = sorted(set(int(s) for s in sample_steps)) if sample_steps else []
    if wanted and (wanted[0] < 0 or wanted[-1] > tg.steps):
        raise ValueError("sample steps outside the time grid")
    samples = {}
    if scheme == "leapfrog":
        if isinstance(v_in, WaveState):
            raise ValueError("leapfrog iterates on a displacement field, not a state")
        return _evolve_leapfrog(v_in, schedule, problem, tg, weights, scale,
                                wanted, samples)
    if scheme == "rk4":
        if isinstance(v_in, ScalarField):
            v_in = WaveState(v_in, ScalarField.zeros(problem.grid), 0.0)
        return _evolve_rk4(v_in, schedule, problem, tg, weights, scale,
                           wanted, samples)
    raise ValueError(f"unknown scheme {scheme!r}")


def _evolve_leapfrog(v_in, schedule, problem, tg, weights, scale, wanted, samples):
    dt = tg.dt
    drive = _Drive(schedule, dt)
    w0f, wm1f = leapfrog_initialize(v_in, schedule, problem, dt)
    wn, wnm1 = w0f.values, wm1f.values
    acc = weights[0] * wn
    if wanted and wanted[0] == 0:
        samples[0] = wn.copy()
    for n in range(tg.steps):
        wnp1 = _leapfrog_step_values(wn, wnm1, n * dt, drive, problem, dt, n)
        wnm1, wn = wn, wnp1
        acc += weights[n + 1] * wn
        if wanted and (n + 1) in wanted:
            samples[n + 1] = wn.copy()
    return ScalarField(problem.grid, scale * acc), samples


def _evolve_rk4(state, schedule, problem, tg, weights, scale, wanted, samples):
    dt = tg.dt
    drive = _Drive(schedule, dt)
    w = state.w.values.copy()
    v = state.v.values.copy()
    mask = problem.dirichlet_mask
    w[mask] = 0.0
    v[mask] = 0.0
    acc_w = weights[0] * w
    acc_v = weights[0] * v
    if wanted and wanted[0] == 0:
        samples[0] = w.copy()
    for n in range(tg.steps):
        w, v = _rk4_step_values(w, v, n * dt, dt, drive, problem, n)
        acc_w += weights[n + 1] * w
        acc_v += weights[n + 1] * v
        if wanted and (n + 1) in wanted:
            samples[n + 1] = w.copy()
    filtered = WaveState(
        ScalarField(problem.grid, scale * acc_w),
        ScalarField(problem.grid, scale * acc_v),
        0.0,
    )
    return filtered, samples


def default_leapfrog_steps(problem: HelmholtzProblem, tg_omega: float,
                           periods: int, omega_max: float | None = None,
                           safety: float = 0.7) -> int:
    """Step count M so that dt = T/M meets the leapfrog stability bounds.

    Targets dt = safety * 2 / lambda_max_estimate, tightened by the hard
    stability bound dt < 2/(lambda_max + 2 omega/pi) and the time-resolution
    cap dt*omega <= 1, then rounds M up so M*dt = T exactly.
    """
    lam = problem.lambda_max_estimate()
    w = problem.omega if omega_max is None else omega_max
    dt_target = min(
        safety * 2.0 / lam,
        0.95 * 2.0 / (lam + 2.0 * w / math.pi),
        1.0 / w,
    )
    T = periods * 2.0 * math.pi / tg_omega
    return max(2, math.ceil(T / dt_target))


def default_rk4_steps(problem: HelmholtzProblem, tg_omega: float, periods: int,
                      safety: float = 1.0) -> int:
    """Step count for RK4 from dt = safety * h_min / c_max, rounded up."""
    dt_target = safety * min(problem.grid.h) / problem.max_wave_speed
    T = periods * 2.0 * math.pi / tg_omega
    return max(2, math.ceil(T / dt_target))
