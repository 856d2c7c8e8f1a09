"""Matrix-free Krylov solvers: restarted GMRES and conjugate gradients.

Operators are abstract callables; cost is tracked as the number of operator
applications, which for the filtered-wave system is the number of wave solves.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np


class IndefiniteOperatorError(RuntimeError):
    """CG met a search direction with nonpositive curvature."""


@dataclass
class LinearOperator:
    """Deterministic linear map on R^dimension, given as a callable."""

    dimension: int
    apply: Callable[[np.ndarray], np.ndarray]
    symmetric_hint: bool = False


@dataclass
class KrylovConfig:
    method: str = "gmres"
    restart: int = 100
    tol: float = 1e-7
    max_iters: int = 1000

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class IterationReport:
    """Convergence record shared by the fixed-point and Krylov drivers."""

    residual_history: list[float]
    iters: int
    converged: bool
    measured_rate: float
    wall_time: float
    operator_applications: int = 0

    def __post_init__(self):
        if not self.residual_history:
            raise ValueError("residual history must be non-empty")


def measured_rate(history) -> float:
    """Geometric mean of the residual ratios over the last quartile."""
    h = np.asarray(history, dtype=float)
    if h.size < 2:
        return 1.0
    ratios = h[1:] / np.maximum(h[:-1], 1e-300)
    tail = ratios[-max(1, ratios.size // 4):]
    tail = np.maximum(tail, 1e-300)
    return float(np.exp(np.mean(np.log(tail))))


def gmres_solve(A: LinearOperator, b: np.ndarray, config: KrylovConfig):
    """Restarted GMRES with modified Gram-Schmidt and selective reorthogonalization.

    Stops on relative residual ||b - Ax||/||b|| <= tol, on max_iters, or when
    a full restart cycle makes no progress (reported as converged=False).
    Happy breakdown of the Arnoldi recurrence counts as convergence.
    """
    t0 = time.perf_counter()
    n = A.dimension
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), IterationReport([0.0], 0, True, 1.0,
                                            time.perf_counter() - t0, 0)
    x = np.zeros(n)
    history: list[float] = []
    apps = 0
    iters = 0
    converged = False
    m = config.restart

    # Each pass recomputes a true residual (one operator application), so a
    # convergence claim is always certified outside the Givens estimates.
    while iters < config.max_iters:
        r = b - A.apply(x)
        apps += 1
        beta = float(np.linalg.norm(r))
        cycle_start = beta / bnorm
        history.append(cycle_start)
        if cycle_start <= config.tol:
            converged = True
            break

        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        width = 0

        for j in range(m):
            if iters >= config.max_iters:
                break
            w = A.apply(V[j])
            apps += 1
            iters += 1
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w -= H[i, j] * V[i]
            wnorm = float(np.linalg.norm(w))
            # One extra pass if orthogonality against the basis decayed.
            s = V[: j + 1] @ w
            if float(np.linalg.norm(s)) > 1e-8 * max(wnorm, 1e-300):
                w -= s @ V[: j + 1]
                H[: j + 1, j] += s
                wnorm = float(np.linalg.norm(w))
            H[j + 1, j] = wnorm

            for i in range(j):
                hij = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = hij
            denom = math.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                break  # rotated column vanished; this direction adds nothing
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            width = j + 1
            history.append(abs(g[j + 1]) / bnorm)

            if wnorm <= 1e-14 * denom:
                break  # happy breakdown; solution lies in the current space
            V[j + 1] = w / wnorm
            if history[-1] <= config.tol:
                break

        if width > 0:
            y = np.zeros(width)
            for i in range(width - 1, -1, -1):
                y[i] = (g[i] - H[i, i + 1 : width] @ y[i + 1 : width]) / H[i, i]
            x += y @ V[:width]
        else:
            break

        if history[-1] >= cycle_start * (1.0 - 1e-12):
            break  # stagnated across a full restart cycle

    report = IterationReport(history, iters, converged, measured_rate(history),
                             time.perf_counter() - t0, apps)
    return x, report


def cg_solve(A: LinearOperator, b: np.ndarray, config: KrylovConfig):
    """Conjugate gradients; expects (numerically) symmetric positive definite A.

    Raises IndefiniteOperatorError when a search direction shows nonpositive
    curvature, which signals misuse on a non-SPD operator.
    """
    t0 = time.perf_counter()
    n = A.dimension
    b = np.asarray(b, dtype=float)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), IterationReport([0.0], 0, True, 1.0,
                                            time.perf_counter() - t0, 0)
    x = np.zeros(n)
    r = b - A.apply(x)
    apps = 1
    rs = float(r @ r)
    history = [math.sqrt(rs) / bnorm]
    p = r.copy()
    iters = 0
    converged = history[-1] <= config.tol
    while not converged and iters < config.max_iters:
        Ap = A.apply(p)
        apps += 1
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise IndefiniteOperatorError(
                f"<Ap, p> = {pAp:.3e} <= 0 at iteration {iters}; operator is not SPD"
            )
        alpha = rs / pAp
        x += alpha * p
        r -= alpha * Ap
        rs_new = float(r @ r)
        iters += 1
        history.append(math.sqrt(rs_new) / bnorm)
        if history[-1] <= config.tol:
            converged = True
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    report = IterationReport(history, iters, converged, measured_rate(history),
                             time.perf_counter() - t0, apps)
    return x, report
