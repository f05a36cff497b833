"""
Runge-Kutta infrastructure:
- Butcher tableaux (classic RK4, Dormand-Prince 5(4), Radau IIA order 5)
- explicit fixed and adaptive steppers with embedded error control
- trajectory / statistics containers with CSV and JSON export
- interpolation of stored trajectories

The implicit Radau IIA solver lives in utils/radau.py and reuses the error
norm, the step-size controller and the initial step selection defined here.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, asdict
from typing import Callable, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import CubicHermiteSpline

from config.constants import (
    CSV_FLOAT_FORMAT, DT_MIN_FRACTION, GRID_ROUNDING, MAX_FACTOR, MIN_FACTOR,
    RK4_A, RK4_B, RK4_C, DOPRI5_A, DOPRI5_B, DOPRI5_B_STAR, DOPRI5_C,
    RADAU_A, RADAU_B, RADAU_C,
)
from utils.errors import (
    ContractViolation, InvalidStateError, NonFiniteStateError, RangeError,
    StepFailure, StiffnessSuspectedError, UndefinedMetricError,
)

Rhs = Callable[[float, np.ndarray], np.ndarray]
Monitor = Callable[[float, float, float, bool], None]


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """
    Coefficients (a, b, c) of an s-stage Runge-Kutta method.

    `order` is the q used by the step-size controller: the order of the
    method itself for fixed-step tableaux, the order of the embedded
    estimate for adaptive pairs.
    """
    name: str
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int
    b_star: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        c = np.asarray(self.c, dtype=float)
        s = b.shape[0]
        if a.shape != (s, s) or c.shape != (s,):
            raise ContractViolation(f"Tableau '{self.name}': a must be {s}x{s} and c of length {s}")
        if self.order < 1:
            raise ContractViolation(f"Tableau '{self.name}': order must be positive")
        if abs(b.sum() - 1.0) > 1e-12:
            raise ContractViolation(f"Tableau '{self.name}': weights b must sum to 1, got {b.sum()!r}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        if self.b_star is not None:
            b_star = np.asarray(self.b_star, dtype=float)
            if b_star.shape != (s,):
                raise ContractViolation(f"Tableau '{self.name}': b_star must have length {s}")
            object.__setattr__(self, "b_star", b_star)
        if self.explicit and not np.allclose(c, a.sum(axis=1), rtol=0.0, atol=1e-12):
            raise ContractViolation(f"Tableau '{self.name}': c_i must equal the row sums of a")

    @property
    def stage_count(self) -> int:
        return self.b.shape[0]

    @property
    def explicit(self) -> bool:
        return bool(np.all(np.triu(self.a) == 0.0))

    @property
    def fsal(self) -> bool:
        """Last stage is evaluated at the step end point and can seed the next step."""
        return self.explicit and self.c[-1] == 1.0 and np.array_equal(self.a[-1], self.b)


RK4 = ButcherTableau("rk4", RK4_A, RK4_B, RK4_C, order=4)
DOPRI5 = ButcherTableau("dopri5", DOPRI5_A, DOPRI5_B, DOPRI5_C, order=4, b_star=DOPRI5_B_STAR)
# Reference only; stepping happens in utils/radau.py on the transformed system
RADAU_IIA5 = ButcherTableau("radau_iia5", RADAU_A, RADAU_B, RADAU_C, order=5)

TABLEAUX_DICT = {
    "rk4": RK4,
    "dopri5": DOPRI5,
}


@dataclass(frozen=True)
class Tolerance:
    atol: float
    rtol: float

    def __post_init__(self):
        if not (self.atol > 0 and self.rtol > 0):
            raise ContractViolation(f"Tolerances must be positive, got atol={self.atol!r}, rtol={self.rtol!r}")

    @classmethod
    def parse(cls, value) -> "Tolerance":
        """Build from a number (atol = rtol), a mapping with atol/rtol or an existing Tolerance."""
        if isinstance(value, Tolerance):
            return value
        if isinstance(value, dict):
            return cls(atol=float(value["atol"]), rtol=float(value["rtol"]))
        return cls(atol=float(value), rtol=float(value))

    def to_dict(self) -> dict:
        return {"atol": self.atol, "rtol": self.rtol}


@dataclass
class SolveStats:
    n_fev: int = 0
    n_jev: int = 0
    n_lu: int = 0
    n_steps_accepted: int = 0
    n_steps_rejected: int = 0
    time_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


@dataclass(eq=False)
class Trajectory:
    """Accepted solver samples: times (M,), states (M, N), optional f-values (M, N)."""
    times: np.ndarray
    states: np.ndarray
    derivatives: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states.reshape(-1, 1)
        if self.times.size == 0:
            raise ContractViolation("Trajectory must hold at least one sample")
        if self.states.shape[0] != self.times.size:
            raise ContractViolation(
                f"Trajectory has {self.times.size} times but {self.states.shape[0]} states")
        if np.any(np.diff(self.times) <= 0):
            raise ContractViolation("Trajectory times must be strictly increasing")
        if self.derivatives is not None:
            self.derivatives = np.asarray(self.derivatives, dtype=float).reshape(self.states.shape)

    def __len__(self) -> int:
        return self.times.size

    @property
    def n_state(self) -> int:
        return self.states.shape[1]

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def to_frame(self) -> pd.DataFrame:
        data = {"t": self.times}
        for i in range(self.n_state):
            data[f"u_{i + 1}"] = self.states[:, i]
        return pd.DataFrame(data)

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


class CountingRhs:
    """Wraps a right-hand side (or Jacobian) and counts its calls."""

    def __init__(self, func: Callable):
        self.func = func
        self.count = 0

    def __call__(self, t, u):
        self.count += 1
        return np.asarray(self.func(t, u), dtype=float)


def _as_state(u0) -> np.ndarray:
    u = np.array(u0, dtype=float).reshape(-1)
    if u.size == 0:
        raise ContractViolation("State must not be empty")
    if not np.all(np.isfinite(u)):
        raise InvalidStateError("Initial state contains non-finite values")
    return u


def scaled_rms(x: np.ndarray, scale: np.ndarray) -> float:
    """sqrt(mean((x / scale)^2)) over every entry of x."""
    r = np.asarray(x) / scale
    return float(np.sqrt(np.mean(np.abs(r) ** 2)))


def rk_stages(tableau: ButcherTableau, f: Rhs, t0: float, u0: np.ndarray, dt: float,
              k_first: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Evaluate the s stage derivatives k_i of an explicit tableau.

    Args:
        k_first: f(t0, u0) when already known (FSAL reuse); saves one evaluation.

    Returns:
        np.ndarray: (s, N) matrix of stage derivatives.

    Raises:
        StepFailure: carrying the index of the first non-finite stage.
    """
    s = tableau.stage_count
    K = np.empty((s, u0.size))
    for i in range(s):
        if i == 0 and k_first is not None:
            K[0] = k_first
            continue
        ui = u0 + dt * (tableau.a[i, :i] @ K[:i])
        K[i] = f(t0 + tableau.c[i] * dt, ui)
        if not np.all(np.isfinite(K[i])):
            raise StepFailure(stage=i, t=t0)
    return K


def rk_step(tableau: ButcherTableau, f: Rhs, t0: float, u0, dt: float,
            k_first: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    One explicit Runge-Kutta step.

    Returns:
        (u1, u1_star): the propagated solution and, when the tableau carries
        embedded weights, the lower-order companion (None otherwise).
    """
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt!r}")
    if not tableau.explicit:
        raise ContractViolation(f"rk_step requires an explicit tableau, '{tableau.name}' is implicit")
    u0 = np.asarray(u0, dtype=float).reshape(-1)
    K = rk_stages(tableau, f, t0, u0, dt, k_first)
    u1 = u0 + dt * (tableau.b @ K)
    u1_star = u0 + dt * (tableau.b_star @ K) if tableau.b_star is not None else None
    return u1, u1_star


def error_norm(u0, u1, u1_star, tol: Tolerance) -> float:
    """RMS of (u1 - u1*) scaled by delta_i = atol + rtol * max(|u1_i|, |u0_i|)."""
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    u1_star = np.asarray(u1_star, dtype=float)
    if not (u0.shape == u1.shape == u1_star.shape):
        raise ContractViolation("error_norm arguments must share one shape")
    if not (np.all(np.isfinite(u0)) and np.all(np.isfinite(u1)) and np.all(np.isfinite(u1_star))):
        raise InvalidStateError("error_norm received non-finite values")
    delta = tol.atol + tol.rtol * np.maximum(np.abs(u1), np.abs(u0))
    return scaled_rms(u1 - u1_star, delta)


def next_step_size(dt: float, eps: float, q: int) -> float:
    """dt * min(MAX_FACTOR, max(MIN_FACTOR, (1/eps)^(1/(q+1)))); eps = 0 saturates at MAX_FACTOR."""
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt!r}")
    if eps == 0:
        return dt * MAX_FACTOR
    if not math.isfinite(eps):
        return dt * MIN_FACTOR
    return dt * min(MAX_FACTOR, max(MIN_FACTOR, (1 / eps) ** (1 / (q + 1))))


def initial_step(f: Rhs, t0: float, u0: np.ndarray, f0: np.ndarray, tol: Tolerance,
                 q: int, interval: float) -> float:
    """Two-evaluation starting step from the scaled norms of u0, f0 and a trial difference quotient."""
    if interval <= 0:
        raise ContractViolation("Integration interval must be positive")
    scale = tol.atol + np.abs(u0) * tol.rtol
    d0 = scaled_rms(u0, scale)
    d1 = scaled_rms(f0, scale)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, interval)
    f1 = f(t0 + h0, u0 + h0 * f0)
    d2 = scaled_rms(f1 - f0, scale) / h0
    if not math.isfinite(d2):
        return min(h0, interval)
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / (q + 1))
    return min(100 * h0, h1, interval)


def fixed_grid(t0: float, tf: float, dt: float) -> np.ndarray:
    """t0, t0+dt, ... with the final point moved (or appended) to land exactly on tf."""
    ratio = (tf - t0) / dt
    n_full = int(math.floor(ratio + GRID_ROUNDING))
    grid = t0 + dt * np.arange(n_full + 1, dtype=float)
    if ratio - n_full > GRID_ROUNDING:
        grid = np.append(grid, tf)
    else:
        grid[-1] = tf
    return grid


def solve_fixed(f: Rhs, u0, t0: float, tf: float, dt: float,
                tableau: ButcherTableau = RK4) -> Tuple[Trajectory, SolveStats]:
    """
    Fixed-step explicit integration over [t0, tf].

    Raises:
        NonFiniteStateError: with the last valid time and the partial trajectory.
    """
    if not tf > t0:
        raise ContractViolation(f"tf must exceed t0, got [{t0!r}, {tf!r}]")
    if not dt > 0:
        raise ContractViolation(f"dt must be positive, got {dt!r}")
    if not tableau.explicit:
        raise ContractViolation(f"solve_fixed requires an explicit tableau, '{tableau.name}' is implicit")

    rhs = CountingRhs(f)
    stats = SolveStats()
    u = _as_state(u0)
    grid = fixed_grid(t0, tf, dt)
    states = np.empty((grid.size, u.size))
    states[0] = u

    start = time.perf_counter()
    for k in range(1, grid.size):
        t, h = grid[k - 1], grid[k] - grid[k - 1]
        try:
            K = rk_stages(tableau, rhs, t, u, h)
            u = u + h * (tableau.b @ K)
            if not np.all(np.isfinite(u)):
                raise StepFailure(stage=tableau.stage_count, t=t)
        except StepFailure:
            stats.n_fev = rhs.count
            stats.time_s = time.perf_counter() - start
            raise NonFiniteStateError(t_last=float(t), partial=Trajectory(grid[:k], states[:k]), stats=stats)
        states[k] = u
        stats.n_steps_accepted += 1
    stats.time_s = time.perf_counter() - start
    stats.n_fev = rhs.count
    return Trajectory(grid, states), stats


def solve_adaptive(f: Rhs, u0, t0: float, tf: float, tol: Tolerance,
                   tableau: ButcherTableau = DOPRI5, first_step: Optional[float] = None,
                   dt_min: Optional[float] = None, max_steps: Optional[int] = None,
                   monitor: Optional[Monitor] = None) -> Tuple[Trajectory, SolveStats]:
    """
    Adaptive explicit integration with the embedded error estimate.

    Every accepted step satisfies error_norm <= 1; a rejected step is retried
    with the dt from next_step_size. Non-finite stages count as rejections.
    For FSAL tableaux the stored derivatives come for free and enable Hermite
    interpolation of the result.

    Args:
        monitor: called as monitor(t, dt, eps, accepted) after every attempt.
        dt_min: step-size floor, defaults to 1e-14 * (tf - t0).
        max_steps: accepted-step budget, unlimited when None.

    Raises:
        StiffnessSuspectedError: when dt underflows dt_min or the budget runs out.
    """
    if tableau.b_star is None:
        raise ContractViolation(f"Tableau '{tableau.name}' has no embedded weights")
    if not tableau.explicit:
        raise ContractViolation(f"solve_adaptive requires an explicit tableau, '{tableau.name}' is implicit")
    if not tf > t0:
        raise ContractViolation(f"tf must exceed t0, got [{t0!r}, {tf!r}]")

    rhs = CountingRhs(f)
    stats = SolveStats()
    span = tf - t0
    dt_min = DT_MIN_FRACTION * span if dt_min is None else dt_min
    q = tableau.order

    start = time.perf_counter()
    t = float(t0)
    u = _as_state(u0)
    f_cur = rhs(t, u)
    if not np.all(np.isfinite(f_cur)):
        raise InvalidStateError(f"Right-hand side is non-finite at the initial state (t={t!r})")
    dt = first_step if first_step is not None else initial_step(rhs, t, u, f_cur, tol, q, span)

    times, states = [t], [u]
    derivs = [f_cur] if tableau.fsal else None

    def partial():
        return Trajectory(np.array(times), np.array(states))

    while t < tf:
        if max_steps is not None and stats.n_steps_accepted >= max_steps:
            stats.n_fev, stats.time_s = rhs.count, time.perf_counter() - start
            raise StiffnessSuspectedError(t, dt, dt_min, partial=partial(), stats=stats)
        if dt < dt_min:
            stats.n_fev, stats.time_s = rhs.count, time.perf_counter() - start
            raise StiffnessSuspectedError(t, dt, dt_min, partial=partial(), stats=stats)

        if f_cur is None:
            f_cur = rhs(t, u)
        h = dt
        last = t + h >= tf or tf - (t + h) < dt_min
        if last:
            h = tf - t

        try:
            K = rk_stages(tableau, rhs, t, u, h, k_first=f_cur)
            u_new = u + h * (tableau.b @ K)
            u_star = u + h * (tableau.b_star @ K)
            eps = error_norm(u, u_new, u_star, tol)
        except (StepFailure, InvalidStateError):
            eps = math.inf
        accepted = eps <= 1.0
        if monitor is not None:
            monitor(t, h, eps, accepted)
        dt = next_step_size(h, eps, q)

        if not accepted:
            stats.n_steps_rejected += 1
            continue

        t = tf if last else t + h
        u = u_new
        f_cur = K[-1] if tableau.fsal else None
        stats.n_steps_accepted += 1
        times.append(t)
        states.append(u)
        if derivs is not None:
            derivs.append(f_cur)

    stats.time_s = time.perf_counter() - start
    stats.n_fev = rhs.count
    return Trajectory(np.array(times), np.array(states),
                      np.array(derivs) if derivs is not None else None), stats


def interpolate(traj: Trajectory, t_query) -> np.ndarray:
    """
    States at t_query: cubic Hermite when derivatives are stored, linear
    otherwise. Queries that hit a stored time return the stored state.

    Raises:
        RangeError: if a query lies outside [times[0], times[-1]].
    """
    tq = np.atleast_1d(np.asarray(t_query, dtype=float))
    times, states = traj.times, traj.states
    if np.any(tq < times[0]) or np.any(tq > times[-1]):
        raise RangeError(f"Query outside the trajectory span [{times[0]!r}, {times[-1]!r}]")
    if times.size == 1:
        return np.repeat(states[:1], tq.size, axis=0)

    if traj.derivatives is not None:
        out = CubicHermiteSpline(times, states, traj.derivatives, axis=0)(tq)
    else:
        out = np.column_stack([np.interp(tq, times, states[:, j]) for j in range(traj.n_state)])

    idx = np.minimum(np.searchsorted(times, tq), times.size - 1)
    hit = times[idx] == tq
    out[hit] = states[idx[hit]]
    return out


def stiffness_index(jac_matrix, T: float) -> float:
    """max|Re(lambda)| / min|Re(lambda)| * T over the Jacobian spectrum."""
    re = np.abs(np.linalg.eigvals(np.asarray(jac_matrix, dtype=float)).real)
    if re.size < 2 or np.any(re == 0.0):
        raise UndefinedMetricError("Stiffness index undefined: the Jacobian has zero real eigenvalue parts")
    return float(re.max() / re.min() * T)
