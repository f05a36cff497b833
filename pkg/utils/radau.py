"""
Implicit Radau IIA (3 stages, order 5) for stiff systems.

The stage equations are solved by simplified Newton iteration on the
eigen-decomposed system: one real and one complex LU factorization per
refresh of the iteration matrix. Step control uses the embedded order-3
estimate and the same controller as the explicit solvers (utils/ode_core.py).
"""

from __future__ import annotations

import math
import time
import warnings
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, lu_factor, lu_solve

from config.constants import (
    JAC_RATE, NEWTON_MAXITER, NEWTON_RETRIES, NEWTON_TOL_FACTOR, STEP_HOLD,
    RADAU_C, RADAU_E, RADAU_ERROR_ORDER, RADAU_MU_COMPLEX, RADAU_MU_REAL,
    RADAU_P, RADAU_T, RADAU_TI, RADAU_TI_COMPLEX, RADAU_TI_REAL,
)
from utils.errors import (
    ContractViolation, ConvergenceFailure, InvalidStateError,
    LinearAlgebraFailure, StepSizeUnderflowError,
)
from utils.ode_core import (
    CountingRhs, SolveStats, Tolerance, Trajectory, Monitor, Rhs,
    _as_state, initial_step, next_step_size, scaled_rms,
)

EPS = np.finfo(float).eps
C = np.asarray(RADAU_C)

Jacobian = Callable[[float, np.ndarray], np.ndarray]


class RadauSolver:
    """
    Single-use Radau IIA integrator over [t0, tf].

    Jacobian policy: the Jacobian is kept across steps and recomputed after
    an accepted step whose Newton contraction rate exceeded JAC_RATE, after
    an error-test rejection while it is stale, and before the retry of a
    step whose Newton iteration failed. A Newton failure halves the step;
    more than `newton_retries` failures in a row raise ConvergenceFailure.
    """

    def __init__(self, f: Rhs, jac: Jacobian, u0, t0: float, tf: float, tol: Tolerance,
                 first_step: Optional[float] = None, dt_min: Optional[float] = None,
                 max_steps: Optional[int] = None, monitor: Optional[Monitor] = None,
                 newton_retries: int = NEWTON_RETRIES):
        if not tf > t0:
            raise ContractViolation(f"tf must exceed t0, got [{t0!r}, {tf!r}]")
        self.rhs = CountingRhs(f)
        self.jac = CountingRhs(jac)
        self.u0 = _as_state(u0)
        self.t0 = float(t0)
        self.tf = float(tf)
        self.tol = Tolerance.parse(tol)
        self.first_step = first_step
        self.dt_min = dt_min if dt_min is not None else 0.0
        self.max_steps = max_steps
        self.monitor = monitor
        self.newton_retries = int(newton_retries)
        self.newton_tol = max(10 * EPS / self.tol.rtol, NEWTON_TOL_FACTOR * self.tol.rtol)
        self.stats = SolveStats()
        self._used = False

    # -- linear algebra -----------------------------------------------------

    def _jacobian(self, t: float, y: np.ndarray) -> np.ndarray:
        J = self.jac(t, y)
        if J.shape != (y.size, y.size):
            raise ContractViolation(f"Jacobian must be {y.size}x{y.size}, got {J.shape}")
        if not np.all(np.isfinite(J)):
            raise InvalidStateError(f"Jacobian is non-finite at t={t!r}")
        return J

    def _factorize(self, h: float, J: np.ndarray):
        identity = np.eye(J.shape[0])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LinAlgWarning)
                lu_real = lu_factor(RADAU_MU_REAL / h * identity - J)
                lu_complex = lu_factor(RADAU_MU_COMPLEX / h * identity - J)
        except (LinAlgError, ValueError) as e:
            raise LinearAlgebraFailure(f"LU factorization failed for dt={h!r}: {e}")
        self.stats.n_lu += 2
        if np.any(np.diag(lu_real[0]) == 0) or np.any(np.diag(lu_complex[0]) == 0):
            raise LinearAlgebraFailure(f"Singular Newton iteration matrix for dt={h!r}")
        return lu_real, lu_complex

    # -- stage equations ----------------------------------------------------

    def _solve_collocation(self, t, y, h, Z0, scale, lu_real, lu_complex):
        """Simplified Newton on the transformed stage system; returns (converged, n_iter, Z, rate)."""
        n = y.size
        m_real = RADAU_MU_REAL / h
        m_complex = RADAU_MU_COMPLEX / h
        W = RADAU_TI @ Z0
        Z = Z0
        F = np.empty((3, n))
        dW = np.empty_like(W)
        dW_norm_old = None
        rate = None
        converged = False
        k = 0
        for k in range(NEWTON_MAXITER):
            for i in range(3):
                F[i] = self.rhs(t + C[i] * h, y + Z[i])
            if not np.all(np.isfinite(F)):
                break
            f_real = F.T @ RADAU_TI_REAL - m_real * W[0]
            f_complex = F.T @ RADAU_TI_COMPLEX - m_complex * (W[1] + 1j * W[2])
            dW_complex = lu_solve(lu_complex, f_complex)
            dW[0] = lu_solve(lu_real, f_real)
            dW[1] = dW_complex.real
            dW[2] = dW_complex.imag

            dW_norm = scaled_rms(dW, scale)
            if dW_norm_old is not None:
                rate = dW_norm / dW_norm_old
            if rate is not None and (rate >= 1 or rate ** (NEWTON_MAXITER - k) / (1 - rate) * dW_norm > self.newton_tol):
                break

            W = W + dW
            Z = RADAU_T @ W
            if dW_norm == 0 or (rate is not None and rate / (1 - rate) * dW_norm < self.newton_tol):
                converged = True
                break
            dW_norm_old = dW_norm
        return converged, k + 1, Z, rate

    @staticmethod
    def _extrapolate(previous, t_query: np.ndarray) -> np.ndarray:
        """Collocation polynomial of the previous step evaluated at t_query, shape (len, n)."""
        t_old, h_old, y_old, Q = previous
        x = (t_query - t_old) / h_old
        powers = np.cumprod(np.tile(x, (3, 1)), axis=0)
        return (y_old[:, None] + Q @ powers).T

    # -- driver -------------------------------------------------------------

    def solve(self) -> Tuple[Trajectory, SolveStats]:
        if self._used:
            raise ContractViolation("RadauSolver instances are single-use")
        self._used = True

        tol, stats = self.tol, self.stats
        start = time.perf_counter()
        t, y = self.t0, self.u0
        f = self.rhs(t, y)
        if not np.all(np.isfinite(f)):
            raise InvalidStateError(f"Right-hand side is non-finite at the initial state (t={t!r})")
        J = self._jacobian(t, y)
        current_jac = True
        span = self.tf - self.t0
        h_abs = self.first_step if self.first_step is not None else initial_step(
            self.rhs, t, y, f, tol, RADAU_ERROR_ORDER, span)

        lu_real = lu_complex = None
        h_lu = None
        previous = None
        times, states, derivs = [t], [y], [f]

        def fail(exc_type, h, **kw):
            stats.n_fev, stats.n_jev = self.rhs.count, self.jac.count
            stats.time_s = time.perf_counter() - start
            partial = Trajectory(np.array(times), np.array(states), np.array(derivs))
            return exc_type(t, h, partial=partial, stats=stats, **kw)

        while t < self.tf:
            if self.max_steps is not None and stats.n_steps_accepted >= self.max_steps:
                raise fail(StepSizeUnderflowError, h_abs, dt_min=self.dt_min)
            rejected = False
            newton_failures = 0

            while True:
                min_step = max(self.dt_min, 10 * abs(np.nextafter(t, np.inf) - t))
                if h_abs < min_step:
                    if newton_failures:
                        raise fail(ConvergenceFailure, h_abs)
                    raise fail(StepSizeUnderflowError, h_abs, dt_min=min_step)

                h = h_abs
                last = t + h >= self.tf or self.tf - (t + h) < min_step
                if last:
                    h = self.tf - t
                t_new = self.tf if last else t + h

                if previous is None:
                    Z0 = np.zeros((3, y.size))
                else:
                    Z0 = self._extrapolate(previous, t + h * C) - y
                scale = tol.atol + np.abs(y) * tol.rtol

                if lu_real is None or h != h_lu:
                    lu_real, lu_complex = self._factorize(h, J)
                    h_lu = h
                converged, n_iter, Z, rate = self._solve_collocation(t, y, h, Z0, scale, lu_real, lu_complex)

                if not converged:
                    newton_failures += 1
                    stats.n_steps_rejected += 1
                    if self.monitor is not None:
                        self.monitor(t, h, math.inf, False)
                    if newton_failures > self.newton_retries:
                        raise fail(ConvergenceFailure, h)
                    if not current_jac:
                        J = self._jacobian(t, y)
                        current_jac = True
                        lu_real = None
                    h_abs = 0.5 * h
                    continue
                newton_failures = 0

                y_new = y + Z[-1]
                ZE = Z.T @ RADAU_E / h
                error = lu_solve(lu_real, f + ZE)
                scale = tol.atol + np.maximum(np.abs(y), np.abs(y_new)) * tol.rtol
                eps = scaled_rms(error, scale)
                if rejected and eps > 1:
                    error = lu_solve(lu_real, self.rhs(t, y + error) + ZE)
                    eps = scaled_rms(error, scale)
                if not math.isfinite(eps):
                    eps = math.inf

                accepted = eps <= 1.0
                if self.monitor is not None:
                    self.monitor(t, h, eps, accepted)
                h_next = next_step_size(h, eps, RADAU_ERROR_ORDER)
                if accepted:
                    break

                stats.n_steps_rejected += 1
                rejected = True
                h_abs = h_next
                if not current_jac:
                    J = self._jacobian(t, y)
                    current_jac = True
                    lu_real = None

            recompute_jac = rate is not None and rate > JAC_RATE
            factor = h_next / h
            if not recompute_jac and factor < STEP_HOLD:
                factor = 1.0
            h_abs = h * factor

            f_new = self.rhs(t_new, y_new)
            if recompute_jac:
                J = self._jacobian(t_new, y_new)
                current_jac = True
                lu_real = None
            else:
                current_jac = False

            previous = (t, h, y, Z.T @ RADAU_P)
            t, y, f = t_new, y_new, f_new
            stats.n_steps_accepted += 1
            times.append(t)
            states.append(y)
            derivs.append(f)

        stats.time_s = time.perf_counter() - start
        stats.n_fev = self.rhs.count
        stats.n_jev = self.jac.count
        return Trajectory(np.array(times), np.array(states), np.array(derivs)), stats


def radau_solve(f: Rhs, jac: Jacobian, u0, t0: float, tf: float, tol: Tolerance,
                first_step: Optional[float] = None, dt_min: Optional[float] = None,
                max_steps: Optional[int] = None, monitor: Optional[Monitor] = None,
                newton_retries: int = NEWTON_RETRIES) -> Tuple[Trajectory, SolveStats]:
    """
    Solve u' = f(t, u), u(t0) = u0 on [t0, tf] with Radau IIA order 5.

    Raises:
        ConvergenceFailure: Newton still fails after a retry with a fresh Jacobian and half the step.
        LinearAlgebraFailure: singular iteration matrix.
        StepSizeUnderflowError: error-test rejections drive dt below its floor.
    """
    return RadauSolver(f, jac, u0, t0, tf, tol, first_step=first_step, dt_min=dt_min,
                       max_steps=max_steps, monitor=monitor, newton_retries=newton_retries).solve()
