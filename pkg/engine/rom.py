"""
Reduced-order model inference.

A RomModel pairs the dynamics network (û ‖ μ̂ -> f̂_s) with the time-map
network (û ‖ μ̂ -> log10 d t̂/dts). Inference integrates the de-stiffened
system in ts with an explicit solver, evaluates the time map once on the
whole rollout and recovers physical time by cumulative Simpson quadrature.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import pandas as pd
import torch

from config.constants import CSV_FLOAT_FORMAT, GRID_ROUNDING
from utils.errors import ContractViolation, InternalInvariantError, MissingArtifactError
from utils.neural import Mlp, as_tensor, load_mlp, save_mlp
from utils.normalizers import Normalizer, NormalizerSet
from utils.ode_core import DOPRI5, RK4, SolveStats, Tolerance, Trajectory, interpolate, solve_adaptive, solve_fixed
from utils.problems import ParametricProblem, get_problem
from utils.quadrature import cumulative_simpson
from utils.transformers import uniform_grid

ROM_FILE = "rom.json"
DYNAMICS_FILE = "dynamics.json"
TIMEMAP_FILE = "timemap.json"


def param_features(problem: ParametricProblem, mu) -> np.ndarray:
    """μ̂ as a 1-D feature vector."""
    return np.asarray(problem.normalizers.param.forward(problem.check_param(mu)), dtype=float).reshape(-1)


class DynamicsField:
    """f_s(û) = dynamics⁻¹(net(û ‖ μ̂); μ) over a batch of parameter vectors, differentiable in torch."""

    def __init__(self, net: Mlp, problem: ParametricProblem, mu_hat: torch.Tensor, mu: np.ndarray):
        self.net = net
        self.normalizer = problem.normalizers.dynamics
        self.mu_hat = mu_hat
        self.mu = np.atleast_2d(np.asarray(mu, dtype=float))

    def __call__(self, u: torch.Tensor) -> torch.Tensor:
        return self.normalizer.inverse(self.net(torch.cat([u, self.mu_hat], dim=-1)), self.mu)


def numpy_field(net: Mlp, problem: ParametricProblem, mu) -> Callable[[float, np.ndarray], np.ndarray]:
    """Autonomous f(ts, û) for the numpy solvers, evaluated without gradient tracking."""
    mu = problem.check_param(mu)
    vector_field = DynamicsField(net, problem, as_tensor(param_features(problem, mu))[None, :], mu[None, :])

    def f(t, u):
        with torch.no_grad():
            return vector_field(as_tensor(u)[None, :])[0].numpy()

    return f


class RomModel:
    """Immutable after construction; `save`/`load` round-trip through JSON."""

    def __init__(self, problem: ParametricProblem, dynamics_net: Mlp, time_net: Mlp,
                 normalizers: Optional[NormalizerSet] = None, ts_horizon: float = 1.0):
        if not ts_horizon > 0:
            raise ContractViolation(f"ts_horizon must be positive, got {ts_horizon!r}")
        n_in = problem.n_state + param_features(problem, problem.test_points[0]).size
        if dynamics_net.input_dim != n_in or dynamics_net.output_dim != problem.n_state:
            raise ContractViolation(f"{problem.name}: dynamics network must map {n_in} -> {problem.n_state}, "
                                    f"got {dynamics_net.input_dim} -> {dynamics_net.output_dim}")
        if time_net.input_dim != n_in or time_net.output_dim != 1:
            raise ContractViolation(f"{problem.name}: time-map network must map {n_in} -> 1, "
                                    f"got {time_net.input_dim} -> {time_net.output_dim}")
        self.problem = problem
        self.dynamics_net = dynamics_net.eval()
        self.time_net = time_net.eval()
        self.normalizers = normalizers or problem.normalizers
        self.ts_horizon = float(ts_horizon)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem.name,
            "ts_horizon": self.ts_horizon,
            "normalizers": self.normalizers.to_dict(),
            "dynamics": DYNAMICS_FILE,
            "timemap": TIMEMAP_FILE,
        }

    def save(self, directory: str) -> str:
        os.makedirs(directory, exist_ok=True)
        save_mlp(self.dynamics_net, os.path.join(directory, DYNAMICS_FILE))
        save_mlp(self.time_net, os.path.join(directory, TIMEMAP_FILE))
        path = os.path.join(directory, ROM_FILE)
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
        return path

    @classmethod
    def load(cls, directory: str) -> "RomModel":
        """
        Raises:
            MissingArtifactError: rom.json or one of the network files is absent.
        """
        path = os.path.join(directory, ROM_FILE)
        try:
            with open(path, "r") as fh:
                d = json.load(fh)
        except FileNotFoundError:
            raise MissingArtifactError(f"No trained ROM at {directory} (missing {ROM_FILE}); run 'train' first")
        return cls(
            problem=get_problem(d["problem"]),
            dynamics_net=load_mlp(os.path.join(directory, d.get("dynamics", DYNAMICS_FILE))),
            time_net=load_mlp(os.path.join(directory, d.get("timemap", TIMEMAP_FILE))),
            normalizers=NormalizerSet.from_dict(d["normalizers"]),
            ts_horizon=d["ts_horizon"],
        )


def time_rates(time_net: Callable[[torch.Tensor], torch.Tensor], states, mu_hat) -> np.ndarray:
    """log10 d t̂/dts at every rollout sample, in one batched evaluation."""
    x = as_tensor(states)
    mu_hat = as_tensor(mu_hat).reshape(1, -1).expand(x.shape[0], -1)
    with torch.no_grad():
        return time_net(torch.cat([x, mu_hat], dim=-1)).reshape(-1).numpy()


def recover_time(states, time_net: Callable[[torch.Tensor], torch.Tensor], mu_hat, dts: float,
                 time_normalizer: Optional[Normalizer] = None, mu=None) -> np.ndarray:
    """
    Physical time along a rollout sampled on a uniform ts grid of spacing dts.

    t̂(ts_k) is the cumulative Simpson integral of 10**time_net over [0, ts_k],
    mapped back through the time normalizer when one is given.

    Raises:
        ContractViolation: fewer than 3 samples.
        InternalInvariantError: a rate is non-finite or not positive.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if states.shape[0] < 3:
        raise ContractViolation(f"Time recovery needs at least 3 rollout samples, got {states.shape[0]}")
    rate = np.power(10.0, time_rates(time_net, states, mu_hat))
    if not np.all(np.isfinite(rate)) or np.any(rate <= 0):
        raise InternalInvariantError("Time-map rate is non-finite or not positive")
    t_hat = cumulative_simpson(as_tensor(rate), dts).numpy()
    if time_normalizer is None:
        return t_hat
    return np.asarray(time_normalizer.inverse(t_hat, mu), dtype=float).reshape(-1)


@dataclass(eq=False)
class InferenceResult:
    """
    ts (G,), normalized states (G, N_u), recovered physical t (G,) and the
    physical states. Outputs stop early when time recovery failed or when
    t_final was reached.
    """
    mu: np.ndarray
    ts: np.ndarray
    states_hat: np.ndarray
    t: np.ndarray
    states: np.ndarray
    stats: SolveStats
    solver: str
    reached_final_time: bool

    def __len__(self) -> int:
        return self.ts.size

    def to_frame(self) -> pd.DataFrame:
        data = {"ts": self.ts, "t": self.t}
        for i in range(self.states.shape[1]):
            data[f"u_{i + 1}"] = self.states[:, i]
        return pd.DataFrame(data)

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)


def rollout(rom: RomModel, mu, solver: str = "fixed", dts: float = 1 / 40, tol: float = 2e-4,
            ts_horizon: Optional[float] = None, output_points: int = 1001):
    """
    Normalized-state rollout from û(0) over [0, ts_horizon] on a uniform ts grid.

    The fixed solver takes ts_horizon/dts RK4 steps; the adaptive one runs
    Dormand-Prince and is resampled with its Hermite interpolant onto
    `output_points` uniform samples.

    Returns:
        (ts grid, normalized states, SolveStats)
    """
    problem = rom.problem
    mu = problem.check_param(mu)
    horizon = rom.ts_horizon if ts_horizon is None else float(ts_horizon)
    f = numpy_field(rom.dynamics_net, problem, mu)
    u0 = np.asarray(rom.normalizers.state.forward(problem.initial_state(mu), mu), dtype=float)

    if solver == "fixed":
        grid = uniform_grid(dts, horizon)
        traj, stats = solve_fixed(f, u0, 0.0, horizon, dts, tableau=RK4)
        if traj.times.size != grid.size:
            raise ContractViolation(f"Fixed rollout grid does not match dts={dts!r}")
        return grid, traj.states, stats
    if solver == "adaptive":
        if output_points < 3:
            raise ContractViolation(f"output_points must be at least 3, got {output_points}")
        traj, stats = solve_adaptive(f, u0, 0.0, horizon, Tolerance(tol, tol), tableau=DOPRI5)
        grid = np.linspace(0.0, horizon, int(output_points))
        return grid, interpolate(traj, grid), stats
    raise ContractViolation(f"Unknown inference solver '{solver}', expected 'fixed' or 'adaptive'")


def infer(rom: RomModel, mu, solver: str = "fixed", dts: float = 1 / 40, tol: float = 2e-4,
          ts_horizon: Optional[float] = None, t_final: Optional[float] = None,
          output_points: int = 1001) -> InferenceResult:
    """
    Solve the ROM at μ and recover physical time.

    Solver failures propagate. A non-finite time-map rate ends the outputs
    before it with reached_final_time False. With t_final, outputs end at the
    first sample with t >= t_final, and reached_final_time tells whether one
    exists.
    """
    problem = rom.problem
    mu = problem.check_param(mu)
    mu_hat = param_features(problem, mu)

    started = time.perf_counter()
    ts, states_hat, stats = rollout(rom, mu, solver, dts, tol, ts_horizon, output_points)
    h = ts[1] - ts[0]

    reached = True
    log_rate = time_rates(rom.time_net, states_hat, mu_hat)
    bad = np.flatnonzero(~np.isfinite(np.power(10.0, log_rate)))
    if bad.size:
        reached = False
        keep = int(bad[0])
        if keep < 3:
            raise InternalInvariantError(f"Time-map rate is non-finite at rollout sample {keep}")
        ts, states_hat = ts[:keep], states_hat[:keep]
    t = recover_time(states_hat, rom.time_net, mu_hat, h, rom.normalizers.time, mu)
    stats.time_s = time.perf_counter() - started

    if t_final is not None:
        hit = np.flatnonzero(t >= t_final - GRID_ROUNDING * abs(t_final))
        if hit.size:
            end = int(hit[0]) + 1
            ts, states_hat, t = ts[:end], states_hat[:end], t[:end]
        else:
            reached = False

    states = np.asarray(rom.normalizers.state.inverse(states_hat, mu), dtype=float)
    return InferenceResult(mu=mu, ts=ts, states_hat=states_hat, t=t, states=states, stats=stats,
                           solver=solver, reached_final_time=reached)


def rollout_trajectory(result: InferenceResult) -> Trajectory:
    """Normalized states over ts, for resampling onto a reference grid."""
    return Trajectory(result.ts, result.states_hat)
