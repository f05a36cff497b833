"""
Series transforms of the dataset pipeline.

A reference Trajectory is re-indexed by accepted step (ts = i/n), its states
are normalized, and Savitzky-Golay derivatives dû/dts and dt/dts are
estimated on the uniform ts grid. Registry-driven transforms share the
signature `func(data, problem, mu, messages=None, **params)`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd
from scipy.signal import savgol_filter

from config.constants import CSV_FLOAT_FORMAT, GRID_ROUNDING
from utils.errors import ContractViolation, InsufficientDataError, InternalInvariantError
from utils.normalizers import Normalizer
from utils.ode_core import Trajectory, interpolate
from utils.problems import ParametricProblem

MAX_FILTER_WINDOW = 10


@dataclass(eq=False)
class ReparamSeries:
    """
    One reference solve re-indexed to uniform ts.

    `t` is physical time, `states` are normalized (û). `fs` is dû/dts and
    `tdot` is log10(d t̂/dts) with t̂ the time-normalized t.
    """
    mu: np.ndarray
    ts: np.ndarray
    t: np.ndarray
    states: np.ndarray
    fs: Optional[np.ndarray] = None
    tdot: Optional[np.ndarray] = None
    tag: str = ""
    state_normalizer: Optional[Normalizer] = None

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=float).reshape(-1)
        self.ts = np.asarray(self.ts, dtype=float).reshape(-1)
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if not (self.ts.size == self.t.size == self.states.shape[0]):
            raise ContractViolation(
                f"Series lengths disagree: ts={self.ts.size}, t={self.t.size}, states={self.states.shape[0]}")
        if self.fs is not None:
            self.fs = np.asarray(self.fs, dtype=float).reshape(self.states.shape)
        if self.tdot is not None:
            self.tdot = np.asarray(self.tdot, dtype=float).reshape(-1)

    def __len__(self) -> int:
        return self.ts.size

    @property
    def n(self) -> int:
        """Number of intervals of the ts grid."""
        return self.ts.size - 1

    @property
    def n_state(self) -> int:
        return self.states.shape[1]

    @property
    def has_derivatives(self) -> bool:
        return self.fs is not None and self.tdot is not None

    def physical_states(self) -> np.ndarray:
        if self.state_normalizer is None:
            raise ContractViolation("Series has no state normalizer attached")
        return self.state_normalizer.inverse(self.states, self.mu)

    def trajectory(self) -> Trajectory:
        """Normalized states as a Trajectory over ts (Hermite-ready when fs is present)."""
        return Trajectory(self.ts, self.states, self.fs)

    def to_frame(self) -> pd.DataFrame:
        data = {"ts": self.ts, "t": self.t}
        for i in range(self.n_state):
            data[f"u_{i + 1}"] = self.states[:, i]
        if self.fs is not None:
            for i in range(self.n_state):
                data[f"fs_{i + 1}"] = self.fs[:, i]
        if self.tdot is not None:
            data["tdot"] = self.tdot
        return pd.DataFrame(data)

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, mu, tag: str = "",
                   state_normalizer: Optional[Normalizer] = None) -> "ReparamSeries":
        u_cols = [c for c in df.columns if c.startswith("u_")]
        fs_cols = [c for c in df.columns if c.startswith("fs_")]
        if not u_cols or "ts" not in df.columns or "t" not in df.columns:
            raise ContractViolation(f"Series frame needs ts, t and u_* columns, got {list(df.columns)}")
        return cls(
            mu=mu,
            ts=df["ts"].to_numpy(dtype=float),
            t=df["t"].to_numpy(dtype=float),
            states=df[u_cols].to_numpy(dtype=float),
            fs=df[fs_cols].to_numpy(dtype=float) if fs_cols else None,
            tdot=df["tdot"].to_numpy(dtype=float) if "tdot" in df.columns else None,
            tag=tag,
            state_normalizer=state_normalizer,
        )


def _log(messages: Optional[List[str]], text: str) -> None:
    if messages is not None:
        messages.append(text)


def reparametrize(traj: Trajectory, problem: ParametricProblem, mu,
                  messages: Optional[List[str]] = None) -> ReparamSeries:
    """
    Index the accepted solver points by ts_i = i/n and normalize the states.

    Parameters:
    traj: reference trajectory starting at t = 0
    problem: owner of the state normalizer
    mu: raw parameter vector of the solve

    Returns:
    ReparamSeries without derivatives
    """
    if len(traj) < 3:
        raise InsufficientDataError(f"Reparametrization needs at least 3 accepted points, got {len(traj)}")
    if traj.times[0] != 0.0:
        raise ContractViolation(f"Reference trajectories must start at t=0, got {traj.times[0]!r}")
    mu = problem.check_param(mu)
    n = len(traj) - 1
    ts = np.arange(n + 1, dtype=float) / n
    normalizer = problem.normalizers.state
    states = normalizer.forward(traj.states, mu)

    _log(messages, f"{reparametrize.__name__}: {n + 1} accepted points mapped to ts = i/{n}.")
    return ReparamSeries(mu=mu, ts=ts, t=traj.times.copy(), states=states, state_normalizer=normalizer)


def _check_filter(window: int, order: int, length: int) -> None:
    if window % 2 == 0 or window < 3:
        raise ContractViolation(f"Savitzky-Golay window must be odd and >= 3, got {window}")
    if not 0 <= order < window:
        raise ContractViolation(f"Savitzky-Golay order must be in [0, window), got {order}")
    if window >= MAX_FILTER_WINDOW:
        raise ContractViolation(f"Savitzky-Golay window must stay below {MAX_FILTER_WINDOW}, got {window}")
    if window >= length:
        raise InsufficientDataError(f"Window {window} does not fit a series of {length} points")


def savgol_derivative(values: np.ndarray, spacing: float, window: int, order: int) -> np.ndarray:
    """
    First derivative along axis 0 of uniformly spaced samples.

    Local least-squares polynomials of degree `order` over centered windows;
    the first and last window/2 points are fitted with the boundary window
    (`mode="interp"`), so the output has the input length.
    """
    values = np.asarray(values, dtype=float)
    _check_filter(window, order, values.shape[0])
    return savgol_filter(values, window_length=window, polyorder=order, deriv=1,
                         delta=spacing, axis=0, mode="interp")


def estimate_derivatives(series: ReparamSeries, problem: ParametricProblem, mu,
                         window: int = 7, order: int = 2,
                         messages: Optional[List[str]] = None) -> ReparamSeries:
    """
    Fill fs = dû/dts and tdot = log10(d t̂/dts) with Savitzky-Golay estimates.

    Where the filtered d t̂/dts is not positive (sharp step-size jumps) the
    second-order finite difference of the strictly increasing t̂ is used
    instead, which is positive by construction.

    Parameters:
    series: reparametrized series
    window: odd filter window, below 10
    order: polynomial degree, below window
    """
    mu = problem.check_param(mu)
    h = 1.0 / series.n
    fs = savgol_derivative(series.states, h, window, order)

    t_hat = np.asarray(problem.normalizers.time.forward(series.t, mu), dtype=float).reshape(-1)
    rate = savgol_derivative(t_hat, h, window, order)
    bad = ~(rate > 0)
    if np.any(bad):
        fallback = np.gradient(t_hat, h)
        rate = np.where(bad, fallback, rate)
        _log(messages, f"{estimate_derivatives.__name__}: {int(bad.sum())} non-positive dt/dts estimates "
                       f"replaced by finite differences.")
    if not np.all(rate > 0):
        raise InternalInvariantError("dt/dts is not positive although t is strictly increasing")

    _log(messages, f"{estimate_derivatives.__name__}: derivatives estimated with window={window}, order={order}.")
    return ReparamSeries(mu=series.mu, ts=series.ts, t=series.t, states=series.states,
                         fs=fs, tdot=np.log10(rate), tag=series.tag,
                         state_normalizer=series.state_normalizer)


def uniform_grid(dts: float, horizon: float = 1.0) -> np.ndarray:
    """{0, dts, 2 dts, ..., horizon}; dts must divide the horizon within rounding."""
    if not dts > 0:
        raise ContractViolation(f"dts must be positive, got {dts!r}")
    steps = horizon / dts
    n = int(round(steps))
    if n < 1 or abs(steps - n) > GRID_ROUNDING * max(1.0, steps):
        raise ContractViolation(f"dts={dts!r} does not divide the horizon {horizon!r}")
    return horizon * np.arange(n + 1, dtype=float) / n


def resample_uniform(series: ReparamSeries, dts: float,
                     messages: Optional[List[str]] = None) -> ReparamSeries:
    """
    Interpolate the series onto {0, dts, ..., 1}.

    States use the Hermite interpolant when fs is present. t and tdot are
    interpolated linearly in ts.
    """
    grid = uniform_grid(dts)
    states = interpolate(series.trajectory(), grid)
    t = np.interp(grid, series.ts, series.t)
    fs = None
    if series.fs is not None:
        fs = np.column_stack([np.interp(grid, series.ts, series.fs[:, j]) for j in range(series.n_state)])
    tdot = np.interp(grid, series.ts, series.tdot) if series.tdot is not None else None

    _log(messages, f"{resample_uniform.__name__}: {len(series)} points resampled to {grid.size} (dts={dts!r}).")
    return ReparamSeries(mu=series.mu, ts=grid, t=t, states=states, fs=fs, tdot=tdot,
                         tag=series.tag, state_normalizer=series.state_normalizer)


############################################################################################################
# Dictionary to map transformer names to functions - All new transformers must be added here
TRANSFORMERS_DICT = {
    "reparametrize": reparametrize,
    "estimate_derivatives": estimate_derivatives,
}
