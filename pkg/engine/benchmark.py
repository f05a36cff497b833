"""
Benchmark Class:
- Solves every selected μ with Radau at the benchmark tolerance and with the
  trained ROM, timing each solve on its own
- Scores both against a tight-tolerance Radau reference
- Writes the comparison table (CSV + JSON) and per-μ plot data
"""

from __future__ import annotations

import math
import os
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.experiment import ExperimentConfig
from engine.data_generator import generate_reference
from engine.reporter import Reporter, write_csv, write_json
from engine.rom import InferenceResult, RomModel, infer
from utils.errors import ContractViolation, DomainError, MissingArtifactError, NumericalError, UndefinedMetricError
from utils.metrics import d_peak, l2, mse_t, mse_ts
from utils.ode_core import Tolerance, Trajectory, interpolate
from utils.problems import ParametricProblem
from utils.transformers import ReparamSeries, reparametrize
from config.settings import *

TABLE_COLUMNS = ["mu", "solver", "tol", "time_s", "n_fev", "n_jev", "n_lu", "mse_ts"]
METRIC_ERRORS = (NumericalError, ContractViolation, UndefinedMetricError)


def table_columns(accuracy: str) -> List[str]:
    return TABLE_COLUMNS + [accuracy, "d_peak"]


def _accuracy(accuracy: str, t, states_hat, ref_t, ref_hat, components) -> float:
    if accuracy == "l2":
        return l2(t, states_hat, ref_t, ref_hat, components)
    return mse_t(t, states_hat, ref_t, ref_hat)


def rom_mse_ts(result: InferenceResult, reference: ReparamSeries) -> float:
    """MSE in ts between the rollout, linearly resampled on the reference ts samples, and the reference."""
    mask = reference.ts <= result.ts[-1]
    if not np.any(mask):
        raise ContractViolation("Rollout does not cover the reference ts grid")
    states = interpolate(Trajectory(result.ts, result.states_hat), reference.ts[mask])
    return mse_ts(states, reference.states[mask])


def _row(mu, solver: str, tol, stats=None) -> Dict:
    return {
        "mu": [float(v) for v in mu],
        "solver": solver,
        "tol": tol,
        "time_s": None if stats is None else stats.time_s,
        "n_fev": None if stats is None else stats.n_fev,
        "n_jev": None if stats is None else stats.n_jev,
        "n_lu": None if stats is None else stats.n_lu,
        "mse_ts": None,
        "d_peak": None,
        "reached_final_time": None,
        "error": None,
    }


def _score(row: Dict, accuracy: str, t, states_hat, reference: Trajectory, ref_hat: np.ndarray,
           components: Optional[Sequence[int]], peak_component: Optional[int]) -> None:
    errors = []
    try:
        row[accuracy] = _accuracy(accuracy, t, states_hat, reference.times, ref_hat, components)
    except METRIC_ERRORS as e:
        errors.append(f"{accuracy}: {e}")
    if peak_component is not None:
        try:
            row["d_peak"] = d_peak(t, states_hat[:, peak_component], reference.times, ref_hat[:, peak_component])
        except METRIC_ERRORS as e:
            errors.append(f"d_peak: {e}")
    if errors:
        row["error"] = "; ".join(errors)


def benchmark_compare(rom: RomModel, mus: Sequence, radau_tol: Tolerance, reference_tol: Tolerance,
                      inference, accuracy: str = "l2", components: Optional[Sequence[int]] = None,
                      peak_component: Optional[int] = None, plot_dir: Optional[str] = None) -> List[Dict]:
    """
    One Radau row and one ROM row per μ, in the order given.

    Radau rows solve the full-order problem over the test horizon; ROM rows run
    `infer` with the inference settings and t_final set to that horizon. Both
    are scored on normalized states against the reference solve. mse_ts is
    reported for ROM rows only, against the reparametrized training-horizon
    reference. Failures are recorded in the row's `error` field.
    """
    problem = rom.problem
    state = rom.normalizers.state
    rows = []
    for k, mu in enumerate(mus):
        mu = problem.check_param(mu)
        tag = f"mu_{k:02d}"
        print(f"Benchmarking {problem.name} {tag} mu={mu.tolist()}")
        radau_row = _row(mu, "radau", radau_tol.to_dict())
        rom_row = _row(mu, f"rom-{inference.solver}",
                       inference.dts if inference.solver == "fixed" else inference.tol)
        rom_row["n_jev"], rom_row["n_lu"] = 0, 0
        rows.extend([radau_row, rom_row])

        try:
            reference, _ = generate_reference(problem, mu, reference_tol, role="test")
            ref_hat = np.asarray(state.forward(reference.states, mu), dtype=float)
        except (NumericalError, DomainError) as e:
            for row in (radau_row, rom_row):
                row["error"] = f"reference solve failed: {type(e).__name__}: {e}"
            continue

        try:
            radau, stats = generate_reference(problem, mu, radau_tol, role="test")
            radau_row.update({"time_s": stats.time_s, "n_fev": stats.n_fev, "n_jev": stats.n_jev,
                              "n_lu": stats.n_lu, "reached_final_time": True})
            _score(radau_row, accuracy, radau.times, np.asarray(state.forward(radau.states, mu), dtype=float),
                   reference, ref_hat, components, peak_component)
        except (NumericalError, ContractViolation, DomainError) as e:
            # e.g. negative components where the state map is logarithmic
            radau_row["error"] = f"{type(e).__name__}: {e}"

        try:
            result = infer(rom, mu, inference.solver, inference.dts, inference.tol, inference.ts_horizon,
                           t_final=reference.t_final, output_points=inference.output_points)
        except NumericalError as e:
            rom_row["error"] = f"{type(e).__name__}: {e}"
            continue
        rom_row.update({"time_s": result.stats.time_s, "n_fev": result.stats.n_fev,
                        "reached_final_time": result.reached_final_time})
        _score(rom_row, accuracy, result.t, result.states_hat, reference, ref_hat, components, peak_component)

        train_reference = None
        try:
            traj = reference
            if problem.horizon(mu, "train") != reference.t_final:
                traj, _ = generate_reference(problem, mu, reference_tol, role="train")
            train_reference = reparametrize(traj, problem, mu)
            rom_row["mse_ts"] = rom_mse_ts(result, train_reference)
        except METRIC_ERRORS as e:
            rom_row["error"] = "; ".join(filter(None, [rom_row["error"], f"mse_ts: {e}"]))

        if plot_dir is not None:
            write_plot_data(plot_dir, tag, result, reference, train_reference)
    return rows


def _long_frame(source: str, axis: str, x, states) -> pd.DataFrame:
    states = np.atleast_2d(np.asarray(states, dtype=float))
    data = {"source": source, axis: np.asarray(x, dtype=float)}
    for i in range(states.shape[1]):
        data[f"u_{i + 1}"] = states[:, i]
    return pd.DataFrame(data)


def write_plot_data(plot_dir: str, tag: str, result: InferenceResult, reference: Trajectory,
                    train_reference: Optional[ReparamSeries]) -> None:
    """plot_ts_<tag>.csv (ts, û) and plot_t_<tag>.csv (t, u), ROM rows first, then the reference overlay."""
    ts_frames = [_long_frame("rom", "ts", result.ts, result.states_hat)]
    if train_reference is not None:
        ts_frames.append(_long_frame("reference", "ts", train_reference.ts, train_reference.states))
    write_csv(os.path.join(plot_dir, f"plot_ts_{tag}.csv"), pd.concat(ts_frames, ignore_index=True))
    t_frames = [_long_frame("rom", "t", result.t, result.states),
                _long_frame("reference", "t", reference.times, reference.states)]
    write_csv(os.path.join(plot_dir, f"plot_t_{tag}.csv"), pd.concat(t_frames, ignore_index=True))


class Benchmark:
    def __init__(self, name: str, config: ExperimentConfig):
        """
        Initialize the Benchmark.

        Args:
            name (str): Step name, also the report subfolder
            config (ExperimentConfig): Validated experiment
        """
        self.S = get_settings()

        if name is None:
            raise ValueError("Step name must be provided. In this way you can identify the step in the logs")

        self.name = name
        self.config = config
        self.problem: ParametricProblem = config.get_problem()
        self.output_dir = os.path.join(config.report_dir, "benchmark")
        self.reporter = Reporter(config.report_dir, name)

    def selection(self, mus: Optional[Sequence] = None) -> np.ndarray:
        """Explicit μ list, else the config's, else the problem's test points."""
        if mus is None:
            mus = self.config.benchmark.mu
        if mus is None:
            return self.problem.grid("test").points
        return np.array([self.problem.check_param(m) for m in mus], dtype=float)

    def run(self, mus: Optional[Sequence] = None) -> pd.DataFrame:
        rom = RomModel.load(self.config.model_dir)
        if rom.problem.name != self.problem.name:
            raise MissingArtifactError(f"Model at {self.config.model_dir} is for '{rom.problem.name}', "
                                       f"not '{self.problem.name}'")
        bm = self.config.benchmark
        rows = benchmark_compare(
            rom, self.selection(mus), bm.radau_tol, self.config.dataset.reference_tol, self.config.inference,
            accuracy=bm.accuracy, components=bm.l2_components, peak_component=bm.d_peak_component,
            plot_dir=os.path.join(self.output_dir, "plots"))

        columns = table_columns(bm.accuracy)
        table = pd.DataFrame([{**r, "mu": " ".join(f"{v:.17g}" for v in r["mu"]),
                               "tol": _tol_label(r["tol"])} for r in rows], columns=columns)
        csv_path = write_csv(os.path.join(self.output_dir, "benchmark.csv"), table)
        write_json(os.path.join(self.output_dir, "benchmark.json"),
                   {"problem": self.problem.name, "accuracy": bm.accuracy, "columns": columns, "rows": rows})
        print(f"Benchmark table written to {csv_path}")

        failures = [f"{r['solver']} mu={r['mu']}: {r['error']}" for r in rows if r["error"]]
        if failures:
            failures.insert(0, f"\n------ BENCHMARK ROW ERRORS ({len(failures)}) -------\n")
            self.reporter.write_report("row_errors", failures)
        return table


def _tol_label(tol) -> str:
    if isinstance(tol, dict):
        return f"{tol['atol']:g}/{tol['rtol']:g}" if tol["atol"] != tol["rtol"] else f"{tol['rtol']:g}"
    return "" if tol is None or (isinstance(tol, float) and math.isnan(tol)) else f"{tol:g}"
