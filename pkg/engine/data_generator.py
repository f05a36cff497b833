"""
DataGenerator Class:
- Solves the reference problem with Radau for every train/validation μ,
  in parallel across μ
- Passes each solve through the SeriesTransformer and the SeriesValidator
- Writes the surviving series and the manifest through the DatasetStore

The module also assembles the two kinds of training data read by the
trainer: supervised rows (û, μ̂) -> (f̂_s, log10 ṫ) and unroll batches of
K-step target sequences on a uniform ts grid.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from config.experiment import TRANSFORM_REGISTRY, VALIDATION_REGISTRY, ExperimentConfig
from engine.data_handler import DatasetStore, series_tag
from engine.data_transformer import SeriesTransformer
from engine.execute_checks import SeriesValidator
from engine.reporter import Reporter
from engine.rom import param_features
from utils.errors import ContractViolation
from utils.neural import as_tensor
from utils.ode_core import SolveStats, Tolerance, Trajectory
from utils.problems import ParametricProblem, get_problem
from utils.radau import radau_solve
from utils.transformers import ReparamSeries, uniform_grid
from config.settings import *


def generate_reference(problem: ParametricProblem, mu, tol, role: str = "train") -> Tuple[Trajectory, SolveStats]:
    """
    Radau solve of the full-order problem over its horizon.

    The accepted-step sequence is kept as is: it defines the reparametrization.
    Solver failures propagate.
    """
    mu = problem.check_param(mu)
    f, jac = problem.bind(mu)
    return radau_solve(f, jac, problem.initial_state(mu), 0.0, problem.horizon(mu, role), Tolerance.parse(tol))


def _reference_job(problem_name: str, mu: Sequence[float], tol: dict, role: str):
    # runs in a worker process; solver exceptions carry non-picklable payloads
    try:
        traj, stats = generate_reference(get_problem(problem_name), mu, tol, role)
        return traj, stats, None
    except Exception as e:
        return None, None, f"{type(e).__name__}: {e}"


def solve_references(problem: ParametricProblem, mus: Sequence[np.ndarray], tol: Tolerance, role: str = "train",
                     workers: int = 1) -> List[Tuple[Optional[Trajectory], Optional[SolveStats], Optional[str]]]:
    """(trajectory, stats, error) per μ, in input order; failures are returned, not raised."""
    args = [(problem.name, [float(v) for v in mu], tol.to_dict(), role) for mu in mus]
    if workers <= 1 or len(args) <= 1:
        return [_reference_job(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_reference_job, *zip(*args)))


def select_series(count: int, limit: Optional[int], seed: int) -> np.ndarray:
    """Sorted indices of a seeded random subset of `limit` out of `count` items (all when limit is None)."""
    if limit is None or limit >= count:
        return np.arange(count)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(count, size=limit, replace=False))


@dataclass
class GenerationResult:
    entries: List[dict] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


class DataGenerator:
    def __init__(self, name: str, config: ExperimentConfig, overwrite: bool = False):
        """
        Initialize the DataGenerator.

        Args:
            name (str): Step name, also the report subfolder
            config (ExperimentConfig): Validated experiment
            overwrite (bool): Replace an existing dataset
        """
        self.S = get_settings()

        if name is None:
            raise ValueError("Step name must be provided. In this way you can identify the step in the logs")

        self.name = name
        self.config = config
        self.overwrite = overwrite
        self.problem = config.get_problem()
        self.store = DatasetStore(config.dataset_dir)
        self.transformer = SeriesTransformer("transform", TRANSFORM_REGISTRY, config.report_dir, self.problem,
                                             filter_override=config.dataset.filter)
        self.validator = SeriesValidator("validation", VALIDATION_REGISTRY, config.report_dir, self.problem)
        self.reporter = Reporter(config.report_dir, name)

    def grid_points(self) -> List[Tuple[str, int, np.ndarray]]:
        """(role, index, μ) for the train and validation grids after the optional subsampling."""
        ds = self.config.dataset
        points = []
        for role, limit in (("train", ds.max_train_series), ("validation", ds.max_validation_series)):
            grid = self.problem.grid(role, ds.grid)
            keep = select_series(len(grid), limit, ds.seed)
            points.extend((role, int(i), grid.points[i]) for i in keep)
        return points

    def run(self) -> GenerationResult:
        self.store.prepare(self.overwrite)
        points = self.grid_points()
        tol = self.config.dataset.reference_tol
        print(f"Solving {len(points)} references for '{self.problem.name}' with {self.config.workers} worker(s)")
        solves = solve_references(self.problem, [mu for _, _, mu in points], tol,
                                  workers=self.config.workers)

        result = GenerationResult()
        for (role, index, mu), (traj, stats, error) in zip(points, solves):
            tag = series_tag(role, index)
            failure = {"role": role, "index": index, "tag": tag, "mu": mu.tolist()}
            if error is not None:
                print(f"Reference solve failed for {tag}: {error}")
                result.failures.append({**failure, "error": error})
                continue

            print(f"Transforming {tag} ({len(traj)} accepted points)")
            series, transform_log = self.transformer.transform(traj, mu, tag)
            if series is None:
                errors = [log.get("error", "") for log in transform_log if log["status"] == "failed"]
                result.failures.append({**failure, "error": "; ".join(errors)})
                continue

            messages = []
            if not self.validator.validate(series, messages):
                result.failures.append({**failure, "error": " ".join(m.strip() for m in messages if m.strip())})
                continue

            result.entries.append({
                "role": role,
                "index": index,
                "tag": tag,
                "file": self.store.save_series(series, role, index),
                "mu": mu.tolist(),
                "n": series.n,
                "solve": {k: v for k, v in stats.to_dict().items() if k != "time_s"},
            })

        self.store.write_manifest(self.problem, self.config.dataset.seed, tol.to_dict(),
                                  self.transformer.describe(), result.entries, result.failures)
        if result.failures:
            lines = [f"{f['tag']} mu={f['mu']}: {f['error']}" for f in result.failures]
            lines.insert(0, f"\n------ GENERATION FAILURES ({len(result.failures)}) -------\n")
            self.reporter.write_report("failures", lines)
        print(f"Dataset written to {self.store.dataset_dir}: "
              f"{len(result.entries)} series, {len(result.failures)} failure(s)")
        return result


# ---------------------------------------------------------------------------
# Supervised rows
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class TrainingSet:
    """inputs (M, N_u + N_μ̂) = (û, μ̂); targets (M, N_u + 1) = (f̂_s, log10 ṫ)."""
    inputs: np.ndarray
    targets: np.ndarray
    split: str
    n_state: int

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ContractViolation("Inputs and targets must have the same number of rows")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise ContractViolation(f"{self.split} set contains non-finite values")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def dynamics_targets(self) -> np.ndarray:
        return self.targets[:, :self.n_state]

    @property
    def time_targets(self) -> np.ndarray:
        return self.targets[:, self.n_state:]


def _rows(series_list: Sequence[ReparamSeries], problem: ParametricProblem, subsample_target: int,
          rng: np.random.Generator, split: str) -> TrainingSet:
    inputs, targets = [], []
    for s in series_list:
        if not s.has_derivatives:
            raise ContractViolation(f"Series {s.tag} has no derivative estimates")
        count = min(subsample_target, len(s))
        idx = np.sort(rng.choice(len(s), size=count, replace=False))
        features = param_features(problem, s.mu)
        mu_hat = np.broadcast_to(features, (count, features.size))
        fs_hat = problem.normalizers.dynamics.forward(s.fs[idx], s.mu)
        inputs.append(np.hstack([s.states[idx], mu_hat]))
        targets.append(np.hstack([fs_hat, s.tdot[idx, None]]))
    return TrainingSet(np.vstack(inputs), np.vstack(targets), split, problem.n_state)


def build_supervised(train_series: Sequence[ReparamSeries], validation_series: Sequence[ReparamSeries],
                     problem: ParametricProblem, subsample_target: int,
                     seed: int = 0) -> Tuple[TrainingSet, TrainingSet]:
    """
    Pool supervised rows across μ, drawing at most `subsample_target` rows
    per series without replacement. One generator seeded by `seed` draws the
    train rows first, then the validation rows.

    Raises:
        ContractViolation: non-positive target, empty collection or missing derivatives.
    """
    if subsample_target < 1:
        raise ContractViolation(f"Subsampling target must be positive, got {subsample_target}")
    if not train_series or not validation_series:
        raise ContractViolation("Both train and validation series are required")
    rng = np.random.default_rng(seed)
    train = _rows(train_series, problem, subsample_target, rng, "train")
    validation = _rows(validation_series, problem, subsample_target, rng, "validation")
    return train, validation


# ---------------------------------------------------------------------------
# Unroll batches
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class UnrollBatch:
    """start_states (B, N_u), mu_hat (B, N_μ̂), mu (B, N_μ), target_states (K, B, N_u)."""
    start_states: np.ndarray
    mu_hat: np.ndarray
    mu: np.ndarray
    target_states: np.ndarray
    dts: float

    @property
    def size(self) -> int:
        return self.start_states.shape[0]

    @property
    def unroll(self) -> int:
        return self.target_states.shape[0]

    def tensors(self):
        return (as_tensor(self.start_states), as_tensor(self.mu_hat), as_tensor(self.target_states))


def build_unroll_batches(series_list: Sequence[ReparamSeries], problem: ParametricProblem, unroll: int,
                         dts: float, batch_size: int, seed: int) -> Iterator[UnrollBatch]:
    """
    One epoch of K-step batches over series resampled to the uniform grid of
    spacing dts. Every (series, start index i) with i + K <= n enters once, in
    an order shuffled by `seed`; the last batch may be smaller.

    Raises:
        ContractViolation: K < 1, K too long for the grid, or a series not on the grid.
    """
    grid = uniform_grid(dts)
    n = grid.size - 1
    if unroll < 1 or unroll > n:
        raise ContractViolation(f"Unroll length {unroll} does not fit a grid of {n} steps (dts={dts!r})")
    if batch_size < 1:
        raise ContractViolation(f"Batch size must be positive, got {batch_size}")
    if not series_list:
        raise ContractViolation("No series to build unroll batches from")
    for s in series_list:
        if s.ts.size != grid.size or not np.allclose(s.ts, grid, rtol=0.0, atol=1e-12):
            raise ContractViolation(f"Series {s.tag} is not resampled to dts={dts!r}")

    states = np.stack([s.states for s in series_list])
    mus = np.stack([s.mu for s in series_list])
    mu_hats = np.stack([param_features(problem, s.mu) for s in series_list])
    pool = np.array([(j, i) for j in range(len(series_list)) for i in range(n - unroll + 1)])
    order = np.random.default_rng(seed).permutation(len(pool))
    pool = pool[order]

    def batches():
        for lo in range(0, len(pool), batch_size):
            chunk = pool[lo:lo + batch_size]
            j, i = chunk[:, 0], chunk[:, 1]
            steps = i[None, :] + np.arange(1, unroll + 1)[:, None]
            yield UnrollBatch(
                start_states=states[j, i],
                mu_hat=mu_hats[j],
                mu=mus[j],
                target_states=states[j[None, :], steps],
                dts=dts,
            )

    return batches()
