"""
Trainer Class:
- Loads the generated dataset and runs the training phases in order:
  dynamics supervised -> unroll fine-tune, then time map supervised ->
  Simpson fine-tune against the frozen dynamics
- Writes the networks, the RomModel and one TrainReport per phase

The phase functions are usable on their own (tests, random search): each
takes a network, its data and a TrainConfig and returns the trained network
with its TrainReport.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader, TensorDataset

from config.constants import (
    ACTIVATIONS, MAX_BAD_BATCHES, MLP_DEPTH, MLP_WIDTH, SEARCH_DEPTH, SEARCH_LR, SEARCH_WIDTH, VALIDATION_MAX_STEPS,
)
from config.experiment import ExperimentConfig, NetConfig, TrainConfig
from engine.data_generator import TrainingSet, build_supervised, build_unroll_batches
from engine.data_handler import DatasetStore
from engine.reporter import Reporter, write_csv, write_json
from engine.rom import DYNAMICS_FILE, TIMEMAP_FILE, DynamicsField, RomModel, numpy_field, param_features
from utils.errors import ConfigError, ContractViolation, NumericalError, TrainingDivergedError
from utils.neural import Mlp, as_tensor, gradient, init_parameters, load_mlp, pnorm_loss, rk_unroll, save_mlp
from utils.ode_core import Tolerance, interpolate, solve_adaptive
from utils.optim import OptimizerState
from utils.problems import ParametricProblem
from utils.quadrature import cumulative_simpson
from utils.transformers import ReparamSeries, resample_uniform, uniform_grid
from config.settings import *


@dataclass
class TrainReport:
    """Per-epoch trace of one training phase."""
    phase: str
    epochs: List[int] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_val_loss: float = math.inf
    baseline_val_loss: Optional[float] = None
    skipped_batches: int = 0
    skipped_steps: int = 0
    validation_fev: int = 0
    stages: List[dict] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)
    status: str = "running"
    wall_time_s: float = 0.0

    def record(self, epoch: int, train_loss: float, val_loss: float, lr: float) -> None:
        self.epochs.append(epoch)
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        self.lr.append(float(lr))

    def finish(self, state: OptimizerState, started: float, status: str) -> None:
        self.best_epoch = state.best_epoch
        self.best_val_loss = state.best_loss
        self.skipped_steps = state.skipped_steps
        self.diagnostics.extend(state.diagnostics)
        self.status = status
        self.wall_time_s = time.perf_counter() - started

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"epoch": self.epochs, "train_loss": self.train_loss,
                             "val_loss": self.val_loss, "lr": self.lr})

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "status": self.status,
            "epochs_run": len(self.epochs),
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "baseline_val_loss": self.baseline_val_loss,
            "skipped_batches": self.skipped_batches,
            "skipped_steps": self.skipped_steps,
            "validation_fev": self.validation_fev,
            "stages": self.stages,
            "diagnostics": self.diagnostics,
            "wall_time_s": self.wall_time_s,
            "trace": self.to_frame().to_dict(orient="list"),
        }

    def save(self, directory: str) -> Tuple[str, str]:
        """<phase>.json and <phase>.csv (epoch,train_loss,val_loss,lr) under directory."""
        stem = os.path.join(directory, self.phase)
        return write_json(stem + ".json", self.to_dict()), write_csv(stem + ".csv", self.to_frame())


def _check_net(net: Mlp, input_dim: int, output_dim: int, what: str) -> None:
    if net.input_dim != input_dim or net.output_dim != output_dim:
        raise ContractViolation(f"{what} network must map {input_dim} -> {output_dim}, "
                                f"got {net.input_dim} -> {net.output_dim}")


# ---------------------------------------------------------------------------
# Validation metrics
# ---------------------------------------------------------------------------

def node_validation_loss(net: Mlp, problem: ParametricProblem, series_list: Sequence[ReparamSeries],
                         fraction: float = 1.0, tol: float = 1e-4,
                         max_steps: int = VALIDATION_MAX_STEPS) -> Tuple[float, int]:
    """
    Neural-ODE trajectory loss: each validation series is integrated from its
    initial state with the adaptive Dormand-Prince solver over [0, fraction]
    and compared with the reference on its own ts samples.

    Returns:
        (mean squared error over series, right-hand-side evaluations spent).
        The loss is inf when a solve fails.
    """
    errors, fev = [], 0
    for s in series_list:
        f = numpy_field(net, problem, s.mu)
        mask = s.ts <= fraction
        try:
            traj, stats = solve_adaptive(f, s.states[0], 0.0, float(fraction), Tolerance(tol, tol),
                                         max_steps=max_steps)
        except NumericalError as e:
            stats = getattr(e, "stats", None)
            return math.inf, fev + (stats.n_fev if stats is not None else 0)
        fev += stats.n_fev
        prediction = interpolate(traj, s.ts[mask])
        errors.append(float(np.mean((prediction - s.states[mask]) ** 2)))
    return float(np.mean(errors)), fev


@dataclass(eq=False)
class TimemapRollouts:
    """
    Frozen dynamics rollouts on a uniform ts grid, stacked over series.

    states (G, S, N_u), mu_hat (S, N_μ̂), t_hat (G, S) the reference
    time-normalized t interpolated on the grid.
    """
    dts: float
    states: torch.Tensor
    mu_hat: torch.Tensor
    t_hat: torch.Tensor
    tags: List[str]

    def __len__(self) -> int:
        return self.states.shape[1]

    def subset(self, idx) -> "TimemapRollouts":
        idx = torch.as_tensor(idx, dtype=torch.long)
        return TimemapRollouts(self.dts, self.states[:, idx], self.mu_hat[idx], self.t_hat[:, idx],
                               [self.tags[int(i)] for i in idx])


def dynamics_rollouts(dyn_net: Mlp, problem: ParametricProblem, series_list: Sequence[ReparamSeries],
                      dts: float, fraction: float = 1.0,
                      diagnostics: Optional[List[str]] = None) -> TimemapRollouts:
    """
    Fixed-step RK4 rollouts of the frozen dynamics from every series' initial state.

    Series whose rollout leaves the finite range are dropped with a diagnostic.

    Raises:
        TrainingDivergedError: when no rollout stays finite.
    """
    grid = uniform_grid(dts, fraction)
    u0 = as_tensor(np.stack([s.states[0] for s in series_list]))
    mu_hat = as_tensor(np.stack([param_features(problem, s.mu) for s in series_list]))
    mus = np.stack([s.mu for s in series_list])
    with torch.no_grad():
        states = rk_unroll(DynamicsField(dyn_net, problem, mu_hat, mus), u0, dts, grid.size - 1)

    t_hat = np.column_stack([
        np.interp(grid, s.ts, np.asarray(problem.normalizers.time.forward(s.t, s.mu), dtype=float).reshape(-1))
        for s in series_list])
    keep = torch.isfinite(states).all(dim=2).all(dim=0)
    if not bool(keep.all()) and diagnostics is not None:
        dropped = [s.tag for s, k in zip(series_list, keep.tolist()) if not k]
        diagnostics.append(f"Dropped {len(dropped)} non-finite dynamics rollouts: {', '.join(dropped)}")
    if not bool(keep.any()):
        raise TrainingDivergedError("Every dynamics rollout is non-finite; the time map cannot be trained")
    idx = torch.nonzero(keep).reshape(-1)
    return TimemapRollouts(dts, states[:, idx], mu_hat[idx], as_tensor(t_hat)[:, idx],
                           [series_list[int(i)].tag for i in idx])


def time_recovery_loss(net_t: Mlp, rollouts: TimemapRollouts, p: int = 1) -> torch.Tensor:
    """
    p-norm discrepancy between the reference t̂ and the Simpson cumulative
    integral of 10**net_t along the rollouts, both relative to each series'
    final reference t̂.
    """
    G, S, _ = rollouts.states.shape
    x = torch.cat([rollouts.states, rollouts.mu_hat.expand(G, S, -1)], dim=-1)
    rate = torch.pow(10.0, net_t(x)[..., 0])
    t_rec = cumulative_simpson(rate, rollouts.dts)
    scale = rollouts.t_hat[-1]
    return pnorm_loss(t_rec / scale, rollouts.t_hat / scale, p)


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------

class _BadBatches:
    """Counts consecutive non-finite batches and aborts past MAX_BAD_BATCHES."""

    def __init__(self, report: TrainReport):
        self.report = report
        self.consecutive = 0

    def skip(self, epoch: int, what: str) -> None:
        self.consecutive += 1
        self.report.skipped_batches += 1
        self.report.diagnostics.append(f"Epoch {epoch}: skipped batch with non-finite {what}")
        if self.consecutive > MAX_BAD_BATCHES:
            self.report.status = "diverged"
            raise TrainingDivergedError(
                f"{self.report.phase}: {self.consecutive} consecutive non-finite batches", self.report)

    def ok(self) -> None:
        self.consecutive = 0


def _optimizer(net: Mlp, cfg: TrainConfig, lr: Optional[float] = None) -> OptimizerState:
    return OptimizerState(net, cfg.lr if lr is None else lr, weight_decay=cfg.weight_decay,
                          patience=cfg.patience, max_epochs=cfg.max_epochs, stop_patience=cfg.stop_patience)


def _regression(net: Mlp, inputs: np.ndarray, targets: np.ndarray, cfg: TrainConfig,
                validate: Callable[[Mlp], float], report: TrainReport) -> Mlp:
    """Mini-batch p-norm regression with per-epoch validation, plateau schedule and early stopping."""
    started = time.perf_counter()
    state = _optimizer(net, cfg)
    loader = DataLoader(TensorDataset(as_tensor(inputs), as_tensor(targets)), batch_size=cfg.batch_size,
                        shuffle=True, generator=torch.Generator().manual_seed(int(cfg.seed)))
    bad = _BadBatches(report)
    running = True
    while running:
        losses = []
        for x, y in loader:
            loss = pnorm_loss(net(x), y, cfg.p)
            if not bool(torch.isfinite(loss)):
                bad.skip(state.epoch + 1, "loss")
                continue
            bad.ok()
            state.adamw_step(gradient(loss, net))
            losses.append(loss.item())
        val = validate(net)
        report.record(state.epoch + 1, np.mean(losses) if losses else math.nan, val, state.lr)
        running = state.end_epoch(val)
    state.restore_best()
    report.finish(state, started, "completed")
    net.mark_phase(cfg.phase)
    return net


def train_supervised_dynamics(net: Mlp, train_set: TrainingSet, val_series: Sequence[ReparamSeries],
                              problem: ParametricProblem, cfg: TrainConfig) -> Tuple[Mlp, TrainReport]:
    """
    Regress f̂_s on (û, μ̂); validation integrates the network as a neural ODE.

    Raises:
        TrainingDivergedError: repeated non-finite losses (the partial report is attached).
    """
    _check_net(net, train_set.input_dim, train_set.n_state, "Dynamics")
    report = TrainReport(cfg.phase)
    print(f"Training '{cfg.phase}' on {len(train_set)} rows for at most {cfg.max_epochs} epochs")

    def validate(model):
        loss, fev = node_validation_loss(model, problem, val_series, cfg.validation_fraction, cfg.validation_tol)
        report.validation_fev += fev
        return loss

    _regression(net, train_set.inputs, train_set.dynamics_targets, cfg, validate, report)
    return net, report


def train_node_finetune(net: Mlp, train_series: Sequence[ReparamSeries], val_series: Sequence[ReparamSeries],
                        problem: ParametricProblem, cfg: TrainConfig) -> Tuple[Mlp, TrainReport]:
    """
    Fit K-step RK4 rollouts of the network to the resampled references, one
    schedule stage (K, lr) after the other. Every intermediate step of a
    rollout enters the loss. The supervised result is the starting best, so
    the returned network never validates worse than the one passed in.

    Raises:
        ContractViolation: the network did not go through the supervised phase
            (unless cfg.allow_untagged).
        TrainingDivergedError: repeated non-finite rollouts.
    """
    if not net.has_phase("supervised") and not cfg.allow_untagged:
        raise ContractViolation("Unroll fine-tuning needs a network trained by the supervised phase "
                                "(set allow_untagged to override)")
    started = time.perf_counter()
    report = TrainReport(cfg.phase)
    resampled = [resample_uniform(s, cfg.dts) for s in train_series]

    def validate(model):
        loss, fev = node_validation_loss(model, problem, val_series, cfg.validation_fraction, cfg.validation_tol)
        report.validation_fev += fev
        return loss

    state = _optimizer(net, cfg, lr=cfg.unrolls[0][1])
    report.baseline_val_loss = validate(net)
    state.set_baseline(report.baseline_val_loss)
    bad = _BadBatches(report)
    running = True
    for (unroll, lr), epochs in zip(cfg.unrolls, cfg.stage_epochs()):
        if not running:
            break
        print(f"Training '{cfg.phase}' stage K={unroll}, lr={lr:g} for {epochs} epochs")
        state.begin_stage(lr)
        report.stages.append({"unroll": unroll, "lr": lr, "first_epoch": state.epoch + 1})
        for _ in range(epochs):
            losses = []
            for batch in build_unroll_batches(resampled, problem, unroll, cfg.dts, cfg.batch_size,
                                              seed=cfg.seed + state.epoch):
                u0, mu_hat, target = batch.tensors()
                rollout = rk_unroll(DynamicsField(net, problem, mu_hat, batch.mu), u0, cfg.dts, unroll)
                if not bool(torch.isfinite(rollout).all()):
                    bad.skip(state.epoch + 1, "rollout")
                    continue
                bad.ok()
                loss = pnorm_loss(rollout[1:], target, cfg.p)
                state.adamw_step(gradient(loss, net))
                losses.append(loss.item())
            val = validate(net)
            report.record(state.epoch + 1, np.mean(losses) if losses else math.nan, val, state.lr)
            running = state.end_epoch(val)
            if not running:
                break
        report.stages[-1]["last_epoch"] = state.epoch
    state.restore_best()
    report.finish(state, started, "completed")
    net.mark_phase(cfg.phase)
    return net, report


def train_timemap_supervised(net_t: Mlp, train_set: TrainingSet, val_series: Sequence[ReparamSeries],
                             dyn_net: Mlp, problem: ParametricProblem,
                             cfg: TrainConfig) -> Tuple[Mlp, TrainReport]:
    """
    Regress log10 ṫ on (û, μ̂). Validation recovers t on the validation
    series by integrating the frozen dynamics and the time map together.
    """
    _check_net(net_t, train_set.input_dim, 1, "Time-map")
    report = TrainReport(cfg.phase)
    rollouts = dynamics_rollouts(dyn_net, problem, val_series, cfg.dts, cfg.validation_fraction,
                                 report.diagnostics)
    print(f"Training '{cfg.phase}' on {len(train_set)} rows for at most {cfg.max_epochs} epochs")

    def validate(model):
        with torch.no_grad():
            return float(time_recovery_loss(model, rollouts, p=1))

    _regression(net_t, train_set.inputs, train_set.time_targets, cfg, validate, report)
    return net_t, report


def train_timemap_finetune(net_t: Mlp, dyn_net: Mlp, train_series: Sequence[ReparamSeries],
                           val_series: Sequence[ReparamSeries], problem: ParametricProblem,
                           cfg: TrainConfig) -> Tuple[Mlp, TrainReport]:
    """
    Minimize the p-norm (p=1 by default) between the reference t̂ and the
    Simpson cumulative integral of the time map along rollouts of the frozen
    dynamics network. Gradients flow through the quadrature; batches are
    groups of series.
    """
    started = time.perf_counter()
    report = TrainReport(cfg.phase)
    train_rollouts = dynamics_rollouts(dyn_net, problem, train_series, cfg.dts, 1.0, report.diagnostics)
    val_rollouts = dynamics_rollouts(dyn_net, problem, val_series, cfg.dts, cfg.validation_fraction,
                                   report.diagnostics)

    def validate(model):
        with torch.no_grad():
            return float(time_recovery_loss(model, val_rollouts, p=1))

    state = _optimizer(net_t, cfg)
    report.baseline_val_loss = validate(net_t)
    state.set_baseline(report.baseline_val_loss)
    gen = torch.Generator().manual_seed(int(cfg.seed))
    bad = _BadBatches(report)
    print(f"Training '{cfg.phase}' on {len(train_rollouts)} rollouts for at most {cfg.max_epochs} epochs")
    running = True
    while running:
        losses = []
        order = torch.randperm(len(train_rollouts), generator=gen)
        for lo in range(0, len(order), cfg.batch_size):
            loss = time_recovery_loss(net_t, train_rollouts.subset(order[lo:lo + cfg.batch_size]), cfg.p)
            if not bool(torch.isfinite(loss)):
                bad.skip(state.epoch + 1, "loss")
                continue
            bad.ok()
            state.adamw_step(gradient(loss, net_t))
            losses.append(loss.item())
        val = validate(net_t)
        report.record(state.epoch + 1, np.mean(losses) if losses else math.nan, val, state.lr)
        running = state.end_epoch(val)
    state.restore_best()
    report.finish(state, started, "completed")
    net_t.mark_phase(cfg.phase)
    return net_t, report


# ---------------------------------------------------------------------------
# Random search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    activations: Tuple[str, ...] = ACTIVATIONS
    depth: Tuple[int, int] = SEARCH_DEPTH
    width: Tuple[int, int] = SEARCH_WIDTH
    lr: Tuple[float, float] = SEARCH_LR

    def __post_init__(self):
        if not (MLP_DEPTH[0] <= self.depth[0] <= self.depth[1] <= MLP_DEPTH[1]
                and MLP_WIDTH[0] <= self.width[0] <= self.width[1] <= MLP_WIDTH[1]):
            raise ContractViolation(f"Search ranges depth={self.depth}, width={self.width} leave the network "
                                    f"limits depth {MLP_DEPTH}, width {MLP_WIDTH}")
        if not 0 < self.lr[0] <= self.lr[1]:
            raise ContractViolation(f"Search lr range must be positive and ordered, got {self.lr}")


def sample_search_space(space: SearchSpace, budget: int, seed: int) -> List[Dict]:
    """`budget` trial configurations drawn by one generator seeded with `seed`; lr is log-uniform."""
    if budget < 1:
        raise ContractViolation(f"Search budget must be at least 1, got {budget}")
    rng = np.random.default_rng(seed)
    log_lo, log_hi = math.log10(space.lr[0]), math.log10(space.lr[1])
    trials = []
    for i in range(budget):
        trials.append({
            "trial": i,
            "activation": space.activations[int(rng.integers(len(space.activations)))],
            "depth": int(rng.integers(space.depth[0], space.depth[1] + 1)),
            "width": int(rng.integers(space.width[0], space.width[1] + 1)),
            "lr": float(10.0 ** rng.uniform(log_lo, log_hi)),
            "seed": int(rng.integers(0, 2 ** 31 - 1)),
        })
    return trials


def random_search(space: SearchSpace, budget: int, seed: int, objective: Callable[[Dict], float],
                  workers: int = 1) -> List[Dict]:
    """
    Train every sampled configuration with `objective` (returning the best
    validation loss) and rank by that loss, failures last.
    """
    trials = sample_search_space(space, budget, seed)

    def run(trial):
        try:
            return {**trial, "val_loss": float(objective(trial)), "error": None}
        except NumericalError as e:
            return {**trial, "val_loss": math.inf, "error": f"{type(e).__name__}: {e}"}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, trials))
    else:
        results = [run(t) for t in trials]

    ranked = sorted(results, key=lambda r: (not math.isfinite(r["val_loss"]), r["val_loss"], r["trial"]))
    for rank, r in enumerate(ranked, start=1):
        r["rank"] = rank
    return ranked


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

class Trainer:
    def __init__(self, name: str, config: ExperimentConfig, overwrite: bool = False):
        """
        Initialize the Trainer.

        Args:
            name (str): Step name, also the report subfolder
            config (ExperimentConfig): Validated experiment
            overwrite (bool): Replace existing models
        """
        self.S = get_settings()

        if name is None:
            raise ValueError("Step name must be provided. In this way you can identify the step in the logs")

        self.name = name
        self.config = config
        self.overwrite = overwrite
        self.problem = config.get_problem()
        self.store = DatasetStore(config.dataset_dir)
        self.model_dir = config.model_dir
        self.report_dir = os.path.join(self.model_dir, "training")
        self.reporter = Reporter(config.report_dir, name)
        self._data = None

    def _guard(self, filename: str) -> None:
        path = os.path.join(self.model_dir, filename)
        if os.path.exists(path) and not self.overwrite:
            raise ConfigError(f"Model already exists at {path}; pass --overwrite to retrain")

    def data(self):
        """(train series, validation series, supervised train set, supervised validation set), loaded once."""
        if self._data is None:
            train = self.store.load_series("train", self.problem)
            validation = self.store.load_series("validation", self.problem)
            sets = build_supervised(train, validation, self.problem, self.config.dataset.subsample_target,
                                    seed=self.config.seed)
            print(f"Loaded {len(train)} train and {len(validation)} validation series "
                  f"({len(sets[0])} / {len(sets[1])} supervised rows)")
            self._data = (train, validation) + sets
        return self._data

    def new_net(self, net_cfg: NetConfig, output_dim: int) -> Mlp:
        input_dim = self.data()[2].input_dim
        return init_parameters(input_dim, output_dim, net_cfg.depth, net_cfg.width, net_cfg.activation,
                               seed=net_cfg.seed)

    def _save_report(self, report: TrainReport) -> None:
        json_path, _ = report.save(self.report_dir)
        print(f"Training report written to {json_path}")

    def _run_phase(self, func, *args) -> Mlp:
        try:
            net, report = func(*args)
        except TrainingDivergedError as e:
            if e.report is not None:
                self._save_report(e.report)
            self.reporter.write_report(f"{self.name}_diverged", [str(e)] + list(getattr(e.report, "diagnostics", [])))
            raise
        self._save_report(report)
        return net

    def train_dynamics(self) -> Mlp:
        self._guard(DYNAMICS_FILE)
        train, validation, train_set, _ = self.data()
        cfg = self.config.dynamics
        net = self.new_net(cfg.net, self.problem.n_state)
        net.normalizer_refs = {"input": ["state", "param"], "output": "dynamics"}
        net = self._run_phase(train_supervised_dynamics, net, train_set, validation, self.problem, cfg.supervised)
        net = self._run_phase(train_node_finetune, net, train, validation, self.problem, cfg.finetune)
        self.S.create_directories(self.model_dir)
        save_mlp(net, os.path.join(self.model_dir, DYNAMICS_FILE))
        return net

    def train_timemap(self, dyn_net: Mlp) -> Mlp:
        self._guard(TIMEMAP_FILE)
        train, validation, train_set, _ = self.data()
        cfg = self.config.timemap
        net_t = self.new_net(cfg.net, 1)
        net_t.normalizer_refs = {"input": ["state", "param"], "output": "log10-time-rate"}
        net_t = self._run_phase(train_timemap_supervised, net_t, train_set, validation, dyn_net, self.problem,
                                cfg.supervised)
        net_t = self._run_phase(train_timemap_finetune, net_t, dyn_net, train, validation, self.problem,
                                cfg.finetune)
        self.S.create_directories(self.model_dir)
        save_mlp(net_t, os.path.join(self.model_dir, TIMEMAP_FILE))
        return net_t

    def run(self, stage: str = "all") -> Optional[RomModel]:
        """
        Train the requested networks. A timemap-only run reads the saved dynamics network.

        Returns:
            The RomModel when both networks are available, else None.
        """
        if stage not in ("dynamics", "timemap", "all"):
            raise ConfigError(f"Unknown training stage '{stage}', expected dynamics, timemap or all")
        if stage in ("dynamics", "all"):
            dyn_net = self.train_dynamics()
        else:
            dyn_net = load_mlp(os.path.join(self.model_dir, DYNAMICS_FILE))

        if stage == "dynamics":
            timemap_path = os.path.join(self.model_dir, TIMEMAP_FILE)
            if not os.path.exists(timemap_path):
                return None
            net_t = load_mlp(timemap_path)
        else:
            net_t = self.train_timemap(dyn_net)

        rom = RomModel(self.problem, dyn_net, net_t, self.problem.normalizers,
                       ts_horizon=self.config.inference.ts_horizon)
        rom.save(self.model_dir)
        print(f"ROM written to {self.model_dir}")
        return rom

    def search(self, budget: int, space: SearchSpace = SearchSpace()) -> List[Dict]:
        """Random search over the dynamics network, each trial running the supervised phase."""
        train, validation, train_set, _ = self.data()
        base = self.config.dynamics.supervised

        def objective(trial):
            net = init_parameters(train_set.input_dim, self.problem.n_state, trial["depth"], trial["width"],
                                  trial["activation"], seed=trial["seed"])
            cfg = TrainConfig(**{**base.to_dict(), "lr": trial["lr"], "seed": trial["seed"],
                                 "max_epochs": self.config.search.max_epochs})
            _, report = train_supervised_dynamics(net, train_set, validation, self.problem, cfg)
            return report.best_val_loss

        ranked = random_search(space, budget, self.config.seed, objective, workers=self.config.workers)
        path = write_json(os.path.join(self.config.report_dir, "search.json"),
                          {"problem": self.problem.name, "seed": self.config.seed, "budget": budget,
                           "trials": ranked})
        print(f"Search ranking written to {path}")
        return ranked
