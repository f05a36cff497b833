"""
Experiment files: one JSON (or YAML) mapping per run.

    {
      "problem": "vdp",
      "seed": 0,
      "workers": 1,
      "dataset":   {"reference_tol": ..., "grid": {"0": {"kind": "log", "lo": 100, "hi": 1000, "n": 11}},
                    "filter": {"window": 7, "order": 2}, "subsample_target": 2000,
                    "max_train_series": null, "max_validation_series": null},
      "training":  {"dynamics": {"net": {...}, "supervised": {...}, "finetune": {...}},
                    "timemap":  {"net": {...}, "supervised": {...}, "finetune": {...}}},
      "inference": {"solver": "fixed", "dts": 0.025, "tol": 2e-4, "ts_horizon": 6.25, "output_points": 1001},
      "benchmark": {"radau_tol": 1e-2, "mu": [[1000.0]]},
      "search":    {"budget": 8, "max_epochs": 50},
      "paths":     {"workdir": "workdir", "datasets": "datasets", "models": "models", "reports": "reports"}
    }

Keys left out fall back to config/problems_registry.yaml, then to
config/constants.py. Unknown keys are a ConfigError.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from config.constants import (
    BATCH_SIZE, FINETUNE_LR_RATIO, GRID_ROUNDING, MAX_EPOCHS_FINETUNE, MAX_EPOCHS_SUPERVISED,
    MAX_UNROLL_FRACTION, MLP_DEPTH, MLP_WIDTH, PLATEAU_PATIENCE, WEIGHT_DECAY,
)
from config.settings import _resolve_under, get_settings
from utils.errors import ConfigError, ContractViolation
from utils.import_configs import get_problem_registry, load_experiment_file
from utils.neural import ACTIVATIONS_DICT
from utils.ode_core import Tolerance
from utils.problems import Axis, ParametricProblem, get_problem

PHASES = ("supervised", "node-finetune", "timemap-supervised", "timemap-finetune")
SOLVERS = ("fixed", "adaptive")
ACCURACY_METRICS = ("l2", "mse")

PROBLEMS_REGISTRY = "config/problems_registry.yaml"
TRANSFORM_REGISTRY = "config/transform_registry.yaml"
VALIDATION_REGISTRY = "config/validation_registry.yaml"


def _take(section, allowed: Sequence[str], where: str) -> dict:
    """The section as a dict, rejecting keys outside `allowed`."""
    if section is None:
        return {}
    if not isinstance(section, dict):
        raise ConfigError(f"'{where}' must be a mapping, got {type(section).__name__}")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown key(s) in '{where}': {', '.join(map(str, unknown))}")
    return section


def _tolerance(value, where: str) -> Tolerance:
    try:
        return Tolerance.parse(value)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid tolerance in '{where}': {e}")


def _optional_int(value, where: str) -> Optional[int]:
    if value is None:
        return None
    if int(value) < 1:
        raise ConfigError(f"'{where}' must be a positive integer or null, got {value!r}")
    return int(value)


@dataclass
class NetConfig:
    depth: int = 4
    width: int = 64
    activation: str = "gelu"
    seed: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS_DICT:
            raise ConfigError(f"Unknown activation '{self.activation}', expected one of {list(ACTIVATIONS_DICT)}")
        if not (MLP_DEPTH[0] <= self.depth <= MLP_DEPTH[1] and MLP_WIDTH[0] <= self.width <= MLP_WIDTH[1]):
            raise ConfigError(f"Network depth must be in {list(MLP_DEPTH)} and width in {list(MLP_WIDTH)}, "
                              f"got depth={self.depth}, width={self.width}")


@dataclass
class TrainConfig:
    """
    Settings of one training phase.

    `unrolls` is the fine-tune schedule as (K, lr) pairs; K is non-decreasing
    and K * dts stays within half of the ts horizon. The epoch budget is split
    evenly across the stages.
    """
    phase: str
    max_epochs: int
    batch_size: int = BATCH_SIZE
    lr: float = 1e-3
    unrolls: List[Tuple[int, float]] = field(default_factory=list)
    dts: float = 0.025
    p: int = 2
    seed: int = 0
    weight_decay: float = WEIGHT_DECAY
    patience: int = PLATEAU_PATIENCE
    stop_patience: Optional[int] = None
    validation_fraction: float = 1.0
    validation_tol: float = 1e-4
    allow_untagged: bool = False

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ConfigError(f"Unknown training phase '{self.phase}', expected one of {PHASES}")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"{self.phase}: max_epochs and batch_size must be at least 1")
        if not self.lr > 0 or not self.dts > 0 or not self.validation_tol > 0:
            raise ConfigError(f"{self.phase}: lr, dts and validation_tol must be positive")
        if self.p not in (1, 2, 4):
            raise ConfigError(f"{self.phase}: p must be 1, 2 or 4, got {self.p}")
        if not 0 < self.validation_fraction <= 1:
            raise ConfigError(f"{self.phase}: validation_fraction must be in (0, 1], got {self.validation_fraction}")
        self.unrolls = [(int(k), float(lr)) for k, lr in self.unrolls]
        ks = [k for k, _ in self.unrolls]
        if any(k < 1 for k in ks) or any(not lr > 0 for _, lr in self.unrolls):
            raise ConfigError(f"{self.phase}: unroll lengths and learning rates must be positive")
        if any(b < a for a, b in zip(ks, ks[1:])):
            raise ConfigError(f"{self.phase}: unroll lengths must be non-decreasing, got {ks}")
        if ks and max(ks) * self.dts > MAX_UNROLL_FRACTION + GRID_ROUNDING:
            raise ConfigError(f"{self.phase}: unroll {max(ks)} x dts {self.dts} exceeds {MAX_UNROLL_FRACTION} of the horizon")
        if self.phase == "node-finetune" and not self.unrolls:
            raise ConfigError("node-finetune needs a non-empty unroll schedule")
        if self.unrolls and self.max_epochs < len(self.unrolls):
            raise ConfigError(f"{self.phase}: {self.max_epochs} epochs cannot cover {len(self.unrolls)} stages")

    def stage_epochs(self) -> List[int]:
        """Epoch budget per unroll stage; the last stage takes the remainder."""
        n = max(1, len(self.unrolls))
        base = self.max_epochs // n
        return [base] * (n - 1) + [self.max_epochs - base * (n - 1)]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NetTraining:
    net: NetConfig
    supervised: TrainConfig
    finetune: TrainConfig


@dataclass
class DatasetConfig:
    reference_tol: Tolerance
    grid: Dict[int, Axis]
    filter: Optional[Dict[str, int]]
    subsample_target: int
    max_train_series: Optional[int]
    max_validation_series: Optional[int]
    seed: int


@dataclass
class InferenceConfig:
    solver: str
    dts: float
    tol: float
    ts_horizon: float
    output_points: int

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ConfigError(f"Inference solver must be one of {SOLVERS}, got '{self.solver}'")
        if not (self.dts > 0 and self.tol > 0 and self.ts_horizon > 0):
            raise ConfigError("Inference dts, tol and ts_horizon must be positive")
        if self.output_points < 3:
            raise ConfigError("Inference needs at least 3 output points")


@dataclass
class BenchmarkConfig:
    radau_tol: Tolerance
    mu: Optional[List[List[float]]]
    accuracy: str
    l2_components: Optional[List[int]]
    d_peak_component: Optional[int]


@dataclass
class SearchConfig:
    budget: int
    max_epochs: int


@dataclass
class PathsConfig:
    workdir: str
    datasets: str
    models: str
    reports: str


@dataclass
class ExperimentConfig:
    problem: str
    seed: int
    workers: int
    dataset: DatasetConfig
    dynamics: NetTraining
    timemap: NetTraining
    inference: InferenceConfig
    benchmark: BenchmarkConfig
    search: SearchConfig
    paths: PathsConfig
    source: Optional[str] = None

    def get_problem(self) -> ParametricProblem:
        return get_problem(self.problem)

    @property
    def dataset_dir(self) -> str:
        return _resolve_under(self.paths.datasets, self.problem)

    @property
    def model_dir(self) -> str:
        return _resolve_under(self.paths.models, self.problem)

    @property
    def report_dir(self) -> str:
        return _resolve_under(self.paths.reports, self.problem)


def _train_config(raw, where: str, phase: str, defaults: dict) -> TrainConfig:
    allowed = [f for f in TrainConfig.__dataclass_fields__ if f != "phase"]
    raw = _take(raw, allowed, where)
    values = dict(defaults)
    values.update(raw)
    unrolls = values.get("unrolls") or []
    pairs = []
    for i, item in enumerate(unrolls):
        # a bare K takes a learning rate halved at every stage
        if isinstance(item, (list, tuple)):
            if len(item) != 2:
                raise ConfigError(f"'{where}.unrolls' entries must be K or [K, lr], got {item!r}")
            pairs.append((int(item[0]), float(item[1])))
        else:
            pairs.append((int(item), float(values["lr"]) * 0.5 ** i))
    values["unrolls"] = pairs
    try:
        return TrainConfig(phase=phase, **values)
    except TypeError as e:
        raise ConfigError(f"Invalid '{where}': {e}")


def _net_training(raw, where: str, kind: str, seed: int, registry: dict, inference_tol: float) -> NetTraining:
    raw = _take(raw, ("net", "supervised", "finetune"), where)
    net_raw = _take(raw.get("net"), NetConfig.__dataclass_fields__, f"{where}.net")
    net_defaults = {"depth": 4, "width": 64} if kind == "dynamics" else {"depth": 3, "width": 32}
    net = NetConfig(**{**net_defaults, "seed": seed, **net_raw})

    supervised_phase, finetune_phase = (("supervised", "node-finetune") if kind == "dynamics"
                                        else ("timemap-supervised", "timemap-finetune"))
    common = {
        "seed": seed,
        "validation_fraction": float(registry.get("validation_fraction", 1.0)),
        "validation_tol": inference_tol,
    }
    supervised_defaults = {**common, "max_epochs": MAX_EPOCHS_SUPERVISED, "lr": 1e-3, "p": 2}
    if kind == "timemap":
        # the time-recovery validation runs on rollouts of this spacing
        supervised_defaults["dts"] = float(registry.get("timemap_dts", 0.0025))
    supervised = _train_config(raw.get("supervised"), f"{where}.supervised", supervised_phase, supervised_defaults)

    ft_raw = raw.get("finetune") or {}
    ft_lr = float(ft_raw.get("lr", supervised.lr * FINETUNE_LR_RATIO)) if isinstance(ft_raw, dict) else None
    if kind == "dynamics":
        ft_defaults = {**common, "max_epochs": MAX_EPOCHS_FINETUNE, "lr": ft_lr, "p": 2,
                       "dts": float(registry.get("dts", 0.025)), "unrolls": list(registry.get("unrolls", []))}
    else:
        ft_defaults = {**common, "max_epochs": MAX_EPOCHS_SUPERVISED, "lr": ft_lr, "p": 1,
                       "dts": float(registry.get("timemap_dts", 0.0025))}
    finetune = _train_config(ft_raw, f"{where}.finetune", finetune_phase, ft_defaults)
    return NetTraining(net=net, supervised=supervised, finetune=finetune)


def _grid_override(raw, problem: ParametricProblem) -> Dict[int, Axis]:
    out = {}
    for key, axis in (raw or {}).items():
        try:
            index = int(key)
        except (TypeError, ValueError):
            raise ConfigError(f"Grid override keys are component indices, got '{key}'")
        if index not in problem.varying():
            raise ConfigError(f"{problem.name}: component {index} is not a varying parameter "
                              f"(varying: {problem.varying()})")
        _take(axis, ("kind", "lo", "hi", "n"), f"dataset.grid.{key}")
        try:
            out[index] = Axis.from_dict(axis)
        except (KeyError, ContractViolation) as e:
            raise ConfigError(f"Invalid axis for component {index}: {e}")
    return out


def build_experiment(raw: dict, seed: Optional[int] = None, workers: Optional[int] = None,
                     source: Optional[str] = None) -> ExperimentConfig:
    """
    Validate an experiment mapping and fill the defaults.

    Args:
        seed, workers: command-line overrides.

    Raises:
        ConfigError: unknown keys, invalid values or an unknown problem id.
    """
    S = get_settings()
    raw = _take(raw, ("problem", "seed", "workers", "dataset", "training", "inference",
                      "benchmark", "search", "paths"), "experiment")
    if "problem" not in raw:
        raise ConfigError("Experiment needs a 'problem' id")
    problem = get_problem(str(raw["problem"]))
    registry = get_problem_registry(problem.name, PROBLEMS_REGISTRY)

    seed = int(raw.get("seed", 0)) if seed is None else int(seed)
    workers = int(raw.get("workers", S.DEFAULT_WORKERS)) if workers is None else int(workers)
    if workers < 1:
        raise ConfigError(f"workers must be at least 1, got {workers}")

    ds = _take(raw.get("dataset"), ("reference_tol", "grid", "filter", "subsample_target",
                                    "max_train_series", "max_validation_series"), "dataset")
    flt = ds.get("filter")
    if flt is not None:
        flt = {k: int(v) for k, v in _take(flt, ("window", "order"), "dataset.filter").items()}
    subsample = int(ds.get("subsample_target", registry.get("subsample_target", 1000)))
    if subsample < 1:
        raise ConfigError(f"dataset.subsample_target must be positive, got {subsample}")
    dataset = DatasetConfig(
        reference_tol=_tolerance(ds.get("reference_tol", registry["reference_tol"]), "dataset.reference_tol"),
        grid=_grid_override(ds.get("grid"), problem),
        filter=flt,
        subsample_target=subsample,
        max_train_series=_optional_int(ds.get("max_train_series"), "dataset.max_train_series"),
        max_validation_series=_optional_int(ds.get("max_validation_series"), "dataset.max_validation_series"),
        seed=seed,
    )

    inf = _take(raw.get("inference"), InferenceConfig.__dataclass_fields__, "inference")
    inference = InferenceConfig(**{**registry["inference"], **inf})
    inference.dts, inference.tol = float(inference.dts), float(inference.tol)
    inference.ts_horizon, inference.output_points = float(inference.ts_horizon), int(inference.output_points)

    training = _take(raw.get("training"), ("dynamics", "timemap"), "training")
    dynamics = _net_training(training.get("dynamics"), "training.dynamics", "dynamics", seed, registry, inference.tol)
    timemap = _net_training(training.get("timemap"), "training.timemap", "timemap", seed, registry, inference.tol)

    bm = _take(raw.get("benchmark"), ("radau_tol", "mu", "accuracy", "l2_components", "d_peak_component"),
               "benchmark")
    metrics = registry.get("metrics", {})
    mu = bm.get("mu")
    if mu is not None:
        mu = [[float(v) for v in (m if isinstance(m, (list, tuple)) else [m])] for m in mu]
        for m in mu:
            if len(m) != problem.n_param:
                raise ConfigError(f"benchmark.mu entries need {problem.n_param} values, got {len(m)}")
    benchmark = BenchmarkConfig(
        radau_tol=_tolerance(bm.get("radau_tol", registry["benchmark_tol"]), "benchmark.radau_tol"),
        mu=mu,
        accuracy=str(bm.get("accuracy", metrics.get("accuracy", "l2"))),
        l2_components=bm.get("l2_components", metrics.get("l2_components")),
        d_peak_component=bm.get("d_peak_component", metrics.get("d_peak_component")),
    )
    if benchmark.accuracy not in ACCURACY_METRICS:
        raise ConfigError(f"benchmark.accuracy must be one of {ACCURACY_METRICS}, got '{benchmark.accuracy}'")

    sr = _take(raw.get("search"), ("budget", "max_epochs"), "search")
    search = SearchConfig(budget=int(sr.get("budget", 8)), max_epochs=int(sr.get("max_epochs", 50)))
    if search.budget < 1 or search.max_epochs < 1:
        raise ConfigError("search.budget and search.max_epochs must be at least 1")

    pt = _take(raw.get("paths"), ("workdir", "datasets", "models", "reports"), "paths")
    workdir = S.workdir(pt.get("workdir"))
    paths = PathsConfig(
        workdir=workdir,
        datasets=_resolve_under(workdir, pt.get("datasets"), S.DATASETS),
        models=_resolve_under(workdir, pt.get("models"), S.MODELS),
        reports=_resolve_under(workdir, pt.get("reports"), S.REPORTS),
    )

    return ExperimentConfig(problem=problem.name, seed=seed, workers=workers, dataset=dataset,
                            dynamics=dynamics, timemap=timemap, inference=inference,
                            benchmark=benchmark, search=search, paths=paths, source=source)


def load_experiment(file_path: str, seed: Optional[int] = None, workers: Optional[int] = None) -> ExperimentConfig:
    """Read and validate an experiment file."""
    return build_experiment(load_experiment_file(file_path), seed=seed, workers=workers, source=file_path)


def default_experiment(problem: str, seed: Optional[int] = None, workers: Optional[int] = None) -> ExperimentConfig:
    """Registry defaults for a problem, as used by one-off commands without a config file."""
    return build_experiment({"problem": problem}, seed=seed, workers=workers)

