import os

import pytest

from config.constants import FINETUNE_LR_RATIO, MAX_EPOCHS_SUPERVISED
from config.experiment import TrainConfig, build_experiment, default_experiment, load_experiment
from config.settings import PROJECT_ROOT
from utils.errors import ConfigError, UnknownProblemError
from utils.ode_core import Tolerance

EXPERIMENTS = os.path.join(PROJECT_ROOT, "config", "experiments")


@pytest.mark.parametrize("name", ["vdp.json", "vdp_desk.json", "rober.json"])
def test_shipped_experiments_validate(name):
    config = load_experiment(os.path.join(EXPERIMENTS, name))
    assert config.source.endswith(name)
    assert config.dynamics.finetune.unrolls


def test_registry_defaults_fill_a_bare_experiment():
    config = build_experiment({"problem": "rober"})
    assert config.dataset.reference_tol == Tolerance(1e-14, 1e-10)
    assert config.benchmark.radau_tol == Tolerance(1e-7, 1e-4)
    assert config.benchmark.accuracy == "mse"
    assert config.inference.solver == "adaptive"
    assert config.dynamics.supervised.max_epochs == MAX_EPOCHS_SUPERVISED
    assert config.dynamics.finetune.lr == pytest.approx(1e-3 * FINETUNE_LR_RATIO)
    assert config.timemap.finetune.p == 1
    assert config.timemap.supervised.dts == 0.0025
    assert config.dynamics.supervised.validation_tol == config.inference.tol


def test_bare_unroll_lengths_halve_the_learning_rate():
    config = build_experiment({"problem": "vdp", "training": {"dynamics": {
        "finetune": {"lr": 1e-4, "dts": 0.00625, "unrolls": [20, 40, 80]}}}})
    assert config.dynamics.finetune.unrolls == [(20, 1e-4), (40, 5e-5), (80, 2.5e-5)]


def test_explicit_unroll_pairs():
    config = load_experiment(os.path.join(EXPERIMENTS, "rober.json"))
    assert config.dynamics.finetune.unrolls == [(20, 1e-5), (40, 5e-6), (80, 2.5e-6)]


def test_paths_follow_the_workdir_override(tmp_path):
    config = build_experiment({"problem": "vdp", "paths": {"workdir": "elsewhere"}})
    workdir = str(tmp_path / "workdir")
    assert config.dataset_dir == os.path.join(workdir, "datasets", "vdp")
    assert config.model_dir == os.path.join(workdir, "models", "vdp")
    assert config.report_dir == os.path.join(workdir, "reports", "vdp")


def test_command_line_overrides():
    config = build_experiment({"problem": "vdp", "seed": 1, "workers": 3}, seed=9, workers=2)
    assert config.seed == 9 and config.workers == 2
    assert config.dynamics.net.seed == 9 and config.dataset.seed == 9


def test_grid_override():
    config = build_experiment({"problem": "vdp",
                               "dataset": {"grid": {"0": {"kind": "log", "lo": 100, "hi": 1000, "n": 11}}}})
    assert config.dataset.grid[0].n == 11


@pytest.mark.parametrize("raw", [
    {"problem": "vdp", "colour": "blue"},
    {"problem": "vdp", "dataset": {"subsample": 10}},
    {"problem": "vdp", "workers": 0},
    {"problem": "vdp", "dataset": {"subsample_target": 0}},
    {"problem": "rober", "dataset": {"grid": {"2": {"kind": "log", "lo": 1, "hi": 10, "n": 3}}}},
    {"problem": "vdp", "dataset": {"grid": {"0": {"kind": "log", "lo": 0, "hi": 10, "n": 3}}}},
    {"problem": "vdp", "dataset": {"reference_tol": {"atol": -1.0, "rtol": 1e-6}}},
    {"problem": "vdp", "inference": {"solver": "implicit"}},
    {"problem": "vdp", "benchmark": {"mu": [[1.0, 2.0]]}},
    {"problem": "vdp", "benchmark": {"accuracy": "rmse"}},
    {"problem": "vdp", "training": {"dynamics": {"net": {"activation": "tanh-ish"}}}},
    {"problem": "vdp", "training": {"dynamics": {"net": {"depth": 2}}}},
    {"problem": "vdp", "training": {"timemap": {"net": {"width": 101}}}},
    {"problem": "vdp", "training": {"dynamics": {"finetune": {"unrolls": [40, 20]}}}},
    {"problem": "vdp", "training": {"dynamics": {"finetune": {"dts": 0.025, "unrolls": [40]}}}},
    {"problem": "vdp", "training": {"dynamics": {"finetune": {"unrolls": []}}}},
    {"problem": "vdp", "training": {"timemap": {"finetune": {"p": 3}}}},
    {"problem": "vdp", "search": {"budget": 0}},
    {},
])
def test_invalid_experiments(raw):
    with pytest.raises(ConfigError):
        build_experiment(raw)


def test_unknown_problem_lists_the_valid_ids():
    with pytest.raises(UnknownProblemError) as e:
        build_experiment({"problem": "brusselator"})
    assert "vdp" in str(e.value)


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment(str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2, 3]")
    with pytest.raises(ConfigError):
        load_experiment(str(bad))


def test_stage_epochs_split_the_budget():
    config = TrainConfig(phase="node-finetune", max_epochs=61, dts=0.00625, unrolls=[(20, 1e-4), (40, 5e-5)])
    assert config.stage_epochs() == [30, 31]
    assert TrainConfig(phase="supervised", max_epochs=7).stage_epochs() == [7]
    with pytest.raises(ConfigError):
        TrainConfig(phase="node-finetune", max_epochs=1, dts=0.00625, unrolls=[(20, 1e-4), (40, 5e-5)])


def test_default_experiment_takes_registry_values():
    config = default_experiment("rober", seed=4, workers=2)
    assert (config.problem, config.seed, config.workers) == ("rober", 4, 2)
    assert config.inference.solver == build_experiment({"problem": "rober"}).inference.solver
