import json
import math
import os

import numpy as np
import pytest

from config.experiment import build_experiment
from engine.data_generator import (
    DataGenerator, build_supervised, build_unroll_batches, generate_reference,
    select_series, solve_references,
)
from engine.data_handler import DatasetStore
from tests.conftest import decay_series
from utils.errors import ConfigError, ContractViolation, MissingArtifactError
from utils.ode_core import Tolerance
from utils.problems import VDP


def _small_vdp(**dataset):
    raw = {
        "problem": "vdp",
        "dataset": {"reference_tol": 1e-6, "grid": {"0": {"kind": "log", "lo": 100, "hi": 120, "n": 2}}, **dataset},
    }
    return build_experiment(raw, workers=1)


def test_generate_reference_covers_the_horizon(decay_problem):
    traj, stats = generate_reference(decay_problem, [1.0], Tolerance(1e-10, 1e-10))
    assert traj.times[0] == 0.0 and traj.times[-1] == 1.0
    assert abs(traj.states[-1, 0] - math.exp(-1.0)) <= 1e-8
    assert stats.n_fev > 0 and stats.n_lu > 0


def test_failed_solves_are_returned_not_raised():
    out = solve_references(VDP, [np.array([1.0, 2.0])], Tolerance(1e-6, 1e-6))
    traj, stats, error = out[0]
    assert traj is None and stats is None
    assert error.startswith("ContractViolation")


def test_select_series_is_seeded_and_sorted():
    a = select_series(50, 10, seed=3)
    assert a.tolist() == sorted(a.tolist()) and a.size == 10
    assert a.tolist() == select_series(50, 10, seed=3).tolist()
    assert select_series(5, None, seed=0).tolist() == [0, 1, 2, 3, 4]
    assert select_series(5, 9, seed=0).size == 5


def test_build_supervised_rows(decay_problem, decay_series_set):
    train_series, validation_series = decay_series_set
    train, validation = build_supervised(train_series, validation_series, decay_problem, subsample_target=30, seed=1)
    assert len(train) == 90 and len(validation) == 60
    assert train.input_dim == 2
    np.testing.assert_allclose(train.dynamics_targets[:, 0], -train.inputs[:, 1] * train.inputs[:, 0])
    assert set(np.round(train.inputs[:, 1], 12)) == {0.5, 1.0, 1.5}
    np.testing.assert_array_equal(train.time_targets, 0.0)

    again, _ = build_supervised(train_series, validation_series, decay_problem, subsample_target=30, seed=1)
    np.testing.assert_array_equal(again.inputs, train.inputs)


def test_build_supervised_takes_whole_short_series(decay_problem, decay_series_set):
    train_series, validation_series = decay_series_set
    train, _ = build_supervised(train_series, validation_series, decay_problem, subsample_target=10_000)
    assert len(train) == 3 * 81


def test_build_supervised_contract(decay_problem, decay_series_set):
    train_series, validation_series = decay_series_set
    with pytest.raises(ContractViolation):
        build_supervised(train_series, validation_series, decay_problem, subsample_target=0)
    with pytest.raises(ContractViolation):
        build_supervised(train_series, [], decay_problem, subsample_target=10)
    bare = decay_series(1.0)
    bare.fs = None
    with pytest.raises(ContractViolation):
        build_supervised([bare], validation_series, decay_problem, subsample_target=10)


def test_unroll_batches_cover_every_window_once(decay_problem, decay_series_set):
    train_series, _ = decay_series_set
    batches = list(build_unroll_batches(train_series, decay_problem, unroll=5, dts=1 / 80, batch_size=16, seed=0))
    assert sum(b.size for b in batches) == 3 * 76
    assert batches[-1].size == 4
    for batch in batches:
        assert batch.unroll == 5 and batch.target_states.shape == (5, batch.size, 1)
        mu = batch.mu[:, 0]
        steps = np.arange(1, 6)[:, None] / 80
        expected = batch.start_states[None, :, 0] * np.exp(-mu[None, :] * steps)
        np.testing.assert_allclose(batch.target_states[:, :, 0], expected, rtol=1e-12)
        np.testing.assert_array_equal(batch.mu_hat, batch.mu)


def test_unroll_batches_contract(decay_problem, decay_series_set):
    train_series, _ = decay_series_set
    with pytest.raises(ContractViolation):
        build_unroll_batches(train_series, decay_problem, unroll=5, dts=1 / 40, batch_size=8, seed=0)
    with pytest.raises(ContractViolation):
        build_unroll_batches(train_series, decay_problem, unroll=81, dts=1 / 80, batch_size=8, seed=0)
    with pytest.raises(ContractViolation):
        build_unroll_batches(train_series, decay_problem, unroll=0, dts=1 / 80, batch_size=8, seed=0)


def test_generator_writes_a_loadable_dataset():
    config = _small_vdp()
    result = DataGenerator("generate", config).run()
    assert result.ok and len(result.entries) == 3

    store = DatasetStore(config.dataset_dir)
    manifest = store.read_manifest()
    assert manifest["problem"] == "vdp"
    assert [e["role"] for e in manifest["series"]] == ["train", "train", "validation"]
    assert manifest["transforms"][1]["params"] == {"window": 7, "order": 2}

    train = store.load_series("train", VDP)
    assert len(train) == 2 and all(s.has_derivatives for s in train)
    np.testing.assert_array_equal(train[0].ts, np.arange(len(train[0])) / train[0].n)
    assert train[0].t[-1] == pytest.approx(VDP.horizon(train[0].mu))
    with open(os.path.join(config.dataset_dir, manifest["series"][0]["file"])) as fh:
        assert fh.readline().strip().startswith("ts,t,u_1,u_2,fs_1,fs_2,tdot")

    with pytest.raises(ConfigError):
        DataGenerator("generate", config).run()
    assert DataGenerator("generate", config, overwrite=True).run().ok


def test_filter_override_reaches_the_manifest():
    config = _small_vdp(filter={"window": 5, "order": 2}, max_train_series=1)
    result = DataGenerator("generate", config).run()
    assert len(result.entries) == 2
    with open(DatasetStore(config.dataset_dir).manifest_path) as fh:
        assert json.load(fh)["transforms"][1]["params"] == {"window": 5, "order": 2}


def test_loading_without_a_dataset():
    store = DatasetStore(_small_vdp().dataset_dir)
    with pytest.raises(MissingArtifactError):
        store.load_series("train", VDP)
