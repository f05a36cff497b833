import math
import os

import numpy as np
import pandas as pd
import pytest
import torch

from config.experiment import TrainConfig, build_experiment
from engine.data_generator import build_supervised
from engine.trainer import (
    SearchSpace, TimemapRollouts, Trainer, dynamics_rollouts, node_validation_loss, random_search,
    sample_search_space, time_recovery_loss, train_node_finetune, train_supervised_dynamics,
    train_timemap_finetune, train_timemap_supervised,
)
from utils.errors import ConfigError, ContractViolation, NumericalError
from utils.neural import as_tensor, gradient, init_parameters
from utils.transformers import uniform_grid


def _nets(seed=0):
    dyn = init_parameters(2, 1, 3, 6, "gelu", seed=seed)
    timemap = init_parameters(2, 1, 3, 6, "gelu", seed=seed + 1)
    return dyn, timemap


def _constant_net(value):
    net = init_parameters(2, 1, 3, 5, "gelu", seed=0)
    with torch.no_grad():
        net.layers[-1].weight.zero_()
        net.layers[-1].bias.fill_(value)
    return net


@pytest.fixture
def supervised_sets(decay_problem, decay_series_set):
    train, validation = decay_series_set
    return build_supervised(train, validation, decay_problem, 20, seed=0)


def test_supervised_dynamics_report(decay_problem, decay_series_set, supervised_sets, tmp_path):
    _, validation = decay_series_set
    net, _ = _nets()
    cfg = TrainConfig("supervised", max_epochs=3, batch_size=16)
    net, report = train_supervised_dynamics(net, supervised_sets[0], validation, decay_problem, cfg)

    assert report.epochs == [1, 2, 3]
    assert len(report.train_loss) == len(report.val_loss) == len(report.lr) == 3
    assert report.status == "completed"
    assert report.validation_fev > 0
    assert report.best_val_loss == pytest.approx(min(report.val_loss))
    assert net.provenance == ["supervised"]

    json_path, csv_path = report.save(str(tmp_path))
    assert os.path.basename(json_path) == "supervised.json"
    assert list(pd.read_csv(csv_path).columns) == ["epoch", "train_loss", "val_loss", "lr"]


def test_supervised_dynamics_checks_network_shape(decay_problem, decay_series_set, supervised_sets):
    net = init_parameters(3, 1, 3, 5)
    with pytest.raises(ContractViolation):
        train_supervised_dynamics(net, supervised_sets[0], decay_series_set[1], decay_problem,
                                  TrainConfig("supervised", max_epochs=1))


def test_validation_loss_of_untrained_network(decay_problem, decay_series_set):
    net, _ = _nets()
    loss, fev = node_validation_loss(net, decay_problem, decay_series_set[1], fraction=0.5, tol=1e-6)
    assert fev > 0
    assert math.isfinite(loss) and loss >= 0.0


def test_finetune_refuses_untrained_network(decay_problem, decay_series_set):
    train, validation = decay_series_set
    net, _ = _nets()
    cfg = TrainConfig("node-finetune", max_epochs=2, unrolls=[(2, 1e-3)])
    with pytest.raises(ContractViolation):
        train_node_finetune(net, train, validation, decay_problem, cfg)


def test_finetune_never_ends_worse_than_baseline(decay_problem, decay_series_set, supervised_sets):
    train, validation = decay_series_set
    net, _ = _nets()
    net, _ = train_supervised_dynamics(net, supervised_sets[0], validation, decay_problem,
                                       TrainConfig("supervised", max_epochs=2, batch_size=16))
    cfg = TrainConfig("node-finetune", max_epochs=2, batch_size=16, unrolls=[(2, 1e-3), (4, 5e-4)])
    net, report = train_node_finetune(net, train, validation, decay_problem, cfg)

    assert math.isfinite(report.baseline_val_loss)
    assert report.best_val_loss <= report.baseline_val_loss
    assert [s["unroll"] for s in report.stages] == [2, 4]
    assert [s["first_epoch"] for s in report.stages] == [1, 2]
    assert len(report.epochs) == 2
    assert net.provenance == ["supervised", "node-finetune"]
    final, _ = node_validation_loss(net, decay_problem, validation)
    assert final == pytest.approx(report.best_val_loss)


def test_untagged_network_allowed_on_request(decay_problem, decay_series_set):
    train, validation = decay_series_set
    net, _ = _nets()
    cfg = TrainConfig("node-finetune", max_epochs=1, unrolls=[(2, 1e-3)], allow_untagged=True)
    net, report = train_node_finetune(net, train, validation, decay_problem, cfg)
    assert len(report.epochs) == 1
    assert net.provenance == ["node-finetune"]


def _rollouts(values, dts=0.025):
    grid = uniform_grid(dts)
    S = len(values)
    states = torch.zeros(grid.size, S, 1, dtype=torch.float64)
    t_hat = as_tensor(np.column_stack([grid] * S))
    return TimemapRollouts(dts, states, as_tensor(np.array(values)[:, None]), t_hat,
                           [f"s{i}" for i in range(S)])


def test_time_recovery_loss_vanishes_for_the_exact_rate():
    loss = time_recovery_loss(_constant_net(0.0), _rollouts([0.5, 1.0]), p=1)
    assert float(loss) == pytest.approx(0.0, abs=1e-12)


def test_time_recovery_loss_is_relative_l1():
    # rate 2 recovers 2 ts against ts, so the residual is ts on [0, 1]
    loss = time_recovery_loss(_constant_net(math.log10(2.0)), _rollouts([1.0]), p=1)
    assert float(loss) == pytest.approx(0.5, rel=1e-9)
    squared = time_recovery_loss(_constant_net(math.log10(2.0)), _rollouts([1.0]), p=2)
    assert float(squared) == pytest.approx(np.mean(uniform_grid(0.025) ** 2), rel=1e-9)


def test_rollout_subset():
    rollouts = _rollouts([0.5, 1.0, 1.5])
    sub = rollouts.subset([2, 0])
    assert len(sub) == 2
    assert sub.tags == ["s2", "s0"]
    assert sub.mu_hat[:, 0].tolist() == [1.5, 0.5]


def test_dynamics_rollouts_follow_reference_time(decay_problem, decay_series_set):
    dyn, _ = _nets()
    rollouts = dynamics_rollouts(dyn, decay_problem, decay_series_set[0], 0.025, fraction=0.5)
    assert rollouts.states.shape == (21, 3, 1)
    assert rollouts.tags == ["train_0000", "train_0001", "train_0002"]
    np.testing.assert_allclose(rollouts.t_hat[:, 1].numpy(), uniform_grid(0.025, 0.5), atol=1e-12)
    np.testing.assert_allclose(rollouts.states[0, :, 0].numpy(), 1.0)


def test_timemap_phases(decay_problem, decay_series_set, supervised_sets):
    train, validation = decay_series_set
    dyn, net_t = _nets()
    net_t, sup = train_timemap_supervised(net_t, supervised_sets[0], validation, dyn, decay_problem,
                                          TrainConfig("timemap-supervised", max_epochs=2, batch_size=16))
    assert sup.epochs == [1, 2]
    assert net_t.has_phase("timemap-supervised")

    cfg = TrainConfig("timemap-finetune", max_epochs=3, batch_size=2, p=1, lr=1e-3)
    net_t, fine = train_timemap_finetune(net_t, dyn, train, validation, decay_problem, cfg)
    assert len(fine.epochs) == 3
    assert fine.best_val_loss <= fine.baseline_val_loss
    assert net_t.provenance == ["timemap-supervised", "timemap-finetune"]


def test_timemap_network_must_have_one_output(decay_problem, decay_series_set, supervised_sets):
    dyn, _ = _nets()
    with pytest.raises(ContractViolation):
        train_timemap_supervised(init_parameters(2, 2, 3, 5), supervised_sets[0], decay_series_set[1], dyn,
                                 decay_problem, TrainConfig("timemap-supervised", max_epochs=1))


def test_search_space_sampling_is_seeded_and_in_range():
    space = SearchSpace()
    trials = sample_search_space(space, 25, seed=7)
    assert trials == sample_search_space(space, 25, seed=7)
    assert trials != sample_search_space(space, 25, seed=8)
    assert [t["trial"] for t in trials] == list(range(25))
    for t in trials:
        assert t["activation"] in space.activations
        assert space.depth[0] <= t["depth"] <= space.depth[1]
        assert space.width[0] <= t["width"] <= space.width[1]
        assert space.lr[0] <= t["lr"] <= space.lr[1]
    with pytest.raises(ContractViolation):
        sample_search_space(space, 0, seed=7)


@pytest.mark.parametrize("ranges", [{"depth": (2, 10)}, {"width": (5, 120)}, {"depth": (6, 4)}, {"lr": (0.0, 1e-3)}])
def test_search_space_stays_inside_network_limits(ranges):
    with pytest.raises(ContractViolation):
        SearchSpace(**ranges)


@pytest.mark.parametrize("workers", [1, 3])
def test_random_search_ranks_failures_last(workers):
    def objective(trial):
        if trial["trial"] == 1:
            raise NumericalError("diverged")
        return float(trial["width"])

    ranked = random_search(SearchSpace(), 5, seed=3, objective=objective, workers=workers)
    assert [r["rank"] for r in ranked] == [1, 2, 3, 4, 5]
    assert ranked[-1]["trial"] == 1 and ranked[-1]["val_loss"] == math.inf
    assert "NumericalError" in ranked[-1]["error"]
    finite = [r["val_loss"] for r in ranked[:-1]]
    assert finite == sorted(finite)


def test_random_search_single_trial():
    ranked = random_search(SearchSpace(), 1, seed=0, objective=lambda trial: 0.25)
    assert len(ranked) == 1 and ranked[0]["rank"] == 1 and ranked[0]["error"] is None


def test_trainer_needs_a_name_and_known_stage():
    config = build_experiment({"problem": "vdp"})
    with pytest.raises(ValueError):
        Trainer(None, config)
    with pytest.raises(ConfigError):
        Trainer("train", config).run("everything")


def test_time_recovery_gradient_matches_finite_differences():
    net = init_parameters(2, 1, 3, 5, "gelu", seed=5)
    rollouts = _rollouts([0.5, 1.0])
    grads = gradient(time_recovery_loss(net, rollouts, p=1), net)
    bias = net.layers[-1].bias
    eps = 1e-6
    with torch.no_grad():
        bias += eps
        up = float(time_recovery_loss(net, rollouts, p=1))
        bias -= 2 * eps
        down = float(time_recovery_loss(net, rollouts, p=1))
        bias += eps
    assert float(grads[-1][0]) == pytest.approx((up - down) / (2 * eps), rel=1e-4)
