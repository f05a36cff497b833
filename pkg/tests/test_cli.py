import json
import os

import pandas as pd
import pytest

from config.constants import EXIT_CONFIG, EXIT_MISSING, EXIT_OK
from main import build_parser, main


def test_unknown_problem_is_a_configuration_error(capsys):
    assert main(["solve", "--problem", "brusselator"]) == EXIT_CONFIG
    assert "brusselator" in capsys.readouterr().err


def test_missing_config_source():
    assert main(["generate"]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["--config", str(tmp_path / "absent.json"), "generate"]) == EXIT_CONFIG


def test_benchmark_without_model():
    assert main(["benchmark", "--problem", "vdp"]) == EXIT_MISSING


def test_train_without_dataset():
    assert main(["train", "--problem", "vdp", "--stage", "dynamics"]) == EXIT_MISSING


def test_search_budget_must_be_positive():
    assert main(["search", "--problem", "vdp", "--budget", "0"]) == EXIT_CONFIG


def test_solve_writes_trajectory_and_stats(tmp_path):
    out = tmp_path / "rober.csv"
    code = main(["solve", "--problem", "rober", "--mu", "0.04,1e4,3e7", "--solver", "radau", "--tol", "1e-6",
                 "--t-final", "40", "--out", str(out)])
    assert code == EXIT_OK
    frame = pd.read_csv(out)
    assert list(frame.columns) == ["t", "u_1", "u_2", "u_3"]
    assert frame["t"].iloc[0] == 0.0 and frame["t"].iloc[-1] == pytest.approx(40.0)
    with open(tmp_path / "rober_stats.json") as fh:
        stats = json.load(fh)
    assert stats["solver"] == "radau" and stats["mu"] == [0.04, 1e4, 3e7]
    assert stats["n_fev"] > 0 and stats["n_lu"] > 0


def test_rk4_solve_needs_a_step(tmp_path):
    out = str(tmp_path / "vdp.csv")
    assert main(["solve", "--problem", "vdp", "--solver", "rk4", "--out", out]) == EXIT_CONFIG
    assert main(["solve", "--problem", "vdp", "--mu", "100", "--solver", "rk4", "--dt", "0.001",
                 "--t-final", "1", "--out", out]) == EXIT_OK
    assert len(pd.read_csv(out)) == 1001


def test_common_options_before_or_after_subcommand():
    parser = build_parser()
    before = parser.parse_args(["--problem", "vdp", "--seed", "3", "train"])
    after = parser.parse_args(["train", "--problem", "vdp", "--seed", "3"])
    assert (before.problem, before.seed, before.stage) == (after.problem, after.seed, after.stage) == ("vdp", 3, "all")


def test_bad_mu_list_is_rejected():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["solve", "--mu", "1,two"])


@pytest.mark.slow
def test_desk_pipeline_end_to_end(tmp_path):
    config = os.path.join(os.path.dirname(__file__), os.pardir, "config", "experiments", "vdp_desk.json")
    assert main(["--config", config, "generate"]) == EXIT_OK
    assert main(["--config", config, "generate"]) == EXIT_CONFIG
    assert main(["--config", config, "train"]) == EXIT_OK
    assert main(["--config", config, "benchmark"]) == EXIT_OK

    workdir = os.environ["STIFFODE_WORKDIR"]
    assert os.path.isfile(os.path.join(workdir, "models", "vdp", "rom.json"))
    table = pd.read_csv(os.path.join(workdir, "reports", "vdp", "benchmark", "benchmark.csv"))
    assert set(table["solver"]) == {"radau", "rom-fixed"}
