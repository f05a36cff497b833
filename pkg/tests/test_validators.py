import numpy as np
import pytest

from config.experiment import VALIDATION_REGISTRY
from engine.execute_checks import SeriesValidator
from tests.conftest import decay_series
from utils.normalizers import identity
from utils.problems import ROBER
from utils.transformers import ReparamSeries
from utils.validators import (
    VALIDATORS_DICT, finite_values, mass_conservation, non_negative_states,
    tdot_positive, times_strictly_increasing,
)


def _two_species(states, t=(0.0, 1.0, 2.0)):
    return ReparamSeries(mu=[1.0], ts=[0.0, 0.5, 1.0], t=t, states=states, tag="s",
                         state_normalizer=identity(2))


def test_clean_series_passes_every_check():
    series = decay_series(1.0, n=20)
    messages = []
    assert times_strictly_increasing(series, messages)
    assert finite_values(series, messages)
    assert tdot_positive(series, messages)
    assert non_negative_states(series, messages)
    assert messages == []


def test_time_checks():
    messages = []
    assert not times_strictly_increasing(_two_species([[1, 0], [1, 0], [1, 0]], t=(0.0, 1.0, 1.0)), messages)
    assert "index 2" in messages[0]
    messages = []
    assert not times_strictly_increasing(_two_species([[1, 0], [1, 0], [1, 0]], t=(0.5, 1.0, 2.0)), messages)
    assert "starts at" in messages[0]


def test_non_finite_values_are_reported():
    series = decay_series(1.0, n=20)
    series.fs[3, 0] = np.nan
    messages = []
    assert not finite_values(series, messages)
    assert "'fs'" in messages[0]


def test_tdot_missing_or_underflowing():
    series = _two_species([[1, 0], [1, 0], [1, 0]])
    messages = []
    assert not tdot_positive(series, messages)
    series.tdot = np.array([0.0, -400.0, 0.0])
    assert not tdot_positive(series, messages)
    assert len(messages) == 2


def test_mass_conservation():
    conserved = _two_species([[1.0, 0.0], [0.4, 0.6], [0.1, 0.9]])
    drifting = _two_species([[1.0, 0.0], [0.4, 0.6], [0.1, 0.8]])
    messages = []
    assert mass_conservation(conserved, messages, {"tolerance": 1e-12})
    assert not mass_conservation(drifting, messages, {"tolerance": 1e-8})
    assert mass_conservation(drifting, messages, {"components": [0]}) is False
    assert mass_conservation(drifting, [], {"tolerance": 0.2})


def test_negative_states_with_tolerance():
    series = _two_species([[1.0, 0.0], [0.5, -1e-12], [0.1, 0.9]])
    messages = []
    assert not non_negative_states(series, messages)
    assert "component 2" in messages[0]
    assert non_negative_states(series, [], {"atol": 1e-10})


def test_validators_need_a_series():
    with pytest.raises(TypeError):
        finite_values({"t": [0.0]}, [])


def test_registry_names():
    assert set(VALIDATORS_DICT) == {
        "times_strictly_increasing", "finite_values", "tdot_positive", "mass_conservation", "non_negative_states",
    }


def _three_species(states):
    n = len(states)
    return ReparamSeries(mu=[0.04, 1e4, 3e7], ts=np.linspace(0.0, 1.0, n), t=np.arange(n, dtype=float),
                         states=states, fs=np.zeros((n, 3)), tdot=np.zeros(n), tag="train_0007",
                         state_normalizer=identity(3))


def test_series_validator_runs_the_registry_checks(tmp_path):
    validator = SeriesValidator("validation", VALIDATION_REGISTRY, str(tmp_path), ROBER)
    messages = []
    assert validator.validate(_three_species([[1.0, 0.0, 0.0], [0.9, 0.05, 0.05], [0.5, 0.1, 0.4]]), messages)
    assert "mass_conservation: Passed" in messages

    messages = []
    assert not validator.validate(_three_species([[1.0, 0.0, 0.0], [0.9, 0.05, 0.05], [0.5, 0.2, 0.2]]), messages)
    assert any("mass drift" in m for m in messages)
    assert list(tmp_path.glob("*/validation/train_0007.txt"))


def test_series_validator_needs_a_step_name(tmp_path):
    with pytest.raises(ValueError):
        SeriesValidator(None, VALIDATION_REGISTRY, str(tmp_path), ROBER)
