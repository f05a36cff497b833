import numpy as np
import pytest

from config.settings import reset_settings
from utils.normalizers import NormalizerSet, identity
from utils.problems import Axis, ParametricProblem
from utils.transformers import ReparamSeries


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Every test gets its own workdir and a fresh settings instance."""
    monkeypatch.setenv("STIFFODE_WORKDIR", str(tmp_path / "workdir"))
    monkeypatch.setenv("DISABLE_REPORTS", "false")
    reset_settings()
    yield
    reset_settings()


def _decay_rhs(t, u, mu):
    return -mu[0] * np.asarray(u, dtype=float)


def _decay_jac(t, u, mu):
    return np.array([[-mu[0]]])


@pytest.fixture
def decay_problem():
    """u' = -mu u with identity normalizations, horizon 1."""
    return ParametricProblem(
        name="decay", n_state=1, n_param=1,
        rhs_fn=_decay_rhs, jac_fn=_decay_jac, u0=(1.0,),
        horizon_fn=lambda mu: 1.0,
        param_space=(Axis("uniform", 0.5, 1.5, 3),),
        test_points=((1.0,),),
        normalizers=NormalizerSet(identity(1), identity(1), identity(1), identity(1)),
    )


def decay_series(mu, n=80, tag="train_0000"):
    """Exact reparametrized series of the decay problem with t = ts (d t/dts = 1)."""
    ts = np.arange(n + 1) / n
    states = np.exp(-mu * ts)[:, None]
    return ReparamSeries(mu=[mu], ts=ts, t=ts.copy(), states=states, fs=-mu * states,
                         tdot=np.zeros(n + 1), tag=tag, state_normalizer=identity(1))


@pytest.fixture
def decay_series_set():
    train = [decay_series(mu, tag=f"train_{i:04d}") for i, mu in enumerate((0.5, 1.0, 1.5))]
    validation = [decay_series(mu, tag=f"validation_{i:04d}") for i, mu in enumerate((0.75, 1.25))]
    return train, validation
