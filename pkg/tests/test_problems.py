import numpy as np
import pytest

from utils.errors import ContractViolation, UnknownProblemError
from utils.problems import (
    E5, OREGO, POLLU, POLLU_MU0, PROBLEMS_DICT, ROBER, VDP, Axis,
    get_problem, initial_state, jacobian, param_grid, rhs,
)


def _numeric_jacobian(problem, u, mu, eps=1e-6):
    J = np.empty((problem.n_state, problem.n_state))
    for j in range(problem.n_state):
        step = np.zeros(problem.n_state)
        step[j] = eps * max(1.0, abs(u[j]))
        J[:, j] = (problem.rhs(0.0, u + step, mu) - problem.rhs(0.0, u - step, mu)) / (2 * step[j])
    return J


def test_registry_ids():
    assert sorted(PROBLEMS_DICT) == ["e5", "orego", "pollu", "rober", "vdp"]
    assert get_problem("rober") is ROBER
    with pytest.raises(UnknownProblemError):
        get_problem("brusselator")


def test_vdp_rhs_and_jacobian_at_initial_state():
    np.testing.assert_allclose(rhs("vdp", 0.0, [2.0, 0.0], [100.0]), [0.0, -2.0])
    np.testing.assert_allclose(jacobian("vdp", 0.0, [2.0, 0.0], [100.0]), [[0.0, 1.0], [-1.0, -300.0]])


def test_rober_rhs_and_jacobian_row():
    mu = [0.04, 1e4, 3e7]
    np.testing.assert_allclose(rhs("rober", 0.0, [1.0, 0.0, 0.0], mu), [-0.04, 0.04, 0.0])
    u = np.array([0.9, 1e-5, 0.1])
    np.testing.assert_allclose(ROBER.jacobian(0.0, u, mu)[0], [-0.04, 1e4 * 0.1, 1e4 * 1e-5])


@pytest.mark.parametrize("problem", [VDP, OREGO, ROBER, E5, POLLU], ids=lambda p: p.name)
def test_analytic_jacobian_matches_finite_differences(problem):
    rng = np.random.default_rng(3)
    mu = problem.test_points[0]
    u = np.abs(problem.initial_state()) + rng.uniform(0.1, 1.0, problem.n_state)
    np.testing.assert_allclose(problem.jacobian(0.0, u, mu), _numeric_jacobian(problem, u, mu),
                               rtol=1e-5, atol=1e-6 * np.abs(problem.jacobian(0.0, u, mu)).max())


def test_linear_invariants_hold_at_random_states():
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.uniform(0.0, 1.0, 3)
        r = ROBER.rhs(0.0, u, ROBER.test_points[1])
        assert abs(r.sum()) <= 1e-12 * np.abs(r).max()
        v = rng.uniform(0.0, 1e-3, 4)
        d = E5.rhs(0.0, v, E5.test_points[0])
        assert abs(d[1] - d[2] - d[3]) <= 1e-12 * np.abs(d).max()


def test_e5_second_reaction_consumes_u1():
    mu = (7.89e-10, 1.1e7, 1.13e3, 1e6)
    d = E5.rhs(0.0, [1.0, 0.0, 1.0, 0.0], mu)
    assert d[0] == pytest.approx(-mu[0] - mu[1])
    assert d[3] == pytest.approx(mu[1])


def test_rober_test_points_stay_inside_the_training_range():
    assert sorted({p[0] for p in ROBER.test_points}) == [0.006, 0.049]
    assert len(ROBER.test_points) == 4
    assert all(ROBER.in_domain(p) for p in ROBER.test_points)


def test_initial_states_and_sizes():
    assert initial_state("vdp").tolist() == [2.0, 0.0]
    assert OREGO.initial_state().tolist() == [1.0, 2.0, 3.0]
    assert POLLU.initial_state().shape == (20,)
    assert POLLU_MU0.shape == (25,)
    with pytest.raises(ContractViolation):
        VDP.rhs(0.0, [1.0, 2.0, 3.0], [100.0])
    with pytest.raises(ContractViolation):
        VDP.check_param([1.0, 2.0])


def test_grids_by_role():
    train = param_grid("vdp", "train")
    assert len(train) == 51
    np.testing.assert_allclose(train.points[[0, -1], 0], [1e2, 1e4])
    validation = VDP.grid("validation")
    assert len(validation) == 50
    np.testing.assert_allclose(validation.points[0, 0], 10 ** 2.02)
    assert len(ROBER.grid("train")) == 16 * 31
    assert np.all(ROBER.grid("train").points[:, 2] == 3e7)
    assert len(ROBER.grid("test")) == 4


def test_grid_override_and_bad_role():
    grid = VDP.grid("train", {0: Axis("log", 1e2, 1e3, 11)})
    assert len(grid) == 11
    np.testing.assert_allclose(grid.points[-1, 0], 1e3)
    with pytest.raises(ContractViolation):
        VDP.grid("holdout")
    with pytest.raises(ContractViolation):
        VDP.grid("train", {3: Axis("log", 1.0, 10.0, 2)})


def test_axis_validation():
    with pytest.raises(ContractViolation):
        Axis("log", 0.0, 1.0, 5)
    with pytest.raises(ContractViolation):
        Axis("uniform", 1.0, 1.0, 5)
    with pytest.raises(ContractViolation):
        Axis("cubic", 0.0, 1.0, 5)


def test_horizons():
    assert VDP.horizon([100.0]) == 350.0
    assert VDP.horizon([100.0], "test") == 500.0
    assert ROBER.horizon(ROBER.test_points[0]) == 1e11
    assert POLLU.horizon(POLLU.test_points[0]) == 60.0


def test_domain_membership():
    assert VDP.in_domain([500.0])
    assert not VDP.in_domain([5e4])
    assert not ROBER.in_domain([0.01, 1e4, 1.0])


def test_pollu_test_points_scale_varying_rates():
    low, high = np.array(POLLU.test_points)
    np.testing.assert_allclose(low[[3, 5, 13]], 0.525 * POLLU_MU0[[3, 5, 13]])
    np.testing.assert_allclose(high[[3, 5, 13]], 1.975 * POLLU_MU0[[3, 5, 13]])
    np.testing.assert_array_equal(np.delete(low, [3, 5, 13]), np.delete(POLLU_MU0, [3, 5, 13]))
