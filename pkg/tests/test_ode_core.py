import math

import numpy as np
import pytest

from config.constants import MAX_FACTOR, MIN_FACTOR
from utils.errors import ContractViolation, NonFiniteStateError, RangeError, StiffnessSuspectedError
from utils.ode_core import (
    DOPRI5, RK4, ButcherTableau, SolveStats, Tolerance, Trajectory, error_norm, fixed_grid,
    interpolate, next_step_size, rk_step, solve_adaptive, solve_fixed, stiffness_index,
)


def decay(t, u):
    return -u


def test_rk4_converges_with_fourth_order():
    errors = []
    for dt in (0.1, 0.05, 0.025):
        traj, _ = solve_fixed(decay, [1.0], 0.0, 1.0, dt, tableau=RK4)
        errors.append(abs(traj.states[-1, 0] - math.exp(-1.0)))
    orders = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert min(orders) >= 3.9


def test_fixed_step_counts_four_evaluations_per_step():
    traj, stats = solve_fixed(decay, [1.0], 0.0, 1.0, 0.025)
    assert len(traj) == 41
    assert stats.n_steps_accepted == 40
    assert stats.n_fev == 160
    assert stats.n_jev == 0 and stats.n_lu == 0


def test_dopri5_meets_tolerance_on_decay():
    traj, stats = solve_adaptive(decay, [1.0], 0.0, 1.0, Tolerance(1e-6, 1e-6))
    assert traj.times[-1] == 1.0
    assert abs(traj.states[-1, 0] - math.exp(-1.0)) <= 1e-5
    assert stats.n_steps_accepted > 0


def test_dopri5_stores_derivatives_for_free():
    traj, _ = solve_adaptive(decay, [1.0], 0.0, 1.0, Tolerance(1e-8, 1e-8))
    assert traj.derivatives is not None
    np.testing.assert_allclose(traj.derivatives, -traj.states, rtol=1e-12, atol=1e-14)


def test_rk_step_embedded_pair_differs_by_local_error():
    u1, u1_star = rk_step(DOPRI5, decay, 0.0, [1.0], 0.1)
    assert abs(u1[0] - math.exp(-0.1)) < 1e-9
    assert 0 < abs(u1[0] - u1_star[0]) < 1e-5


def test_rk4_has_no_embedded_weights():
    with pytest.raises(ContractViolation):
        solve_adaptive(decay, [1.0], 0.0, 1.0, Tolerance(1e-6, 1e-6), tableau=RK4)


def test_next_step_size_matches_closed_form():
    dt, q = 0.01, 4
    for eps in np.logspace(-8, 8, 1000):
        expected = dt * min(MAX_FACTOR, max(MIN_FACTOR, (1.0 / eps) ** (1.0 / (q + 1))))
        assert next_step_size(dt, float(eps), q) == expected


def test_next_step_size_caps():
    assert next_step_size(1.0, 0.0, 4) == MAX_FACTOR
    assert next_step_size(1.0, math.inf, 4) == MIN_FACTOR
    assert next_step_size(1.0, 1e-30, 4) == MAX_FACTOR
    assert next_step_size(1.0, 1e30, 4) == MIN_FACTOR


def test_error_norm_is_scaled_rms():
    tol = Tolerance(1e-3, 1e-3)
    u0 = np.array([1.0, 2.0])
    u1 = np.array([1.0, 2.0])
    u1_star = np.array([1.0 + 2e-3, 2.0])
    delta = 1e-3 + 1e-3 * np.array([1.0, 2.0])
    expected = math.sqrt(((2e-3 / delta[0]) ** 2) / 2)
    assert error_norm(u0, u1, u1_star, tol) == pytest.approx(expected, rel=1e-12)


def test_fixed_grid_lands_on_final_time():
    grid = fixed_grid(0.0, 1.0, 0.3)
    assert grid[-1] == 1.0
    np.testing.assert_allclose(np.diff(grid)[:-1], 0.3)
    assert fixed_grid(0.0, 1.0, 0.25).size == 5


def test_blow_up_reports_last_valid_time():
    with pytest.raises(NonFiniteStateError) as info:
        solve_fixed(lambda t, u: u ** 2, [1.0], 0.0, 2.0, 0.01)
    err = info.value
    assert 0.9 < err.t_last < 2.0
    assert err.partial is not None and np.all(np.isfinite(err.partial.states))


def test_step_budget_raises_stiffness_suspected():
    with pytest.raises(StiffnessSuspectedError) as info:
        solve_adaptive(decay, [1.0], 0.0, 100.0, Tolerance(1e-10, 1e-10), max_steps=5)
    assert info.value.stats.n_steps_accepted == 5


def test_monitor_sees_every_attempt():
    calls = []
    _, stats = solve_adaptive(decay, [1.0], 0.0, 1.0, Tolerance(1e-6, 1e-6),
                              monitor=lambda t, dt, eps, ok: calls.append(ok))
    assert len(calls) == stats.n_steps_accepted + stats.n_steps_rejected
    assert sum(calls) == stats.n_steps_accepted


def test_hermite_interpolation_is_accurate_between_steps():
    traj, _ = solve_adaptive(decay, [1.0], 0.0, 2.0, Tolerance(1e-10, 1e-10))
    tq = np.linspace(0.0, 2.0, 101)
    np.testing.assert_allclose(interpolate(traj, tq)[:, 0], np.exp(-tq), atol=1e-6)
    np.testing.assert_array_equal(interpolate(traj, traj.times), traj.states)


def test_interpolation_outside_span_raises():
    traj = Trajectory([0.0, 1.0], [[0.0], [1.0]])
    np.testing.assert_allclose(interpolate(traj, [0.5]), [[0.5]])
    with pytest.raises(RangeError):
        interpolate(traj, [1.5])


def test_trajectory_rejects_non_increasing_times():
    with pytest.raises(ContractViolation):
        Trajectory([0.0, 0.0], [[1.0], [1.0]])


def test_tableau_weights_must_sum_to_one():
    with pytest.raises(ContractViolation):
        ButcherTableau("bad", [[0.0]], [0.5], [0.0], order=1)


def test_dopri5_is_fsal():
    assert DOPRI5.fsal
    assert not RK4.fsal


def test_stiffness_index_ratio():
    assert stiffness_index(np.diag([-1.0, -1000.0]), 2.0) == pytest.approx(2000.0)


def test_trajectory_and_stats_export(tmp_path):
    traj = Trajectory([0.0, 0.5, 1.0], [[1.0, 2.0], [0.5, 1.0], [0.25, 0.5]])
    path = tmp_path / "traj.csv"
    traj.to_csv(str(path))
    assert path.read_text().splitlines()[0] == "t,u_1,u_2"
    assert SolveStats(n_fev=3).to_dict()["n_fev"] == 3
