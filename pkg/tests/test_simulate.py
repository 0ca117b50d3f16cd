import numpy as np
import pytest

from math import factorial

from scipy.linalg import expm

from tdsstab.benchmark_systems import OSCILLATOR_BLOCK, UNSTABLE_BLOCK, block_system
from tdsstab.exceptions import IntegrationError, PreconditionError
from tdsstab.feedback import closed_loop_system, place_pole_pair
from tdsstab.quasipoly import analyze_system
from tdsstab.simulate import HistoryFunction, Trajectory, integrate, integrate_closed_loop, settling_time
from tdsstab.systems import TimeDelaySystem


def test_integrate_ode_matches_matrix_exponential():
    A = np.array([[0.0, 1.0], [-2.0, -3.0]])
    sys = TimeDelaySystem.single_delay(A, np.zeros((2, 2)))
    x0 = np.array([1.0, -0.5])
    traj = integrate(sys, HistoryFunction.constant(x0), t_end=2.0, dt=0.002, tau=1.0)

    np.testing.assert_allclose(traj.final_state, expm(2.0 * A) @ x0, atol=1e-9)
    np.testing.assert_allclose(traj(1.0001), expm(1.0001 * A) @ x0, atol=1e-8)


def test_integrate_scalar_delay_equation():
    # x' = -x(t - 1), x = 1 on [-1, 0]: x = 1 - t on [0, 1], 1 - t + (t - 1)^2 / 2 on [1, 2]
    sys = TimeDelaySystem.single_delay(np.zeros((1, 1)), -np.ones((1, 1)))
    traj = integrate(sys, HistoryFunction.constant([1.0]), t_end=2.0, dt=0.01, tau=1.0)

    np.testing.assert_allclose(traj(0.5), [0.5], atol=1e-10)
    np.testing.assert_allclose(traj(1.5), [-0.375], atol=1e-8)
    np.testing.assert_allclose(traj.final_state, [-0.5], atol=1e-8)


def test_integrate_rejects_large_step():
    sys = TimeDelaySystem.single_delay(np.zeros((1, 1)), -np.ones((1, 1)))
    with pytest.raises(IntegrationError):
        integrate(sys, HistoryFunction.constant([1.0]), t_end=1.0, dt=0.5, tau=1.0)


def test_integrate_reports_blowup():
    sys = TimeDelaySystem.single_delay(np.array([[400.0]]), np.zeros((1, 1)))
    with pytest.raises(IntegrationError) as exc:
        integrate(sys, HistoryFunction.constant([1.0]), t_end=10.0, dt=0.01, tau=1.0)

    assert 0.0 < exc.value.t_blowup <= 10.0


def test_unstable_block_grows():
    traj = integrate(block_system(UNSTABLE_BLOCK), HistoryFunction.constant([1.0, 1.0]), t_end=20.0, tau=0.5)
    assert np.max(np.abs(traj.final_state)) > 10.0


def test_sampled_history(plant):
    times = np.linspace(-plant.h, 0.0, 50)
    history = HistoryFunction.sampled(times, np.column_stack([np.cos(times), np.sin(times)]))

    np.testing.assert_allclose(history(-1.0), [np.cos(-1.0), np.sin(-1.0)], atol=1e-5)
    with pytest.raises(PreconditionError):
        history(-4.0)
    with pytest.raises(PreconditionError):
        HistoryFunction.sampled(times[::-1], np.ones(50))

    traj = integrate(plant.to_system(), history, t_end=1.0)
    np.testing.assert_allclose(traj.states[0], [1.0, 0.0], atol=1e-12)


def test_history_arithmetic():
    history = 2.0 * HistoryFunction.constant([1.0, 2.0]) + HistoryFunction.constant([0.5, 0.5])
    np.testing.assert_allclose(history(-0.3), [2.5, 4.5])


def test_settling_time():
    times = np.arange(4.0)
    derivs = np.zeros((4, 1))
    settled = Trajectory(times, np.array([[1.0], [0.5], [0.01], [0.001]]), derivs)
    unsettled = Trajectory(times, np.array([[1.0], [0.5], [0.01], [0.3]]), derivs)
    resting = Trajectory(times, np.zeros((4, 1)), derivs)

    assert settling_time(settled) == 2.0
    assert settling_time(unsettled) is None
    assert settling_time(resting) == 0.0
    with pytest.raises(PreconditionError):
        settling_time(settled, band=1.5)


def test_delayed_feedback_speeds_up_convergence(slow):
    history = HistoryFunction.constant([1.0, 1.0])
    open_loop = integrate(slow.to_system(), history, t_end=100.0)
    K = place_pole_pair(slow, 0.1, -0.3254 + 0.3254j)
    closed = integrate_closed_loop(slow, K, 0.1, history, t_end=60.0)

    assert settling_time(open_loop) is None
    closed_time = settling_time(closed)
    assert closed_time is not None and closed_time < 40.0


def test_integrate_closed_loop_matches_system(plant):
    history = HistoryFunction.constant([1.0, 0.0])
    direct = integrate(closed_loop_system(plant, [1.0, -5.0]), history, t_end=2.0, tau=0.7)
    wrapped = integrate_closed_loop(plant, [1.0, -5.0], 0.7, history, t_end=2.0)

    np.testing.assert_array_equal(direct.states, wrapped.states)


def test_trajectory_to_csv(tmp_path):
    traj = Trajectory(np.array([0.0, 1.0]), np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros((2, 2)))
    path = tmp_path / "traj.csv"
    traj.to_csv(path)

    lines = path.read_text().splitlines()
    assert lines[0] == "t,x1,x2"
    assert len(lines) == 3


def _unit_delay_solution(t):
    # x' = -x(t - 1) with x = 1 on [-1, 0]
    return sum((-1) ** k * (t - k + 1) ** k / factorial(k) for k in range(int(np.floor(t)) + 2))


UNIT_DELAY = TimeDelaySystem.single_delay(np.zeros((1, 1)), -np.ones((1, 1)))


def test_integrate_ends_at_t_end():
    traj = integrate(UNIT_DELAY, HistoryFunction.constant([1.0]), t_end=10.0, dt=0.064, tau=1.0)

    assert traj.times[-1] == 10.0
    assert np.max(np.diff(traj.times)) <= 0.064
    np.testing.assert_allclose(traj.final_state, [_unit_delay_solution(10.0)], atol=1e-4)


def test_integrate_is_fourth_order():
    errors = []
    for dt in (0.1, 0.05):
        traj = integrate(UNIT_DELAY, HistoryFunction.constant([1.0]), t_end=8.0, dt=dt, tau=1.0)
        errors.append(abs(traj.final_state[0] - _unit_delay_solution(8.0)))

    assert 12.0 < errors[0] / errors[1] < 20.0


def test_integrate_is_linear_in_history(plant):
    times = np.linspace(-plant.h, 0.0, 40)
    wave = HistoryFunction.sampled(times, np.column_stack([np.sin(times), np.cos(2 * times)]))
    step = HistoryFunction.constant([1.0, -1.0])
    sys = plant.to_system()

    combined = integrate(sys, 2.0 * wave + step, t_end=10.0)
    separate = 2.0 * integrate(sys, wave, t_end=10.0).states + integrate(sys, step, t_end=10.0).states
    np.testing.assert_allclose(combined.states, separate, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("tau", [1.0, 3.4])
def test_decay_follows_stability_map(tau):
    sys = block_system(OSCILLATOR_BLOCK)
    _, _, smap = analyze_system(sys, tau_max=5.0)
    traj = integrate(sys, HistoryFunction.constant([1.0, 1.0]), t_end=150.0, tau=tau)

    early = np.max(np.abs(traj.states[traj.times <= 30.0]))
    late = np.max(np.abs(traj.states[traj.times >= 120.0]))
    assert (late < early) == (smap.nu_at(tau) == 0)


def test_settling_time_of_exponential():
    times = np.linspace(0.0, 10.0, 1001)
    traj = Trajectory(times, np.exp(-times)[:, np.newaxis], -np.exp(-times)[:, np.newaxis])

    assert settling_time(traj) == pytest.approx(-np.log(0.02), abs=0.02)


def test_sum_of_constant_histories_stays_constant():
    history = HistoryFunction.constant([1.0]) + HistoryFunction.constant([2.0])
    assert history.kind == "constant"
    assert (history + HistoryFunction.sampled([-1.0, -0.5, 0.0], [0.0, 0.0, 0.0])).kind == "sampled"
