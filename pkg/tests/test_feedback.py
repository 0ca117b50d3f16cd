import numpy as np
import pytest

from scipy.linalg import det

from tdsstab.exceptions import PreconditionError, ShapeError, SingularPlacement
from tdsstab.feedback import (
    GainDesign,
    closed_loop_char,
    closed_loop_system,
    ctrb,
    gain_search,
    is_controllable,
    lemma2_screen,
    place_pole_pair,
    stabilizing_intervals,
)
from tdsstab.quasipoly import char_function, crossing_sweep, direct_tendency, evaluate_cf, rightmost_roots
from tdsstab.systems import Plant

STABILIZING_GAIN = [1.0, -5.0]
PLACED_POLE = -0.3254 + 0.3254j


class SerialComm:
    """Single-rank stand-in for an MPI communicator."""

    def Get_rank(self):
        return 0

    def Get_size(self):
        return 1

    def allgather(self, value):
        return [value]


@pytest.mark.parametrize(
    "k1,k2,beta,expected", [(1.0, -5.0, 2.0, True), (0.0, 0.0, 1.0, True), (0.0, 1.0, 2.0, False)]
)
def test_lemma2_screen(k1, k2, beta, expected):
    assert lemma2_screen(k1, k2, beta) == expected


def test_lemma2_screen_needs_positive_beta():
    with pytest.raises(PreconditionError):
        lemma2_screen(1.0, 1.0, 0.0)


@pytest.mark.parametrize("s,tau", [(0.3 + 1.1j, 0.5), (-0.2 + 0.7j, 1.7)])
def test_closed_loop_char(plant, s, tau):
    F = closed_loop_char(plant, STABILIZING_GAIN)
    K = np.array([STABILIZING_GAIN])
    g = 1.0 - np.exp(-s * tau)
    expected = det(s * np.eye(2) - plant.A0 + g * plant.B @ K - plant.A1 * np.exp(-plant.h * s))

    assert complex(F(s, tau)) == pytest.approx(expected, rel=1e-9)


def test_closed_loop_rejects_wrong_gain(plant):
    with pytest.raises(ShapeError):
        closed_loop_system(plant, [1.0, 2.0, 3.0])


def test_stabilizing_intervals(plant):
    design = stabilizing_intervals(plant, STABILIZING_GAIN, tau_max=5.0)

    np.testing.assert_allclose(design.stable_intervals, [[0.4540, 0.9469]], atol=1e-3)
    assert design.tau == pytest.approx(0.5 * (0.4540 + 0.9469), abs=1e-3)
    np.testing.assert_allclose(sorted({round(p.omega, 6) for p in design.crossings}), [1.6564, 3.5116], atol=1e-3)
    assert design.stability_map.nu_at(0.2) > 0
    assert design.widest == pytest.approx(0.9469 - 0.4540, abs=2e-3)


def test_direct_method_agrees_with_root_tendency(plant):
    design = stabilizing_intervals(plant, STABILIZING_GAIN, tau_max=5.0)
    F = closed_loop_char(plant, STABILIZING_GAIN)

    assert design.crossings
    for p in design.crossings:
        assert p.tendency == (-1 if p.omega < 2.5 else 1)
        assert direct_tendency(F, p.omega) == p.tendency


def test_stable_interval_matches_spectrum(plant):
    sys = closed_loop_system(plant, STABILIZING_GAIN)

    assert rightmost_roots(sys, 0.7, n_roots=1)[0].real < 0.0
    assert rightmost_roots(sys, 1.5, n_roots=1)[0].real > 0.0


def test_gain_search(plant):
    designs = gain_search(plant, [STABILIZING_GAIN], tau_max=2.0, beta=0.5, comm=SerialComm())

    assert len(designs) == 1
    np.testing.assert_array_equal(designs[0].K, STABILIZING_GAIN)
    np.testing.assert_allclose(designs[0].stable_intervals, [[0.4540, 0.9469]], atol=1e-3)


def test_gain_design_from_dict(plant):
    design = GainDesign(np.array(STABILIZING_GAIN), 0.7, [(0.45, 0.95)], [PLACED_POLE, np.conj(PLACED_POLE)])
    data = design.to_dict()
    loaded = GainDesign.from_dict(data)

    assert data["placed_poles"] == [[-0.3254, 0.3254], [-0.3254, -0.3254]]
    assert loaded.placed_poles == [PLACED_POLE, np.conj(PLACED_POLE)]
    assert loaded.stable_intervals == [(0.45, 0.95)]


def test_place_pole_pair(slow):
    K = place_pole_pair(slow, 0.1, PLACED_POLE)
    F = closed_loop_char(slow, K)

    np.testing.assert_allclose(K, [40.5925, -105.0352], rtol=1e-3)
    assert abs(complex(F(PLACED_POLE, 0.1))) <= 1e-9 * float(F.scale(PLACED_POLE, 0.1))
    assert abs(complex(F(np.conj(PLACED_POLE), 0.1))) <= 1e-9 * float(F.scale(np.conj(PLACED_POLE), 0.1))


def test_place_pole_pair_at_open_loop_root():
    plant = Plant(np.array([[0.0, 1.0], [-2.0, -2.0]]), np.zeros((2, 2)), [1.0, 0.0], 1.0)
    np.testing.assert_allclose(place_pole_pair(plant, 0.5, -1.0 + 1.0j), 0.0, atol=1e-10)


def test_place_pole_pair_singular(slow):
    with pytest.raises(SingularPlacement):
        place_pole_pair(slow, 1.0, 2j * np.pi)
    with pytest.raises(PreconditionError):
        place_pole_pair(slow, 0.0, PLACED_POLE)


def test_ctrb():
    A = np.array([[0.0, 1.0], [-1.0, 2.0]])
    B = np.array([[1.0], [0.0]])
    np.testing.assert_array_equal(ctrb(A, B), [[1.0, 0.0], [0.0, -1.0]])


def test_is_controllable(plant):
    assert is_controllable(plant.A0, plant.A1, plant.B)
    assert not is_controllable(plant.A0, plant.A1, np.zeros((2, 1)))
    assert not is_controllable(np.eye(2), np.zeros((2, 2)), plant.B)
    with pytest.raises(ShapeError):
        is_controllable(np.eye(2), np.eye(3), plant.B)


@pytest.mark.parametrize("s,tau", [(0.3 + 1.2j, 0.5), (-0.4 + 0.7j, 1.7)])
def test_closed_loop_char_is_affine_in_gain(plant, s, tau):
    K1, K2 = np.array([1.0, -5.0]), np.array([-2.0, 3.0])
    value = lambda K: evaluate_cf(closed_loop_char(plant, K), s, tau)

    for alpha in (0.25, 2.0):
        mixed = value(alpha * K1 + (1.0 - alpha) * K2)
        assert mixed == pytest.approx(alpha * value(K1) + (1.0 - alpha) * value(K2), rel=1e-9, abs=1e-9)
    open_loop = evaluate_cf(char_function(plant.to_system()), s, tau)
    assert value([0.0, 0.0]) == pytest.approx(open_loop, rel=1e-9, abs=1e-9)


def test_screen_failure_excludes_slow_crossings(plant):
    beta = 2.0
    axis = np.linspace(-10.0, 10.0, 11)
    rejected = 0
    for k1 in axis:
        for k2 in axis:
            if lemma2_screen(k1, k2, beta):
                continue
            rejected += 1
            crossings = crossing_sweep(closed_loop_char(plant, [k1, k2]), beta)
            assert all(p.omega > beta for p in crossings)
    assert rejected > 0


def test_gain_search_intervals_are_stable(plant):
    grid = [[k1, k2] for k1 in (0.5, 1.0, 1.5) for k2 in (-6.0, -5.0, -4.0)]
    designs = gain_search(plant, grid, tau_max=2.0)

    assert designs
    for design in designs:
        sys = closed_loop_system(plant, design.K)
        for lo, hi in design.stable_intervals:
            for frac in (0.25, 0.5, 0.75):
                tau = lo + frac * (hi - lo)
                assert rightmost_roots(sys, tau, n_roots=1)[0].real < 0.0
