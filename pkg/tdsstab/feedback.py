"""
Delayed difference feedback u = -K (x(t) - x(t - tau)) for plants with a fixed
internal delay: closed-loop characteristic functions, stabilizing delay intervals,
gain search, pole pair placement and a controllability test.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from scipy.linalg import det, lstsq
from tqdm import tqdm

from tdsstab.benchmark_systems import PLANT_DELAY, unstable_plant
from tdsstab.config import DEFAULT_TOLERANCES
from tdsstab.exceptions import DegenerateCrossing, PreconditionError, ShapeError, SingularPlacement
from tdsstab.linalg_utils import numerical_rank
from tdsstab.quasipoly import (
    char_function,
    crossing_sweep,
    default_omega_max,
    stability_map,
    unstable_root_count,
)

logger = logging.getLogger(__name__)


@dataclass
class GainDesign:
    """
    Feedback gain together with the delay intervals in which the closed loop is
    certified stable.

    Attributes:
        K (ndarray): Gain row of length n.
        tau (float): Suggested feedback delay (midpoint of the widest stable
            interval, or the delay used for pole placement).
        stable_intervals (list): (tau_lo, tau_hi) pairs with no unstable root.
        placed_poles (list): Poles enforced by pole placement.
        crossings (list): Closed-loop imaginary-axis crossings.
        stability_map (StabilityMap): Unstable-root count along the delay.
    """

    K: np.ndarray
    tau: Optional[float] = None
    stable_intervals: list = field(default_factory=list)
    placed_poles: list = field(default_factory=list)
    crossings: list = field(default_factory=list)
    stability_map: object = None

    @property
    def widest(self):
        return max((hi - lo for lo, hi in self.stable_intervals), default=0.0)

    def to_dict(self):
        return {
            "K": np.asarray(self.K, dtype=float).tolist(),
            "tau": self.tau,
            "stable_intervals": [[float(lo), float(hi)] for lo, hi in self.stable_intervals],
            "placed_poles": [[float(np.real(p)), float(np.imag(p))] for p in self.placed_poles],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            np.array(data["K"], dtype=float),
            data.get("tau"),
            [tuple(i) for i in data.get("stable_intervals", [])],
            [complex(*p) for p in data.get("placed_poles", [])],
        )


def _gain_row(plant, K):
    K = np.asarray(K, dtype=float).ravel()
    if K.shape != (plant.n,):
        raise ShapeError("gain must have {} entries, got {}".format(plant.n, K.shape[0]))
    return K


def closed_loop_system(plant, K):
    """Terms (0, 0): A0 - BK, (h, 0): A1 and (0, tau): BK."""
    return plant.to_system().with_delayed_feedback(_gain_row(plant, K))


def closed_loop_char(plant, K):
    """
    det(sI - A0 + BK g(s) - A1 exp(-hs)) with g(s) = 1 - exp(-tau s); affine in K.
    """
    return char_function(closed_loop_system(plant, K))


def lemma2_screen(k1, k2, beta):
    """
    Necessary condition for a crossing with |omega| <= beta of the closed loop of
    the unstable benchmark plant. The bound on omega (1 - omega) behind it holds
    for beta <= 1/2.
    """
    if not beta > 0.0:
        raise PreconditionError("beta must be positive, got {}".format(beta))
    return k2 - abs(k2) - beta * (1.0 - beta) <= 1.0 - k1 + abs(k1) * (3.0 + beta)


def _in_screen_scope(plant):
    reference = unstable_plant()
    return (
        plant.n == 2
        and plant.h == PLANT_DELAY
        and np.allclose(plant.A0, reference.A0)
        and np.allclose(plant.A1, reference.A1)
        and np.allclose(plant.B, reference.B)
    )


def stabilizing_intervals(
    plant, K, tau_max, omega_max=None, grid_points=2000, nodes=40, crossings=None, F=None
):
    """
    Certifies the delays in [0, tau_max] for which the closed loop with gain K is
    stable. The unstable-root count at tau = 0 comes from the spectrum of the
    closed loop at zero feedback delay, where the plant delay h is still active.

    Returns:
        GainDesign: Gain, stable intervals and the underlying stability map.
    """
    K = _gain_row(plant, K)
    sys = closed_loop_system(plant, K)
    if F is None:
        F = char_function(sys)
    if crossings is None:
        omega_max = default_omega_max(sys) if omega_max is None else omega_max
        crossings = crossing_sweep(F, omega_max, grid_points)
    nu0 = unstable_root_count(F, sys, 0.0, nodes)
    smap = stability_map(F, sys, tau_max, crossings=crossings, nu0=nu0)
    intervals = smap.stable_intervals()
    tau = None
    if intervals:
        lo, hi = max(intervals, key=lambda i: i[1] - i[0])
        tau = 0.5 * (lo + hi)
    return GainDesign(K, tau, intervals, crossings=crossings, stability_map=smap)


def _distinct_frequencies(crossings):
    omegas = []
    for point in crossings:
        if not any(abs(point.omega - w) <= 1.0e-6 * max(1.0, w) for w in omegas):
            omegas.append(point.omega)
    return omegas


def gain_search(
    plant, grid, tau_max, beta=None, omega_max=None, grid_points=2000, nodes=40, comm=None, progress=False
):
    """
    Scans a grid of gains for delayed feedback that stabilizes the plant.

    Gains whose closed loop has fewer than two crossing frequencies cannot
    stabilize an unstable plant and are skipped, as are gains failing the screen
    when the plant is the unstable benchmark plant and beta is given.

    Parameters:
        plant (Plant): The plant.
        grid (iterable): Gain rows.
        tau_max (float): Upper delay bound.
        beta (float): Frequency bound of the screen.
        omega_max (float): Frequency bound of the crossing sweep.
        grid_points (int): Sweep resolution.
        nodes (int): Collocation nodes for the count at tau = 0.
        comm: Optional MPI communicator; grid cells are split across ranks and
            the results gathered on every rank.
        progress (bool): Show a progress bar (on rank 0).

    Returns:
        list: GainDesign objects with nonempty stable intervals, widest first.
    """
    cells = [_gain_row(plant, K) for K in grid]
    rank = 0
    if comm is not None:
        rank = comm.Get_rank()
        cells = [cells[i] for i in np.array_split(np.arange(len(cells)), comm.Get_size())[rank]]
    screen = beta is not None and _in_screen_scope(plant)

    designs = []
    for K in tqdm(cells, disable=not progress or rank != 0):
        if screen and not lemma2_screen(K[0], K[1], beta):
            continue
        sys = closed_loop_system(plant, K)
        F = char_function(sys)
        bound = default_omega_max(sys) if omega_max is None else omega_max
        crossings = crossing_sweep(F, bound, grid_points)
        if len(_distinct_frequencies(crossings)) < 2:
            continue
        try:
            design = stabilizing_intervals(plant, K, tau_max, nodes=nodes, crossings=crossings, F=F)
        except DegenerateCrossing as err:
            logger.warning("skipping gain %s: %s", K.tolist(), err)
            continue
        if design.stable_intervals:
            designs.append(design)

    if comm is not None:
        designs = [d for part in comm.allgather(designs) for d in part]
    designs.sort(key=lambda d: (-d.widest, tuple(d.K)))
    logger.info("gain search: %d of %d gain(s) stabilize", len(designs), len(cells))
    return designs


def place_pole_pair(plant, tau, s_star):
    """
    Gain K that makes s_star (and its conjugate) a closed-loop root at delay tau.

    The characteristic function is affine in K, F(s; K) = F(s; 0) + sum_i a_i(s) K_i,
    so F(s_star; K) = 0 splits into two real linear equations; for n > 2 the
    minimum-norm solution is returned.

    Raises:
        SingularPlacement: g(s_star) = 1 - exp(-s_star tau) vanishes or the real
            system is rank deficient.
    """
    if not tau > 0.0:
        raise PreconditionError("feedback delay must be positive, got {}".format(tau))
    s = complex(s_star)
    g = 1.0 - np.exp(-s * tau)
    if abs(g) < 1.0e-10:
        raise SingularPlacement("feedback term 1 - exp(-s tau) vanishes at s = {}".format(s))

    n = plant.n
    open_loop = s * np.eye(n) - plant.A0 - plant.A1 * np.exp(-plant.h * s)

    def closed_det(K):
        return det(open_loop + g * (plant.B @ np.reshape(K, (1, n))))

    F0 = closed_det(np.zeros(n))
    a = np.array([closed_det(e) - F0 for e in np.eye(n)])
    lhs = np.vstack([a.real, a.imag])
    rhs = -np.array([F0.real, F0.imag])
    if numerical_rank(lhs, 1.0e-10) < 2:
        raise SingularPlacement("placement equations at s = {} are rank deficient".format(s))
    K = lstsq(lhs, rhs)[0]

    residual = abs(closed_det(K))
    scale = abs(F0) + np.sum(np.abs(a)) * (1.0 + np.max(np.abs(K)))
    if residual > 1.0e-9 * scale:
        raise SingularPlacement("placement residual {:.3g} is too large".format(residual / scale))
    logger.info("placed poles %s at tau = %.4g with K = %s", s, tau, K.tolist())
    return K


def ctrb(A, B):
    """Controllability matrix [B, AB, ..., A^(n-1) B]."""
    n = A.shape[0]
    m = B.shape[1]
    mat = np.zeros((n, n * m))
    mat[:, :m] = B
    for k in range(1, n):
        mat[:, k * m : (k + 1) * m] = A @ mat[:, (k - 1) * m : k * m]
    return mat


def is_controllable(A0, A1, B, cfg=DEFAULT_TOLERANCES):
    """Rank test of (A0 + A1, B), sufficient for controllability of the delay system."""
    A0 = np.asarray(A0, dtype=float)
    A1 = np.asarray(A1, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A0.shape[0], -1)
    if A0.shape != A1.shape or A0.ndim != 2 or A0.shape[0] != A0.shape[1]:
        raise ShapeError("A0 and A1 must be square matrices of the same dimension")
    return numerical_rank(ctrb(A0 + A1, B), cfg.rank_tol) == A0.shape[0]
