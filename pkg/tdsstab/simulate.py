"""
Fixed-step integration of linear retarded delay differential equations by the
method of steps: classical Runge-Kutta steps with delayed states read from the
initial history or from a cubic Hermite interpolation of the computed past.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from scipy.interpolate import CubicHermiteSpline, CubicSpline

from tdsstab.exceptions import IntegrationError, PreconditionError
from tdsstab.feedback import closed_loop_system

logger = logging.getLogger(__name__)


class HistoryFunction:
    """
    Initial function on [-h_max, 0], either a constant vector or a cubic spline
    through sampled values.
    """

    def __init__(self, fun, kind, t_min=-np.inf):
        self._fun = fun
        self.kind = kind
        self.t_min = t_min

    @classmethod
    def constant(cls, vector):
        vector = np.atleast_1d(np.asarray(vector, dtype=float))
        return cls(lambda t: vector.copy(), "constant")

    @classmethod
    def sampled(cls, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, np.newaxis]
        if times[-1] < 0.0 or np.any(np.diff(times) <= 0.0):
            raise PreconditionError("history samples must be increasing and reach t = 0")
        return cls(CubicSpline(times, values, axis=0), "sampled", times[0])

    def __call__(self, t):
        if t < self.t_min - 1.0e-12:
            raise PreconditionError("history is not defined at t = {:.6g}".format(t))
        return np.asarray(self._fun(t), dtype=float)

    def __add__(self, other):
        kind = "constant" if self.kind == other.kind == "constant" else "sampled"
        return HistoryFunction(lambda t: self(t) + other(t), kind, max(self.t_min, other.t_min))

    def __rmul__(self, alpha):
        return HistoryFunction(lambda t: alpha * self(t), self.kind, self.t_min)


@dataclass
class Trajectory:
    """
    States on a uniform time grid with the derivatives used for dense output.
    """

    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    _spline: object = field(default=None, repr=False)

    def __call__(self, t):
        if self._spline is None:
            self._spline = CubicHermiteSpline(self.times, self.states, self.derivatives, axis=0)
        return self._spline(t)

    @property
    def final_state(self):
        return self.states[-1]

    def to_csv(self, path):
        header = ",".join(["t"] + ["x{}".format(i + 1) for i in range(self.states.shape[1])])
        np.savetxt(path, np.column_stack([self.times, self.states]), delimiter=",", header=header, comments="")


def _delayed_terms(sys, tau):
    undelayed = np.zeros((sys.n, sys.n))
    delayed = []
    for term in sys.terms:
        d = term.delay(tau)
        if d == 0.0:
            undelayed = undelayed + term.matrix
        else:
            delayed.append((d, term.matrix))
    return undelayed, delayed


def integrate(sys, history, t_end, dt=None, tau=0.0):
    """
    Integrates dx/dt = sum_k A_k x(t - d_k) from t = 0 to t_end.

    Parameters:
        sys (TimeDelaySystem): The system (closed loop included).
        history (HistoryFunction): Initial function on [-max delay, 0].
        t_end (float): Final time.
        dt (float): Step size, at most a tenth of the smallest positive delay
            (default: a fiftieth); shortened so that the last step ends at t_end.
        tau (float): Value of the variable delay.

    Returns:
        Trajectory: States and derivatives on the uniform grid.

    Raises:
        IntegrationError: The step is too large or the solution diverges.
    """
    if not t_end > 0.0:
        raise PreconditionError("t_end must be positive, got {}".format(t_end))
    undelayed, delayed = _delayed_terms(sys, tau)
    min_delay = min((d for d, _ in delayed), default=None)
    if dt is None:
        dt = min_delay / 50.0 if min_delay is not None else 1.0e-2
    if min_delay is not None and dt > min_delay / 10.0 * (1.0 + 1.0e-12):
        raise IntegrationError("step {:.3g} exceeds a tenth of the smallest delay {:.3g}".format(dt, min_delay))

    steps = int(np.ceil(t_end / dt - 1.0e-9))
    # the last grid point lands on t_end
    dt = t_end / steps
    times = np.linspace(0.0, t_end, steps + 1)
    states = np.zeros((steps + 1, sys.n))
    derivatives = np.zeros((steps + 1, sys.n))
    states[0] = history(0.0)

    def past(t):
        if t <= 0.0:
            return history(t)
        i = min(int(np.floor(t / dt)), steps - 1)
        h = (t - times[i]) / dt
        h2, h3 = h * h, h * h * h
        return (
            (2.0 * h3 - 3.0 * h2 + 1.0) * states[i]
            + (h3 - 2.0 * h2 + h) * dt * derivatives[i]
            + (-2.0 * h3 + 3.0 * h2) * states[i + 1]
            + (h3 - h2) * dt * derivatives[i + 1]
        )

    def rhs(t, x):
        value = undelayed @ x
        for d, mat in delayed:
            value = value + mat @ past(t - d)
        return value

    for i in range(steps):
        t, x = times[i], states[i]
        k1 = rhs(t, x)
        derivatives[i] = k1
        k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = rhs(t + dt, x + dt * k3)
        states[i + 1] = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(states[i + 1])):
            raise IntegrationError("solution diverged at t = {:.6g}".format(times[i + 1]), t_blowup=float(times[i + 1]))
    derivatives[steps] = rhs(times[steps], states[steps])

    logger.debug("integrated %d steps of size %.3g", steps, dt)
    return Trajectory(times, states, derivatives)


def integrate_closed_loop(plant, K, tau, history, t_end, dt=None):
    return integrate(closed_loop_system(plant, K), history, t_end, dt, tau)


def settling_time(traj, band=0.02, reference=None):
    """
    First grid time after which the state stays within band times the initial
    deviation from the reference (infinity norm).

    Returns:
        float or None: Settling time, None if the final sample is still outside.
    """
    if not 0.0 < band < 1.0:
        raise PreconditionError("band must lie in (0, 1), got {}".format(band))
    reference = np.zeros(traj.states.shape[1]) if reference is None else np.asarray(reference, dtype=float)
    deviation = np.max(np.abs(traj.states - reference), axis=1)
    limit = band * deviation[0]
    outside = np.nonzero(deviation > limit)[0]
    if len(outside) == 0:
        return 0.0
    last = outside[-1]
    if last == len(deviation) - 1:
        return None
    return float(traj.times[last + 1])
