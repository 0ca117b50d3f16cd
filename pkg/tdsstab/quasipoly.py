"""
Characteristic quasi-polynomials of linear time-delay systems and the delay-sweep
stability analysis built on them: imaginary-axis crossings, crossing directions,
the number of unstable roots as a function of the variable delay and a spectral
cross-check by Chebyshev collocation of the solution operator.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as P

from scipy.interpolate import BarycentricInterpolator
from scipy.linalg import det, eigvals, norm
from scipy.optimize import brentq, minimize_scalar

from tdsstab.exceptions import (
    CrossingSweepError,
    DegenerateCrossing,
    InterpolationError,
    PreconditionError,
    StabilityInconsistency,
    WEliminationError,
)
from tdsstab.systems import TimeDelaySystem

logger = logging.getLogger(__name__)

TRANSVERSAL = "transversal"
TANGENTIAL = "tangential"

COEFF_TOL = 1.0e-10
FIT_TOL = 1.0e-8
LOG_CLIP = 700.0
TOUCH_TOL = 1.0e-8
ON_CIRCLE_TOL = 1.0e-6
MULTIPLICITY_TOL = 1.0e-5
MERGE_TOL = 1.0e-6
THETA_SNAP = 1.0e-9
EVENT_MERGE_TOL = 1.0e-9
NEWTON_TOL = 1.0e-10
# log moduli this close to zero count as exactly on the unit circle
ZERO_SNAP = 1.0e-12


@dataclass
class QuasiTerm:
    """
    Term q(s) exp(-s (offset + mult * tau)) with real polynomial coefficients in
    ascending powers of s.
    """

    coeffs: np.ndarray
    offset: float = 0.0
    mult: int = 0

    def __post_init__(self):
        self.coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))

    def delay(self, tau):
        return self.offset + self.mult * tau

    def to_dict(self):
        return {"coeffs": self.coeffs.tolist(), "offset": self.offset, "mult": self.mult}


@dataclass
class CharacteristicFunction:
    """
    F(s, tau) = sum_j q_j(s) exp(-s (a_j + m_j tau)), the determinant of the
    delay pencil sI - sum_k A_k exp(-s d_k).
    """

    terms: list
    n: int

    def __call__(self, s, tau=0.0):
        s = np.asarray(s, dtype=complex)
        value = np.zeros_like(s)
        for term in self.terms:
            value = value + P.polyval(s, term.coeffs) * np.exp(-s * term.delay(tau))
        return value

    def ds(self, s, tau=0.0):
        """Partial derivative with respect to s."""
        s = np.asarray(s, dtype=complex)
        value = np.zeros_like(s)
        for term in self.terms:
            d = term.delay(tau)
            q = P.polyval(s, term.coeffs)
            dq = P.polyval(s, P.polyder(term.coeffs))
            value = value + (dq - d * q) * np.exp(-s * d)
        return value

    def dtau(self, s, tau=0.0):
        """Partial derivative with respect to the variable delay."""
        s = np.asarray(s, dtype=complex)
        value = np.zeros_like(s)
        for term in self.terms:
            if term.mult:
                value = value - s * term.mult * P.polyval(s, term.coeffs) * np.exp(-s * term.delay(tau))
        return value

    def scale(self, s, tau=0.0):
        """Sum of the term magnitudes, the reference for relative residuals."""
        s = np.asarray(s, dtype=complex)
        value = np.zeros(s.shape)
        for term in self.terms:
            value = value + np.abs(P.polyval(s, term.coeffs) * np.exp(-s * term.delay(tau)))
        return value

    def derivative_scale(self, s, tau=0.0):
        s = np.asarray(s, dtype=complex)
        value = np.zeros(s.shape)
        for term in self.terms:
            d = term.delay(tau)
            weight = np.abs(np.exp(-s * d))
            q = np.abs(P.polyval(s, term.coeffs))
            dq = np.abs(P.polyval(s, P.polyder(term.coeffs)))
            value = value + weight * (dq + d * q + np.abs(s) * term.mult * q)
        return value

    @property
    def max_mult(self):
        return max(term.mult for term in self.terms)

    @property
    def is_commensurate(self):
        return all(term.offset == 0.0 for term in self.terms)

    def u_coefficients(self, omega):
        """
        Coefficients C_m(omega) of F(j omega, tau) as a polynomial in
        u = exp(-j omega tau), shape (len(omega), max_mult + 1).
        """
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        s = 1j * omega
        coeffs = np.zeros((len(omega), self.max_mult + 1), dtype=complex)
        for term in self.terms:
            coeffs[:, term.mult] += P.polyval(s, term.coeffs) * np.exp(-s * term.offset)
        return coeffs

    def u_coefficients_ds(self, omega):
        """Derivatives dC_m/ds at s = j omega."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        s = 1j * omega
        coeffs = np.zeros((len(omega), self.max_mult + 1), dtype=complex)
        for term in self.terms:
            q = P.polyval(s, term.coeffs)
            dq = P.polyval(s, P.polyder(term.coeffs))
            coeffs[:, term.mult] += (dq - term.offset * q) * np.exp(-s * term.offset)
        return coeffs

    def u_roots(self, omega):
        return _polynomial_roots(self.u_coefficients(omega)[0])

    def polynomial_at_zero_delay(self):
        """Coefficients of F(s, 0) when no fixed offsets are present."""
        if not self.is_commensurate:
            raise PreconditionError("F(s, 0) is not a polynomial when fixed delays are present")
        total = np.zeros(max(len(t.coeffs) for t in self.terms))
        for term in self.terms:
            total[: len(term.coeffs)] += term.coeffs
        return total

    def to_dict(self):
        return {"n": self.n, "terms": [term.to_dict() for term in self.terms]}

    @classmethod
    def from_dict(cls, data):
        terms = [QuasiTerm(t["coeffs"], float(t["offset"]), int(t["mult"])) for t in data["terms"]]
        return cls(terms, int(data["n"]))


def _polynomial_roots(coeffs):
    """Roots of sum_m coeffs[m] u^m (np.roots strips vanishing leading coefficients)."""
    coeffs = np.asarray(coeffs)
    if not np.any(coeffs):
        return np.array([], dtype=complex)
    return np.roots(coeffs[::-1])


def _pencil_scales(sys):
    """Radius for s and per-symbol norms that normalize the delay pencil."""
    rho = max(1.0, norm(sys.undelayed, 2))
    nus = []
    for sym in sys.delayed_terms:
        nu = norm(sym.matrix, 2)
        nus.append(nu if nu > 0.0 else 1.0)
    return rho, np.array(nus)


def char_function(sys, K=None):
    """
    Computes the characteristic quasi-polynomial det(sI - sum_k A_k exp(-s d_k)).

    Every distinct delayed term gets its own exponential symbol z_d. With
    s = rho sigma and z_d = (rho / nu_d) zeta_d, where rho bounds the undelayed matrix
    and nu_d is the norm of A_d, the pencil becomes rho (sigma I - A_0 / rho -
    sum_d zeta_d A_d / nu_d) with matrices of norm at most one. Its determinant is a
    polynomial of degree at most n in sigma and in every zeta_d, so sampling it on
    the (n+1)-th roots of unity in every variable and applying an inverse discrete
    Fourier transform recovers all coefficients up to rounding. Coefficients are
    thresholded in this normalized basis, scaled back and grouped by their total
    delay (fixed offset, multiplicity of tau).

    Parameters:
        sys (TimeDelaySystem): The system.
        K (ndarray): Optional gain row; the delayed difference feedback
            u = K (x(t - tau) - x(t)) is closed before the determinant is taken.

    Returns:
        CharacteristicFunction: The term list.

    Raises:
        InterpolationError: The determinant vanishes identically or the fitted
            polynomial does not reproduce the determinant.
    """
    if K is not None:
        sys = sys.with_delayed_feedback(K)

    n = sys.n
    symbols = sys.delayed_terms
    rho, nus = _pencil_scales(sys)
    B0 = sys.undelayed / rho
    scaled = [sym.matrix / nu for sym, nu in zip(symbols, nus)]

    npoints = n + 1
    nodes = np.exp(2j * np.pi * np.arange(npoints) / npoints)
    shape = (npoints,) * (len(symbols) + 1)

    samples = np.empty(shape, dtype=complex)
    eye = np.eye(n)
    for index in np.ndindex(*shape):
        pencil = nodes[index[0]] * eye - B0
        for mat, e in zip(scaled, index[1:]):
            pencil = pencil - nodes[e] * mat
        samples[index] = det(pencil)

    normalized = np.fft.fftn(samples) / samples.size
    largest = np.max(np.abs(normalized))
    if largest == 0.0:
        raise InterpolationError("determinant of the delay pencil vanishes identically")
    if np.max(np.abs(normalized.imag)) > 1.0e-8 * largest:
        logger.debug("discarding imaginary interpolation noise %.3g", np.max(np.abs(normalized.imag)))
    normalized = np.where(np.abs(normalized.real) > COEFF_TOL * max(1.0, largest), normalized.real, 0.0)

    # c_{j,k} = c'_{j,k} rho^(n - j - |k|) prod_d nu_d^k_d
    coeffs = np.zeros(shape)
    for index in zip(*np.nonzero(normalized)):
        k = np.array(index[1:], dtype=int)
        coeffs[index] = normalized[index] * rho ** (n - index[0] - k.sum()) * np.prod(nus ** k)

    grouped = defaultdict(lambda: np.zeros(n + 1))
    magnitude = defaultdict(lambda: np.zeros(n + 1))
    for index in zip(*np.nonzero(coeffs)):
        offset = sum(e * sym.offset for sym, e in zip(symbols, index[1:]))
        mult = sum(e * sym.mult for sym, e in zip(symbols, index[1:]))
        key = (round(offset, 12), int(mult))
        grouped[key][index[0]] += coeffs[index]
        magnitude[key][index[0]] += abs(coeffs[index])

    undelayed = grouped[(0.0, 0)]
    assert abs(undelayed[n] - 1.0) <= 1.0e-8, "leading coefficient of the undelayed term is not one"
    undelayed[n] = 1.0

    terms = []
    for key, poly in sorted(grouped.items(), key=lambda item: (item[0][1], item[0][0])):
        poly = np.where(np.abs(poly) > COEFF_TOL * magnitude[key], poly, 0.0)
        poly = P.polytrim(poly, 0.0)
        if np.any(poly):
            terms.append(QuasiTerm(poly, key[0], key[1]))

    _check_fit(sys, coeffs, rho, nus)
    logger.debug("characteristic function with %d term(s)", len(terms))
    return CharacteristicFunction(terms, n)


def _check_fit(sys, coeffs, rho, nus):
    rng = np.random.default_rng(0)
    symbols = sys.delayed_terms
    nonzero = list(zip(*np.nonzero(coeffs)))
    worst = 0.0
    for _ in range(3):
        s = rho * rng.uniform(0.5, 1.5) * np.exp(2j * np.pi * rng.uniform())
        z = rho / nus * np.exp(2j * np.pi * rng.uniform(size=len(symbols)))
        pencil = s * np.eye(sys.n) - sys.undelayed
        for sym, zd in zip(symbols, z):
            pencil = pencil - zd * sym.matrix
        exact = det(pencil)
        monomials = [coeffs[idx] * s ** idx[0] * np.prod(z ** np.array(idx[1:])) for idx in nonzero]
        fitted = np.sum(monomials)
        scale = np.sum(np.abs(monomials)) + abs(exact)
        worst = max(worst, abs(fitted - exact) / scale)
    if worst > FIT_TOL:
        raise InterpolationError(
            "characteristic polynomial fit residual {:.3g} exceeds {:.1g}".format(worst, FIT_TOL)
        )


def evaluate_cf(F, s, tau):
    return complex(F(s, tau))


@dataclass
class CrossingPoint:
    """
    Imaginary-axis root s = j omega reached at the delays tau_l = (theta + 2 pi l) / omega.

    Attributes:
        omega (float): Crossing frequency > 0.
        theta (float): Phase in [0, 2 pi).
        tendency (int): Sign of Re(ds/dtau): +1, -1 or 0 (indeterminate).
        kind (str): "transversal" if |u| - 1 changes sign, "tangential" if it only
            touches zero.
        multiplicity (int): Number of coinciding roots u on the unit circle.
    """

    omega: float
    theta: float
    tendency: int = 0
    kind: str = TRANSVERSAL
    multiplicity: int = 1

    @property
    def tau0(self):
        return self.theta / self.omega

    @property
    def period(self):
        return 2.0 * np.pi / self.omega

    def delays(self, tau_max):
        if self.tau0 > tau_max:
            return np.array([])
        count = int(np.floor((tau_max - self.tau0) / self.period + 1.0e-12)) + 1
        return self.tau0 + self.period * np.arange(count)

    def to_dict(self, tau_max=None):
        data = {
            "omega": self.omega,
            "theta": self.theta,
            "tendency": self.tendency,
            "kind": self.kind,
            "multiplicity": self.multiplicity,
        }
        if tau_max is not None:
            data["delays"] = self.delays(tau_max).tolist()
        return data


def _log_moduli(F, omegas):
    """Ascending log |u_i(omega)| per frequency, shape (len(omegas), max_mult)."""
    coeffs = F.u_coefficients(omegas)
    degree = coeffs.shape[1] - 1
    with np.errstate(divide="ignore"):
        if degree == 1:
            moduli = (np.log(np.abs(coeffs[:, 0])) - np.log(np.abs(coeffs[:, 1])))[:, np.newaxis]
            return np.clip(np.nan_to_num(moduli, nan=LOG_CLIP), -LOG_CLIP, LOG_CLIP)
        moduli = np.full((len(omegas), degree), LOG_CLIP)
        for i, row in enumerate(coeffs):
            vals = np.sort(np.log(np.abs(_polynomial_roots(row))))
            moduli[i, : len(vals)] = np.clip(vals, -LOG_CLIP, LOG_CLIP)
    return moduli


def _log_modulus(omega, F, branch):
    return _log_moduli(F, [omega])[0, branch]


def crossing_sweep(F, omega_max, grid_points=2000):
    """
    Finds all imaginary-axis roots j omega with 0 < omega <= omega_max that occur
    for some value of the variable delay.

    On the frequency grid F(j omega, tau) is a polynomial in u = exp(-j omega tau);
    a root s = j omega exists iff one of its roots u lies on the unit circle. The
    root moduli are sorted per frequency, so each branch is continuous even where
    roots coincide. Sign changes of log|u| are refined with brentq, touches (local
    minima of |log|u|| without sign change) with a bounded scalar minimization.

    Parameters:
        F (CharacteristicFunction): Characteristic function.
        omega_max (float): Upper frequency bound.
        grid_points (int): Number of grid frequencies.

    Returns:
        list: CrossingPoint objects sorted by frequency.
    """
    if not omega_max > 0.0:
        raise PreconditionError("omega_max must be positive, got {}".format(omega_max))
    if grid_points < 3:
        raise PreconditionError("the frequency grid needs at least 3 points")
    if F.max_mult == 0:
        return []

    omegas = np.linspace(omega_max / grid_points, omega_max, grid_points)
    moduli = _log_moduli(F, omegas)
    hits = []
    for branch in range(moduli.shape[1]):
        hits.extend(_branch_hits(F, omegas, moduli[:, branch], branch))

    points = []
    for omega, kind in hits:
        points.extend(_points_at(F, omega, kind))
    points = _merge_points(points)

    for point in points:
        _verify_point(F, point)
        if point.kind == TANGENTIAL or point.multiplicity > 1:
            point.tendency = 0
        else:
            point.tendency = root_tendency(F, point.omega, point.tau0, check=False)

    logger.info(
        "crossing sweep up to omega = %.4g found %d crossing(s) at %s",
        omega_max,
        len(points),
        ["{:.6g}".format(p.omega) for p in points],
    )
    return points


def _branch_hits(F, omegas, d, branch):
    d = np.where(np.abs(d) <= ZERO_SNAP, 0.0, d)
    hits = []
    for i in np.nonzero(d[:-1] * d[1:] < 0.0)[0]:
        hits.append((brentq(_log_modulus, omegas[i], omegas[i + 1], args=(F, branch), xtol=1.0e-12), TRANSVERSAL))

    absd = np.abs(d)
    for i in range(1, len(d) - 1):
        if d[i] == 0.0 and d[i - 1] * d[i + 1] < 0.0:
            hits.append((omegas[i], TRANSVERSAL))
            continue
        is_min = absd[i] <= absd[i - 1] and absd[i] <= absd[i + 1] and (absd[i] < absd[i - 1] or absd[i] < absd[i + 1])
        if not is_min or absd[i] > 0.5 or d[i - 1] * d[i + 1] <= 0.0 or d[i] * d[i - 1] < 0.0:
            continue
        side = np.sign(d[i - 1])
        lo, hi = omegas[i - 1], omegas[i + 1]
        res = minimize_scalar(
            lambda x: side * _log_modulus(x, F, branch),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1.0e-12},
        )
        if res.fun < -TOUCH_TOL:
            # two transversal crossings closer than the grid spacing
            hits.append((brentq(_log_modulus, lo, res.x, args=(F, branch), xtol=1.0e-12), TRANSVERSAL))
            hits.append((brentq(_log_modulus, res.x, hi, args=(F, branch), xtol=1.0e-12), TRANSVERSAL))
        elif res.fun <= TOUCH_TOL:
            hits.append((float(res.x), TANGENTIAL))
    return hits


def _points_at(F, omega, kind):
    roots = F.u_roots(omega)
    if len(roots) == 0:
        return []
    with np.errstate(divide="ignore"):
        distance = np.abs(np.log(np.abs(roots)))
    points = []
    for u in roots[distance <= ON_CIRCLE_TOL]:
        theta = float(np.mod(-np.angle(u), 2.0 * np.pi))
        if theta > 2.0 * np.pi - THETA_SNAP:
            theta = 0.0
        multiplicity = int(np.sum(np.abs(roots - u) <= MULTIPLICITY_TOL * max(1.0, abs(u))))
        points.append(CrossingPoint(float(omega), theta, 0, kind, multiplicity))
    return points


def _merge_points(points):
    merged = []
    for point in sorted(points, key=lambda p: (p.omega, p.theta)):
        for other in merged:
            dtheta = abs(point.theta - other.theta)
            dtheta = min(dtheta, 2.0 * np.pi - dtheta)
            if abs(point.omega - other.omega) <= MERGE_TOL * max(1.0, other.omega) and dtheta <= MERGE_TOL:
                other.multiplicity = max(other.multiplicity, point.multiplicity)
                if point.kind == TRANSVERSAL:
                    other.kind = TRANSVERSAL
                break
        else:
            merged.append(point)
    return merged


def _verify_point(F, point):
    s = 1j * point.omega
    value = abs(F(s, point.tau0))
    scale = F.scale(s, point.tau0)
    simple = point.kind == TRANSVERSAL and point.multiplicity == 1
    if value > (1.0e-6 if simple else 1.0e-4) * scale:
        raise CrossingSweepError(
            "crossing at omega = {:.6g} has residual {:.3g}; refine the frequency grid".format(point.omega, value / scale)
        )
    if value > 1.0e-8 * scale:
        logger.warning("crossing at omega = %.6g only resolved to relative residual %.3g", point.omega, value / scale)


def root_tendency(F, omega_c, tau_c, tol=1.0e-8, check=True):
    """
    Direction in which the root s = j omega_c crosses the imaginary axis as the
    delay increases through tau_c: sign of Re(ds/dtau) with
    ds/dtau = -(dF/dtau)/(dF/ds).

    Returns:
        int: +1 (towards the right half plane), -1, or 0 if the direction cannot be
            determined (repeated root or vanishing real part).
    """
    s = 1j * omega_c
    if check and abs(F(s, tau_c)) > 1.0e-8 * F.scale(s, tau_c):
        raise PreconditionError("j {:.6g} is not a root at tau = {:.6g}".format(omega_c, tau_c))
    Fs = complex(F.ds(s, tau_c))
    if abs(Fs) <= tol * F.derivative_scale(s, tau_c):
        return 0
    rate = -complex(F.dtau(s, tau_c)) / Fs
    if abs(rate.real) <= tol:
        return 0
    return 1 if rate.real > 0.0 else -1


def direct_tendency(F, omega_c, tol=1.0e-8):
    """
    Crossing direction from the frequency derivative of |C_0(j omega)|^2 - |C_1(j omega)|^2
    for characteristic functions C_0 + C_1 exp(-s tau).
    """
    if F.max_mult != 1:
        return 0
    C = F.u_coefficients([omega_c])[0]
    dC = 1j * F.u_coefficients_ds([omega_c])[0]
    value = 2.0 * (np.real(np.conj(C[0]) * dC[0]) - np.real(np.conj(C[1]) * dC[1]))
    scale = 2.0 * (abs(C[0]) * abs(dC[0]) + abs(C[1]) * abs(dC[1]))
    if abs(value) <= tol * scale:
        return 0
    return 1 if value > 0.0 else -1


@dataclass
class WPolynomial:
    """Real polynomial W(u), u = omega^2, in ascending coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))

    def __call__(self, u):
        return P.polyval(u, self.coeffs)

    def deriv(self, u):
        return P.polyval(u, P.polyder(self.coeffs))

    def nonnegative_roots(self, tol=1.0e-8):
        roots = P.polyroots(self.coeffs) if len(self.coeffs) > 1 else np.array([])
        scale = max(1.0, np.max(np.abs(roots))) if len(roots) else 1.0
        real = np.sort(roots[np.abs(roots.imag) <= np.sqrt(tol) * scale].real)
        return real[real >= -tol]

    def crossing_frequencies(self):
        return np.sqrt(np.clip(self.nonnegative_roots(), 0.0, None))


def _reflect(poly):
    """q(s) -> q(-s)."""
    return Polynomial(poly.coef * (-1.0) ** np.arange(len(poly.coef)))


def _is_zero(poly, reference):
    return np.max(np.abs(poly.coef)) <= 1.0e-12 * max(reference, 1.0)


def w_polynomial(F):
    """
    Eliminates the exponential from a commensurate characteristic function.

    With F = sum_k p_k(s) z^k and its reflection F^+ = sum_k p_k(-s) z^(m-k), both
    vanish at an imaginary-axis root; p_0(-s) F - p_m(s) F^+ lowers the degree in z.
    Iterating down to degree zero leaves an even polynomial in s which, with
    s^2 = -u, becomes W(u).

    Raises:
        WEliminationError: F has fixed delays or the elimination collapses to zero.
    """
    if not F.is_commensurate:
        raise WEliminationError("conjugate elimination needs a purely commensurate characteristic function")
    degree = F.max_mult
    polys = [Polynomial([0.0]) for _ in range(degree + 1)]
    for term in F.terms:
        polys[term.mult] = polys[term.mult] + Polynomial(term.coeffs)

    if degree == 0:
        even = _reflect(polys[0]) * polys[0]
    else:
        while degree > 0:
            reference = max(np.max(np.abs(p.coef)) for p in polys) ** 2
            if _is_zero(polys[degree], np.sqrt(reference)):
                polys.pop()
                degree -= 1
                continue
            head = _reflect(polys[0])
            polys = [head * polys[j] - polys[degree] * _reflect(polys[degree - j]) for j in range(degree)]
            polys = [p.trim(1.0e-12 * reference) for p in polys]
            if all(_is_zero(p, reference) for p in polys):
                raise WEliminationError("conjugate elimination is inconclusive (identically zero)")
            degree -= 1
        even = polys[0]

    c = even.coef
    coeffs = np.array([c[2 * k] * (-1.0) ** k for k in range((len(c) + 1) // 2)])
    return WPolynomial(coeffs)


def w_derivative_sign(W, u, tol=1.0e-8):
    value = W.deriv(u)
    powers = np.arange(1, len(W.coeffs))
    scale = np.sum(np.abs(powers * W.coeffs[1:] * np.abs(u) ** (powers - 1))) if len(powers) else 0.0
    if abs(value) <= tol * max(scale, 1.0e-300):
        return 0
    return 1 if value > 0.0 else -1


@dataclass
class StabilityMap:
    """
    Number NU of characteristic roots in the open right half plane as a piecewise
    constant function of the variable delay on [0, tau_max].

    Attributes:
        nu0 (int): Unstable roots at tau = 0.
        tau_max (float): Upper delay bound.
        events (list): Ascending (tau, delta NU) pairs.
        intervals (list): (tau_lo, tau_hi, NU) triples covering [0, tau_max].
        tangential (list): Frequencies at which roots touch the axis and return.
        degenerate (bool): Whether indeterminate crossing directions were met
            (resolved as tangential touches).
        degenerate_omegas (list): Their frequencies.
    """

    nu0: int
    tau_max: float
    events: list
    intervals: list
    tangential: list = field(default_factory=list)
    degenerate: bool = False
    degenerate_omegas: list = field(default_factory=list)

    def nu_at(self, tau):
        for lo, hi, nu in self.intervals:
            if lo <= tau < hi:
                return nu
        return self.intervals[-1][2]

    def stable_intervals(self):
        return [(lo, hi) for lo, hi, nu in self.intervals if nu == 0]

    def minimum_intervals(self):
        lowest = min(nu for _, _, nu in self.intervals)
        return lowest, [(lo, hi) for lo, hi, nu in self.intervals if nu == lowest]

    def rows(self):
        return [(lo, hi, nu) for lo, hi, nu in self.intervals]

    def to_dict(self):
        return {
            "nu0": self.nu0,
            "tau_max": self.tau_max,
            "events": [list(e) for e in self.events],
            "intervals": [list(i) for i in self.intervals],
            "stable_intervals": [list(i) for i in self.stable_intervals()],
            "tangential": list(self.tangential),
            "degenerate": self.degenerate,
            "degenerate_omegas": list(self.degenerate_omegas),
        }


def _intervals_from_events(nu0, events, tau_max):
    nu = nu0
    start = 0.0
    intervals = []
    for tau, change in events:
        if tau <= EVENT_MERGE_TOL:
            nu += change
            continue
        intervals.append((start, tau, nu))
        nu += change
        start = tau
    intervals.append((start, tau_max, nu))
    for lo, hi, count in intervals:
        if count < 0:
            raise StabilityInconsistency(
                "unstable root count {} on ({:.6g}, {:.6g}) is negative".format(count, lo, hi)
            )
    return intervals


def _merge_events(raw):
    merged = []
    for tau, change in sorted(raw):
        if merged and abs(tau - merged[-1][0]) <= EVENT_MERGE_TOL * max(1.0, tau):
            merged[-1][1] += change
        else:
            merged.append([tau, change])
    return [(float(tau), int(change)) for tau, change in merged if change != 0]


def unstable_root_count(F, sys=None, tau=0.0, nodes=40):
    """
    Number of roots with positive real part at the given delay. Without fixed
    delays at tau = 0 the characteristic function is a polynomial and its roots
    (the eigenvalues of sum_k A_k) are counted directly.
    """
    if tau == 0.0 and F.is_commensurate:
        if sys is not None:
            roots = eigvals(sys.matrix_sum())
        else:
            roots = P.polyroots(F.polynomial_at_zero_delay())
    else:
        if sys is None:
            raise PreconditionError("counting roots with fixed delays needs the system")
        roots = rightmost_roots(sys, tau, nodes)
    if len(roots) == 0:
        return 0
    radius = np.max(np.abs(roots))
    return int(np.sum(roots.real > 1.0e-9 * (1.0 + radius)))


def stability_map(F, sys=None, tau_max=10.0, crossings=None, omega_max=None, grid_points=2000, nu0=None, nodes=40):
    """
    Counts unstable roots along the variable delay.

    Starting from the count at tau = 0, every delay at which a root pair crosses
    the imaginary axis changes the count by +2 or -2 according to the crossing
    direction. Tangential touches leave it unchanged; repeated roots with
    indeterminate direction abort the analysis.

    Parameters:
        F (CharacteristicFunction): Characteristic function.
        sys (TimeDelaySystem): The system, used for the count at tau = 0.
        tau_max (float): Upper delay bound.
        crossings (list): Precomputed crossings; swept up to omega_max otherwise.
        omega_max (float): Frequency bound of the sweep (default from sys).
        grid_points (int): Sweep resolution.
        nu0 (int): Count at tau = 0 if known.
        nodes (int): Collocation nodes when nu0 needs rightmost_roots.

    Returns:
        StabilityMap: The piecewise constant count.

    Raises:
        DegenerateCrossing: A crossing direction cannot be determined.
    """
    if crossings is None:
        if omega_max is None:
            if sys is None:
                raise PreconditionError("either omega_max or the system is needed")
            omega_max = default_omega_max(sys)
        crossings = crossing_sweep(F, omega_max, grid_points)
    if nu0 is None:
        nu0 = unstable_root_count(F, sys, 0.0, nodes)

    raw = []
    tangential = []
    for point in crossings:
        delays = point.delays(tau_max)
        if len(delays) == 0:
            continue
        if point.tendency == 0:
            if point.kind == TANGENTIAL and point.multiplicity == 1:
                tangential.append(point.omega)
                continue
            raise DegenerateCrossing(point.omega, point.tau0)
        for tau in delays:
            if tau <= EVENT_MERGE_TOL and point.tendency < 0:
                continue
            raw.append((float(tau), 2 * point.tendency))

    events = _merge_events(raw)
    intervals = _intervals_from_events(nu0, events, tau_max)
    smap = StabilityMap(
        nu0, float(tau_max), events, intervals, tangential, bool(tangential), list(tangential)
    )
    logger.info("stability map: NU0 = %d, %d event(s), stable intervals %s", nu0, len(events), smap.stable_intervals())
    return smap


def combine_maps(maps):
    """Sums the unstable-root counts of decoupled blocks."""
    tau_max = min(m.tau_max for m in maps)
    bounds = sorted({b for m in maps for lo, hi, _ in m.intervals for b in (lo, hi) if b <= tau_max} | {0.0, tau_max})
    points = [bounds[0]]
    for b in bounds[1:]:
        if b - points[-1] > EVENT_MERGE_TOL * max(1.0, b):
            points.append(b)

    intervals = []
    for lo, hi in zip(points[:-1], points[1:]):
        mid = 0.5 * (lo + hi)
        nu = sum(m.nu_at(mid) for m in maps)
        if intervals and intervals[-1][2] == nu:
            intervals[-1] = (intervals[-1][0], hi, nu)
        else:
            intervals.append((lo, hi, nu))

    nu0 = sum(m.nu0 for m in maps)
    events = []
    previous = nu0
    for lo, _, nu in intervals:
        if nu != previous:
            events.append((lo, nu - previous))
        previous = nu
    tangential = [w for m in maps for w in m.tangential]
    degenerate_omegas = [w for m in maps for w in m.degenerate_omegas]
    return StabilityMap(nu0, tau_max, events, intervals, tangential, bool(degenerate_omegas), degenerate_omegas)


def default_omega_max(sys):
    """
    Frequency bound for the crossing sweep. Every root with Re s >= 0 satisfies
    |s| <= sum_k ||A_k||_2.
    """
    radius = np.max(np.abs(eigvals(sys.matrix_sum())))
    bound = sum(norm(term.matrix, 2) for term in sys.terms)
    return float(max(2.0 * (1.0 + radius), 1.05 * bound))


def cheb_differentiation(N):
    """
    Chebyshev points x_j = cos(j pi / N) and the corresponding differentiation
    matrix (negative sum trick on the diagonal).
    """
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** np.arange(N + 1)
    dX = x[:, np.newaxis] - x[np.newaxis, :]
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D = D - np.diag(D.sum(axis=1))
    return x, D


def _newton(F, s, tau, max_iter=50):
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            value = complex(F(s, tau))
            if not np.isfinite(value):
                return None
            if abs(value) <= NEWTON_TOL * max(float(F.scale(s, tau)), 1.0e-300):
                return s
            slope = complex(F.ds(s, tau))
            if slope == 0.0 or not np.isfinite(slope):
                return None
            s = s - value / slope
            if not np.isfinite(s) or abs(s) > 1.0e8:
                return None
    return None


def rightmost_roots(sys, tau, nodes=40, n_roots=None, F=None):
    """
    Characteristic roots at a fixed delay from a Chebyshev collocation of the
    infinitesimal generator of the solution operator on [-d_max, 0].

    Every eigenvalue of the discretization is refined by Newton's method on the
    characteristic function; estimates that do not converge are dropped.

    Parameters:
        sys (TimeDelaySystem): The system.
        tau (float): Value of the variable delay.
        nodes (int): Polynomial degree N of the collocation (N + 1 points).
        n_roots (int): Number of rightmost roots requested (all converged by default).
        F (CharacteristicFunction): Characteristic function if already available.

    Returns:
        ndarray: Distinct roots sorted by decreasing real part.
    """
    if nodes < 10:
        raise PreconditionError("at least 10 collocation nodes are needed")
    if F is None:
        F = char_function(sys)
    n = sys.n
    d_max = sys.max_delay(tau)

    if d_max == 0.0:
        estimates = eigvals(sys.matrix_sum())
    else:
        x, D = cheb_differentiation(nodes)
        theta = 0.5 * d_max * (x - 1.0)
        D = D * (2.0 / d_max)
        basis = BarycentricInterpolator(theta, np.eye(nodes + 1))
        generator = np.zeros((n * (nodes + 1), n * (nodes + 1)))
        for term in sys.terms:
            weights = np.atleast_2d(basis(-term.delay(tau)))
            generator[:n, :] += np.kron(weights, term.matrix)
        generator[n:, :] = np.kron(D[1:, :], np.eye(n))
        estimates = eigvals(generator)

    estimates = estimates[np.isfinite(estimates)]
    estimates = estimates[np.argsort(-estimates.real)]
    roots = []
    dropped = 0
    for estimate in estimates:
        root = _newton(F, complex(estimate), tau)
        if root is None:
            dropped += 1
            continue
        if any(abs(root - r) <= 1.0e-7 * (1.0 + abs(r)) for r in roots):
            continue
        roots.append(root)

    roots = np.array(sorted(roots, key=lambda r: (-r.real, -r.imag)), dtype=complex)
    logger.debug("%d collocation eigenvalue(s) dropped during Newton refinement", dropped)
    if n_roots is not None:
        if len(roots) < n_roots:
            logger.warning("only %d of %d requested roots converged", len(roots), n_roots)
        roots = roots[:n_roots]
    return roots


def root_locus(sys, taus, nodes=40, n_roots=None):
    F = char_function(sys)
    return [rightmost_roots(sys, tau, nodes, n_roots, F) for tau in taus]


def analyze_system(sys, tau_max, omega_max=None, grid_points=2000, nodes=40):
    """Characteristic function, crossings and stability map of one system."""
    if not isinstance(sys, TimeDelaySystem):
        raise PreconditionError("expected a TimeDelaySystem")
    F = char_function(sys)
    omega_max = default_omega_max(sys) if omega_max is None else omega_max
    crossings = crossing_sweep(F, omega_max, grid_points)
    smap = stability_map(F, sys, tau_max, crossings=crossings, nodes=nodes)
    return F, crossings, smap
