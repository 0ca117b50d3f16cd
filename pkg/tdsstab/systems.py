"""
Linear time-delay systems dx/dt = sum_k A_k x(t - d_k) where each delay is either a
fixed offset h or the variable delay tau.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from tdsstab.exceptions import ShapeError
from tdsstab.linalg_utils import as_square_matrix


@dataclass(frozen=True)
class DelayTerm:
    """
    One term A x(t - d) with delay d = offset + mult * tau.

    Attributes:
        matrix (ndarray): n x n coefficient matrix.
        offset (float): Fixed part of the delay, >= 0.
        mult (int): Multiplicity of the variable delay tau (0 or 1).
    """

    matrix: np.ndarray
    offset: float = 0.0
    mult: int = 0

    def __post_init__(self):
        object.__setattr__(self, "matrix", as_square_matrix(np.array(self.matrix, dtype=float)))
        object.__setattr__(self, "offset", float(self.offset))
        if not np.isfinite(self.offset) or self.offset < 0.0:
            raise ShapeError("delay offset must be finite and >= 0, got {}".format(self.offset))
        if self.mult not in (0, 1):
            raise ShapeError("variable delay multiplicity must be 0 or 1, got {}".format(self.mult))

    @property
    def key(self):
        return (self.offset, self.mult)

    def delay(self, tau):
        return self.offset + self.mult * tau

    @property
    def is_undelayed(self):
        return self.offset == 0.0 and self.mult == 0


@dataclass(frozen=True)
class TimeDelaySystem:
    """
    Linear time-delay system with an optional single-input matrix B.

    Exactly one term carries zero delay; all matrices share the dimension n and
    no two terms share the same delay.
    """

    terms: tuple
    B: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        terms = tuple(self.terms)
        if len(terms) == 0:
            raise ShapeError("a system needs at least one term")
        n = terms[0].matrix.shape[0]
        for term in terms:
            if term.matrix.shape != (n, n):
                raise ShapeError(
                    "all matrices must be {0} x {0}, got {1}".format(n, term.matrix.shape)
                )
        keys = [term.key for term in terms]
        if len(set(keys)) != len(keys):
            raise ShapeError("two terms share the same delay")
        if sum(term.is_undelayed for term in terms) != 1:
            raise ShapeError("exactly one term must carry zero delay")
        object.__setattr__(self, "terms", terms)
        if self.B is not None:
            B = np.array(self.B, dtype=float)
            if B.ndim == 1:
                B = B[:, np.newaxis]
            if B.ndim != 2 or B.shape[0] != n:
                raise ShapeError("input matrix must have {} rows, got shape {}".format(n, B.shape))
            if not np.all(np.isfinite(B)):
                raise ShapeError("input matrix contains non-finite entries")
            object.__setattr__(self, "B", B)

    @classmethod
    def single_delay(cls, A1, A2, B=None):
        """The system dx/dt = A1 x(t) + A2 x(t - tau)."""
        return cls((DelayTerm(A1), DelayTerm(A2, 0.0, 1)), B)

    @property
    def n(self):
        return self.terms[0].matrix.shape[0]

    @property
    def undelayed(self):
        return next(term.matrix for term in self.terms if term.is_undelayed)

    @property
    def delayed_terms(self):
        return [term for term in self.terms if not term.is_undelayed]

    @property
    def has_fixed_delays(self):
        return any(term.offset > 0.0 for term in self.terms)

    @property
    def is_single_delay(self):
        """True for dx/dt = A1 x(t) + A2 x(t - tau) without fixed delays."""
        return len(self.terms) == 2 and {t.key for t in self.terms} == {(0.0, 0), (0.0, 1)}

    def variable_matrix(self):
        return next(term.matrix for term in self.terms if term.key == (0.0, 1))

    def matrix_sum(self):
        return sum(term.matrix for term in self.terms)

    def delays(self, tau):
        return [term.delay(tau) for term in self.terms]

    def max_delay(self, tau):
        return max(self.delays(tau))

    def with_delayed_feedback(self, K):
        """
        Closes the loop with the delayed difference feedback u = K (x(t - tau) - x(t)),
        which adds -BK to the undelayed term and BK to the variable-delay term.
        """
        if self.B is None:
            raise ShapeError("delayed feedback requires an input matrix")
        K = np.asarray(K, dtype=float).reshape(1, -1)
        if K.shape[1] != self.n or self.B.shape[1] != 1:
            raise ShapeError("gain must be a row of length {}".format(self.n))
        BK = self.B @ K
        terms = []
        has_variable = False
        for term in self.terms:
            if term.is_undelayed:
                terms.append(DelayTerm(term.matrix - BK))
            elif term.key == (0.0, 1):
                terms.append(DelayTerm(term.matrix + BK, 0.0, 1))
                has_variable = True
            else:
                terms.append(term)
        if not has_variable:
            terms.append(DelayTerm(BK, 0.0, 1))
        return TimeDelaySystem(tuple(terms), self.B)


@dataclass(frozen=True)
class Plant:
    """
    Plant dx/dt = A0 x(t) + A1 x(t - h) + B u(t) with a fixed delay h > 0 and a
    single input.
    """

    A0: np.ndarray
    A1: np.ndarray
    B: np.ndarray
    h: float

    def __post_init__(self):
        A0 = as_square_matrix(np.array(self.A0, dtype=float), "A0")
        A1 = as_square_matrix(np.array(self.A1, dtype=float), "A1")
        B = np.array(self.B, dtype=float).reshape(-1, 1)
        if A1.shape != A0.shape or B.shape[0] != A0.shape[0]:
            raise ShapeError("plant matrices have inconsistent dimensions")
        if not np.all(np.isfinite(B)):
            raise ShapeError("input matrix contains non-finite entries")
        if not np.isfinite(self.h) or self.h <= 0.0:
            raise ShapeError("plant delay h must be positive, got {}".format(self.h))
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "A1", A1)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "h", float(self.h))

    @property
    def n(self):
        return self.A0.shape[0]

    def to_system(self):
        return TimeDelaySystem((DelayTerm(self.A0), DelayTerm(self.A1, self.h, 0)), self.B)


def matrix_from_json(value, name, rows=None, cols=None):
    """
    Converts a nested list to a float matrix, naming the offending entry on failure.
    """
    if not isinstance(value, list) or not value or not all(isinstance(row, list) for row in value):
        raise ShapeError("{} must be a non-empty list of rows".format(name))
    width = len(value[0])
    for i, row in enumerate(value):
        if len(row) != width:
            raise ShapeError("{} row {} has {} entries, expected {}".format(name, i, len(row), width))
        for j, entry in enumerate(row):
            if isinstance(entry, bool) or not isinstance(entry, (int, float)):
                raise ShapeError("{}[{}][{}] is not a number".format(name, i, j))
            if not np.isfinite(entry):
                raise ShapeError("{}[{}][{}] is not finite".format(name, i, j))
    mat = np.array(value, dtype=float)
    if rows is not None and mat.shape[0] != rows or cols is not None and mat.shape[1] != cols:
        raise ShapeError("{} must be {} x {}, got {} x {}".format(name, rows, cols, *mat.shape))
    return mat
