"""
Common invariant subspaces of a pair of matrices and the block triangularization
they induce. A time-delay system dx/dt = A1 x(t) + A2 x(t - tau) whose matrices
share an invariant subspace splits into two smaller systems with the same spectrum.
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from scipy.linalg import LinAlgError, eigvals, inv, norm, orth

from tdsstab.config import DEFAULT_TOLERANCES
from tdsstab.exceptions import (
    ConvergenceError,
    NoDecomposition,
    NotInvariantError,
    PreconditionError,
    ShapeError,
)
from tdsstab.linalg_utils import (
    as_square_matrix,
    canonical_null_space,
    cluster_eigenvalues,
    loewdin_orthonormalize,
    numerical_rank,
    orthonormal_complement,
    subspace_distance,
)
from tdsstab.systems import TimeDelaySystem

logger = logging.getLogger(__name__)

# Maximal number of candidate subspaces assembled from Jordan chain segments
MAX_CANDIDATES = 4096
SUBSPACE_MATCH_TOL = 1.0e-6


@dataclass
class JordanChainRecord:
    """
    Jordan chain x_0, ..., x_k of a matrix A with (A - lam I) x_0 = 0 and
    (A - lam I) x_j = x_{j-1}.
    """

    eigenvalue: complex
    vectors: list

    def __len__(self):
        return len(self.vectors)

    def as_matrix(self):
        return np.column_stack(self.vectors)

    def conj(self):
        return JordanChainRecord(np.conj(self.eigenvalue), [v.conj() for v in self.vectors])


@dataclass
class SubspaceBasis:
    """Orthonormal basis (n x k) of a real subspace."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis)
        if basis.ndim == 1:
            basis = basis[:, np.newaxis]
        if basis.ndim != 2 or not 1 <= basis.shape[1] <= basis.shape[0]:
            raise ShapeError("subspace basis must be n x k with 1 <= k <= n")
        if not np.allclose(basis.conj().T @ basis, np.eye(basis.shape[1]), atol=1.0e-8):
            raise ShapeError("subspace basis is not orthonormal")
        self.basis = basis

    @classmethod
    def from_vectors(cls, vectors, rank_tol=DEFAULT_TOLERANCES.rank_tol):
        """Orthonormal basis of the span of the given vectors (columns or list)."""
        if isinstance(vectors, (list, tuple)):
            vectors = np.column_stack(vectors)
        vectors = np.real_if_close(np.asarray(vectors), tol=1000)
        if numerical_rank(vectors, rank_tol) < vectors.shape[1]:
            return cls(orth(vectors, rcond=rank_tol))
        return cls(loewdin_orthonormalize(vectors))

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def k(self):
        return self.basis.shape[1]

    def distance(self, other):
        return subspace_distance(self.basis, other.basis)


@dataclass
class DecompositionResult:
    """
    Result of a block triangularization Q^-1 A_i Q = [[A_11, A_12], [0, A_22]].

    Attributes:
        Q (ndarray): Transformation whose first k columns span the invariant subspace.
        Qinv (ndarray): Inverse of Q.
        blocks (list): Per input matrix a dict with the diagonal and coupling blocks.
        k (int): Dimension of the invariant subspace.
        residual (float): Largest norm of a bottom-left block.
        subsystems (list): Time-delay systems of the diagonal blocks (when decomposing
            a system).
    """

    Q: np.ndarray
    Qinv: np.ndarray
    blocks: list
    k: int
    residual: float
    subsystems: list = field(default_factory=list)

    @property
    def dims(self):
        return [self.k, self.Q.shape[0] - self.k]

    def to_dict(self):
        return {
            "k": self.k,
            "residual": self.residual,
            "Q": self.Q.tolist(),
            "Qinv": self.Qinv.tolist(),
            "blocks": [{key: val.tolist() for key, val in block.items()} for block in self.blocks],
        }

    @classmethod
    def from_dict(cls, data):
        Q = np.array(data["Q"], dtype=float)
        blocks = [{key: np.array(val, dtype=float) for key, val in block.items()} for block in data["blocks"]]
        Qinv = np.array(data["Qinv"], dtype=float) if "Qinv" in data else inv(Q)
        return cls(Q, Qinv, blocks, int(data["k"]), float(data["residual"]))


def jordan_chains(A, cfg=DEFAULT_TOLERANCES):
    """
    Computes Jordan chains of A for every eigenvalue, covering all of C^n.

    Eigenvalues closer than cfg.eig_cluster_tol are treated as one eigenvalue of the
    combined algebraic multiplicity. Chains are built top down from the nested null
    spaces of powers of (A - lam I). Chains of complex conjugate eigenvalues are
    complex conjugates of each other.

    Parameters:
        A (ndarray): n x n matrix.
        cfg (ToleranceConfig): Tolerances.

    Returns:
        list: JordanChainRecord objects whose vectors together form a basis.
    """
    A = as_square_matrix(A, "A")
    n = A.shape[0]
    try:
        vals = eigvals(A)
    except LinAlgError as err:
        raise ConvergenceError("eigenvalue computation failed: {}".format(err)) from err

    clusters = cluster_eigenvalues(vals, cfg.eig_cluster_tol)
    centers = [np.mean(vals[c]) for c in clusters]
    real_matrix = np.isrealobj(A)

    records = []
    for cluster, lam in zip(clusters, centers):
        if abs(lam.imag) <= cfg.eig_cluster_tol:
            lam = complex(lam.real, 0.0)
        # conjugate partners of a real matrix come from mirroring
        if real_matrix and lam.imag < 0.0:
            continue
        chains = _chains_for_eigenvalue(A, lam, len(cluster), cfg)
        records.extend(chains)
        if real_matrix and lam.imag > 0.0:
            records.extend(chain.conj() for chain in chains)

    assert all(len(r) > 0 for r in records)
    total = sum(len(r) for r in records)
    if total != n or numerical_rank(np.column_stack([r.as_matrix() for r in records]), cfg.rank_tol) != n:
        raise ConvergenceError("Jordan chains do not form a basis; adjust eig_cluster_tol")
    return records


def _chains_for_eigenvalue(A, lam, multiplicity, cfg):
    n = A.shape[0]
    shifted = A - lam * np.eye(n)
    if lam.imag == 0.0:
        shifted = shifted.real

    kernels = [np.zeros((n, 0), dtype=shifted.dtype)]
    power = np.eye(n, dtype=shifted.dtype)
    for _ in range(multiplicity):
        power = shifted @ power
        kernel = canonical_null_space(power, cfg.rank_tol)
        kernels.append(kernel)
        if kernel.shape[1] >= multiplicity:
            break
    if kernels[-1].shape[1] != multiplicity:
        raise ConvergenceError(
            "generalized eigenspace of eigenvalue {:.6g} has dimension {} instead of {}".format(
                lam, kernels[-1].shape[1], multiplicity
            )
        )

    top = len(kernels) - 1
    level_vectors = {level: [] for level in range(1, top + 1)}
    chains = []
    for level in range(top, 0, -1):
        existing = np.column_stack([kernels[level - 1]] + level_vectors[level])
        rank = numerical_rank(existing, cfg.rank_tol) if existing.shape[1] > 0 else 0
        for cand in kernels[level].T:
            extended = np.column_stack([existing, cand])
            if numerical_rank(extended, cfg.rank_tol) <= rank:
                continue
            vectors = [cand]
            for _ in range(level - 1):
                vectors.insert(0, shifted @ vectors[0])
            scale = max(norm(v) for v in vectors)
            vectors = [v / scale for v in vectors]
            chains.append(JordanChainRecord(lam, vectors))
            for depth, vec in enumerate(vectors):
                level_vectors[depth + 1].append(vec)
            existing = extended
            rank += 1

    logger.debug(
        "eigenvalue %s: %d chain(s) of lengths %s", lam, len(chains), [len(c) for c in chains]
    )
    return chains


@dataclass
class RealChainBlock:
    """
    Real basis of a Jordan chain (or of a conjugate pair of chains, as columns
    Re x_0, Im x_0, Re x_1, ...). Every leading segment of `step` columns per chain
    vector spans an invariant subspace.
    """

    basis: np.ndarray
    step: int

    def segments(self):
        """Bases of all leading segments, starting with the empty one."""
        return [self.basis[:, :length] for length in range(0, self.basis.shape[1] + 1, self.step)]


def realify_chains(records):
    """
    Converts Jordan chains to real blocks. Chains with negative imaginary eigenvalue
    part are skipped, their conjugate partner carries the same real span.
    """
    blocks = []
    for record in records:
        if record.eigenvalue.imag < 0.0:
            continue
        if record.eigenvalue.imag == 0.0:
            blocks.append(RealChainBlock(np.real(record.as_matrix()), 1))
        else:
            cols = [part for v in record.vectors for part in (v.real, v.imag)]
            blocks.append(RealChainBlock(np.column_stack(cols), 2))
    return blocks


def invariant_check(J, mats, cfg=DEFAULT_TOLERANCES):
    """
    Rank certificate for invariance: span(J) is invariant under A iff the numerical
    rank of [J, A J] equals the rank of J.

    Parameters:
        J (SubspaceBasis or ndarray): Basis of the subspace.
        mats (list): Matrices to test.
        cfg (ToleranceConfig): Tolerances.

    Returns:
        bool: True if the subspace is invariant under every matrix.
    """
    basis = J.basis if isinstance(J, SubspaceBasis) else np.asarray(J)
    if basis.ndim == 1:
        basis = basis[:, np.newaxis]
    rank = numerical_rank(basis, cfg.rank_tol)
    for A in mats:
        A = as_square_matrix(A)
        if A.shape[0] != basis.shape[0]:
            raise ShapeError("matrix of dimension {} does not act on a subspace of R^{}".format(A.shape[0], basis.shape[0]))
        if numerical_rank(np.hstack([basis, A @ basis]), cfg.rank_tol) != rank:
            return False
    return True


def _subspaces_from_chains(records, mats, cfg, k_wanted):
    n = mats[0].shape[0]
    units = [block.segments() for block in realify_chains(records)]
    found = []
    combos = itertools.product(*units)
    for count, combo in enumerate(combos):
        if count >= MAX_CANDIDATES:
            logger.warning("stopped subspace enumeration after %d candidates", MAX_CANDIDATES)
            break
        dim = sum(seg.shape[1] for seg in combo)
        if dim == 0 or dim == n or (k_wanted is not None and dim != k_wanted):
            continue
        cand = np.hstack(combo)
        if numerical_rank(cand, cfg.rank_tol) < dim:
            continue
        basis = SubspaceBasis.from_vectors(cand, cfg.rank_tol)
        if not invariant_check(basis, mats, cfg):
            continue
        if any(basis.distance(other) < SUBSPACE_MATCH_TOL for other in found):
            continue
        found.append(basis)
    return found


def find_common_invariant_subspaces(A1, A2, cfg=DEFAULT_TOLERANCES, k_wanted=None):
    """
    Enumerates nontrivial real subspaces invariant under both A1 and A2.

    Candidates are spans of leading segments of the (realified) Jordan chains of A1;
    if none of them is invariant under A2 as well, the chains of A2 are used. The
    enumeration is not exhaustive for matrices with eigenvalues of geometric
    multiplicity larger than one.

    Parameters:
        A1 (ndarray): First n x n matrix.
        A2 (ndarray): Second n x n matrix.
        cfg (ToleranceConfig): Tolerances.
        k_wanted (int): Restrict the search to subspaces of this dimension.

    Returns:
        list: Distinct SubspaceBasis objects ordered by dimension.
    """
    A1 = as_square_matrix(A1, "A1")
    A2 = as_square_matrix(A2, "A2")
    if A1.shape != A2.shape:
        raise ShapeError("matrices must have the same dimension")
    mats = [A1, A2]

    found = _subspaces_from_chains(jordan_chains(A1, cfg), mats, cfg, k_wanted)
    if not found:
        found = _subspaces_from_chains(jordan_chains(A2, cfg), mats, cfg, k_wanted)
    found.sort(key=lambda b: b.k)
    logger.info("found %d common invariant subspace(s) of dimensions %s", len(found), [b.k for b in found])
    return found


def common_eigenvectors(A1, A2, cfg=DEFAULT_TOLERANCES):
    """
    Vectors v with A1 v = lam v and A2 v = mu v.

    For every pair of eigenvalues the eigenspaces of A1 and A2 are intersected by
    the null space of [E1, -E2].

    Returns:
        list: Normalized common eigenvectors (complex for complex eigenvalues).
    """
    A1 = as_square_matrix(A1, "A1")
    A2 = as_square_matrix(A2, "A2")
    if A1.shape != A2.shape:
        raise ShapeError("matrices must have the same dimension")
    n = A1.shape[0]

    def eigenspaces(A):
        vals = eigvals(A)
        spaces = []
        for cluster in cluster_eigenvalues(vals, cfg.eig_cluster_tol):
            lam = np.mean(vals[cluster])
            if abs(lam.imag) <= cfg.eig_cluster_tol:
                lam = lam.real
            space = canonical_null_space(A - lam * np.eye(n), cfg.rank_tol)
            if space.shape[1] > 0:
                spaces.append((lam, space))
        return spaces

    vectors = []
    for lam, E1 in eigenspaces(A1):
        for mu, E2 in eigenspaces(A2):
            coeffs = canonical_null_space(np.hstack([E1, -E2]), cfg.rank_tol)
            for c in coeffs.T:
                vec = E1 @ c[: E1.shape[1]]
                vec = vec / norm(vec)
                scale = max(1.0, norm(A1), norm(A2))
                if norm(A1 @ vec - lam * vec) <= 1.0e-8 * scale and norm(A2 @ vec - mu * vec) <= 1.0e-8 * scale:
                    vectors.append(np.real_if_close(vec, tol=1000))
    return vectors


def block_triangularize(mats, W, cfg=DEFAULT_TOLERANCES, completion=None):
    """
    Transforms matrices with common invariant subspace span(W) to upper block
    triangular form.

    Parameters:
        mats (list): Matrices sharing the invariant subspace.
        W (SubspaceBasis): Invariant subspace of dimension k < n.
        cfg (ToleranceConfig): Tolerances.
        completion (ndarray): Optional n x (n - k) completion of W to a basis; by
            default an orthonormal basis of the orthogonal complement.

    Returns:
        DecompositionResult: Transformation, blocks and residual.
    """
    if not isinstance(W, SubspaceBasis):
        W = SubspaceBasis.from_vectors(W, cfg.rank_tol)
    mats = [as_square_matrix(A) for A in mats]
    n, k = W.n, W.k
    if k >= n:
        raise ShapeError("invariant subspace must be proper, got dimension {} in R^{}".format(k, n))
    if not invariant_check(W, mats, cfg):
        raise NotInvariantError("subspace of dimension {} is not invariant under all matrices".format(k))

    if completion is None:
        completion = orthonormal_complement(W.basis)
    completion = np.asarray(completion)
    if completion.ndim == 1:
        completion = completion[:, np.newaxis]
    if completion.shape != (n, n - k):
        raise ShapeError("completion must be {} x {}".format(n, n - k))

    Q = np.hstack([W.basis, completion])
    if np.linalg.cond(Q) > 1.0 / cfg.rank_tol:
        raise ConvergenceError("completed basis is numerically singular")
    Qinv = inv(Q)

    blocks = []
    residual = 0.0
    scale = max(max(norm(A, 2) for A in mats), 1.0)
    for A in mats:
        T = Qinv @ A @ Q
        blocks.append({"top_left": T[:k, :k], "coupling": T[:k, k:], "bottom_right": T[k:, k:]})
        residual = max(residual, norm(T[k:, :k], 2))
    if residual > cfg.residual_tol * scale:
        raise NotInvariantError("bottom-left residual {:.3g} exceeds tolerance".format(residual))

    logger.debug("block triangularization with k = %d, residual %.3g", k, residual)
    return DecompositionResult(Q, Qinv, blocks, k, float(residual))


def decompose_system(sys, cfg=DEFAULT_TOLERANCES):
    """
    Splits dx/dt = A1 x(t) + A2 x(t - tau) along the lowest-dimensional common
    invariant subspace into the subsystems of the two diagonal blocks.

    Raises:
        NoDecomposition: No common invariant subspace was found.
    """
    if not isinstance(sys, TimeDelaySystem) or not sys.is_single_delay:
        raise PreconditionError("decomposition requires a system dx/dt = A1 x(t) + A2 x(t - tau)")
    A1, A2 = sys.undelayed, sys.variable_matrix()
    subspaces = find_common_invariant_subspaces(A1, A2, cfg)
    if not subspaces:
        raise NoDecomposition("matrices share no nontrivial invariant subspace")
    result = block_triangularize([A1, A2], subspaces[0], cfg)
    result.subsystems = [
        TimeDelaySystem.single_delay(result.blocks[0]["top_left"], result.blocks[1]["top_left"]),
        TimeDelaySystem.single_delay(result.blocks[0]["bottom_right"], result.blocks[1]["bottom_right"]),
    ]
    logger.info("decomposed system of dimension %d into blocks %s", sys.n, result.dims)
    return result
