import logging

import numpy as np

from scipy.cluster.hierarchy import fcluster, linkage
from scipy.linalg import qr, subspace_angles, null_space, svdvals
from scipy.spatial.distance import pdist

from tdsstab.exceptions import ShapeError

logger = logging.getLogger(__name__)


def get_loewdin_trafo(overlap_mat):
    """
    Computes the symmetric (Loewdin) inverse square root of an overlap (Gram) matrix.

    Parameters:
        overlap_mat (ndarray): The Hermitian overlap matrix.

    Returns:
        ndarray: The transformation S^(-1/2).
    """
    vals, vecs = np.linalg.eigh(overlap_mat)
    inverse_sqrt_vals = np.where(vals > 1.0e-15, 1 / np.sqrt(vals), 0.0)
    return np.array(np.dot(vecs * inverse_sqrt_vals, vecs.conj().T))


def loewdin_orthonormalize(vectors):
    """
    Orthonormalizes the columns of a full-rank matrix with the Loewdin transformation.
    Among all orthonormal bases of the column span, the result is closest to the
    input columns, so an already orthonormal input is returned unchanged.

    Parameters:
        vectors (ndarray): n x k matrix with linearly independent columns.

    Returns:
        ndarray: n x k matrix with orthonormal columns spanning the same space.
    """
    overlap = vectors.conj().T @ vectors
    return vectors @ get_loewdin_trafo(overlap)


def as_square_matrix(mat, name="matrix"):
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ShapeError("{} must be square, got shape {}".format(name, mat.shape))
    if not np.all(np.isfinite(mat)):
        raise ShapeError("{} contains non-finite entries".format(name))
    return mat


def numerical_rank(mat, rank_tol):
    """Number of singular values above rank_tol times the largest one."""
    mat = np.atleast_2d(mat)
    if mat.size == 0:
        return 0
    sing_vals = svdvals(mat)
    if sing_vals[0] == 0.0:
        return 0
    return int(np.sum(sing_vals > rank_tol * sing_vals[0]))


def canonical_null_space(mat, rank_tol):
    """
    Computes a deterministic basis of the numerical null space of mat.

    The orthonormal null space basis N is rotated into the basis N (N[rows])^-1 where
    rows are the pivot rows selected by a column-pivoted QR of N^T. The resulting
    basis does not depend on the rotation freedom of the SVD; for the identity
    matrix in the eigenvalue problem it reproduces the canonical unit vectors.

    Parameters:
        mat (ndarray): Square or rectangular matrix.
        rank_tol (float): Relative threshold for the null space.

    Returns:
        ndarray: n x d basis of the null space (d may be zero).
    """
    basis = null_space(mat, rcond=rank_tol)
    dim = basis.shape[1]
    if dim == 0:
        return basis
    _, _, pivots = qr(basis.conj().T, pivoting=True)
    rows = np.sort(pivots[:dim])
    return basis @ np.linalg.inv(basis[rows, :])


def orthonormal_complement(basis):
    """Orthonormal basis of the orthogonal complement of the column span of basis."""
    return null_space(basis.conj().T)


def subspace_distance(basis_a, basis_b):
    """Largest principal angle between two subspaces (pi/2 for different dimensions)."""
    if basis_a.shape[1] != basis_b.shape[1]:
        return 0.5 * np.pi
    return float(np.max(subspace_angles(basis_a, basis_b)))


def cluster_eigenvalues(vals, tol):
    """
    Groups numerically coinciding eigenvalues.

    Two eigenvalues belong to the same cluster if they are connected by a chain of
    eigenvalues with pairwise distance at most tol.

    Parameters:
        vals (ndarray): Eigenvalues.
        tol (float): Clustering radius.

    Returns:
        list: Index arrays, one per cluster, ordered by the real and then imaginary
            part of the cluster mean.
    """
    vals = np.asarray(vals)
    if len(vals) < 2:
        return [np.arange(len(vals))] if len(vals) else []

    points = np.column_stack([vals.real, vals.imag])
    labels = fcluster(linkage(pdist(points), "single"), tol, criterion="distance")
    clusters = [np.nonzero(labels == label)[0] for label in np.unique(labels)]
    means = [np.mean(vals[c]) for c in clusters]
    order = sorted(range(len(clusters)), key=lambda i: (round(means[i].real, 10), means[i].imag))
    return [clusters[i] for i in order]
