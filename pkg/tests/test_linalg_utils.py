import numpy as np
import pytest

from tdsstab.config import ToleranceConfig
from tdsstab.exceptions import ConfigurationError, ShapeError
from tdsstab.linalg_utils import (
    as_square_matrix,
    canonical_null_space,
    cluster_eigenvalues,
    loewdin_orthonormalize,
    numerical_rank,
    orthonormal_complement,
    subspace_distance,
)


def test_loewdin_orthonormalize_keeps_span(rng):
    vectors = rng.normal(size=(5, 3))
    ortho = loewdin_orthonormalize(vectors)

    np.testing.assert_allclose(ortho.T @ ortho, np.eye(3), atol=1e-12)
    assert subspace_distance(ortho, vectors) < 1e-10


def test_loewdin_orthonormalize_fixes_orthonormal_input():
    basis = np.eye(4)[:, [0, 2]]
    np.testing.assert_allclose(loewdin_orthonormalize(basis), basis, atol=1e-14)


def test_numerical_rank():
    assert numerical_rank(np.diag([1.0, 1e-12, 0.0]), 1e-8) == 1
    assert numerical_rank(np.diag([1.0, 1e-6, 0.0]), 1e-8) == 2
    assert numerical_rank(np.zeros((3, 3)), 1e-8) == 0


def test_canonical_null_space_of_zero_matrix_is_identity():
    np.testing.assert_allclose(canonical_null_space(np.zeros((3, 3)), 1e-8), np.eye(3), atol=1e-12)


def test_canonical_null_space_annihilates(rng):
    mat = rng.normal(size=(2, 4))
    basis = canonical_null_space(mat, 1e-8)

    assert basis.shape == (4, 2)
    np.testing.assert_allclose(mat @ basis, 0.0, atol=1e-10)


def test_canonical_null_space_full_rank():
    assert canonical_null_space(np.eye(3), 1e-8).shape == (3, 0)


def test_orthonormal_complement():
    basis = np.array([[1.0], [0.0], [0.0]])
    comp = orthonormal_complement(basis)

    assert comp.shape == (3, 2)
    np.testing.assert_allclose(basis.T @ comp, 0.0, atol=1e-14)


def test_subspace_distance_of_different_dimensions():
    assert subspace_distance(np.eye(3)[:, :1], np.eye(3)[:, :2]) == pytest.approx(0.5 * np.pi)


def test_cluster_eigenvalues():
    clusters = cluster_eigenvalues(np.array([2.0, 1.0, 1.0 + 1e-8, 2.0 + 1e-3]), 1e-6)

    assert [sorted(c.tolist()) for c in clusters] == [[1, 2], [0], [3]]


def test_cluster_eigenvalues_chains_neighbours():
    clusters = cluster_eigenvalues(np.array([0.0, 0.8e-6, 1.6e-6]), 1e-6)
    assert len(clusters) == 1


def test_cluster_eigenvalues_of_short_input():
    assert cluster_eigenvalues(np.array([]), 1e-6) == []
    (single,) = cluster_eigenvalues(np.array([1.0 + 2.0j]), 1e-6)
    assert single.tolist() == [0]


@pytest.mark.parametrize("seed", range(3))
def test_cluster_eigenvalues_separates_conjugate_pairs(seed):
    vals = np.random.default_rng(seed).normal(size=4) * (1.0 + 1.0j)
    vals = np.concatenate([vals, vals.conj()])
    clusters = cluster_eigenvalues(vals, 1e-6)

    assert sorted(len(c) for c in clusters) == [1] * 8


@pytest.mark.parametrize("mat", [np.zeros((2, 3)), np.array([[1.0, np.nan], [0.0, 1.0]])])
def test_as_square_matrix_rejects(mat):
    with pytest.raises(ShapeError):
        as_square_matrix(mat)


def test_tolerance_config():
    cfg = ToleranceConfig()
    assert cfg.to_dict() == {"rank_tol": 1e-8, "eig_cluster_tol": 1e-6, "residual_tol": 1e-8}
    assert cfg.replace(rank_tol=1e-6).rank_tol == 1e-6

    with pytest.raises(ConfigurationError):
        ToleranceConfig(rank_tol=0.0)
    with pytest.raises(ConfigurationError):
        cfg.replace(residual_tol=-1.0)
