import math

import numpy as np
import pytest

from ghostvar.data import Dataset, SplitSample
from ghostvar.errors import DegenerateSimilarity, SchemaMismatch, ZeroRelevanceVariable
from ghostvar.linalg import RngState, SymEigen, partial_correlation_direct
from ghostvar.predictors import Predictor, fit_linear
from ghostvar.relevance import PermutationPlan, fit_ghosts, relevance_ghost
from ghostvar.relmatrix import (
    CaseVariableMatrix,
    ClusterTree,
    RelevanceMatrix,
    build_case_matrix,
    cluster_variables,
    gram_inverse_covariance_check,
    eigen_report,
    partial_corr_from_V,
    relevance_matrix,
    rp_matrix_structure_check,
)


def _dataset(X, y):
    X = np.asarray(X, float)
    return Dataset(
        features=X,
        y=np.asarray(y, float),
        feature_names=tuple(f"x{i}" for i in range(X.shape[1])),
        response_name="y",
    )


def _linear_split(n1=220, n2=140, p=4, seed=0, rho=0.4):
    rng = np.random.default_rng(seed)
    cov = rho * np.ones((p, p)) + (1 - rho) * np.eye(p)
    beta = rng.standard_normal(p) + 0.5

    def draw(n):
        X = rng.multivariate_normal(np.zeros(p), cov, size=n)
        return _dataset(X, X @ beta + rng.standard_normal(n))

    return SplitSample(train=draw(n1), test=draw(n2))


class _ConstantPredictor(Predictor):
    family = "constant"

    def _predict(self, X):
        return np.full(X.shape[0], 1.5)


def _matrix_from(values, names=None):
    values = np.asarray(values, float)
    p = values.shape[0]
    eigenvalues, vectors = np.linalg.eigh(values)
    order = np.argsort(-eigenvalues)
    return RelevanceMatrix(
        values=values,
        eigen=SymEigen(eigenvalues[order], vectors[:, order]),
        method="ghost",
        variable_names=tuple(names or (f"x{i}" for i in range(p))),
        centered_covariance=values,
    )


# ---------------------------------------------------------------------------
# Case-variable matrix
# ---------------------------------------------------------------------------

def test_case_matrix_linear_closed_form():
    split = _linear_split(seed=1)
    model = fit_linear(split.train)
    ghosts = fit_ghosts(split.test.features)
    A = build_case_matrix(model, split.test, ghosts)
    closed = (split.test.features - ghosts.columns) * model.ols.slopes
    assert np.max(np.abs(A.values - closed)) < 1e-9
    assert A.method == "ghost"


def test_case_matrix_constant_model_is_zero():
    split = _linear_split(seed=2)
    model = _ConstantPredictor(split.test.feature_names)
    ghosts = fit_ghosts(split.test.features)
    A = build_case_matrix(model, split.test, ghosts)
    assert np.array_equal(A.values, np.zeros_like(A.values))


def test_case_matrix_identity_permutation_is_zero():
    split = _linear_split(seed=3)
    model = fit_linear(split.train)
    plan = PermutationPlan.identity(split.n2, split.test.p)
    A = build_case_matrix(model, split.test, plan)
    assert np.array_equal(A.values, np.zeros_like(A.values))
    assert A.method == "permutation"


# ---------------------------------------------------------------------------
# Relevance matrix
# ---------------------------------------------------------------------------

def test_relevance_matrix_diagonal_matches_per_variable_values():
    split = _linear_split(seed=4)
    model = fit_linear(split.train)
    ghosts = fit_ghosts(split.test.features)
    V = relevance_matrix(build_case_matrix(model, split.test, ghosts))
    rel = relevance_ghost(model, split.test, ghosts)
    assert np.max(np.abs(np.diag(V.values) - rel)) < 1e-10 * max(rel.max(), 1.0)


def test_relevance_matrix_diagonal_matches_permutation_values():
    from ghostvar.relevance import relevance_permutation

    split = _linear_split(seed=44)
    model = fit_linear(split.train)
    plan = PermutationPlan.generate(split.n2, split.test.p, RngState(45))
    V = relevance_matrix(build_case_matrix(model, split.test, plan))
    rel = relevance_permutation(model, split.test, plan)
    assert np.max(np.abs(np.diag(V.values) - rel)) < 1e-10 * max(rel.max(), 1.0)


def test_relevance_matrix_is_psd_with_complete_spectrum():
    split = _linear_split(seed=5)
    model = fit_linear(split.train)
    ghosts = fit_ghosts(split.test.features)
    V = relevance_matrix(build_case_matrix(model, split.test, ghosts))
    assert np.min(V.eigen.eigenvalues) >= -1e-9 * V.total_relevance
    assert V.eigen.eigenvalues.sum() == pytest.approx(V.total_relevance, rel=1e-9)
    recon = V.eigen.eigenvectors @ np.diag(V.eigen.eigenvalues) @ V.eigen.eigenvectors.T
    assert np.max(np.abs(recon - V.values)) < 1e-9 * max(V.total_relevance, 1.0)


def test_relevance_matrix_rank_one_case():
    A = CaseVariableMatrix(
        values=np.column_stack([np.linspace(-1, 1, 30), np.zeros(30), np.zeros(30)]),
        method="ghost",
        variable_names=("a", "b", "c"),
    )
    V = relevance_matrix(A)
    assert np.count_nonzero(V.eigen.eigenvalues) == 1


def test_relevance_matrix_equals_linear_factorization():
    split = _linear_split(seed=6)
    model = fit_linear(split.train)
    ghosts = fit_ghosts(split.test.features)
    V = relevance_matrix(build_case_matrix(model, split.test, ghosts))
    # independent reconstruction from ghost residual cross-products
    R = split.test.features - ghosts.columns
    G = R.T @ R / split.n2
    closed = np.outer(model.ols.slopes, model.ols.slopes) * G
    assert np.max(np.abs(V.values - closed)) < 1e-9 * np.max(np.abs(closed))


def test_relevance_matrix_warns_when_underdetermined():
    A = CaseVariableMatrix(
        values=np.random.default_rng(0).standard_normal((3, 5)),
        method="ghost",
        variable_names=tuple("abcde"),
    )
    with pytest.warns(UserWarning):
        relevance_matrix(A)


# ---------------------------------------------------------------------------
# Partial correlations from V
# ---------------------------------------------------------------------------

def test_partial_corr_matches_residual_oracle():
    split = _linear_split(seed=7)
    model = fit_linear(split.train)
    ghosts = fit_ghosts(split.test.features)
    V = relevance_matrix(build_case_matrix(model, split.test, ghosts))
    P = partial_corr_from_V(V, slopes=model.ols.slopes)
    X = split.test.features
    for j in range(split.test.p):
        assert P.values[j, j] == -1.0
        for k in range(j + 1, split.test.p):
            oracle = partial_correlation_direct(X, j, k)
            assert P.values[j, k] == pytest.approx(oracle, abs=1e-9)
            assert P.values[k, j] == P.values[j, k]


def test_partial_corr_matches_inverse_covariance_formula():
    split = _linear_split(seed=8)
    model = fit_linear(split.train)
    ghosts = fit_ghosts(split.test.features)
    V = relevance_matrix(build_case_matrix(model, split.test, ghosts))
    P = partial_corr_from_V(V, slopes=model.ols.slopes)
    Sinv = np.linalg.inv(np.cov(split.test.features, rowvar=False))
    for j in range(split.test.p):
        for k in range(j + 1, split.test.p):
            oracle = -Sinv[j, k] / math.sqrt(Sinv[j, j] * Sinv[k, k])
            assert P.values[j, k] == pytest.approx(oracle, abs=1e-9)


def test_partial_corr_raw_formula_exact_for_positive_slopes():
    # without slope information the ratio is exact when slope products are positive
    rng = np.random.default_rng(77)
    cov = 0.5 * np.ones((3, 3)) + 0.5 * np.eye(3)
    beta = np.array([1.0, 0.7, 1.3])
    X1 = rng.multivariate_normal(np.zeros(3), cov, size=250)
    X2 = rng.multivariate_normal(np.zeros(3), cov, size=150)
    train = _dataset(X1, X1 @ beta + 0.3 * rng.standard_normal(250))
    test = _dataset(X2, X2 @ beta + 0.3 * rng.standard_normal(150))
    model = fit_linear(train)
    assert np.all(model.ols.slopes > 0)
    V = relevance_matrix(build_case_matrix(model, test, fit_ghosts(X2)))
    P = partial_corr_from_V(V)
    for j in range(3):
        for k in range(j + 1, 3):
            oracle = partial_correlation_direct(X2, j, k)
            assert P.values[j, k] == pytest.approx(oracle, abs=1e-9)


def test_partial_corr_flags_zero_relevance_variable():
    V = _matrix_from(np.diag([1.0, 0.0, 2.0]))
    P = partial_corr_from_V(V)
    assert P.undefined == ("x1",)
    assert np.isnan(P.values[0, 1]) and np.isnan(P.values[1, 2])
    assert np.isfinite(P.values[0, 2])
    with pytest.raises(ZeroRelevanceVariable):
        partial_corr_from_V(V, strict=True)


def test_partial_corr_sign_structure():
    # positively partially correlated pair with positive slopes => negative v_jk
    split = _linear_split(seed=9, rho=0.8)
    model = fit_linear(split.train)
    ghosts = fit_ghosts(split.test.features)
    V = relevance_matrix(build_case_matrix(model, split.test, ghosts))
    P = partial_corr_from_V(V)
    for j in range(split.test.p):
        for k in range(j + 1, split.test.p):
            if P.values[j, k] == 0:
                continue
            assert np.sign(V.values[j, k]) == -np.sign(P.values[j, k])


# ---------------------------------------------------------------------------
# Inverse-covariance reconstruction of G
# ---------------------------------------------------------------------------

def test_gram_identity_exact_on_random_instances():
    rng = np.random.default_rng(10)
    for trial in range(5):
        A = rng.standard_normal((5, 5))
        cov = A @ A.T + 0.5 * np.eye(5)
        X = rng.multivariate_normal(np.zeros(5), cov, size=120)
        ghosts = fit_ghosts(X)
        assert gram_inverse_covariance_check(X, ghosts) < 1e-9


def test_gram_identity_two_by_two_hand_expansion():
    rng = np.random.default_rng(11)
    X = rng.standard_normal((60, 2))
    X[:, 1] = 0.6 * X[:, 0] + 0.8 * X[:, 1]
    ghosts = fit_ghosts(X)
    assert gram_inverse_covariance_check(X, ghosts) < 1e-9
    # hand expansion: for p = 2 the ghost residual of each column is the
    # centered column minus its simple regression on the other
    xc = X - X.mean(axis=0)
    s00, s11 = xc[:, 0] @ xc[:, 0], xc[:, 1] @ xc[:, 1]
    s01 = xc[:, 0] @ xc[:, 1]
    r0 = xc[:, 0] - (s01 / s11) * xc[:, 1]
    r1 = xc[:, 1] - (s01 / s00) * xc[:, 0]
    assert ghosts.residual_variances[0] == pytest.approx(r0 @ r0 / 60, rel=1e-10)
    assert ghosts.residual_variances[1] == pytest.approx(r1 @ r1 / 60, rel=1e-10)


def test_gram_identity_orthogonalized_columns_give_diagonal_G():
    rng = np.random.default_rng(12)
    raw = rng.standard_normal((80, 3))
    q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    X = q  # centered orthonormal columns
    ghosts = fit_ghosts(X)
    R = X - ghosts.columns
    G = R.T @ R / 80
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-12
    assert gram_inverse_covariance_check(X, ghosts) < 1e-9


# ---------------------------------------------------------------------------
# Permutation-matrix structure
# ---------------------------------------------------------------------------

def test_rp_structure_close_for_independent_columns():
    rng = np.random.default_rng(13)
    X1 = rng.standard_normal((900, 4))
    X2 = rng.standard_normal((1000, 4))
    beta = np.array([1.0, -2.0, 0.5, 1.5])
    train = _dataset(X1, X1 @ beta + rng.standard_normal(900))
    test = _dataset(X2, X2 @ beta + rng.standard_normal(1000))
    model = fit_linear(train)
    plan = PermutationPlan.generate(1000, 4, RngState(14))
    assert rp_matrix_structure_check(model, test, plan) < 0.15


def test_rp_structure_degenerate_identity_plan():
    split = _linear_split(seed=15)
    model = fit_linear(split.train)
    plan = PermutationPlan.identity(split.n2, split.test.p)
    assert math.isnan(rp_matrix_structure_check(model, split.test, plan))


def test_rp_structure_diagonal_tracks_doubled_variance():
    split = _linear_split(n1=900, n2=1000, p=3, seed=16, rho=0.0)
    model = fit_linear(split.train)
    plan = PermutationPlan.generate(split.n2, 3, RngState(17))
    V = relevance_matrix(build_case_matrix(model, split.test, plan))
    target = 2.0 * model.ols.slopes**2 * split.test.features.var(axis=0)
    assert np.max(np.abs(np.diag(V.values) / target - 1.0)) < 0.10


# ---------------------------------------------------------------------------
# Eigen report
# ---------------------------------------------------------------------------

def test_eigen_report_threshold_filtering():
    V = _matrix_from(np.diag([8.0, 1.5, 0.5, 0.05]))
    components = eigen_report(V, threshold=0.01)
    assert len(components) == 3  # 0.05 / 10.05 is below 1%
    assert components[0].eigenvalue == pytest.approx(8.0)
    assert components[0].fraction == pytest.approx(8.0 / 10.05, rel=1e-12)


def test_eigen_report_identity_matrix_uniform_fractions():
    V = _matrix_from(np.eye(4))
    components = eigen_report(V, threshold=0.01)
    assert len(components) == 4
    for comp in components:
        assert comp.fraction == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

def test_cluster_block_structure_recovered():
    block = np.array([[1.0, 0.9], [0.9, 1.0]])
    V = _matrix_from(
        np.block(
            [
                [block, 0.01 * np.ones((2, 2))],
                [0.01 * np.ones((2, 2)), 1.5 * block],
            ]
        )
    )
    tree = cluster_variables(V)
    assert isinstance(tree, ClusterTree)
    labels = tree.cut(2)
    assert labels[0] == labels[1]
    assert labels[2] == labels[3]
    assert labels[0] != labels[2]
    # first p - 2 merges stay inside the blocks
    first_children = set(tree.merges[0, :2].astype(int)) | set(tree.merges[1, :2].astype(int))
    assert first_children <= {0, 1, 2, 3}
    assert tuple(sorted(tree.merges[0, :2].astype(int))) in ((0, 1), (2, 3))


def test_cluster_two_variables_single_merge():
    V = _matrix_from(np.array([[1.0, 0.5], [0.5, 1.0]]))
    tree = cluster_variables(V)
    assert tree.merges.shape == (1, 4)
    assert np.array_equal(tree.cut(2), np.array([1, 2])) or np.array_equal(
        tree.cut(2), np.array([2, 1])
    )


def test_cluster_heights_monotone_for_average_linkage():
    rng = np.random.default_rng(18)
    M = rng.standard_normal((6, 6))
    V = _matrix_from(M @ M.T / 6)
    tree = cluster_variables(V, linkage="average")
    heights = tree.merges[:, 2]
    assert np.all(np.diff(heights) >= -1e-12)


def test_cluster_rejects_degenerate_similarity():
    V = _matrix_from(np.diag([1.0, 2.0, 3.0]))
    with pytest.raises(DegenerateSimilarity):
        cluster_variables(V)


def test_cluster_rejects_unknown_linkage():
    V = _matrix_from(np.array([[1.0, 0.5], [0.5, 1.0]]))
    with pytest.raises(SchemaMismatch):
        cluster_variables(V, linkage="ward")
