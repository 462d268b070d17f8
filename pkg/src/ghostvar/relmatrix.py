"""Joint variable effects: the case-variable matrix and its eigenstructure.

Column j of the case-variable matrix A holds, for every test case, the
prediction change caused by replacing variable j (by its ghost column
or by a permutation). The relevance matrix V = A'A / n2 then carries
the per-variable relevances on its diagonal and joint effects off it;
its eigenvectors expose groups of variables that move predictions
together, and for linear models its off-diagonal structure recovers the
partial correlations of the test sample.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.cluster.hierarchy
import scipy.spatial.distance

from .data import Dataset
from .errors import (
    DegenerateSimilarity,
    DimensionMismatch,
    RankDeficient,
    SchemaMismatch,
    ZeroRelevanceVariable,
)
from .linalg import SymEigen, as_matrix, sym_eigen
from .predictors import LinearPredictor, Predictor
from .relevance import GhostColumnSet, PermutationPlan

EIGENVALUE_CLAMP = 1e-12


@dataclass(frozen=True)
class CaseVariableMatrix:
    """Per-case, per-variable prediction changes (n2 x p)."""

    values: np.ndarray
    method: str
    variable_names: tuple[str, ...]

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def build_case_matrix(model: Predictor, test: Dataset, replacement) -> CaseVariableMatrix:
    """Case-variable matrix for ghost or permutation replacement.

    The base predictions are computed once; each column then replaces
    exactly one feature column and re-predicts.
    """
    if tuple(model.variable_names) != test.feature_names:
        raise SchemaMismatch("test schema does not match the predictor")
    if test.p < 2:
        raise DimensionMismatch("joint analysis needs at least 2 variables")

    if isinstance(replacement, GhostColumnSet):
        if replacement.n != test.n or replacement.p != test.p:
            raise SchemaMismatch("ghost set does not match the test sample")
        method = "ghost"
        replaced = lambda j: replacement.columns[:, j]
    elif isinstance(replacement, PermutationPlan):
        if replacement.permutations.shape != (test.p, test.n):
            raise SchemaMismatch("permutation plan does not match the test sample")
        method = "permutation"
        replaced = lambda j: test.features[replacement.permutations[j], j]
    else:
        raise SchemaMismatch(
            f"replacement must be a GhostColumnSet or PermutationPlan, got {type(replacement)!r}"
        )

    base = model.predict(test.features)
    A = np.empty((test.n, test.p))
    work = test.features.copy()
    for j in range(test.p):
        original = work[:, j].copy()
        work[:, j] = replaced(j)
        A[:, j] = base - model.predict(work)
        work[:, j] = original
    return CaseVariableMatrix(values=A, method=method, variable_names=test.feature_names)


@dataclass(frozen=True)
class RelevanceMatrix:
    """V = A'A / n2 with its eigendecomposition.

    The diagonal equals the per-variable relevances; eigenvalues below
    ``EIGENVALUE_CLAMP`` times the trace are clamped to zero so Jacobi
    round-off cannot produce spurious tiny negatives.
    """

    values: np.ndarray
    eigen: SymEigen
    method: str
    variable_names: tuple[str, ...]
    centered_covariance: np.ndarray

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def total_relevance(self) -> float:
        return float(np.trace(self.values))

    @property
    def explained_fractions(self) -> np.ndarray:
        total = self.eigen.eigenvalues.sum()
        if total <= 0:
            return np.zeros_like(self.eigen.eigenvalues)
        return self.eigen.eigenvalues / total


def relevance_matrix(A: CaseVariableMatrix) -> RelevanceMatrix:
    """Relevance matrix of a case-variable matrix, with eigenstructure.

    The matrix is the uncentered second-moment form A'A / n2; the
    centered covariance of A's columns is carried alongside for
    comparison (the two coincide when base and replaced predictions
    share column means).
    """
    if A.n < A.p:
        warnings.warn(
            f"relevance matrix from {A.n} cases for {A.p} variables is rank deficient",
            stacklevel=2,
        )
    V = A.values.T @ A.values / A.n
    V = (V + V.T) / 2.0
    eig = sym_eigen(V)
    trace = float(np.trace(V))
    clamped = np.where(eig.eigenvalues < EIGENVALUE_CLAMP * max(trace, 0.0), 0.0, eig.eigenvalues)
    eig = SymEigen(eigenvalues=clamped, eigenvectors=eig.eigenvectors)
    means = A.values.mean(axis=0)
    centered = V - np.outer(means, means)
    return RelevanceMatrix(
        values=V,
        eigen=eig,
        method=A.method,
        variable_names=A.variable_names,
        centered_covariance=centered,
    )


# ---------------------------------------------------------------------------
# Partial correlations recovered from V
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartialCorrelationMatrix:
    """Pairwise partial correlations with -1 on the diagonal.

    Entries involving a zero-relevance variable are undefined and set
    to NaN; the offending variables are listed in ``undefined``.
    """

    values: np.ndarray
    variable_names: tuple[str, ...]
    undefined: tuple[str, ...]


def partial_corr_from_V(
    V: RelevanceMatrix, slopes=None, strict: bool = False
) -> PartialCorrelationMatrix:
    """rho_jk = -v_jk / sqrt(v_jj v_kk), recovered from the ghost matrix.

    Because v_jk = slope_j * slope_k * g_jk, the raw ratio carries an
    extra sign(slope_j * slope_k) relative to the true partial
    correlation; it is exact whenever the two slopes share a sign. Pass
    the linear model's ``slopes`` to undo that factor and recover the
    partial correlation for arbitrary sign patterns.

    With ``strict`` a zero-relevance variable raises
    :class:`ZeroRelevanceVariable` instead of flagging NaN entries.
    """
    diag = np.diag(V.values).copy()
    bad = np.flatnonzero(diag <= 0.0)
    if bad.size and strict:
        names = [V.variable_names[i] for i in bad]
        raise ZeroRelevanceVariable(f"zero ghost relevance for {names}; entries undefined")
    safe = np.where(diag > 0, diag, np.nan)
    denom = np.sqrt(np.outer(safe, safe))
    with np.errstate(invalid="ignore"):
        rho = -V.values / denom
    if slopes is not None:
        slopes = np.asarray(slopes, dtype=float)
        if slopes.shape != (V.p,):
            raise DimensionMismatch(f"expected {V.p} slopes, got {slopes.shape}")
        signs = np.sign(np.outer(slopes, slopes))
        rho = rho * np.where(signs != 0, signs, 1.0)
    np.fill_diagonal(rho, -1.0)
    rho[bad, :] = np.nan
    rho[:, bad] = np.nan
    return PartialCorrelationMatrix(
        values=rho,
        variable_names=V.variable_names,
        undefined=tuple(V.variable_names[i] for i in bad),
    )


def gram_inverse_covariance_check(test_features, ghosts: GhostColumnSet) -> float:
    """Relative gap between G and its inverse-covariance reconstruction.

    G is the mean cross-product matrix of the ghost residuals. With
    intercept-included ghost regressions the exact reconstruction is
    D * inv(S2_scaled) * D, where D = diag of the per-variable residual
    variances and S2_scaled is the test covariance matrix scaled by
    (n2 - 1) / n2 (that is, the n2-denominator covariance). Returns the
    max-abs discrepancy divided by the max-abs entry of G.
    """
    X = as_matrix(test_features, "test_features")
    n, p = X.shape
    if ghosts.n != n or ghosts.p != p:
        raise SchemaMismatch("ghost set does not match the feature matrix")
    residuals = X - ghosts.columns
    G = residuals.T @ residuals / n
    s2_scaled = np.cov(X, rowvar=False, ddof=1) * (n - 1) / n
    try:
        s2_inv = np.linalg.inv(s2_scaled)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient(f"test covariance is singular: {exc}") from exc
    D = np.diag(ghosts.residual_variances)
    recon = D @ s2_inv @ D
    return float(np.max(np.abs(G - recon)) / np.max(np.abs(G)))


def rp_matrix_structure_check(
    model: LinearPredictor, test: Dataset, plan: PermutationPlan
) -> float:
    """Gap between the permutation relevance matrix and 2 diag(b) S2 diag(b).

    Returns max-abs discrepancy over max-abs entry of the permutation
    matrix, or NaN for the degenerate all-identity plan. The comparison
    uses the n2-denominator test covariance. With one independent
    permutation per variable the approximation is entrywise valid when
    the test covariance is near diagonal; strong cross-correlations
    push the off-diagonal entries toward half the formula value.
    """
    if not isinstance(model, LinearPredictor):
        raise SchemaMismatch("structure check is defined for the linear family only")
    A = build_case_matrix(model, test, plan)
    Vt = relevance_matrix(A).values
    scale = float(np.max(np.abs(Vt)))
    if scale == 0.0:
        return float("nan")
    slopes = model.ols.slopes
    S2 = np.cov(test.features, rowvar=False, ddof=0)
    formula = 2.0 * np.outer(slopes, slopes) * S2
    return float(np.max(np.abs(Vt - formula)) / scale)


# ---------------------------------------------------------------------------
# Eigen summary and variable clustering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenComponent:
    eigenvalue: float
    fraction: float
    vector: np.ndarray


def eigen_report(V: RelevanceMatrix, threshold: float = 0.01) -> list[EigenComponent]:
    """Eigenpairs explaining at least ``threshold`` of the total relevance."""
    fractions = V.explained_fractions
    out = []
    for i, frac in enumerate(fractions):
        if frac >= threshold:
            out.append(
                EigenComponent(
                    eigenvalue=float(V.eigen.eigenvalues[i]),
                    fraction=float(frac),
                    vector=V.eigen.eigenvectors[:, i].copy(),
                )
            )
    return out


@dataclass(frozen=True)
class ClusterTree:
    """Agglomerative merge sequence over the variables.

    ``merges`` is a scipy linkage matrix: each of the p - 1 rows holds
    the two merged cluster ids, the merge height, and the new cluster
    size.
    """

    merges: np.ndarray
    variable_names: tuple[str, ...]
    linkage: str

    def cut(self, k: int) -> np.ndarray:
        """Cluster label (1..k) per variable at the k-cluster cut."""
        return scipy.cluster.hierarchy.fcluster(self.merges, t=k, criterion="maxclust")


def cluster_variables(V: RelevanceMatrix, linkage: str = "average") -> ClusterTree:
    """Cluster variables by squared relevance-matrix entries.

    Similarity is s_jk = v_jk^2, turned into the distance
    d_jk = 1 - s_jk / max_{j != k}(s_jk); the tree is built by
    agglomerative clustering with the chosen linkage.
    """
    if linkage not in ("average", "complete", "single"):
        raise SchemaMismatch(f"unsupported linkage {linkage!r}")
    p = V.p
    if p < 2:
        raise DimensionMismatch("clustering needs at least 2 variables")
    S = V.values**2
    np.fill_diagonal(S, 0.0)
    smax = float(S.max())
    if smax == 0.0:
        raise DegenerateSimilarity("all off-diagonal relevances are zero")
    D = 1.0 - S / smax
    condensed = scipy.spatial.distance.squareform(D, checks=False)
    merges = scipy.cluster.hierarchy.linkage(condensed, method=linkage)
    return ClusterTree(merges=merges, variable_names=V.variable_names, linkage=linkage)
