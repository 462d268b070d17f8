"""Dense numerical core.

OLS with full inference output, coefficient updating for dropped
regressors, a cyclic-Jacobi symmetric eigensolver, F-distribution
quantiles via the regularized incomplete beta function, seeded
multivariate-normal sampling, and direct partial correlations.

All functions are pure; arrays are never mutated in place. Randomness
goes through :class:`RngState`, a thin wrapper over numpy's Philox
counter-based generator, so identical seeds give identical streams on
every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    InvalidProbability,
    NoConvergence,
    NonFinite,
    NotPositiveSemiDefinite,
    NotSymmetric,
    RankDeficient,
)

# Pivot below this fraction of the largest pivot declares rank deficiency.
RANK_TOL = 1e-10


def as_matrix(a, name="matrix"):
    """Validate and return a 2-D float64 array with finite entries."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got ndim={a.ndim}")
    if a.size and not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains non-finite entries")
    return a


def as_vector(a, name="vector"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got ndim={a.ndim}")
    if a.size and not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains non-finite entries")
    return a


# ---------------------------------------------------------------------------
# Seeded randomness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RngState:
    """Deterministic random stream keyed by a 64-bit seed.

    Backed by numpy's Philox bit generator (counter based); substreams
    derived with :meth:`child` are independent and reproducible, so the
    same seed always yields the same draws regardless of platform.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *tags: int) -> "RngState":
        """Derive an independent substream for a tagged subtask."""
        return RngState(self.seed, self.path + tags)

    @property
    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Ordinary least squares
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OlsFit:
    """OLS solution with the usual inference statistics.

    ``coefficients`` starts with the intercept when one was requested.
    ``sigma2_hat`` uses the residual degrees of freedom (n - #params) as
    denominator; ``sigma2_n`` divides by n instead.
    """

    coefficients: np.ndarray
    intercept: bool
    residuals: np.ndarray
    fitted: np.ndarray
    rss: float
    sigma2_hat: float
    std_errors: np.ndarray
    t_values: np.ndarray
    f_values: np.ndarray
    r2: float
    r2_adjusted: float
    n: int
    p: int
    gram_inverse: np.ndarray = field(repr=False)

    @property
    def df(self) -> int:
        return self.n - self.coefficients.size

    @property
    def sigma2_n(self) -> float:
        return self.rss / self.n

    @property
    def slopes(self) -> np.ndarray:
        """Coefficients aligned with the feature columns (intercept dropped)."""
        return self.coefficients[1:] if self.intercept else self.coefficients


def _pivoted_qr(W, name="design"):
    """Economic Householder QR with column pivoting plus rank check."""
    q, r, piv = scipy.linalg.qr(W, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0:
        raise RankDeficient(f"{name} has no columns")
    if diag[-1] <= RANK_TOL * diag[0]:
        raise RankDeficient(
            f"{name} is rank deficient: pivot ratio "
            f"{diag[-1] / diag[0] if diag[0] else 0.0:.3e} below {RANK_TOL:.0e}"
        )
    return q, r, piv


def gram_inverse(W, name="design"):
    """(W'W)^-1 through the pivoted QR factorization of W."""
    _, r, piv = _pivoted_qr(W, name)
    k = r.shape[1]
    rinv = scipy.linalg.solve_triangular(r, np.eye(k))
    inv_pivoted = rinv @ rinv.T
    inv = np.empty_like(inv_pivoted)
    inv[np.ix_(piv, piv)] = inv_pivoted
    return inv


def ols_fit(X, y, intercept: bool = True) -> OlsFit:
    """Least-squares fit of ``y`` on the columns of ``X``.

    Solved by Householder QR with column pivoting; a trailing pivot below
    ``RANK_TOL`` times the leading one raises :class:`RankDeficient`.

    Parameters
    ----------
    X : (n, p) array
        Feature columns, without an intercept column.
    y : (n,) array
        Response vector.
    intercept : bool
        Prepend a constant regressor (default true).
    """
    X = as_matrix(X, "X")
    y = as_vector(y, "y")
    n, p = X.shape
    if y.size != n:
        raise DimensionMismatch(f"X has {n} rows but y has {y.size}")
    W = np.column_stack([np.ones(n), X]) if intercept else X
    k = W.shape[1]
    if n <= k:
        raise DimensionMismatch(f"need more rows ({n}) than parameters ({k})")

    q, r, piv = _pivoted_qr(W, "X")
    beta_piv = scipy.linalg.solve_triangular(r, q.T @ y)
    beta = np.empty_like(beta_piv)
    beta[piv] = beta_piv

    fitted = W @ beta
    residuals = y - fitted
    rss = float(residuals @ residuals)
    df = n - k
    sigma2_hat = rss / df

    rinv = scipy.linalg.solve_triangular(r, np.eye(k))
    inv_pivoted = rinv @ rinv.T
    xtx_inv = np.empty_like(inv_pivoted)
    xtx_inv[np.ix_(piv, piv)] = inv_pivoted

    std_errors = np.sqrt(np.clip(sigma2_hat * np.diag(xtx_inv), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_values = np.where(std_errors > 0, beta / np.where(std_errors > 0, std_errors, 1.0), np.inf * np.sign(beta))
    f_values = t_values**2

    tss = float(((y - y.mean()) @ (y - y.mean()))) if intercept else float(y @ y)
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    denom_adj = n - k
    numer_adj = n - 1 if intercept else n
    r2_adjusted = 1.0 - (1.0 - r2) * numer_adj / denom_adj

    return OlsFit(
        coefficients=beta,
        intercept=intercept,
        residuals=residuals,
        fitted=fitted,
        rss=rss,
        sigma2_hat=sigma2_hat,
        std_errors=std_errors,
        t_values=t_values,
        f_values=f_values,
        r2=r2,
        r2_adjusted=r2_adjusted,
        n=n,
        p=p,
        gram_inverse=xtx_inv,
    )


def ols_omit_update(full: OlsFit, alpha_hat: np.ndarray) -> np.ndarray:
    """Coefficients of the model without its last regressor, by updating.

    ``full`` is the fit of y on (X, z) with z as the last column, and
    ``alpha_hat`` the coefficients of z regressed on X under the same
    intercept convention. Returns beta0 = beta_x + alpha_hat * beta_z,
    which equals the direct OLS refit of y on X alone.
    """
    alpha_hat = as_vector(alpha_hat, "alpha_hat")
    beta = full.coefficients
    if alpha_hat.size != beta.size - 1:
        raise DimensionMismatch(
            f"alpha_hat has {alpha_hat.size} coefficients, expected {beta.size - 1}"
        )
    return beta[:-1] + alpha_hat * beta[-1]


# ---------------------------------------------------------------------------
# Symmetric eigendecomposition (cyclic Jacobi)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymEigen:
    """Full spectrum of a symmetric matrix.

    Eigenvalues are sorted descending; eigenvectors are the matching
    orthonormal columns, each flipped so its largest-magnitude component
    is positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


MAX_JACOBI_SWEEPS = 100


def sym_eigen(S) -> SymEigen:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    The input must be symmetric to within 1e-10 relative; round-off
    asymmetry below that is folded away. Raises :class:`NoConvergence`
    if the off-diagonal mass has not vanished after 100 sweeps (never
    observed in practice: convergence is quadratic).
    """
    S = as_matrix(S, "S")
    n, m = S.shape
    if n != m:
        raise DimensionMismatch(f"matrix must be square, got {n}x{m}")
    scale = np.max(np.abs(S)) if n else 0.0
    if scale > 0 and np.max(np.abs(S - S.T)) > 1e-10 * scale:
        raise NotSymmetric("matrix is not symmetric within 1e-10 relative")

    A = (S + S.T) / 2.0
    V = np.eye(n)
    if n > 1:
        fro = np.linalg.norm(A)
        tol = 1e-14 * fro
        converged = fro == 0.0
        # off-diagonal norm measured directly; the sum(A^2) - sum(diag^2)
        # form cancels catastrophically once the off-diagonal is tiny
        off_mask = ~np.eye(n, dtype=bool)
        for _ in range(MAX_JACOBI_SWEEPS):
            off = math.sqrt(np.sum(A[off_mask] ** 2))
            if off <= tol:
                converged = True
                break
            skip = off / (n * n)
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if abs(apq) <= skip * 1e-4:
                        continue
                    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                    c = 1.0 / math.sqrt(t * t + 1.0)
                    s = t * c
                    col_p = A[:, p].copy()
                    col_q = A[:, q].copy()
                    A[:, p] = c * col_p - s * col_q
                    A[:, q] = s * col_p + c * col_q
                    row_p = A[p, :].copy()
                    row_q = A[q, :].copy()
                    A[p, :] = c * row_p - s * row_q
                    A[q, :] = s * row_p + c * row_q
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    vp = V[:, p].copy()
                    vq = V[:, q].copy()
                    V[:, p] = c * vp - s * vq
                    V[:, q] = s * vp + c * vq
        else:
            converged = math.sqrt(np.sum(A[off_mask] ** 2)) <= tol
        if not converged:
            raise NoConvergence(f"Jacobi iteration did not converge in {MAX_JACOBI_SWEEPS} sweeps")

    eigenvalues = np.diag(A).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    vectors = V[:, order]
    for i in range(n):
        j = int(np.argmax(np.abs(vectors[:, i])))
        if vectors[j, i] < 0:
            vectors[:, i] = -vectors[:, i]
    return SymEigen(eigenvalues=eigenvalues, eigenvectors=vectors)


# ---------------------------------------------------------------------------
# F-distribution quantiles via the regularized incomplete beta function
# ---------------------------------------------------------------------------

_BETA_EPS = 1e-15
_BETA_ITMAX = 400


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_ITMAX + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise NoConvergence("incomplete beta continued fraction did not converge")


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lfront = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(lfront)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: int, d2: int) -> float:
    if x <= 0.0:
        return 0.0
    u = d1 * x / (d1 * x + d2)
    return betainc_regularized(d1 / 2.0, d2 / 2.0, u)


def f_pdf(x: float, d1: int, d2: int) -> float:
    if x <= 0.0:
        return 0.0
    lbeta = math.lgamma(d1 / 2.0) + math.lgamma(d2 / 2.0) - math.lgamma((d1 + d2) / 2.0)
    logp = (
        (d1 / 2.0) * math.log(d1 / d2)
        + (d1 / 2.0 - 1.0) * math.log(x)
        - ((d1 + d2) / 2.0) * math.log1p(d1 * x / d2)
        - lbeta
    )
    return math.exp(logp)


def f_quantile(d1: int, d2: int, prob: float) -> float:
    """Quantile of the F(d1, d2) distribution.

    Inverts the CDF with a bracket-safeguarded Newton iteration; the
    returned point satisfies |CDF(x) - prob| < 1e-13, well inside the
    1e-9 contract.
    """
    if d1 < 1 or d2 < 1:
        raise DimensionMismatch("degrees of freedom must be >= 1")
    if not (0.0 < prob < 1.0) or not math.isfinite(prob):
        raise InvalidProbability(f"prob must lie in (0, 1), got {prob}")

    hi = 1.0
    for _ in range(600):
        if f_cdf(hi, d1, d2) >= prob:
            break
        hi *= 2.0
    else:
        raise NoConvergence("failed to bracket the F quantile")
    lo = 0.0
    x = hi / 2.0
    for _ in range(200):
        err = f_cdf(x, d1, d2) - prob
        if err > 0:
            hi = x
        else:
            lo = x
        if abs(err) < 1e-13:
            break
        dens = f_pdf(x, d1, d2)
        if dens > 0:
            step = x - err / dens
            x = step if lo < step < hi else 0.5 * (lo + hi)
        else:
            x = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return x


# ---------------------------------------------------------------------------
# Multivariate normal sampling
# ---------------------------------------------------------------------------

def pivoted_cholesky(C, tol: float = 1e-12):
    """Pivoted Cholesky factor of a PSD matrix.

    Returns L with C approximately equal to L @ L.T, where L has one
    column per retained pivot. Diagonal pivots below ``tol`` times the
    largest initial diagonal are treated as zero; a pivot more negative
    than that raises :class:`NotPositiveSemiDefinite`.
    """
    C = as_matrix(C, "cov")
    n, m = C.shape
    if n != m:
        raise DimensionMismatch(f"covariance must be square, got {n}x{m}")
    scale = np.max(np.abs(C)) if n else 0.0
    if scale > 0 and np.max(np.abs(C - C.T)) > 1e-10 * scale:
        raise NotPositiveSemiDefinite("covariance is not symmetric")

    A = (C + C.T) / 2.0
    d = np.diag(A).copy()
    thresh = tol * max(float(d.max(initial=0.0)), 0.0)
    L = np.zeros((n, n))
    perm = np.arange(n)
    rank = 0
    for k in range(n):
        j = k + int(np.argmax(d[perm[k:]]))
        perm[[k, j]] = perm[[j, k]]
        pk = perm[k]
        dk = d[pk]
        if dk <= thresh:
            if dk < -max(thresh, 1e-12 * max(scale, 1.0)):
                raise NotPositiveSemiDefinite(f"negative pivot {dk:.3e}")
            break
        lkk = math.sqrt(dk)
        L[pk, k] = lkk
        rest = perm[k + 1:]
        if rest.size:
            col = (A[rest, pk] - L[rest, :k] @ L[pk, :k]) / lkk
            L[rest, k] = col
            d[rest] -= col**2
        rank += 1
    return L[:, :rank]


def mvn_sample(mean, cov, n: int, rng: RngState) -> np.ndarray:
    """Draw ``n`` i.i.d. rows from N(mean, cov), deterministic given ``rng``."""
    mean = as_vector(mean, "mean")
    L = pivoted_cholesky(cov)
    if L.shape[0] != mean.size:
        raise DimensionMismatch(
            f"mean has {mean.size} entries but cov is {L.shape[0]}x{L.shape[0]}"
        )
    if n == 0:
        return np.empty((0, mean.size))
    z = rng.generator.standard_normal((n, L.shape[1]))
    return mean + z @ L.T


# ---------------------------------------------------------------------------
# Partial correlation by double residualization
# ---------------------------------------------------------------------------

def partial_correlation_direct(X, j: int, k: int) -> float:
    """Correlation of columns j and k after removing the other columns.

    Each column is regressed (with intercept) on all remaining columns;
    the cosine between the two residual vectors is the sample partial
    correlation. Serves as the slow, independent route against which the
    relevance-matrix identities are checked.
    """
    X = as_matrix(X, "X")
    n, p = X.shape
    if not (0 <= j < p and 0 <= k < p) or j == k:
        raise DimensionMismatch(f"invalid column pair ({j}, {k}) for p={p}")
    others = [c for c in range(p) if c not in (j, k)]
    if others:
        rest = X[:, others]
        res_j = ols_fit(rest, X[:, j], intercept=True).residuals
        res_k = ols_fit(rest, X[:, k], intercept=True).residuals
    else:
        res_j = X[:, j] - X[:, j].mean()
        res_k = X[:, k] - X[:, k].mean()
    denom = math.sqrt(float(res_j @ res_j) * float(res_k @ res_k))
    if denom == 0.0:
        raise RankDeficient("zero residual variance in partial correlation")
    return float(res_j @ res_k) / denom
