"""Per-variable relevance of a fitted prediction model on a test sample.

Three measures are provided, all of the form
``mean((yhat - yhat_with_variable_replaced)^2)`` over the test rows:

* ghost: the variable is replaced by its regression on the remaining
  variables (fitted on the test sample by default, so the training
  sample is touched only through the prediction function);
* permutation: the variable's test column is shuffled;
* omission: the model family is refitted without the variable(s) and
  both fits are compared on the test rows.

For a linear model the ghost measure equals ``beta_j^2`` times the
residual variance of the variable regressed on the others, which ties
it to the classical F statistic; :func:`ghost_f_statistic_check` evaluates that
identity on concrete data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, SplitSample
from .errors import (
    DimensionMismatch,
    GhostvarError,
    InvalidProbability,
    RankDeficient,
    RefitFailed,
    SchemaMismatch,
)
from .linalg import RngState, as_matrix, f_quantile, gram_inverse
from .predictors import Predictor


# ---------------------------------------------------------------------------
# Ghost columns
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GhostColumnSet:
    """Fitted replacement columns for every variable of a test matrix.

    ``columns[:, j]`` predicts variable j from the other variables (with
    intercept); ``residual_variances[j]`` is the mean squared residual
    on the evaluation rows (denominator n). ``coefficients[j]`` holds
    the intercept followed by the slopes over the remaining columns in
    their original order.
    """

    columns: np.ndarray
    residual_variances: np.ndarray
    coefficients: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return self.columns.shape[0]

    @property
    def p(self) -> int:
        return self.columns.shape[1]


def fit_ghosts(test_features, fit_features=None) -> GhostColumnSet:
    """Regress each column on all the others, with intercept.

    The p regressions are derived from a single inverse-Gram
    factorization of ``[1, X]`` rather than p separate solves; the
    result is identical (to rounding) to p independent OLS fits. If
    ``fit_features`` is given, coefficients are estimated there and the
    ghost columns and residual variances are evaluated on
    ``test_features`` (the switch used to source ghosts from the
    training sample).
    """
    X = as_matrix(test_features, "test_features")
    n, p = X.shape
    Xfit = X if fit_features is None else as_matrix(fit_features, "fit_features")
    if Xfit.shape[1] != p:
        raise DimensionMismatch("fit and evaluation samples must share columns")
    if Xfit.shape[0] <= p + 1:
        raise RankDeficient(f"need more than {p + 1} rows to fit {p} ghost regressions")

    W = np.column_stack([np.ones(Xfit.shape[0]), Xfit])
    minv = gram_inverse(W, "ghost design")

    # Column j of C expresses ghost_j in the [1, X] basis: e_j - minv[:, j] / minv[j, j]
    C = -minv[:, 1:] / np.diag(minv)[1:]
    C[np.arange(p) + 1, np.arange(p)] = 0.0
    Weval = np.column_stack([np.ones(n), X])
    ghosts = Weval @ C
    residuals = X - ghosts
    variances = np.mean(residuals**2, axis=0)

    coefficients = []
    for j in range(p):
        keep = [0] + [i for i in range(1, p + 1) if i != j + 1]
        coefficients.append(C[keep, j].copy())
    return GhostColumnSet(
        columns=ghosts,
        residual_variances=variances,
        coefficients=tuple(coefficients),
    )


# ---------------------------------------------------------------------------
# Permutation plans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PermutationPlan:
    """One independent permutation of the test rows per variable."""

    seed: int
    permutations: np.ndarray  # (p, n) int indices, one bijection per row

    def __post_init__(self):
        p, n = self.permutations.shape
        expected = np.arange(n)
        for row in self.permutations:
            if not np.array_equal(np.sort(row), expected):
                raise DimensionMismatch("each permutation must be a bijection of 0..n-1")

    @classmethod
    def generate(cls, n: int, p: int, rng: RngState) -> "PermutationPlan":
        gen = rng.generator
        perms = np.stack([gen.permutation(n) for _ in range(p)])
        return cls(seed=rng.seed, permutations=perms)

    @classmethod
    def identity(cls, n: int, p: int) -> "PermutationPlan":
        return cls(seed=0, permutations=np.tile(np.arange(n), (p, 1)))


# ---------------------------------------------------------------------------
# Relevance measures
# ---------------------------------------------------------------------------

def estimate_mspe(model: Predictor, test: Dataset) -> float:
    """Mean squared prediction error on the test rows."""
    if tuple(model.variable_names) != test.feature_names:
        raise SchemaMismatch("test schema does not match the predictor")
    err = test.y - model.predict(test.features)
    return float(err @ err) / test.n


def _check_ghosts(test: Dataset, ghosts: GhostColumnSet) -> None:
    if ghosts.n != test.n or ghosts.p != test.p:
        raise SchemaMismatch(
            f"ghost set shape ({ghosts.n}, {ghosts.p}) does not match test ({test.n}, {test.p})"
        )


def relevance_ghost(model: Predictor, test: Dataset, ghosts: GhostColumnSet) -> np.ndarray:
    """Mean squared prediction shift when each variable is ghost-replaced."""
    _check_ghosts(test, ghosts)
    base = model.predict(test.features)
    out = np.empty(test.p)
    work = test.features.copy()
    for j in range(test.p):
        original = work[:, j].copy()
        work[:, j] = ghosts.columns[:, j]
        delta = base - model.predict(work)
        out[j] = float(delta @ delta) / test.n
        work[:, j] = original
    return out


def relevance_permutation(model: Predictor, test: Dataset, plan: PermutationPlan) -> np.ndarray:
    """Mean squared prediction shift when each variable is shuffled."""
    if plan.permutations.shape != (test.p, test.n):
        raise SchemaMismatch(
            f"plan shape {plan.permutations.shape} does not match test ({test.p}, {test.n})"
        )
    base = model.predict(test.features)
    out = np.empty(test.p)
    work = test.features.copy()
    for j in range(test.p):
        original = work[:, j].copy()
        work[:, j] = original[plan.permutations[j]]
        delta = base - model.predict(work)
        out[j] = float(delta @ delta) / test.n
        work[:, j] = original
    return out


def relevance_omission(fit_fn, split: SplitSample, omit, sample: str = "test") -> float:
    """Relevance of a variable set measured by refitting without it.

    ``fit_fn`` maps a training :class:`Dataset` to a fitted predictor;
    it is called twice, on the full training data and on the data with
    the ``omit`` columns removed. With ``sample="train"`` the squared
    prediction gap is averaged over the training rows instead of the
    test rows.
    """
    omit = tuple(omit)
    if not omit:
        raise SchemaMismatch("omit must name at least one variable")
    if len(set(omit)) == len(split.train.feature_names):
        raise SchemaMismatch("cannot omit every variable")
    if sample not in ("test", "train"):
        raise SchemaMismatch(f"sample must be 'test' or 'train', got {sample!r}")

    reduced_train = split.train.drop_features(omit)
    try:
        full = fit_fn(split.train)
        reduced = fit_fn(reduced_train)
    except GhostvarError:
        raise
    except Exception as exc:
        raise RefitFailed(f"model refit failed: {exc}") from exc

    target = split.test if sample == "test" else split.train
    delta = full.predict(target.features) - reduced.predict(
        target.drop_features(omit).features
    )
    return float(delta @ delta) / target.n


def critical_value(sigma2_hat: float, n1: int, p: int, alpha: float) -> float:
    """Relevance threshold below which a linear model's ghost relevance is
    compatible with a zero coefficient at level ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise InvalidProbability(f"alpha must lie in (0, 1), got {alpha}")
    if sigma2_hat == 0.0:
        return 0.0
    return f_quantile(1, n1 - p - 1, 1.0 - alpha) * sigma2_hat / n1


# ---------------------------------------------------------------------------
# Ghost/F-statistic identity diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GhostFDiagnostic:
    """Both sides of the ghost/F-statistic identity for every variable.

    ``lhs[j]`` is (n1 / sigma2_hat) * ghost relevance of variable j;
    ``rhs[j]`` is F_j * (test residual variance of variable j given the
    rest) / (training residual variance of the same regression). For an
    OLS model and OLS ghosts the two agree to rounding, as does
    ``ghost_relevance[j]`` with ``slope_j^2 * test residual variance``.
    """

    lhs: np.ndarray
    rhs: np.ndarray
    ghost_relevance: np.ndarray
    ghost_identity: np.ndarray
    max_rel_discrepancy: float
    max_rel_ghost_identity: float


def ghost_f_statistic_check(split: SplitSample, intercept: bool = True) -> GhostFDiagnostic:
    """Evaluate the ghost/F identity on a concrete train/test pair."""
    from .predictors import fit_linear  # local import to avoid a cycle

    model = fit_linear(split.train, intercept=intercept)
    fit = model.ols
    ghosts = fit_ghosts(split.test.features)
    rel = relevance_ghost(model, split.test, ghosts)

    train_ghosts = fit_ghosts(split.train.features)
    f_stats = fit.f_values[1:] if intercept else fit.f_values

    lhs = split.n1 / fit.sigma2_hat * rel
    rhs = f_stats * ghosts.residual_variances / train_ghosts.residual_variances
    ghost_identity = fit.slopes**2 * ghosts.residual_variances

    rel_disc = np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
    ghost_disc = np.abs(rel - ghost_identity) / np.maximum(np.abs(ghost_identity), 1e-300)
    return GhostFDiagnostic(
        lhs=lhs,
        rhs=rhs,
        ghost_relevance=rel,
        ghost_identity=ghost_identity,
        max_rel_discrepancy=float(rel_disc.max()),
        max_rel_ghost_identity=float(ghost_disc.max()),
    )


# ---------------------------------------------------------------------------
# Report container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelevanceReport:
    """Per-variable relevance values for the methods that were run.

    ``methods`` maps a method name to the raw values; ``scaled`` holds
    the same values divided by the estimated MSPE (None when the MSPE
    is zero). ``critical_value`` is populated only for linear models
    and applies to the ghost and omission measures.
    """

    variable_names: tuple[str, ...]
    methods: dict
    scaled: dict
    mspe_hat: float
    critical_value: float | None
    n1: int
    n2: int
    alpha: float


def build_report(
    variable_names,
    methods: dict,
    mspe_hat: float,
    n1: int,
    n2: int,
    alpha: float,
    crit: float | None = None,
) -> RelevanceReport:
    variable_names = tuple(variable_names)
    clean = {}
    scaled = {}
    for name, values in methods.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (len(variable_names),):
            raise SchemaMismatch(f"method {name!r} has {values.shape} values")
        if np.any(values < -1e-12):
            raise SchemaMismatch(f"negative relevance in method {name!r}")
        clean[name] = np.clip(values, 0.0, None)
        scaled[name] = clean[name] / mspe_hat if mspe_hat > 0 else None
    return RelevanceReport(
        variable_names=variable_names,
        methods=clean,
        scaled=scaled,
        mspe_hat=mspe_hat,
        critical_value=crit,
        n1=n1,
        n2=n2,
        alpha=alpha,
    )
