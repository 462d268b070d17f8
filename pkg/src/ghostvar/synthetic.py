"""Seeded generators for three synthetic benchmark designs.

Each generator returns a ready train/test pair plus the ground truth
that produced it (true coefficients, covariance structure, noise
variance, and closed-form conditional variances), so tests can compare
sample estimates against population values.

* ``ex1``: Y = X1 + X2 + X3 + eps with corr(X2, X3) = 0.95 and X1
  independent; unit variances, Var(eps) = 1.
* ``ex2``: five correlated regressors in two independent blocks and an
  additive response with a cosine basis plus one product interaction;
  Var(eps) = 1/4.
* ``ex3``: 200 standard-normal variables in four blocks of 50; blocks 2
  and 4 are equicorrelated at 0.95 through a shared factor; only blocks
  1 (coefficient 1/2) and 2 (coefficient 1) enter the response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, SplitSample
from .errors import DimensionMismatch, SchemaMismatch
from .linalg import RngState, mvn_sample
from .predictors import BasisSpec

SCENARIOS = ("ex1", "ex2", "ex3")

EX2_COVARIANCE = np.array(
    [
        [1.00, 0.95, 0.00, 0.00, 0.00],
        [0.95, 1.00, 0.00, 0.00, 0.00],
        [0.00, 0.00, 1.00, 0.95, 0.95],
        [0.00, 0.00, 0.95, 1.00, 0.95],
        [0.00, 0.00, 0.95, 0.95, 1.00],
    ]
)

EX2_ORACLE_BASIS = BasisSpec(
    (
        ("cosine", 0),
        ("cosine", 1),
        ("cosine", 2),
        ("cosine", 3),
        ("cosine", 4),
        ("product", 1, 2),
    )
)


@dataclass(frozen=True)
class ScenarioSpec:
    """Which design to draw, at what sizes, from which seed."""

    scenario: str
    n1: int = 2000
    n2: int = 1000
    seed: int = 0
    zero_correlation: bool = False

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise SchemaMismatch(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.n1 < 10 or self.n2 < 10:
            raise DimensionMismatch("both sample sizes must be at least 10")


@dataclass(frozen=True)
class GroundTruth:
    """Population quantities of the generating process."""

    coefficients: np.ndarray | None
    covariance: np.ndarray | None
    noise_variance: float
    conditional_variances: np.ndarray
    basis: BasisSpec | None = None
    block_slices: tuple[slice, ...] | None = None


@dataclass(frozen=True)
class ScenarioData:
    split: SplitSample
    truth: GroundTruth
    spec: ScenarioSpec


def equicorrelated_conditional_variance(rho: float, block_size: int) -> float:
    """Var of one coordinate given the other block members, unit marginals."""
    m = block_size
    return 1.0 - (m - 1) * rho**2 / (1.0 + (m - 2) * rho)


def _dataset(X, y, names) -> Dataset:
    return Dataset(features=X, y=y, feature_names=tuple(names), response_name="y")


def gen_example1(spec: ScenarioSpec) -> ScenarioData:
    """Three-variable linear design with one highly correlated pair."""
    rho = 0.0 if spec.zero_correlation else 0.95
    cov = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, rho], [0.0, rho, 1.0]])
    beta = np.ones(3)
    rng = RngState(spec.seed)

    def draw(n, stream):
        X = mvn_sample(np.zeros(3), cov, n, stream.child(0))
        eps = stream.child(1).generator.standard_normal(n)
        return _dataset(X, X @ beta + eps, ("x1", "x2", "x3"))

    cond = np.array([1.0, 1.0 - rho**2, 1.0 - rho**2])
    return ScenarioData(
        split=SplitSample(train=draw(spec.n1, rng.child(1)), test=draw(spec.n2, rng.child(2))),
        truth=GroundTruth(
            coefficients=beta,
            covariance=cov,
            noise_variance=1.0,
            conditional_variances=cond,
        ),
        spec=spec,
    )


def gen_example2(spec: ScenarioSpec) -> ScenarioData:
    """Five-variable additive design with a cross-block product term."""
    cov = np.eye(5) if spec.zero_correlation else EX2_COVARIANCE
    rng = RngState(spec.seed)

    def signal(X):
        return (
            np.cos(X[:, 0])
            + 0.5 * (np.cos(X[:, 1]) + np.cos(X[:, 2]))
            + 0.5 * X[:, 1] * X[:, 2]
            + np.cos(X[:, 3])
            + np.cos(X[:, 4])
        )

    def draw(n, stream):
        X = mvn_sample(np.zeros(5), cov, n, stream.child(0))
        eps = 0.5 * stream.child(1).generator.standard_normal(n)
        return _dataset(X, signal(X) + eps, [f"x{i}" for i in range(1, 6)])

    cond = np.array(
        [np.linalg.inv(cov)[j, j] ** -1 for j in range(5)]
    )
    return ScenarioData(
        split=SplitSample(train=draw(spec.n1, rng.child(1)), test=draw(spec.n2, rng.child(2))),
        truth=GroundTruth(
            coefficients=None,
            covariance=cov,
            noise_variance=0.25,
            conditional_variances=cond,
            basis=EX2_ORACLE_BASIS,
        ),
        spec=spec,
    )


def gen_example3(spec: ScenarioSpec) -> ScenarioData:
    """200 variables in four blocks; equicorrelated blocks use one shared
    factor per block rather than a 50x50 Cholesky."""
    rho = 0.0 if spec.zero_correlation else 0.95
    blocks = tuple(slice(50 * b, 50 * (b + 1)) for b in range(4))
    beta = np.concatenate([np.full(50, 0.5), np.full(50, 1.0), np.zeros(100)])
    rng = RngState(spec.seed)

    def draw(n, stream):
        gen = stream.child(0).generator
        X = np.empty((n, 200))
        for b, sl in enumerate(blocks):
            if b in (0, 2) or rho == 0.0:
                X[:, sl] = gen.standard_normal((n, 50))
            else:
                factor = gen.standard_normal((n, 1))
                noise = gen.standard_normal((n, 50))
                X[:, sl] = np.sqrt(rho) * factor + np.sqrt(1.0 - rho) * noise
        eps = stream.child(1).generator.standard_normal(n)
        return _dataset(X, X @ beta + eps, [f"x{i}" for i in range(1, 201)])

    cond_corr = equicorrelated_conditional_variance(rho, 50)
    cond = np.concatenate(
        [np.ones(50), np.full(50, cond_corr), np.ones(50), np.full(50, cond_corr)]
    )
    return ScenarioData(
        split=SplitSample(train=draw(spec.n1, rng.child(1)), test=draw(spec.n2, rng.child(2))),
        truth=GroundTruth(
            coefficients=beta,
            covariance=None,
            noise_variance=1.0,
            conditional_variances=cond,
            block_slices=blocks,
        ),
        spec=spec,
    )


_GENERATORS = {"ex1": gen_example1, "ex2": gen_example2, "ex3": gen_example3}


def generate(spec: ScenarioSpec) -> ScenarioData:
    """Dispatch to the generator named by ``spec.scenario``."""
    return _GENERATORS[spec.scenario](spec)
