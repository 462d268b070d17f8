"""Prediction-function contract and the built-in model families.

A :class:`Predictor` is the only artifact retained from training: a
deterministic map from a feature matrix (fixed column order) to a
prediction vector. Built-in families are plain OLS, OLS on a fixed
nonlinear feature basis, and a one-hidden-layer neural network trained
by full-batch gradient descent. :func:`external_predictor` wraps any
executable speaking a CSV-over-stdin/stdout protocol, which is what
makes the relevance machinery model agnostic.
"""

from __future__ import annotations

import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import (
    DimensionMismatch,
    NonFinite,
    ProtocolViolation,
    RefitFailed,
    SchemaMismatch,
    SpawnFailed,
    Timeout,
)
from .linalg import OlsFit, RngState, as_matrix, ols_fit


class Predictor:
    """Deterministic prediction function over a fixed feature schema."""

    family = "base"

    def __init__(self, variable_names):
        self.variable_names = tuple(variable_names)
        self.hyperparams: dict = {}

    def predict(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        if X.shape[1] != len(self.variable_names):
            raise SchemaMismatch(
                f"predictor expects {len(self.variable_names)} columns, got {X.shape[1]}"
            )
        return self._predict(X)

    def _predict(self, X) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Linear and basis-linear families
# ---------------------------------------------------------------------------

class LinearPredictor(Predictor):
    family = "linear"

    def __init__(self, variable_names, ols: OlsFit):
        super().__init__(variable_names)
        self.ols = ols

    def _predict(self, X):
        base = self.ols.coefficients[0] if self.ols.intercept else 0.0
        return base + X @ self.ols.slopes


def fit_linear(train: Dataset, intercept: bool = True) -> LinearPredictor:
    """OLS fit of the response on all feature columns."""
    return LinearPredictor(train.feature_names, ols_fit(train.features, train.y, intercept))


@dataclass(frozen=True)
class BasisSpec:
    """Fixed feature transforms over raw column indices.

    Terms are ``("identity", j)``, ``("cosine", j)`` or
    ``("product", j, k)``. The transforms are applied to the raw
    variables at predict time, so replacing a raw column propagates
    through every term that references it.
    """

    terms: tuple[tuple, ...]

    def validate(self, p: int) -> None:
        if not self.terms:
            raise SchemaMismatch("basis must contain at least one term")
        for term in self.terms:
            kind = term[0]
            if kind not in ("identity", "cosine", "product"):
                raise SchemaMismatch(f"unknown basis term kind {kind!r}")
            idx = term[1:]
            if len(idx) != (2 if kind == "product" else 1):
                raise SchemaMismatch(f"malformed basis term {term!r}")
            if any(not 0 <= j < p for j in idx):
                raise SchemaMismatch(f"basis term {term!r} references a column >= {p}")

    def transform(self, X: np.ndarray) -> np.ndarray:
        cols = []
        for term in self.terms:
            kind = term[0]
            if kind == "identity":
                cols.append(X[:, term[1]])
            elif kind == "cosine":
                cols.append(np.cos(X[:, term[1]]))
            else:
                cols.append(X[:, term[1]] * X[:, term[2]])
        return np.column_stack(cols)

    def term_names(self, variable_names) -> tuple[str, ...]:
        names = []
        for term in self.terms:
            if term[0] == "identity":
                names.append(variable_names[term[1]])
            elif term[0] == "cosine":
                names.append(f"cos({variable_names[term[1]]})")
            else:
                names.append(f"{variable_names[term[1]]}*{variable_names[term[2]]}")
        return tuple(names)


def parse_basis(text: str) -> BasisSpec:
    """Parse a basis like ``"cos:0,cos:1,prod:1:2,id:3"``."""
    kinds = {"id": "identity", "cos": "cosine", "prod": "product"}
    terms = []
    for chunk in text.split(","):
        parts = chunk.strip().split(":")
        if parts[0] not in kinds:
            raise SchemaMismatch(f"unknown basis term {chunk!r}")
        try:
            idx = tuple(int(v) for v in parts[1:])
        except ValueError:
            raise SchemaMismatch(f"non-integer column index in {chunk!r}") from None
        terms.append((kinds[parts[0]], *idx))
    return BasisSpec(tuple(terms))


class BasisLinearPredictor(Predictor):
    family = "basis-linear"

    def __init__(self, variable_names, basis: BasisSpec, ols: OlsFit):
        super().__init__(variable_names)
        self.basis = basis
        self.ols = ols
        self.hyperparams = {"basis": basis.terms}

    def _predict(self, X):
        phi = self.basis.transform(X)
        return self.ols.coefficients[0] + phi @ self.ols.slopes


def fit_basis_linear(train: Dataset, basis: BasisSpec) -> BasisLinearPredictor:
    """OLS on a fixed nonlinear basis of the raw variables."""
    basis.validate(train.p)
    phi = basis.transform(train.features)
    return BasisLinearPredictor(train.feature_names, basis, ols_fit(phi, train.y, intercept=True))


# ---------------------------------------------------------------------------
# One-hidden-layer neural network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpModel:
    """Weights of a p -> hidden -> 1 network, sigmoid hidden, linear output.

    ``w1`` is (hidden, p + 1) with the bias in column 0, ``w2`` is
    (hidden + 1,) with the bias first. Inputs are standardized with the
    stored per-column training mean and scale before the forward pass.
    """

    w1: np.ndarray
    w2: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    decay: float

    @property
    def n_weights(self) -> int:
        return self.w1.size + self.w2.size


def mlp_forward(w1: np.ndarray, w2: np.ndarray, X: np.ndarray) -> np.ndarray:
    hidden = expit(w1[:, 0] + X @ w1[:, 1:].T)
    return w2[0] + hidden @ w2[1:]


def mlp_loss_grad(w1, w2, X, y, decay):
    """Sum-of-squares loss with L2 penalty on all weights, plus its gradient."""
    hidden = expit(w1[:, 0] + X @ w1[:, 1:].T)
    pred = w2[0] + hidden @ w2[1:]
    err = pred - y
    loss = float(err @ err) + decay * (float(np.sum(w1 * w1)) + float(np.sum(w2 * w2)))

    g_out = 2.0 * err
    g_w2 = np.concatenate(([g_out.sum()], hidden.T @ g_out)) + 2.0 * decay * w2
    d_hidden = np.outer(g_out, w2[1:]) * hidden * (1.0 - hidden)
    g_w1 = np.column_stack([d_hidden.sum(axis=0), d_hidden.T @ X]) + 2.0 * decay * w1
    return loss, g_w1, g_w2


class MlpPredictor(Predictor):
    family = "mlp"

    def __init__(self, variable_names, model: MlpModel, hyperparams):
        super().__init__(variable_names)
        self.model = model
        self.hyperparams = dict(hyperparams)

    def _predict(self, X):
        Xs = (X - self.model.feature_mean) / self.model.feature_scale
        return mlp_forward(self.model.w1, self.model.w2, Xs)


def fit_mlp(
    train: Dataset,
    hidden: int = 10,
    decay: float = 0.5,
    epochs: int = 4000,
    lr: float = 2e-4,
    rng: RngState = RngState(0),
) -> MlpPredictor:
    """Train the network by full-batch gradient descent.

    Features are centered and scaled internally; weights start from a
    uniform(-0.5, 0.5) draw of ``rng`` (initialization scheme is this
    package's choice, not dictated by the model family). Training that
    produces non-finite weights raises :class:`NonFinite`, which almost
    always means ``lr`` is too large for the data scale.
    """
    if hidden < 1:
        raise DimensionMismatch("hidden size must be >= 1")
    if decay < 0:
        raise DimensionMismatch("decay must be >= 0")
    if train.n < 2:
        raise DimensionMismatch("need at least 2 training rows")

    mean = train.features.mean(axis=0)
    scale = train.features.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    Xs = (train.features - mean) / scale
    y = train.y

    gen = rng.generator
    w1 = gen.uniform(-0.5, 0.5, size=(hidden, train.p + 1))
    w2 = gen.uniform(-0.5, 0.5, size=hidden + 1)

    # overflow here is the divergence signal itself, reported via NonFinite
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(epochs):
            _, g1, g2 = mlp_loss_grad(w1, w2, Xs, y, decay)
            w1 -= lr * g1
            w2 -= lr * g2
            if epoch % 200 == 0 and not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))):
                raise NonFinite("MLP training diverged; reduce the learning rate")
    if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))):
        raise NonFinite("MLP training diverged; reduce the learning rate")

    model = MlpModel(w1=w1, w2=w2, feature_mean=mean, feature_scale=scale, decay=decay)
    params = {
        "hidden": hidden,
        "decay": decay,
        "epochs": epochs,
        "lr": lr,
        "seed": rng.seed,
        "rng_path": rng.path,
    }
    return MlpPredictor(train.feature_names, model, params)


# ---------------------------------------------------------------------------
# External subprocess predictor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExternalPredictorConfig:
    """How to invoke an out-of-process model.

    ``command`` is the program plus arguments (a string is split with
    shell quoting rules). Each predict call sends a CSV header plus
    feature rows on stdin and expects exactly one decimal prediction
    per row on stdout; batches larger than ``max_batch_rows`` are sent
    in consecutive invocations.
    """

    command: tuple[str, ...]
    timeout: float = 30.0
    max_batch_rows: int = 100_000

    def __post_init__(self):
        if isinstance(self.command, str):
            object.__setattr__(self, "command", tuple(shlex.split(self.command)))
        else:
            object.__setattr__(self, "command", tuple(self.command))
        if not self.command:
            raise SchemaMismatch("external predictor command is empty")
        if self.timeout <= 0:
            raise SchemaMismatch("timeout must be positive")
        if self.max_batch_rows < 1:
            raise SchemaMismatch("max_batch_rows must be >= 1")


class ExternalPredictor(Predictor):
    family = "external"

    def __init__(self, variable_names, config: ExternalPredictorConfig):
        super().__init__(variable_names)
        self.config = config
        self.hyperparams = {"command": " ".join(config.command)}
        self._lock = threading.Lock()

    def _predict(self, X):
        out = np.empty(X.shape[0])
        step = self.config.max_batch_rows
        with self._lock:
            for start in range(0, X.shape[0], step):
                chunk = X[start : start + step]
                out[start : start + chunk.shape[0]] = self._run_batch(chunk)
        return out

    def _run_batch(self, X):
        lines = [",".join(self.variable_names)]
        lines.extend(",".join(format(v, ".17g") for v in row) for row in X)
        payload = ("\n".join(lines) + "\n").encode("utf-8")
        try:
            proc = subprocess.run(
                self.config.command,
                input=payload,
                capture_output=True,
                timeout=self.config.timeout,
            )
        except subprocess.TimeoutExpired:
            raise Timeout(
                f"external predictor exceeded {self.config.timeout}s"
            ) from None
        except OSError as exc:
            raise SpawnFailed(f"cannot run {self.config.command[0]!r}: {exc}") from exc
        if proc.returncode != 0:
            detail = proc.stderr.decode("utf-8", "replace").strip()[:200]
            raise ProtocolViolation(
                f"external predictor exited with status {proc.returncode}: {detail}"
            )
        text = proc.stdout.decode("utf-8")
        values = [line for line in text.split("\n") if line.strip()]
        if len(values) != X.shape[0]:
            raise ProtocolViolation(
                f"expected {X.shape[0]} prediction lines, got {len(values)}"
            )
        try:
            pred = np.array([float(v) for v in values])
        except ValueError as exc:
            raise ProtocolViolation(f"non-numeric prediction line: {exc}") from None
        if not np.all(np.isfinite(pred)):
            raise ProtocolViolation("external predictor returned non-finite values")
        return pred


def external_predictor(config: ExternalPredictorConfig, variable_names) -> ExternalPredictor:
    """Wrap an external command as a :class:`Predictor`."""
    return ExternalPredictor(variable_names, config)


# ---------------------------------------------------------------------------
# Family registry used by omission refits and the CLI
# ---------------------------------------------------------------------------

def _basis_for_subset(model: BasisLinearPredictor, kept_names) -> BasisSpec:
    """Basis restricted to kept raw columns, with indices remapped.

    Terms touching an omitted column are dropped entirely, so the
    reduced family genuinely loses every feature built on it.
    """
    remap = {}
    for new_idx, name in enumerate(kept_names):
        remap[model.variable_names.index(name)] = new_idx
    terms = []
    for term in model.basis.terms:
        idx = term[1:]
        if all(j in remap for j in idx):
            terms.append((term[0], *(remap[j] for j in idx)))
    if not terms:
        raise RefitFailed("omission removed every basis term")
    return BasisSpec(tuple(terms))


def refit_factory(model: Predictor):
    """A callable refitting the same family (same hyperparameters) on a new dataset.

    Omission relevance retrains the model without the omitted columns;
    hyperparameters are reused as-is rather than retuned.
    """
    if isinstance(model, LinearPredictor):
        return lambda train: fit_linear(train, intercept=model.ols.intercept)
    if isinstance(model, MlpPredictor):
        hp = model.hyperparams
        return lambda train: fit_mlp(
            train,
            hidden=hp["hidden"],
            decay=hp["decay"],
            epochs=hp["epochs"],
            lr=hp["lr"],
            rng=RngState(hp["seed"], tuple(hp.get("rng_path", ()))),
        )
    if isinstance(model, BasisLinearPredictor):
        return lambda train: fit_basis_linear(train, _basis_for_subset(model, train.feature_names))
    raise RefitFailed(f"no refit procedure for family {model.family!r}")
