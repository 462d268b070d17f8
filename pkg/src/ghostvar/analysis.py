"""End-to-end relevance analysis: configuration, orchestration, reports.

:func:`run_analysis` drives the full pipeline: load or generate data,
fit (or wrap) the model, compute the requested relevance measures, build
the relevance matrices with their eigen summaries, partial correlations
(linear family) and variable clustering, then serialize everything to
the output directory as JSON, CSV tables and SVG figures. Every number
in the output is a deterministic function of the configuration and its
seed; the report embeds a hash of the configuration so reruns can be
matched to their inputs.

Derived random streams: ``seed`` drives the scenario generator (or the
dataset split), ``child(3)`` the permutation plans, ``child(4)`` MLP
weight initialization.
"""

from __future__ import annotations

import hashlib
import json
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from . import figures
from .data import SplitSample, ingest_csv, split as split_dataset, write_csv
from .errors import AnalysisError, ConfigError, GhostvarError
from .linalg import RngState
from .predictors import (
    ExternalPredictorConfig,
    external_predictor,
    fit_basis_linear,
    fit_linear,
    fit_mlp,
    parse_basis,
    refit_factory,
)
from .relevance import (
    PermutationPlan,
    build_report,
    critical_value,
    estimate_mspe,
    fit_ghosts,
    relevance_ghost,
    relevance_omission,
    relevance_permutation,
)
from .relmatrix import (
    cluster_variables,
    eigen_report,
    partial_corr_from_V,
    build_case_matrix,
    relevance_matrix,
)
from .synthetic import SCENARIOS, ScenarioSpec, generate

SCHEMA_VERSION = "1"
VALID_METHODS = ("ghost", "permutation", "omission")
VALID_MODELS = ("linear", "basis", "mlp", "external")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one analysis run."""

    input_path: str | None = None
    scenario: str | None = None
    response: str | None = None
    model: str = "linear"
    basis: str | None = None
    hidden: int = 10
    decay: float = 0.5
    epochs: int = 4000
    lr: float = 2e-4
    predictor_cmd: str | None = None
    methods: tuple[str, ...] = ("ghost", "permutation")
    split_fraction: float = 0.7
    n1: int = 2000
    n2: int = 1000
    seed: int = 0
    alpha: float = 0.01
    eigen_threshold: float = 0.01
    linkage: str = "average"
    permutation_repeats: int = 1
    ghost_source: str = "test"
    out_dir: str | None = None

    def validate(self) -> None:
        if (self.input_path is None) == (self.scenario is None):
            raise ConfigError("exactly one of input_path and scenario is required")
        if self.scenario is not None and self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.input_path is not None and not self.response:
            raise ConfigError("a response column name is required with --input")
        if self.model not in VALID_MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {VALID_MODELS}")
        if self.model == "external" and not self.predictor_cmd:
            raise ConfigError("model 'external' requires --predictor-cmd")
        if self.predictor_cmd and self.model != "external":
            raise ConfigError("--predictor-cmd implies --model external")
        if not self.methods:
            raise ConfigError("at least one method is required")
        bad = set(self.methods) - set(VALID_METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}; expected subset of {VALID_METHODS}")
        if self.model == "external" and "omission" in self.methods:
            raise ConfigError("omission needs to refit the model; not possible for external predictors")
        if self.model == "basis" and self.basis is None and self.scenario != "ex2":
            raise ConfigError("model 'basis' requires --basis (or scenario ex2's oracle basis)")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError("split fraction must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if not 0.0 <= self.eigen_threshold <= 1.0:
            raise ConfigError("eigen threshold must lie in [0, 1]")
        if self.permutation_repeats < 1:
            raise ConfigError("permutation repeats must be >= 1")
        if self.ghost_source not in ("test", "train"):
            raise ConfigError("ghost source must be 'test' or 'train'")
        if self.linkage not in ("average", "complete", "single"):
            raise ConfigError("linkage must be average, complete or single")

    def hash(self) -> str:
        payload = {f.name: getattr(self, f.name) for f in fields(self)}
        blob = json.dumps(payload, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass
class MethodResult:
    """Relevance values plus matrix summaries for one method."""

    method: str
    relevance: np.ndarray
    matrix: np.ndarray
    eigenvalues: np.ndarray
    explained_fractions: np.ndarray
    components: list
    cluster: object | None
    cluster_note: str | None


@dataclass
class ReportBundle:
    """Everything one run produced, ready to serialize."""

    config: RunConfig
    config_hash: str
    variable_names: tuple[str, ...]
    model_family: str
    n1: int
    n2: int
    mspe: float
    critical_value: float | None
    report: object
    results: dict = field(default_factory=dict)
    partial_correlations: object | None = None
    written_files: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        methods = {}
        for name, res in self.results.items():
            scaled = self.report.scaled.get(name)
            methods[name] = {
                "relevance": arr(res.relevance),
                "scaled_relevance": arr(scaled),
                "matrix": arr(res.matrix),
                "eigenvalues": arr(res.eigenvalues),
                "explained_fractions": arr(res.explained_fractions),
                "eigen_components": [
                    {
                        "eigenvalue": c.eigenvalue,
                        "fraction": c.fraction,
                        "vector": arr(c.vector),
                    }
                    for c in res.components
                ],
                "cluster": None
                if res.cluster is None
                else {"linkage": res.cluster.linkage, "merges": arr(res.cluster.merges)},
                "cluster_note": res.cluster_note,
            }
        payload = {
            "schema_version": SCHEMA_VERSION,
            "package_version": _package_version(),
            "config_hash": self.config_hash,
            "seed": self.config.seed,
            "alpha": self.config.alpha,
            "model_family": self.model_family,
            "variable_names": list(self.variable_names),
            "n1": self.n1,
            "n2": self.n2,
            "mspe": self.mspe,
            "critical_value": self.critical_value,
            "methods": methods,
            "partial_correlations": None
            if self.partial_correlations is None
            else arr(self.partial_correlations.values),
        }
        return clean_tree(payload)


def clean_tree(obj):
    """Recursively replace non-finite floats with None (JSON has no NaN)."""
    if isinstance(obj, dict):
        return {k: clean_tree(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [clean_tree(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _package_version() -> str:
    try:
        return metadata.version("ghostvar")
    except metadata.PackageNotFoundError:
        return "unknown"


def load_report_schema() -> dict:
    with resources.files("ghostvar").joinpath("report_schema.json").open("r") as handle:
        return json.load(handle)


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------

@contextmanager
def _stage(name):
    try:
        yield
    except AnalysisError:
        raise
    except GhostvarError as exc:
        raise AnalysisError(name, exc) from exc


def _load_data(config: RunConfig) -> SplitSample:
    if config.scenario is not None:
        spec = ScenarioSpec(config.scenario, n1=config.n1, n2=config.n2, seed=config.seed)
        return generate(spec).split
    dataset = ingest_csv(config.input_path, config.response)
    return split_dataset(dataset, config.split_fraction, config.seed)


def _fit_model(config: RunConfig, split: SplitSample):
    """Returns (model, fit_fn or None for omission refits)."""
    if config.model == "linear":
        return fit_linear(split.train), fit_linear
    if config.model == "basis":
        if config.basis is not None:
            basis = parse_basis(config.basis)
        else:
            basis = generate(
                ScenarioSpec("ex2", n1=config.n1, n2=config.n2, seed=config.seed)
            ).truth.basis
        model = fit_basis_linear(split.train, basis)
        return model, refit_factory(model)
    if config.model == "mlp":
        model = fit_mlp(
            split.train,
            hidden=config.hidden,
            decay=config.decay,
            epochs=config.epochs,
            lr=config.lr,
            rng=RngState(config.seed).child(4),
        )
        return model, refit_factory(model)
    model = external_predictor(
        ExternalPredictorConfig(command=config.predictor_cmd), split.train.feature_names
    )
    return model, None


def run_analysis(config: RunConfig) -> ReportBundle:
    """Execute the configured analysis and write its artifacts.

    Raises :class:`ConfigError` for invalid configurations and
    :class:`AnalysisError` (wrapping the stage name) for failures in
    later stages.
    """
    config.validate()

    with _stage("data"):
        split = _load_data(config)

    with _stage("model"):
        model, fit_fn = _fit_model(config, split)

    names = split.train.feature_names
    p = len(names)
    rng = RngState(config.seed)

    with _stage("relevance"):
        mspe = estimate_mspe(model, split.test)
        replacements = {}
        method_values = {}
        if "ghost" in config.methods:
            fit_feats = split.train.features if config.ghost_source == "train" else None
            ghosts = fit_ghosts(split.test.features, fit_features=fit_feats)
            method_values["ghost"] = relevance_ghost(model, split.test, ghosts)
            replacements["ghost"] = ghosts
        if "permutation" in config.methods:
            plan = PermutationPlan.generate(split.n2, p, rng.child(3))
            values = relevance_permutation(model, split.test, plan)
            if config.permutation_repeats > 1:
                for r in range(1, config.permutation_repeats):
                    extra = PermutationPlan.generate(split.n2, p, rng.child(3, r))
                    values = values + relevance_permutation(model, split.test, extra)
                values = values / config.permutation_repeats
            method_values["permutation"] = values
            replacements["permutation"] = plan
        if "omission" in config.methods:
            method_values["omission"] = np.array(
                [relevance_omission(fit_fn, split, omit=[name]) for name in names]
            )

        crit = None
        if config.model == "linear" and {"ghost", "omission"} & set(config.methods):
            fit = model.ols
            crit = critical_value(fit.sigma2_hat, split.n1, p, config.alpha)
        report = build_report(
            names, method_values, mspe, split.n1, split.n2, config.alpha, crit
        )

    with _stage("matrix"):
        results = {}
        partials = None
        for method, replacement in replacements.items():
            A = build_case_matrix(model, split.test, replacement)
            V = relevance_matrix(A)
            components = eigen_report(V, config.eigen_threshold)
            cluster = None
            note = None
            try:
                cluster = cluster_variables(V, config.linkage)
            except GhostvarError as exc:
                note = str(exc)
            results[method] = MethodResult(
                method=method,
                relevance=method_values[method],
                matrix=V.values,
                eigenvalues=V.eigen.eigenvalues,
                explained_fractions=V.explained_fractions,
                components=components,
                cluster=cluster,
                cluster_note=note,
            )
            if method == "ghost" and config.model == "linear":
                partials = partial_corr_from_V(V, slopes=model.ols.slopes)
        if "omission" in method_values and "omission" not in results:
            results["omission"] = MethodResult(
                method="omission",
                relevance=method_values["omission"],
                matrix=np.diag(method_values["omission"]),
                eigenvalues=np.sort(method_values["omission"])[::-1],
                explained_fractions=_fractions(method_values["omission"]),
                components=[],
                cluster=None,
                cluster_note="omission yields per-variable values only; no case-variable matrix",
            )

    bundle = ReportBundle(
        config=config,
        config_hash=config.hash(),
        variable_names=names,
        model_family=model.family,
        n1=split.n1,
        n2=split.n2,
        mspe=mspe,
        critical_value=crit,
        report=report,
        results=results,
        partial_correlations=partials,
    )

    if config.out_dir is not None:
        with _stage("report"):
            _write_outputs(bundle)
    return bundle


def _fractions(values):
    values = np.sort(np.asarray(values))[::-1]
    total = values.sum()
    return values / total if total > 0 else np.zeros_like(values)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _write_outputs(bundle: ReportBundle) -> None:
    out = Path(bundle.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    json_path = out / "report.json"
    with open(json_path, "w", encoding="utf-8") as handle:
        json.dump(bundle.to_json_dict(), handle, indent=2, allow_nan=False)
        handle.write("\n")
    bundle.written_files.append(json_path)

    csv_path = out / "relevance.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        methods = list(bundle.results)
        header = ["variable"]
        for m in methods:
            header += [m, f"{m}_scaled"]
        handle.write(",".join(header) + "\n")
        for i, name in enumerate(bundle.variable_names):
            cells = [name]
            for m in methods:
                raw = bundle.results[m].relevance[i]
                scaled = bundle.report.scaled.get(m)
                cells.append(format(raw, ".17g"))
                cells.append("" if scaled is None else format(scaled[i], ".17g"))
            handle.write(",".join(cells) + "\n")
    bundle.written_files.append(csv_path)

    for method, res in bundle.results.items():
        prefix = out / f"relevance_{method}.svg"
        figures.save_relevance_bars(
            bundle.variable_names,
            res.relevance,
            bundle.critical_value if method in ("ghost", "omission") else None,
            prefix,
            f"Relevance by {method}",
        )
        bundle.written_files.append(prefix)
        if res.eigenvalues.size and res.components:
            eig_path = out / f"eigenvalues_{method}.svg"
            figures.save_eigenvalue_bars(
                res.eigenvalues, res.explained_fractions, eig_path, f"Eigenvalues ({method})"
            )
            bundle.written_files.append(eig_path)
            vec_path = out / f"eigenvectors_{method}.svg"
            figures.save_eigenvector_panels(
                res.components, bundle.variable_names, vec_path, f"Eigenvectors ({method})"
            )
            bundle.written_files.append(vec_path)
        if res.cluster is not None:
            dendro_path = out / f"dendrogram_{method}.svg"
            figures.save_dendrogram(res.cluster, dendro_path, f"Variable clustering ({method})")
            bundle.written_files.append(dendro_path)


def export_scenario(scenario: str, seed: int, n1: int, n2: int, out_dir) -> list[Path]:
    """Generate a scenario and write train/test CSV files."""
    spec = ScenarioSpec(scenario, n1=n1, n2=n2, seed=seed)
    data = generate(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_path = out / f"{scenario}_train.csv"
    test_path = out / f"{scenario}_test.csv"
    write_csv(data.split.train, train_path)
    write_csv(data.split.test, test_path)
    return [train_path, test_path]
