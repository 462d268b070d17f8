"""Command-line front end.

Two subcommands::

    ghostvar analyze --input data.csv --response y --model linear \
        --methods ghost,perm --seed 7 --out results/
    ghostvar analyze --scenario ex1 --seed 4 --methods all --out results/
    ghostvar scenario --id ex1 --seed 4 --out data/

``analyze`` writes report.json, relevance.csv and the SVG figures into
the output directory. Exit codes: 0 success, 2 configuration error,
3 data error, 4 numeric or model failure. Diagnostics go to stderr as
``ghostvar: error: <stage>: <message>``.
"""

from __future__ import annotations

import argparse
import sys

from . import errors
from .analysis import RunConfig, export_scenario, run_analysis

DATA_ERRORS = (
    errors.ParseError,
    errors.MissingResponseColumn,
    errors.EmptyFile,
    errors.TooFewRows,
    errors.SchemaMismatch,
)

_METHOD_ALIASES = {"perm": "permutation", "permutation": "permutation", "ghost": "ghost", "omission": "omission"}


def _parse_methods(text: str) -> tuple[str, ...]:
    if text.strip() == "all":
        return ("ghost", "permutation", "omission")
    out = []
    for chunk in text.split(","):
        name = chunk.strip().lower()
        if not name:
            continue
        out.append(_METHOD_ALIASES.get(name, name))
    return tuple(dict.fromkeys(out))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghostvar",
        description="Model-agnostic variable relevance via ghost variables, "
        "permutations and omission, with relevance-matrix eigenanalysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="run a relevance analysis")
    source = analyze.add_mutually_exclusive_group(required=True)
    source.add_argument("--input", help="CSV file with a header row of numeric columns")
    source.add_argument("--scenario", choices=("ex1", "ex2", "ex3"), help="built-in synthetic design")
    analyze.add_argument("--response", help="name of the response column (required with --input)")
    analyze.add_argument("--model", default="linear", choices=("linear", "basis", "mlp", "external"))
    analyze.add_argument("--basis", help="basis spec, e.g. 'cos:0,cos:1,prod:1:2,id:3'")
    analyze.add_argument("--hidden", type=int, default=10, help="MLP hidden units")
    analyze.add_argument("--decay", type=float, default=0.5, help="MLP weight decay")
    analyze.add_argument("--epochs", type=int, default=4000, help="MLP training epochs")
    analyze.add_argument("--lr", type=float, default=2e-4, help="MLP learning rate")
    analyze.add_argument("--predictor-cmd", help="external predictor command (implies --model external)")
    analyze.add_argument("--methods", default="ghost,permutation", help="comma list of ghost,perm,omission or 'all'")
    analyze.add_argument("--split-fraction", type=float, default=0.7, help="training fraction for CSV input")
    analyze.add_argument("--n1", type=int, default=2000, help="scenario training size")
    analyze.add_argument("--n2", type=int, default=1000, help="scenario test size")
    analyze.add_argument("--seed", type=int, default=0)
    analyze.add_argument("--alpha", type=float, default=0.01, help="level for the critical value")
    analyze.add_argument("--eigen-threshold", type=float, default=0.01, help="minimum explained fraction to report")
    analyze.add_argument("--linkage", default="average", choices=("average", "complete", "single"))
    analyze.add_argument("--permutation-repeats", type=int, default=1)
    analyze.add_argument("--ghost-source", default="test", choices=("test", "train"))
    analyze.add_argument("--out", required=True, help="output directory")

    scenario = sub.add_parser("scenario", help="export a synthetic scenario as train/test CSV files")
    scenario.add_argument("--id", required=True, choices=("ex1", "ex2", "ex3"))
    scenario.add_argument("--seed", type=int, default=0)
    scenario.add_argument("--n1", type=int, default=2000)
    scenario.add_argument("--n2", type=int, default=1000)
    scenario.add_argument("--out", required=True, help="output directory")
    return parser


def _fail(code: int, stage: str, message: str) -> int:
    print(f"ghostvar: error: {stage}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenario":
        try:
            paths = export_scenario(args.id, args.seed, args.n1, args.n2, args.out)
        except errors.GhostvarError as exc:
            return _fail(3, "scenario", str(exc))
        for path in paths:
            print(path)
        return 0

    model = args.model
    if args.predictor_cmd and model == "linear":
        model = "external"
    config = RunConfig(
        input_path=args.input,
        scenario=args.scenario,
        response=args.response,
        model=model,
        basis=args.basis,
        hidden=args.hidden,
        decay=args.decay,
        epochs=args.epochs,
        lr=args.lr,
        predictor_cmd=args.predictor_cmd,
        methods=_parse_methods(args.methods),
        split_fraction=args.split_fraction,
        n1=args.n1,
        n2=args.n2,
        seed=args.seed,
        alpha=args.alpha,
        eigen_threshold=args.eigen_threshold,
        linkage=args.linkage,
        permutation_repeats=args.permutation_repeats,
        ghost_source=args.ghost_source,
        out_dir=args.out,
    )
    try:
        bundle = run_analysis(config)
    except errors.ConfigError as exc:
        return _fail(2, "config", str(exc))
    except errors.AnalysisError as exc:
        code = 3 if isinstance(exc.cause, DATA_ERRORS) else 4
        return _fail(code, exc.stage, str(exc.cause))
    except errors.GhostvarError as exc:
        return _fail(4, "analysis", str(exc))

    for path in bundle.written_files:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
