"""Command-line entry point: ``experiment``, ``fit``, ``predict``,
``simulate`` and ``table``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .data import PUDataset, ScalingParams, atomic_write_text, dataset_from_frame, fit_scaling, write_csv
from .estimators import METHODS, FittedPUModel, TMConfig, fit_method, predict_posterior, predict_propensity
from .evaluation import EvalReport
from .harness import (
    ExperimentConfig,
    emit_report,
    load_report_json,
    run_experiment,
    table_csv,
)
from .synth import ArtifSpec, ScenarioSpec, apply_labelling, gen_artif

MODEL_SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """Model file and input data disagree on feature columns."""


def _read_frame(path, drop=()) -> pd.DataFrame:
    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip", skipinitialspace=True)
    missing = [c for c in drop if c not in frame.columns]
    if missing:
        raise KeyError(f"columns to drop not found: {missing}")
    return frame.drop(columns=list(drop))


def fit_csv(method: str, data_path, label, drop=(), tm: TMConfig | None = None) -> dict:
    """Fit ``method`` on a CSV whose label column is the observed S."""
    if method not in METHODS or method == "oracle":
        raise ValueError(f"unknown PU method {method!r}")
    ds = dataset_from_frame(_read_frame(data_path, drop), label)
    scaling = fit_scaling(ds.X, None, ds.feature_names)
    pu = PUDataset(scaling.apply(ds.X), ds.Y, None, ds.feature_names)
    model = fit_method(method, pu, tm)
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "label_column": label,
        "scaling": scaling.to_dict(),
        "model": model.to_dict(),
    }


def _features_for(payload: dict, frame: pd.DataFrame) -> np.ndarray:
    from .data import one_hot_encode

    names = list(payload["scaling"]["feature_names"])
    for col in frame.columns:
        if frame[col].dtype == object:
            converted = pd.to_numeric(frame[col], errors="coerce")
            if not converted.isna().any():
                frame[col] = converted
    encoded = one_hot_encode(frame)
    got = list(encoded.columns)
    if got != names:
        if len(got) != len(names):
            raise SchemaError(f"model expects {len(names)} feature columns, data has {len(got)}")
        raise SchemaError(f"feature names differ from the model: expected {names}, got {got}")
    return encoded.to_numpy(dtype=float)


def predict_csv(payload: dict, data_path, drop=()) -> pd.DataFrame:
    if payload.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise SchemaError("unsupported model file schema")
    frame = _read_frame(data_path, drop)
    label = payload.get("label_column")
    if label in frame.columns:
        frame = frame.drop(columns=[label])
    X = ScalingParams.from_dict(payload["scaling"]).apply(_features_for(payload, frame))
    model = FittedPUModel.from_dict(payload["model"])
    out = pd.DataFrame({"y_hat": predict_posterior(model, X)})
    e = predict_propensity(model, X)
    if e is not None:
        out["e_hat"] = e
    return out


def _scenario_from_args(args) -> ScenarioSpec:
    if args.scenario == 1:
        return ScenarioSpec.scenario(1, c=args.c)
    if args.scenario == 2:
        return ScenarioSpec.scenario(2, g=args.g)
    return ScenarioSpec.scenario(3, k=args.k, p_minus=args.p_minus, p_plus=args.p_plus)


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    report = run_experiment(cfg, workers=args.workers)
    out = Path(args.output_dir or cfg.output_dir)
    paths = emit_report(report, out, args.formats.split(","))
    for m in report.methods:
        acc = report.aggregate(m, "accuracy")
        ae = report.aggregate(m, "ae")
        print(f"{m:10s} accuracy {acc[0]:.3f} ± {acc[1]:.3f}   AE {ae[0]:.3f} ± {ae[1]:.3f}")
    print("wrote", ", ".join(str(p) for p in paths))
    return 0


def cmd_fit(args) -> int:
    tm = TMConfig.from_dict(json.loads(Path(args.tm_config).read_text())) if args.tm_config else None
    payload = fit_csv(args.method, args.data, args.label, args.drop, tm)
    atomic_write_text(args.out, json.dumps(payload, indent=2))
    return 0


def cmd_predict(args) -> int:
    payload = json.loads(Path(args.model).read_text(encoding="utf-8"))
    out = predict_csv(payload, args.data, args.drop)
    atomic_write_text(args.out, out.to_csv(index=False, float_format="%.17g"))
    return 0


def cmd_simulate(args) -> int:
    spec = ArtifSpec.artif(args.artif, n=args.n, p=args.p)
    rng = np.random.default_rng(args.seed)
    data = gen_artif(spec, rng)
    pu = apply_labelling(data, _scenario_from_args(args), rng)
    extra = {"y": pu.Y_hidden} if args.with_truth else None
    write_csv(args.out, pu.X, pu.S, data.feature_names, label_name="s", extra=extra)
    return 0


def cmd_table(args) -> int:
    reports: list[EvalReport] = [load_report_json(p) for p in args.reports]
    text = table_csv(reports, args.metric)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pujoint", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("experiment", help="run a replicated experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int, default=None, help="processes (default: $PUJOINT_WORKERS or 1)")
    p.add_argument("--formats", default="json,csv,plotdata")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("fit", help="fit a PU method on a CSV (label column = S)")
    p.add_argument("--method", required=True, choices=[m for m in METHODS if m != "oracle"])
    p.add_argument("--data", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("--drop", nargs="*", default=[], help="columns to ignore")
    p.add_argument("--tm-config", help="JSON file with estimator settings")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="posterior (and propensity) for each row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--drop", nargs="*", default=[])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="write an artificial PU dataset to CSV")
    p.add_argument("--artif", type=int, choices=(1, 2), default=1)
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--g", type=float, default=0.5)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--p-minus", type=float, default=0.2)
    p.add_argument("--p-plus", type=float, default=0.6)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--p", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--with-truth", action="store_true", help="also write the hidden class as column y")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table", help="combine report.json files into a comparison table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--metric", choices=("accuracy", "ae"), default="accuracy")
    p.add_argument("--out")
    p.set_defaults(func=cmd_table)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SchemaError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
