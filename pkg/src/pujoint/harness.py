"""Replicated experiment runner and report writers."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, PUDataset, atomic_write_text, fit_scaling, load_csv, split_indices
from .estimators import METHODS, TMConfig, classify, fit_method, fit_oracle, predict_posterior
from .evaluation import EvalReport, MetricRecord, accuracy, approximation_error, comparison_table
from .glm import LinearParams
from .synth import (
    DEFAULT_C_GRID,
    DEFAULT_G_GRID,
    RNG_ALGORITHM,
    ArtifSpec,
    ScenarioSpec,
    apply_labelling,
    gen_artif,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
WORKERS_ENV = "PUJOINT_WORKERS"


@dataclass(frozen=True)
class DataSource:
    """Either an artificial generator (``kind='artif'``) or a CSV file."""

    kind: str = "artif"
    artif: int = 1
    n: int = 2000
    p: int = 50
    beta_scale: float = 1.0
    path: str | None = None
    label_column: str | int | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind not in ("artif", "csv"):
            raise ValueError("data source kind must be 'artif' or 'csv'")
        if self.kind == "csv" and (self.path is None or self.label_column is None):
            raise ValueError("csv source needs path and label_column")
        if self.kind == "artif" and self.artif not in (1, 2):
            raise ValueError("artif must be 1 or 2")

    def artif_spec(self) -> ArtifSpec:
        link = "logistic" if self.artif == 1 else "cauchy"
        beta = LinearParams(0.0, np.full(self.p, self.beta_scale * self.p**-0.5))
        return ArtifSpec(self.n, self.p, link, beta)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return f"Artif{self.artif}" if self.kind == "artif" else Path(self.path).stem


@dataclass(frozen=True)
class ExperimentConfig:
    data_source: DataSource = field(default_factory=DataSource)
    scenario: ScenarioSpec = field(default_factory=lambda: ScenarioSpec("scar_constant", c=0.5))
    sweep: tuple[float, ...] | None = None
    methods: tuple[str, ...] = ("naive", "tm_simple", "em", "tm", "joint", "lbe")
    replications: int = 100
    train_fraction: float = 0.7
    base_seed: int = 0
    tm: TMConfig = field(default_factory=TMConfig)
    output_dir: str = "results"

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if self.sweep is not None:
            if len(self.sweep) == 0:
                raise ValueError("sweep grid must be nonempty")
            if self.scenario.kind == "product_scaled":
                raise ValueError("product_scaled scenario has no sweep parameter")
            object.__setattr__(self, "sweep", tuple(float(v) for v in self.sweep))
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")

    def sweep_points(self) -> list[tuple[float | None, ScenarioSpec]]:
        if self.sweep is None:
            return [(self.scenario.param, self.scenario)]
        return [(v, self.scenario.with_param(v)) for v in self.sweep]

    def to_dict(self) -> dict:
        return {
            "data_source": asdict(self.data_source),
            "scenario": self.scenario.to_dict(),
            "sweep": None if self.sweep is None else list(self.sweep),
            "methods": list(self.methods),
            "replications": self.replications,
            "train_fraction": self.train_fraction,
            "base_seed": self.base_seed,
            "tm": self.tm.to_dict(),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        scenario = ScenarioSpec.from_dict(d.get("scenario", {"kind": "scar_constant", "c": 0.5}))
        sweep = d.get("sweep")
        if sweep == "default":
            sweep = {"scar_constant": DEFAULT_C_GRID, "logistic_propensity": DEFAULT_G_GRID}[scenario.kind]
        tm = dict(d.get("tm", {}))
        if "solver" in d:  # a top-level solver block sets both loops
            tm.setdefault("solver", d["solver"])
            tm.setdefault("outer", d["solver"])
        kw = {}
        for key in ("replications", "train_fraction", "base_seed", "output_dir"):
            if key in d:
                kw[key] = d[key]
        if "methods" in d:
            kw["methods"] = tuple(d["methods"])
        return cls(
            data_source=DataSource(**d.get("data_source", {})),
            scenario=scenario,
            sweep=None if sweep is None else tuple(sweep),
            tm=TMConfig.from_dict(tm),
            **kw,
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def cell_seed(base_seed: int, sweep_index: int, replication: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed) & (2**64 - 1), sweep_index, replication])


def seed_key(base_seed: int, sweep_index: int, replication: int) -> int:
    """A 64-bit integer fingerprint of the cell seed."""
    return int(cell_seed(base_seed, sweep_index, replication).generate_state(2, np.uint32).view(np.uint64)[0])


def _load_source(cfg: ExperimentConfig) -> Dataset | None:
    if cfg.data_source.kind == "csv":
        return load_csv(cfg.data_source.path, cfg.data_source.label_column)
    return None


def run_cell(cfg: ExperimentConfig, sweep_index: int, scenario: ScenarioSpec, replication: int, csv_data=None):
    """Fit every method on one replication of one sweep point."""
    data_ss, label_ss, split_ss = cell_seed(cfg.base_seed, sweep_index, replication).spawn(3)
    src = cfg.data_source
    if src.kind == "artif":
        spec = src.artif_spec()
        data = gen_artif(spec, np.random.default_rng(data_ss))
    else:
        spec = None
        data = csv_data
        # benchmark rows are fixed; only the split varies with the replication
        split_ss = np.random.SeedSequence([int(cfg.base_seed) & (2**64 - 1), replication, 7])
    pu = apply_labelling(data, scenario, np.random.default_rng(label_ss))
    train_idx, test_idx = split_indices(pu.n, cfg.train_fraction, np.random.default_rng(split_ss))

    scaling = fit_scaling(pu.X, train_idx)
    Xs = scaling.apply(pu.X)
    train = PUDataset(Xs[train_idx], pu.S[train_idx], pu.Y_hidden[train_idx], pu.feature_names)
    X_test = Xs[test_idx]
    y_test = pu.Y_hidden[test_idx]

    if spec is not None:
        reference = spec.posterior(pu.X[test_idx])
    else:
        oracle = fit_oracle(Dataset(train.X, train.Y_hidden), cfg.tm)
        reference = predict_posterior(oracle, X_test)

    param = scenario.param
    records = []
    for method in cfg.methods:
        try:
            model = fit_method(method, train, cfg.tm)
            probs = predict_posterior(model, X_test)
            if not np.all(np.isfinite(probs)):
                raise FloatingPointError("non-finite predictions")
            records.append(
                MetricRecord(method, param, replication, accuracy(classify(probs), y_test),
                             approximation_error(probs, reference), sweep_index)
            )
        except Exception as exc:  # isolate failures per cell
            logger.warning("%s failed at sweep %d rep %d: %s", method, sweep_index, replication, exc)
            records.append(MetricRecord(method, param, replication, float("nan"), float("nan"),
                                        sweep_index, failed=True, error=f"{type(exc).__name__}: {exc}"))
    return records


def _run_cell_args(args):
    return run_cell(*args)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> EvalReport:
    """Run every (sweep point, replication) cell and collect the records.

    Results do not depend on ``workers``: each cell draws from its own seed
    and records are ordered by (sweep index, replication, method).
    """
    workers = default_workers() if workers is None else workers
    csv_data = _load_source(cfg)
    jobs = [
        (cfg, idx, scenario, r, csv_data)
        for idx, (_, scenario) in enumerate(cfg.sweep_points())
        for r in range(cfg.replications)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_cell_args, jobs, chunksize=1))
    else:
        results = [_run_cell_args(j) for j in jobs]
    order = {m: i for i, m in enumerate(cfg.methods)}
    records = sorted(
        (rec for cell in results for rec in cell),
        key=lambda r: (r.sweep_index, r.replication, order[r.method]),
    )
    provenance = cfg.to_dict()
    provenance["rng_algorithm"] = RNG_ALGORITHM
    provenance["package_version"] = __version__
    return EvalReport(cfg.data_source.label, list(cfg.methods), records, provenance)


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o)}")


def report_json(report: EvalReport, timestamp: bool = True) -> str:
    payload = {"schema_version": SCHEMA_VERSION}
    if timestamp:
        payload["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    payload.update(report.to_dict())
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default, allow_nan=True)


def load_report_json(path) -> EvalReport:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported report schema {d.get('schema_version')!r}")
    return EvalReport.from_dict(d)


RECORD_FIELDS = ("method", "scenario_param", "replication", "sweep_index", "accuracy", "ae", "failed", "error")


def records_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in report.records:
        w.writerow([
            r.method,
            "" if r.scenario_param is None else repr(float(r.scenario_param)),
            r.replication,
            r.sweep_index,
            repr(float(r.accuracy)),
            repr(float(r.ae)),
            int(r.failed),
            r.error,
        ])
    return buf.getvalue()


def records_from_csv(text: str, dataset: str, methods=None, config=None) -> EvalReport:
    rows = list(csv.DictReader(io.StringIO(text)))
    records = [
        MetricRecord(
            method=row["method"],
            scenario_param=None if row["scenario_param"] == "" else float(row["scenario_param"]),
            replication=int(row["replication"]),
            accuracy=float(row["accuracy"]),
            ae=float(row["ae"]),
            sweep_index=int(row["sweep_index"]),
            failed=bool(int(row["failed"])),
            error=row["error"],
        )
        for row in rows
    ]
    if methods is None:
        methods = list(dict.fromkeys(r.method for r in records))
    return EvalReport(dataset, list(methods), records, config or {})


def table_csv(reports: list[EvalReport], metric: str, methods=None) -> str:
    """Datasets as rows, methods as columns ("mean ± se"), p-value column and
    a final ``avg. rank`` row."""
    table = comparison_table(reports, metric, methods)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", *table["methods"], "p-value"])
    for row in table["rows"]:
        cells = [f"{mean:.3f} ± {se:.3f}" for mean, se in (row["cells"][m] for m in table["methods"])]
        p = row["p_value"]
        w.writerow([row["dataset"], *cells, "<0.001" if p < 0.001 else f"{p:.4f}"])
    w.writerow(["avg. rank", *(f"{table['avg_rank'][m]:.1f}" for m in table["methods"]), ""])
    return buf.getvalue()


def plotdata_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "sweep_value", "metric", "mean", "se"])
    for method in report.methods:
        for metric in ("accuracy", "ae"):
            for value, mean, se in report.curve(method, metric):
                w.writerow([method, "" if value is None else value, metric, repr(mean), repr(se)])
    return buf.getvalue()


def emit_report(report: EvalReport, output_dir, formats=("json", "csv", "plotdata")) -> list[Path]:
    """Write the requested artefacts atomically; returns the paths written."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    written = []
    for fmt in formats:
        if fmt == "json":
            targets = {"report.json": report_json(report)}
        elif fmt == "csv":
            targets = {
                "records.csv": records_csv(report),
                "accuracy_table.csv": table_csv([report], "accuracy"),
                "ae_table.csv": table_csv([report], "ae"),
            }
        elif fmt == "plotdata":
            targets = {"plotdata.csv": plotdata_csv(report)}
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        for name, text in targets.items():
            path = out / name
            atomic_write_text(path, text)
            written.append(path)
    return written
