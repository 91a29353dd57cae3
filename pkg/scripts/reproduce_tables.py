"""Run the simulation studies and write one comparison table per scenario.

Each scenario's table has Artif1 and Artif2 as rows, methods as columns
("mean ± se"), a p-value column for the best method against the runner-up,
and an average-rank row. Accuracy and AE tables are both written.

Example
-------
    python3 scripts/reproduce_tables.py --replications 20 --out results/tables
"""

import argparse
import dataclasses
import logging
import time
from pathlib import Path

from pujoint.data import atomic_write_text
from pujoint.harness import ExperimentConfig, emit_report, run_experiment, table_csv

CONFIG_DIR = Path(__file__).with_name("configs")


def run(config_path: Path, replications: int | None, workers: int | None, out: Path):
    cfg = ExperimentConfig.from_json(config_path)
    if replications is not None:
        cfg = dataclasses.replace(cfg, replications=replications)
    t0 = time.perf_counter()
    report = run_experiment(cfg, workers=workers)
    emit_report(report, out / config_path.stem)
    logging.info("%s: %d records in %.0fs", config_path.stem, len(report.records), time.perf_counter() - t0)
    return report


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", type=int, nargs="+", default=[1, 2, 3], choices=(1, 2, 3))
    ap.add_argument("--replications", type=int, default=None, help="override the configs' 100 replications")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", type=Path, default=Path("results/tables"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    for scenario in args.scenarios:
        reports = [
            run(CONFIG_DIR / f"artif{a}_scenario{scenario}.json", args.replications, args.workers, args.out)
            for a in (1, 2)
        ]
        for metric in ("accuracy", "ae"):
            path = args.out / f"scenario{scenario}_{metric}.csv"
            text = table_csv(reports, metric)
            atomic_write_text(path, text)
            print(f"== scenario {scenario}, {metric} ==")
            print(text)


if __name__ == "__main__":
    main()
