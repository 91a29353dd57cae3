"""Metrics and method-comparison statistics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .glm import log_sigmoid

BONFERRONI_LEVEL = 0.05 / 15


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.size == 0:
        raise ValueError("pred and truth must be nonempty and of equal length")
    return float(np.mean(pred == truth))


def approximation_error(p_hat, p_ref) -> float:
    """Mean absolute gap between two posterior-probability vectors."""
    p_hat = np.asarray(p_hat, dtype=float)
    p_ref = np.asarray(p_ref, dtype=float)
    if p_hat.shape != p_ref.shape or p_hat.size == 0:
        raise ValueError("probability vectors must be nonempty and of equal length")
    return float(np.mean(np.abs(p_hat - p_ref)))


def _bernoulli_deviance_from_eta(eta, y) -> float:
    return float(-2.0 * np.sum(y * log_sigmoid(eta) + (1 - y) * log_sigmoid(-eta)))


def deviance_r2_from_eta(eta, y) -> float:
    """Explained-deviance R^2 given a fit's linear predictors.

    The null model is the intercept-only fit, whose probability is the
    sample mean of ``y``.
    """
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if y.min() == y.max():
        raise ValueError("deviance R^2 needs both classes present")
    ybar = y.mean()
    null_eta = np.full_like(y, np.log(ybar / (1 - ybar)))
    dev_null = _bernoulli_deviance_from_eta(null_eta, y)
    return 1.0 - _bernoulli_deviance_from_eta(eta, y) / dev_null


def deviance_r2(model, dataset) -> float:
    """Explained-deviance R^2 of ``model``'s posterior on ``dataset.Y``."""
    params = model.posterior
    eta = params.intercept + np.asarray(dataset.X, dtype=float) @ params.coefficients
    return deviance_r2_from_eta(eta, dataset.Y)


def welch_t_test(sample_a, sample_b) -> float:
    """Two-sided p-value of Welch's unequal-variance t-test."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least two values")
    if a.var() == 0 and b.var() == 0:
        return 1.0 if a.mean() == b.mean() else 0.0
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)


def average_ranks(matrix, higher_is_better: bool = True) -> np.ndarray:
    """Rank methods within each row (1 = best, ties averaged), then average
    the ranks over rows."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("expected a nonempty rows x methods matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("metric matrix has non-finite entries")
    ranks = stats.rankdata(-m if higher_is_better else m, axis=1)
    return ranks.mean(axis=0)


def mean_se(values) -> tuple[float, float]:
    """Mean and standard error of the mean (ddof=1)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


@dataclass
class MetricRecord:
    method: str
    scenario_param: float | None
    replication: int
    accuracy: float
    ae: float
    sweep_index: int = 0
    failed: bool = False
    error: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalReport:
    """Per-replication records plus their aggregates for one dataset."""

    dataset: str
    methods: list[str]
    records: list[MetricRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def ok_records(self, method: str) -> list[MetricRecord]:
        return [r for r in self.records if r.method == method and not r.failed]

    def sweep_values(self) -> list:
        seen: dict[int, float | None] = {}
        for r in self.records:
            seen.setdefault(r.sweep_index, r.scenario_param)
        return [seen[k] for k in sorted(seen)]

    def per_replication(self, method: str, metric: str) -> np.ndarray:
        """Metric averaged over the sweep grid, one value per replication."""
        by_rep: dict[int, list[float]] = {}
        for r in self.ok_records(method):
            by_rep.setdefault(r.replication, []).append(getattr(r, metric))
        return np.array([np.mean(by_rep[k]) for k in sorted(by_rep)])

    def aggregate(self, method: str, metric: str) -> tuple[float, float]:
        return mean_se(self.per_replication(method, metric))

    def curve(self, method: str, metric: str) -> list[tuple[float | None, float, float]]:
        """(sweep value, mean, se) per sweep point."""
        out = []
        for idx, value in enumerate(self.sweep_values()):
            vals = [getattr(r, metric) for r in self.ok_records(method) if r.sweep_index == idx]
            out.append((value, *mean_se(vals)))
        return out

    def n_failed(self, method: str) -> int:
        return sum(1 for r in self.records if r.method == method and r.failed)

    def winner(self, metric: str, methods=None) -> tuple[str, str, float]:
        """Best and runner-up method plus the Welch p-value between them."""
        higher = metric == "accuracy"
        methods = [m for m in (methods or self.methods) if m != "oracle" and self.ok_records(m)]
        means = {m: self.aggregate(m, metric)[0] for m in methods}
        order = sorted(methods, key=lambda m: -means[m] if higher else means[m])
        if len(order) < 2:
            return order[0], "", float("nan")
        a = self.per_replication(order[0], metric)
        b = self.per_replication(order[1], metric)
        p = welch_t_test(a, b) if a.size >= 2 and b.size >= 2 else float("nan")
        return order[0], order[1], p

    def to_dict(self) -> dict:
        aggregates = {
            m: {metric: dict(zip(("mean", "se"), self.aggregate(m, metric))) for metric in ("accuracy", "ae")}
            for m in self.methods
        }
        winners = {}
        for metric in ("accuracy", "ae"):
            best, second, p = self.winner(metric)
            winners[metric] = {
                "winner": best,
                "runner_up": second,
                "p_value": p,
                "significant_bonferroni": bool(p < BONFERRONI_LEVEL) if np.isfinite(p) else False,
            }
        return {
            "dataset": self.dataset,
            "methods": list(self.methods),
            "config": self.config,
            "records": [r.to_dict() for r in self.records],
            "aggregates": aggregates,
            "winners": winners,
            "failures": {m: self.n_failed(m) for m in self.methods},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            dataset=d["dataset"],
            methods=list(d["methods"]),
            records=[MetricRecord(**r) for r in d["records"]],
            config=d.get("config", {}),
        )


def comparison_table(reports: list[EvalReport], metric: str, methods=None) -> dict:
    """Datasets x methods table of mean and SE with an ``avg. rank`` row.

    Methods are ranked on the means. When ORACLE was run it takes part in
    the ranking like any other column (the published tables rank it too,
    which is why their worst average rank exceeds the number of PU methods);
    it is never reported as the winner.
    """
    methods = methods or list(reports[0].methods)
    rows = []
    means = []
    for rep in reports:
        cells = {m: rep.aggregate(m, metric) for m in methods}
        _, _, p = rep.winner(metric, methods)
        rows.append({"dataset": rep.dataset, "cells": cells, "p_value": p})
        means.append([cells[m][0] for m in methods])
    ranks = average_ranks(np.array(means), higher_is_better=(metric == "accuracy"))
    return {"methods": methods, "rows": rows, "avg_rank": dict(zip(methods, ranks.tolist()))}
