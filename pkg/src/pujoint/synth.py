"""Artificial PU data and the three labelling mechanisms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, PUDataset
from .glm import LinearParams, sigmoid

RNG_ALGORITHM = "numpy PCG64 / ziggurat normals"

LINKS = ("logistic", "cauchy")
SCENARIO_KINDS = ("scar_constant", "logistic_propensity", "product_scaled")

DEFAULT_C_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))
DEFAULT_G_GRID = tuple(round(0.1 * k, 1) for k in range(1, 11))


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def cauchy_cdf(t):
    return 0.5 + np.arctan(t) / np.pi


@dataclass(frozen=True)
class ArtifSpec:
    n: int = 2000
    p: int = 50
    link: str = "logistic"
    beta_star: LinearParams | None = None

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        if self.beta_star is None:
            object.__setattr__(self, "beta_star", LinearParams(0.0, np.full(self.p, self.p**-0.5)))
        elif self.beta_star.dim != self.p:
            raise ValueError("beta_star dimension does not match p")

    def posterior(self, X) -> np.ndarray:
        """True P(Y=1 | x) of the generating model."""
        eta = self.beta_star.intercept + np.asarray(X, dtype=float) @ self.beta_star.coefficients
        return sigmoid(eta) if self.link == "logistic" else cauchy_cdf(eta)

    @classmethod
    def artif(cls, which: int, n: int = 2000, p: int = 50) -> "ArtifSpec":
        return cls(n=n, p=p, link={1: "logistic", 2: "cauchy"}[which])


def gen_artif(spec: ArtifSpec, seed) -> Dataset:
    rng = make_rng(seed)
    X = rng.standard_normal((spec.n, spec.p))
    Y = (rng.random(spec.n) < spec.posterior(X)).astype(np.int64)
    return Dataset(X, Y)


@dataclass(frozen=True)
class ScenarioSpec:
    """Labelling mechanism: constant ``c``, logistic with slope ``g``, or
    the scaled product over the first ``k`` features."""

    kind: str
    c: float | None = None
    g: float | None = None
    k: int | None = None
    p_minus: float | None = None
    p_plus: float | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"kind must be one of {SCENARIO_KINDS}")
        if self.kind == "scar_constant":
            if self.c is None or not 0 < self.c <= 1:
                raise ValueError("scar_constant requires c in (0, 1]")
        elif self.kind == "logistic_propensity":
            if self.g is None or not np.isfinite(self.g):
                raise ValueError("logistic_propensity requires a finite g")
        else:
            if self.k is None or self.k < 1:
                raise ValueError("product_scaled requires k >= 1")
            if self.p_minus is None or self.p_plus is None or not 0 < self.p_minus <= self.p_plus <= 1:
                raise ValueError("product_scaled requires 0 < p_minus <= p_plus <= 1")

    @classmethod
    def scenario(cls, number: int, **kw) -> "ScenarioSpec":
        return cls(kind=SCENARIO_KINDS[number - 1], **kw)

    @property
    def number(self) -> int:
        return SCENARIO_KINDS.index(self.kind) + 1

    def with_param(self, value: float) -> "ScenarioSpec":
        """Copy with the swept parameter (``c`` or ``g``) replaced."""
        if self.kind == "scar_constant":
            return ScenarioSpec(self.kind, c=value)
        if self.kind == "logistic_propensity":
            return ScenarioSpec(self.kind, g=value)
        raise ValueError("product_scaled has no sweep parameter")

    @property
    def param(self) -> float | None:
        return {"scar_constant": self.c, "logistic_propensity": self.g}.get(self.kind)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        kind = d["kind"]
        if isinstance(kind, int):
            kind = SCENARIO_KINDS[kind - 1]
        fields = {k: d[k] for k in ("c", "g", "k", "p_minus", "p_plus") if d.get(k) is not None}
        return cls(kind=kind, **fields)


def column_ranges(X) -> np.ndarray:
    """Per-column (min, max) as a (p, 2) array."""
    X = np.asarray(X, dtype=float)
    return np.column_stack([X.min(axis=0), X.max(axis=0)])


def propensity_of(X, scenario: ScenarioSpec, ranges=None) -> np.ndarray | float:
    """Labelling probability of a positive at ``X`` (a row or a matrix).

    ``ranges`` is the (p, 2) min/max table required by ``product_scaled``.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xm = np.atleast_2d(X)
    p = Xm.shape[1]
    if scenario.kind == "scar_constant":
        e = np.full(Xm.shape[0], float(scenario.c))
    elif scenario.kind == "logistic_propensity":
        gamma = np.full(p, scenario.g * p**-0.5)
        e = sigmoid(Xm @ gamma)
    else:
        k = scenario.k
        if k > p:
            raise ValueError(f"k={k} exceeds the number of features {p}")
        if ranges is None:
            raise ValueError("product_scaled needs per-column ranges")
        ranges = np.asarray(ranges, dtype=float)[:k]
        lo, hi = ranges[:, 0], ranges[:, 1]
        if np.any(hi <= lo):
            raise ValueError("degenerate column range (min == max) in product_scaled scenario")
        frac = (Xm[:, :k] - lo) / (hi - lo)
        sc = scenario.p_minus + frac * (scenario.p_plus - scenario.p_minus)
        # geometric mean; clip guards rows outside the reference range
        sc = np.clip(sc, 1e-12, 1.0)
        e = np.exp(np.log(sc).mean(axis=1))
    e = np.clip(e, 0.0, 1.0)
    return float(e[0]) if single else e


def apply_labelling(dataset: Dataset, scenario: ScenarioSpec, seed) -> PUDataset:
    """Draw ``S ~ Bernoulli(e(x))`` for positives, ``S = 0`` for negatives.

    Ranges for the product scenario are taken over all rows of ``dataset``.
    """
    rng = make_rng(seed)
    ranges = column_ranges(dataset.X) if scenario.kind == "product_scaled" else None
    e = propensity_of(dataset.X, scenario, ranges)
    u = rng.random(dataset.n)
    S = ((dataset.Y == 1) & (u < e)).astype(np.int64)
    return PUDataset(dataset.X, S, dataset.Y, dataset.feature_names)
