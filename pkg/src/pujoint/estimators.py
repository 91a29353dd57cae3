"""Posterior and propensity estimators for positive-unlabelled data.

All methods fit logistic models ``y(x) = sigmoid(beta . x)`` for the class
posterior and (where applicable) ``e(x) = sigmoid(gamma . x)`` for the
labelling propensity, so that ``P(S=1 | x) = e(x) y(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .data import Dataset, PUDataset
from .glm import (
    FitDiagnostics,
    LinearParams,
    SolverConfig,
    ascend_block,
    fit_weighted_logistic,
    linear_predictor,
    log_sigmoid,
    relative_change,
    sigmoid,
    with_intercept,
)

METHODS = ("naive", "oracle", "joint", "tm", "tm_simple", "em", "lbe")

E_FLOOR = 1e-6
S_CLIP = 1e-6


@dataclass(frozen=True)
class TMConfig:
    """Settings shared by the iterative estimators.

    ``alpha_rule`` is ``"fraction_labelled"`` (alpha = share of labelled
    rows) or a fixed float in (0, 1). ``solver`` drives each inner fit,
    ``outer`` the alternating loop.
    """

    alpha_rule: str | float = "fraction_labelled"
    strict_threshold: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)
    outer: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if isinstance(self.alpha_rule, str):
            if self.alpha_rule != "fraction_labelled":
                raise ValueError(f"unknown alpha rule {self.alpha_rule!r}")
        elif not 0 < float(self.alpha_rule) < 1:
            raise ValueError("fixed alpha must lie in (0, 1)")

    def alpha(self, S: np.ndarray) -> float:
        if self.alpha_rule == "fraction_labelled":
            return float(np.mean(S))
        return float(self.alpha_rule)

    def to_dict(self) -> dict:
        return {
            "alpha_rule": self.alpha_rule,
            "strict_threshold": self.strict_threshold,
            "solver": self.solver.__dict__.copy(),
            "outer": self.outer.__dict__.copy(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TMConfig":
        return cls(
            alpha_rule=d.get("alpha_rule", "fraction_labelled"),
            strict_threshold=d.get("strict_threshold", True),
            solver=SolverConfig(**d.get("solver", {})),
            outer=SolverConfig(**d.get("outer", {})),
        )


def _as_tm_config(cfg) -> TMConfig:
    if cfg is None:
        return TMConfig()
    if isinstance(cfg, SolverConfig):
        return TMConfig(solver=cfg, outer=cfg)
    return cfg


@dataclass
class FittedPUModel:
    method: str
    posterior: LinearParams
    propensity: LinearParams | None
    diagnostics: FitDiagnostics
    outer_iterations: int = 0
    # naive fit kept by TM SIMPLE, whose propensity is ê_naive(x)
    naive_posterior: LinearParams | None = None
    feature_names: tuple[str, ...] = ()
    # observed-data log-likelihood q_n after each outer iteration
    loglik_trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "posterior": self.posterior.to_dict(),
            "propensity": None if self.propensity is None else self.propensity.to_dict(),
            "naive_posterior": None if self.naive_posterior is None else self.naive_posterior.to_dict(),
            "diagnostics": self.diagnostics.to_dict(),
            "outer_iterations": self.outer_iterations,
            "feature_names": list(self.feature_names),
            "loglik_trace": list(self.loglik_trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedPUModel":
        opt = lambda v: None if v is None else LinearParams.from_dict(v)  # noqa: E731
        return cls(
            method=d["method"],
            posterior=LinearParams.from_dict(d["posterior"]),
            propensity=opt(d.get("propensity")),
            diagnostics=FitDiagnostics.from_dict(d["diagnostics"]),
            outer_iterations=d.get("outer_iterations", 0),
            naive_posterior=opt(d.get("naive_posterior")),
            feature_names=tuple(d.get("feature_names", ())),
            loglik_trace=list(d.get("loglik_trace", [])),
        )


# ---------------------------------------------------------------------------
# Probability algebra
# ---------------------------------------------------------------------------


def naive_propensity(s_hat):
    """Midpoint of the interval ``[s_hat, 1]`` that must contain e(x)."""
    return 0.5 * (np.asarray(s_hat, dtype=float) + 1.0)


def odds_ratio(e_hat, s_hat):
    """``[(1-e)/e] / [(1-s)/s]``, i.e. P(Y=1 | S=0, x) when s = e*y.

    Inputs are clipped (e to [1e-6, 1], s to [1e-6, 1-1e-6]) and the result
    to [0, 1], since e and s estimated by separate models need not satisfy
    ``s <= e``.
    """
    e = np.clip(np.asarray(e_hat, dtype=float), E_FLOOR, 1.0)
    s = np.clip(np.asarray(s_hat, dtype=float), S_CLIP, 1.0 - S_CLIP)
    ratio = (1.0 - e) * s / (e * (1.0 - s))
    out = np.clip(ratio, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def lemma2_weights(S, or_values):
    """Weights ``(w1, w0)`` turning the S-likelihood into the Y-likelihood.

    Labelled rows get ``(1, 0)``; unlabelled rows ``(OR, 1 - OR)``.
    """
    S = np.asarray(S)
    orv = np.asarray(or_values, dtype=float)
    w1 = np.where(S == 1, 1.0, orv)
    w0 = np.where(S == 1, 0.0, 1.0 - orv)
    if w1.ndim == 0:
        return float(w1), float(w0)
    return w1, w0


def posterior_objective(beta: LinearParams, X, S, or_values) -> float:
    """Weighted posterior log-likelihood ``W_n`` (mean over rows)."""
    w1, w0 = lemma2_weights(S, or_values)
    eta = linear_predictor(beta, np.asarray(X, dtype=float))
    return float(np.mean(w1 * log_sigmoid(eta) + w0 * log_sigmoid(-eta)))


def propensity_risk(gamma: LinearParams, X, S, rows) -> float:
    """Average of ``K(S, x, gamma)`` over the given rows.

    With the estimated positive stratum this is ``R̂_n``; with the true
    positives it is ``R_n``.
    """
    rows = np.asarray(rows)
    eta = linear_predictor(gamma, np.asarray(X, dtype=float)[rows])
    s = np.asarray(S, dtype=float)[rows]
    return float(np.mean(s * log_sigmoid(eta) + (1.0 - s) * log_sigmoid(-eta)))


def _log_one_minus_product(eta_a, eta_b):
    # log(1 - sigma(a) sigma(b)) = log(sigma(-a) + sigma(a) sigma(-b))
    return np.logaddexp(log_sigmoid(-eta_a), log_sigmoid(eta_a) + log_sigmoid(-eta_b))


def q_n(beta: LinearParams, gamma: LinearParams, pu: PUDataset) -> float:
    """Mean observed-data log-likelihood of the product model."""
    eb = linear_predictor(beta, pu.X)
    eg = linear_predictor(gamma, pu.X)
    S = pu.S
    log_s = log_sigmoid(eb) + log_sigmoid(eg)
    log_1ms = _log_one_minus_product(eb, eg)
    return float(np.mean(np.where(S == 1, log_s, log_1ms)))


def unlabelled_posterior(eta_beta, eta_gamma) -> np.ndarray:
    """``y (1 - e) / (1 - y e)``: P(Y=1 | S=0, x) under the product model.

    Equals ``odds_ratio(e, e*y)`` but is evaluated in log space from the
    two linear predictors, so no clipping is needed when e or y is tiny.
    """
    eb = np.asarray(eta_beta, dtype=float)
    eg = np.asarray(eta_gamma, dtype=float)
    log_post = log_sigmoid(eb) + log_sigmoid(-eg) - _log_one_minus_product(eb, eg)
    return np.exp(np.minimum(log_post, 0.0))


def lbe_e_step(beta: LinearParams, gamma: LinearParams, pu: PUDataset) -> np.ndarray:
    """Posterior P(Y=1 | S, x) under the current product model."""
    post = unlabelled_posterior(linear_predictor(beta, pu.X), linear_predictor(gamma, pu.X))
    return np.where(pu.S == 1, 1.0, post)


def label_quantile_threshold(y_hat_labelled, alpha: float) -> float:
    """Lower empirical alpha-quantile: the ``ceil(alpha*m)``-th order statistic."""
    v = np.sort(np.asarray(y_hat_labelled, dtype=float))
    m = v.shape[0]
    if m == 0:
        raise ValueError("no labelled rows to take a quantile of")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    idx = min(max(math.ceil(alpha * m), 1), m)
    return float(v[idx - 1])


def p_hat_set(S, y_hat, t: float, strict: bool = True) -> np.ndarray:
    """Indices of rows that are labelled or whose posterior exceeds ``t``."""
    S = np.asarray(S)
    y_hat = np.asarray(y_hat, dtype=float)
    if S.shape != y_hat.shape:
        raise ValueError("S and y_hat must have equal lengths")
    above = y_hat > t if strict else y_hat >= t
    return np.flatnonzero((S == 1) | above)


def tm_propensity_weights(S, y_hat, t: float, strict: bool = True) -> np.ndarray:
    """Row weights of the TM propensity fit: membership in the P̂ set."""
    w = np.zeros(np.asarray(S).shape[0])
    w[p_hat_set(S, y_hat, t, strict)] = 1.0
    return w


def em_propensity_weights(S, eta_beta, eta_gamma) -> np.ndarray:
    """Row weights of the EM propensity fit: estimated P(Y=1 | S, x)."""
    return np.where(np.asarray(S) == 1, 1.0, unlabelled_posterior(eta_beta, eta_gamma))


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict_posterior(model: FittedPUModel, X) -> np.ndarray:
    return sigmoid(linear_predictor(model.posterior, np.asarray(X, dtype=float)))


def predict_propensity(model: FittedPUModel, X) -> np.ndarray | None:
    X = np.asarray(X, dtype=float)
    if model.propensity is not None:
        return sigmoid(linear_predictor(model.propensity, X))
    if model.naive_posterior is not None:
        return naive_propensity(sigmoid(linear_predictor(model.naive_posterior, X)))
    return None


def classify(probs) -> np.ndarray:
    """Hard labels with the strict rule ``prob > 0.5``."""
    return (np.asarray(probs, dtype=float) > 0.5).astype(np.int64)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


def _check_pu(pu: PUDataset, need_unlabelled: bool = True) -> None:
    n_lab = int(pu.S.sum())
    if n_lab == 0:
        raise ValueError("PU data has no labelled rows")
    if need_unlabelled and n_lab == pu.n:
        raise ValueError("PU data has no unlabelled rows")


def _single_fit_diag(d: FitDiagnostics) -> FitDiagnostics:
    return FitDiagnostics(d.iterations, d.final_objective, d.converged, list(d.objective_trace))


def fit_naive(pu: PUDataset, cfg=None) -> FittedPUModel:
    """Logistic regression of S on x; estimates s(x), not y(x)."""
    _check_pu(pu)
    tm = _as_tm_config(cfg)
    params, diag = fit_weighted_logistic(pu.X, pu.S, None, None, tm.solver)
    return FittedPUModel("naive", params, None, diag, 0, feature_names=pu.feature_names)


def fit_oracle(dataset: Dataset, cfg=None) -> FittedPUModel:
    """Logistic regression on the true labels (reference method)."""
    if dataset.Y.min() == dataset.Y.max():
        raise ValueError("oracle fit needs both classes in Y")
    tm = _as_tm_config(cfg)
    params, diag = fit_weighted_logistic(dataset.X, dataset.Y, None, None, tm.solver)
    return FittedPUModel("oracle", params, None, diag, 0, feature_names=dataset.feature_names)


def _naive_start(pu: PUDataset, tm: TMConfig):
    naive = fit_naive(pu, tm)
    eta = linear_predictor(naive.posterior, pu.X)
    s_hat = sigmoid(eta)
    return naive, s_hat, naive_propensity(s_hat)


def fit_tm_simple(pu: PUDataset, cfg=None) -> FittedPUModel:
    """Single weighted posterior fit with the naive propensity plugged in."""
    _check_pu(pu)
    tm = _as_tm_config(cfg)
    naive, s_hat, e_hat = _naive_start(pu, tm)
    orv = odds_ratio(e_hat, s_hat)
    target = np.where(pu.S == 1, 1.0, orv)
    beta, diag = fit_weighted_logistic(pu.X, target, None, naive.posterior, tm.solver)
    w = posterior_objective(beta, pu.X, pu.S, orv)
    out_diag = FitDiagnostics(diag.iterations, w, diag.converged, [w])
    return FittedPUModel(
        "tm_simple", beta, None, out_diag, 1, naive_posterior=naive.posterior, feature_names=pu.feature_names
    )


def _alternate_posterior_propensity(pu: PUDataset, tm: TMConfig, method: str) -> FittedPUModel:
    # shared loop of TM and EM; they differ only in how Model 2 weights rows
    naive, s_hat, e_hat = _naive_start(pu, tm)
    S = pu.S
    alpha = tm.alpha(S)
    beta = naive.posterior
    gamma: LinearParams | None = None
    # first pass: e and s come from separate naive fits, so clip
    orv = odds_ratio(e_hat, s_hat)
    trace: list[float] = []
    loglik: list[float] = []
    converged = False
    it = 0
    for it in range(1, tm.outer.max_iter + 1):
        target = np.where(S == 1, 1.0, orv)
        beta, _ = fit_weighted_logistic(pu.X, target, None, beta, tm.solver)
        w_obj = posterior_objective(beta, pu.X, S, orv)
        eta_b = linear_predictor(beta, pu.X)
        y_hat = sigmoid(eta_b)

        if method == "tm":
            t = label_quantile_threshold(y_hat[S == 1], alpha)
            weights = tm_propensity_weights(S, y_hat, t, tm.strict_threshold)
        elif gamma is None:
            weights = np.where(S == 1, 1.0, odds_ratio(e_hat, e_hat * y_hat))
        else:
            weights = em_propensity_weights(S, eta_b, linear_predictor(gamma, pu.X))
        gamma, _ = fit_weighted_logistic(pu.X, S, weights, gamma, tm.solver)
        # s = e * y from here on, so OR is evaluated exactly
        orv = unlabelled_posterior(eta_b, linear_predictor(gamma, pu.X))

        trace.append(w_obj)
        loglik.append(q_n(beta, gamma, pu))
        if len(trace) > 1 and relative_change(trace[-1], trace[-2]) < tm.outer.rel_tol:
            converged = True
            break
    diag = FitDiagnostics(it, trace[-1], converged, trace)
    return FittedPUModel(method, beta, gamma, diag, it, feature_names=pu.feature_names, loglik_trace=loglik)


def fit_tm(pu: PUDataset, cfg: TMConfig | None = None) -> FittedPUModel:
    """Two-models method: alternate a weighted posterior fit and a
    propensity fit restricted to the estimated positive stratum."""
    _check_pu(pu)
    return _alternate_posterior_propensity(pu, _as_tm_config(cfg), "tm")


def fit_em(pu: PUDataset, cfg=None) -> FittedPUModel:
    """As :func:`fit_tm`, but the propensity fit weights every row by its
    estimated P(Y=1 | S, x) instead of stratum membership."""
    _check_pu(pu)
    return _alternate_posterior_propensity(pu, _as_tm_config(cfg), "em")


# -- product-model blocks ----------------------------------------------------


def _product_block(Z: np.ndarray, S: np.ndarray, log_c: np.ndarray, log_1mc: np.ndarray):
    """Objective, gradient and Hessian of the product log-likelihood in one
    factor's parameters, the other factor being fixed at ``c`` per row."""
    lab = S == 1

    def parts(theta):
        eta = Z @ theta
        ls, lms = log_sigmoid(eta), log_sigmoid(-eta)
        log_1mcs = np.logaddexp(log_1mc, log_c + lms)
        return eta, ls, lms, log_1mcs

    def objective(params: LinearParams) -> float:
        _, ls, _, log_1mcs = parts(params.to_vector())
        return float(np.sum(np.where(lab, ls + log_c, log_1mcs)))

    def gradient(params: LinearParams) -> np.ndarray:
        _, ls, lms, log_1mcs = parts(params.to_vector())
        d1 = np.where(lab, np.exp(lms), -np.exp(log_c + ls + lms - log_1mcs))
        return Z.T @ d1

    def hessian(params: LinearParams) -> np.ndarray:
        _, ls, lms, log_1mcs = parts(params.to_vector())
        v = np.exp(ls + lms)
        d2 = np.where(lab, -v, v * (np.exp(log_1mc - 2.0 * log_1mcs) - 1.0))
        return (Z * d2[:, None]).T @ Z

    return objective, gradient, hessian


def fit_joint(pu: PUDataset, cfg=None) -> FittedPUModel:
    """Alternating maximisation of the product-model likelihood ``Q_n``.

    The first posterior block uses the naive propensity values; afterwards
    the blocks alternate between the two logistic factors.
    """
    _check_pu(pu)
    tm = _as_tm_config(cfg)
    naive, _, _ = _naive_start(pu, tm)
    Z = with_intercept(pu.X)
    S = pu.S
    eta_naive = linear_predictor(naive.posterior, pu.X)
    # ê_naive = (1 + s)/2, so 1 - ê_naive = (1 - s)/2
    log_c = np.log(naive_propensity(sigmoid(eta_naive)))
    log_1mc = np.log(0.5) + log_sigmoid(-eta_naive)

    beta = naive.posterior
    gamma = None
    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, tm.outer.max_iter + 1):
        f, g, h = _product_block(Z, S, log_c, log_1mc)
        beta, _ = ascend_block(f, g, beta, tm.solver, hessian=h)
        eb = linear_predictor(beta, pu.X)
        f, g, h = _product_block(Z, S, log_sigmoid(eb), log_sigmoid(-eb))
        if gamma is None:
            gamma = LinearParams(float(np.log(np.exp(log_c).mean() / max(1 - np.exp(log_c).mean(), 1e-12))), np.zeros(pu.p))
        gamma, _ = ascend_block(f, g, gamma, tm.solver, hessian=h)
        eg = linear_predictor(gamma, pu.X)
        log_c, log_1mc = log_sigmoid(eg), log_sigmoid(-eg)

        trace.append(q_n(beta, gamma, pu))
        if len(trace) > 1 and relative_change(trace[-1], trace[-2]) < tm.outer.rel_tol:
            converged = True
            break
    diag = FitDiagnostics(it, trace[-1], converged, trace)
    return FittedPUModel("joint", beta, gamma, diag, it, feature_names=pu.feature_names, loglik_trace=list(trace))


def lbe_step(beta: LinearParams, gamma: LinearParams, pu: PUDataset, solver: SolverConfig | None = None):
    """One EM iteration: E-step at ``(beta, gamma)``, then the exact M-step.

    Returns the new parameters and the posterior used by the M-step.
    """
    post = lbe_e_step(beta, gamma, pu)
    new_beta, _ = fit_weighted_logistic(pu.X, post, None, beta, solver)
    new_gamma = gamma
    if np.any(post > 0):
        new_gamma, _ = fit_weighted_logistic(pu.X, pu.S, post, gamma, solver)
    return new_beta, new_gamma, post


def lbe_init(pu: PUDataset, tm: TMConfig) -> tuple[LinearParams, LinearParams]:
    """NAIVE posterior and a flat propensity matching the mean of ê_naive."""
    naive, _, e_hat = _naive_start(pu, tm)
    m = float(np.mean(e_hat))
    return naive.posterior, LinearParams(math.log(m / (1.0 - m)) if m < 1 else 0.0, np.zeros(pu.p))


def fit_lbe(pu: PUDataset, cfg=None) -> FittedPUModel:
    """EM on the product model with an exact two-fit M-step.

    The tracked objective is the observed-data log-likelihood (expected
    complete-data log-likelihood plus posterior entropy), which EM cannot
    decrease.
    """
    _check_pu(pu)
    tm = _as_tm_config(cfg)
    beta, gamma = lbe_init(pu, tm)
    trace: list[float] = [q_n(beta, gamma, pu)]
    converged = False
    it = 0
    for it in range(1, tm.outer.max_iter + 1):
        beta, gamma, _ = lbe_step(beta, gamma, pu, tm.solver)
        trace.append(q_n(beta, gamma, pu))
        if relative_change(trace[-1], trace[-2]) < tm.outer.rel_tol:
            converged = True
            break
    diag = FitDiagnostics(it, trace[-1], converged, trace)
    return FittedPUModel("lbe", beta, gamma, diag, it, feature_names=pu.feature_names, loglik_trace=list(trace))


def expected_complete_loglik(beta: LinearParams, gamma: LinearParams, pu: PUDataset, post) -> float:
    """LBE criterion: sum of E[log P(Y|x,beta) P(S|Y,x,gamma)] under ``post``."""
    eb = linear_predictor(beta, pu.X)
    eg = linear_predictor(gamma, pu.X)
    S = pu.S
    post = np.asarray(post, dtype=float)
    y_part = post * log_sigmoid(eb) + (1 - post) * log_sigmoid(-eb)
    s_part = post * np.where(S == 1, log_sigmoid(eg), log_sigmoid(-eg))
    return float(np.sum(y_part + s_part))


FITTERS: dict[str, Callable] = {
    "naive": fit_naive,
    "joint": fit_joint,
    "tm": fit_tm,
    "tm_simple": fit_tm_simple,
    "em": fit_em,
    "lbe": fit_lbe,
}


def fit_method(method: str, pu: PUDataset, cfg=None) -> FittedPUModel:
    """Dispatch by name; ``oracle`` requires ``pu.Y_hidden``."""
    if method == "oracle":
        if pu.Y_hidden is None:
            raise ValueError("oracle needs the true labels")
        return fit_oracle(Dataset(pu.X, pu.Y_hidden, pu.feature_names), cfg)
    try:
        fitter = FITTERS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}") from None
    return fitter(pu, cfg)
