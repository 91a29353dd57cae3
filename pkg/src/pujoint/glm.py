"""Logistic-model numerical kernel.

Stable logistic link helpers, the weighted logistic log-likelihood with its
Newton/IRLS maximiser, and a generic monotone-ascent routine used for the
non-concave blocks of the product model.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, special


@dataclass(frozen=True)
class LinearParams:
    """Intercept plus coefficient vector of a linear predictor."""

    intercept: float
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.atleast_1d(np.asarray(self.coefficients, dtype=float))
        if coef.ndim != 1:
            raise ValueError("coefficients must be a 1-D vector")
        if not (np.isfinite(self.intercept) and np.all(np.isfinite(coef))):
            raise ValueError("LinearParams entries must be finite")
        object.__setattr__(self, "intercept", float(self.intercept))
        object.__setattr__(self, "coefficients", coef)

    @property
    def dim(self) -> int:
        return self.coefficients.shape[0]

    @classmethod
    def zeros(cls, p: int) -> "LinearParams":
        return cls(0.0, np.zeros(p))

    @classmethod
    def from_vector(cls, theta: np.ndarray) -> "LinearParams":
        theta = np.asarray(theta, dtype=float)
        return cls(theta[0], theta[1:].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.intercept], self.coefficients])

    def l1_norm(self) -> float:
        return float(abs(self.intercept) + np.abs(self.coefficients).sum())

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "coefficients": self.coefficients.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearParams":
        return cls(d["intercept"], np.asarray(d["coefficients"], dtype=float))


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-6
    max_iter: int = 1000
    ridge: float = 1e-8
    max_backtracks: int = 50

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass
class FitDiagnostics:
    iterations: int
    final_objective: float
    converged: bool
    objective_trace: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_objective": self.final_objective,
            "converged": self.converged,
            "objective_trace": list(self.objective_trace),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitDiagnostics":
        return cls(d["iterations"], d["final_objective"], d["converged"], list(d["objective_trace"]))


def sigmoid(t):
    """Logistic function ``1 / (1 + exp(-t))``, overflow-free."""
    return special.expit(t)


def log_sigmoid(t):
    """``log(sigmoid(t))`` computed without forming the probability."""
    return -np.logaddexp(0.0, -np.asarray(t, dtype=float))


def linear_predictor(params: LinearParams, x) -> np.ndarray | float:
    """``intercept + x @ coefficients`` for a row or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.dim:
        raise ValueError(f"feature dimension {x.shape[-1]} does not match params dimension {params.dim}")
    return params.intercept + x @ params.coefficients


def with_intercept(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.hstack([np.ones((X.shape[0], 1)), X])


def relative_change(new: float, old: float, offset: float = 0.0) -> float:
    return abs(new - old) / (abs(old) + offset) if (abs(old) + offset) > 0 else abs(new - old)


# ---------------------------------------------------------------------------
# Weighted logistic likelihood
# ---------------------------------------------------------------------------


def weighted_loglik(theta: np.ndarray, Z: np.ndarray, target: np.ndarray, weights: np.ndarray) -> float:
    """Sum of ``w * (t log sigma(eta) + (1 - t) log(1 - sigma(eta)))``.

    ``Z`` already carries the intercept column and ``theta`` is the stacked
    parameter vector.
    """
    eta = Z @ theta
    return float(np.sum(weights * (target * log_sigmoid(eta) + (1.0 - target) * log_sigmoid(-eta))))


def weighted_loglik_grad(theta: np.ndarray, Z: np.ndarray, target: np.ndarray, weights: np.ndarray) -> np.ndarray:
    mu = sigmoid(Z @ theta)
    return Z.T @ (weights * (target - mu))


def _newton_direction(neg_hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    try:
        c, low = linalg.cho_factor(neg_hess, check_finite=False)
        return linalg.cho_solve((c, low), grad, check_finite=False)
    except linalg.LinAlgError:
        return np.linalg.lstsq(neg_hess, grad, rcond=None)[0]


# Linear predictors beyond this magnitude put fitted probabilities within
# 3e-7 of 0 or 1; such a fit is reported as not converged (separation).
_SEPARATION_ETA = 15.0


def fit_weighted_logistic(
    X,
    target,
    case_weights=None,
    init: LinearParams | None = None,
    cfg: SolverConfig | None = None,
) -> tuple[LinearParams, FitDiagnostics]:
    """Maximise a weighted logistic log-likelihood by damped Newton (IRLS).

    Parameters
    ----------
    X : (n, p) array
        Features, without an intercept column.
    target : (n,) array
        Targets in [0, 1]. Fractional values are allowed.
    case_weights : (n,) array, optional
        Nonnegative row weights; defaults to ones.
    init : LinearParams, optional
        Starting point; zero vector when omitted.
    cfg : SolverConfig, optional

    Returns
    -------
    params, diagnostics
        ``diagnostics.objective_trace`` holds the log-likelihood (sum scale)
        after each accepted step and is nondecreasing.

    Notes
    -----
    Iteration stops when ``|l_k - l_{k-1}| / (|l_k| + 0.1) < rel_tol``, the
    usual GLM deviance criterion, which also terminates separated problems
    after a bounded number of steps. A ridge term is added to the negative
    Hessian only when solving for the Newton direction.
    """
    cfg = cfg or SolverConfig()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    target = np.asarray(target, dtype=float)
    weights = np.ones(n) if case_weights is None else np.asarray(case_weights, dtype=float)
    if target.shape != (n,) or weights.shape != (n,):
        raise ValueError("target and case_weights must have one entry per row of X")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValueError("case_weights must be nonnegative with at least one positive entry")
    if np.any((target < 0) | (target > 1)):
        raise ValueError("targets must lie in [0, 1]")
    if init is not None and init.dim != p:
        raise ValueError(f"init has dimension {init.dim}, data has {p} features")

    keep = weights > 0
    Z = with_intercept(X[keep])
    t = target[keep]
    w = weights[keep]
    theta = np.zeros(p + 1) if init is None else init.to_vector()
    ridge = cfg.ridge * np.eye(p + 1)

    obj = weighted_loglik(theta, Z, t, w)
    if not np.isfinite(obj):
        raise FloatingPointError("weighted log-likelihood is not finite at the initial point")
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        mu = sigmoid(Z @ theta)
        grad = Z.T @ (w * (t - mu))
        neg_hess = (Z * (w * mu * (1.0 - mu))[:, None]).T @ Z + ridge
        step = _newton_direction(neg_hess, grad)

        scale = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = theta + scale * step
            cand_obj = weighted_loglik(cand, Z, t, w)
            if np.isfinite(cand_obj) and cand_obj >= obj:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            # no ascent available in floating point: at a maximiser
            converged = True
            it -= 1
            break
        change = abs(cand_obj - obj) / (abs(cand_obj) + 0.1)
        theta, obj = cand, cand_obj
        trace.append(obj)
        if change < cfg.rel_tol:
            converged = True
            break

    if not np.isfinite(obj):
        raise FloatingPointError("weighted log-likelihood diverged")
    if converged and np.max(np.abs(Z @ theta)) > _SEPARATION_ETA:
        converged = False
    diag = FitDiagnostics(iterations=it, final_objective=obj, converged=converged, objective_trace=trace)
    return LinearParams.from_vector(theta), diag


# ---------------------------------------------------------------------------
# Generic monotone ascent
# ---------------------------------------------------------------------------


def _modified_newton_direction(hess: np.ndarray, grad: np.ndarray, ridge: float) -> np.ndarray:
    # flip negative curvature so the direction is always an ascent direction
    evals, evecs = np.linalg.eigh(-hess)
    evals = np.maximum(np.abs(evals), max(ridge, 1e-12))
    return evecs @ ((evecs.T @ grad) / evals)


def ascend_block(
    objective: Callable[[LinearParams], float],
    gradient: Callable[[LinearParams], np.ndarray],
    init: LinearParams,
    cfg: SolverConfig | None = None,
    hessian: Callable[[LinearParams], np.ndarray] | None = None,
) -> tuple[LinearParams, FitDiagnostics]:
    """Monotone ascent on a smooth, possibly non-concave objective.

    With ``hessian`` a modified Newton step is taken (eigenvalues of the
    negative Hessian replaced by their absolute values); without it a BFGS
    inverse-Hessian approximation is used. Either way every accepted step
    is backtracked until the objective does not decrease, so the returned
    trace is nondecreasing. Gradients and Hessians are with respect to the
    stacked vector ``(intercept, coefficients)``.
    """
    cfg = cfg or SolverConfig()
    theta = init.to_vector()
    obj = float(objective(init))
    if not np.isfinite(obj):
        raise FloatingPointError("objective is not finite at the initial point")
    trace = [obj]
    k = theta.shape[0]
    inv_h = np.eye(k)
    grad = np.asarray(gradient(init), dtype=float)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        if not np.any(grad):
            converged = True
            it -= 1
            break
        if hessian is not None:
            step = _modified_newton_direction(np.asarray(hessian(LinearParams.from_vector(theta))), grad, cfg.ridge)
        else:
            step = inv_h @ grad
            if step @ grad <= 0:
                inv_h = np.eye(k)
                step = grad.copy()

        scale = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks):
            cand = theta + scale * step
            cand_obj = float(objective(LinearParams.from_vector(cand)))
            if np.isfinite(cand_obj) and cand_obj >= obj:
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            converged = True
            it -= 1
            break
        new_grad = np.asarray(gradient(LinearParams.from_vector(cand)), dtype=float)
        if hessian is None:
            s = cand - theta
            y = grad - new_grad  # gradient of the negated objective changes by -y
            sy = s @ y
            if sy > 1e-12:
                rho = 1.0 / sy
                I = np.eye(k)
                inv_h = (I - rho * np.outer(s, y)) @ inv_h @ (I - rho * np.outer(y, s)) + rho * np.outer(s, s)
        change = abs(cand_obj - obj) / (abs(cand_obj) + 0.1)
        theta, obj, grad = cand, cand_obj, new_grad
        trace.append(obj)
        if change < cfg.rel_tol and np.linalg.norm(step * scale) < np.sqrt(cfg.rel_tol) * (1 + np.linalg.norm(theta)):
            converged = True
            break
    diag = FitDiagnostics(iterations=it, final_objective=obj, converged=converged, objective_trace=trace)
    return LinearParams.from_vector(theta), diag
