"""Poisson GLM, OLS, ridge and lasso fitted against a time trend."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import FitError

MODEL_KINDS = ("poisson", "ols", "ridge", "lasso")
DEFAULT_LAMBDA = 0.1
NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 100
MAX_HALVINGS = 50
LASSO_TOL = 1e-8
LASSO_MAX_SWEEPS = 10_000
COND_LIMIT = 1e12


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < X.shape[1]:
            raise ValueError(f"need at least as many rows as columns, got {X.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("design matrix contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


def trend_features(index, n_train: int) -> np.ndarray:
    """Rows ``(1, k / (n_train - 1))``; training indices land in [0, 1]."""
    index = np.asarray(index, dtype=float)
    scale = max(n_train - 1, 1)
    return np.column_stack([np.ones_like(index), index / scale])


def design_for_series(values) -> DesignMatrix:
    values = np.asarray(values, dtype=float)
    return DesignMatrix(trend_features(np.arange(len(values)), len(values)), values)


@dataclass
class FitDiagnostics:
    iterations: int = 0
    final_objective: float = 0.0
    converged: bool = True
    gradient_norm: float = 0.0
    objective_trace: list = field(default_factory=list, repr=False)


@dataclass
class ModelCoefficients:
    theta: np.ndarray
    model_kind: str
    lam: Optional[float] = None
    diagnostics: FitDiagnostics = field(default_factory=FitDiagnostics)

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}")
        self.theta = np.asarray(self.theta, dtype=float)
        if not np.all(np.isfinite(self.theta)):
            raise FitError(f"{self.model_kind} fit produced non-finite coefficients")

    def to_dict(self) -> dict:
        diag = asdict(self.diagnostics)
        diag.pop("objective_trace")
        return {
            "model_kind": self.model_kind,
            "lambda": self.lam,
            "theta": self.theta.tolist(),
            "diagnostics": diag,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc) -> "ModelCoefficients":
        return cls(
            theta=np.asarray(doc["theta"], dtype=float),
            model_kind=doc["model_kind"],
            lam=doc.get("lambda"),
            diagnostics=FitDiagnostics(**doc.get("diagnostics", {})),
        )


def _rss(d: DesignMatrix, theta) -> float:
    r = d.y - d.X @ theta
    return float(r @ r)


def fit_ols(d: DesignMatrix) -> ModelCoefficients:
    """Least squares via the normal equations.

    Raises:
        FitError: if X^T X is singular or badly conditioned; ridge is the fix.
    """
    xtx = d.X.T @ d.X
    if not np.isfinite(np.linalg.cond(xtx)) or np.linalg.cond(xtx) > COND_LIMIT:
        raise FitError("X^T X is singular or ill-conditioned; use fit_ridge instead")
    theta = np.linalg.solve(xtx, d.X.T @ d.y)
    return ModelCoefficients(theta, "ols", None, FitDiagnostics(final_objective=_rss(d, theta)))


def fit_ridge(d: DesignMatrix, lam: float = DEFAULT_LAMBDA, penalize_intercept: bool = True) -> ModelCoefficients:
    """Solve ``(X^T X + lam * I) theta = X^T y``.

    With ``penalize_intercept=False`` the first diagonal entry of the penalty
    is dropped.
    """
    if not lam > 0:
        raise ValueError(f"ridge lambda must be > 0 (use fit_ols for 0), got {lam}")
    penalty = np.eye(d.p) * lam
    if not penalize_intercept:
        penalty[0, 0] = 0.0
    theta = np.linalg.solve(d.X.T @ d.X + penalty, d.X.T @ d.y)
    reg = theta if penalize_intercept else theta[1:]
    objective = _rss(d, theta) + lam * float(reg @ reg)
    return ModelCoefficients(theta, "ridge", lam, FitDiagnostics(final_objective=objective))


def soft_threshold(z, gamma):
    """``sign(z) * max(|z| - gamma, 0)``."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0)


def lasso_objective(d: DesignMatrix, theta, lam: float) -> float:
    """Residual sum of squares plus ``lam`` times the L1 norm of the non-intercept terms."""
    return _rss(d, theta) + lam * float(np.sum(np.abs(theta[1:])))


def lasso_lambda_max(d: DesignMatrix) -> float:
    """Smallest ``lam`` at which every penalized coefficient is zero."""
    yc = d.y - d.y.mean()
    return 2.0 * float(np.max(np.abs(d.X[:, 1:].T @ yc))) if d.p > 1 else 0.0


def fit_lasso(d: DesignMatrix, lam: float = DEFAULT_LAMBDA, tol: float = LASSO_TOL,
              max_sweeps: int = LASSO_MAX_SWEEPS) -> ModelCoefficients:
    """Cyclic coordinate descent on the lasso objective; intercept unpenalized.

    Column 0 must be the all-ones intercept. The other columns are centred
    and scaled to unit variance internally with the penalty rescaled to
    match, so the returned coefficients solve the problem on the original X.
    A run that hits ``max_sweeps`` is returned with ``converged=False``.
    """
    if not lam > 0:
        raise ValueError(f"lasso lambda must be > 0, got {lam}")
    X, y = d.X, d.y
    n = d.n
    ybar = y.mean()
    feats = X[:, 1:]
    means = feats.mean(axis=0)
    scales = feats.std(axis=0)
    active = scales > 0
    safe = np.where(active, scales, 1.0)
    Z = (feats - means) / safe
    thresh = lam / (2.0 * safe)

    b = np.zeros(feats.shape[1])
    r = y - ybar
    trace = [lasso_objective(d, _lasso_theta(b, safe, means, ybar), lam)]
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        biggest = 0.0
        for j in np.flatnonzero(active):
            old = b[j]
            rho = Z[:, j] @ r + n * old
            # at lam == lambda_max the exact answer is 0; do not let rounding undo it
            if abs(rho) <= thresh[j] * (1.0 + 1e-12):
                new = 0.0
            else:
                new = float(soft_threshold(rho, thresh[j])) / n
            if new != old:
                r -= Z[:, j] * (new - old)
                b[j] = new
                biggest = max(biggest, abs(new - old) / safe[j])
        trace.append(lasso_objective(d, _lasso_theta(b, safe, means, ybar), lam))
        if biggest < tol:
            converged = True
            break
    theta = _lasso_theta(b, safe, means, ybar)
    diag = FitDiagnostics(iterations=sweep, final_objective=trace[-1], converged=converged,
                          objective_trace=trace)
    return ModelCoefficients(theta, "lasso", lam, diag)


def _lasso_theta(b, scales, means, ybar):
    slopes = b / scales
    return np.concatenate([[ybar - float(means @ slopes)], slopes])


def poisson_loglik(d: DesignMatrix, theta) -> float:
    """Log-likelihood without the constant ``-sum(log y!)``."""
    eta = d.X @ theta
    return float(d.y @ eta - np.exp(eta).sum())


def fit_poisson(d: DesignMatrix, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER,
                pseudo_count: float = 0.0) -> ModelCoefficients:
    """Maximize the Poisson log-likelihood by Newton-Raphson with step halving.

    Raises:
        FitError: if every count is zero (the intercept would run off to
            minus infinity; pass ``pseudo_count``), or if 50 halvings cannot
            find an uphill step (rescale the features).
    """
    y = d.y + pseudo_count
    if np.any(y < 0):
        raise ValueError("poisson counts must be non-negative")
    if pseudo_count == 0 and np.any(y != np.round(y)):
        raise ValueError("poisson counts must be integers")
    if not np.any(y > 0):
        raise FitError("all counts are zero; the intercept diverges. Set pseudo_count > 0.")
    d = DesignMatrix(d.X, y)
    X = d.X
    theta = np.zeros(d.p)
    theta[0] = math.log(y.mean())
    ll = poisson_loglik(d, theta)
    trace = [-ll]
    gnorm = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        mu = np.exp(X @ theta)
        grad = X.T @ (y - mu)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            it -= 1
            break
        hess = X.T @ (X * mu[:, None])
        step = np.linalg.solve(hess, grad)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = theta + t * step
            ll_new = poisson_loglik(d, cand)
            # allow rounding-level slack so near-optimal steps are not halved away
            if ll_new >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            t *= 0.5
        else:
            raise FitError("Newton step halving failed to increase the likelihood; rescale the features")
        theta, ll = cand, ll_new
        trace.append(-ll)
    mu = np.exp(X @ theta)
    gnorm = float(np.linalg.norm(X.T @ (y - mu)))
    diag = FitDiagnostics(iterations=it, final_objective=-ll, converged=gnorm < tol,
                          gradient_norm=gnorm, objective_trace=trace)
    return ModelCoefficients(theta, "poisson", None, diag)


def predict(m: ModelCoefficients, x_row) -> float:
    """exp(theta . x) for poisson, theta . x for the rest."""
    x_row = np.asarray(x_row, dtype=float)
    if x_row.shape != m.theta.shape:
        raise ValueError(f"expected {m.theta.shape[0]} features, got {x_row.shape}")
    eta = float(m.theta @ x_row)
    return math.exp(eta) if m.model_kind == "poisson" else eta


def fit(kind: str, d: DesignMatrix, lam: float = DEFAULT_LAMBDA) -> ModelCoefficients:
    if kind == "poisson":
        return fit_poisson(d)
    if kind == "ols":
        return fit_ols(d)
    if kind == "ridge":
        return fit_ridge(d, lam)
    if kind == "lasso":
        return fit_lasso(d, lam)
    raise ValueError(f"unknown linear model {kind!r}; expected one of {MODEL_KINDS}")


def forecast_trend(m: ModelCoefficients, n_train: int, horizon: int) -> list:
    """Predict the ``horizon`` buckets following a training series of length ``n_train``."""
    rows = trend_features(np.arange(n_train, n_train + horizon), n_train)
    return [predict(m, row) for row in rows]
