"""Least-squares and logistic fitting plus sequential outcome chains.

The outcome chain for one arm is the ordered set of linear models
Z1 | X, Z2 | X,Z1, ..., Y | X,Z. Composing their conditional means yields
the expected final outcome given baseline covariates alone; with linear
mean models that composition is exact, no integration needed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import TrialDataset


class FitError(RuntimeError):
    """Raised when a regression cannot be fitted as requested."""


class RankDeficiencyError(FitError):
    def __init__(self, column: str):
        super().__init__(f"design is rank deficient at column {column!r}")
        self.column = column


def _with_intercept(design: np.ndarray) -> np.ndarray:
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design.reshape(-1, 1)
    return np.column_stack([np.ones(design.shape[0]), design])


def _offending_column(X: np.ndarray, names) -> str:
    # first column that does not increase the rank of its predecessors
    for j in range(1, X.shape[1]):
        if np.linalg.matrix_rank(X[:, : j + 1]) <= np.linalg.matrix_rank(X[:, :j]):
            return names[j - 1] if j - 1 < len(names) else f"column {j}"
    return "intercept"


@dataclass(frozen=True)
class LinearModel:
    """OLS fit: intercept followed by one coefficient per regressor."""

    coefficients: tuple[float, ...]
    residual_sd: float
    names: tuple[str, ...]

    def predict(self, design: np.ndarray) -> np.ndarray:
        return _with_intercept(design) @ np.asarray(self.coefficients)


def fit_ols(design: np.ndarray, response: np.ndarray,
            names: tuple[str, ...] = ()) -> LinearModel:
    """Least squares via orthogonal decomposition (numpy lstsq, SVD based).

    Requires rows >= regressors + 1 and a full-rank design; rank deficiency
    reports the offending column. residual_sd is sqrt(RSS / (n - p)).
    """
    y = np.asarray(response, dtype=float)
    X = _with_intercept(design)
    n, p = X.shape
    if np.isnan(X).any() or np.isnan(y).any():
        raise FitError("design and response must not contain missing values")
    if n < p:
        raise FitError(f"need at least {p} rows for {p - 1} regressors, got {n}")
    if not names:
        names = tuple(f"x{j}" for j in range(p - 1))
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < p:
        raise RankDeficiencyError(_offending_column(X, names))
    resid = y - X @ coef
    df = n - p
    rss = float(resid @ resid)
    residual_sd = float(np.sqrt(rss / df)) if df > 0 else 0.0
    return LinearModel(coefficients=tuple(coef), residual_sd=residual_sd,
                       names=tuple(names))


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class LogisticModel:
    """Bernoulli-likelihood fit by iteratively reweighted least squares."""

    coefficients: tuple[float, ...]
    converged: bool
    iterations: int
    names: tuple[str, ...]

    def predict_proba(self, design: np.ndarray) -> np.ndarray:
        return _sigmoid(_with_intercept(design) @ np.asarray(self.coefficients))


def fit_logistic(design: np.ndarray, response: np.ndarray,
                 names: tuple[str, ...] = (), tol: float = 1e-8,
                 max_iter: int = 100,
                 separation_norm: float = 1e6) -> LogisticModel:
    """IRLS logistic regression.

    Converged when the largest coefficient change drops below ``tol``.
    Quasi-separation is flagged as non-convergence rather than raised,
    detected either by the coefficient norm exceeding ``separation_norm``
    or by the log likelihood stalling while the coefficients keep drifting
    (the likelihood has no interior maximum in that case).
    """
    y = np.asarray(response, dtype=float)
    X = _with_intercept(design)
    n, p = X.shape
    if np.isnan(X).any() or np.isnan(y).any():
        raise FitError("design and response must not contain missing values")
    classes = np.unique(y)
    if not np.isin(classes, (0.0, 1.0)).all():
        raise FitError("response must be coded 0/1")
    if len(classes) < 2:
        raise FitError("response has a single class; probability is degenerate")
    if not names:
        names = tuple(f"x{j}" for j in range(p - 1))

    beta = np.zeros(p)
    converged = False
    it = 0
    prev_ll = -math.inf
    stalled = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        mu = _sigmoid(eta)
        w = np.clip(mu * (1.0 - mu), 1e-10, None)
        # weighted least-squares step: X'WX beta = X'Wz, z the working response
        xw = X * w[:, None]
        rhs = xw.T @ eta + X.T @ (y - mu)
        try:
            beta_new = np.linalg.solve(xw.T @ X, rhs)
        except np.linalg.LinAlgError:
            sw = np.sqrt(w)
            zwork = eta + (y - mu) / w
            beta_new, _, rank, _ = np.linalg.lstsq(X * sw[:, None], zwork * sw,
                                                   rcond=None)
            if rank < p:
                raise RankDeficiencyError(_offending_column(X, names)) from None
        step = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if np.max(np.abs(beta)) > separation_norm:
            return LogisticModel(tuple(beta), converged=False, iterations=it,
                                 names=tuple(names))
        if step < tol:
            converged = True
            break
        eta = X @ beta
        ll = float(np.sum(y * eta - np.logaddexp(0.0, eta)))
        if ll - prev_ll < 1e-10 * (abs(prev_ll) + 1.0):
            stalled += 1
            if stalled >= 3:
                break
        else:
            stalled = 0
        prev_ll = ll
    return LogisticModel(tuple(beta), converged=converged, iterations=it,
                         names=tuple(names))


# ---------------------------------------------------------------------------
# Outcome chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OutcomeChain:
    """Fitted sequential models for one arm.

    ``z_models[k]`` regresses visit k's value on baseline covariates and all
    earlier visits; ``y_model`` regresses the final outcome on covariates and
    every visit, fitted on the arm's adherers only. ``visit_kinds`` records
    whether each visit value is continuous or binary, which controls how
    residual draws are generated downstream.
    """

    arm: int
    z_models: tuple[LinearModel, ...]
    y_model: LinearModel
    visit_kinds: tuple[str, ...]


def fit_outcome_chain(ds: TrialDataset, arm: int) -> OutcomeChain:
    """Fit Z1|X, Z2|X,Z1, ..., Y|X,Z on one arm.

    Each visit model uses the arm's subjects with that visit observed (their
    earlier visits are then observed too, missingness is monotone); the
    outcome model uses the arm's adherers. Raises FitError when any stage
    has fewer rows than regressors + 2.
    """
    X = ds.covariate_matrix()
    Z = ds.z_matrix()
    y = ds.y_vector()
    t = ds.treatment_vector()
    adh = ds.adherence_vector()
    in_arm = t == arm
    x_names = ds.schema.design_names()
    visit_labels = ds.schema.visit_labels

    z_models = []
    for k in range(Z.shape[1]):
        mask = in_arm & ~np.isnan(Z[:, k])
        design = np.column_stack([X[mask], Z[mask][:, :k]])
        p = design.shape[1]
        if mask.sum() < p + 2:
            raise FitError(
                f"arm {arm}: {int(mask.sum())} rows observed at visit "
                f"{visit_labels[k]}, need at least {p + 2}")
        names = x_names + visit_labels[:k]
        z_models.append(fit_ols(design, Z[mask, k], names))

    mask = in_arm & adh
    design = np.column_stack([X[mask], Z[mask]])
    p = design.shape[1]
    if mask.sum() < p + 2:
        raise FitError(
            f"arm {arm}: {int(mask.sum())} adherers with outcomes, need at least {p + 2}")
    if np.isnan(design).any() or np.isnan(y[mask]).any():
        raise FitError(f"arm {arm}: adherers must have complete visit and outcome data")
    y_model = fit_ols(design, y[mask], x_names + visit_labels)
    return OutcomeChain(arm=arm, z_models=tuple(z_models), y_model=y_model,
                        visit_kinds=tuple(v.kind for v in ds.schema.visits))


def chained_visit_means(chain: OutcomeChain, X: np.ndarray) -> np.ndarray:
    """Expected visit values given covariates, composed through the chain.

    Returns an (n, n_visits) matrix; column k is the model-implied mean of
    visit k with all earlier visits replaced by their own chained means.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    zhat = np.empty((n, len(chain.z_models)))
    for k, model in enumerate(chain.z_models):
        design = np.column_stack([X, zhat[:, :k]])
        zhat[:, k] = model.predict(design)
    return zhat


def compose_phi(chain: OutcomeChain, x: np.ndarray) -> float | np.ndarray:
    """Expected final outcome given baseline covariates alone.

    Evaluates the outcome model with every visit value replaced by its
    chained prediction; exact for linear mean models. Accepts a single
    covariate vector (returns a float) or a matrix (returns a vector).
    """
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    X = np.atleast_2d(arr)
    zhat = chained_visit_means(chain, X)
    phi = chain.y_model.predict(np.column_stack([X, zhat]))
    return float(phi[0]) if single else phi
