"""Adherence-stratum causal estimators and the comparator battery.

Estimand 3 of the tripartite set is the treatment difference among
adherence-defined principal strata. Two strata are estimated:

* ``s_star_plus``: subjects who would adhere to the experimental arm. The
  observed adherer mean in arm 1 is compared against the mean predicted
  reference-arm outcome for those same subjects (their "virtual twins"),
  predicted from the reference-arm outcome chain.
* ``s_plus_plus``: subjects who would adhere to either arm. Each arm mean is
  a weighted average over the *other* arm's adherers, weighting the
  predicted outcome by the predicted probability of adhering to this arm.

The battery also carries the non-causal naive adherer contrast, a
sequential-regression estimate under missing-at-random for the
no-intercurrent-event hypothetical, and a jump-to-reference multiple
imputation comparator.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .bootstrap import rubin_pool
from .data import TrialDataset
from .regression import (FitError, LinearModel, LogisticModel, OutcomeChain,
                         chained_visit_means, compose_phi, fit_logistic,
                         fit_outcome_chain)

BATTERY_LABELS = ("naive", "s_star_plus", "s_plus_plus", "mar", "j2r")


def _seed_seq(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


@dataclass(frozen=True)
class BatteryConfig:
    """Knobs shared by the estimator battery.

    ``mc_draws`` and ``mc_mode`` control how the adherence-probability and
    weighted-outcome expectations are integrated over the intermediate
    outcomes: 'mc' draws from the fitted residual distributions, 'plugin'
    evaluates at the chained means (fast, slightly biased through the
    logistic nonlinearity).
    """

    mc_draws: int = 200
    mc_mode: str = "mc"
    j2r_imputations: int = 20
    alpha: float = 0.05

    def __post_init__(self):
        if self.mc_mode not in ("mc", "plugin"):
            raise ValueError(f"unknown mc_mode {self.mc_mode!r}")
        if self.mc_draws < 1:
            raise ValueError("mc_draws must be >= 1")
        if self.j2r_imputations < 2:
            raise ValueError("j2r_imputations must be >= 2")


@dataclass(frozen=True)
class AdherenceModel:
    """Multiplicative per-interval adherence model for one arm.

    Interval k spans the gap between consecutive visit weeks (0 and the
    planned duration at the ends). Each interval's model is the probability
    of surviving that interval without an ICE given being at risk at its
    start, conditional on baseline covariates and the visits observed by
    then. Intervals where every at-risk subject had the same outcome store
    that constant probability instead of a fitted model. The identifying
    condition is that the ICE process depends only on those observed values.
    """

    arm: int
    models: tuple
    bounds: tuple[float, ...]
    names: tuple[str, ...]

    def interval_probability(self, k: int, X: np.ndarray, zcols: list) -> np.ndarray:
        """Survival probability of interval k given covariates and draws.

        ``zcols`` holds one array per visit available before interval k;
        entries may be (n,) or (n, draws).
        """
        model = self.models[k]
        if isinstance(model, float):
            return np.full(X.shape[0], model)
        return _sigmoid_eta(model, X, zcols)

    def survival_product(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Product of interval survival probabilities at observed visit values."""
        out = np.ones(X.shape[0])
        for k in range(len(self.models)):
            zcols = [Z[:, j] for j in range(min(k, Z.shape[1]))]
            out = _bmul(out, self.interval_probability(k, X, zcols))
        return out


def _bmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Multiply per-subject (n,) against per-draw (n, d) arrays elementwise."""
    a, b = np.asarray(a), np.asarray(b)
    if a.ndim < b.ndim:
        a = a[:, None]
    elif b.ndim < a.ndim:
        b = b[:, None]
    return a * b


def _eta(coef, X: np.ndarray, zcols: list) -> np.ndarray:
    beta = np.asarray(coef)
    p = X.shape[1]
    eta = beta[0] + X @ beta[1:p + 1]
    for j, z in enumerate(zcols):
        contrib = beta[p + 1 + j] * np.asarray(z)
        eta = eta[:, None] + contrib if (eta.ndim < contrib.ndim) else eta + contrib
    return eta


def _linear_eta(model: LinearModel, X, zcols):
    return _eta(model.coefficients, X, zcols)


def _sigmoid_eta(model: LogisticModel, X, zcols):
    eta = _eta(model.coefficients, X, zcols)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-eta))


def fit_adherence_model(ds: TrialDataset, arm: int) -> AdherenceModel:
    """Fit the per-interval adherence model on one arm.

    Interval k's at-risk set is the arm's subjects whose first event time
    exceeds the interval start; the response is surviving past the interval
    end. A single-outcome interval degenerates to its observed constant.
    """
    X = ds.covariate_matrix()
    Z = ds.z_matrix()
    t = ds.treatment_vector()
    first = ds.first_event_times()
    bounds = ds.schema.interval_bounds()
    x_names = ds.schema.design_names()
    visit_labels = ds.schema.visit_labels
    in_arm = t == arm

    models = []
    for k in range(len(bounds) - 1):
        start, end = bounds[k], bounds[k + 1]
        at_risk = in_arm & (first > start)
        if not at_risk.any():
            raise FitError(f"arm {arm}: no subjects at risk in interval "
                           f"({start:g}, {end:g}]")
        survived = (first[at_risk] > end).astype(float)
        if survived.min() == survived.max():
            models.append(float(survived[0]))
            continue
        design = np.column_stack([X[at_risk], Z[at_risk][:, :k]])
        names = x_names + visit_labels[:k]
        models.append(fit_logistic(design, survived, names))
    return AdherenceModel(arm=arm, models=tuple(models), bounds=bounds,
                          names=x_names + visit_labels)


# ---------------------------------------------------------------------------
# Counterfactual quantities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CounterfactualQuantities:
    """Per-subject model-implied quantities under each arm.

    ``phi[t]`` is the expected final outcome given baseline covariates,
    ``h[t]`` the expected adherence probability, and ``varphi[t]`` the
    expected product of adherence probability and outcome; h and varphi
    integrate over the intermediate outcomes under arm t.
    """

    phi: tuple[np.ndarray, np.ndarray]
    h: tuple[np.ndarray, np.ndarray]
    varphi: tuple[np.ndarray, np.ndarray]
    mc_draws: int
    mc_mode: str


def _draw_visit(rng, model: LinearModel, kind: str, X, zdraws, n_draws: int):
    mean = _linear_eta(model, X, zdraws)
    if mean.ndim == 1:
        mean = mean[:, None]
    shape = (mean.shape[0], max(mean.shape[1], n_draws))
    if kind == "binary":
        return (rng.random(shape) < np.clip(mean, 0.0, 1.0)).astype(float)
    return mean + model.residual_sd * rng.standard_normal(shape)


def counterfactual_quantities(ds: TrialDataset, chains, adh_models,
                              mc_draws: int = 200, seed=None,
                              mc_mode: str = "mc") -> CounterfactualQuantities:
    """Compute phi, h and varphi for every subject under both arms.

    In 'mc' mode the intermediate outcomes are drawn ``mc_draws`` times per
    subject from the fitted chain (Gaussian residuals for continuous visits,
    Bernoulli for binary ones) and the adherence product and predicted
    outcome are averaged over draws. In 'plugin' mode both are evaluated
    once at the chained means. Deterministic given the seed.
    """
    if mc_mode not in ("mc", "plugin"):
        raise ValueError(f"unknown mc_mode {mc_mode!r}")
    if mc_mode == "mc" and mc_draws < 1:
        raise ValueError("mc_draws must be >= 1")
    X = ds.covariate_matrix()
    rng = np.random.default_rng(_seed_seq(seed))
    phi, h, varphi = [], [], []
    for t in (0, 1):
        chain: OutcomeChain = chains[t]
        adh: AdherenceModel = adh_models[t]
        phi.append(np.asarray(compose_phi(chain, X), dtype=float))
        if mc_mode == "plugin":
            zdraws = list(chained_visit_means(chain, X).T)
        else:
            zdraws = []
            for k, model in enumerate(chain.z_models):
                zdraws.append(_draw_visit(rng, model, chain.visit_kinds[k],
                                          X, zdraws, mc_draws))
        surv = np.ones(X.shape[0])
        for k in range(len(adh.models)):
            surv = _bmul(surv, adh.interval_probability(k, X, zdraws[:k]))
        ymean = _linear_eta(chain.y_model, X, zdraws)
        prod = _bmul(surv, ymean)
        h.append(surv.mean(axis=1) if surv.ndim == 2 else np.asarray(surv, float).copy())
        varphi.append(prod.mean(axis=1) if prod.ndim == 2 else np.asarray(prod, float).copy())
    return CounterfactualQuantities(phi=(phi[0], phi[1]), h=(h[0], h[1]),
                                    varphi=(varphi[0], varphi[1]),
                                    mc_draws=mc_draws, mc_mode=mc_mode)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StratumEstimate:
    """One battery row: per-arm means, their difference, optional se/CI."""

    label: str
    mean1: float
    mean0: float
    diff: float
    se: float | None = None
    se1: float | None = None
    se0: float | None = None
    ci: tuple[float, float] | None = None
    note: str = ""


def _estimate(label, mean1, mean0, **kw) -> StratumEstimate:
    return StratumEstimate(label=label, mean1=float(mean1), mean0=float(mean0),
                           diff=float(mean1 - mean0), **kw)


def ace_s_star_plus(ds: TrialDataset, cq: CounterfactualQuantities) -> StratumEstimate:
    """Effect among would-be adherers to arm 1 (virtual-twin contrast)."""
    mask11 = (ds.treatment_vector() == 1) & ds.adherence_vector()
    if not mask11.any():
        raise FitError("no adherers in arm 1")
    y = ds.y_vector()
    mean1 = np.mean(y[mask11])
    mean0 = np.mean(cq.phi[0][mask11])
    return _estimate("s_star_plus", mean1, mean0,
                     note="adherent to experimental arm")


def ace_s_plus_plus(ds: TrialDataset, cq: CounterfactualQuantities) -> StratumEstimate:
    """Effect among would-be adherers to both arms (weighted cross-arm means)."""
    t = ds.treatment_vector()
    adh = ds.adherence_vector()
    mask01 = (t == 0) & adh
    mask11 = (t == 1) & adh
    den1 = cq.h[1][mask01].sum()
    den0 = cq.h[0][mask11].sum()
    if den1 <= 0 or den0 <= 0:
        raise FitError("adherence-probability weights sum to zero")
    mean1 = cq.varphi[1][mask01].sum() / den1
    mean0 = cq.varphi[0][mask11].sum() / den0
    return _estimate("s_plus_plus", mean1, mean0, note="adherent to both arms")


def estimate_p_plus_plus(ds: TrialDataset, cq: CounterfactualQuantities) -> float:
    """Estimated proportion of subjects who would adhere to both arms."""
    t = ds.treatment_vector()
    adh = ds.adherence_vector()
    total = cq.h[0][(t == 1) & adh].sum() + cq.h[1][(t == 0) & adh].sum()
    return float(total / (ds.n1 + ds.n0))


def naive_adherers(ds: TrialDataset) -> StratumEstimate:
    """Plain contrast of observed adherer means; not a causal estimand."""
    t = ds.treatment_vector()
    adh = ds.adherence_vector()
    y = ds.y_vector()
    mask1, mask0 = (t == 1) & adh, (t == 0) & adh
    if not mask1.any() or not mask0.any():
        raise FitError("adherers required in both arms")
    return _estimate("naive", np.mean(y[mask1]), np.mean(y[mask0]),
                     note="non-causal observed-adherer contrast")


def hypothetical_mar(ds: TrialDataset, chains) -> StratumEstimate:
    """All-randomized effect under missing-at-random, by chain composition.

    Each arm mean averages the chain-composed expected outcome over every
    randomized subject, substituting for the sequential-model fit one would
    run on the pre-ICE repeated measures.
    """
    X = ds.covariate_matrix()
    mean1 = np.mean(compose_phi(chains[1], X))
    mean0 = np.mean(compose_phi(chains[0], X))
    return _estimate("mar", mean1, mean0,
                     note="hypothetical no-ICE effect, missing at random")


def j2r_estimate(ds: TrialDataset, chains, m_imputations: int = 20,
                 seed=None, alpha: float = 0.05) -> StratumEstimate:
    """Jump-to-reference multiple imputation for the all-randomized effect.

    Missing final outcomes in both arms are imputed from the reference-arm
    chain conditional on baseline covariates and the observed pre-ICE
    visits, drawing the unobserved visits and the outcome with their fitted
    residual noise. Point and variance pool across imputations (mean;
    within + (1 + 1/m) between); the CI uses a normal approximation.
    """
    if m_imputations < 2:
        raise ValueError("m_imputations must be >= 2")
    ref: OutcomeChain = chains[0]
    X = ds.covariate_matrix()
    Z = ds.z_matrix()
    y = ds.y_vector()
    t = ds.treatment_vector()
    missing = np.isnan(y)
    rng = np.random.default_rng(_seed_seq(seed))
    n_visits = Z.shape[1]
    # group subjects needing imputation by how many visits they have observed
    observed_count = np.sum(~np.isnan(Z), axis=1)
    diffs, withins = [], []
    means_by_arm = {0: [], 1: []}
    for _ in range(m_imputations):
        yc = y.copy()
        for g in range(n_visits + 1):
            grp = missing & (observed_count == g)
            if not grp.any():
                continue
            Xg = X[grp]
            zcols = [Z[grp, j] for j in range(g)]
            for k in range(g, n_visits):
                draw = _draw_visit(rng, ref.z_models[k], ref.visit_kinds[k],
                                   Xg, zcols, 1)
                zcols.append(draw[:, 0])
            mean_y = _linear_eta(ref.y_model, Xg, zcols)
            yc[grp] = mean_y + ref.y_model.residual_sd * rng.standard_normal(grp.sum())
        y1, y0 = yc[t == 1], yc[t == 0]
        means_by_arm[1].append(np.mean(y1))
        means_by_arm[0].append(np.mean(y0))
        diffs.append(np.mean(y1) - np.mean(y0))
        withins.append(np.var(y1, ddof=1) / len(y1) + np.var(y0, ddof=1) / len(y0))
    point, se = rubin_pool(np.asarray(diffs), np.asarray(withins))
    z = stats.norm.ppf(1 - alpha / 2)
    return StratumEstimate(
        label="j2r",
        mean1=float(np.mean(means_by_arm[1])), mean0=float(np.mean(means_by_arm[0])),
        diff=point, se=se, ci=(point - z * se, point + z * se),
        note=f"jump-to-reference, {m_imputations} imputations")


# ---------------------------------------------------------------------------
# Battery runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BatteryResult:
    estimates: dict[str, StratumEstimate]
    p_plus_plus: float
    config: BatteryConfig


def run_battery(ds: TrialDataset, config: BatteryConfig = BatteryConfig(),
                seed=None) -> BatteryResult:
    """Fit the full pipeline once and evaluate every battery member.

    Chains and adherence models are fitted per arm, the counterfactual
    quantities are integrated once, and the five estimators plus the
    both-adherent proportion are computed from them. Deterministic given
    the seed.
    """
    ss = _seed_seq(seed)
    cq_seed, j2r_seed = ss.spawn(2)
    chains = (fit_outcome_chain(ds, 0), fit_outcome_chain(ds, 1))
    adh_models = (fit_adherence_model(ds, 0), fit_adherence_model(ds, 1))
    cq = counterfactual_quantities(ds, chains, adh_models,
                                   mc_draws=config.mc_draws, seed=cq_seed,
                                   mc_mode=config.mc_mode)
    estimates = {
        "naive": naive_adherers(ds),
        "s_star_plus": ace_s_star_plus(ds, cq),
        "s_plus_plus": ace_s_plus_plus(ds, cq),
        "mar": hypothetical_mar(ds, chains),
        "j2r": j2r_estimate(ds, chains, m_imputations=config.j2r_imputations,
                            seed=j2r_seed, alpha=config.alpha),
    }
    return BatteryResult(estimates=estimates,
                         p_plus_plus=estimate_p_plus_plus(ds, cq),
                         config=config)


def battery_points(ds: TrialDataset, config: BatteryConfig, seed=None) -> dict[str, float]:
    """Flat name -> value view over the battery, including p_plus_plus."""
    res = run_battery(ds, config, seed)
    out = {name: est.diff for name, est in res.estimates.items()}
    out["p_plus_plus"] = res.p_plus_plus
    return out


def battery_triples(ds: TrialDataset, config: BatteryConfig,
                    seed=None) -> dict[str, tuple[float, float, float]]:
    """(mean0, mean1, diff) per battery member; p_plus_plus as (p, p, p)."""
    res = run_battery(ds, config, seed)
    out = {name: (est.mean0, est.mean1, est.diff)
           for name, est in res.estimates.items()}
    p = res.p_plus_plus
    out["p_plus_plus"] = (p, p, p)
    return out
