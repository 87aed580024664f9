"""Synthetic two-arm trials with materialized potential outcomes.

The generator draws, for every subject, the intermediate and final outcomes
and the intercurrent-event process under *both* arms, then reveals the
observed record for the randomized arm. That construction makes the
stable-unit-value conditions true field by field, keeps treatment
assignment ignorable, draws the two arms' intermediate paths independently
given covariates, and lets the event process depend only on covariates and
previously observed visits (the identifying condition for the adherence
models). Retaining both potential sides also powers the brute-force oracle
used to benchmark every estimator.

Mechanics of one arm's event process: each inter-visit interval has a
logistic probability of a first ICE given covariates and the visits
observed by the interval start, which is exactly the family the analysis
refits. A drawn ICE is administrative with probability admin_rate/q (capped
at 1), which makes the per-interval administrative incidence a constant
independent of arm and covariates; the remaining ICEs split between AE,
LoE, and simultaneous AE+LoE with per-arm probabilities. Event times fall
uniformly inside their interval.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ace import BatteryConfig, battery_points
from .bootstrap import bootstrap_battery
from .data import (Covariate, CovariateSchema, DispositionEvidence,
                   SubjectRecord, TrialDataset, Visit)

STRATA = ("all", "s_star_plus", "s_plus_plus", "naive")


@dataclass(frozen=True)
class CovariateDist:
    """Baseline covariate generator: normal(mean, sd) or bernoulli(p)."""

    name: str
    dist: str = "normal"
    mean: float = 0.0
    sd: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.dist not in ("normal", "bernoulli"):
            raise ValueError(f"covariate {self.name}: unknown dist {self.dist!r}")
        if self.dist == "normal" and self.sd < 0:
            raise ValueError(f"covariate {self.name}: sd must be >= 0")
        if self.dist == "bernoulli" and not 0 <= self.p <= 1:
            raise ValueError(f"covariate {self.name}: p must be in [0, 1]")

    def expectation(self) -> float:
        return self.mean if self.dist == "normal" else self.p


@dataclass(frozen=True)
class VisitModel:
    """One scheduled visit: per-arm mean coefficients over (1, X, Z<k).

    Continuous visits add Gaussian noise with the per-arm sd; binary visits
    draw Bernoulli with the (clipped) linear mean and ignore sd.
    """

    label: str
    week: float
    kind: str = "continuous"
    coef: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())
    sd: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class SimulationSpec:
    """Full generative description of a synthetic trial.

    ``ice_coef`` holds per-interval, per-arm logistic coefficients for the
    probability of a first ICE in that interval given (1, X, visits observed
    by the interval start); there are len(visits)+1 intervals. ``admin_rate``
    is the per-interval administrative incidence among at-risk subjects,
    identical across arms. ``cause_split`` gives per-arm (AE, LoE, AE+LoE)
    proportions for non-administrative ICEs. ``a5_violation`` optionally
    leaks the standardized final-outcome noise into the ICE logits, breaking
    the ignorable-adherence condition for sensitivity exploration.
    """

    n0: int
    n1: int
    covariates: tuple[CovariateDist, ...]
    visits: tuple[VisitModel, ...]
    y_coef: tuple[tuple[float, ...], tuple[float, ...]]
    y_sd: tuple[float, float]
    ice_coef: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]
    admin_rate: tuple[float, ...]
    cause_split: tuple[tuple[float, float, float], tuple[float, float, float]]
    d_max: float
    a5_violation: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        p = len(self.covariates)
        m = len(self.visits)
        if self.n0 < 1 or self.n1 < 1:
            raise ValueError("both arms need at least one subject")
        for k, v in enumerate(self.visits):
            for t in (0, 1):
                if len(v.coef[t]) != 1 + p + k:
                    raise ValueError(
                        f"visit {v.label} arm {t}: expected {1 + p + k} "
                        f"coefficients, got {len(v.coef[t])}")
                if v.kind == "continuous" and v.sd[t] < 0:
                    raise ValueError(f"visit {v.label}: sd must be >= 0")
        for t in (0, 1):
            if len(self.y_coef[t]) != 1 + p + m:
                raise ValueError(f"outcome arm {t}: expected {1 + p + m} coefficients")
            if self.y_sd[t] < 0:
                raise ValueError("outcome sd must be >= 0")
            split = self.cause_split[t]
            if len(split) != 3:
                raise ValueError("cause_split entries are (ae, loe, tie)")
            if abs(sum(split) - 1.0) > 1e-9 or min(split) < 0:
                raise ValueError("cause_split entries must be probabilities summing to 1")
        if len(self.ice_coef) != m + 1:
            raise ValueError(f"expected {m + 1} interval coefficient pairs")
        for k, pair in enumerate(self.ice_coef):
            for t in (0, 1):
                if len(pair[t]) != 1 + p + k:
                    raise ValueError(
                        f"interval {k} arm {t}: expected {1 + p + k} coefficients")
        if len(self.admin_rate) != m + 1:
            raise ValueError(f"expected {m + 1} admin rates")
        if min(self.admin_rate) < 0 or max(self.admin_rate) >= 1:
            raise ValueError("admin rates must be in [0, 1)")

    def to_schema(self) -> CovariateSchema:
        return CovariateSchema(
            covariates=tuple(Covariate(c.name) for c in self.covariates),
            visits=tuple(Visit(v.label, v.week, v.kind) for v in self.visits),
            d_max=self.d_max)

    def interval_bounds(self) -> tuple[float, ...]:
        return (0.0, *(v.week for v in self.visits), self.d_max)


@dataclass(frozen=True)
class SimulationTruth:
    """Potential values for every generated subject, plus draw-level truths."""

    t: np.ndarray
    y_pot: tuple[np.ndarray, np.ndarray]
    z_pot: tuple[np.ndarray, np.ndarray]
    a_pot: tuple[np.ndarray, np.ndarray]
    first_time_pot: tuple[np.ndarray, np.ndarray]
    s_star_plus: np.ndarray
    s_plus_plus: np.ndarray
    effects: dict[str, float]
    p_plus_plus: float


def _sigmoid(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed))


def _mean_with_design(coef, X, zcols):
    beta = np.asarray(coef)
    p = X.shape[1]
    out = beta[0] + X @ beta[1:p + 1]
    for j, z in enumerate(zcols):
        out = out + beta[p + 1 + j] * z
    return out


def _draw_covariates(spec: SimulationSpec, n: int, rng) -> np.ndarray:
    cols = []
    for c in spec.covariates:
        if c.dist == "normal":
            cols.append(c.mean + c.sd * rng.standard_normal(n))
        else:
            cols.append((rng.random(n) < c.p).astype(float))
    return np.column_stack(cols) if cols else np.empty((n, 0))


def _draw_arm(spec: SimulationSpec, X: np.ndarray, arm: int, rng):
    """Potential intermediate/final outcomes and event process for one arm."""
    n = X.shape[0]
    m = len(spec.visits)
    Z = np.empty((n, m))
    for k, v in enumerate(spec.visits):
        mean = _mean_with_design(v.coef[arm], X, [Z[:, j] for j in range(k)])
        if v.kind == "binary":
            Z[:, k] = (rng.random(n) < np.clip(mean, 0.0, 1.0)).astype(float)
        else:
            Z[:, k] = mean + v.sd[arm] * rng.standard_normal(n)
    eps = rng.standard_normal(n)
    y = _mean_with_design(spec.y_coef[arm], X, [Z[:, j] for j in range(m)])
    y = y + spec.y_sd[arm] * eps

    bounds = spec.interval_bounds()
    first_time = np.full(n, math.inf)
    d_ae = np.full(n, math.inf)
    d_loe = np.full(n, math.inf)
    d_admin = np.full(n, math.inf)
    at_risk = np.ones(n, dtype=bool)
    for k in range(m + 1):
        start, end = bounds[k], bounds[k + 1]
        logit = _mean_with_design(spec.ice_coef[k][arm], X,
                                  [Z[:, j] for j in range(k)])
        if spec.a5_violation != 0.0:
            logit = logit + spec.a5_violation * eps
        q = _sigmoid(logit)
        fire = at_risk & (rng.random(n) < q)
        with np.errstate(divide="ignore"):
            admin_pick = rng.random(n) < np.minimum(1.0, spec.admin_rate[k] / q)
        # draw in (start, end] so an event never collides with a visit it saw
        times = end - (end - start) * rng.random(n)
        u_cause = rng.random(n)
        ae_cut, loe_cut, _ = spec.cause_split[arm]
        admin_mask = fire & admin_pick
        other = fire & ~admin_pick
        ae_mask = other & (u_cause < ae_cut)
        loe_mask = other & (u_cause >= ae_cut) & (u_cause < ae_cut + loe_cut)
        tie_mask = other & (u_cause >= ae_cut + loe_cut)
        d_admin[admin_mask] = times[admin_mask]
        d_ae[ae_mask | tie_mask] = times[ae_mask | tie_mask]
        d_loe[loe_mask | tie_mask] = times[loe_mask | tie_mask]
        first_time[fire] = times[fire]
        at_risk &= ~fire
    adherent = first_time > spec.d_max
    return Z, y, first_time, d_ae, d_loe, d_admin, adherent


_REASON_TABLES = {
    "ae": (("AE", 0.70, False), ("sponsor_decision", 0.85, True),
           ("death", 0.90, True), ("physician_decision", 1.01, True)),
    "loe": (("physician_decision", 0.60, False), ("withdrawal_by_subject", 1.01, False)),
    "tie": (("AE", 0.50, False), ("physician_decision", 1.01, True)),
    "admin": (("withdrawal_by_subject", 0.40, False), ("lost_to_followup", 0.70, False),
              ("protocol_violation", 0.90, False), ("physician_decision", 1.01, False)),
}


def _evidence(kind: str, u: float) -> DispositionEvidence:
    for reason, cut, force_ae_flag in _REASON_TABLES[kind]:
        if u < cut:
            ae_flag = force_ae_flag or kind in ("tie",)
            loe_flag = kind in ("loe", "tie")
            return DispositionEvidence(reason, ae_flag=ae_flag,
                                       efficacy_no_improvement_flag=loe_flag)
    raise AssertionError("unreachable")


def generate_trial(spec: SimulationSpec, seed=None) -> tuple[TrialDataset, SimulationTruth]:
    """Draw one synthetic trial and its per-subject potential-outcome truth.

    Observed records equal the potential values at the assigned arm; visit
    values at or after the first ICE and final outcomes of non-adherers are
    masked. Deterministic given (spec, seed).
    """
    rng = _rng(seed)
    n = spec.n0 + spec.n1
    X = _draw_covariates(spec, n, rng)
    arms = {}
    for t in (0, 1):
        arms[t] = _draw_arm(spec, X, t, rng)
    assignment = np.zeros(n, dtype=int)
    assignment[rng.permutation(n)[:spec.n1]] = 1
    u_evidence = rng.random(n)

    schema = spec.to_schema()
    weeks = schema.visit_weeks
    width = max(4, len(str(n)))
    subjects = []
    for i in range(n):
        t = int(assignment[i])
        Z, y, first_time, d_ae, d_loe, d_admin, adherent = arms[t]
        ft = first_time[i]
        z_obs = tuple(float(Z[i, k]) if weeks[k] < ft else None
                      for k in range(len(weeks)))
        if adherent[i]:
            ev = DispositionEvidence("completed")
        elif d_admin[i] == ft:
            ev = _evidence("admin", u_evidence[i])
        elif d_ae[i] == ft and d_loe[i] == ft:
            ev = _evidence("tie", u_evidence[i])
        elif d_ae[i] == ft:
            ev = _evidence("ae", u_evidence[i])
        else:
            ev = _evidence("loe", u_evidence[i])
        subjects.append(SubjectRecord(
            id=f"s{i:0{width}d}", treatment=t, x=tuple(float(v) for v in X[i]),
            z=z_obs, y=float(y[i]) if adherent[i] else None,
            d_ae=None if math.isinf(d_ae[i]) else float(d_ae[i]),
            d_loe=None if math.isinf(d_loe[i]) else float(d_loe[i]),
            d_admin=None if math.isinf(d_admin[i]) else float(d_admin[i]),
            evidence=ev))
    ds = TrialDataset(schema=schema, subjects=tuple(subjects))

    a0, a1 = arms[0][6], arms[1][6]
    y0, y1 = arms[0][1], arms[1][1]
    diff = y1 - y0
    both = a0 & a1
    effects = {
        "all": float(np.mean(diff)),
        "s_star_plus": float(np.mean(diff[a1])) if a1.any() else math.nan,
        "s_plus_plus": float(np.mean(diff[both])) if both.any() else math.nan,
        "naive": (float(np.mean(y1[a1]) - np.mean(y0[a0]))
                  if a1.any() and a0.any() else math.nan),
    }
    truth = SimulationTruth(
        t=assignment, y_pot=(y0, y1), z_pot=(arms[0][0], arms[1][0]),
        a_pot=(a0, a1), first_time_pot=(arms[0][2], arms[1][2]),
        s_star_plus=a1, s_plus_plus=both, effects=effects,
        p_plus_plus=float(np.mean(both)))
    return ds, truth


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleTruth:
    """Monte Carlo ground truth per stratum: value and MC standard error."""

    effects: dict[str, tuple[float, float]]
    p_plus_plus: tuple[float, float]
    draws: int

    def target(self, estimator: str) -> float:
        """Oracle value an estimator aims at (hypothetical members aim at 'all')."""
        if estimator == "p_plus_plus":
            return self.p_plus_plus[0]
        key = {"mar": "all", "j2r": "all"}.get(estimator, estimator)
        return self.effects[key][0]


def oracle_truth(spec: SimulationSpec, draws: int = 200_000, seed=None) -> OracleTruth:
    """Brute-force potential-outcome truth for every stratum of interest.

    Draws the full generative model with both arms materialized, no
    observation masking, and averages within strata. Raises when a stratum
    is too thin (< 1e-3) to report a reliable value.
    """
    if draws < 100_000:
        raise ValueError("oracle needs at least 100000 draws")
    rng = _rng(seed)
    X = _draw_covariates(spec, draws, rng)
    Z0, y0, ft0, *_rest0, a0 = _draw_arm(spec, X, 0, rng)
    Z1, y1, ft1, *_rest1, a1 = _draw_arm(spec, X, 1, rng)
    both = a0 & a1
    diff = y1 - y0

    def _stat(mask):
        k = int(mask.sum())
        if k < 1e-3 * draws:
            raise ValueError(
                f"stratum probability {k / draws:.2e} below 1e-3; oracle unreliable")
        vals = diff[mask]
        return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(k))

    effects = {
        "all": _stat(np.ones(draws, dtype=bool)),
        "s_star_plus": _stat(a1),
        "s_plus_plus": _stat(both),
    }
    n1, n0 = int(a1.sum()), int(a0.sum())
    naive = float(np.mean(y1[a1]) - np.mean(y0[a0]))
    naive_se = math.sqrt(np.var(y1[a1], ddof=1) / n1 + np.var(y0[a0], ddof=1) / n0)
    effects["naive"] = (naive, naive_se)
    p = float(np.mean(both))
    return OracleTruth(effects=effects,
                       p_plus_plus=(p, math.sqrt(p * (1 - p) / draws)),
                       draws=draws)


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkRow:
    estimator: str
    n_per_arm: int
    reps: int
    mean: float
    bias: float
    sd: float
    mc_se: float
    coverage: float | None
    failures: int


@dataclass(frozen=True)
class BenchmarkReport:
    spec_name: str
    oracle: OracleTruth
    rows: tuple[BenchmarkRow, ...]
    stratum_gap: dict[int, float]

    def row(self, estimator: str, n_per_arm: int) -> BenchmarkRow:
        for r in self.rows:
            if r.estimator == estimator and r.n_per_arm == n_per_arm:
                return r
        raise KeyError((estimator, n_per_arm))


def run_benchmark(spec: SimulationSpec, reps: int, n_grid, estimators=None,
                  seed=None, bootstrap_b: int = 0,
                  config: BatteryConfig = BatteryConfig(),
                  oracle_draws: int = 200_000) -> BenchmarkReport:
    """Estimate bias, spread and optional CI coverage against the oracle.

    For each n in ``n_grid`` the spec is rescaled to n per arm and ``reps``
    trials are generated; every requested estimator runs on each. When
    ``bootstrap_b`` >= 100, percentile CIs are computed per replication and
    coverage of the oracle target is reported. Also tracks the mean absolute
    gap between the all-randomized and both-adherent estimates.
    """
    if reps < 50:
        raise ValueError("benchmark needs reps >= 50")
    if estimators is None:
        estimators = ("naive", "s_star_plus", "s_plus_plus", "mar", "j2r",
                      "p_plus_plus")
    n_grid = [int(n) for n in n_grid]
    oracle_seed, *grid_seeds = np.random.SeedSequence(seed).spawn(len(n_grid) + 1)
    oracle = oracle_truth(spec, draws=oracle_draws, seed=oracle_seed)

    rows = []
    gaps = {}
    for n, gseed in zip(n_grid, grid_seeds):
        spec_n = replace(spec, n0=n, n1=n)
        rep_seeds = gseed.spawn(reps)
        values = {e: [] for e in estimators}
        covered = {e: 0 for e in estimators}
        cover_total = 0
        failures = {e: 0 for e in estimators}
        gap_vals = []
        for r in range(reps):
            ds_seed, est_seed, boot_seed = rep_seeds[r].spawn(3)
            ds, _ = generate_trial(spec_n, ds_seed)
            try:
                points = battery_points(ds, config, est_seed)
                boots = None
                if bootstrap_b >= 100:
                    boots = bootstrap_battery(list(estimators), ds, b=bootstrap_b,
                                              alpha=0.05, seed=boot_seed,
                                              config=config)
            except Exception:
                for e in estimators:
                    failures[e] += 1
                continue
            for e in estimators:
                values[e].append(points[e])
            gap_vals.append(abs(points["mar"] - points["s_plus_plus"]))
            if boots is not None:
                cover_total += 1
                for e in estimators:
                    lo, hi = boots[e].ci
                    if lo <= oracle.target(e) <= hi:
                        covered[e] += 1
        gaps[int(n)] = float(np.mean(gap_vals)) if gap_vals else math.nan
        for e in estimators:
            vals = np.asarray(values[e])
            target = oracle.target(e)
            rows.append(BenchmarkRow(
                estimator=e, n_per_arm=int(n), reps=len(vals),
                mean=float(np.mean(vals)), bias=float(np.mean(vals) - target),
                sd=float(np.std(vals, ddof=1)),
                mc_se=float(np.std(vals, ddof=1) / math.sqrt(len(vals))),
                coverage=(covered[e] / cover_total if cover_total else None),
                failures=failures[e]))
    return BenchmarkReport(spec_name=spec.name, oracle=oracle,
                           rows=tuple(rows), stratum_gap=gaps)


# ---------------------------------------------------------------------------
# Built-in specifications
# ---------------------------------------------------------------------------

def _marginal_means(spec: SimulationSpec) -> tuple[float, float]:
    """Exact model-implied E[Y(t)] by composing expectations (all linear)."""
    ex = np.array([c.expectation() for c in spec.covariates])
    means = []
    for t in (0, 1):
        ez: list[float] = []
        for v in spec.visits:
            beta = np.asarray(v.coef[t])
            m = beta[0] + beta[1:1 + len(ex)] @ ex
            m = m + sum(b * z for b, z in zip(beta[1 + len(ex):], ez))
            ez.append(float(np.clip(m, 0.0, 1.0)) if v.kind == "binary" else float(m))
        beta = np.asarray(spec.y_coef[t])
        ey = beta[0] + beta[1:1 + len(ex)] @ ex
        ey = ey + sum(b * z for b, z in zip(beta[1 + len(ex):], ez))
        means.append(float(ey))
    return means[0], means[1]


def hba1c_like_spec(effect: float = -0.25, n1: int = 663, n0: int = 449,
                    selection: float = 0.08) -> SimulationSpec:
    """Desk-scale glycemic-control-flavored fixture.

    Seven baseline covariates (standardized scores apart from the raw-scale
    glycemic baseline and a 0/1 gender indicator), a binary early
    site-reaction visit plus efficacy visits at weeks 12 and 26, and a
    52-week duration. Arm 1 has a higher site-reaction rate that feeds both
    the event process and (slightly) the outcomes. ``effect`` calibrates the
    arm-1 outcome intercept so the all-randomized mean difference equals it
    exactly; with the default weak ``selection`` (the event-process loading
    on the efficacy visits) the adherence-stratum effects sit within a few
    thousandths of it. Coefficients are fixtures of this package, not
    estimates from any trial.
    """
    covariates = (
        CovariateDist("age"),
        CovariateDist("gender", dist="bernoulli", p=0.6),
        CovariateDist("hba1c_bl", mean=7.8, sd=1.1),
        CovariateDist("ldl"),
        CovariateDist("tg"),
        CovariateDist("fsg"),
        CovariateDist("alt"),
    )
    # coefficient order: (1, age, gender, hba1c_bl, ldl, tg, fsg, alt, z...)
    visits = (
        VisitModel("isr", 6.0, "binary",
                   coef=((0.06, 0, 0, 0, 0, 0, 0, 0),
                         (0.20, 0, 0, 0, 0, 0, 0, 0))),
        VisitModel("hba1c_w12", 12.0, "continuous",
                   coef=((1.45, 0.02, -0.02, 0.80, 0.01, 0.0, 0.03, 0.0, 0.10),
                         (1.17, 0.02, -0.02, 0.80, 0.01, 0.0, 0.03, 0.0, 0.10)),
                   sd=(0.40, 0.40)),
        VisitModel("hba1c_w26", 26.0, "continuous",
                   coef=((1.27, 0.0, 0.0, 0.10, 0.0, 0.0, 0.02, 0.0, 0.08, 0.72),
                         (1.22, 0.0, 0.0, 0.10, 0.0, 0.0, 0.02, 0.0, 0.08, 0.72)),
                   sd=(0.35, 0.35)),
    )
    y_base = (0.94, 0.01, 0.0, 0.06, 0.0, 0.0, 0.0, 0.0, 0.05, 0.06, 0.75)
    s = selection
    ice_coef = (
        ((-3.79, 0, 0, 0.10, 0, 0, 0, 0),
         (-3.48, 0, 0, 0.10, 0, 0, 0, 0)),
        ((-3.84, 0, 0, 0.10, 0, 0, 0, 0, 1.0),
         (-3.58, 0, 0, 0.10, 0, 0, 0, 0, 1.0)),
        ((-4.01, 0, 0, 0.05, 0, 0, 0, 0, 0.6, s),
         (-3.73, 0, 0, 0.05, 0, 0, 0, 0, 0.6, s)),
        ((-4.28, 0, 0, 0.04, 0, 0, 0, 0, 0.4, 0.04, s),
         (-4.05, 0, 0, 0.04, 0, 0, 0, 0, 0.4, 0.04, s)),
    )
    draft = SimulationSpec(
        n0=n0, n1=n1, covariates=covariates, visits=visits,
        y_coef=(y_base, y_base), y_sd=(0.32, 0.32), ice_coef=ice_coef,
        admin_rate=(0.028, 0.028, 0.028, 0.028),
        cause_split=((0.60, 0.28, 0.12), (0.76, 0.17, 0.07)),
        d_max=52.0, name="hba1c_like")
    mean0, mean1 = _marginal_means(draft)
    y1 = (y_base[0] + (effect - (mean1 - mean0)),) + y_base[1:]
    return replace(draft, y_coef=(y_base, y1))


def null_effect_spec(n_per_arm: int = 500) -> SimulationSpec:
    """Symmetric spec: identical arms, so every stratum effect is exactly 0."""
    base = hba1c_like_spec(effect=0.0, n1=n_per_arm, n0=n_per_arm)
    visits = tuple(replace(v, coef=(v.coef[0], v.coef[0]), sd=(v.sd[0], v.sd[0]))
                   for v in base.visits)
    ice = tuple((pair[0], pair[0]) for pair in base.ice_coef)
    return replace(base, visits=visits, y_coef=(base.y_coef[0], base.y_coef[0]),
                   y_sd=(base.y_sd[0], base.y_sd[0]), ice_coef=ice,
                   cause_split=(base.cause_split[0], base.cause_split[0]),
                   name="null")


def strong_selection_spec(effect: float = -0.25, n_per_arm: int = 2000) -> SimulationSpec:
    """Event process strongly driven by the efficacy visits.

    Useful for showing the naive adherer contrast drifting from the
    both-adherent truth while the weighted estimators hold.
    """
    spec = hba1c_like_spec(effect=effect, n1=n_per_arm, n0=n_per_arm,
                           selection=0.9)
    # recenter the interval intercepts so event rates stay in a sane range
    adj = []
    for k, pair in enumerate(spec.ice_coef):
        if k < 2:
            adj.append(pair)
            continue
        shifted = tuple(tuple((c - 0.9 * 7.5 + 0.08 * 7.5) if j == 0 else c
                              for j, c in enumerate(arm_coef))
                        for arm_coef in pair)
        adj.append(shifted)
    return replace(spec, ice_coef=tuple(adj), name="strong_selection")


BUILTIN_SPECS = {
    "hba1c_like": hba1c_like_spec,
    "null": null_effect_spec,
    "strong_selection": strong_selection_spec,
}


def builtin_spec(name: str, **overrides) -> SimulationSpec:
    if name not in BUILTIN_SPECS:
        raise ValueError(f"unknown builtin spec {name!r}; "
                         f"choose from {sorted(BUILTIN_SPECS)}")
    return BUILTIN_SPECS[name](**overrides)


# ---------------------------------------------------------------------------
# JSON round-trip for full custom specs
# ---------------------------------------------------------------------------

def spec_to_dict(spec: SimulationSpec) -> dict:
    return {
        "name": spec.name,
        "n0": spec.n0,
        "n1": spec.n1,
        "d_max": spec.d_max,
        "a5_violation": spec.a5_violation,
        "covariates": [{"name": c.name, "dist": c.dist, "mean": c.mean,
                        "sd": c.sd, "p": c.p} for c in spec.covariates],
        "visits": [{"label": v.label, "week": v.week, "kind": v.kind,
                    "coef": [list(v.coef[0]), list(v.coef[1])],
                    "sd": list(v.sd)} for v in spec.visits],
        "y_coef": [list(spec.y_coef[0]), list(spec.y_coef[1])],
        "y_sd": list(spec.y_sd),
        "ice_coef": [[list(pair[0]), list(pair[1])] for pair in spec.ice_coef],
        "admin_rate": list(spec.admin_rate),
        "cause_split": [list(spec.cause_split[0]), list(spec.cause_split[1])],
    }


def spec_from_dict(d: dict) -> SimulationSpec:
    return SimulationSpec(
        n0=int(d["n0"]), n1=int(d["n1"]),
        covariates=tuple(CovariateDist(**c) for c in d["covariates"]),
        visits=tuple(VisitModel(label=v["label"], week=v["week"], kind=v["kind"],
                                coef=(tuple(v["coef"][0]), tuple(v["coef"][1])),
                                sd=tuple(v.get("sd", (0.0, 0.0))))
                     for v in d["visits"]),
        y_coef=(tuple(d["y_coef"][0]), tuple(d["y_coef"][1])),
        y_sd=tuple(d["y_sd"]),
        ice_coef=tuple((tuple(p[0]), tuple(p[1])) for p in d["ice_coef"]),
        admin_rate=tuple(d["admin_rate"]),
        cause_split=(tuple(d["cause_split"][0]), tuple(d["cause_split"][1])),
        d_max=float(d["d_max"]), a5_violation=float(d.get("a5_violation", 0.0)),
        name=d.get("name", "custom"))
