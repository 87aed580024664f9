"""Stratified nonparametric bootstrap and multiple-imputation pooling.

Resampling is by subject with replacement, stratified by treatment arm so
every replicate preserves the original arm sizes. The whole estimation
pipeline (outcome chains, adherence models, counterfactual integration) is
refitted on each replicate; confidence intervals are percentile intervals
over the replicate estimates.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import TrialDataset


def rubin_pool(estimates: np.ndarray, within_variances: np.ndarray) -> tuple[float, float]:
    """Pool multiple-imputation estimates: returns (point, pooled se).

    Total variance is the mean within-imputation variance plus
    (1 + 1/m) times the between-imputation variance.
    """
    est = np.asarray(estimates, dtype=float)
    win = np.asarray(within_variances, dtype=float)
    if est.shape != win.shape:
        raise ValueError("estimates and within_variances must have equal length")
    m = len(est)
    if m < 2:
        raise ValueError("pooling needs at least 2 imputations")
    point = float(np.mean(est))
    between = float(np.var(est, ddof=1))
    total = float(np.mean(win)) + (1.0 + 1.0 / m) * between
    return point, math.sqrt(total)


@dataclass(frozen=True)
class BootstrapResult:
    """Percentile-bootstrap summary for a single scalar estimator.

    ``se_mean0``/``se_mean1`` carry the per-arm mean spreads when the
    estimator is a battery member with per-arm means; None otherwise.
    """

    point: float
    replicates: np.ndarray
    ci: tuple[float, float]
    se: float
    seed: int | None
    b: int
    failures: int = 0
    se_mean0: float | None = None
    se_mean1: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "replicates", np.asarray(self.replicates, float))


class BootstrapFailure(RuntimeError):
    """Raised when too many replicates fail to produce an estimate."""

    def __init__(self, failures, b, reasons):
        self.failures = failures
        self.reasons = reasons
        super().__init__(
            f"{failures}/{b} bootstrap replicates failed; first reasons: "
            + "; ".join(reasons[:3]))


def stratified_indices(rng: np.random.Generator, arm: np.ndarray) -> np.ndarray:
    """Resample subject indices with replacement within each arm."""
    out = np.empty(len(arm), dtype=int)
    for t in (0, 1):
        where = np.flatnonzero(arm == t)
        out[where] = rng.choice(where, size=len(where), replace=True)
    return out


def resample_dataset(ds: TrialDataset, rng: np.random.Generator) -> TrialDataset:
    """One stratified bootstrap replicate with arm sizes preserved.

    The replicate shares the original subject records (so ids repeat) and
    its numeric array caches are index views of the originals; it is meant
    for refitting estimators, not for writing out as a dataset.
    """
    idx = stratified_indices(rng, ds.treatment_vector())
    rep = object.__new__(TrialDataset)
    object.__setattr__(rep, "schema", ds.schema)
    object.__setattr__(rep, "subjects", tuple(ds.subjects[i] for i in idx))
    # pre-seed the cached_property arrays by indexing the parent's caches
    cache = rep.__dict__
    cache["_arm"] = _take(ds._arm, idx)
    cache["_adherent"] = _take(ds._adherent, idx)
    cache["_design"] = _take(ds._design, idx)
    cache["_z"] = _take(ds._z, idx)
    cache["_y"] = _take(ds._y, idx)
    cache["_first_times"] = _take(ds._first_times, idx)
    return rep


def _take(arr: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = arr[idx]
    out.setflags(write=False)
    return out


def percentile_ci(replicates: np.ndarray, alpha: float) -> tuple[float, float]:
    """Order-statistic percentile interval: the ceil(a*B/2)-th and
    ceil((1-a/2)*B)-th smallest replicates (1-indexed)."""
    reps = np.sort(np.asarray(replicates, dtype=float))
    b = len(reps)
    lo = max(math.ceil(alpha / 2 * b), 1)
    hi = min(math.ceil((1 - alpha / 2) * b), b)
    return float(reps[lo - 1]), float(reps[hi - 1])


def _resolve(estimator, config):
    """Turn a battery member name (or a callable) into ds, seed -> float."""
    if callable(estimator):
        return lambda ds, seed: float(estimator(ds))
    from . import ace
    valid = ace.BATTERY_LABELS + ("p_plus_plus",)
    if estimator not in valid:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {valid}")

    def run(ds, seed):
        return ace.battery_points(ds, config, seed)[estimator]

    return run


def bootstrap_ci(estimator, ds: TrialDataset, b: int = 1000, alpha: float = 0.05,
                 seed=None, config=None) -> BootstrapResult:
    """Percentile bootstrap CI for one battery member (or custom callable).

    ``estimator`` is a battery name ('naive', 's_star_plus', 's_plus_plus',
    'mar', 'j2r', 'p_plus_plus') or a callable ds -> float. Replicates that
    raise are tolerated up to a 5% failure rate, beyond which
    BootstrapFailure reports the reasons. Deterministic given the seed.
    """
    results = bootstrap_battery([estimator], ds, b=b, alpha=alpha, seed=seed,
                                config=config)
    return next(iter(results.values()))


def bootstrap_battery(estimators, ds: TrialDataset, b: int = 1000,
                      alpha: float = 0.05, seed=None,
                      config=None) -> dict:
    """Bootstrap several battery members off shared replicate pipelines.

    Each replicate refits the pipeline once and evaluates every requested
    estimator, so the cost does not scale with the number of estimators.
    Returns {name: BootstrapResult} in the requested order.
    """
    if b < 100:
        raise ValueError("bootstrap needs b >= 100 replicates")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    from . import ace
    if config is None:
        config = ace.BatteryConfig()

    names = []
    callables = {}
    for est in estimators:
        if callable(est):
            name = getattr(est, "__name__", f"estimator{len(names)}")
            callables[name] = est
        else:
            name = est
        names.append(name)

    need_battery = any(not callable(e) for e in estimators)
    battery_names = [n for n in names if n not in callables]
    if need_battery:
        for n in battery_names:
            _resolve(n, config)  # validate names up front

    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    resample_seed, *rep_seeds = ss.spawn(b + 1)
    rng = np.random.default_rng(resample_seed)

    # point estimates on the original data
    points = {}
    if need_battery:
        base = ace.battery_triples(ds, config, ss.spawn(1)[0])
        points.update({n: base[n][2] for n in battery_names})
    for n, fn in callables.items():
        points[n] = float(fn(ds))

    replicates = {n: [] for n in names}
    arm_reps = {n: ([], []) for n in battery_names}
    failures = 0
    reasons: list[str] = []
    for i in range(b):
        rep = resample_dataset(ds, rng)
        try:
            values = {}
            arm_values = {}
            if need_battery:
                batt = ace.battery_triples(rep, config, rep_seeds[i])
                for n in battery_names:
                    m0, m1, d = batt[n]
                    values[n] = d
                    arm_values[n] = (m0, m1)
            for n, fn in callables.items():
                values[n] = float(fn(rep))
        except Exception as exc:  # noqa: BLE001 - failures are tallied, then rationed
            failures += 1
            reasons.append(f"replicate {i}: {exc}")
            continue
        for n in names:
            replicates[n].append(values[n])
        for n in battery_names:
            arm_reps[n][0].append(arm_values[n][0])
            arm_reps[n][1].append(arm_values[n][1])
    if failures > 0.05 * b:
        raise BootstrapFailure(failures, b, reasons)

    seed_int = seed if isinstance(seed, int) else None
    out = {}
    for n in names:
        reps = np.asarray(replicates[n])
        se01 = (None, None)
        if n in arm_reps and len(arm_reps[n][0]) > 1:
            se01 = tuple(float(np.std(np.asarray(a), ddof=1)) for a in arm_reps[n])
        out[n] = BootstrapResult(
            point=points[n], replicates=reps, ci=percentile_ci(reps, alpha),
            se=float(np.std(reps, ddof=1)) if len(reps) > 1 else 0.0,
            seed=seed_int, b=b, failures=failures,
            se_mean0=se01[0], se_mean1=se01[1])
    return out
