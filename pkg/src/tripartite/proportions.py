"""Treatment differences in first-ICE proportions with CIs and tests.

These are the first two members of the tripartite battery: the arm
difference in the probability of a first ICE due to AE and due to LoE,
plus the all-cause and administrative rows for the summary table.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .data import TrialDataset
from .ice import CAUSES, ice_outcomes, indicator_matrix

CI_METHODS = ("wald", "newcombe")
TEST_METHODS = ("fisher", "chi_square")


@dataclass(frozen=True)
class ProportionDiffEstimate:
    cause: str
    x1: int
    n1: int
    x0: int
    n0: int
    p1: float
    p0: float
    diff: float
    ci: tuple[float, float]
    p_value: float
    alpha: float
    ci_method: str
    test_method: str


def _wilson_bounds(x: int, n: int, z: float) -> tuple[float, float]:
    p = x / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return center - half, center + half


def _ci(x1, n1, x0, n0, alpha, method):
    p1, p0 = x1 / n1, x0 / n0
    diff = p1 - p0
    z = stats.norm.ppf(1 - alpha / 2)
    if method == "wald":
        se = math.sqrt(p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0)
        return diff - z * se, diff + z * se
    if method == "newcombe":
        l1, u1 = _wilson_bounds(x1, n1, z)
        l0, u0 = _wilson_bounds(x0, n0, z)
        low = diff - math.sqrt((p1 - l1) ** 2 + (u0 - p0) ** 2)
        high = diff + math.sqrt((u1 - p1) ** 2 + (p0 - l0) ** 2)
        return low, high
    raise ValueError(f"unknown ci_method {method!r}")


def _p_value(x1, n1, x0, n0, method):
    if method == "fisher":
        table = [[x1, n1 - x1], [x0, n0 - x0]]
        return float(stats.fisher_exact(table, alternative="two-sided")[1])
    if method == "chi_square":
        # pooled-variance z test, no continuity correction
        p1, p0 = x1 / n1, x0 / n0
        pooled = (x1 + x0) / (n1 + n0)
        if pooled in (0.0, 1.0):
            return 1.0
        se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n0))
        zstat = (p1 - p0) / se
        return float(2.0 * stats.norm.sf(abs(zstat)))
    raise ValueError(f"unknown test_method {method!r}")


def diff_from_counts(x1: int, n1: int, x0: int, n0: int, cause: str = "Any",
                     alpha: float = 0.05, ci_method: str = "wald",
                     test_method: str = "fisher") -> ProportionDiffEstimate:
    """Proportion difference, CI and test from raw 2x2 counts."""
    if n1 <= 0 or n0 <= 0:
        raise ValueError("both arms must be nonempty")
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if not (0 <= x1 <= n1 and 0 <= x0 <= n0):
        raise ValueError("event counts must lie within arm sizes")
    p1, p0 = x1 / n1, x0 / n0
    return ProportionDiffEstimate(
        cause=cause, x1=x1, n1=n1, x0=x0, n0=n0, p1=p1, p0=p0, diff=p1 - p0,
        ci=_ci(x1, n1, x0, n0, alpha, ci_method),
        p_value=_p_value(x1, n1, x0, n0, test_method),
        alpha=alpha, ci_method=ci_method, test_method=test_method)


def estimate_ice_diff(ds: TrialDataset, cause: str, alpha: float = 0.05,
                      ci_method: str = "wald",
                      test_method: str = "fisher") -> ProportionDiffEstimate:
    """Arm difference in the proportion of first ICEs with the given cause."""
    if cause not in CAUSES:
        raise ValueError(f"unknown cause {cause!r}")
    flags = indicator_matrix(ds)[cause]
    arm = ds.treatment_vector()
    x1 = int(np.sum(flags & (arm == 1)))
    x0 = int(np.sum(flags & (arm == 0)))
    return diff_from_counts(x1, ds.n1, x0, ds.n0, cause=cause, alpha=alpha,
                            ci_method=ci_method, test_method=test_method)


@dataclass(frozen=True)
class IceSummary:
    """Per-cause proportion rows plus mean exposure among affected subjects.

    ``exposure_weeks`` maps cause -> (arm0 mean, arm1 mean); NaN where the
    arm has no subject with that cause.
    """

    rows: dict[str, ProportionDiffEstimate]
    exposure_weeks: dict[str, tuple[float, float]]
    alpha: float


def ice_summary_table(ds: TrialDataset, alpha: float = 0.05,
                      ci_method: str = "wald",
                      test_method: str = "fisher") -> IceSummary:
    """Summary over {Any, AE, LoE, Admin}: counts, differences, exposure."""
    rows = {c: estimate_ice_diff(ds, c, alpha, ci_method, test_method)
            for c in CAUSES}
    outs = ice_outcomes(ds)
    arm = ds.treatment_vector()
    exposure = np.array([o.exposure_weeks for o in outs])
    flags = indicator_matrix(ds)
    exposure_weeks = {}
    for c in CAUSES:
        means = []
        for t in (0, 1):
            mask = flags[c] & (arm == t)
            means.append(float(np.mean(exposure[mask])) if mask.any() else math.nan)
        exposure_weeks[c] = (means[0], means[1])
    return IceSummary(rows=rows, exposure_weeks=exposure_weeks, alpha=alpha)
