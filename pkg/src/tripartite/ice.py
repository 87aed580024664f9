"""Adherence and intercurrent-event indicators, cause classification, curves.

The indicator rules: a subject is adherent when all three event times
exceed the planned duration. The AE indicator fires when the AE time is
within the planned duration and no other event strictly precedes it; ties
between AE and LoE set both indicators. The administrative indicator loses
every tie, it is the residual category.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import DispositionEvidence, SubjectRecord, TrialDataset, _time_or_inf

CAUSES = ("AE", "LoE", "Admin", "Any")


@dataclass(frozen=True)
class IceOutcome:
    """Derived adherence/ICE indicators for one subject."""

    a: int
    i_ae: int
    i_loe: int
    i_admin: int
    first_ice_time: float | None
    exposure_weeks: float

    def cause_set(self) -> frozenset:
        causes = []
        if self.i_ae:
            causes.append("AE")
        if self.i_loe:
            causes.append("LoE")
        if self.i_admin:
            causes.append("Admin")
        return frozenset(causes)


def derive_ice_outcome(rec: SubjectRecord, d_max: float) -> IceOutcome:
    """Compute the adherence indicator and per-cause first-ICE indicators."""
    t_ae = _time_or_inf(rec.d_ae)
    t_loe = _time_or_inf(rec.d_loe)
    t_admin = _time_or_inf(rec.d_admin)
    i_ae = int(t_ae <= d_max and t_ae <= t_loe and t_ae <= t_admin)
    i_loe = int(t_loe <= d_max and t_loe <= t_ae and t_loe <= t_admin)
    i_admin = int(t_admin <= d_max and t_admin < t_ae and t_admin < t_loe)
    a = int(t_ae > d_max and t_loe > d_max and t_admin > d_max)
    first = min(t_ae, t_loe, t_admin)
    if a:
        return IceOutcome(1, 0, 0, 0, None, d_max)
    return IceOutcome(a, i_ae, i_loe, i_admin, first, min(first, d_max))


def ice_outcomes(ds: TrialDataset) -> tuple[IceOutcome, ...]:
    d_max = ds.schema.d_max
    return tuple(derive_ice_outcome(s, d_max) for s in ds.subjects)


def indicator_matrix(ds: TrialDataset) -> dict[str, np.ndarray]:
    """Boolean arrays per cause (plus 'Any') over subjects in dataset order."""
    outs = ice_outcomes(ds)
    return {
        "AE": np.array([o.i_ae == 1 for o in outs]),
        "LoE": np.array([o.i_loe == 1 for o in outs]),
        "Admin": np.array([o.i_admin == 1 for o in outs]),
        "Any": np.array([o.a == 0 for o in outs]),
    }


def classify_disposition(ev: DispositionEvidence, baseline_eff: float,
                         eff_at_dc: float, improvement_threshold: float = 0.0) -> frozenset:
    """Classify a discontinuation into causes from coded evidence.

    Conservative rules, applied in order:
      * AE when the recorded reason is AE or a safety flag was recorded;
      * LoE when the no-improvement flag is set, or the efficacy value at
        discontinuation dropped by less than ``improvement_threshold`` from
        baseline (lower values are better);
      * Admin when neither of the above qualifies.

    The result is never empty; AE and LoE can co-occur.
    """
    if ev.recorded_reason == "completed":
        raise ValueError("classify_disposition is only defined for discontinuations")
    causes = set()
    if ev.recorded_reason == "AE" or ev.ae_flag:
        causes.add("AE")
    if ev.efficacy_no_improvement_flag or (eff_at_dc - baseline_eff) > -improvement_threshold:
        causes.add("LoE")
    if not causes:
        causes.add("Admin")
    return frozenset(causes)


@dataclass(frozen=True)
class CifCurve:
    """Empirical cumulative incidence of the first ICE of one cause.

    ``points`` maps arm -> ordered (week, cumulative proportion) pairs.
    Every subject is followed to the first ICE or the planned duration, so
    the plain empirical proportion is the estimator.
    """

    cause: str
    points: dict[int, tuple[tuple[float, float], ...]]

    def value_at(self, arm: int, t: float) -> float:
        val = 0.0
        for week, prop in self.points[arm]:
            if week <= t:
                val = prop
            else:
                break
        return val


def cumulative_incidence(ds: TrialDataset, cause: str) -> CifCurve:
    """Per-arm cumulative incidence curve of the first ICE with this cause.

    Evaluated at every distinct first-ICE time in the arm plus the planned
    duration. Ties feeding two causes appear on both single-cause curves but
    only once on the 'Any' curve.
    """
    if cause not in CAUSES:
        raise ValueError(f"unknown cause {cause!r}")
    outs = ice_outcomes(ds)
    arm = ds.treatment_vector()
    flags = indicator_matrix(ds)[cause]
    d_max = ds.schema.d_max
    points: dict[int, tuple[tuple[float, float], ...]] = {}
    for t in (0, 1):
        mask = arm == t
        n = int(mask.sum())
        times = sorted({o.first_ice_time for o, m in zip(outs, mask)
                        if m and o.first_ice_time is not None})
        event_times = np.array([
            o.first_ice_time if (m and f and o.first_ice_time is not None) else math.inf
            for o, m, f in zip(outs, mask, flags)])
        pts = [(0.0, 0.0)]
        for w in times:
            pts.append((w, float(np.sum(event_times <= w)) / n))
        if not times or times[-1] < d_max:
            pts.append((d_max, float(np.sum(event_times <= d_max)) / n))
        points[t] = tuple(pts)
    return CifCurve(cause=cause, points=points)


@dataclass(frozen=True)
class LoeTimingHistogram:
    """Counts of first ICEs due to LoE by time bucket, per arm."""

    edges: tuple[float, ...]
    counts: dict[int, tuple[int, ...]]


def loe_timing_histogram(ds: TrialDataset, interval_weeks: float) -> LoeTimingHistogram:
    """Bucket the first-ICE-due-to-LoE times into [0,w), [w,2w), ... buckets.

    The final bucket is right-closed at the planned duration so an event at
    exactly d_max is counted.
    """
    if not interval_weeks > 0:
        raise ValueError("interval_weeks must be positive")
    d_max = ds.schema.d_max
    n_buckets = int(math.ceil(d_max / interval_weeks))
    edges = tuple(min(i * interval_weeks, d_max) for i in range(n_buckets + 1))
    outs = ice_outcomes(ds)
    arm = ds.treatment_vector()
    counts = {}
    for t in (0, 1):
        c = [0] * n_buckets
        for o, a in zip(outs, arm):
            if a != t or not o.i_loe:
                continue
            idx = min(int(o.first_ice_time // interval_weeks), n_buckets - 1)
            c[idx] += 1
        counts[t] = tuple(c)
    return LoeTimingHistogram(edges=edges, counts=counts)
