"""Subject-level trial data model, delimited-file ingestion and validation.

A dataset holds one row per randomized subject: arm, baseline covariates,
scheduled intermediate outcomes, the final outcome, event times for the
three discontinuation causes (adverse event, lack of efficacy,
administrative) and the coded disposition evidence. Event times use weeks;
an absent time means the event never happened and compares as +infinity.
"""

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats


class DataError(ValueError):
    """Raised for malformed input files or inconsistent dataset construction."""


DISPOSITION_REASONS = (
    "AE",
    "death",
    "lost_to_followup",
    "protocol_violation",
    "withdrawal_by_subject",
    "physician_decision",
    "sponsor_decision",
    "completed",
)


@dataclass(frozen=True)
class Covariate:
    """One baseline covariate: continuous, or categorical with declared levels.

    The first declared level of a categorical covariate is the reference
    level for dummy encoding.
    """

    name: str
    kind: str = "continuous"
    levels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise DataError(f"covariate {self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and len(self.levels) < 2:
            raise DataError(f"covariate {self.name}: categorical needs >= 2 levels")
        if self.kind == "continuous" and self.levels:
            raise DataError(f"covariate {self.name}: continuous takes no levels")


@dataclass(frozen=True)
class Visit:
    """A scheduled intermediate visit: label, week, and value kind."""

    label: str
    week: float
    kind: str = "continuous"

    def __post_init__(self):
        if self.kind not in ("continuous", "binary"):
            raise DataError(f"visit {self.label}: unknown kind {self.kind!r}")
        if not self.week > 0:
            raise DataError(f"visit {self.label}: week must be positive")


@dataclass(frozen=True)
class CovariateSchema:
    """Declares covariates, the visit schedule, and the planned duration."""

    covariates: tuple[Covariate, ...]
    visits: tuple[Visit, ...]
    d_max: float

    def __post_init__(self):
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise DataError("covariate names must be unique")
        labels = [v.label for v in self.visits]
        if len(set(labels)) != len(labels):
            raise DataError("visit labels must be unique")
        if not self.d_max > 0:
            raise DataError("d_max must be positive")
        weeks = [v.week for v in self.visits]
        if any(b <= a for a, b in zip(weeks, weeks[1:])):
            raise DataError("visit weeks must be strictly increasing")
        if any(w >= self.d_max for w in weeks):
            raise DataError("visit weeks must be < d_max")

    @property
    def covariate_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.covariates)

    @property
    def visit_labels(self) -> tuple[str, ...]:
        return tuple(v.label for v in self.visits)

    @property
    def visit_weeks(self) -> tuple[float, ...]:
        return tuple(v.week for v in self.visits)

    def design_names(self) -> tuple[str, ...]:
        """Column names of the baseline design matrix (dummies expanded)."""
        names = []
        for c in self.covariates:
            if c.kind == "continuous":
                names.append(c.name)
            else:
                names.extend(f"{c.name}={lv}" for lv in c.levels[1:])
        return tuple(names)

    def interval_bounds(self) -> tuple[float, ...]:
        """Boundaries of the adherence intervals: 0, visit weeks, d_max."""
        return (0.0, *self.visit_weeks, self.d_max)


@dataclass(frozen=True)
class DispositionEvidence:
    """Coded evidence recorded at (or in lieu of) discontinuation.

    ``ae_flag`` marks a safety issue recorded near discontinuation;
    ``efficacy_no_improvement_flag`` marks that efficacy at discontinuation
    showed no meaningful improvement from baseline. Completers carry both
    flags false.
    """

    recorded_reason: str
    ae_flag: bool = False
    efficacy_no_improvement_flag: bool = False

    def __post_init__(self):
        if self.recorded_reason not in DISPOSITION_REASONS:
            raise DataError(f"unknown disposition reason {self.recorded_reason!r}")


@dataclass(frozen=True)
class SubjectRecord:
    """One randomized subject.

    ``x`` holds baseline covariate values in schema order (float for
    continuous, level string for categorical). ``z`` holds one value per
    scheduled visit, ``None`` when unobserved. Event times ``d_ae``,
    ``d_loe``, ``d_admin`` are weeks, ``None`` when the event never occurred.
    """

    id: str
    treatment: int
    x: tuple
    z: tuple
    y: float | None
    d_ae: float | None
    d_loe: float | None
    d_admin: float | None
    evidence: DispositionEvidence

    def __post_init__(self):
        if self.treatment not in (0, 1):
            raise DataError(f"subject {self.id}: treatment must be 0 or 1")

    def first_event_time(self) -> float:
        """Earliest of the three event times, +inf when none occurred."""
        return min(_time_or_inf(self.d_ae), _time_or_inf(self.d_loe),
                   _time_or_inf(self.d_admin))

    def adherent(self, d_max: float) -> bool:
        return self.first_event_time() > d_max


def _time_or_inf(t: float | None) -> float:
    return math.inf if t is None else t


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrialDataset:
    """An immutable two-arm dataset with cached arm/adherer counts."""

    schema: CovariateSchema
    subjects: tuple[SubjectRecord, ...]

    def __post_init__(self):
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise DataError(f"duplicate subject id {dup!r}")
        n_visits = len(self.schema.visits)
        for s in self.subjects:
            if len(s.x) != len(self.schema.covariates):
                raise DataError(f"subject {s.id}: covariate count mismatch")
            if len(s.z) != n_visits:
                raise DataError(f"subject {s.id}: visit count mismatch")
        if self.n1 == 0 or self.n0 == 0:
            raise DataError("both treatment arms must be nonempty")

    @cached_property
    def _arm(self) -> np.ndarray:
        return _frozen(np.array([s.treatment for s in self.subjects], dtype=int))

    @cached_property
    def _adherent(self) -> np.ndarray:
        d_max = self.schema.d_max
        return _frozen(np.array([s.adherent(d_max) for s in self.subjects],
                                dtype=bool))

    @property
    def n1(self) -> int:
        return int(np.sum(self._arm == 1))

    @property
    def n0(self) -> int:
        return int(np.sum(self._arm == 0))

    @property
    def n11(self) -> int:
        """Adherer count in arm 1."""
        return int(np.sum((self._arm == 1) & self._adherent))

    @property
    def n01(self) -> int:
        """Adherer count in arm 0."""
        return int(np.sum((self._arm == 0) & self._adherent))

    def treatment_vector(self) -> np.ndarray:
        """Arm per subject; cached and read-only."""
        return self._arm

    def adherence_vector(self) -> np.ndarray:
        """Adherence indicator per subject; cached and read-only."""
        return self._adherent

    @cached_property
    def _design(self) -> np.ndarray:
        cols = []
        for j, c in enumerate(self.schema.covariates):
            vals = [s.x[j] for s in self.subjects]
            if c.kind == "continuous":
                cols.append(np.asarray(vals, dtype=float))
            else:
                for lv in c.levels[1:]:
                    cols.append(np.array([v == lv for v in vals], dtype=float))
        if not cols:
            return _frozen(np.empty((len(self.subjects), 0)))
        return _frozen(np.column_stack(cols))

    def covariate_matrix(self) -> np.ndarray:
        """Baseline design matrix, categoricals dummy-encoded; read-only."""
        return self._design

    @cached_property
    def _z(self) -> np.ndarray:
        n_visits = len(self.schema.visits)
        out = np.full((len(self.subjects), n_visits), np.nan)
        for i, s in enumerate(self.subjects):
            for k in range(n_visits):
                if s.z[k] is not None:
                    out[i, k] = s.z[k]
        return _frozen(out)

    def z_matrix(self) -> np.ndarray:
        """Per-visit intermediate values, NaN where unobserved; read-only."""
        return self._z

    @cached_property
    def _y(self) -> np.ndarray:
        return _frozen(np.array([np.nan if s.y is None else s.y
                                 for s in self.subjects]))

    def y_vector(self) -> np.ndarray:
        """Final outcomes, NaN where unobserved; read-only."""
        return self._y

    @cached_property
    def _first_times(self) -> np.ndarray:
        return _frozen(np.array([s.first_event_time() for s in self.subjects]))

    def first_event_times(self) -> np.ndarray:
        return self._first_times

    def covariate_values(self, name: str) -> np.ndarray:
        """Raw values of one declared covariate (floats or level strings)."""
        j = self.schema.covariate_names.index(name)
        vals = [s.x[j] for s in self.subjects]
        if self.schema.covariates[j].kind == "continuous":
            return np.asarray(vals, dtype=float)
        return np.asarray(vals, dtype=object)

    def replace_outcomes(self, y: np.ndarray) -> "TrialDataset":
        """New dataset with the final outcome replaced subject-by-subject.

        NaN entries become absent outcomes. Used for the location/scale
        equivariance checks; everything else is carried over unchanged.
        """
        subjects = tuple(
            _replace_y(s, None if np.isnan(v) else float(v))
            for s, v in zip(self.subjects, y)
        )
        return TrialDataset(self.schema, subjects)


def _replace_y(s: SubjectRecord, y: float | None) -> SubjectRecord:
    return SubjectRecord(id=s.id, treatment=s.treatment, x=s.x, z=s.z, y=y,
                         d_ae=s.d_ae, d_loe=s.d_loe, d_admin=s.d_admin,
                         evidence=s.evidence)


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------

def expected_columns(schema: CovariateSchema) -> list[str]:
    """Header of the delimited subject file for this schema."""
    cols = ["id", "treatment"]
    cols.extend(schema.covariate_names)
    cols.extend(f"z_{lbl}" for lbl in schema.visit_labels)
    cols.extend(["y", "d_ae", "d_loe", "d_admin", "reason", "ae_flag", "loe_flag"])
    return cols


def _parse_float(cell: str, row: int, col: str) -> float | None:
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"row {row}, column {col}: cannot parse {cell!r} as number") from None


def _parse_flag(cell: str, row: int, col: str) -> bool:
    if cell in ("1", "true", "True"):
        return True
    if cell in ("0", "", "false", "False"):
        return False
    raise DataError(f"row {row}, column {col}: cannot parse {cell!r} as flag")


def load_dataset(path, schema: CovariateSchema) -> TrialDataset:
    """Read a comma-delimited subject file against the declared schema.

    The header row must match :func:`expected_columns` exactly. Empty cells
    are absent values. Raises :class:`DataError` with the offending row and
    column on any malformed cell, unknown categorical level or duplicate id.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        expected = expected_columns(schema)
        if header != expected:
            raise DataError(
                f"{path}: header mismatch: expected {expected}, got {header}")
        subjects = []
        seen: set[str] = set()
        n_cov = len(schema.covariates)
        n_vis = len(schema.visits)
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DataError(f"row {rownum}: expected {len(expected)} cells, got {len(row)}")
            cells = iter(row)
            sid = next(cells)
            if sid in seen:
                raise DataError(f"row {rownum}: duplicate subject id {sid!r}")
            seen.add(sid)
            treat_cell = next(cells)
            if treat_cell not in ("0", "1"):
                raise DataError(f"row {rownum}, column treatment: must be 0 or 1, got {treat_cell!r}")
            x = []
            for c in schema.covariates:
                cell = next(cells)
                if c.kind == "continuous":
                    val = _parse_float(cell, rownum, c.name)
                    if val is None:
                        raise DataError(f"row {rownum}, column {c.name}: baseline value missing")
                    x.append(val)
                else:
                    if cell not in c.levels:
                        raise DataError(
                            f"row {rownum}, column {c.name}: unknown level {cell!r}")
                    x.append(cell)
            z = [_parse_float(next(cells), rownum, f"z_{schema.visits[k].label}")
                 for k in range(n_vis)]
            y = _parse_float(next(cells), rownum, "y")
            d_ae = _parse_float(next(cells), rownum, "d_ae")
            d_loe = _parse_float(next(cells), rownum, "d_loe")
            d_admin = _parse_float(next(cells), rownum, "d_admin")
            reason = next(cells)
            if reason not in DISPOSITION_REASONS:
                raise DataError(f"row {rownum}, column reason: unknown value {reason!r}")
            ev = DispositionEvidence(
                recorded_reason=reason,
                ae_flag=_parse_flag(next(cells), rownum, "ae_flag"),
                efficacy_no_improvement_flag=_parse_flag(next(cells), rownum, "loe_flag"),
            )
            subjects.append(SubjectRecord(
                id=sid, treatment=int(treat_cell), x=tuple(x), z=tuple(z), y=y,
                d_ae=d_ae, d_loe=d_loe, d_admin=d_admin, evidence=ev))
    return TrialDataset(schema=schema, subjects=tuple(subjects))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_dataset(ds: TrialDataset, path) -> None:
    """Write a dataset back to the delimited format read by load_dataset.

    Floats are written with full repr precision so load(write(ds)) == ds.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(expected_columns(ds.schema))
        for s in ds.subjects:
            row = [s.id, s.treatment]
            row.extend(_fmt(v) for v in s.x)
            row.extend(_fmt(v) for v in s.z)
            row.append(_fmt(s.y))
            row.extend(_fmt(v) for v in (s.d_ae, s.d_loe, s.d_admin))
            row.append(s.evidence.recorded_reason)
            row.append(_fmt(s.evidence.ae_flag))
            row.append(_fmt(s.evidence.efficacy_no_improvement_flag))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    subject_id: str
    rule: str
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_dataset(ds: TrialDataset) -> ValidationReport:
    """Check structural invariants; violations are data, not exceptions.

    Rules checked per subject:
      nonpositive-event-time   finite event time <= 0
      intermediate-after-ice   z value present at a visit at/after first event
      outcome-after-ice        y present but an event happened before d_max
      completed-with-flags     reason 'completed' with an evidence flag set
    """
    d_max = ds.schema.d_max
    weeks = ds.schema.visit_weeks
    out: list[Violation] = []
    for s in ds.subjects:
        for name, t in (("d_ae", s.d_ae), ("d_loe", s.d_loe), ("d_admin", s.d_admin)):
            if t is not None and t <= 0:
                out.append(Violation(s.id, "nonpositive-event-time", name))
        first = s.first_event_time()
        for k, w in enumerate(weeks):
            if s.z[k] is not None and w >= first:
                out.append(Violation(
                    s.id, "intermediate-after-ice",
                    f"visit {ds.schema.visits[k].label} at week {w:g}"))
        if s.y is not None and first < d_max:
            out.append(Violation(s.id, "outcome-after-ice",
                                 f"first event at week {first:g}"))
        ev = s.evidence
        if ev.recorded_reason == "completed" and (ev.ae_flag or ev.efficacy_no_improvement_flag):
            out.append(Violation(s.id, "completed-with-flags"))
    return ValidationReport(tuple(out))


# ---------------------------------------------------------------------------
# Baseline balance tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    kind: str
    # continuous: (mean, sd, n) per group; categorical: {level: count} per group
    group_a: object
    group_b: object
    p_value: float


@dataclass(frozen=True)
class BalanceTable:
    grouping: str
    label_a: str
    label_b: str
    rows: tuple[BalanceRow, ...]


def welch_t_test(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided unequal-variance t-test p-value.

    Degenerate zero-variance groups: p = 1 when the means coincide,
    p = 0 when they differ (the groups are perfectly separated).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise DataError("welch test needs >= 2 observations per group")
    va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
    diff = np.mean(a) - np.mean(b)
    se2 = va / na + vb / nb
    if se2 == 0.0:
        return 1.0 if diff == 0.0 else 0.0
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return float(2.0 * stats.t.sf(abs(t), df))


def _chi2_p(counts_a: dict, counts_b: dict, levels) -> float:
    table = np.array([[counts_a.get(lv, 0) for lv in levels],
                      [counts_b.get(lv, 0) for lv in levels]], dtype=float)
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2 or table.sum(axis=1).min() == 0:
        return 1.0
    return float(stats.chi2_contingency(table, correction=False)[1])


def baseline_balance_table(ds: TrialDataset, grouping: str) -> BalanceTable:
    """Compare baseline covariates between two descriptive groups.

    grouping 'adherers-vs-nonadherers' contrasts adherers against subjects
    with any intercurrent event, pooled over arms; 'arm-within-adherers'
    contrasts arms among the adherers. Continuous covariates use the
    unequal-variance t-test, categorical ones a chi-square test; the
    p-values are descriptive, not inferential.
    """
    adh = ds.adherence_vector()
    arm = ds.treatment_vector()
    if grouping == "adherers-vs-nonadherers":
        mask_a, mask_b = adh, ~adh
        label_a, label_b = "adherers", "non-adherers"
    elif grouping == "arm-within-adherers":
        mask_a, mask_b = adh & (arm == 1), adh & (arm == 0)
        label_a, label_b = "arm1 adherers", "arm0 adherers"
    else:
        raise DataError(f"unknown grouping {grouping!r}")
    if not mask_a.any() or not mask_b.any():
        raise DataError(f"grouping {grouping!r} yields an empty group")

    rows = []
    for c in ds.schema.covariates:
        vals = ds.covariate_values(c.name)
        if c.kind == "continuous":
            a, b = vals[mask_a], vals[mask_b]
            summ_a = (float(np.mean(a)), float(np.std(a, ddof=1)) if len(a) > 1 else 0.0, len(a))
            summ_b = (float(np.mean(b)), float(np.std(b, ddof=1)) if len(b) > 1 else 0.0, len(b))
            p = welch_t_test(a, b)
            rows.append(BalanceRow(c.name, c.kind, summ_a, summ_b, p))
        else:
            ca = {lv: int(np.sum(vals[mask_a] == lv)) for lv in c.levels}
            cb = {lv: int(np.sum(vals[mask_b] == lv)) for lv in c.levels}
            p = _chi2_p(ca, cb, c.levels)
            rows.append(BalanceRow(c.name, c.kind, ca, cb, p))
    return BalanceTable(grouping, label_a, label_b, tuple(rows))
