import math

import numpy as np
import pytest
from scipy import stats

from tripartite.data import (Covariate, CovariateSchema, DataError,
                             DispositionEvidence, Visit,
                             baseline_balance_table, load_dataset,
                             validate_dataset, welch_t_test, write_dataset)
from tripartite.simulate import generate_trial, hba1c_like_spec

from conftest import make_dataset, make_schema, subject


# ---------------------------------------------------------------------------
# Schema and record invariants
# ---------------------------------------------------------------------------

def test_schema_rejects_duplicate_names():
    with pytest.raises(DataError):
        CovariateSchema((Covariate("a"), Covariate("a")), (), 52.0)


def test_schema_rejects_nonincreasing_visits():
    with pytest.raises(DataError):
        make_schema(visits=(("v1", 12.0), ("v2", 12.0)))
    with pytest.raises(DataError):
        make_schema(visits=(("v1", 60.0),), d_max=52.0)


def test_treatment_must_be_binary():
    with pytest.raises(DataError):
        subject("s1", 2, x=(0.0,))


def test_both_arms_required():
    schema = make_schema()
    with pytest.raises(DataError):
        make_dataset(schema, [subject("s1", 1, x=(0.0,), y=1.0)])


def test_counts():
    schema = make_schema()
    ds = make_dataset(schema, [
        subject("s1", 1, x=(0.0,), y=1.0),
        subject("s2", 1, x=(0.0,), d_ae=10.0),
        subject("s3", 0, x=(0.0,), y=0.0),
    ])
    assert (ds.n1, ds.n0, ds.n11, ds.n01) == (2, 1, 1, 1)
    assert ds.n1 + ds.n0 == len(ds.subjects)


# ---------------------------------------------------------------------------
# Loading and round-trips
# ---------------------------------------------------------------------------

def test_load_two_row_file(tmp_path):
    schema = make_schema()
    path = tmp_path / "trial.csv"
    path.write_text(
        "id,treatment,x0,y,d_ae,d_loe,d_admin,reason,ae_flag,loe_flag\n"
        "s1,0,1.5,7.0,,,,completed,0,0\n"
        "s2,1,-0.5,6.5,,,,completed,0,0\n")
    ds = load_dataset(path, schema)
    assert (ds.n1, ds.n0, ds.n11, ds.n01) == (1, 1, 1, 1)
    assert ds.subjects[0].y == 7.0
    assert ds.subjects[1].x == (-0.5,)


def test_duplicate_id_reported(tmp_path):
    schema = make_schema()
    path = tmp_path / "trial.csv"
    path.write_text(
        "id,treatment,x0,y,d_ae,d_loe,d_admin,reason,ae_flag,loe_flag\n"
        "s1,0,1.0,7.0,,,,completed,0,0\n"
        "s1,1,2.0,6.5,,,,completed,0,0\n")
    with pytest.raises(DataError, match="s1"):
        load_dataset(path, schema)


def test_malformed_cell_reports_row_and_column(tmp_path):
    schema = make_schema()
    path = tmp_path / "trial.csv"
    path.write_text(
        "id,treatment,x0,y,d_ae,d_loe,d_admin,reason,ae_flag,loe_flag\n"
        "s1,0,oops,7.0,,,,completed,0,0\n")
    with pytest.raises(DataError, match="row 2.*x0"):
        load_dataset(path, schema)


def test_unknown_categorical_level(tmp_path):
    schema = make_schema(n_cov=0, categorical=True)
    path = tmp_path / "trial.csv"
    path.write_text(
        "id,treatment,region,y,d_ae,d_loe,d_admin,reason,ae_flag,loe_flag\n"
        "s1,0,Mars,7.0,,,,completed,0,0\n")
    with pytest.raises(DataError, match="Mars"):
        load_dataset(path, schema)


def test_header_mismatch(tmp_path):
    schema = make_schema()
    path = tmp_path / "trial.csv"
    path.write_text("id,treatment,wrong\n")
    with pytest.raises(DataError, match="header"):
        load_dataset(path, schema)


def test_simulated_roundtrip_field_for_field(tmp_path):
    # full-scale generated file: write then load reproduces every field
    ds, _ = generate_trial(hba1c_like_spec(), seed=11)
    assert len(ds.subjects) == 1112
    path = tmp_path / "sim.csv"
    write_dataset(ds, path)
    back = load_dataset(path, ds.schema)
    assert len(back.subjects) == len(ds.subjects)
    for a, b in zip(ds.subjects, back.subjects):
        assert a == b
    assert (back.n1, back.n0, back.n11, back.n01) == (ds.n1, ds.n0, ds.n11, ds.n01)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def test_outcome_after_ice_violation():
    schema = make_schema()
    ds = make_dataset(schema, [
        subject("s1", 1, x=(0.0,), y=7.0, d_ae=10.0),
        subject("s2", 0, x=(0.0,), y=6.0),
    ])
    report = validate_dataset(ds)
    assert [(v.subject_id, v.rule) for v in report.violations] == \
        [("s1", "outcome-after-ice")]


def test_intermediate_after_ice_violation():
    schema = make_schema(visits=(("w26", 26.0),))
    ds = make_dataset(schema, [
        subject("s1", 1, x=(0.0,), z=(5.5,), d_loe=20.0),
        subject("s2", 0, x=(0.0,), z=(6.0,), y=6.0),
    ])
    rules = {v.rule for v in validate_dataset(ds).violations}
    assert rules == {"intermediate-after-ice"}


def test_nonpositive_event_time_and_completed_flags():
    schema = make_schema()
    ds = make_dataset(schema, [
        subject("s1", 1, x=(0.0,), d_ae=-1.0),
        subject("s2", 0, x=(0.0,), y=1.0, reason="completed", ae_flag=True),
    ])
    rules = {(v.subject_id, v.rule) for v in validate_dataset(ds).violations}
    assert ("s1", "nonpositive-event-time") in rules
    assert ("s2", "completed-with-flags") in rules


def test_validate_clean_simulated_dataset(sim_dataset):
    ds, _ = sim_dataset
    assert validate_dataset(ds).ok


def test_validate_is_pure(sim_dataset):
    ds, _ = sim_dataset
    first = validate_dataset(ds)
    second = validate_dataset(ds)
    assert first == second


# ---------------------------------------------------------------------------
# Balance tables
# ---------------------------------------------------------------------------

def _balance_ds(values_a, values_b):
    # group A = adherers, group B = subjects with an early event
    schema = make_schema()
    rows = []
    for j, v in enumerate(values_a):
        rows.append(subject(f"a{j}", j % 2, x=(float(v),), y=1.0))
    for j, v in enumerate(values_b):
        rows.append(subject(f"b{j}", j % 2, x=(float(v),), d_admin=10.0))
    return make_dataset(schema, rows)


def test_balance_identical_groups_p_one():
    ds = _balance_ds([40.0, 41.0, 42.0], [40.0, 41.0, 42.0])
    table = baseline_balance_table(ds, "adherers-vs-nonadherers")
    assert abs(table.rows[0].p_value - 1.0) < 1e-9


def test_balance_separated_groups_small_p():
    rng = np.random.default_rng(1)
    a = 40.0 + 0.5 * rng.standard_normal(30)
    b = 50.0 + 0.5 * rng.standard_normal(30)
    ds = _balance_ds(a, b)
    table = baseline_balance_table(ds, "adherers-vs-nonadherers")
    assert table.rows[0].p_value < 0.001


def test_welch_p_matches_reference_implementation():
    # oracle: scipy's unequal-variance t-test on simulated draws
    rng = np.random.default_rng(7)
    a = rng.normal(0.0, 1.0, 40)
    b = rng.normal(0.3, 1.6, 25)
    ours = welch_t_test(a, b)
    ref = stats.ttest_ind(a, b, equal_var=False).pvalue
    assert ours == pytest.approx(ref, abs=1e-8)


def test_balance_on_simulated_dataset(sim_dataset):
    ds, _ = sim_dataset
    table = baseline_balance_table(ds, "adherers-vs-nonadherers")
    assert len(table.rows) == len(ds.schema.covariates)
    assert all(0.0 <= r.p_value <= 1.0 for r in table.rows)
    within = baseline_balance_table(ds, "arm-within-adherers")
    n_a = within.rows[0].group_a[2]
    n_b = within.rows[0].group_b[2]
    assert (n_a, n_b) == (ds.n11, ds.n01)


def test_balance_categorical_chi_square():
    schema = make_schema(n_cov=0, categorical=True)
    rows = []
    levels_a = ["EU"] * 12 + ["NA"] * 4
    levels_b = ["EU"] * 4 + ["NA"] * 12
    for j, lv in enumerate(levels_a):
        rows.append(subject(f"a{j}", j % 2, x=(lv,), y=1.0))
    for j, lv in enumerate(levels_b):
        rows.append(subject(f"b{j}", j % 2, x=(lv,), d_admin=5.0))
    ds = make_dataset(schema, rows)
    table = baseline_balance_table(ds, "adherers-vs-nonadherers")
    row = table.rows[0]
    # oracle: direct 2x2 chi-square without continuity correction
    obs = np.array([[12, 4], [4, 12]], dtype=float)
    expected = obs.sum(1)[:, None] * obs.sum(0)[None, :] / obs.sum()
    chi2 = ((obs - expected) ** 2 / expected).sum()
    p_ref = stats.chi2.sf(chi2, 1)
    assert row.p_value == pytest.approx(p_ref, abs=1e-10)


def test_balance_empty_group_errors():
    schema = make_schema()
    ds = make_dataset(schema, [subject("s1", 1, x=(0.0,), y=1.0),
                               subject("s2", 0, x=(0.0,), y=1.0)])
    with pytest.raises(DataError):
        baseline_balance_table(ds, "adherers-vs-nonadherers")


def test_evidence_reason_checked():
    with pytest.raises(DataError):
        DispositionEvidence("bad_reason")
