import math

import numpy as np
import pytest
from scipy.special import expit

from tripartite.ace import (AdherenceModel, BatteryConfig, ace_s_plus_plus,
                            ace_s_star_plus, counterfactual_quantities,
                            estimate_p_plus_plus, fit_adherence_model,
                            hypothetical_mar, j2r_estimate, naive_adherers,
                            run_battery)
from tripartite.regression import (FitError, LinearModel, LogisticModel,
                                   OutcomeChain, fit_outcome_chain)
from tripartite.simulate import (CovariateDist, SimulationSpec, VisitModel,
                                 generate_trial, hba1c_like_spec,
                                 oracle_truth, strong_selection_spec)

from conftest import make_dataset, make_schema, subject


def _fit_all(ds, mc_draws=200, mc_mode="mc", seed=0):
    chains = (fit_outcome_chain(ds, 0), fit_outcome_chain(ds, 1))
    adh = (fit_adherence_model(ds, 0), fit_adherence_model(ds, 1))
    cq = counterfactual_quantities(ds, chains, adh, mc_draws=mc_draws,
                                   seed=seed, mc_mode=mc_mode)
    return chains, adh, cq


# ---------------------------------------------------------------------------
# Adherence model
# ---------------------------------------------------------------------------

def test_all_adherent_degenerates_to_one(no_ice_linear_ds):
    model = fit_adherence_model(no_ice_linear_ds, 1)
    assert all(m == 1.0 for m in model.models)
    X = no_ice_linear_ds.covariate_matrix()
    Z = no_ice_linear_ds.z_matrix()
    assert np.all(model.survival_product(X, Z) == 1.0)


def test_two_interval_constant_rates_product():
    # interval survival 0.9 then 0.8 with no covariate effect: product 0.72.
    # z is balanced against the outcome so the fitted z slope is exactly zero.
    schema = make_schema(n_cov=0, visits=(("w26", 26.0),))
    rows = []
    sid = 0
    for t in (0, 1):
        for j in range(10):                      # fail interval 1
            rows.append(subject(f"s{sid}", t, z=(None,), d_admin=13.0)); sid += 1
        for j in range(18):                      # fail interval 2
            rows.append(subject(f"s{sid}", t, z=(float(j % 2),), d_admin=39.0)); sid += 1
        for j in range(72):                      # adhere
            rows.append(subject(f"s{sid}", t, z=(float(j % 2),), y=1.0)); sid += 1
    ds = make_dataset(schema, rows)
    model = fit_adherence_model(ds, 0)
    X = ds.covariate_matrix()
    prob = model.interval_probability(0, X, [])
    assert prob[0] == pytest.approx(0.9, abs=1e-6)
    for z_val in (0.0, 1.0):
        prob2 = model.interval_probability(1, X[:1], [np.array([z_val])])
        assert prob2[0] == pytest.approx(0.8, abs=1e-6)
    full = model.survival_product(X[:1], np.array([[0.0]]))
    assert full[0] == pytest.approx(0.72, abs=1e-6)


def test_interval_coefficients_recovered_from_simulation():
    # dedicated centered spec so every coefficient is well identified
    truth0 = ((-2.5, 0.4), (-2.2, 0.3, 0.5))
    spec = SimulationSpec(
        n0=4000, n1=4000,
        covariates=(CovariateDist("x"),),
        visits=(VisitModel("w20", 20.0, "continuous",
                           coef=((0.0, 0.8), (0.0, 0.8)), sd=(1.0, 1.0)),),
        y_coef=((0.0, 0.5, 0.5), (0.0, 0.5, 0.5)), y_sd=(0.5, 0.5),
        ice_coef=((truth0[0], truth0[0]), (truth0[1], truth0[1])),
        admin_rate=(0.01, 0.01),
        cause_split=(((0.5, 0.3, 0.2),) * 2),
        d_max=40.0)
    ds, _ = generate_trial(spec, seed=33)
    model = fit_adherence_model(ds, 0)
    for k, truth in enumerate(truth0):
        fitted = np.asarray(model.models[k].coefficients)
        assert np.max(np.abs(fitted - (-np.asarray(truth)))) < 0.1


def test_no_at_risk_interval_errors():
    schema = make_schema(n_cov=0, visits=(("w26", 26.0),))
    rows = [subject("s1", 1, z=(None,), d_ae=5.0),
            subject("s2", 1, z=(None,), d_ae=6.0),
            subject("s3", 0, z=(None,), d_ae=7.0),
            subject("s4", 0, z=(None,), d_ae=8.0)]
    ds = make_dataset(schema, rows)
    with pytest.raises(FitError):
        fit_adherence_model(ds, 1)


# ---------------------------------------------------------------------------
# Counterfactual quantities
# ---------------------------------------------------------------------------

def _hand_models():
    """Hand-built chain and adherence models over one covariate, one visit."""
    chain = OutcomeChain(
        arm=0,
        z_models=(LinearModel((1.0, 0.5), residual_sd=0.8, names=("x",)),),
        y_model=LinearModel((2.0, 0.3, 0.7), residual_sd=0.5, names=("x", "z")),
        visit_kinds=("continuous",))
    adh = AdherenceModel(
        arm=0,
        models=(LogisticModel((2.0, 0.2), True, 5, ("x",)),
                LogisticModel((1.5, 0.1, 0.15), True, 5, ("x", "z")),),
        bounds=(0.0, 12.0, 52.0), names=("x", "w12"))
    return chain, adh


def _hand_ds():
    schema = make_schema(n_cov=1, visits=(("w12", 12.0),))
    return make_dataset(schema, [
        subject("s1", 0, x=(0.4,), z=(1.3,), y=2.5),
        subject("s2", 1, x=(-1.0,), z=(0.2,), y=1.8),
    ])


def test_h_matches_independent_monte_carlo_oracle():
    chain, adh = _hand_models()
    ds = _hand_ds()
    cq = counterfactual_quantities(ds, (chain, chain), (adh, adh),
                                   mc_draws=100_000, seed=12)
    # independent high-precision oracle, separate draw path and seed
    rng = np.random.default_rng(987_654)
    x = 0.4
    z = (1.0 + 0.5 * x) + 0.8 * rng.standard_normal(1_000_000)
    p1 = expit(2.0 + 0.2 * x)
    p2 = expit(1.5 + 0.1 * x + 0.15 * z)
    h_ref = float(np.mean(p1 * p2))
    varphi_ref = float(np.mean(p1 * p2 * (2.0 + 0.3 * x + 0.7 * z)))
    assert cq.h[0][0] == pytest.approx(h_ref, abs=0.005)
    assert cq.varphi[0][0] == pytest.approx(varphi_ref, abs=0.02)
    # phi is draw-free composition
    assert cq.phi[0][0] == pytest.approx(2.0 + 0.3 * x + 0.7 * (1.0 + 0.5 * x),
                                         abs=1e-12)


def test_constant_adherence_one_makes_varphi_equal_phi():
    chain, _ = _hand_models()
    adh = AdherenceModel(arm=0, models=(1.0, 1.0), bounds=(0.0, 12.0, 52.0),
                         names=("x", "w12"))
    ds = _hand_ds()
    cq = counterfactual_quantities(ds, (chain, chain), (adh, adh),
                                   mc_draws=500, seed=3)
    assert np.all(cq.h[0] == 1.0)
    assert cq.varphi[0] == pytest.approx(cq.phi[0], abs=0.05)


def test_zero_residual_sd_collapses_to_plugin():
    chain, adh = _hand_models()
    chain0 = OutcomeChain(
        arm=0,
        z_models=(LinearModel((1.0, 0.5), residual_sd=0.0, names=("x",)),),
        y_model=chain.y_model, visit_kinds=("continuous",))
    ds = _hand_ds()
    mc = counterfactual_quantities(ds, (chain0, chain0), (adh, adh),
                                   mc_draws=64, seed=5)
    plug = counterfactual_quantities(ds, (chain0, chain0), (adh, adh),
                                     mc_mode="plugin")
    assert mc.h[0] == pytest.approx(plug.h[0], abs=1e-12)
    assert mc.varphi[0] == pytest.approx(plug.varphi[0], abs=1e-12)


def test_counterfactuals_deterministic_given_seed():
    chain, adh = _hand_models()
    ds = _hand_ds()
    a = counterfactual_quantities(ds, (chain, chain), (adh, adh),
                                  mc_draws=200, seed=42)
    b = counterfactual_quantities(ds, (chain, chain), (adh, adh),
                                  mc_draws=200, seed=42)
    assert np.array_equal(a.h[0], b.h[0])
    assert np.array_equal(a.varphi[1], b.varphi[1])


# ---------------------------------------------------------------------------
# Estimator reductions on clean data
# ---------------------------------------------------------------------------

def test_no_ice_noiseless_linear_effect_is_exact(no_ice_linear_ds):
    ds = no_ice_linear_ds
    chains, adh, cq = _fit_all(ds, mc_draws=50, seed=1)
    assert ace_s_star_plus(ds, cq).diff == pytest.approx(1.0, abs=1e-8)
    assert ace_s_plus_plus(ds, cq).diff == pytest.approx(1.0, abs=1e-8)
    assert naive_adherers(ds).diff == pytest.approx(1.0, abs=1e-8)
    assert hypothetical_mar(ds, chains).diff == pytest.approx(1.0, abs=1e-8)


def test_s_plus_plus_reduces_to_phi_average_when_h_is_one(no_ice_linear_ds):
    ds = no_ice_linear_ds
    chains, adh, cq = _fit_all(ds, mc_draws=50, seed=1)
    assert np.all(cq.h[0] == 1.0) and np.all(cq.h[1] == 1.0)
    arm = ds.treatment_vector()
    adh_vec = ds.adherence_vector()
    est = ace_s_plus_plus(ds, cq)
    expected_mean1 = np.mean(cq.phi[1][(arm == 0) & adh_vec])
    assert est.mean1 == pytest.approx(expected_mean1, abs=1e-12)


def test_p_plus_plus_all_adherent_unit_probability(no_ice_linear_ds):
    ds = no_ice_linear_ds
    _, _, cq = _fit_all(ds, mc_draws=20, seed=1)
    assert estimate_p_plus_plus(ds, cq) == pytest.approx(1.0, abs=1e-12)


def test_p_plus_plus_constant_h_algebra():
    # no covariates, no visits: h is each arm's observed adherence rate
    schema = make_schema(n_cov=0)
    rows = []
    sid = 0
    for t, (n_adh, n_drop) in ((0, (16, 4)), (1, (24, 6))):
        for j in range(n_adh):
            rows.append(subject(f"s{sid}", t, y=float(j % 3))); sid += 1
        for j in range(n_drop):
            rows.append(subject(f"s{sid}", t, d_admin=10.0)); sid += 1
    ds = make_dataset(schema, rows)
    chains, adh, cq = _fit_all(ds, mc_draws=10, seed=0)
    c = 0.8  # both arms adhere at rate 0.8
    expected = c * (ds.n11 + ds.n01) / (ds.n1 + ds.n0)
    assert estimate_p_plus_plus(ds, cq) == pytest.approx(expected, abs=1e-6)


def test_s_star_plus_intercept_only_reduction():
    # reference prediction is the arm-0 adherer mean when nothing is modeled
    schema = make_schema(n_cov=0)
    rows = [subject("a", 1, y=3.0), subject("b", 1, y=5.0),
            subject("c", 0, y=1.0), subject("d", 0, y=2.0)]
    ds = make_dataset(schema, rows)
    chains, adh, cq = _fit_all(ds, mc_draws=10, seed=0)
    est = ace_s_star_plus(ds, cq)
    assert est.mean1 == pytest.approx(4.0, abs=1e-12)
    assert est.mean0 == pytest.approx(1.5, abs=1e-12)
    assert est.diff == pytest.approx(2.5, abs=1e-12)


# ---------------------------------------------------------------------------
# Battery-level structural invariants
# ---------------------------------------------------------------------------

def test_no_ice_collapse_all_estimators_equal_raw_diff():
    schema = make_schema(n_cov=0)
    rng = np.random.default_rng(8)
    rows = []
    for t in (0, 1):
        for j in range(25):
            rows.append(subject(f"s{t}{j}", t, y=float(t * 0.7 + rng.standard_normal())))
    ds = make_dataset(schema, rows)
    y = ds.y_vector()
    arm = ds.treatment_vector()
    raw = float(np.mean(y[arm == 1]) - np.mean(y[arm == 0]))
    res = run_battery(ds, BatteryConfig(mc_draws=30, j2r_imputations=5), seed=4)
    for name, est in res.estimates.items():
        assert est.diff == pytest.approx(raw, abs=1e-10), name


def test_location_and_scale_equivariance():
    ds, _ = generate_trial(hba1c_like_spec(n1=400, n0=300), seed=14)
    cfg = BatteryConfig(mc_draws=60, j2r_imputations=6)
    base = run_battery(ds, cfg, seed=77)

    shifted = ds.replace_outcomes(ds.y_vector() + 3.7)
    shifted_res = run_battery(shifted, cfg, seed=77)
    for name in base.estimates:
        assert shifted_res.estimates[name].diff == pytest.approx(
            base.estimates[name].diff, abs=1e-10), name
        assert shifted_res.estimates[name].mean1 == pytest.approx(
            base.estimates[name].mean1 + 3.7, abs=1e-10), name
    assert shifted_res.p_plus_plus == base.p_plus_plus

    scaled = ds.replace_outcomes(ds.y_vector() * 2.5)
    scaled_res = run_battery(scaled, cfg, seed=77)
    for name in base.estimates:
        assert scaled_res.estimates[name].diff == pytest.approx(
            2.5 * base.estimates[name].diff, abs=1e-10), name
    assert scaled_res.p_plus_plus == base.p_plus_plus


def test_battery_deterministic_given_seed():
    ds, _ = generate_trial(hba1c_like_spec(n1=300, n0=200), seed=2)
    cfg = BatteryConfig(mc_draws=40, j2r_imputations=4)
    a = run_battery(ds, cfg, seed=123)
    b = run_battery(ds, cfg, seed=123)
    for name in a.estimates:
        assert a.estimates[name] == b.estimates[name]
    assert a.p_plus_plus == b.p_plus_plus


def test_h_and_p_plus_plus_bounded(sim_dataset):
    ds, _ = sim_dataset
    chains, adh, cq = _fit_all(ds, mc_draws=60, seed=6)
    for t in (0, 1):
        assert np.all(cq.h[t] >= 0.0) and np.all(cq.h[t] <= 1.0)
    p = estimate_p_plus_plus(ds, cq)
    assert 0.0 <= p <= 1.0
    assert p <= (ds.n11 + ds.n01) / (ds.n1 + ds.n0) + 1e-12


# ---------------------------------------------------------------------------
# Jump-to-reference imputation
# ---------------------------------------------------------------------------

def test_j2r_no_missing_equals_raw_diff(no_ice_linear_ds):
    ds = no_ice_linear_ds
    chains = (fit_outcome_chain(ds, 0), fit_outcome_chain(ds, 1))
    est = j2r_estimate(ds, chains, m_imputations=6, seed=1)
    y = ds.y_vector()
    arm = ds.treatment_vector()
    raw = float(np.mean(y[arm == 1]) - np.mean(y[arm == 0]))
    assert est.diff == pytest.approx(raw, abs=1e-12)
    # no missing outcomes: every imputation identical, only within-variance left
    within = (np.var(y[arm == 1], ddof=1) / (arm == 1).sum()
              + np.var(y[arm == 0], ddof=1) / (arm == 0).sum())
    assert est.se == pytest.approx(math.sqrt(within), abs=1e-12)


def test_j2r_all_experimental_missing_pulls_to_reference():
    schema = make_schema(n_cov=0)
    rng = np.random.default_rng(31)
    rows = []
    for j in range(60):
        rows.append(subject(f"c{j}", 0, y=float(5.0 + 0.4 * rng.standard_normal())))
    for j in range(60):
        rows.append(subject(f"t{j}", 1, d_admin=20.0))   # no outcomes in arm 1
    ds = make_dataset(schema, rows)
    chains = (fit_outcome_chain(ds, 0), None)
    est = j2r_estimate(ds, chains, m_imputations=80, seed=9)
    assert abs(est.diff) < 0.05


def test_j2r_requires_two_imputations(no_ice_linear_ds):
    ds = no_ice_linear_ds
    chains = (fit_outcome_chain(ds, 0), fit_outcome_chain(ds, 1))
    with pytest.raises(ValueError):
        j2r_estimate(ds, chains, m_imputations=1, seed=0)


# ---------------------------------------------------------------------------
# Simulation-based comparisons
# ---------------------------------------------------------------------------

def test_naive_further_from_both_adherent_truth_under_strong_selection():
    spec = strong_selection_spec(n_per_arm=2000)
    oracle = oracle_truth(spec, draws=150_000, seed=51)
    target = oracle.effects["s_plus_plus"][0]
    cfg = BatteryConfig(mc_draws=80, j2r_imputations=4)
    naive_err, ace_err = [], []
    ss = np.random.SeedSequence(99)
    for child in ss.spawn(30):
        s1, s2 = child.spawn(2)
        ds, _ = generate_trial(spec, s1)
        res = run_battery(ds, cfg, seed=s2)
        naive_err.append(res.estimates["naive"].diff - target)
        ace_err.append(res.estimates["s_plus_plus"].diff - target)
    assert abs(np.mean(naive_err)) > abs(np.mean(ace_err))
    assert abs(np.mean(naive_err)) > 2 * np.std(naive_err, ddof=1) / math.sqrt(30)
