import numpy as np
import pytest

from tripartite.data import (Covariate, CovariateSchema, DispositionEvidence,
                             SubjectRecord, TrialDataset, Visit)


def make_schema(n_cov=1, visits=(), d_max=52.0, categorical=False):
    covs = [Covariate(f"x{j}") for j in range(n_cov)]
    if categorical:
        covs.append(Covariate("region", "categorical", ("EU", "NA", "Other")))
    return CovariateSchema(covariates=tuple(covs),
                           visits=tuple(Visit(*v) for v in visits),
                           d_max=d_max)


def subject(sid, treatment, x=(), z=(), y=None, d_ae=None, d_loe=None,
            d_admin=None, reason=None, ae_flag=False, loe_flag=False):
    if reason is None:
        reason = "completed" if (d_ae is None and d_loe is None and d_admin is None) \
            else "withdrawal_by_subject"
    ev = DispositionEvidence(reason, ae_flag=ae_flag,
                             efficacy_no_improvement_flag=loe_flag)
    return SubjectRecord(id=sid, treatment=treatment, x=tuple(x), z=tuple(z),
                         y=y, d_ae=d_ae, d_loe=d_loe, d_admin=d_admin,
                         evidence=ev)


def make_dataset(schema, rows):
    return TrialDataset(schema=schema, subjects=tuple(rows))


@pytest.fixture
def no_ice_linear_ds():
    """Both arms share the same x values; y = treatment + x, no noise, no events."""
    schema = make_schema(n_cov=1)
    xs = np.linspace(-2.0, 2.0, 9)
    rows = []
    for t in (0, 1):
        for j, x in enumerate(xs):
            rows.append(subject(f"a{t}{j}", t, x=(float(x),), y=float(t + x)))
    return make_dataset(schema, rows)


@pytest.fixture(scope="session")
def sim_dataset():
    """One medium simulated trial reused by read-only tests."""
    from tripartite.simulate import generate_trial, hba1c_like_spec
    ds, truth = generate_trial(hba1c_like_spec(), seed=20260809)
    return ds, truth
