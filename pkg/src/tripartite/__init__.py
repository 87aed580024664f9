"""Tripartite estimands for two-arm randomized trials.

Three linked treatment-effect summaries: the arm difference in first
intercurrent events due to adverse events, the arm difference in first
intercurrent events due to lack of efficacy, and the efficacy effect inside
adherence-defined principal strata, estimated with outcome-chain and
adherence-probability models. Ships with a stratified bootstrap, a
comparator battery, and a synthetic-trial simulator with a brute-force
oracle.
"""

__version__ = "0.1.0"

from .ace import (AdherenceModel, BatteryConfig, BatteryResult,
                  CounterfactualQuantities, StratumEstimate, ace_s_plus_plus,
                  ace_s_star_plus, counterfactual_quantities,
                  estimate_p_plus_plus, fit_adherence_model, hypothetical_mar,
                  j2r_estimate, naive_adherers, run_battery)
from .bootstrap import (BootstrapResult, bootstrap_battery, bootstrap_ci,
                        rubin_pool)
from .data import (Covariate, CovariateSchema, DataError, DispositionEvidence,
                   SubjectRecord, TrialDataset, Visit, baseline_balance_table,
                   load_dataset, validate_dataset, write_dataset)
from .ice import (CifCurve, IceOutcome, classify_disposition,
                  cumulative_incidence, derive_ice_outcome, ice_outcomes,
                  loe_timing_histogram)
from .proportions import (IceSummary, ProportionDiffEstimate, diff_from_counts,
                          estimate_ice_diff, ice_summary_table)
from .regression import (FitError, LinearModel, LogisticModel, OutcomeChain,
                         RankDeficiencyError, compose_phi, fit_logistic,
                         fit_ols, fit_outcome_chain)
from .simulate import (BenchmarkReport, OracleTruth, SimulationSpec,
                       SimulationTruth, builtin_spec, generate_trial,
                       hba1c_like_spec, null_effect_spec, oracle_truth,
                       run_benchmark, strong_selection_spec)
