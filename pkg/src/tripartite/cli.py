"""Command-line surface: validate, classify, summarize, estimate, simulate.

Every command reads one config file and writes under the output directory.
Exit codes: 0 success, 1 data errors, 2 usage errors. ``estimate`` persists
its full results as JSON; ``report`` renders that JSON without recomputing
anything, so regenerating a report never changes the numbers.
"""

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from .ace import BATTERY_LABELS, run_battery
from .bootstrap import bootstrap_battery
from .config import RunConfig, benchmark_settings, load_config, simulation_spec
from .data import DataError, load_dataset, validate_dataset, write_dataset
from .ice import classify_disposition, cumulative_incidence, loe_timing_histogram
from .proportions import ice_summary_table
from .regression import FitError
from .simulate import generate_trial, run_benchmark

CAUSE_ORDER = ("Any", "AE", "LoE", "Admin")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else
                             (repr(v) if isinstance(v, float) else v)
                             for v in row])


def _aligned(header, rows) -> str:
    cells = [list(map(str, header))] + [[str(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for j, row in enumerate(cells):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


def _fmt_pct_ci(diff, ci) -> str:
    return f"{100 * diff:.1f} ({100 * ci[0]:.1f}, {100 * ci[1]:.1f})"


def _fmt_ci(ci) -> str:
    if ci is None:
        return ""
    return f"({ci[0]:.3f}, {ci[1]:.3f})"


# ---------------------------------------------------------------------------
# Shared result assembly
# ---------------------------------------------------------------------------

def _ice_payload(ds, cfg: RunConfig) -> dict:
    summary = ice_summary_table(ds, alpha=cfg.alpha, ci_method=cfg.ci_method,
                                test_method=cfg.test_method)
    rows = {}
    for cause in CAUSE_ORDER:
        r = summary.rows[cause]
        rows[cause] = {
            "x1": r.x1, "n1": r.n1, "x0": r.x0, "n0": r.n0,
            "p1": r.p1, "p0": r.p0, "diff": r.diff,
            "ci": list(r.ci), "p_value": r.p_value,
            "ci_method": r.ci_method, "test_method": r.test_method,
        }
    exposure = {c: [_jsonable(v) for v in summary.exposure_weeks[c]]
                for c in CAUSE_ORDER}
    cif = {}
    for cause in CAUSE_ORDER:
        curve = cumulative_incidence(ds, cause)
        cif[cause] = {str(arm): [[t, v] for t, v in curve.points[arm]]
                      for arm in (0, 1)}
    hist = loe_timing_histogram(ds, cfg.loe_hist_interval)
    return {
        "ice_rows": rows,
        "exposure_weeks": exposure,
        "cif": cif,
        "loe_histogram": {"edges": list(hist.edges),
                          "counts": {str(t): list(hist.counts[t]) for t in (0, 1)}},
    }


def _write_ice_files(out: Path, payload: dict) -> list[Path]:
    written = []
    rows = []
    for cause in CAUSE_ORDER:
        r = payload["ice_rows"][cause]
        exp0, exp1 = payload["exposure_weeks"][cause]
        rows.append([cause, r["x1"], r["n1"], r["x0"], r["n0"], r["p1"], r["p0"],
                     r["diff"], r["ci"][0], r["ci"][1], r["p_value"], exp0, exp1])
    path = out / "ice_summary.csv"
    _write_csv(path, ["cause", "x1", "n1", "x0", "n0", "p1", "p0", "diff",
                      "ci_low", "ci_high", "p_value",
                      "exposure_arm0", "exposure_arm1"], rows)
    written.append(path)

    text_rows = []
    for cause in CAUSE_ORDER:
        r = payload["ice_rows"][cause]
        text_rows.append([cause,
                          f"{r['x0']} ({100 * r['p0']:.1f})",
                          f"{r['x1']} ({100 * r['p1']:.1f})",
                          _fmt_pct_ci(r["diff"], r["ci"]),
                          f"{r['p_value']:.3f}"])
    path = out / "ice_summary.txt"
    path.write_text(_aligned(
        ["cause", "arm0 n (%)", "arm1 n (%)", "diff % (CI)", "p"], text_rows),
        encoding="utf-8")
    written.append(path)

    for cause in CAUSE_ORDER:
        rows = []
        for arm in ("0", "1"):
            rows.extend([t, arm, v] for t, v in payload["cif"][cause][arm])
        path = out / f"cif_{cause.lower()}.csv"
        _write_csv(path, ["week", "arm", "cumulative_incidence"], rows)
        written.append(path)

    hist = payload["loe_histogram"]
    rows = []
    for arm in ("0", "1"):
        for i, count in enumerate(hist["counts"][arm]):
            rows.append([hist["edges"][i], hist["edges"][i + 1], arm, count])
    path = out / "loe_histogram.csv"
    _write_csv(path, ["bucket_start", "bucket_end", "arm", "count"], rows)
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(cfg: RunConfig, args) -> int:
    path, schema = cfg.require_dataset()
    ds = load_dataset(path, schema)
    report = validate_dataset(ds)
    out = _outdir(cfg)
    _write_csv(out / "violations.csv", ["subject_id", "rule", "detail"],
               [[v.subject_id, v.rule, v.detail] for v in report.violations])
    print(f"{len(ds.subjects)} subjects, {len(report.violations)} violations "
          f"-> {out / 'violations.csv'}")
    return 0 if report.ok else 1


def cmd_classify(cfg: RunConfig, args) -> int:
    path, schema = cfg.require_dataset()
    ds = load_dataset(path, schema)
    if cfg.efficacy_baseline is None:
        raise DataError("[analysis] efficacy_baseline is required for classify")
    baseline = ds.covariate_values(cfg.efficacy_baseline).astype(float)
    cont_idx = [k for k, v in enumerate(schema.visits) if v.kind == "continuous"]
    rows = []
    for i, s in enumerate(ds.subjects):
        if s.evidence.recorded_reason == "completed":
            continue
        observed = [s.z[k] for k in cont_idx if s.z[k] is not None]
        eff_at_dc = observed[-1] if observed else float(baseline[i])
        causes = classify_disposition(s.evidence, float(baseline[i]), eff_at_dc,
                                      cfg.improvement_threshold)
        rows.append([s.id, s.treatment, s.evidence.recorded_reason,
                     int(s.evidence.ae_flag),
                     int(s.evidence.efficacy_no_improvement_flag),
                     float(baseline[i]), float(eff_at_dc),
                     "+".join(sorted(causes))])
    out = _outdir(cfg)
    _write_csv(out / "classification.csv",
               ["subject_id", "arm", "reason", "ae_flag", "loe_flag",
                "baseline_eff", "eff_at_dc", "causes"], rows)
    print(f"classified {len(rows)} discontinuations -> {out / 'classification.csv'}")
    return 0


def cmd_ice_summary(cfg: RunConfig, args) -> int:
    path, schema = cfg.require_dataset()
    ds = load_dataset(path, schema)
    payload = _ice_payload(ds, cfg)
    out = _outdir(cfg)
    written = _write_ice_files(out, payload)
    print("\n".join(str(p) for p in written))
    return 0


def cmd_estimate(cfg: RunConfig, args) -> int:
    path, schema = cfg.require_dataset()
    seed = cfg.require_seed()
    ds = load_dataset(path, schema)
    battery_cfg = cfg.battery_config()
    result = run_battery(ds, battery_cfg, seed=seed)

    battery = {}
    for name, est in result.estimates.items():
        battery[name] = {
            "mean0": est.mean0, "mean1": est.mean1, "diff": est.diff,
            "se": est.se, "se0": est.se0, "se1": est.se1,
            "ci": _jsonable(est.ci), "note": est.note,
        }
    p_pp = {"value": result.p_plus_plus, "se": None, "ci": None}

    if cfg.bootstrap_b:
        boots = bootstrap_battery(list(BATTERY_LABELS) + ["p_plus_plus"], ds,
                                  b=cfg.bootstrap_b, alpha=cfg.alpha,
                                  seed=seed, config=battery_cfg)
        for name in BATTERY_LABELS:
            br = boots[name]
            battery[name].update(se=br.se, ci=[br.ci[0], br.ci[1]],
                                 se0=br.se_mean0, se1=br.se_mean1)
        p_pp.update(se=boots["p_plus_plus"].se,
                    ci=list(boots["p_plus_plus"].ci))

    results = {
        "alpha": cfg.alpha,
        "seed": seed,
        "bootstrap_b": cfg.bootstrap_b,
        "n": {"n0": ds.n0, "n1": ds.n1, "n01": ds.n01, "n11": ds.n11},
        "battery": battery,
        "p_plus_plus": p_pp,
    }
    results.update(_ice_payload(ds, cfg))

    out = _outdir(cfg)
    results_path = out / "results.json"
    results_path.write_text(json.dumps(results, indent=2, sort_keys=True),
                            encoding="utf-8")
    rows = [[name, battery[name]["mean0"], battery[name]["se0"],
             battery[name]["mean1"], battery[name]["se1"],
             battery[name]["diff"],
             battery[name]["ci"][0] if battery[name]["ci"] else None,
             battery[name]["ci"][1] if battery[name]["ci"] else None]
            for name in BATTERY_LABELS]
    _write_csv(out / "battery.csv",
               ["method", "mean0", "se0", "mean1", "se1", "diff",
                "ci_low", "ci_high"], rows)
    text_rows = []
    for name in BATTERY_LABELS:
        b = battery[name]
        se0 = f" ± {b['se0']:.3f}" if b["se0"] else ""
        se1 = f" ± {b['se1']:.3f}" if b["se1"] else ""
        text_rows.append([name, f"{b['mean0']:.3f}{se0}", f"{b['mean1']:.3f}{se1}",
                          f"{b['diff']:.3f}", _fmt_ci(b["ci"])])
    (out / "battery.txt").write_text(
        _aligned(["method", "arm0 mean", "arm1 mean", "diff", "CI"], text_rows),
        encoding="utf-8")
    _write_ice_files(out, results)
    print(f"wrote {results_path}")
    return 0


def cmd_simulate(cfg: RunConfig, args) -> int:
    seed = cfg.require_seed()
    spec = simulation_spec(cfg)
    ds, truth = generate_trial(spec, seed=seed)
    out = _outdir(cfg)
    trial_path = out / "trial.csv"
    write_dataset(ds, trial_path)
    rows = []
    m = len(spec.visits)
    for i, s in enumerate(ds.subjects):
        row = [s.id, int(truth.t[i]),
               truth.y_pot[0][i], truth.y_pot[1][i],
               int(truth.a_pot[0][i]), int(truth.a_pot[1][i]),
               int(truth.s_star_plus[i]), int(truth.s_plus_plus[i])]
        for t in (0, 1):
            row.extend(truth.z_pot[t][i, k] for k in range(m))
        rows.append(row)
    header = ["subject_id", "arm", "y_pot0", "y_pot1", "a_pot0", "a_pot1",
              "member_s_star_plus", "member_s_plus_plus"]
    for t in (0, 1):
        header.extend(f"z{t}_{v.label}" for v in spec.visits)
    _write_csv(out / "truth.csv", header, rows)
    effects = {k: _jsonable(v) for k, v in truth.effects.items()}
    (out / "truth_summary.json").write_text(
        json.dumps({"effects": effects, "p_plus_plus": truth.p_plus_plus,
                    "spec": spec.name, "seed": seed}, indent=2, sort_keys=True),
        encoding="utf-8")
    print(f"simulated {len(ds.subjects)} subjects -> {trial_path}")
    return 0


def cmd_benchmark(cfg: RunConfig, args) -> int:
    seed = cfg.require_seed()
    spec = simulation_spec(cfg)
    settings = benchmark_settings(cfg)
    report = run_benchmark(
        spec, reps=settings["reps"], n_grid=settings["n_grid"],
        estimators=settings.get("estimators"), seed=seed,
        bootstrap_b=settings["bootstrap_b"], config=cfg.battery_config(),
        oracle_draws=settings["oracle_draws"])
    out = _outdir(cfg)
    rows = [[r.estimator, r.n_per_arm, r.reps, r.mean, r.bias, r.sd, r.mc_se,
             r.coverage, r.failures] for r in report.rows]
    _write_csv(out / "benchmark.csv",
               ["estimator", "n_per_arm", "reps", "mean", "bias", "sd",
                "mc_se", "coverage", "failures"], rows)
    lines = [f"spec: {report.spec_name}  oracle draws: {report.oracle.draws}"]
    for k, (v, se) in report.oracle.effects.items():
        lines.append(f"oracle {k}: {v:.4f} (mc se {se:.4f})")
    p, pse = report.oracle.p_plus_plus
    lines.append(f"oracle p_plus_plus: {p:.4f} (mc se {pse:.4f})")
    for n, gap in report.stratum_gap.items():
        lines.append(f"mean |all-randomized - both-adherent| at n={n}: {gap:.4f}")
    text_rows = [[r.estimator, r.n_per_arm, f"{r.mean:.4f}", f"{r.bias:+.4f}",
                  f"{r.sd:.4f}",
                  "" if r.coverage is None else f"{r.coverage:.3f}",
                  r.failures] for r in report.rows]
    lines.append("")
    lines.append(_aligned(["estimator", "n", "mean", "bias", "sd",
                           "coverage", "failures"], text_rows))
    (out / "benchmark.txt").write_text("\n".join(lines), encoding="utf-8")
    print(f"wrote {out / 'benchmark.csv'}")
    return 0


def render_tripartite_report(results: dict) -> str:
    """Render the three-part summary from persisted estimate results."""
    lines = []
    lines.append("Tripartite treatment-effect summary")
    lines.append("===================================")
    n = results.get("n", {})
    if n:
        lines.append(f"arm 0: n={n['n0']} (adherers {n['n01']})   "
                     f"arm 1: n={n['n1']} (adherers {n['n11']})")
    lines.append("")
    lines.append("1. First intercurrent events due to adverse events")
    lines.append(_ice_block(results, "AE"))
    lines.append("2. First intercurrent events due to lack of efficacy")
    lines.append(_ice_block(results, "LoE"))
    other = [c for c in ("Any", "Admin") if c in results.get("ice_rows", {})]
    if other:
        lines.append("Context rows")
        for cause in other:
            lines.append(_ice_block(results, cause, indent="  ", label=cause))
    lines.append("3. Efficacy in adherence-defined strata")
    battery = results.get("battery", {})
    for name, title in (("s_star_plus", "adherent to experimental arm"),
                        ("s_plus_plus", "adherent to both arms")):
        if name in battery:
            b = battery[name]
            ci = _fmt_ci(b.get("ci"))
            lines.append(f"  {title}: diff {b['diff']:.3f} {ci}".rstrip())
    p_pp = results.get("p_plus_plus")
    if p_pp and p_pp.get("value") is not None:
        ci = p_pp.get("ci")
        tail = f" (CI {100 * ci[0]:.1f}, {100 * ci[1]:.1f})" if ci else ""
        lines.append(f"  estimated share adherent to both arms: "
                     f"{100 * p_pp['value']:.1f}%{tail}")
    comparators = [nm for nm in ("naive", "mar", "j2r") if nm in battery]
    if comparators:
        lines.append("  comparators:")
        for nm in comparators:
            b = battery[nm]
            lines.append(f"    {nm}: diff {b['diff']:.3f} {_fmt_ci(b.get('ci'))}".rstrip())
    lines.append("")
    return "\n".join(lines)


def _ice_block(results: dict, cause: str, indent: str = "  ",
               label: str | None = None) -> str:
    r = results["ice_rows"][cause]
    head = f"{indent}" + (f"{label}: " if label else "")
    text = (f"{head}arm1 {r['x1']}/{r['n1']} ({100 * r['p1']:.1f}%) vs "
            f"arm0 {r['x0']}/{r['n0']} ({100 * r['p0']:.1f}%)  "
            f"diff {_fmt_pct_ci(r['diff'], r['ci'])}  p={r['p_value']:.3f}")
    exp = results.get("exposure_weeks", {}).get(cause)
    if exp and not (exp[0] is None and exp[1] is None):
        fmt = lambda v: "n/a" if v is None else f"{v:.1f}"
        text += (f"\n{indent}mean exposure: arm0 {fmt(exp[0])} wk, "
                 f"arm1 {fmt(exp[1])} wk")
    return text


def cmd_report(cfg: RunConfig, args) -> int:
    out = _outdir(cfg)
    results_path = Path(args.results) if args.results else out / "results.json"
    if not results_path.exists():
        raise DataError(f"no persisted results at {results_path}; run estimate first")
    results = json.loads(results_path.read_text(encoding="utf-8"))
    text = render_tripartite_report(results)
    (out / "report.txt").write_text(text, encoding="utf-8")
    rows = []
    for cause in CAUSE_ORDER:
        if cause not in results.get("ice_rows", {}):
            continue
        r = results["ice_rows"][cause]
        exp = results.get("exposure_weeks", {}).get(cause, [None, None])
        rows.append(["ice", cause, r["diff"], r["ci"][0], r["ci"][1],
                     r["p_value"], exp[0], exp[1]])
    for name, b in results.get("battery", {}).items():
        ci = b.get("ci") or [None, None]
        rows.append(["stratum", name, b["diff"], ci[0], ci[1], None, None, None])
    p_pp = results.get("p_plus_plus") or {}
    if p_pp.get("value") is not None:
        ci = p_pp.get("ci") or [None, None]
        rows.append(["share", "p_plus_plus", p_pp["value"], ci[0], ci[1],
                     None, None, None])
    _write_csv(out / "report.csv",
               ["section", "item", "value", "ci_low", "ci_high", "p_value",
                "exposure_arm0", "exposure_arm1"], rows)
    if "cif" in results:
        _write_ice_files(out, results)
    print(text)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripartite",
        description="Tripartite estimands: ICE proportions, adherence-stratum "
                    "effects, simulation and benchmarking.")
    parser.add_argument("--version", action="version", version="tripartite 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "validate": (cmd_validate, "check a dataset against its schema invariants"),
        "classify": (cmd_classify, "classify discontinuation causes from coded evidence"),
        "ice-summary": (cmd_ice_summary, "per-cause ICE proportions, curves, histogram"),
        "estimate": (cmd_estimate, "run the estimator battery with bootstrap CIs"),
        "simulate": (cmd_simulate, "generate a synthetic trial with truth"),
        "benchmark": (cmd_benchmark, "bias/coverage benchmark against the oracle"),
        "report": (cmd_report, "render the tripartite report from persisted results"),
    }
    for name, (fn, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the run config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "report":
            p.add_argument("--results", default=None,
                           help="path to results.json (default: <out>/results.json)")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed,
                          out_override=args.out)
        return args.handler(cfg, args)
    except (DataError, FitError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
