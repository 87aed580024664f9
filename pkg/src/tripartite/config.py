"""Flat key-value run configuration, one section per concern.

The config file is INI-style. A minimal analysis run needs [data] path,
a [schema] block and an [analysis] seed; everything else has defaults.
Full custom simulation specs are JSON documents referenced by
``[simulation] spec_file``; the builtin named specs cover the common cases.

Example::

    [data]
    path = trial.csv

    [schema]
    covariates = age, gender, hba1c_bl, region:categorical:EU|NA|Other
    visits = isr:6:binary, hba1c_w12:12, hba1c_w26:26
    d_max = 52

    [analysis]
    alpha = 0.05
    ci_method = wald
    test_method = fisher
    improvement_threshold = 0.0
    efficacy_baseline = hba1c_bl
    mc_draws = 200
    mc_mode = mc
    bootstrap_b = 1000
    j2r_imputations = 20
    loe_hist_interval = 13
    seed = 20260809

    [simulation]
    spec = hba1c_like
    n_arm1 = 663
    n_arm0 = 449

    [benchmark]
    reps = 200
    n_grid = 500, 2000
    estimators = naive, s_star_plus, s_plus_plus, mar, j2r, p_plus_plus
    bootstrap_b = 0

    [output]
    dir = out
"""

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ace import BatteryConfig
from .data import Covariate, CovariateSchema, DataError, Visit
from .simulate import SimulationSpec, builtin_spec, spec_from_dict


@dataclass(frozen=True)
class RunConfig:
    dataset_path: str | None
    schema: CovariateSchema | None
    alpha: float
    ci_method: str
    test_method: str
    improvement_threshold: float
    efficacy_baseline: str | None
    mc_draws: int
    mc_mode: str
    bootstrap_b: int
    j2r_imputations: int
    loe_hist_interval: float
    seed: int | None
    out_dir: str
    simulation: dict = field(default_factory=dict)
    benchmark: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DataError("alpha must be in (0, 1)")
        if self.bootstrap_b and self.bootstrap_b < 100:
            raise DataError("bootstrap_b must be 0 (off) or >= 100")

    def battery_config(self) -> BatteryConfig:
        return BatteryConfig(mc_draws=self.mc_draws, mc_mode=self.mc_mode,
                             j2r_imputations=self.j2r_imputations,
                             alpha=self.alpha)

    def require_seed(self) -> int:
        """Seeds are always explicit; there is no wall-clock fallback."""
        if self.seed is None:
            raise DataError("a seed is required: set [analysis] seed or pass --seed")
        return self.seed

    def require_dataset(self) -> tuple[str, CovariateSchema]:
        if self.dataset_path is None:
            raise DataError("[data] path is required for this command")
        if self.schema is None:
            raise DataError("a [schema] section is required for this command")
        return self.dataset_path, self.schema


def _parse_covariates(text: str) -> tuple[Covariate, ...]:
    out = []
    for entry in _split(text):
        parts = entry.split(":")
        name = parts[0].strip()
        kind = parts[1].strip() if len(parts) > 1 else "continuous"
        if kind == "categorical":
            if len(parts) < 3:
                raise DataError(f"covariate {name}: categorical needs levels, "
                                "e.g. region:categorical:EU|NA|Other")
            levels = tuple(lv.strip() for lv in parts[2].split("|"))
            out.append(Covariate(name, "categorical", levels))
        else:
            out.append(Covariate(name, kind))
    return tuple(out)


def _parse_visits(text: str) -> tuple[Visit, ...]:
    out = []
    for entry in _split(text):
        parts = entry.split(":")
        if len(parts) < 2:
            raise DataError(f"visit entry {entry!r} needs label:week[:kind]")
        kind = parts[2].strip() if len(parts) > 2 else "continuous"
        out.append(Visit(parts[0].strip(), float(parts[1]), kind))
    return tuple(out)


def _split(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def parse_schema(section) -> CovariateSchema:
    if "d_max" not in section:
        raise DataError("[schema] needs d_max")
    return CovariateSchema(
        covariates=_parse_covariates(section.get("covariates", "")),
        visits=_parse_visits(section.get("visits", "")),
        d_max=float(section["d_max"]))


def load_config(path, seed_override: int | None = None,
                out_override: str | None = None) -> RunConfig:
    """Parse a config file; --seed and --out flags override file values."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise DataError(f"config file not found: {path}")

    schema = None
    if parser.has_section("schema"):
        schema = parse_schema(parser["schema"])
    an = parser["analysis"] if parser.has_section("analysis") else {}
    data = parser["data"] if parser.has_section("data") else {}
    output = parser["output"] if parser.has_section("output") else {}

    seed = seed_override
    if seed is None and "seed" in an:
        seed = int(an["seed"])
    out_dir = out_override or output.get("dir", "out")

    sim: dict = {}
    if parser.has_section("simulation"):
        sim = dict(parser["simulation"])
    bench: dict = {}
    if parser.has_section("benchmark"):
        bench = dict(parser["benchmark"])

    return RunConfig(
        dataset_path=data.get("path"),
        schema=schema,
        alpha=float(an.get("alpha", 0.05)),
        ci_method=an.get("ci_method", "wald"),
        test_method=an.get("test_method", "fisher"),
        improvement_threshold=float(an.get("improvement_threshold", 0.0)),
        efficacy_baseline=an.get("efficacy_baseline"),
        mc_draws=int(an.get("mc_draws", 200)),
        mc_mode=an.get("mc_mode", "mc"),
        bootstrap_b=int(an.get("bootstrap_b", 1000)),
        j2r_imputations=int(an.get("j2r_imputations", 20)),
        loe_hist_interval=float(an.get("loe_hist_interval", 13.0)),
        seed=seed,
        out_dir=out_dir,
        simulation=sim,
        benchmark=bench,
    )


def simulation_spec(cfg: RunConfig) -> SimulationSpec:
    """Build the simulation spec named or referenced by the config.

    ``spec`` selects a builtin by name; ``spec_file`` points at a JSON
    document with the full coefficient layout. Scalar overrides
    (n_arm0/n_arm1, effect, selection) apply to builtins only.
    """
    sim = cfg.simulation
    if "spec_file" in sim:
        with open(sim["spec_file"], encoding="utf-8") as fh:
            return spec_from_dict(json.load(fh))
    name = sim.get("spec", "hba1c_like")
    overrides: dict = {}
    if name == "hba1c_like":
        keymap = {"n_arm1": ("n1", int), "n_arm0": ("n0", int),
                  "effect": ("effect", float), "selection": ("selection", float)}
    elif name == "null":
        keymap = {"n_per_arm": ("n_per_arm", int)}
    elif name == "strong_selection":
        keymap = {"n_per_arm": ("n_per_arm", int), "effect": ("effect", float)}
    else:
        keymap = {}
    for key, (arg, conv) in keymap.items():
        if key in sim:
            overrides[arg] = conv(sim[key])
    return builtin_spec(name, **overrides)


def benchmark_settings(cfg: RunConfig) -> dict:
    bench = cfg.benchmark
    out = {
        "reps": int(bench.get("reps", 200)),
        "n_grid": [int(x) for x in _split(bench.get("n_grid", "500"))],
        "bootstrap_b": int(bench.get("bootstrap_b", 0)),
        "oracle_draws": int(bench.get("oracle_draws", 200_000)),
    }
    if "estimators" in bench:
        out["estimators"] = tuple(_split(bench["estimators"]))
    return out
