"""Experiment configuration: TOML schema, presets and validation.

A config file is TOML with these top-level fields (all optional except
``model`` for the ``Custom`` preset, which is also the default)::

    preset = "IidOscillating"
    n_grid = [10000, 100000]
    replicates = 1000
    master_seed = 20261016
    normalization = "PaperAn"          # PaperAn | NoiseAnZ | ClosedForm
    outputs = "runs/iid_oscillating"

    [model]                            # a model dict, see rvclt.models.model_from_dict
    variant = "IID"
    noise = { kind = "OscillatingAppendixB", a = 0.5, b = 0.0, theta0 = 2.0, r = 1.0 }

    [block_rule]                       # rule = LogPower | RemarkRem4x | Manual
    eps = 0.5

    [diagnostics]                      # replicate counts and grids of the diagnostic stages
    petrov_replicates = 2000

    [assertions]                       # the preset's acceptance block
    ks_max = 0.05

Fields not given are taken from the preset, then from the global defaults.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

from .errors import ConfigurationError, DomainError
from .models import SRE_KINDS, model_from_dict

PRESETS_ORDER = ("IidOscillating", "MDependentMA", "LinearInfinite", "StochVol", "SreKestenGoldie", "SreGrey", "Custom")
NORMALIZATIONS = ("PaperAn", "NoiseAnZ", "ClosedForm")
BLOCK_RULES = ("LogPower", "RemarkRem4x", "Manual")
MIN_REPLICATES = 100
MIN_N = 100

DIAGNOSTICS_DEFAULTS = {
    "eps_grid": [0.25, 0.5, 1.0],
    "u_grid": [0.5, 1.0, 2.0],
    "petrov_replicates": 2000,
    "bootstrap": 200,
    "mixing_replicates": 1000,
    "ld_replicates": 100000,
    "ld_quantile_levels": [1e-2, 1e-3],
    "marginal_draws": 1000000,
}

ASSERTION_KEYS = {
    "ks_max": "KS statistic of normalized sums against N(0, sigma2) at every n",
    "variance_rel_tol": "|var(normalized sums)/sigma2 - 1| at the largest n",
    "studentized_ks_max": "KS statistic of studentized sums against N(0, sigma2_PaperAn)",
    "multiplier_ks_max": "KS statistic of the multiplier sums against N(0, vn2 target)",
    "vn2_rel_tol": "|mean(V_n^2/a_n^2)/target - 1|",
    "ld_band": "[lo, hi] band for ld ratio / c0 on the reachable grid",
    "cond_c_z_max": "|cond_c| / stderr on symmetric models",
}

_PARETO = {"kind": "Pareto2", "r": 1.0, "p_plus": 0.5}

PRESETS = {
    "IidOscillating": {
        "model": {"variant": "IID", "noise": {"kind": "OscillatingAppendixB", "a": 0.5, "b": 0.0, "theta0": 2.0, "r": 1.0}},
        "n_grid": [10000, 100000],
        "normalization": "PaperAn",
        "assertions": {"ks_max": 0.05, "studentized_ks_max": 0.05, "cond_c_z_max": 3.0},
    },
    "MDependentMA": {
        "model": {"variant": "FiniteMA", "psi": [1.0, 1.0], "noise": dict(_PARETO)},
        "n_grid": [10000, 100000],
        "normalization": "NoiseAnZ",
        "assertions": {"ks_max": 0.06, "studentized_ks_max": 0.06, "cond_c_z_max": 3.0},
    },
    "LinearInfinite": {
        "model": {"variant": "LinearProcess", "rule": {"kind": "Geometric", "rho": 0.5}, "m_trunc": 40, "noise": dict(_PARETO)},
        "n_grid": [10000, 100000],
        "normalization": "NoiseAnZ",
        "assertions": {"ks_max": 0.06, "cond_c_z_max": 3.0},
    },
    "StochVol": {
        "model": {"variant": "StochVol", "psi": [1.0, 0.5], "noise": dict(_PARETO)},
        "n_grid": [10000, 100000],
        "normalization": "PaperAn",
        "assertions": {"multiplier_ks_max": 0.05, "studentized_ks_max": 0.05, "cond_c_z_max": 3.0},
    },
    "SreKestenGoldie": {
        "model": {"variant": "SREKestenGoldie", "A": {"kind": "LogNormal", "mu": -0.25, "s": 0.5}, "B": {"kind": "Constant", "c": 1.0}},
        "n_grid": [10000, 1000000],
        "normalization": "ClosedForm",
        "block_rule": {"rule": "RemarkRem4x", "eps": 0.1, "delta": 0.5},
        "assertions": {"variance_rel_tol": 0.35},
    },
    "SreGrey": {
        "model": {"variant": "SREGrey", "A": {"kind": "Constant", "c": 0.5}, "B": dict(_PARETO)},
        "n_grid": [10000, 100000],
        "normalization": "PaperAn",
        "block_rule": {"rule": "RemarkRem4x", "eps": 0.1, "delta": 0.5},
        "assertions": {"ld_band": [0.5, 1.5]},
    },
    "Custom": {},
}

GLOBAL_DEFAULTS = {
    "n_grid": [10000],
    "replicates": 1000,
    "master_seed": 20261016,
    "normalization": "PaperAn",
    "outputs": "rvclt-out",
}

TOP_LEVEL_KEYS = ("preset", "model", "n_grid", "replicates", "master_seed", "normalization", "outputs", "block_rule", "diagnostics", "assertions")


class InvalidConfig(ConfigurationError):
    """Raised by :func:`validate_config`; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid config:\n" + "\n".join(f"  - {v}" for v in self.violations))


@dataclass
class ExperimentConfig:
    preset: str
    model: dict
    n_grid: list
    replicates: int
    master_seed: int
    normalization: str
    outputs: str
    block_rule: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    assertions: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "n_grid": list(self.n_grid),
            "replicates": self.replicates,
            "master_seed": self.master_seed,
            "normalization": self.normalization,
            "outputs": self.outputs,
            "model": copy.deepcopy(self.model),
            "block_rule": dict(self.block_rule),
            "diagnostics": copy.deepcopy(self.diagnostics),
            "assertions": copy.deepcopy(self.assertions),
        }

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def build_model(self):
        return model_from_dict(self.model)


def parse_toml(text: str) -> dict:
    """TOML text to a dict; syntax errors keep the parser's line and column."""
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config syntax error: {exc}") from None


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_config(text: str) -> ExperimentConfig:
    """Parse, apply defaults and check every field.

    Raises
    ------
    ConfigurationError
        On a syntax error (message carries line and column).
    InvalidConfig
        Listing every semantic violation with its field path.
    """
    return config_from_dict(parse_toml(text))


def config_from_dict(raw: dict) -> ExperimentConfig:
    violations = []
    for key in raw:
        if key not in TOP_LEVEL_KEYS:
            violations.append(f"{key}: unknown field")

    preset = raw.get("preset", "Custom")
    if preset not in PRESETS:
        violations.append(f"preset: unknown preset {preset!r}, expected one of {', '.join(PRESETS_ORDER)}")
        base = {}
    else:
        base = PRESETS[preset]

    def pick(key):
        if key in raw:
            return raw[key]
        if key in base:
            return copy.deepcopy(base[key])
        return copy.deepcopy(GLOBAL_DEFAULTS.get(key))

    model_raw = pick("model")
    model = None
    if model_raw is None:
        violations.append("model missing")
    elif not isinstance(model_raw, dict):
        violations.append("model: must be a table")
    else:
        try:
            model = model_from_dict(model_raw)
        except (ConfigurationError, DomainError, ValueError, TypeError) as exc:
            violations.append(f"model: {exc}")

    n_grid = pick("n_grid")
    if not isinstance(n_grid, list) or not n_grid:
        violations.append("n_grid: must be a nonempty list")
    elif not all(_is_int(n) for n in n_grid):
        violations.append("n_grid: entries must be integers")
    else:
        if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
            violations.append("n_grid: must be strictly ascending")
        if n_grid[0] < MIN_N:
            violations.append(f"n_grid: every n must be >= {MIN_N}, got {n_grid[0]}")

    replicates = pick("replicates")
    if not _is_int(replicates):
        violations.append("replicates: must be an integer")
    elif replicates < MIN_REPLICATES:
        violations.append(f"replicates: replicates ≥ {MIN_REPLICATES} required, got {replicates}")

    seed = pick("master_seed")
    if not _is_int(seed) or not 0 <= seed < 2**64:
        violations.append("master_seed: must be an integer in [0, 2^64)")

    norm = pick("normalization")
    if norm not in NORMALIZATIONS:
        violations.append(f"normalization: unknown value {norm!r}, expected one of {', '.join(NORMALIZATIONS)}")
    elif model is not None:
        problem = normalization_problem(model.kind, norm)
        if problem:
            violations.append(f"normalization: {problem}")

    outputs = pick("outputs")
    if not isinstance(outputs, str) or not outputs:
        violations.append("outputs: must be a nonempty path string")

    block_rule = pick("block_rule") or {}
    if not isinstance(block_rule, dict):
        violations.append("block_rule: must be a table")
        block_rule = {}
    else:
        rule = block_rule.get("rule")
        if rule is not None and rule not in BLOCK_RULES:
            violations.append(f"block_rule.rule: unknown rule {rule!r}")
        if rule == "Manual" and not (_is_int(block_rule.get("r_n")) and block_rule.get("r_n") >= 1):
            violations.append("block_rule.r_n: Manual rule needs a positive integer r_n")
        for key in ("eps", "delta"):
            if key in block_rule and not (isinstance(block_rule[key], (int, float)) and block_rule[key] > 0):
                violations.append(f"block_rule.{key}: must be positive")

    diagnostics = dict(DIAGNOSTICS_DEFAULTS)
    diag_raw = raw.get("diagnostics", {})
    if not isinstance(diag_raw, dict):
        violations.append("diagnostics: must be a table")
    else:
        for key, val in diag_raw.items():
            if key not in DIAGNOSTICS_DEFAULTS:
                violations.append(f"diagnostics.{key}: unknown field")
            else:
                diagnostics[key] = val
    if _is_int(diagnostics["petrov_replicates"]) and diagnostics["petrov_replicates"] < 1000:
        violations.append("diagnostics.petrov_replicates: must be >= 1000")
    if _is_int(diagnostics["mixing_replicates"]) and diagnostics["mixing_replicates"] < 1000:
        violations.append("diagnostics.mixing_replicates: must be >= 1000")

    assertions = pick("assertions") or {}
    if not isinstance(assertions, dict):
        violations.append("assertions: must be a table")
        assertions = {}
    for key, val in assertions.items():
        if key not in ASSERTION_KEYS:
            violations.append(f"assertions.{key}: unknown assertion")
        elif key == "ld_band":
            if not (isinstance(val, list) and len(val) == 2 and 0 <= val[0] < val[1]):
                violations.append("assertions.ld_band: must be [lo, hi] with 0 <= lo < hi")
        elif not (isinstance(val, (int, float)) and val > 0):
            violations.append(f"assertions.{key}: must be a positive number")

    if violations:
        raise InvalidConfig(violations)
    return ExperimentConfig(
        preset=preset,
        model=model_raw,
        n_grid=list(n_grid),
        replicates=replicates,
        master_seed=seed,
        normalization=norm,
        outputs=outputs,
        block_rule=block_rule,
        diagnostics=diagnostics,
        assertions=assertions,
    )


def normalization_problem(kind: str, normalization: str):
    """Reason a normalization is unavailable for a model variant, or ``None``."""
    if normalization == "ClosedForm" and kind not in ("SREKestenGoldie", "StochVol"):
        return f"ClosedForm is only available for SREKestenGoldie and StochVol, not {kind}"
    if normalization == "NoiseAnZ" and kind == "SREKestenGoldie":
        return "NoiseAnZ is undefined for SREKestenGoldie (B is light tailed)"
    return None


def preset_config(name: str, **overrides) -> ExperimentConfig:
    if name not in PRESETS or name == "Custom":
        raise ConfigurationError(f"unknown preset {name!r}")
    raw = {"preset": name, **overrides}
    return config_from_dict(raw)


def emit_preset(name: str) -> str:
    """A complete, ready-to-run TOML config for a preset."""
    return preset_config(name).to_toml()


def is_symmetric(model) -> bool:
    return model.kind not in SRE_KINDS and bool(getattr(model, "symmetric", False))
