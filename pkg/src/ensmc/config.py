"""Run configuration: strict JSON parsing, validation and round-tripping.

A run config has four blocks::

    {
      "seed": 1234,
      "problem": {"kind": "linear", ...},
      "sampler": {"kind": "safes", "n_particles": 40, "n_steps": 10000, ...},
      "output": {"directory": "out/run", "thin": 10}
    }

Unknown keys are rejected with the full key path; missing optional keys
are filled with the documented defaults.  ``to_dict`` emits every field,
so parse -> serialize -> parse is lossless.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ConfigurationError
from .problems import DarcyProblem, LevelSetProblem, LinearRegressionProblem
from .samplers import SAMPLER_KINDS, AdaptPolicy, SamplerConfig

_TWO_PI = 2 * math.pi

_PROBLEM_DEFAULTS = {
    "linear": {
        "points_per_axis": 100,
        "extent": _TWO_PI,
        "n_obs": 25,
        "noise_std": 1e-3,
        "prior": "inv:(I - lap)",
        "boundary": "neumann",
        "data_seed": 0,
    },
    "darcy_i": {
        "points_per_axis": 100,
        "extent": _TWO_PI,
        "n_obs": 10,
        "noise_std": 1e-2,
        "data_seed": 0,
    },
    "darcy_ii": {
        "points_per_axis": 100,
        "extent": _TWO_PI,
        "n_obs": 10,
        "noise_std": 1e-4,
        "data_seed": 0,
    },
    "level_set": {
        "points_per_axis": 32,
        "extent": 1.0,
        "noise_std": 1e-3,
        "circle_center": [0.5, 0.5],
        "circle_radius": 0.25,
        "data_seed": 0,
    },
}

_SAMPLER_DEFAULTS = {
    "burn_in_fraction": 0.25,
    "beta0": 0.5,
    "lambda": 0.2,
    "subspace_dim": None,
    "stretch_a": 2.0,
}

_ADAPT_DEFAULTS = {
    "target_low": 0.15,
    "target_high": 0.3,
    "window": 50,
    "factor": 1.15,
    "freeze_after_burn_in": True,
}

_OUTPUT_DEFAULTS = {"directory": "chainstore", "thin": 10}


def _require_mapping(value, path):
    if not isinstance(value, dict):
        raise ConfigurationError(f"{path} must be an object")
    return value


def _reject_unknown(block, allowed, path):
    for key in block:
        if key not in allowed:
            raise ConfigurationError(f"unknown key {path}.{key}")


def _number(block, key, path, default=None, required=False, low=None, high=None,
            integer=False, low_open=False, high_open=False):
    if key not in block or block[key] is None:
        if required:
            raise ConfigurationError(f"{path}.{key} is required")
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path}.{key} must be a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigurationError(f"{path}.{key} must be an integer, got {value!r}")
    value = int(value) if integer else float(value)
    if low is not None and (value <= low if low_open else value < low):
        op = ">" if low_open else ">="
        raise ConfigurationError(f"{path}.{key} must be {op} {low}, got {value}")
    if high is not None and (value >= high if high_open else value > high):
        op = "<" if high_open else "<="
        raise ConfigurationError(f"{path}.{key} must be {op} {high}, got {value}")
    return value


def _parse_problem(block):
    block = _require_mapping(block, "problem")
    kind = block.get("kind")
    if kind not in _PROBLEM_DEFAULTS:
        raise ConfigurationError(
            f"problem.kind must be one of {sorted(_PROBLEM_DEFAULTS)}, got {kind!r}"
        )
    defaults = _PROBLEM_DEFAULTS[kind]
    _reject_unknown(block, set(defaults) | {"kind"}, "problem")
    out = {"kind": kind}
    out["points_per_axis"] = _number(block, "points_per_axis", "problem",
                                     defaults["points_per_axis"], integer=True, low=2)
    out["extent"] = _number(block, "extent", "problem", defaults["extent"], low=0, low_open=True)
    out["noise_std"] = _number(block, "noise_std", "problem", defaults["noise_std"], low=0)
    out["data_seed"] = _number(block, "data_seed", "problem", defaults["data_seed"], integer=True)
    if "n_obs" in defaults:
        out["n_obs"] = _number(block, "n_obs", "problem", defaults["n_obs"], integer=True, low=0)
    if kind == "linear":
        prior = block.get("prior", defaults["prior"])
        boundary = block.get("boundary", defaults["boundary"])
        if not isinstance(prior, str):
            raise ConfigurationError("problem.prior must be a recipe string")
        if boundary not in ("neumann", "periodic", "dirichlet"):
            raise ConfigurationError(f"problem.boundary invalid: {boundary!r}")
        out["prior"], out["boundary"] = prior, boundary
    if kind == "level_set":
        center = block.get("circle_center", defaults["circle_center"])
        if (not isinstance(center, (list, tuple)) or len(center) != 2
                or not all(isinstance(c, (int, float)) for c in center)):
            raise ConfigurationError("problem.circle_center must be a pair of numbers")
        out["circle_center"] = [float(center[0]), float(center[1])]
        out["circle_radius"] = _number(block, "circle_radius", "problem",
                                       defaults["circle_radius"], low=0, low_open=True)
    return out


def _parse_sampler(block):
    block = _require_mapping(block, "sampler")
    allowed = {"kind", "n_particles", "n_steps", "adapt"} | set(_SAMPLER_DEFAULTS)
    _reject_unknown(block, allowed, "sampler")
    kind = block.get("kind")
    if kind not in SAMPLER_KINDS:
        raise ConfigurationError(f"sampler.kind must be one of {SAMPLER_KINDS}, got {kind!r}")
    out = {"kind": kind}
    out["n_particles"] = _number(block, "n_particles", "sampler", required=True,
                                 integer=True, low=1)
    out["n_steps"] = _number(block, "n_steps", "sampler", required=True, integer=True, low=0)
    out["burn_in_fraction"] = _number(block, "burn_in_fraction", "sampler",
                                      _SAMPLER_DEFAULTS["burn_in_fraction"],
                                      low=0, high=1, high_open=True)
    out["beta0"] = _number(block, "beta0", "sampler", _SAMPLER_DEFAULTS["beta0"],
                           low=0, low_open=True, high=1)
    out["lambda"] = _number(block, "lambda", "sampler", _SAMPLER_DEFAULTS["lambda"], low=0)
    out["subspace_dim"] = _number(block, "subspace_dim", "sampler",
                                  _SAMPLER_DEFAULTS["subspace_dim"], integer=True, low=0)
    out["stretch_a"] = _number(block, "stretch_a", "sampler", _SAMPLER_DEFAULTS["stretch_a"],
                               low=1, low_open=True)
    adapt = _require_mapping(block.get("adapt", {}), "sampler.adapt")
    _reject_unknown(adapt, set(_ADAPT_DEFAULTS), "sampler.adapt")
    adapt_out = {
        "target_low": _number(adapt, "target_low", "sampler.adapt",
                              _ADAPT_DEFAULTS["target_low"], low=0, low_open=True,
                              high=1, high_open=True),
        "target_high": _number(adapt, "target_high", "sampler.adapt",
                               _ADAPT_DEFAULTS["target_high"], low=0, low_open=True,
                               high=1, high_open=True),
        "window": _number(adapt, "window", "sampler.adapt", _ADAPT_DEFAULTS["window"],
                          integer=True, low=1),
        "factor": _number(adapt, "factor", "sampler.adapt", _ADAPT_DEFAULTS["factor"],
                          low=1, low_open=True),
    }
    freeze = adapt.get("freeze_after_burn_in", _ADAPT_DEFAULTS["freeze_after_burn_in"])
    if not isinstance(freeze, bool):
        raise ConfigurationError("sampler.adapt.freeze_after_burn_in must be a boolean")
    adapt_out["freeze_after_burn_in"] = freeze
    out["adapt"] = adapt_out
    return out


def _parse_output(block):
    block = _require_mapping(block, "output")
    _reject_unknown(block, set(_OUTPUT_DEFAULTS), "output")
    directory = block.get("directory", _OUTPUT_DEFAULTS["directory"])
    if not isinstance(directory, str) or not directory:
        raise ConfigurationError("output.directory must be a non-empty string")
    thin = _number(block, "thin", "output", _OUTPUT_DEFAULTS["thin"], integer=True, low=1)
    return {"directory": directory, "thin": thin}


@dataclass(frozen=True)
class RunConfig:
    """Validated, defaults-filled run configuration."""

    seed: int
    problem: dict
    sampler: dict
    output: dict

    def to_dict(self):
        return {
            "seed": self.seed,
            "problem": dict(self.problem),
            "sampler": {k: (dict(v) if isinstance(v, dict) else v)
                        for k, v in self.sampler.items()},
            "output": dict(self.output),
        }

    def sampler_config(self):
        s = self.sampler
        adapt = AdaptPolicy(**s["adapt"])
        return SamplerConfig(
            kind=s["kind"],
            n_particles=s["n_particles"],
            n_steps=s["n_steps"],
            burn_in_fraction=s["burn_in_fraction"],
            beta0=s["beta0"],
            lam=s["lambda"],
            subspace_dim=s["subspace_dim"],
            stretch_a=s["stretch_a"],
            adapt=adapt,
            seed=self.seed,
            thin=self.output["thin"],
        )

    def build_problem(self):
        return build_problem(self.problem)


def from_dict(raw):
    """Validate a raw configuration dictionary into a RunConfig."""
    raw = _require_mapping(raw, "config")
    _reject_unknown(raw, {"seed", "problem", "sampler", "output"}, "config")
    if "problem" not in raw:
        raise ConfigurationError("config.problem is required")
    if "sampler" not in raw:
        raise ConfigurationError("config.sampler is required")
    seed = _number(raw, "seed", "config", 0, integer=True)
    problem = _parse_problem(raw["problem"])
    sampler = _parse_sampler(raw["sampler"])
    output = _parse_output(raw.get("output", {}))
    config = RunConfig(seed=seed, problem=problem, sampler=sampler, output=output)
    # surface incompatible pairings at parse time
    config.sampler_config()
    return config


def parse_config(path):
    """Load and validate a JSON run configuration file."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    return from_dict(raw)


def build_problem(problem):
    """Instantiate the benchmark problem described by a validated problem block."""
    kind = problem["kind"]
    if kind == "linear":
        return LinearRegressionProblem(
            points_per_axis=problem["points_per_axis"],
            extent=problem["extent"],
            n_obs=problem["n_obs"],
            noise_std=problem["noise_std"],
            recipe=problem["prior"],
            boundary=problem["boundary"],
            data_seed=problem["data_seed"],
        )
    if kind in ("darcy_i", "darcy_ii"):
        return DarcyProblem(
            variant=kind.split("_")[1],
            points_per_axis=problem["points_per_axis"],
            extent=problem["extent"],
            n_obs=problem["n_obs"],
            noise_std=problem["noise_std"],
            data_seed=problem["data_seed"],
        )
    return LevelSetProblem(
        points_per_axis=problem["points_per_axis"],
        extent=problem["extent"],
        noise_std=problem["noise_std"],
        data_seed=problem["data_seed"],
        circle_center=tuple(problem["circle_center"]),
        circle_radius=problem["circle_radius"],
    )
