"""YAML experiment/pipeline configuration.

The schema is nested key-value sections; every section is optional and
falls back to the canonical benchmark defaults for the chosen model:

    model:       kind (ou | lotka_volterra) + model parameters
    domain:      kind (ball | box), radius or bounds
    dictionary:  max_degree, include_constant
    simulation:  horizon, observe_rate, substeps_per_observation, seed
    sampling:    num_initial, paths_per_initial, initial_bounds
    estimator:   lam, mu, mod_lam, lag_steps, invert_resolvent, method
    sweep:       frequencies, trials, methods
    sysid:       max_degree, reconstruct_horizon, reconstruct_initials
    output:      directory

The default output directory honors the KOOPGEN_OUT_DIR environment
variable.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Optional

import yaml

from .dictionary import monomials_up_to_degree
from .errors import ConfigError
from .experiments import (
    ExperimentConfig,
    lv_experiment_config,
    ou_experiment_config,
)
from .models import Domain, make_lotka_volterra, make_ou

OUT_DIR_ENV = "KOOPGEN_OUT_DIR"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "out"))


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    return data


def _build_model(section: dict):
    kind = section.get("kind", "ou")
    params = {k: v for k, v in section.items() if k != "kind"}
    try:
        if kind == "ou":
            return make_ou(**params)
        if kind in ("lotka_volterra", "lv"):
            return make_lotka_volterra(**params)
    except TypeError as exc:
        raise ConfigError(f"bad model parameters for {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def _build_domain(section: dict) -> Domain:
    kind = section.get("kind")
    if kind == "ball":
        if "radius" not in section:
            raise ConfigError("ball domain needs a radius")
        return Domain.ball(section["radius"])
    if kind == "box":
        if "bounds" not in section:
            raise ConfigError("box domain needs bounds")
        return Domain.box(section["bounds"])
    raise ConfigError(f"unknown domain kind {kind!r}")


def experiment_config_from_dict(
    data: dict, base: str = "ou", out_dir: Optional[Path] = None
) -> ExperimentConfig:
    """Merge a parsed config mapping over the canonical defaults."""
    known = {
        "model",
        "domain",
        "dictionary",
        "simulation",
        "sampling",
        "estimator",
        "sweep",
        "sysid",
        "output",
    }
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {sorted(unknown)}")

    factory = {"ou": ou_experiment_config, "lv": lv_experiment_config}.get(base)
    if factory is None:
        raise ConfigError(f"unknown experiment base {base!r}")
    overrides: dict = {}

    if "model" in data:
        overrides["model"] = _build_model(data["model"])
    if "domain" in data:
        overrides["domain"] = _build_domain(data["domain"])

    model = overrides.get("model") or factory().model
    if "dictionary" in data:
        sect = data["dictionary"]
        overrides["dictionary"] = monomials_up_to_degree(
            model.dim,
            int(sect.get("max_degree", 5)),
            bool(sect.get("include_constant", False)),
        )

    sim = data.get("simulation", {})
    if "horizon" in sim:
        overrides["horizon"] = float(sim["horizon"])
    if "substeps_per_observation" in sim:
        overrides["substeps_per_observation"] = int(sim["substeps_per_observation"])
    if "seed" in sim:
        overrides["seed"] = int(sim["seed"])

    samp = data.get("sampling", {})
    if "num_initial" in samp:
        overrides["n_initial"] = int(samp["num_initial"])
    if "paths_per_initial" in samp:
        overrides["paths_per_initial"] = int(samp["paths_per_initial"])
    if "initial_bounds" in samp:
        bounds = tuple(tuple(float(v) for v in b) for b in samp["initial_bounds"])
        if len(bounds) != model.dim:
            raise ConfigError(
                f"initial_bounds has {len(bounds)} dimensions, model has {model.dim}"
            )
        overrides["initial_bounds"] = bounds

    est = data.get("estimator", {})
    if "lam" in est:
        overrides["lam"] = float(est["lam"])
    if "mu" in est:
        overrides["mu"] = float(est["mu"])
    if "mod_lam" in est:
        overrides["mod_lam"] = float(est["mod_lam"])
    if "lag_steps" in est:
        overrides["lag_steps"] = int(est["lag_steps"])

    sweep = data.get("sweep", {})
    if "frequencies" in sweep:
        overrides["frequencies"] = tuple(float(f) for f in sweep["frequencies"])
    if "trials" in sweep:
        overrides["trials"] = int(sweep["trials"])
    if "methods" in sweep:
        overrides["methods"] = tuple(sweep["methods"])
    if "n_match" in sweep:
        overrides["n_match"] = int(sweep["n_match"])

    sid = data.get("sysid", {})
    if "max_degree" in sid:
        overrides["sysid_max_degree"] = int(sid["max_degree"])
    if "reconstruct_horizon" in sid:
        overrides["reconstruct_horizon"] = float(sid["reconstruct_horizon"])
    if "reconstruct_initials" in sid:
        overrides["reconstruct_initials"] = tuple(
            tuple(float(v) for v in pt) for pt in sid["reconstruct_initials"]
        )

    if out_dir is not None:
        overrides["out_dir"] = Path(out_dir)
    elif "output" in data and "directory" in data["output"]:
        overrides["out_dir"] = Path(data["output"]["directory"])
    else:
        overrides["out_dir"] = default_out_dir()

    try:
        return factory(**overrides)
    except TypeError as exc:
        raise ConfigError(f"bad configuration: {exc}") from exc


def pipeline_settings(data: dict) -> dict:
    """Settings consumed by the single-shot CLI commands.

    Returns the estimator method plus the observation schedule pieces that
    ``simulate``/``estimate`` need beyond the experiment config.
    """
    sim = data.get("simulation", {})
    est = data.get("estimator", {})
    return {
        "observe_rate": float(sim.get("observe_rate", 100.0)),
        "method": est.get("method", "rt"),
        "invert_resolvent": bool(est.get("invert_resolvent", True)),
    }
