"""Run configuration: INI file with [model], [detection], [experiment], [io].

Every key is typed and validated up front; errors name the offending
section.key. Command-line flags override file values. ``build_model_spec``
turns the model section into the in-process model object.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .score import ModelSpec
from .spatial import (
    SpatialModel,
    correlation_matrix,
    default_layout,
    grid_layout,
    read_layout_csv,
)
from .stream_network import TailUpParams, read_network, tailup_covariance
from .temporal import TemporalModel

_SCHEMA = {
    "model": {
        "p": int,
        "sigma": str,  # "identity" or a CSV path
        "spatial": str,  # spherical | exponential | matern | stream
        "rho": float,
        "matern_order": float,
        "layout": str,  # auto | grid RxC | a CSV path
        "spacing": float,
        "segments": str,
        "locations": str,
        "zeta1": float,
        "zeta2": float,
        "nugget": float,
        "temporal": str,  # var1 | varma11
        "eta": float,
        "theta_min": float,
        "theta_max": float,
        "theta_step": float,
    },
    "detection": {
        "method": str,
        "b": float,
        "alpha": float,
        "arl": float,
        "n": int,
        "omega": int,
        "mcusum_k": float,
        "train_prefix": int,
    },
    "experiment": {
        "kind": str,  # sl | arl | edd | arl-sweep
        "reps": int,
        "seed": int,
        "gamma": float,
        "mu": float,
        "theta_true": float,
        "change_time": int,
        "max_horizon": int,
        "b_min": float,
        "b_max": float,
        "b_step": float,
    },
    "io": {
        "input": str,
        "output": str,
        "format": str,  # json | csv
    },
}

_DEFAULTS = {
    ("model", "sigma"): "identity",
    ("model", "spatial"): "spherical",
    ("model", "rho"): 0.3,
    ("model", "layout"): "auto",
    ("model", "spacing"): 1.0,
    ("model", "nugget"): 0.0,
    ("model", "temporal"): "var1",
    ("model", "eta"): 0.0,
    ("model", "theta_min"): 0.1,
    ("model", "theta_max"): 0.9,
    ("model", "theta_step"): 0.1,
    ("detection", "method"): "s3t",
    ("detection", "mcusum_k"): 0.5,
    ("detection", "train_prefix"): 50,
    ("experiment", "kind"): "sl",
    ("experiment", "reps"): 1000,
    ("experiment", "seed"): 1,
    ("experiment", "gamma"): 0.0,
    ("experiment", "mu"): 0.0,
    ("experiment", "theta_true"): 0.5,
    ("experiment", "change_time"): 0,
    ("io", "format"): "json",
}


@dataclass
class RunConfig:
    """Typed view of the config file plus CLI overrides."""

    values: dict = field(default_factory=dict)

    def get(self, section: str, key: str, default=None):
        return self.values.get((section, key), _DEFAULTS.get((section, key), default))

    def set(self, section: str, key: str, value):
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown config field {section}.{key}")
        self.values[(section, key)] = value

    def has(self, section: str, key: str) -> bool:
        return (section, key) in self.values

    def require(self, section: str, key: str):
        val = self.get(section, key)
        if val is None:
            raise ConfigError(f"missing required config field {section}.{key}")
        return val

    def echo(self) -> dict:
        out: dict = {}
        for (section, key), val in sorted(self.values.items()):
            out.setdefault(section, {})[key] = val
        for (section, key), val in _DEFAULTS.items():
            out.setdefault(section, {}).setdefault(key, val)
        return out


def load_config(path: str | None) -> RunConfig:
    """Parse and type-check an INI file; unknown fields are errors."""
    cfg = RunConfig()
    if path is None:
        return cfg
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"config file {path} is not valid INI: {exc}") from exc
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config field {section}.{key}")
            typ = _SCHEMA[section][key]
            try:
                cfg.set(section, key, typ(raw))
            except ValueError as exc:
                raise ConfigError(
                    f"config field {section}.{key} must be {typ.__name__}, got {raw!r}"
                ) from exc
    return cfg


def theta_grid_from(cfg: RunConfig) -> np.ndarray:
    lo = float(cfg.get("model", "theta_min"))
    hi = float(cfg.get("model", "theta_max"))
    step = float(cfg.get("model", "theta_step"))
    if step <= 0:
        raise ConfigError("model.theta_step must be positive")
    if hi < lo:
        raise ConfigError("model.theta_max must be >= model.theta_min")
    n = int(round((hi - lo) / step)) + 1
    grid = lo + step * np.arange(n)
    grid = grid[grid <= hi + 1e-12]
    if grid.size == 0:
        raise ConfigError("model theta grid is empty")
    return grid


def _sigma_from(cfg: RunConfig, p: int) -> np.ndarray:
    src = str(cfg.get("model", "sigma"))
    if src == "identity":
        return np.eye(p)
    if not os.path.exists(src):
        raise ConfigError(f"model.sigma file not found: {src}")
    sigma = np.loadtxt(src, delimiter=",", skiprows=1)
    sigma = np.atleast_2d(sigma)
    if sigma.shape != (p, p):
        raise ConfigError(f"model.sigma has shape {sigma.shape}, expected ({p}, {p})")
    return sigma


def _layout_from(cfg: RunConfig, p: int):
    spec = str(cfg.get("model", "layout"))
    spacing = float(cfg.get("model", "spacing"))
    if spec == "auto":
        if p == 2:
            return grid_layout(1, 2, spacing)
        return default_layout(p, spacing)
    if spec.startswith("grid"):
        dims = spec.split(None, 1)[1] if " " in spec else spec[4:]
        try:
            rows, cols = (int(v) for v in dims.lower().split("x"))
        except Exception as exc:
            raise ConfigError(
                f"model.layout grid spec must look like 'grid 3x3', got {spec!r}"
            ) from exc
        if rows * cols != p:
            raise ConfigError(f"model.layout grid {rows}x{cols} does not match p={p}")
        return grid_layout(rows, cols, spacing)
    if not os.path.exists(spec):
        raise ConfigError(f"model.layout file not found: {spec}")
    layout = read_layout_csv(spec)
    if layout.n_sensors != p:
        raise ConfigError(f"model.layout has {layout.n_sensors} sensors, expected p={p}")
    return layout


def build_model_spec(cfg: RunConfig) -> ModelSpec:
    """Assemble the model from the [model] section."""
    spatial_kind = str(cfg.get("model", "spatial"))
    temporal = TemporalModel(
        str(cfg.get("model", "temporal")),
        theta=float(cfg.get("experiment", "theta_true")),
        eta=float(cfg.get("model", "eta")),
    )
    grid = theta_grid_from(cfg)
    if spatial_kind == "stream":
        segs = cfg.require("model", "segments")
        locs = cfg.require("model", "locations")
        for path in (segs, locs):
            if not os.path.exists(path):
                raise ConfigError(f"stream network file not found: {path}")
        net = read_network(segs, locs)
        params = TailUpParams(
            zeta1=float(cfg.require("model", "zeta1")),
            zeta2=float(cfg.require("model", "zeta2")),
            nugget=float(cfg.get("model", "nugget")),
        )
        lam = tailup_covariance(net, params)
        p = lam.shape[0]
        if cfg.has("model", "p") and int(cfg.get("model", "p")) != p:
            raise ConfigError(
                f"model.p = {cfg.get('model', 'p')} conflicts with the "
                f"{p}-location stream network"
            )
    else:
        p = int(cfg.require("model", "p"))
        if p < 1:
            raise ConfigError("model.p must be >= 1")
        model = SpatialModel(
            spatial_kind,
            float(cfg.get("model", "rho")),
            matern_order=cfg.get("model", "matern_order"),
        )
        lam = correlation_matrix(model, _layout_from(cfg, p))
    sigma = _sigma_from(cfg, p)
    return ModelSpec(sigma=sigma, lam=lam, temporal=temporal, theta_grid=grid)


def detection_targets(cfg: RunConfig) -> dict:
    """Validate that exactly one of b / alpha / arl is configured."""
    given = [k for k in ("b", "alpha", "arl") if cfg.has("detection", k)]
    if len(given) != 1:
        raise ConfigError(
            "detection section must set exactly one of b, alpha or arl "
            f"(got {given or 'none'})"
        )
    return {given[0]: cfg.get("detection", given[0])}
