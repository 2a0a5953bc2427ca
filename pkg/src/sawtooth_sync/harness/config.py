"""Experiment configuration: JSON document with baked-in simulation defaults."""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace

from ..estimators import GridConfig

EXPERIMENTS = ("vs_fd", "vs_phase", "vs_N", "vs_snr", "epsilon_plateau",
               "theorem1_check", "identifiability_scan")
ESTIMATORS = ("PCP", "LGS", "GGS")

# Monte Carlo counts per profile; "paper" is the full-size study
PROFILE_REPS = {
    "desk": {e: 100 for e in EXPERIMENTS},
    "ci": {e: 30 for e in EXPERIMENTS},
    "paper": {"vs_fd": 300, "vs_phase": 300, "vs_N": 2000, "vs_snr": 1000,
              "epsilon_plateau": 2000, "theorem1_check": 1000,
              "identifiability_scan": 1},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "vs_N"
    reps: int = 100
    seed: int = 20240101
    N: int = 2000
    T_M: float = 1e-8
    K: int = 10000
    K0: int = 500
    c: float = 3e8
    rho_range: tuple = (1.0, 3.0)
    fd_range: tuple = (-200.0, 200.0)
    # |f_d| below this is excluded from random draws (0 keeps the full range)
    fd_min_abs: float = 0.0
    phi_range: tuple = (0.0, 2 * math.pi)
    snr_in_db: float = 40.0
    snr_out_db: float = 20.0
    estimators: tuple = ("PCP", "LGS")
    grid: dict = field(default_factory=dict)
    sweep: tuple | None = None
    out: str = "results"
    emit_plots: bool = False
    profile: str | None = None
    # epsilon_plateau
    plateau_M: int = 1
    plateau_Q: int = 10
    # theorem1_check
    pings: int = 20
    # identifiability_scan
    scan_sigma_v: tuple = (0.0, 0.05)
    scan_points: int = 11
    scan_halfwidth: float = 0.05

    @property
    def T_samp(self) -> float:
        return self.K * self.T_M

    @property
    def grid_config(self) -> GridConfig:
        return GridConfig(**self.grid)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


EXPERIMENT_DEFAULTS = {
    "vs_fd": {"sweep": tuple(-200.0 + 10.0 * k for k in range(40))},
    "vs_phase": {"sweep": tuple(2 * math.pi * k / 40 for k in range(40))},
    "vs_N": {"sweep": (250, 500, 1000, 1500, 2000), "fd_min_abs": 10.0},
    "vs_snr": {"fd_min_abs": 10.0},
    "epsilon_plateau": {"sweep": (10, 25, 50, 100, 200, 300, 500, 1000, 2000),
                        "snr_out_db": 5.0, "estimators": ("GGS",)},
    "theorem1_check": {"estimators": ()},
    "identifiability_scan": {"estimators": (), "reps": 1},
}


def _coerce(name, value):
    tuples = {f.name for f in fields(ExperimentConfig)
              if f.name in ("rho_range", "fd_range", "phi_range", "estimators",
                            "sweep", "scan_sigma_v")}
    if name in tuples and value is not None:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list")
        return tuple(value)
    return value


def make_config(data: dict | None = None, **overrides) -> ExperimentConfig:
    """Build a validated config from a JSON-like dict plus overrides.

    Experiment-specific defaults apply unless the document sets the field.
    """
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    exp = data.get("experiment", ExperimentConfig.experiment)
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {EXPERIMENTS}")
    merged = dict(EXPERIMENT_DEFAULTS[exp])
    profile = data.get("profile")
    if profile is not None:
        if profile not in PROFILE_REPS:
            raise ConfigError(f"unknown profile {profile!r}")
        merged["reps"] = PROFILE_REPS[profile][exp]
    merged.update(data)
    if profile is not None and "reps" in overrides and overrides["reps"] is not None:
        merged["reps"] = overrides["reps"]
    try:
        cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in merged.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    validate(cfg)
    return cfg


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return make_config(data, **overrides)


def validate(cfg: ExperimentConfig) -> None:
    if cfg.reps < 1:
        raise ConfigError("reps must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.N < 16:
        raise ConfigError("N must be >= 16")
    if cfg.T_M <= 0 or cfg.K < 1 or cfg.K0 < 0 or cfg.c <= 0:
        raise ConfigError("invalid physical constants")
    if not cfg.K > cfg.K0 + 1:
        raise ConfigError("K must exceed K0 + 1")
    for name in ("rho_range", "fd_range", "phi_range"):
        lo, hi = getattr(cfg, name)
        if not lo < hi:
            raise ConfigError(f"{name}: need lo < hi")
    lo, hi = cfg.fd_range
    if max(abs(lo), abs(hi)) * cfg.T_samp > 0.5 or (hi * cfg.T_samp >= 0.5):
        raise ConfigError("f_d range violates |f_d| < 1/(2 T_samp)")
    if cfg.fd_min_abs < 0 or cfg.fd_min_abs >= max(abs(lo), abs(hi)):
        raise ConfigError("fd_min_abs leaves no admissible f_d")
    if cfg.rho_range[0] < 0:
        raise ConfigError("ranges must be non-negative")
    bad = set(cfg.estimators) - set(ESTIMATORS)
    if bad:
        raise ConfigError(f"unknown estimators {sorted(bad)}")
    try:
        cfg.grid_config
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from exc
    if cfg.experiment == "epsilon_plateau" and math.gcd(cfg.plateau_M, cfg.plateau_Q) != 1:
        raise ConfigError("plateau_M and plateau_Q must be co-prime")
    if cfg.sweep is not None and len(cfg.sweep) == 0:
        raise ConfigError("sweep must not be empty")
    if cfg.experiment in ("vs_N", "epsilon_plateau") and cfg.sweep:
        if any(int(v) != v or v < 1 for v in cfg.sweep):
            raise ConfigError("N sweep values must be positive integers")
        if cfg.experiment == "vs_N" and min(cfg.sweep) < 16:
            raise ConfigError("PCP needs N >= 16")


def worker_count(requested: int | None = None) -> int:
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("SAWTOOTH_SYNC_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError("SAWTOOTH_SYNC_THREADS must be an integer")
    return max(1, n)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
