"""Experiment configuration files (JSON objects; keys listed in docs/config.md)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

KINDS = ("poststrat-srs", "poststrat-cps", "outlier", "strata-jumper")

POPULATION_DEFAULTS = {
    "poststrat-srs": {"N": 500, "y_range": [0.0, 4000.0], "cutpoints": [1000.0, 2000.0, 3000.0]},
    "outlier": {
        "N": 100, "x_mean": 8000.0, "x_sd": 2000.0, "outlier_id": 1, "outlier_x": 50000.0,
        "model": [1000.0, 0.2, 500.0],
    },
    "strata-jumper": {
        "N1": 10000, "N2": 100, "jumper_id": 1, "x_mean": 8000.0, "x_sd": 2000.0,
        "model": [1000.0, 0.2, 500.0],
    },
}
POPULATION_DEFAULTS["poststrat-cps"] = POPULATION_DEFAULTS["poststrat-srs"]

DESIGN_DEFAULTS = {
    "poststrat-srs": {"n": 100},
    "poststrat-cps": {"n": 100, "p_range": [0.13, 0.27]},
    "outlier": {"n": 20},
    "strata-jumper": {"allocation": [400, 20]},
}

# MC budgets; explicit config values take precedence
BUDGETS = {
    "desk": {"cdf_draws": 100_000, "mc_draws": None, "mc_target_accepted": 5000},
    "paper": {"cdf_draws": 1_000_000, "mc_draws": 1_000_000, "mc_target_accepted": None},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    population: dict = field(default_factory=dict)
    population_seed: Optional[int] = None
    design: dict = field(default_factory=dict)
    replications: int = 1000
    runs: int = 1
    alpha: float = 0.05
    event: str = "interval"
    jumper_in_sample: bool = True
    paper_scale: bool = False
    cdf_draws: Optional[int] = None
    mc_draws: Optional[int] = None
    mc_target_accepted: Optional[int] = None
    workers: int = 1
    chunk_size: int = 1 << 14
    tie_tolerance: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        self.population = {**POPULATION_DEFAULTS[self.kind], **self.population}
        self.design = {**DESIGN_DEFAULTS[self.kind], **self.design}
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.event not in ("interval", "none"):
            raise ConfigError("event must be 'interval' or 'none'")
        if self.replications < 0 or self.runs < 0:
            raise ConfigError("replications and runs must be non-negative")
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigError("workers and chunk_size must be positive")

    def budget(self) -> dict:
        """Resolved CDF and MC budgets after applying the scale preset."""
        base = dict(BUDGETS["paper" if self.paper_scale else "desk"])
        if self.cdf_draws is not None:
            base["cdf_draws"] = self.cdf_draws
        if self.mc_draws is not None or self.mc_target_accepted is not None:
            base["mc_draws"] = self.mc_draws
            base["mc_target_accepted"] = self.mc_target_accepted
        if (base["mc_draws"] is None) == (base["mc_target_accepted"] is None):
            raise ConfigError("set exactly one of mc_draws and mc_target_accepted")
        return base

    def to_dict(self) -> dict:
        return asdict(self)


def config_from_dict(d: dict, kind: Optional[str] = None, paper_scale: Optional[bool] = None) -> ExperimentConfig:
    d = dict(d)
    if kind is not None:
        if d.get("kind", kind) != kind:
            raise ConfigError(f"config is for {d['kind']!r}, not {kind!r}")
        d["kind"] = kind
    if "kind" not in d:
        raise ConfigError("config needs a 'kind'")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    if paper_scale:
        d["paper_scale"] = True
    return ExperimentConfig(**d)


def load_config(path, kind: Optional[str] = None, paper_scale: Optional[bool] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return config_from_dict(d, kind, paper_scale)
