"""Experiment configuration and variant switches."""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


VARIANTS = (
    "baseline-gcn",
    "a3",
    "conservative",
    "ablation-fixed-theta",
    "ablation-adaptive-theta-only",
    "ablation-adaptive-sampling-only",
    "no-ensemble",
)

SWEEPABLE = ("k", "alpha", "p_drop", "per_class", "noise_q", "variant", "beta")


@dataclass(frozen=True)
class VariantFlags:
    members: bool = True
    member_pseudo: bool = True
    adaptive_theta: bool = True
    adaptive_sampling: bool = True
    consensus_pseudo: bool = True
    conservative: bool = False


VARIANT_FLAGS = {
    "a3": VariantFlags(),
    "conservative": VariantFlags(conservative=True),
    "ablation-fixed-theta": VariantFlags(adaptive_theta=False, adaptive_sampling=False),
    "ablation-adaptive-theta-only": VariantFlags(adaptive_sampling=False),
    "ablation-adaptive-sampling-only": VariantFlags(adaptive_theta=False),
    "no-ensemble": VariantFlags(member_pseudo=False, adaptive_theta=False, adaptive_sampling=False,
                                consensus_pseudo=False),
    "baseline-gcn": VariantFlags(members=False, member_pseudo=False, adaptive_theta=False,
                                 adaptive_sampling=False, consensus_pseudo=False),
}

_VARIANT_ARG = re.compile(r"^([a-z0-9-]+)\(([0-9.eE+-]+)\)$")


@dataclass(frozen=True)
class ExperimentConfig:
    # bundle directory, or {"sbm": {...generate_sbm kwargs..., "seed": int}}
    dataset: Any = field(default_factory=lambda: {"sbm": {}})
    variant: str = "a3"
    k: int = 10
    alpha: float = 0.1
    beta: float = 1.0
    p_drop: float = 0.2
    theta_init: float = 0.95
    theta_min: float = 0.5
    theta_max: float = 0.99
    max_epochs: int = 200
    hidden_dim: int = 16
    dropout: float = 0.5
    input_dropout: bool = True
    lr: float = 0.01
    weight_decay: float = 5e-4
    weight_decay_mode: str = "decoupled"
    normalize_features: bool = False
    label_aware_agreement: bool = False
    select_best_val: bool = False
    per_class: int | None = None
    noise_q: float | None = None
    trials: int = 10
    master_seed: int = 0
    sweep: dict[str, list] | None = None

    @property
    def flags(self) -> VariantFlags:
        return VARIANT_FLAGS[self.variant]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SBM_DEFAULTS = {
    "num_nodes": 400,
    "num_classes": 4,
    "p_intra": 0.05,
    "p_inter": 0.005,
    "feature_dim": 200,
    "feature_noise": 1.0,
    "seed": 0,
}


def parse_variant(raw: dict) -> dict:
    """Expand ``"ablation-fixed-theta(0.99)"`` into variant + theta_init."""
    v = raw.get("variant", "a3")
    m = _VARIANT_ARG.match(str(v))
    if m:
        raw = {**raw, "variant": m.group(1), "theta_init": float(m.group(2))}
    return raw


def make_config(raw: dict | None = None, **overrides) -> ExperimentConfig:
    raw = parse_variant({**(raw or {}), **overrides})
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
    cfg = ExperimentConfig(**raw)
    if cfg.variant in ("baseline-gcn", "no-ensemble"):
        cfg = dataclasses.replace(cfg, k=1, alpha=0.0)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    def bad(msg: str):
        raise ConfigError(msg)

    if cfg.variant not in VARIANTS:
        bad(f"variant must be one of {VARIANTS}, got {cfg.variant!r}")
    if not isinstance(cfg.k, int) or cfg.k < 1:
        bad("k must be an integer >= 1")
    if cfg.alpha < 0:
        bad("alpha must be >= 0")
    if not 0 < cfg.beta <= 1:
        bad("beta must be in (0, 1]")
    if not 0 <= cfg.p_drop <= 1:
        bad("p_drop must be in [0, 1]")
    if not 0 <= cfg.theta_min <= cfg.theta_max <= 1:
        bad("need 0 <= theta_min <= theta_max <= 1")
    if not cfg.theta_min <= cfg.theta_init <= cfg.theta_max:
        bad("theta_init must lie in [theta_min, theta_max]")
    if cfg.max_epochs < 1 or cfg.trials < 1 or cfg.hidden_dim < 1:
        bad("max_epochs, trials and hidden_dim must be >= 1")
    if not 0 <= cfg.dropout < 1:
        bad("dropout must be in [0, 1)")
    if cfg.lr <= 0 or cfg.weight_decay < 0:
        bad("lr must be > 0 and weight_decay >= 0")
    if cfg.weight_decay_mode not in ("decoupled", "l2"):
        bad("weight_decay_mode must be 'decoupled' or 'l2'")
    if cfg.per_class is not None and cfg.per_class < 1:
        bad("per_class must be >= 1")
    if cfg.noise_q is not None and cfg.noise_q < 0:
        bad("noise_q must be >= 0")
    if cfg.variant in ("baseline-gcn", "no-ensemble") and (cfg.k != 1 or cfg.alpha != 0):
        bad(f"{cfg.variant} requires k=1 and alpha=0")
    ds = cfg.dataset
    if isinstance(ds, dict):
        if set(ds) != {"sbm"} or not isinstance(ds["sbm"], dict):
            bad("dataset must be a bundle path or {'sbm': {...}}")
        extra = set(ds["sbm"]) - set(SBM_DEFAULTS)
        if extra:
            bad(f"unknown sbm field(s): {sorted(extra)}")
    elif not isinstance(ds, str):
        bad("dataset must be a bundle path or {'sbm': {...}}")
    if cfg.sweep is not None:
        if not isinstance(cfg.sweep, dict) or not cfg.sweep:
            bad("sweep must be a non-empty mapping of field -> list")
        for key, values in cfg.sweep.items():
            if key not in SWEEPABLE:
                bad(f"cannot sweep over {key!r}; allowed: {SWEEPABLE}")
            if not isinstance(values, list) or not values:
                bad(f"sweep values for {key!r} must be a non-empty list")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    return make_config(raw, **(overrides or {}))


def coerce_override(text: str) -> Any:
    """Parse a ``--set key=value`` string as JSON, falling back to a bare string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text
