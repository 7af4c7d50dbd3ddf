"""Run configuration: one JSON file, selectively overridable from flags.

Every pipeline entry point (CLI subcommands, the HTTP service, discover)
reads the same RunConfig so a run is fully described by one document. The
key set is fixed; unknown keys are an error rather than a silent ignore.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .model import ModelConfig


class ConfigError(ValueError):
    """Raised for unknown keys, bad ranges, or unreadable config files."""


FEATURE_METHOD_CHOICES = ("G", "IG", "uniform")
INSTANCE_METHOD_CHOICES = ("IF", "RIF", "EUC")
VARIANT_CHOICES = ("theta", "ell")


@dataclass(frozen=True)
class RunConfig:
    """Paths, model settings, and attribution parameters for one run."""

    train_path: str | None = None
    val_path: str | None = None
    test_path: str | None = None
    checkpoint: str | None = None
    report_dir: str = "reports"
    model: ModelConfig = field(default_factory=lambda: ModelConfig(embedding_dim=16))

    feature_method: str = "IG"
    instance_method: str = "EUC"
    variant: str = "theta"
    k: int = 5
    k_pct: float = 10.0
    top_m: int = 1
    steps: int = 32
    exclusions: tuple[str, ...] = ()
    seed: int = 0

    # discover-specific knobs
    n_heatmaps: int = 10
    n_candidates: int = 10
    flip_trials: int = 10

    port: int = 8012

    def __post_init__(self) -> None:
        if self.feature_method not in FEATURE_METHOD_CHOICES:
            raise ConfigError(
                f"feature_method must be one of {FEATURE_METHOD_CHOICES}, "
                f"got {self.feature_method!r}")
        if self.instance_method not in INSTANCE_METHOD_CHOICES:
            raise ConfigError(
                f"instance_method must be one of {INSTANCE_METHOD_CHOICES}, "
                f"got {self.instance_method!r}")
        if self.variant not in VARIANT_CHOICES:
            raise ConfigError(f"variant must be one of {VARIANT_CHOICES}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0.0 < self.k_pct <= 50.0:
            raise ConfigError("k_pct must lie in (0, 50]")
        if self.top_m < 1:
            raise ConfigError("top_m must be >= 1")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.n_heatmaps < 0 or self.n_candidates < 1 or self.flip_trials < 1:
            raise ConfigError("bad discover parameters")
        if not 1 <= self.port <= 65535:
            raise ConfigError("port out of range")

    def require(self, *names: str) -> None:
        """Fail early if any of the named paths is unset."""
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"this command needs {name!r} (config key or flag)")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "model":
                out[f.name] = v.to_dict()
            elif isinstance(v, tuple):
                out[f.name] = list(v)
            else:
                out[f.name] = v
        return out

    def params(self) -> dict[str, Any]:
        """The attribution-parameter subset embedded in report envelopes."""
        return {
            "feature_method": self.feature_method,
            "instance_method": self.instance_method,
            "variant": self.variant, "k": self.k, "k_pct": self.k_pct,
            "top_m": self.top_m, "steps": self.steps,
            "exclusions": list(self.exclusions), "seed": self.seed,
        }


_RUN_KEYS = {f.name for f in fields(RunConfig)}
_MODEL_KEYS = set(ModelConfig.__dataclass_fields__)


def config_from_dict(raw: dict[str, Any]) -> RunConfig:
    unknown = sorted(set(raw) - _RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = dict(raw)
    if "model" in kwargs:
        model_raw = kwargs["model"]
        if not isinstance(model_raw, dict):
            raise ConfigError("'model' must be an object")
        bad = sorted(set(model_raw) - _MODEL_KEYS)
        if bad:
            raise ConfigError(f"unknown model keys: {', '.join(bad)}")
        try:
            kwargs["model"] = ModelConfig.from_dict(model_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad model config: {exc}") from exc
    if "exclusions" in kwargs:
        kwargs["exclusions"] = tuple(kwargs["exclusions"])
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None,
                model_overrides: dict[str, Any] | None = None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus flag overrides.

    Override values of None mean "flag not given" and are dropped. Model
    fields live in their own dict because their names (notably "seed") can
    shadow RunConfig fields; they replace individual ModelConfig fields,
    not the whole object.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: not valid JSON ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be an object")
    cfg = config_from_dict(raw)

    live = {k: v for k, v in (overrides or {}).items() if v is not None}
    model_live = {k: v for k, v in (model_overrides or {}).items() if v is not None}
    bad = sorted(set(live) - _RUN_KEYS) + sorted(set(model_live) - _MODEL_KEYS)
    if bad:
        raise ConfigError(f"unknown override keys: {', '.join(bad)}")
    if "exclusions" in live:
        live["exclusions"] = tuple(live["exclusions"])
    if model_live:
        try:
            live["model"] = replace(cfg.model, **model_live)
        except ValueError as exc:
            raise ConfigError(f"bad model override: {exc}") from exc
    if live:
        try:
            cfg = replace(cfg, **live)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return cfg
