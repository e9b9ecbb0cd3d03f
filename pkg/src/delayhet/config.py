"""Experiment configuration: a versioned YAML schema with strict key checking.

Layout (schema_version 1)::

    schema_version: 1
    dataset:  {type: quadratic, m, n, d, eig_range: [lo, hi], noise_std}
    delay:    {type: synthetic | trace, ...}
    selector: one mapping or a list of mappings, each with a ``type``
    engine:   {eta, local_steps, max_rounds, target_metric, target_value, ...}
    seeds:    [0, 1, 2]

Unknown keys anywhere are errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import delays
from .core import ClientRoster, make_roster
from .engine import TARGET_METRICS, EngineConfig
from .selection import (
    DivFLSelector,
    FlanpSelector,
    PowerOfChoiceSelector,
    RandomSelector,
    SamplingSelector,
    Selector,
    SubmodularSelector,
)

SCHEMA_VERSION = 1
DELAY_SEED_OFFSET = 1000  # delay means for seed s are drawn with seed s + offset


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    m: int
    n: int
    d: int
    eig_range: tuple[float, float] = (1.0, 10.0)
    noise_std: float = 0.001


@dataclass(frozen=True)
class DelaySpec:
    type: str
    lognormal_sigma: float = 0.0
    synthetic: delays.SyntheticDelayConfig | None = None
    trace_means: np.ndarray | None = None
    trace_sigma: np.ndarray | None = None  # per-client column from the trace file
    sigma_overridden: bool = False

    def build(self, m: int, seed: int) -> tuple[ClientRoster, delays.DelayModel]:
        """Sorted roster and the delay model aligned with it."""
        if self.type == "synthetic":
            means = delays.synthesize_delays(self.synthetic, m, seed + DELAY_SEED_OFFSET)
        else:
            means = self.trace_means
        roster = make_roster(means)
        if self.type == "synthetic" and self.lognormal_sigma == 0:
            return roster, delays.ConstantDelays(roster.mean_delays)
        sigma = self.lognormal_sigma
        if self.trace_sigma is not None and not self.sigma_overridden:
            sigma = self.trace_sigma[roster.order]
        return roster, delays.DelayModel(roster.mean_delays, sigma)


@dataclass(frozen=True)
class SelectorSpec:
    type: str
    name: str
    params: dict[str, Any] = field(default_factory=dict)

    def build(self) -> Selector:
        return SELECTOR_TYPES[self.type][0](**self.params)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    delay: DelaySpec
    selectors: tuple[SelectorSpec, ...]
    engine: dict[str, Any]
    seeds: tuple[int, ...]

    def engine_config(self, seed: int) -> EngineConfig:
        return EngineConfig(seed=seed, **self.engine)


# type -> (constructor, allowed knobs, required knobs)
SELECTOR_TYPES: dict[str, tuple[type, set[str], set[str]]] = {
    "submodular": (SubmodularSelector, {"method", "margin", "every_round"}, set()),
    "sampling": (SamplingSelector, {"K", "mode", "margin", "every_round", "restarts"}, {"K"}),
    "random": (RandomSelector, {"K"}, {"K"}),
    "power_of_choice": (PowerOfChoiceSelector, {"K", "candidates"}, {"K"}),
    "divfl": (DivFLSelector, {"K"}, {"K"}),
    "flanp": (FlanpSelector, {"initial", "patience", "threshold"}, set()),
}

_ENGINE_KEYS = {
    "eta", "local_steps", "max_rounds", "target_metric", "target_value", "covariance_batch", "charge_warmup"
}


def _mapping(block: Any, where: str) -> dict[str, Any]:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(block).__name__}")
    return block


def _check_keys(block: dict, where: str, allowed: set[str], required: set[str] = frozenset()) -> None:
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(map(str, unknown))}")
    missing = sorted(required - set(block))
    if missing:
        raise ConfigError(f"{where}: missing key(s) {', '.join(missing)}")


def _number(block: dict, key: str, where: str, kind: type = float, minimum: float | None = None) -> Any:
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or (kind is int and not isinstance(val, int)):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {val!r}")
    if minimum is not None and val < minimum:
        raise ConfigError(f"{where}.{key}: must be >= {minimum}, got {val!r}")
    return kind(val)


def _pair(block: dict, key: str, where: str) -> tuple[float, float]:
    val = block[key]
    if not isinstance(val, (list, tuple)) or len(val) != 2:
        raise ConfigError(f"{where}.{key}: expected a two-element list")
    lo, hi = (_number({key: v}, key, where) for v in val)
    if lo > hi:
        raise ConfigError(f"{where}.{key}: lower bound exceeds upper bound")
    return lo, hi


def _parse_dataset(raw: Any) -> DatasetSpec:
    block = _mapping(raw, "dataset")
    _check_keys(block, "dataset", {"type", "m", "n", "d", "eig_range", "noise_std"}, {"type", "m", "n", "d"})
    if block["type"] != "quadratic":
        raise ConfigError(f"dataset.type: only 'quadratic' is supported, got {block['type']!r}")
    spec = DatasetSpec(
        m=_number(block, "m", "dataset", int, 1),
        n=_number(block, "n", "dataset", int, 1),
        d=_number(block, "d", "dataset", int, 1),
    )
    if "eig_range" in block:
        lo, hi = _pair(block, "eig_range", "dataset")
        if lo <= 0:
            raise ConfigError("dataset.eig_range: eigenvalues must be positive")
        spec = DatasetSpec(spec.m, spec.n, spec.d, (lo, hi), spec.noise_std)
    if "noise_std" in block:
        spec = DatasetSpec(spec.m, spec.n, spec.d, spec.eig_range, _number(block, "noise_std", "dataset", float, 0))
    return spec


def _parse_delay(raw: Any, m: int, base: Path) -> DelaySpec:
    block = _mapping(raw, "delay")
    if "type" not in block:
        raise ConfigError("delay: missing key(s) type")
    kind = block["type"]
    if kind == "synthetic":
        _check_keys(
            block, "delay",
            {"type", "model_size_bytes", "link_speed_range", "compute_range", "lognormal_sigma"},
        )
        kw: dict[str, Any] = {}
        if "model_size_bytes" in block:
            kw["model_size_bytes"] = _number(block, "model_size_bytes", "delay", float, 0)
        for key in ("link_speed_range", "compute_range"):
            if key in block:
                kw[key] = _pair(block, key, "delay")
        try:
            synthetic = delays.SyntheticDelayConfig(**kw)
        except ValueError as exc:
            raise ConfigError(f"delay: {exc}") from None
        sigma = _number(block, "lognormal_sigma", "delay", float, 0) if "lognormal_sigma" in block else 0.0
        return DelaySpec("synthetic", sigma, synthetic=synthetic)
    if kind == "trace":
        _check_keys(block, "delay", {"type", "path", "lognormal_sigma"}, {"type", "path"})
        path = Path(block["path"])
        if not path.is_absolute():
            path = base / path
        if not path.is_file():
            raise ConfigError(f"delay.path: trace file {path} does not exist")
        try:
            means, sigma_col = delays.read_trace(path)
        except ValueError as exc:
            raise ConfigError(f"delay.path: {exc}") from None
        if len(means) != m:
            raise ConfigError(f"delay.path: trace has {len(means)} clients but dataset.m = {m}")
        given = "lognormal_sigma" in block
        sigma = _number(block, "lognormal_sigma", "delay", float, 0) if given else 0.5
        return DelaySpec("trace", sigma, trace_means=means, trace_sigma=sigma_col, sigma_overridden=given)
    raise ConfigError(f"delay.type: expected 'synthetic' or 'trace', got {kind!r}")


def _parse_selectors(raw: Any, m: int) -> tuple[SelectorSpec, ...]:
    items = raw if isinstance(raw, list) else [raw]
    if not items:
        raise ConfigError("selector: at least one selector is required")
    specs, names = [], set()
    for idx, item in enumerate(items):
        where = "selector" if not isinstance(raw, list) else f"selector[{idx}]"
        block = dict(_mapping(item, where))
        kind = block.pop("type", None)
        if kind not in SELECTOR_TYPES:
            raise ConfigError(f"{where}.type: expected one of {sorted(SELECTOR_TYPES)}, got {kind!r}")
        name = block.pop("name", kind)
        if not isinstance(name, str) or not name or any(c in name for c in "/\\ "):
            raise ConfigError(f"{where}.name: must be a non-empty name without spaces or slashes")
        if name in names:
            raise ConfigError(f"{where}.name: duplicate selector name {name!r}")
        names.add(name)
        _, allowed, required = SELECTOR_TYPES[kind]
        _check_keys(block, f"{where} ({kind})", allowed, required)
        if "K" in block:
            K = _number(block, "K", where, int, 1)
            if K > m:
                raise ConfigError(f"{where} ({kind}): K={K} exceeds the number of clients m={m}")
        specs.append(SelectorSpec(kind, name, block))
    return tuple(specs)


def _parse_engine(raw: Any) -> dict[str, Any]:
    block = dict(_mapping(raw, "engine"))
    _check_keys(block, "engine", _ENGINE_KEYS)
    if block.get("eta") == "auto":
        block["eta"] = None
    if "target_metric" in block and block["target_metric"] not in TARGET_METRICS:
        raise ConfigError(f"engine.target_metric: expected one of {TARGET_METRICS}")
    try:
        EngineConfig(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"engine: {exc}") from None
    return block


def _parse_seeds(raw: Any) -> tuple[int, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("seeds: expected a non-empty list of integers")
    if any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in raw):
        raise ConfigError("seeds: every seed must be a non-negative integer")
    if len(set(raw)) != len(raw):
        raise ConfigError("seeds: duplicate seed")
    return tuple(raw)


def parse_config(raw: Any, base: Path = Path(".")) -> ExperimentConfig:
    top = _mapping(raw, "config")
    _check_keys(
        top, "config",
        {"schema_version", "dataset", "delay", "selector", "engine", "seeds"},
        {"schema_version", "dataset", "delay", "selector", "seeds"},
    )
    if top["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {top['schema_version']!r}")
    dataset = _parse_dataset(top["dataset"])
    return ExperimentConfig(
        dataset=dataset,
        delay=_parse_delay(top["delay"], dataset.m, base),
        selectors=_parse_selectors(top["selector"], dataset.m),
        engine=_parse_engine(top.get("engine", {})),
        seeds=_parse_seeds(top["seeds"]),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f":{mark.line + 1}:{mark.column + 1}" if mark is not None else ""
        raise ConfigError(f"{path}{loc}: {getattr(exc, 'problem', None) or exc}") from None
    return parse_config(raw, path.parent)
