"""Run configuration: one JSON document with geometry, bundle, flow, eigen, verify and output blocks."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line when known."""


@dataclass
class GeometryConfig:
    n: int = 1
    sides: list = field(default_factory=lambda: [1.0, 1.0])
    grid: list = field(default_factory=lambda: [32, 32])


@dataclass
class BundleConfig:
    rank: int = 2
    seed: int = 0
    model: str = "diagonal"          # diagonal | nilpotent | zero
    amplitude: float = 1.0
    gauge_strength: float = 0.1
    roughness: int = 1


@dataclass
class FlowConfig:
    dt0: float = 1e-3
    t_max: float = 1.0
    target_residual: float = 0.0
    descent_rtol: float = 1e-12
    drift_budget: float = 1e-10
    dt_max: float = 0.05
    energy_step: float = 0.5
    adaptive: bool = True
    checkpoint_every: int = 0
    init_tol: float = 1e-6


@dataclass
class EigenConfig:
    penalties: list = field(default_factory=lambda: [1.0, 10.0, 100.0, 1e3, 1e4])
    max_iter: int = 3000
    tol: float = 1e-11
    seed: int = 0
    exclude_constants: bool = False
    traceless: bool = True
    sweep_amplitudes: list = field(default_factory=list)
    sweep_seeds: list = field(default_factory=list)
    calibration_seeds: list = field(default_factory=list)
    safety: float = 2.0


@dataclass
class VerifyConfig:
    checks: list = field(default_factory=lambda: ["weitzenbock", "energy", "chern", "cutoff"])
    samples: int = 3
    corrupt_theta: bool = False
    weitzenbock_tol: float = 1e-6
    energy_tol: float = 1e-8
    chern_tol: float = 1e-8
    cutoff_N: list = field(default_factory=lambda: [4, 16, 64])
    cutoff_R: float = 0.4
    cross_check_t: float = 0.1
    cross_check_dt: float = 0.005
    cross_check_tol: float = 1e-5


@dataclass
class OutputConfig:
    dir: str = "out"
    diagnostics: str = "diagnostics.jsonl"
    checkpoint: str = "checkpoint.ymhf"
    eigen: str = "eigen.json"
    emit_every: int = 1


@dataclass
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    bundle: BundleConfig = field(default_factory=BundleConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    eigen: EigenConfig = field(default_factory=EigenConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


_BLOCKS = {f.name: f.default_factory for f in fields(RunConfig)}
_POSITIVE = {
    ("flow", "dt0"), ("flow", "t_max"), ("flow", "descent_rtol"), ("flow", "drift_budget"),
    ("flow", "dt_max"), ("flow", "energy_step"), ("flow", "init_tol"), ("eigen", "tol"),
    ("eigen", "max_iter"), ("eigen", "safety"), ("verify", "weitzenbock_tol"),
    ("verify", "energy_tol"), ("verify", "chern_tol"), ("verify", "cutoff_R"),
    ("verify", "cross_check_t"), ("verify", "cross_check_dt"), ("verify", "cross_check_tol"),
    ("output", "emit_every"), ("bundle", "rank"), ("verify", "samples"),
}
KNOWN_CHECKS = ("weitzenbock", "energy", "chern", "cutoff", "cross_check")
MODELS = ("diagonal", "nilpotent", "zero")


def _line_of(text: str, key: str, block: str | None = None) -> int | None:
    start = 0
    if block is not None:
        m = re.search(r'"%s"\s*:' % re.escape(block), text)
        if m:
            start = m.end()
    m = re.search(r'"%s"\s*:' % re.escape(key), text[start:])
    if not m:
        return None
    return text.count("\n", 0, start + m.start()) + 1


def _fail(source: str, text: str, msg: str, key: str | None = None, block: str | None = None):
    line = _line_of(text, key, block) if key else None
    where = f"{source}:{line}" if line else source
    raise ConfigError(f"{where}: {msg}")


def _coerce(value, default, name):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"{name} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{name} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise TypeError(f"{name} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise TypeError(f"{name} must be a list")
        return value
    return value


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: top level must be a JSON object")
    cfg = RunConfig()
    for block, body in raw.items():
        if block not in _BLOCKS:
            _fail(source, text, f"unknown block {block!r}", block)
        if not isinstance(body, dict):
            _fail(source, text, f"block {block!r} must be an object", block)
        target = getattr(cfg, block)
        defaults = {f.name: getattr(target, f.name) for f in fields(target)}
        for key, value in body.items():
            if key not in defaults:
                _fail(source, text, f"unknown key {block}.{key}", key, block)
            try:
                setattr(target, key, _coerce(value, defaults[key], f"{block}.{key}"))
            except TypeError as exc:
                _fail(source, text, str(exc), key, block)
    _validate(cfg, text, source)
    return cfg


def _validate(cfg: RunConfig, text: str, source: str):
    for block, key in _POSITIVE:
        if not getattr(getattr(cfg, block), key) > 0:
            _fail(source, text, f"{block}.{key} must be positive", key, block)
    g = cfg.geometry
    if g.n not in (1, 2):
        _fail(source, text, "geometry.n must be 1 or 2", "n", "geometry")
    if len(g.sides) != 2 * g.n or not all(isinstance(s, (int, float)) and s > 0 for s in g.sides):
        _fail(source, text, f"geometry.sides must hold {2 * g.n} positive numbers", "sides", "geometry")
    if len(g.grid) != 2 * g.n or not all(isinstance(s, int) and s >= 8 and s % 2 == 0 for s in g.grid):
        _fail(source, text, f"geometry.grid must hold {2 * g.n} even integers >= 8", "grid", "geometry")
    if cfg.bundle.model not in MODELS:
        _fail(source, text, f"bundle.model must be one of {MODELS}", "model", "bundle")
    if cfg.bundle.amplitude < 0 or cfg.bundle.gauge_strength < 0 or cfg.bundle.roughness < 0:
        _fail(source, text, "bundle amplitudes and roughness must be nonnegative", "amplitude", "bundle")
    if cfg.flow.target_residual < 0 or cfg.flow.checkpoint_every < 0:
        _fail(source, text, "flow.target_residual and flow.checkpoint_every must be nonnegative",
              "target_residual", "flow")
    if not all(isinstance(p, (int, float)) and p > 0 for p in cfg.eigen.penalties):
        _fail(source, text, "eigen.penalties must be positive numbers", "penalties", "eigen")
    for key in ("sweep_amplitudes",):
        if not all(isinstance(p, (int, float)) and p > 0 for p in getattr(cfg.eigen, key)):
            _fail(source, text, f"eigen.{key} must be positive numbers", key, "eigen")
    for key in ("sweep_seeds", "calibration_seeds"):
        if not all(isinstance(p, int) and p >= 0 for p in getattr(cfg.eigen, key)):
            _fail(source, text, f"eigen.{key} must be nonnegative integers", key, "eigen")
    bad = [c for c in cfg.verify.checks if c not in KNOWN_CHECKS]
    if bad:
        _fail(source, text, f"unknown verify checks {bad}; known: {KNOWN_CHECKS}", "checks", "verify")
    if not all(isinstance(N, (int, float)) and N >= 2 for N in cfg.verify.cutoff_N):
        _fail(source, text, "verify.cutoff_N entries must be >= 2", "cutoff_N", "verify")


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))
