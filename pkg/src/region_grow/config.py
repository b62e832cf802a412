"""JSON training configuration."""

from __future__ import annotations

import copy
import dataclasses
import json
import re
from dataclasses import dataclass, field

from .envs import DEFAULT_ITERATIONS, ENV_NAMES, make_env_config
from .learner import LearnerConfig
from .sampler import SamplerConfig

MODES = ("adaptive", "constant", "uniform")


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line

    def __str__(self):
        msg = super().__str__()
        return f"line {self.line}: {msg}" if self.line else msg


@dataclass
class TrainConfig:
    env: str = "lineworld"
    env_config: dict = field(default_factory=dict)
    seed_state: list | None = None
    N: int | None = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    # the constant in "constant" mode
    initial_sigma: float = 0.5
    mode: str = "adaptive"
    seed: int = 0
    eval_every: int = 10
    eval_pairs: int = 200
    output_dir: str | None = None
    checkpoint_every: int | None = None
    record_wall_time: bool = False

    def __post_init__(self):
        if self.env not in ENV_NAMES:
            raise ConfigError(f"env must be one of {ENV_NAMES}, got {self.env!r}", "env")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}", "mode")
        if self.N is None:
            self.N = DEFAULT_ITERATIONS[self.env]
        if self.N < 1:
            raise ConfigError("N must be >= 1", "N")
        if self.eval_every < 0 or self.eval_pairs < 1:
            raise ConfigError("need eval_every >= 0 and eval_pairs >= 1", "eval_every")
        if self.mode != "uniform" and not (
            self.sampler.sigma_min <= self.initial_sigma <= self.sampler.sigma_max
        ):
            raise ConfigError("initial_sigma must lie in [sigma_min, sigma_max]", "initial_sigma")
        if self.checkpoint_every is None:
            self.checkpoint_every = max(self.sampler.K, 25)
        try:
            make_env_config(self.env, self.env_config)
        except ValueError as exc:
            raise ConfigError(f"env_config: {exc}", "env_config") from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["learner"]["hidden"] = list(d["learner"]["hidden"])
        return d

    def replace(self, **kw) -> "TrainConfig":
        d = self.to_dict()
        d.update(kw)
        return config_from_dict(d)


def _section(cls, data, name):
    if isinstance(data, cls):
        return copy.deepcopy(data)
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be an object", name)
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown {name} keys: {unknown}", unknown[0])
    try:
        return cls(**data)
    except ValueError as exc:
        key = next((k for k in data if k in str(exc)), name)
        raise ConfigError(f"{name}: invariant violated: {exc}", key) from exc
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}", name) from exc


def config_from_dict(d: dict) -> TrainConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}", unknown[0])
    d = dict(d)
    d["sampler"] = _section(SamplerConfig, d.get("sampler", {}), "sampler")
    d["learner"] = _section(LearnerConfig, d.get("learner", {}), "learner")
    try:
        return TrainConfig(**d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _line_of(text: str, key: str | None) -> int | None:
    if not key:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def load_config(path) -> TrainConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text)


def parse_config(text: str) -> TrainConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    try:
        return config_from_dict(d)
    except ConfigError as exc:
        exc.line = exc.line or _line_of(text, exc.key)
        raise
