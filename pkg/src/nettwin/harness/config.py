"""Run configuration: one JSON document, unknown keys rejected.

Top-level keys and their defaults mirror :class:`RunConfig`; the nested
sections ``chamber``, ``body``, ``camera``, ``ppo`` and ``intrinsic`` map onto
their own dataclasses.  ``docs/config.md`` lists every key.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from ..intrinsic import ALGORITHMS, IntrinsicConfig
from ..ppo import PpoConfig
from ..world import CONDITIONS, AgentBody, ChamberSpec, RearingCondition, check_fits


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CameraConfig:
    fov: float = 60.0
    near: float = 0.1


@dataclass
class RunConfig:
    seed: int = 0
    condition: int = 1
    algorithm: str = "icm"
    episodes: int = 1000
    episode_steps: int = 1000
    test_trial_steps: int = 1000
    n_imprinting: int = 40
    stimulus_period_steps: int = 60
    waveform: str = "triangle"
    training_wall: str = "x0"
    greedy: bool = False
    chamber: ChamberSpec = field(default_factory=ChamberSpec)
    body: AgentBody = field(default_factory=AgentBody)
    camera: CameraConfig = field(default_factory=CameraConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    intrinsic: IntrinsicConfig = field(default_factory=IntrinsicConfig)

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ConfigError(f"condition must be one of {sorted(CONDITIONS)}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        for name in ("episodes", "episode_steps", "test_trial_steps", "stimulus_period_steps"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_imprinting < 0 or self.n_imprinting % 2:
            raise ConfigError("n_imprinting must be a non-negative even number")
        if self.training_wall not in ("x0", "xL"):
            raise ConfigError("training_wall must be 'x0' or 'xL'")
        if self.waveform not in ("triangle", "sine"):
            raise ConfigError("waveform must be 'triangle' or 'sine'")
        self.intrinsic = dataclasses.replace(self.intrinsic, algorithm=self.algorithm)
        try:
            check_fits(self.chamber, self.body)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def rearing(self) -> RearingCondition:
        return CONDITIONS[self.condition]

    @property
    def total_env_steps(self) -> int:
        return self.episodes * self.episode_steps

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["intrinsic"].pop("algorithm")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a JSON object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    if cls is IntrinsicConfig:
        names.discard("algorithm")
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        path = f"{where}.{key}" if where else key
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, path)
        else:
            kwargs[key] = _coerce(hint, value, path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def _coerce(hint, value, path):
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path} must be a boolean")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path} must be a string")
        return value
    return value


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "")


def load_config(path) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def smoke_config(**overrides) -> RunConfig:
    """Tiny configuration used by the test suite and the README walkthrough."""
    base = {
        "episodes": 10,
        "episode_steps": 200,
        "test_trial_steps": 10,
        "ppo": {"batch_size": 128, "buffer_size": 512, "max_steps": 2000},
        "intrinsic": {"contrastive_update_period": 64, "contrastive_batch": 16, "contrastive_replay": 128},
    }
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            base[k] = {**base[k], **v}
        else:
            base[k] = v
    return config_from_dict(base)
