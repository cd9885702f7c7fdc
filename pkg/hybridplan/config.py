"""Tuning of the whole stack

Every module owns a frozen dataclass with its defaults. :class:`StackConfig`
composes them, and :func:`load_config` merges a JSON document over the
defaults::

    {"mpt": {"weights": {"w_y": 2.0}}, "sampler": {"horizon_s": 6.0}}

Unknown keys and values of the wrong type raise
:class:`~hybridplan.errors.ConfigError` naming the JSON pointer.
"""

from dataclasses import dataclass, field, fields, is_dataclass, replace
from numbers import Real
from typing import Optional

from megfile import smart_open

import hybridplan.utils.compat_json as json
from hybridplan.cruise import CruiseConfig
from hybridplan.errors import ConfigError, ValidationError
from hybridplan.geometry import Footprint
from hybridplan.mpt import MptConfig
from hybridplan.neural.expert import ExpertConfig
from hybridplan.neural.train import TrainerConfig
from hybridplan.sampler import IdmParams, SamplerConfig
from hybridplan.sim.controller import ControllerGains
from hybridplan.sim.loop import SimConfig

__all__ = ["StackConfig", "load_config"]


@dataclass(frozen=True)
class StackConfig:
    footprint: Footprint = field(default_factory=Footprint)
    idm: IdmParams = field(default_factory=IdmParams)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    mpt: MptConfig = field(default_factory=MptConfig)
    cruise: CruiseConfig = field(default_factory=CruiseConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    controller: ControllerGains = field(default_factory=ControllerGains)
    sim: SimConfig = field(default_factory=SimConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    dropout: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "mpt", replace(self.mpt, footprint=self.footprint))
        if abs(self.sampler.dt - self.mpt.dt) > 1e-9:
            raise ConfigError(
                "/mpt/dt",
                "differs from sampler dt: %r != %r" % (self.mpt.dt, self.sampler.dt),
            )
        if self.sampler.horizon_points != self.mpt.horizon_points:
            raise ConfigError(
                "/mpt/horizon_points",
                "differs from sampler horizon: %r != %r"
                % (self.mpt.horizon_points, self.sampler.horizon_points),
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("/dropout", "must lie in [0, 1): %r" % self.dropout)

    def to_dict(self) -> dict:
        data = _to_dict(self)
        del data["mpt"]["footprint"]
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "StackConfig":
        return _merge(cls(), data, "")


def _to_dict(value):
    if is_dataclass(value):
        return {f.name: _to_dict(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, tuple):
        return [_to_dict(v) for v in value]
    return value


def _coerce(default, value, pointer: str):
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif isinstance(default, float):
        if isinstance(value, Real) and not isinstance(value, bool):
            return float(value)
    elif isinstance(default, str) or default is None:
        if value is None or isinstance(value, str):
            return value
    elif isinstance(default, tuple):
        if isinstance(value, list):
            return tuple(
                _coerce(default[0] if default else 0.0, v, "%s/%d" % (pointer, i))
                for i, v in enumerate(value)
            )
    raise ConfigError(
        pointer, "expect %s, got %r" % (type(default).__name__, value)
    )


def _merge(default, overrides, pointer: str):
    if not isinstance(overrides, dict):
        raise ConfigError(pointer, "expect an object, got %r" % (overrides,))
    names = {f.name for f in fields(default)}
    changes = {}
    for key, value in overrides.items():
        at = "%s/%s" % (pointer, key)
        if key not in names:
            raise ConfigError(at, "unknown key")
        current = getattr(default, key)
        if is_dataclass(current):
            changes[key] = _merge(current, value, at)
        else:
            changes[key] = _coerce(current, value, at)
    try:
        return replace(default, **changes)
    except ConfigError:
        raise
    except ValidationError as error:
        raise ConfigError(pointer, str(error)) from None


def load_config(path: Optional[str] = None) -> StackConfig:
    """Defaults, overridden by the JSON file at ``path`` when given"""
    if path is None:
        return StackConfig()
    with smart_open(path, "rb") as fp:
        content = fp.read()
    try:
        data = json.loads(content)
    except json.JSONDecodeError as error:
        raise ConfigError("", "invalid json in %r: %s" % (path, error)) from None
    return StackConfig.from_dict(data)
