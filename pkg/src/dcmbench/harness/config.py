"""Experiment configuration: dataclasses, YAML round trip and validation."""
from __future__ import annotations

import enum
import re
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..control import DcmGains, MpcSettings, ZmpComGains
from ..estimation import SchmittSettings
from ..planner import PendulumConstants, PlannerConfig, StepBounds
from ..wbc import KinematicGains, TorqueGains

SIMPLIFIED = ("instantaneous", "predictive")
WHOLEBODY = ("position", "velocity", "torque")
PLANTS = ("lipm", "kinematic")

_ARCH_SHORT = {"inst": "instantaneous", "mpc": "predictive", "pos": "position", "vel": "velocity",
               "trq": "torque"}
_ARCH_RE = re.compile(r"^(inst|mpc)[x\-_:+]?(pos|vel|trq)$")


def parse_arch(text: str) -> tuple[str, str]:
    """``"mpc-pos"``, ``"mpcxpos"`` or ``"mpc:pos"`` -> ``("predictive", "position")``."""
    m = _ARCH_RE.match(text.strip().lower())
    if not m:
        raise ValueError(f"architecture {text!r} is not <inst|mpc>x<pos|vel|trq>")
    return _ARCH_SHORT[m.group(1)], _ARCH_SHORT[m.group(2)]


def arch_label(simplified: str, wholebody: str) -> str:
    inv = {v: k for k, v in _ARCH_SHORT.items()}
    return f"{inv[simplified]}-{inv[wholebody]}"


@dataclass(frozen=True)
class Impulse:
    """One-tick disturbance: ``dcm`` shifts the plant DCM, ``zmp`` the measured ZMP."""
    time: float
    target: str = "dcm"
    value: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.target not in ("dcm", "zmp"):
            raise ValueError("impulse target must be 'dcm' or 'zmp'")
        object.__setattr__(self, "value", tuple(float(v) for v in self.value))


@dataclass(frozen=True)
class Disturbances:
    impulses: tuple = ()
    zmp_noise_std: float = 0.0


@dataclass(frozen=True)
class CoMTracking:
    """Gains turning CoM references into the torque-mode ZMP reference."""
    kp: float = 10.0
    kd: float = 2.0 * np.sqrt(10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    simplified: str = "instantaneous"
    wholebody: str = "position"
    plant: str = "kinematic"
    period: float = 0.01
    duration: float | None = None        # None: the planned trajectory length
    seed: int = 0
    model: str | None = None             # None: the bundled mini biped
    output: str | None = None
    pendulum: PendulumConstants = field(default_factory=lambda: PendulumConstants(z0=0.5))
    planner: PlannerConfig = field(default_factory=lambda: PlannerConfig(
        speed=0.15, horizon=8.0, bounds=StepBounds(t_min=1.0, t_max=1.2)))
    dcm: DcmGains = field(default_factory=DcmGains)
    mpc: MpcSettings = field(default_factory=MpcSettings)
    zmp_com: ZmpComGains = field(default_factory=ZmpComGains)
    kinematic: KinematicGains = field(default_factory=lambda: KinematicGains(joint_velocity_limits=(-5.0, 5.0)))
    torque: TorqueGains = field(default_factory=TorqueGains)
    torque_project_zmp: bool = True
    torque_zmp_margin: float = 0.0
    torque_coplanar_tol: float = 1e-3    # double-support sole height mismatch tolerated by the torque QP
    com_tracking: CoMTracking = field(default_factory=CoMTracking)
    estimation: SchmittSettings = field(default_factory=SchmittSettings)
    velocity_lag: float = 0.03
    disturbances: Disturbances = field(default_factory=Disturbances)
    fall_threshold: float = 0.3
    max_consecutive_failures: int = 10

    @property
    def arch(self) -> str:
        return arch_label(self.simplified, self.wholebody)

    def validate(self) -> None:
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.simplified not in SIMPLIFIED:
            raise ValueError(f"simplified must be one of {SIMPLIFIED}")
        if self.wholebody not in WHOLEBODY:
            raise ValueError(f"wholebody must be one of {WHOLEBODY}")
        if self.plant not in PLANTS:
            raise ValueError(f"plant must be one of {PLANTS}")
        if self.wholebody == "torque" and self.plant != "kinematic":
            raise ValueError("torque replays need the kinematic full-body plant")
        if self.plant == "kinematic" and any(i.target == "dcm" for i in self.disturbances.impulses):
            raise ValueError("DCM impulses need the LIPM plant; a position-controlled full body cannot be pushed")
        if self.duration is not None and not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.velocity_lag > 0 or not self.fall_threshold > 0:
            raise ValueError("velocity lag and fall threshold must be positive")
        if self.disturbances.zmp_noise_std < 0:
            raise ValueError("noise std must be non-negative")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        self.planner.bounds.validate()
        self.dcm.validate()
        self.zmp_com.validate(self.pendulum.b)
        self.torque.validate()

    def to_dict(self) -> dict:
        return _plain(asdict(self))


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, enum.Enum):
        return v.value
    if isinstance(v, np.generic):
        return v.item()
    return v


def _build(tp, value):
    """Convert plain YAML data into an instance of the annotated type ``tp``."""
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _build(args[0], value)
    if isinstance(tp, type) and is_dataclass(tp):
        if isinstance(value, tp):
            return value
        return from_dict(tp, value)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return tp(value)
    if tp is tuple or origin is tuple:
        return tuple(value)
    if tp is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def from_dict(cls, data: dict | None):
    """Build dataclass ``cls`` from a (possibly partial) mapping; unknown keys are errors."""
    data = dict(data or {})
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls) if f.init}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for k, v in data.items():
        tp = hints[k]
        if cls is Disturbances and k == "impulses":
            kwargs[k] = tuple(from_dict(Impulse, i) for i in v or [])
        else:
            kwargs[k] = _build(tp, v)
    return cls(**kwargs)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def config_from_dict(data: dict | None) -> ExperimentConfig:
    """Defaults overlaid with ``data``; nested blocks merge key by key."""
    merged = _merge(ExperimentConfig().to_dict(), data or {})
    return from_dict(ExperimentConfig, merged)


def default_config_text() -> str:
    return resources.files("dcmbench.harness").joinpath("data/default.yaml").read_text()


def load_config(path=None) -> ExperimentConfig:
    """Bundled defaults, overlaid with the YAML file at ``path`` if given."""
    data = yaml.safe_load(default_config_text()) or {}
    if path is not None:
        user = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(user, dict):
            raise ValueError(f"{path}: config must be a mapping")
        data = _merge(data, user)
    return config_from_dict(data)


def dump_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)


def with_overrides(config: ExperimentConfig, *, arch: str | None = None, seed: int | None = None,
                   speed: float | None = None, duration: float | None = None,
                   output: str | None = None) -> ExperimentConfig:
    """Apply the command-line overrides."""
    kw = {}
    if arch is not None:
        kw["simplified"], kw["wholebody"] = parse_arch(arch)
    if seed is not None:
        kw["seed"] = int(seed)
    if speed is not None:
        kw["planner"] = replace(config.planner, speed=float(speed))
    if duration is not None:
        kw["duration"] = float(duration)
    if output is not None:
        kw["output"] = str(output)
    return replace(config, **kw)
