"""Scenario configuration: YAML schema, validation and model construction.

Keys carry their units (``tau_s``, ``radius_m``...). Unknown keys are
rejected. Dataclass attributes mirror the file keys one to one, so
parse -> serialize -> parse is a fixed point.
"""
import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError
from .plant_sim import SecondOrderDelayPlant, delay_steps
from .safety_filter import BarrierField, CircularObstacle, SuperellipseObstacle
from .vfo_tracking import CircleTrajectory, Figure8Trajectory

SCHEMA_VERSION = 1
BUILTIN_SCENARIOS = ("circle_sp", "circle_no_sp", "figure8", "two_circular_obstacles", "square_obstacle")


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return value


def _load(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for name, f in names.items():
        key = f"{where}.{name}" if where else name
        if name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{key}: missing required key")
            continue
        value = data[name]
        kind = f.metadata.get("kind", "float")
        if kind == "float":
            kwargs[name] = _number(value, key)
        elif kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key}: expected an integer")
            kwargs[name] = value
        elif kind == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"{key}: expected true/false")
            kwargs[name] = value
        elif kind == "str":
            if not isinstance(value, str):
                raise ConfigError(f"{key}: expected a string")
            kwargs[name] = value
        elif kind == "nested":
            kwargs[name] = _load(f.metadata["cls"], value, key)
        elif kind == "optional":
            kwargs[name] = None if value is None else _load(f.metadata["cls"], value, key)
        elif kind == "obstacles":
            if not isinstance(value, list):
                raise ConfigError(f"{key}: expected a list")
            kwargs[name] = [_load_obstacle(item, f"{key}[{i}]") for i, item in enumerate(value)]
        else:  # pragma: no cover - schema bug
            raise AssertionError(kind)
    return cls(**kwargs)


def _dump(obj):
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        kind = f.metadata.get("kind", "float")
        if kind in ("nested", "optional"):
            value = None if value is None else _dump(value)
        elif kind == "obstacles":
            value = [_dump(o) for o in value]
        out[f.name] = value
    return out


def _str(default=dataclasses.MISSING):
    return field(default=default, metadata={"kind": "str"})


def _bool(default):
    return field(default=default, metadata={"kind": "bool"})


def _nested(cls):
    return field(metadata={"kind": "nested", "cls": cls})


@dataclass(kw_only=True)
class PlantSpec:
    num1: float
    num0: float
    den1: float
    den0: float
    tau_s: float

    def build(self):
        return SecondOrderDelayPlant(self.num1, self.num0, self.den1, self.den0, self.tau_s)


@dataclass(kw_only=True)
class PiGains:
    kp: float
    ki_per_s: float


@dataclass(kw_only=True)
class PoseSpec:
    x_m: float
    y_m: float
    theta_deg: float


@dataclass(kw_only=True)
class TrajectorySpec:
    kind: str = _str()
    omega_rad_s: float
    radius_m: Optional[float] = None
    ax_m: Optional[float] = None
    ay_m: Optional[float] = None

    def build(self):
        if self.kind == "circle":
            if self.radius_m is None or self.ax_m is not None or self.ay_m is not None:
                raise ConfigError("trajectory: circle takes radius_m and omega_rad_s only")
            return CircleTrajectory(self.radius_m, self.omega_rad_s)
        if self.kind == "figure8":
            if self.ax_m is None or self.ay_m is None or self.radius_m is not None:
                raise ConfigError("trajectory: figure8 takes ax_m, ay_m and omega_rad_s only")
            return Figure8Trajectory(self.ax_m, self.ay_m, self.omega_rad_s)
        raise ConfigError(f"trajectory.kind: unknown kind {self.kind!r} (circle | figure8)")


@dataclass(kw_only=True)
class ObstacleEntry:
    kind: str = _str()
    x_m: float
    y_m: float
    sigma_m2: Optional[float] = None
    sigma_x_m: Optional[float] = None
    sigma_y_m: Optional[float] = None
    n: Optional[int] = field(default=None, metadata={"kind": "int"})

    def build(self):
        if self.kind == "circular":
            if self.sigma_m2 is None:
                raise ConfigError("obstacle: circular requires sigma_m2")
            return CircularObstacle(self.x_m, self.y_m, self.sigma_m2)
        if self.kind == "superellipse":
            if self.sigma_x_m is None or self.sigma_y_m is None or self.n is None:
                raise ConfigError("obstacle: superellipse requires sigma_x_m, sigma_y_m and n")
            return SuperellipseObstacle(self.x_m, self.y_m, self.sigma_x_m, self.sigma_y_m, self.n)
        raise ConfigError(f"obstacle.kind: unknown kind {self.kind!r} (circular | superellipse)")


def _load_obstacle(data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    kind = data.get("kind")
    allowed = {
        "circular": {"kind", "x_m", "y_m", "sigma_m2"},
        "superellipse": {"kind", "x_m", "y_m", "sigma_x_m", "sigma_y_m", "n"},
    }.get(kind)
    if allowed is None:
        raise ConfigError(f"{where}.kind: unknown obstacle kind {kind!r}")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    for key in allowed - {"kind"}:
        if key not in data:
            raise ConfigError(f"{where}.{key}: missing required key")
    return _load(ObstacleEntry, data, where)


def _dump_obstacle(entry):
    return {k: v for k, v in _dump(entry).items() if v is not None}


@dataclass(kw_only=True)
class PredictorSpec:
    servo: bool = _bool(True)
    angle: bool = _bool(True)
    angle_freeze_on_saturation: bool = _bool(False)


@dataclass(kw_only=True)
class SafetySpec:
    enabled: bool = _bool(True)
    b0: float = 0.6
    alpha_per_s: float = 1.0
    turn: str = _str("left")
    hpf_time_constant_s: float = 0.05
    obstacles: list = field(default_factory=list, metadata={"kind": "obstacles"})

    def build(self):
        if self.turn not in ("left", "right"):
            raise ConfigError("safety.turn: must be 'left' or 'right'")
        if not self.hpf_time_constant_s > 0:
            raise ConfigError("safety.hpf_time_constant_s: must be positive")
        return BarrierField(self.b0, self.alpha_per_s, [o.build() for o in self.obstacles])


@dataclass(kw_only=True)
class ScenarioConfig:
    schema_version: int = field(metadata={"kind": "int"})
    name: str = _str()
    dt_s: float
    duration_s: float
    wheel_separation_m: float
    u_max_v: float
    vfo_gain_per_s: float
    settling_threshold_m: float = 0.05
    plant: PlantSpec = _nested(PlantSpec)
    nominal: PlantSpec = _nested(PlantSpec)
    servo_pi: PiGains = _nested(PiGains)
    angle_pi: PiGains = _nested(PiGains)
    predictor: PredictorSpec = field(default_factory=PredictorSpec, metadata={"kind": "nested", "cls": PredictorSpec})
    initial_pose: PoseSpec = _nested(PoseSpec)
    trajectory: TrajectorySpec = _nested(TrajectorySpec)
    safety: Optional[SafetySpec] = field(default=None, metadata={"kind": "optional", "cls": SafetySpec})

    def validate(self):
        """Check every invariant; raises ConfigError on the first violation."""
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: unsupported version {self.schema_version}")
        if not self.dt_s > 0:
            raise ConfigError("dt_s: must be positive")
        if self.duration_s < 0:
            raise ConfigError("duration_s: must be non-negative")
        if not self.wheel_separation_m > 0:
            raise ConfigError("wheel_separation_m: must be positive")
        if not self.u_max_v > 0:
            raise ConfigError("u_max_v: must be positive")
        if not self.vfo_gain_per_s > 0:
            raise ConfigError("vfo_gain_per_s: must be positive")
        if not self.settling_threshold_m > 0:
            raise ConfigError("settling_threshold_m: must be positive")
        steps = self.duration_s / self.dt_s
        if abs(steps - round(steps)) > 1e-6:
            raise ConfigError("duration_s: must be an integer multiple of dt_s")
        for label, spec in (("plant", self.plant), ("nominal", self.nominal)):
            try:
                delay_steps(spec.build().tau, self.dt_s)
            except ConfigError as exc:
                raise ConfigError(f"{label}: {exc}") from None
        self.trajectory.build()
        if self.safety is not None:
            self.safety.build()
        return self

    @property
    def n_steps(self):
        return int(round(self.duration_s / self.dt_s))

    @property
    def safety_enabled(self):
        return self.safety is not None and self.safety.enabled and bool(self.safety.obstacles)

    def to_dict(self):
        out = _dump(self)
        if self.safety is not None:
            out["safety"]["obstacles"] = [_dump_obstacle(o) for o in self.safety.obstacles]
        traj = out["trajectory"]
        out["trajectory"] = {k: v for k, v in traj.items() if v is not None}
        if out["safety"] is None:
            del out["safety"]
        return out

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    return _load(ScenarioConfig, data, "").validate()


def loads(text):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}".splitlines()[0]) from None
    return config_from_dict(data)


def dumps(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=False)


def load(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads(text)


def builtin(name):
    """Load one of the shipped scenario files by name."""
    if name not in BUILTIN_SCENARIOS:
        raise ConfigError(f"unknown builtin scenario {name!r}")
    text = resources.files("smithsafe.scenarios").joinpath(f"{name}.yaml").read_text()
    return loads(text)


def resolve(ref):
    """Path to a YAML file, or the name of a shipped scenario."""
    if Path(ref).is_file():
        return load(ref)
    if ref in BUILTIN_SCENARIOS:
        return builtin(ref)
    raise ConfigError(f"config not found: {ref}")
