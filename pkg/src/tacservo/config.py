"""Experiment configuration: TOML file -> validated runtime objects.

Every tunable number lives in the default config text below so a run is
fully described by one inspectable file.  Unknown keys are rejected and
range fields are checked against physical limits, with errors naming the
offending field.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - py310 path
    import tomli as tomllib

from .data import CollectionPlan
from .posenet import TrainConfig
from .servo import ServoConfig
from .tactsim import SensorSpec


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the field."""


DEFAULT_CONFIG_TOML = """\
# tacservo experiment configuration
# units: millimetres and degrees unless stated otherwise

seed = 0
out_dir = "runs"

[sensor.marker]            # soft marker-field sensor (round 40 mm skin)
family = "marker"
image_width = 128
image_height = 128
field_w = 40.0
field_h = 40.0
marker_count = 331
marker_radius = 2.5        # px
gel_stiffness = 0.5        # marker displacement per unit penetration
max_depth = 4.0            # usable indentation span
shear_gain = 0.2           # skin drag per unit slide, clamped at the rim
shear_drag = 0.6           # fraction of the drag the contact pattern follows
noise_sigma = 0.005
jitter_sigma = 0.1         # px
falloff = 3.5              # edge taper band width
edge_depth = 2.0           # nominal press depth for the edge task
surface_clearance = 1.0    # offset coordinate where the wall first touches
ambient = 0.35
light_gain = 0.9

[sensor.shading]           # stiff flat shading sensor
family = "shading"
image_width = 160
image_height = 120
field_w = 25.0
field_h = 19.0
marker_count = 331         # unused by the shading renderer
marker_radius = 2.0
gel_stiffness = 0.5
max_depth = 1.0            # stiff surface: narrow usable indentation span
shear_gain = 0.1
shear_drag = 0.6
noise_sigma = 0.005
jitter_sigma = 0.1
falloff = 2.0
edge_depth = 1.0
surface_clearance = 1.0
ambient = 0.35
light_gain = 0.9

[collect.edge]             # labelled pose ranges + nuisance slide ranges
offset_mm = [-5.0, 5.0]
depth_mm = [-1.0, 1.0]     # unlabelled press-depth variation about edge_depth
angle_deg = [-45.0, 45.0]
slide_x_mm = [-5.0, 5.0]
slide_y_mm = [-5.0, 5.0]
slide_angle_deg = [-5.0, 5.0]
samples = 5000

[collect.surface]
offset_mm = [-5.0, -1.0]   # contact-depth coordinate (negative into the wall)
depth_mm = [0.0, 0.0]
angle_deg = [-30.0, 30.0]
slide_x_mm = [-5.0, 5.0]
slide_y_mm = [0.0, 0.0]
slide_angle_deg = [-5.0, 5.0]
samples = 5000

[train]
epochs = 100
batch_size = 32
learning_rate = 0.003
momentum = 0.9
train_fraction = 0.75

[servo]
gain_offset = 0.5
gain_angle = 0.5
advance_step_mm = 1.0
angle_setpoint_advance_deg = 0.0
max_steps = 4000
loop_closure_radius_mm = 2.0
min_steps_before_closure = 0   # 0 = derive from the perimeter
step_clamp_mm = 2.0
step_clamp_deg = 15.0
detach_distance_mm = 10.0

[shapes.circle]
kind = "circle"
radius = 50.0

[shapes.square]
kind = "square"
side = 100.0
fillet = 2.0

[shapes.circular_wave]
kind = "circular_wave"
base_radius = 50.0
amplitude = 10.0
waves = 6
"""


@dataclass
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "runs"
    sensors: dict[str, SensorSpec] = field(default_factory=dict)
    plans: dict[str, CollectionPlan] = field(default_factory=dict)  # edge / surface
    train: TrainConfig = field(default_factory=TrainConfig)
    train_fraction: float = 0.75
    servo: ServoConfig = field(default_factory=ServoConfig)
    shapes: dict[str, dict[str, Any]] = field(default_factory=dict)


_SENSOR_KEYS = {f.name for f in dc_fields(SensorSpec)}
_RANGE_LIMITS = {
    "offset_mm": 20.0,
    "depth_mm": 8.0,
    "angle_deg": 90.0,
    "slide_x_mm": 20.0,
    "slide_y_mm": 20.0,
    "slide_angle_deg": 45.0,
}
_COLLECT_KEYS = set(_RANGE_LIMITS) | {"samples"}
_TRAIN_KEYS = {"epochs", "batch_size", "learning_rate", "momentum", "train_fraction"}
_SERVO_KEYS = {
    "gain_offset",
    "gain_angle",
    "advance_step_mm",
    "angle_setpoint_advance_deg",
    "max_steps",
    "loop_closure_radius_mm",
    "min_steps_before_closure",
    "step_clamp_mm",
    "step_clamp_deg",
    "detach_distance_mm",
}
_SHAPE_KEYS = {
    "circle": {"kind", "radius", "center_x", "center_y"},
    "square": {"kind", "side", "fillet", "center_x", "center_y"},
    "circular_wave": {"kind", "base_radius", "amplitude", "waves", "center_x", "center_y"},
}
_TOP_KEYS = {"seed", "out_dir", "sensor", "collect", "train", "servo", "shapes"}


def _reject_unknown(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _check_range(name: str, value: Any, where: str) -> tuple[float, float]:
    if (
        not isinstance(value, list)
        or len(value) != 2
        or not all(isinstance(v, (int, float)) for v in value)
    ):
        raise ConfigError(f"{where}.{name}: expected [lo, hi]")
    lo, hi = float(value[0]), float(value[1])
    if lo > hi:
        raise ConfigError(f"{where}.{name}: lower bound {lo} exceeds upper bound {hi}")
    limit = _RANGE_LIMITS[name]
    if abs(lo) > limit or abs(hi) > limit:
        raise ConfigError(f"{where}.{name}: bound magnitude exceeds {limit}")
    return lo, hi


def _parse_plan(task: str, section: dict, where: str) -> CollectionPlan:
    _reject_unknown(section, _COLLECT_KEYS, where)
    ranges = {k: _check_range(k, section[k], where) for k in _RANGE_LIMITS if k in section}
    samples = section.get("samples", 5000)
    if not isinstance(samples, int) or samples <= 0:
        raise ConfigError(f"{where}.samples: must be a positive integer")
    base = (
        CollectionPlan()
        if task == "edge"
        else CollectionPlan(
            task="surface",
            offset_range=(-5.0, -1.0),
            depth_range=(0.0, 0.0),
            angle_range=(-30.0, 30.0),
            slide_y_range=(0.0, 0.0),
        )
    )
    return CollectionPlan(
        task=task,
        offset_range=ranges.get("offset_mm", base.offset_range),
        depth_range=ranges.get("depth_mm", base.depth_range),
        angle_range=ranges.get("angle_deg", base.angle_range),
        slide_x_range=ranges.get("slide_x_mm", base.slide_x_range),
        slide_y_range=ranges.get("slide_y_mm", base.slide_y_range),
        slide_angle_range=ranges.get("slide_angle_deg", base.slide_angle_range),
        n_samples=samples,
        seed=0,  # overwritten from the experiment seed at use time
    )


def parse_config(raw: dict, where: str = "config") -> ExperimentConfig:
    _reject_unknown(raw, _TOP_KEYS, where)
    cfg = ExperimentConfig()
    if "seed" in raw:
        if not isinstance(raw["seed"], int):
            raise ConfigError(f"{where}.seed: must be an integer")
        cfg.seed = raw["seed"]
    if "out_dir" in raw:
        cfg.out_dir = str(raw["out_dir"])

    for name, section in raw.get("sensor", {}).items():
        _reject_unknown(section, _SENSOR_KEYS, f"{where}.sensor.{name}")
        try:
            cfg.sensors[name] = SensorSpec(**section)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}.sensor.{name}: {e}") from e

    for task, section in raw.get("collect", {}).items():
        if task not in ("edge", "surface"):
            raise ConfigError(f"{where}.collect: unknown task section {task!r}")
        cfg.plans[task] = _parse_plan(task, section, f"{where}.collect.{task}")

    tr = raw.get("train", {})
    _reject_unknown(tr, _TRAIN_KEYS, f"{where}.train")
    epochs = tr.get("epochs", 100)
    if not isinstance(epochs, int) or epochs <= 0:
        raise ConfigError(f"{where}.train.epochs: must be a positive integer")
    frac = float(tr.get("train_fraction", 0.75))
    if not 0.0 < frac < 1.0:
        raise ConfigError(f"{where}.train.train_fraction: must lie in (0, 1)")
    cfg.train = TrainConfig(
        epochs=epochs,
        batch_size=int(tr.get("batch_size", 32)),
        learning_rate=float(tr.get("learning_rate", 3e-3)),
        momentum=float(tr.get("momentum", 0.9)),
        seed=cfg.seed,
    )
    cfg.train_fraction = frac

    sv = raw.get("servo", {})
    _reject_unknown(sv, _SERVO_KEYS, f"{where}.servo")
    try:
        cfg.servo = ServoConfig(
            gain_offset=float(sv.get("gain_offset", 0.5)),
            gain_angle=float(sv.get("gain_angle", 0.5)),
            advance_step=float(sv.get("advance_step_mm", 1.0)),
            angle_setpoint_advance=float(sv.get("angle_setpoint_advance_deg", 0.0)),
            max_steps=int(sv.get("max_steps", 4000)),
            loop_closure_radius=float(sv.get("loop_closure_radius_mm", 2.0)),
            min_steps_before_closure=int(sv.get("min_steps_before_closure", 0)),
            step_clamp_mm=float(sv.get("step_clamp_mm", 2.0)),
            step_clamp_deg=float(sv.get("step_clamp_deg", 15.0)),
            detach_distance=float(sv.get("detach_distance_mm", 10.0)),
            seed=cfg.seed,
        )
    except ValueError as e:
        raise ConfigError(f"{where}.servo: {e}") from e

    for name, section in raw.get("shapes", {}).items():
        kind = section.get("kind")
        if kind not in _SHAPE_KEYS:
            raise ConfigError(f"{where}.shapes.{name}.kind: unknown shape kind {kind!r}")
        _reject_unknown(section, _SHAPE_KEYS[kind], f"{where}.shapes.{name}")
        cfg.shapes[name] = dict(section)

    if not cfg.sensors:
        raise ConfigError(f"{where}: at least one [sensor.*] section is required")
    if not cfg.shapes:
        raise ConfigError(f"{where}: at least one [shapes.*] section is required")
    return cfg


def load_config(path: str | Path | None = None) -> ExperimentConfig:
    """Parse and validate a TOML config file (or the built-in defaults)."""
    if path is None:
        raw = tomllib.loads(DEFAULT_CONFIG_TOML)
        return parse_config(raw)
    p = Path(path)
    try:
        raw = tomllib.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{p}: TOML parse error: {e}")
    return parse_config(raw, where=str(p))


def default_config() -> ExperimentConfig:
    return load_config(None)
