"""Scenario configuration: JSON schema, strict parsing, defaults, and world builders.

Lengths are metres and angles are degrees in the file; builders convert angles to
radians. Unknown keys are rejected so typos never silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
import json
import math
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from .geometry import Footprint, GeometryError, Pose2, Rect2, regular_polygon
from .pipeline import PipelineParams, RefinementParams, SweepPlan
from .skin import PadGeometry, Skin, SkinLayoutError, default_layout, validate_layout
from .world import FailureProfile, GripperModel, ObjectInstance, Speeds, World, WorldParams


class ConfigError(ValueError):
    """Parse or validation failure; ``field`` names the offending entry when known."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)

    def record(self) -> dict:
        return {"error": "config", "message": str(self), "field": self.field, "line": self.line}


# -- schema -------------------------------------------------------------------


@dataclass
class TableConfig:
    center: list = field(default_factory=lambda: [0.0, 0.6])
    size: list = field(default_factory=lambda: [1.0, 0.9])


@dataclass
class ArmConfig:
    tip_y: float = 1.1
    raise_height: float = 0.5
    safety_height: float = 0.10


@dataclass
class SweepConfig:
    start_x: float = 0.5
    end_x: float = -0.5
    step: float = 0.10


@dataclass
class PadConfig:
    length: float
    width: float
    offset: float
    min_height_offset: float = 0.0


@dataclass
class FootprintConfig:
    kind: str  # polygon | circle | ellipse | box | rounded_box
    vertices: Optional[list] = None
    radius: Optional[float] = None
    radii: Optional[list] = None
    size: Optional[list] = None
    corner_radius: Optional[float] = None
    segments: int = 32


@dataclass
class ObjectConfig:
    name: str
    footprint: FootprintConfig
    height: float
    deformable: bool = False
    mass: float = 0.5


@dataclass
class PlacementConfig:
    object: str
    x: float
    y: float
    yaw_deg: float = 0.0


@dataclass
class SpeedConfig:
    sweep: float = 0.2
    vertical: float = 0.1
    probe: float = 0.03
    transport: float = 0.06


@dataclass
class GripperConfig:
    max_width: float = 0.15
    jaw_depth: float = 0.04
    close_fail_width: float = 0.01
    align_tol_deg: float = 20.0
    cycle_time: float = 6.0


@dataclass
class LocalizationConfig:
    probe_width: float = 0.06
    margin: float = 0.02
    lift: float = 0.05
    orth_retries: int = 1
    orth_runup: float = 0.12
    grasp_depth: float = 0.02


@dataclass
class BaselineConfig:
    probe_height: float = 0.12
    noise_scale: float = 2.0


@dataclass
class RefinementConfig:
    behind_mm: list = field(default_factory=lambda: [0.0, 20.0, 40.0])
    side_mm: list = field(default_factory=lambda: [-45.0, -22.5, 0.0, 22.5, 45.0])
    rotation_deg: list = field(default_factory=lambda: [-30.0, -15.0, 0.0, 15.0, 30.0])
    i_max: Optional[int] = None


@dataclass
class ReachConfig:
    inner: float = 0.25
    outer: float = 0.95


@dataclass
class GridExperiment:
    x_min: float = -0.30
    y_min: float = 0.24
    step: float = 0.04
    cells: int = 16
    reps: int = 5
    object: str = "can"
    timeout: float = 600.0


@dataclass
class RotationExperiment:
    rotations_deg: list = field(default_factory=lambda: [90.0, 45.0, 0.0, -45.0, -90.0])
    symmetric: list = field(default_factory=lambda: ["can"])
    position: list = field(default_factory=lambda: [0.0, 0.6])
    reps: int = 10


@dataclass
class ClutterExperiment:
    positions: list = field(default_factory=lambda: [[0.25, 0.75], [0.0, 0.6], [-0.2, 0.55]])
    reps: int = 10
    subset: Optional[int] = None


@dataclass
class BaselineExperiment:
    reps: int = 5
    object: str = "can"
    position: list = field(default_factory=lambda: [0.0, 0.6])


@dataclass
class ExperimentsConfig:
    grid: GridExperiment = field(default_factory=GridExperiment)
    rotation: RotationExperiment = field(default_factory=RotationExperiment)
    clutter: ClutterExperiment = field(default_factory=ClutterExperiment)
    baseline: BaselineExperiment = field(default_factory=BaselineExperiment)


def _default_pads() -> list:
    return [
        PadConfig(p.length_along_arm, p.width, p.offset_along_arm, p.min_height_offset)
        for p in default_layout()
    ]


def _default_objects() -> list:
    return [
        ObjectConfig("can", FootprintConfig("circle", radius=0.04, segments=32), 0.14, True, 0.45),
        ObjectConfig("block", FootprintConfig("box", size=[0.085, 0.085]), 0.20, False, 0.73),
        ObjectConfig(
            "windex",
            FootprintConfig("rounded_box", size=[0.065, 0.105], corner_radius=0.02, segments=4),
            0.27,
            True,
            1.0,
        ),
        ObjectConfig("mustard", FootprintConfig("ellipse", radii=[0.029, 0.0475], segments=24), 0.19, True, 0.6),
        ObjectConfig("sugar", FootprintConfig("box", size=[0.045, 0.089]), 0.175, True, 0.55),
    ]


@dataclass
class ScenarioConfig:
    name: str = "default"
    seed: int = 0
    profile: str = "sim"
    noise_mm: float = 5.0
    p_fall_real: float = 0.6
    push_gain: float = 0.5
    align_gain: float = 0.5
    timeout: float = 600.0
    table: TableConfig = field(default_factory=TableConfig)
    arm: ArmConfig = field(default_factory=ArmConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    pads: list = field(default_factory=_default_pads)
    objects: list = field(default_factory=_default_objects)
    placements: list = field(default_factory=lambda: [PlacementConfig("can", 0.0, 0.6, 0.0)])
    speeds: SpeedConfig = field(default_factory=SpeedConfig)
    gripper: GripperConfig = field(default_factory=GripperConfig)
    localization: LocalizationConfig = field(default_factory=LocalizationConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    reach: ReachConfig = field(default_factory=ReachConfig)
    bin_position: list = field(default_factory=lambda: [0.75, 0.0, 0.4])
    experiments: ExperimentsConfig = field(default_factory=ExperimentsConfig)

    def catalog(self) -> dict:
        return {o.name: o for o in self.objects}


_LIST_ITEM_TYPES = {
    (ScenarioConfig, "pads"): PadConfig,
    (ScenarioConfig, "objects"): ObjectConfig,
    (ScenarioConfig, "placements"): PlacementConfig,
}


# -- (de)serialisation ----------------------------------------------------------


def _from_dict(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"expected an object, got {type(data).__name__}", path)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", f"{path}.{unknown[0]}" if path else unknown[0])
    kwargs = {}
    for f in dataclasses.fields(cls):
        sub = f"{path}.{f.name}" if path else f.name
        if f.name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError("missing required key", sub)
            continue
        kwargs[f.name] = _convert(hints[f.name], data[f.name], sub, (cls, f.name))
    return cls(**kwargs)


def _convert(tp, value, path, owner):
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _convert(args[0], value, path, owner)
    if dataclasses.is_dataclass(tp):
        return _from_dict(tp, value, path)
    if tp is list or origin is list:
        if not isinstance(value, list):
            raise ConfigError("expected a list", path)
        item = _LIST_ITEM_TYPES.get(owner)
        if item is None:
            return list(value)
        return [_from_dict(item, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", path)
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", path)
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected true/false", path)
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", path)
        return value
    return value


def to_dict(cfg: ScenarioConfig) -> dict:
    return dataclasses.asdict(cfg)


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=False) + "\n"


def from_dict(data: dict) -> ScenarioConfig:
    cfg = _from_dict(ScenarioConfig, data, "")
    validate(cfg)
    return cfg


def loads(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, line=exc.lineno) from None
    return from_dict(data)


def parse_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return loads(text)


def shipped(name: str = "default") -> ScenarioConfig:
    """Load one of the bundled scenarios: ``default`` or ``paper-sim``."""
    text = resources.files("blindgrasp").joinpath("scenarios", f"{name}.json").read_text()
    return loads(text)


def shipped_path(name: str = "default") -> Path:
    return Path(str(resources.files("blindgrasp").joinpath("scenarios", f"{name}.json")))


# -- validation -------------------------------------------------------------------


def validate(cfg: ScenarioConfig) -> None:
    if cfg.profile not in ("sim", "real"):
        raise ConfigError("profile must be 'sim' or 'real'", "profile")
    if cfg.noise_mm < 0:
        raise ConfigError("noise must be >= 0", "noise_mm")
    if not 0.0 <= cfg.p_fall_real <= 1.0:
        raise ConfigError("probability must lie in [0, 1]", "p_fall_real")
    if cfg.timeout <= 0:
        raise ConfigError("timeout must be positive", "timeout")
    if len(cfg.table.center) != 2 or len(cfg.table.size) != 2 or min(cfg.table.size) <= 0:
        raise ConfigError("table needs center [x, y] and positive size [w, d]", "table")
    if cfg.sweep.step <= 0 or cfg.sweep.start_x <= cfg.sweep.end_x:
        raise ConfigError("sweep must go right to left with a positive step", "sweep")
    if cfg.arm.safety_height <= 0 or cfg.arm.raise_height <= cfg.arm.safety_height:
        raise ConfigError("raise_height must exceed safety_height > 0", "arm")
    try:
        validate_layout(build_pads(cfg))
    except SkinLayoutError as exc:
        raise ConfigError(str(exc), "pads") from None
    names = set()
    for i, o in enumerate(cfg.objects):
        where = f"objects[{i}]"
        if o.name in names:
            raise ConfigError(f"duplicate object name {o.name!r}", where)
        names.add(o.name)
        if not o.height > 0.10:
            raise ConfigError("height > 0.10 required (objects must be detectable)", f"{where}.height")
        try:
            build_footprint(o.footprint)
        except (GeometryError, ConfigError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), f"{where}.footprint") from None
    for i, p in enumerate(cfg.placements):
        if p.object not in names:
            raise ConfigError(f"unknown object {p.object!r}", f"placements[{i}].object")
    g = cfg.gripper
    if not 0 < g.close_fail_width < g.max_width or g.jaw_depth <= 0 or g.cycle_time < 0:
        raise ConfigError("need 0 < close_fail_width < max_width, jaw_depth > 0", "gripper")
    for k in ("sweep", "vertical", "probe", "transport"):
        if getattr(cfg.speeds, k) <= 0:
            raise ConfigError("speeds must be positive", f"speeds.{k}")
    if cfg.localization.probe_width <= 0 or cfg.localization.margin < 0:
        raise ConfigError("probe_width > 0 and margin >= 0 required", "localization")
    if not 0 <= cfg.reach.inner < cfg.reach.outer:
        raise ConfigError("need 0 <= inner < outer", "reach")
    if len(cfg.bin_position) != 3:
        raise ConfigError("bin_position is [x, y, z]", "bin_position")
    try:
        build_refinement(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc), "refinement") from None
    ex = cfg.experiments
    for where, name in (("experiments.grid.object", ex.grid.object), ("experiments.baseline.object", ex.baseline.object)):
        if name not in names:
            raise ConfigError(f"unknown object {name!r}", where)
    if ex.grid.cells <= 0 or ex.grid.step <= 0 or ex.grid.reps <= 0:
        raise ConfigError("grid needs positive cells, step and reps", "experiments.grid")
    if len(ex.clutter.positions) < 3 or any(len(p) != 2 for p in ex.clutter.positions):
        raise ConfigError("clutter needs three [x, y] positions", "experiments.clutter.positions")
    if ex.clutter.subset is not None and ex.clutter.subset <= 0:
        raise ConfigError("subset must be positive", "experiments.clutter.subset")
    for where, reps in (("rotation", ex.rotation.reps), ("clutter", ex.clutter.reps), ("baseline", ex.baseline.reps)):
        if reps <= 0:
            raise ConfigError("reps must be positive", f"experiments.{where}.reps")


# -- builders ---------------------------------------------------------------------


def build_footprint(fc: FootprintConfig) -> Footprint:
    k = fc.kind
    if k == "polygon":
        if not fc.vertices:
            raise ConfigError("polygon needs vertices")
        return Footprint(fc.vertices)
    if k == "circle":
        if not fc.radius or fc.radius <= 0:
            raise ConfigError("circle needs a positive radius")
        return Footprint(regular_polygon(fc.radius, fc.segments))
    if k == "ellipse":
        if not fc.radii or len(fc.radii) != 2 or min(fc.radii) <= 0:
            raise ConfigError("ellipse needs two positive radii [rx, ry]")
        return Footprint(regular_polygon(fc.radii[1], fc.segments, rx=fc.radii[0]))
    if k == "box":
        if not fc.size or len(fc.size) != 2 or min(fc.size) <= 0:
            raise ConfigError("box needs a positive size [sx, sy]")
        hx, hy = 0.5 * fc.size[0], 0.5 * fc.size[1]
        return Footprint([(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)])
    if k == "rounded_box":
        if not fc.size or len(fc.size) != 2 or fc.corner_radius is None:
            raise ConfigError("rounded_box needs size and corner_radius")
        return Footprint(_rounded_box(fc.size, fc.corner_radius, max(1, fc.segments)))
    raise ConfigError(f"unknown footprint kind {k!r}")


def _rounded_box(size, r, per_corner):
    hx, hy = 0.5 * size[0], 0.5 * size[1]
    if not 0 < r < min(hx, hy):
        raise ConfigError("corner_radius must be positive and below half the smaller side")
    centers = [(hx - r, -hy + r), (hx - r, hy - r), (-hx + r, hy - r), (-hx + r, -hy + r)]
    verts = []
    for q, (cx, cy) in enumerate(centers):
        a0 = -math.pi / 2 + q * math.pi / 2
        for k in range(per_corner + 1):
            a = a0 + (math.pi / 2) * k / per_corner
            verts.append((cx + r * math.cos(a), cy + r * math.sin(a)))
    return verts


def build_pads(cfg: ScenarioConfig) -> list[PadGeometry]:
    return [PadGeometry(i, p.length, p.width, p.offset, p.min_height_offset) for i, p in enumerate(cfg.pads)]


def build_skin(cfg: ScenarioConfig) -> Skin:
    return Skin(build_pads(cfg), cfg.arm.tip_y)


def build_refinement(cfg: ScenarioConfig) -> RefinementParams:
    r = cfg.refinement
    return RefinementParams(
        behind=tuple(v / 1000.0 for v in r.behind_mm),
        side=tuple(v / 1000.0 for v in r.side_mm),
        rotation=tuple(math.radians(v) for v in r.rotation_deg),
        i_max=r.i_max,
    )


def build_pipeline_params(cfg: ScenarioConfig) -> PipelineParams:
    lc = cfg.localization
    return PipelineParams(
        probe_width=lc.probe_width,
        margin=lc.margin,
        lift=lc.lift,
        orth_retries=lc.orth_retries,
        grasp_depth=lc.grasp_depth,
        orth_runup=lc.orth_runup,
        baseline_probe_height=cfg.baseline.probe_height,
        baseline_noise_scale=cfg.baseline.noise_scale,
    )


def build_sweep(cfg: ScenarioConfig) -> SweepPlan:
    return SweepPlan(
        cfg.sweep.start_x,
        cfg.sweep.end_x,
        cfg.sweep.step,
        cfg.arm.tip_y,
        cfg.arm.raise_height,
        cfg.arm.safety_height,
    )


def build_world_params(cfg: ScenarioConfig, timeout: Optional[float] = None) -> WorldParams:
    g = cfg.gripper
    return WorldParams(
        speeds=Speeds(cfg.speeds.sweep, cfg.speeds.vertical, cfg.speeds.probe, cfg.speeds.transport),
        gripper=GripperModel(g.max_width, g.jaw_depth, g.close_fail_width, math.radians(g.align_tol_deg), g.cycle_time),
        profile=FailureProfile.named(cfg.profile, cfg.p_fall_real),
        push_gain=cfg.push_gain,
        align_gain=cfg.align_gain,
        noise_sigma=cfg.noise_mm / 1000.0,
        safety_height=cfg.arm.safety_height,
        reach_inner=cfg.reach.inner,
        reach_outer=cfg.reach.outer,
        bin_position=tuple(cfg.bin_position),
        timeout=cfg.timeout if timeout is None else timeout,
    )


def build_table(cfg: ScenarioConfig) -> Rect2:
    t = cfg.table
    return Rect2((t.center[0], t.center[1]), (0.5 * t.size[0], 0.5 * t.size[1]), 0.0)


def build_world(
    cfg: ScenarioConfig,
    seed: int,
    placements: Optional[list] = None,
    timeout: Optional[float] = None,
) -> World:
    catalog = cfg.catalog()
    placements = cfg.placements if placements is None else placements
    objects = []
    for i, p in enumerate(placements):
        spec = catalog[p.object]
        objects.append(
            ObjectInstance(
                id=f"{p.object}#{i}",
                footprint=build_footprint(spec.footprint),
                height=spec.height,
                pose=Pose2(p.x, p.y, math.radians(p.yaw_deg)),
                deformable=spec.deformable,
                mass_proxy=spec.mass,
            )
        )
    start = (cfg.sweep.start_x, cfg.arm.tip_y, cfg.arm.raise_height)
    return World(build_table(cfg), objects, build_skin(cfg), build_world_params(cfg, timeout), seed, start)
