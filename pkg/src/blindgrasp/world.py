"""Deterministic quasi-static tabletop world.

Motions accrue simulated time and stop on sensed contact, the gripper either
captures, misses (pushing the object), or fails on width, and captured objects
are carried to a bin. Every state change is appended to a JSON-serialisable
event log, which :mod:`blindgrasp.replay` can re-verify.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import geometry as geo
from .geometry import Footprint, Point2, Pose2, Rect2, Vec2
from .skin import ArmPose, Skin, frame_time

MODES = ("sweep", "descend", "lift", "probe_scan", "probe_move", "transport")


class RunTimeout(Exception):
    """Raised once the simulated clock passes the run deadline."""


class GripperStateError(RuntimeError):
    pass


class WorkspaceError(ValueError):
    pass


@dataclass
class Speeds:
    """Cartesian speeds in m/s for each motion family."""

    sweep: float = 0.2
    vertical: float = 0.1
    probe: float = 0.03
    transport: float = 0.06

    def for_mode(self, mode: str) -> float:
        if mode == "sweep":
            return self.sweep
        if mode in ("descend", "lift"):
            return self.vertical
        if mode in ("probe_scan", "probe_move"):
            return self.probe
        if mode == "transport":
            return self.transport
        raise ValueError(f"unknown motion mode {mode!r}")

    def table(self) -> dict[str, float]:
        return {m: self.for_mode(m) for m in MODES}


@dataclass
class GripperModel:
    max_width: float = 0.15
    jaw_depth: float = 0.04
    close_fail_width: float = 0.01
    align_tol: float = math.radians(20.0)
    cycle_time: float = 6.0

    def __post_init__(self):
        if not 0 < self.close_fail_width < self.max_width:
            raise ValueError("need 0 < close_fail_width < max_width")
        if self.jaw_depth <= 0:
            raise ValueError("jaw_depth must be positive")


@dataclass
class FailureProfile:
    """Post-miss behaviour: objects slide ('sim') or tend to topple ('real')."""

    name: str = "sim"
    p_fall: float = 0.0
    deformable_enabled: bool = False
    fallen_height: float = 0.08

    @classmethod
    def named(cls, name: str, p_fall_real: float = 0.6) -> "FailureProfile":
        if name == "sim":
            return cls("sim", 0.0, False)
        if name == "real":
            return cls("real", p_fall_real, True)
        raise ValueError(f"unknown failure profile {name!r}")


@dataclass
class WorldParams:
    speeds: Speeds = field(default_factory=Speeds)
    gripper: GripperModel = field(default_factory=GripperModel)
    profile: FailureProfile = field(default_factory=FailureProfile)
    push_gain: float = 0.5
    align_gain: float = 0.5
    noise_sigma: float = 0.005
    safety_height: float = 0.10
    reach_inner: float = 0.25
    reach_outer: float = 0.95
    bin_position: tuple[float, float, float] = (0.75, 0.0, 0.4)
    timeout: float = math.inf


@dataclass
class ObjectInstance:
    id: str
    footprint: Footprint
    height: float
    pose: Pose2
    deformable: bool = False
    fallen: bool = False
    mass_proxy: float = 0.5
    state: str = "table"  # table | held | bin
    _poly: Optional[list] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.height <= 0.10:
            raise ValueError(f"object {self.id}: height must be > 0.10 m to be detectable")

    def polygon(self) -> list[Point2]:
        if self._poly is None:
            self._poly = self.footprint.placed(self.pose)
        return self._poly

    def centroid(self) -> Point2:
        return geo.centroid(self.polygon())

    def translate(self, d: Vec2) -> None:
        self.pose = self.pose.translated(d)
        self._poly = None

    def rotate_about(self, angle: float, pivot: Point2) -> None:
        x, y = geo.add(pivot, geo.rotate(geo.sub((self.pose.x, self.pose.y), pivot), angle))
        self.pose = Pose2(x, y, self.pose.yaw + angle)
        self._poly = None


@dataclass(frozen=True)
class GraspCandidate:
    center: Point2
    yaw: float  # heading of the approach direction
    approach: Vec2
    grasp_height: float

    @property
    def jaw_axis(self) -> Vec2:
        return (-math.sin(self.yaw), math.cos(self.yaw))


class GraspOutcome(str, Enum):
    SUCCESS = "success"
    MISS = "miss"
    WIDTH_FAIL = "width_fail"
    TOPPLED = "toppled"


@dataclass(frozen=True)
class Completed:
    pass


@dataclass(frozen=True)
class SkinContact:
    pad_ids: frozenset
    arm_pose: ArmPose


@dataclass(frozen=True)
class ProbeContact:
    point: Point2
    dir: Vec2
    object_id: str


@dataclass(frozen=True)
class SafetyStop:
    pass


MotionOutcome = Completed | SkinContact | ProbeContact | SafetyStop


def _xyz(p: Sequence[float]) -> list[float]:
    return [float(c) for c in p]


class World:
    """One run's world state: table, objects, bin, robot pose, clock and event log."""

    def __init__(
        self,
        table: Rect2,
        objects: Iterable[ObjectInstance],
        skin: Skin,
        params: WorldParams,
        seed: int,
        start: Sequence[float] = (0.0, 1.0, 0.5),
    ):
        self.table = table
        self.objects = list(objects)
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        self.skin = skin
        self.params = params
        self.rng_seed = int(seed)
        self.rng = np.random.default_rng(self.rng_seed)
        self.clock = 0.0
        self.bin: list[str] = []
        self.held: Optional[str] = None
        self.ee = tuple(float(c) for c in start)
        self.noise_scale = 1.0
        self.events: list[dict[str, Any]] = []
        self.log(
            "run_start",
            seed=self.rng_seed,
            speeds=params.speeds.table(),
            cycle_time=params.gripper.cycle_time,
            push_gain=params.push_gain,
            profile=params.profile.name,
            timeout=params.timeout if math.isfinite(params.timeout) else None,
            objects=[
                {"id": o.id, "x": o.pose.x, "y": o.pose.y, "yaw": o.pose.yaw, "height": o.height}
                for o in self.objects
            ],
            ee=_xyz(self.ee),
        )

    # -- bookkeeping ------------------------------------------------------

    @property
    def robot(self) -> ArmPose:
        return ArmPose(self.ee[0], self.ee[2], (self.ee[0], self.ee[1]))

    def obj(self, object_id: str) -> ObjectInstance:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise KeyError(object_id)

    def table_objects(self) -> list[ObjectInstance]:
        return [o for o in self.objects if o.state == "table"]

    def log(self, kind: str, **payload: Any) -> dict:
        rec = {"seq": len(self.events), "t": self.clock, "type": kind}
        rec.update(payload)
        self.events.append(rec)
        return rec

    def _timed(self, kind: str, duration: float, **payload: Any) -> dict:
        t0 = self.clock
        self.clock = t0 + duration
        rec = self.log(kind, t0=t0, duration=duration, **payload)
        if self.clock >= self.params.timeout:
            raise RunTimeout(self.clock)
        return rec

    def set_deadline(self, timeout: float) -> None:
        self.params.timeout = timeout

    # -- motion -----------------------------------------------------------

    def move_linear(
        self,
        target: Sequence[float],
        mode: str,
        sensors: str = "none",
        probe_half_width: float = 0.0,
    ) -> MotionOutcome:
        """Straight Cartesian move of the end effector to ``target`` = (x, y, z)."""
        speed = self.params.speeds.for_mode(mode)
        start = self.ee
        target = tuple(float(c) for c in target)
        full = math.dist(start, target)
        outcome: MotionOutcome = Completed()
        stop = target
        extra: dict[str, Any] = {}

        if sensors == "skin":
            if start[0] != target[0] or start[1] != target[1] or target[2] > start[2]:
                raise ValueError("skin-sensed moves must be pure descents")
            outcome, stop = self._descend(start, target, speed, extra)
        elif sensors == "ft":
            if start[2] != target[2]:
                raise ValueError("probe scans run at constant height")
            if full > 0:
                outcome, stop = self._probe(start, target, probe_half_width, extra)
        elif sensors != "none":
            raise ValueError(f"unknown sensor set {sensors!r}")

        length = math.dist(start, stop)
        duration = extra.pop("duration", length / speed)
        self.ee = stop
        self._timed(
            "motion",
            duration,
            mode=mode,
            sensors=sensors,
            speed=speed,
            start=_xyz(start),
            target=_xyz(target),
            stop=_xyz(stop),
            length=length,
            outcome=type(outcome).__name__,
            **extra,
        )
        return outcome

    def _descend(self, start, target, speed, extra):
        floor = max(target[2], self.params.safety_height)
        h_contact, _ = self.skin.contact_height(start[0], self.table_objects())
        if h_contact <= floor:
            stop = (start[0], start[1], floor)
            if floor <= self.params.safety_height:
                return SafetyStop(), stop
            return Completed(), stop
        # contact happens at h_contact; the skin only reports it on the next frame
        t_touch = max(0.0, (start[2] - h_contact) / speed)
        t_seen = frame_time(self.clock + t_touch, self.skin.frame_rate) - self.clock
        z = max(floor, min(h_contact, start[2] - speed * t_seen))
        arm = ArmPose(start[0], z, (start[0], start[1]))
        pads = self.skin.pads_in_contact(arm, self.table_objects())
        extra["duration"] = (start[2] - z) / speed
        extra["pads"] = sorted(pads)
        extra["touch_height"] = h_contact
        return SkinContact(pads, arm), (start[0], start[1], z)

    def _probe(self, start, target, hw, extra):
        z = start[2]
        obstacles = [(o.id, o.polygon()) for o in self.table_objects() if o.height >= z - 1e-9]
        hit = geo.sweep_first_contact(start[:2], target[:2], hw, obstacles)
        if hit is None:
            return Completed(), target
        d = geo.normalize(geo.sub(target[:2], start[:2]))
        sigma = self.params.noise_sigma * self.noise_scale
        if sigma > 0:
            nx, ny = self.rng.normal(0.0, sigma, 2)
            point = (hit.touch[0] + float(nx), hit.touch[1] + float(ny))
        else:
            point = hit.touch
        extra["object_id"] = hit.object_id
        extra["touch"] = list(hit.touch)
        extra["reported"] = list(point)
        return ProbeContact(point, d, hit.object_id), (hit.point[0], hit.point[1], z)

    # -- grasping ---------------------------------------------------------

    def capture_rect(self, g: GraspCandidate) -> Rect2:
        """Jaw region centred on the grasp point: jaw_depth along the approach, max_width across."""
        gr = self.params.gripper
        return Rect2(g.center, (0.5 * gr.jaw_depth, 0.5 * gr.max_width), g.yaw)

    def reachable(self, g: GraspCandidate) -> bool:
        """All capture-region corners must lie inside the reachability annulus."""
        p = self.params
        for c in self.capture_rect(g).corners():
            r = math.hypot(*c)
            if r < p.reach_inner or r > p.reach_outer:
                return False
        return True

    def attempt_grasp(self, g: GraspCandidate) -> GraspOutcome:
        if self.held is not None:
            raise GripperStateError("gripper already holds an object")
        if not self.reachable(g):
            raise WorkspaceError("grasp pose outside the reachable workspace")
        gr = self.params.gripper
        approach = g.approach
        jaw = g.jaw_axis
        rect = self.capture_rect(g)
        rect_poly = rect.corners()

        candidates = [o for o in self.table_objects() if o.height > g.grasp_height]
        target = None
        if candidates:
            target = min(candidates, key=lambda o: math.dist(o.centroid(), rect.center))
            if not geo.polygons_overlap(target.polygon(), rect_poly):
                target = None

        outcome = GraspOutcome.MISS
        payload: dict[str, Any] = {
            "center": list(g.center),
            "yaw": g.yaw,
            "grasp_height": g.grasp_height,
            "object_id": None if target is None else target.id,
        }
        if target is not None and not target.fallen:
            c = target.centroid()
            rel = geo.sub(c, g.center)
            u, v = geo.dot(rel, approach), geo.dot(rel, jaw)
            width = geo.extent_along(target.footprint, target.pose, jaw)
            deformable = target.deformable and self.params.profile.deformable_enabled
            payload["align_error"] = align = alignment_error(target.polygon(), jaw)
            if width > gr.max_width:
                outcome = GraspOutcome.WIDTH_FAIL
            elif abs(u) <= 0.5 * gr.jaw_depth and abs(v) <= 0.5 * gr.max_width and (
                deformable or align <= gr.align_tol
            ):
                outcome = GraspOutcome.SUCCESS
                target.state = "held"
                self.held = target.id
            elif abs(u) <= 0.5 * gr.jaw_depth and abs(v) <= 0.5 * gr.max_width:
                payload["rotation"] = self._twist(target, jaw, align)
            else:
                outcome, d = self._push(target, g, v)
                payload["displacement"] = [d[0], d[1]]
        payload["outcome"] = outcome.value
        self.ee = (g.center[0], g.center[1], g.grasp_height)
        self._timed("grasp", gr.cycle_time, **payload)
        return outcome

    def _push(self, obj: ObjectInstance, g: GraspCandidate, v: float) -> tuple[GraspOutcome, Vec2]:
        """Slide a missed object along the approach/closing resultant; maybe topple it."""
        gr = self.params.gripper
        proj = [geo.dot(geo.sub(p, g.center), g.approach) for p in obj.polygon()]
        half = 0.5 * gr.jaw_depth
        penetration = max(0.0, min(max(proj), half) - max(min(proj), -half))
        closing = -max(-1.0, min(1.0, v / (0.5 * gr.max_width)))
        direction = geo.normalize(geo.add(g.approach, geo.scale(g.jaw_axis, closing)))
        step = self.params.push_gain * penetration
        d = geo.scale(direction, step)
        obj.translate(d)
        if self.params.profile.p_fall > 0 and self.rng.random() < self.params.profile.p_fall:
            obj.fallen = True
            obj.height = min(obj.height, self.params.profile.fallen_height)
            return GraspOutcome.TOPPLED, d
        return GraspOutcome.MISS, d

    def _twist(self, obj: ObjectInstance, jaw: Vec2, align: float) -> float:
        """Closing jaws turn a captured but misaligned rigid object toward a flat grip."""
        step = self.params.align_gain * align
        c = obj.centroid()
        best = None
        for angle in (step, -step):
            trial = geo.rotate_polygon(obj.polygon(), angle, c)
            err = alignment_error(trial, jaw)
            if best is None or err < best[0] - 1e-12:
                best = (err, angle)
        obj.rotate_about(best[1], c)
        return best[1]

    def bin_object(self, object_id: str) -> None:
        if self.held is None or self.held != object_id:
            raise GripperStateError(f"object {object_id!r} is not held")
        obj = self.obj(object_id)
        start = self.ee
        dest = tuple(float(c) for c in self.params.bin_position)
        length = math.dist(start, dest)
        speed = self.params.speeds.for_mode("transport")
        obj.state = "bin"
        self.bin.append(object_id)
        self.held = None
        self.ee = dest
        self._timed(
            "bin",
            length / speed,
            object_id=object_id,
            mode="transport",
            speed=speed,
            start=_xyz(start),
            stop=_xyz(dest),
            length=length,
        )


def alignment_error(poly: Sequence[Point2], jaw: Vec2) -> float:
    """Worst misalignment (radians) between a jaw face and the object feature it closes on.

    On each side the jaw meets the extreme feature along ``+-jaw``. A flat face gives
    zero error; a lone vertex gives the smaller angle between the jaw normal and the
    normals of its two adjacent edges.
    """
    n = len(poly)
    worst = 0.0
    for sign in (1.0, -1.0):
        axis = (sign * jaw[0], sign * jaw[1])
        proj = [geo.dot(p, axis) for p in poly]
        top = max(proj)
        tol = 1e-9 * max(1.0, abs(top))
        idx = [i for i in range(n) if proj[i] >= top - tol]
        if len(idx) >= 2:
            err = 0.0
        else:
            i = idx[0]
            err = math.pi
            for a, b in ((poly[i - 1], poly[i]), (poly[i], poly[(i + 1) % n])):
                e = geo.sub(b, a)
                nrm = geo.normalize((e[1], -e[0]))  # outward normal of a CCW edge
                err = min(err, math.acos(max(-1.0, min(1.0, geo.dot(nrm, axis)))))
        worst = max(worst, err)
    return worst
