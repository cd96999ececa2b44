"""Blind exploration controller.

Whole-body rough scan with the skin, precise localization with end-effector probe
scans inside the contacted pad's shadow, two-ray grasp planning with a fixed list
of refinement poses, and the end-effector-only baseline that probes the whole table.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import geometry as geo
from .geometry import ParallelRaysError, Point2, Ray2, Rect2, Vec2
from .skin import PadProjection, Skin
from .world import (
    GraspCandidate,
    GraspOutcome,
    ProbeContact,
    RunTimeout,
    SkinContact,
    World,
)

BEHIND_RANGE = (0.0, 0.040)
SIDE_RANGE = (-0.045, 0.045)
ROT_RANGE = (-math.radians(30.0), math.radians(30.0))


@dataclass(frozen=True)
class SweepPlan:
    start_x: float
    end_x: float
    step: float
    tip_y: float
    raise_height: float = 0.5
    descend_floor: float = 0.10

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("sweep step must be positive")
        if not self.start_x > self.end_x:
            raise ValueError("sweep runs right to left: start_x must exceed end_x")

    def positions(self) -> list[float]:
        n = int(math.floor((self.start_x - self.end_x) / self.step + 1e-9))
        return [self.start_x - k * self.step for k in range(n + 1)]


@dataclass(frozen=True)
class ScanSegment:
    start: Point2
    end: Point2
    index: int


@dataclass(frozen=True)
class LocalizationResult:
    p1: Point2
    v1: Vec2
    p2: Point2
    v2: Vec2
    scans: int = 0
    object_id: Optional[str] = None  # ground truth, for bookkeeping only


@dataclass(frozen=True)
class RefinementParams:
    """Offsets tried after a failed initial grasp: behind/side in metres, rotation in radians."""

    behind: tuple = (0.0, 0.020, 0.040)
    side: tuple = (-0.045, -0.0225, 0.0, 0.0225, 0.045)
    rotation: tuple = tuple(math.radians(a) for a in (-30.0, -15.0, 0.0, 15.0, 30.0))
    i_max: Optional[int] = None

    def __post_init__(self):
        for name, values, (lo, hi) in (
            ("behind", self.behind, BEHIND_RANGE),
            ("side", self.side, SIDE_RANGE),
            ("rotation", self.rotation, ROT_RANGE),
        ):
            if not values:
                raise ValueError(f"{name} grid is empty")
            for v in values:
                if not lo - 1e-9 <= v <= hi + 1e-9:
                    raise ValueError(f"{name} offset {v} outside [{lo}, {hi}]")
        if 0.0 not in self.behind or 0.0 not in self.side or 0.0 not in self.rotation:
            raise ValueError("each refinement grid must contain the zero offset")
        if self.i_max is not None and self.i_max < 1:
            raise ValueError("i_max must be at least 1")

    @property
    def grid_size(self) -> int:
        return len(self.behind) * len(self.side) * len(self.rotation)

    @property
    def max_attempts(self) -> int:
        return self.grid_size if self.i_max is None else min(self.i_max, self.grid_size)


@dataclass
class PipelineParams:
    probe_width: float = 0.06
    margin: float = 0.02
    lift: float = 0.05
    orth_retries: int = 1
    orth_runup: float = 0.12
    baseline_probe_height: float = 0.12
    baseline_noise_scale: float = 2.0
    grasp_depth: float = 0.02


@dataclass
class RunResult:
    seed: int
    method: str
    objects_total: int
    objects_binned: int
    simulated_time: float
    timed_out: bool
    outcomes: dict = field(default_factory=dict)
    grasp_attempts: dict = field(default_factory=dict)
    bin_order: list = field(default_factory=list)
    localizations: int = 0
    localization_failures: int = 0
    events: list = field(default_factory=list, repr=False)

    @property
    def success_fraction(self) -> float:
        return self.objects_binned / self.objects_total if self.objects_total else 0.0

    @property
    def total_attempts(self) -> int:
        return sum(self.grasp_attempts.values())


@dataclass
class _Tally:
    localizations: int = 0
    failures: int = 0


# -- localization helpers (rect-local frame: +x = left->right, +y = rear/away from base) --


def get_start_end(rect: Rect2, w: float, prev: Optional[ScanSegment] = None) -> ScanSegment:
    """Scan line n runs from the rear edge toward the base, n*w right of the left edge."""
    n = 0 if prev is None else prev.index + 1
    hx, hy = rect.half_extents
    lx = -hx + 0.5 * w + n * w
    return ScanSegment(rect.to_world((lx, hy)), rect.to_world((lx, -hy)), n)


def inside_area(rect: Rect2, seg: ScanSegment, w: float) -> bool:
    lx = rect.to_local(seg.start)[0]
    return lx - 0.5 * w < rect.half_extents[0] - 1e-12


def get_orth_start_end(
    rect: Rect2, w: float, seg: ScanSegment, p1: Point2, runup: float = 0.12
) -> ScanSegment:
    """Left-to-right line just behind the first contact, so the probe edge covers it.

    The line starts at the left edge of the area or ``runup`` left of the contact,
    whichever is further out: objects first touched by a pad's edge can protrude
    beyond the shadow.
    """
    hx, _ = rect.half_extents
    lx1, ly1 = rect.to_local(p1)
    ly = ly1 - 0.5 * w
    return ScanSegment(rect.to_world((min(-hx, lx1 - runup), ly)), rect.to_world((hx, ly)), seg.index)


def scan_bound(rect: Rect2, w: float) -> int:
    return math.ceil(2.0 * rect.half_extents[0] / w - 1e-9) + 1


def _travel(world: World, xy: Point2, z: float, lift: float) -> None:
    """Lift, move across, and lower the probe at probe speed (sensors off)."""
    x0, y0, z0 = world.ee
    if (x0, y0, z0) == (xy[0], xy[1], z):
        return
    z_up = max(z0, z + lift)
    if z_up > z0:
        world.move_linear((x0, y0, z_up), "probe_move")
    if (x0, y0) != (xy[0], xy[1]):
        world.move_linear((xy[0], xy[1], z_up), "probe_move")
    if z_up > z:
        world.move_linear((xy[0], xy[1], z), "probe_move")


def precise_localization(
    world: World,
    proj: PadProjection,
    w: float,
    lift: float = 0.05,
    orth_retries: int = 1,
    orth_runup: float = 0.12,
) -> Optional[LocalizationResult]:
    """Probe-scan the pad shadow for two orthogonal contacts; None if nothing is found."""
    return _localize(world, proj.rect, proj.min_height, w, lift, orth_retries, orth_runup)


def _localize(world, rect, z, w, lift, orth_retries, runup=0.12) -> Optional[LocalizationResult]:
    ex, ey = rect.axes
    v1 = (-ey[0], -ey[1])
    v2 = ex
    hw = 0.5 * w
    seg = get_start_end(rect, w)
    scans = 0
    retries = 0
    while inside_area(rect, seg, w):
        _travel(world, seg.start, z, lift)
        world.log("scan", segment=seg.index, scan="primary")
        out = world.move_linear((*seg.end, z), "probe_scan", "ft", hw)
        scans += 1
        if isinstance(out, ProbeContact):
            p1 = out.point
            orth = get_orth_start_end(rect, w, seg, p1, runup)
            _travel(world, orth.start, z, lift)
            world.log("scan", segment=seg.index, scan="orthogonal")
            out2 = world.move_linear((*orth.end, z), "probe_scan", "ft", hw)
            scans += 1
            if isinstance(out2, ProbeContact):
                world.log("localized", p1=list(p1), p2=list(out2.point), scans=scans)
                return LocalizationResult(p1, v1, out2.point, v2, scans, out.object_id)
            world.log("orthogonal_miss", segment=seg.index)
            if retries < orth_retries:
                retries += 1
                continue
        retries = 0
        seg = get_start_end(rect, w, seg)
    world.log("localization_failed", scans=scans)
    return None


def plan_initial_grasp(loc: LocalizationResult, grasp_height: float) -> GraspCandidate:
    c = geo.ray_intersect(Ray2(loc.p1, loc.v1), Ray2(loc.p2, loc.v2))
    yaw = math.atan2(loc.v2[1], loc.v2[0])
    return GraspCandidate(c, yaw, loc.v2, grasp_height)


def refinement_offsets(rp: RefinementParams) -> list[tuple[float, float, float]]:
    """(behind, side, rotation) triples: behind major, |side| middle, |rotation| minor."""
    triples = itertools.product(rp.behind, rp.side, rp.rotation)
    return sorted(triples, key=lambda t: (t[0], abs(t[1]), abs(t[2]), t[1], t[2]))


def apply_offset(g: GraspCandidate, behind: float, side: float, rot: float) -> GraspCandidate:
    a = g.approach
    j = g.jaw_axis
    c = (g.center[0] - behind * a[0] + side * j[0], g.center[1] - behind * a[1] + side * j[1])
    if rot == 0.0:
        return GraspCandidate(c, g.yaw, a, g.grasp_height)
    yaw = g.yaw + rot
    return GraspCandidate(c, yaw, (math.cos(yaw), math.sin(yaw)), g.grasp_height)


def enumerate_refinements(initial: GraspCandidate, rp: RefinementParams) -> list[GraspCandidate]:
    return [apply_offset(initial, *off) for off in refinement_offsets(rp)]


@dataclass(frozen=True)
class SequenceResult:
    binned: bool
    attempts: int
    object_id: Optional[str] = None


def grasp_sequence(
    world: World, candidates: Sequence[GraspCandidate], i_max: int, target: Optional[str] = None
) -> SequenceResult:
    if not candidates:
        raise ValueError("empty candidate list")
    attempts = 0
    for idx, g in enumerate(candidates):
        if attempts >= i_max:
            break
        if not world.reachable(g):
            world.log("candidate_skipped", index=idx, reason="unreachable")
            continue
        world.log("candidate", index=idx, target=target)
        outcome = world.attempt_grasp(g)
        attempts += 1
        if outcome is GraspOutcome.SUCCESS:
            oid = world.held
            world.bin_object(oid)
            return SequenceResult(True, attempts, oid)
    world.log("grasp_exhausted", attempts=attempts)
    return SequenceResult(False, attempts)


def choose_pad(skin: Skin, pad_ids) -> int:
    """Tightest bound wins: smallest pad area, then lowest id."""
    return min(pad_ids, key=lambda i: (skin.pad(i).area, i))


def _localize_and_grasp(world, rect, z, refine, params, tally) -> bool:
    loc = _localize(world, rect, z, params.probe_width, params.lift, params.orth_retries, params.orth_runup)
    if loc is None:
        tally.failures += 1
        return False
    tally.localizations += 1
    try:
        g0 = plan_initial_grasp(loc, z - params.grasp_depth)
    except ParallelRaysError:
        world.log("parallel_rays")
        tally.failures += 1
        return False
    world.log("grasp_plan", center=list(g0.center), yaw=g0.yaw)
    seq = grasp_sequence(world, enumerate_refinements(g0, refine), refine.max_attempts, loc.object_id)
    return seq.binned


def run_whole_body(
    world: World,
    plan: SweepPlan,
    refine: RefinementParams,
    params: Optional[PipelineParams] = None,
) -> RunResult:
    params = params or PipelineParams()
    tally = _Tally()
    timed_out = False
    world.log("phase", phase="whole_body", i_max=refine.max_attempts)
    try:
        for x in plan.positions():
            home = (x, plan.tip_y, plan.raise_height)
            if world.ee != home:
                world.move_linear(home, "sweep")
            world.log("sweep_step", x=x)
            out = world.move_linear((x, plan.tip_y, plan.descend_floor), "descend", "skin")
            if isinstance(out, SkinContact):
                pad = choose_pad(world.skin, out.pad_ids)
                proj = world.skin.project_pad(pad, out.arm_pose, params.margin)
                world.log("skin_contact", pads=sorted(out.pad_ids), pad=pad, rect=_rect_json(proj.rect))
                _localize_and_grasp(world, proj.rect, proj.min_height, refine, params, tally)
            x0, y0, _ = world.ee
            world.move_linear(home, "lift" if (x0, y0) == home[:2] else "transport")
    except RunTimeout:
        timed_out = True
    return _finish(world, "whole_body", timed_out, tally)


def run_baseline(
    world: World,
    w: Optional[float] = None,
    refine: Optional[RefinementParams] = None,
    params: Optional[PipelineParams] = None,
) -> RunResult:
    """End-effector-only search: the localization scan pattern over the whole table."""
    params = params or PipelineParams()
    refine = refine or RefinementParams()
    w = params.probe_width if w is None else w
    world.noise_scale = params.baseline_noise_scale
    rect = world.table
    z = params.baseline_probe_height
    ex, ey = rect.axes
    v1 = (-ey[0], -ey[1])
    tally = _Tally()
    timed_out = False
    world.log("phase", phase="baseline", i_max=refine.max_attempts)
    try:
        seg = get_start_end(rect, w)
        retries = 0
        while inside_area(rect, seg, w):
            _travel(world, seg.start, z, params.lift)
            world.log("scan", segment=seg.index, scan="primary")
            out = world.move_linear((*seg.end, z), "probe_scan", "ft", 0.5 * w)
            if isinstance(out, ProbeContact):
                orth = get_orth_start_end(rect, w, seg, out.point, params.orth_runup)
                _travel(world, orth.start, z, params.lift)
                world.log("scan", segment=seg.index, scan="orthogonal")
                out2 = world.move_linear((*orth.end, z), "probe_scan", "ft", 0.5 * w)
                if isinstance(out2, ProbeContact):
                    tally.localizations += 1
                    loc = LocalizationResult(out.point, v1, out2.point, ex, 2, out.object_id)
                    g0 = plan_initial_grasp(loc, z - params.grasp_depth)
                    world.log("grasp_plan", center=list(g0.center), yaw=g0.yaw)
                    seq = grasp_sequence(
                        world, enumerate_refinements(g0, refine), refine.max_attempts, loc.object_id
                    )
                    if seq.binned:
                        continue  # rescan the same line for further objects
                else:
                    world.log("orthogonal_miss", segment=seg.index)
                    tally.failures += 1
                    if retries < params.orth_retries:
                        retries += 1
                        continue
            retries = 0
            seg = get_start_end(rect, w, seg)
    except RunTimeout:
        timed_out = True
    return _finish(world, "baseline", timed_out, tally)


def _rect_json(r: Rect2) -> dict:
    return {"center": list(r.center), "half_extents": list(r.half_extents), "yaw": r.yaw}


def count_attempts(events: Sequence[dict], object_ids: Sequence[str]) -> dict:
    """Grasp attempts per object: the gripped object if any, else the localized target."""
    counts = {oid: 0 for oid in object_ids}
    target = None
    for e in events:
        if e["type"] == "candidate":
            target = e.get("target")
        elif e["type"] == "grasp":
            key = e.get("object_id") or target
            if key in counts:
                counts[key] += 1
    return counts


def _finish(world: World, method: str, timed_out: bool, tally: _Tally) -> RunResult:
    outcomes = {}
    for o in world.objects:
        if o.state == "bin":
            outcomes[o.id] = "binned"
        elif o.fallen:
            outcomes[o.id] = "fallen"
        else:
            outcomes[o.id] = "on_table"
    attempts = count_attempts(world.events, [o.id for o in world.objects])
    world.log(
        "run_end",
        method=method,
        timed_out=timed_out,
        bin=list(world.bin),
        table=[o.id for o in world.objects if o.state != "bin"],
        attempts=attempts,
    )
    return RunResult(
        seed=world.rng_seed,
        method=method,
        objects_total=len(world.objects),
        objects_binned=len(world.bin),
        simulated_time=world.clock,
        timed_out=timed_out,
        outcomes=outcomes,
        grasp_attempts=attempts,
        bin_order=list(world.bin),
        localizations=tally.localizations,
        localization_failures=tally.failures,
        events=world.events,
    )
