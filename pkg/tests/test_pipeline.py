import dataclasses
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from blindgrasp import config as C
from blindgrasp import geometry as g
from blindgrasp.geometry import ParallelRaysError
from blindgrasp.pipeline import (
    LocalizationResult,
    RefinementParams,
    SweepPlan,
    _localize,
    apply_offset,
    choose_pad,
    count_attempts,
    enumerate_refinements,
    get_start_end,
    grasp_sequence,
    inside_area,
    plan_initial_grasp,
    refinement_offsets,
    run_baseline,
    run_whole_body,
    scan_bound,
)
from blindgrasp.world import GraspCandidate, ObjectInstance


def noiseless(cfg, **changes):
    return dataclasses.replace(cfg, noise_mm=0.0, **changes)


def world_with(cfg, placements, seed=1, timeout=None):
    return C.build_world(cfg, seed, placements=[C.PlacementConfig(*p) for p in placements], timeout=timeout)


def whole_body(cfg, placements, seed=1, timeout=None):
    w = world_with(cfg, placements, seed, timeout)
    return run_whole_body(w, C.build_sweep(cfg), C.build_refinement(cfg), C.build_pipeline_params(cfg))


# -- sweep plan and scan lines ---------------------------------------------------


def test_sweep_positions_run_right_to_left():
    xs = SweepPlan(0.5, -0.5, 0.1, 1.1).positions()
    assert len(xs) == 11
    assert xs[0] == 0.5 and xs[-1] == pytest.approx(-0.5)
    assert all(a > b for a, b in zip(xs, xs[1:]))


@pytest.mark.parametrize("start,end,step", [(0.5, -0.5, 0.0), (-0.5, 0.5, 0.1)])
def test_sweep_plan_rejects_bad_geometry(start, end, step):
    with pytest.raises(ValueError):
        SweepPlan(start, end, step, 1.1)


def test_scan_lines_start_at_rear_left_and_step_right():
    rect = g.Rect2((0.0, 0.0), (0.1, 0.05))
    seg = get_start_end(rect, 0.06)
    assert seg.start == pytest.approx((-0.07, 0.05))
    assert seg.end == pytest.approx((-0.07, -0.05))
    lines = []
    while inside_area(rect, seg, 0.06):
        lines.append(seg.start[0])
        seg = get_start_end(rect, 0.06, seg)
    assert lines == pytest.approx([-0.07, -0.01, 0.05, 0.11])
    assert len(lines) == math.ceil(0.2 / 0.06)


@given(
    hx=st.floats(0.02, 0.4),
    hy=st.floats(0.02, 0.4),
    w=st.floats(0.01, 0.1),
    yaw=st.floats(-math.pi, math.pi),
)
def test_scan_lines_cover_the_area_within_the_bound(hx, hy, w, yaw):
    rect = g.Rect2((0.3, 0.7), (hx, hy), yaw)
    seg = get_start_end(rect, w)
    right_edges = []
    while inside_area(rect, seg, w):
        right_edges.append(rect.to_local(seg.start)[0] + 0.5 * w)
        seg = get_start_end(rect, w, seg)
    assert 1 <= len(right_edges) <= scan_bound(rect, w)
    assert right_edges[-1] >= hx - 1e-9


def test_localization_of_an_empty_area_gives_up(default_cfg):
    cfg = noiseless(default_cfg)
    world = world_with(cfg, [])
    rect = g.Rect2((0.0, 0.6), (0.1, 0.08))
    assert _localize(world, rect, 0.12, 0.06, 0.05, 1) is None
    scans = [e for e in world.events if e["type"] == "scan"]
    assert len(scans) == math.ceil(0.2 / 0.06)


def test_object_at_the_right_edge_is_found_on_the_last_line(default_cfg):
    cfg = noiseless(default_cfg)
    world = world_with(cfg, [("can", 0.1, 0.6, 0.0)])
    rect = g.Rect2((0.0, 0.6), (0.1, 0.08))
    loc = _localize(world, rect, 0.12, 0.06, 0.05, 1)
    assert loc is not None and loc.object_id == "can#0"
    primary = [e["segment"] for e in world.events if e["type"] == "scan" and e["scan"] == "primary"]
    assert primary[-1] == 2
    # noiseless probe: first contact on the rear side, second on the left side
    assert math.dist(loc.p1, (0.1, 0.6)) == pytest.approx(0.04, abs=1e-3)
    assert math.dist(loc.p2, (0.1, 0.6)) == pytest.approx(0.04, abs=1e-3)
    assert loc.v1[0] * loc.v2[0] + loc.v1[1] * loc.v2[1] == pytest.approx(0.0)


# -- grasp planning --------------------------------------------------------------


def test_initial_grasp_is_the_ray_intersection():
    loc = LocalizationResult((0.0, 0.56), (0.0, 1.0), (-0.04, 0.6), (1.0, 0.0))
    gc = plan_initial_grasp(loc, 0.1)
    assert gc.center == pytest.approx((0.0, 0.6))
    assert gc.jaw_axis[0] * 1.0 + gc.jaw_axis[1] * 0.0 == pytest.approx(0.0)
    assert gc.grasp_height == 0.1


def test_parallel_rays_cannot_be_planned():
    loc = LocalizationResult((0.0, 0.56), (0.0, 1.0), (0.1, 0.6), (0.0, -1.0))
    with pytest.raises(ParallelRaysError):
        plan_initial_grasp(loc, 0.1)


def test_refinement_grid_starts_with_the_identity():
    rp = RefinementParams(behind=(0.0, 0.02, 0.04), side=(-0.02, 0.0, 0.02), rotation=(-0.2, 0.0, 0.2))
    offs = refinement_offsets(rp)
    assert len(offs) == rp.grid_size == 27
    assert offs[0] == (0.0, 0.0, 0.0)
    assert len(set(offs)) == 27
    assert [o[0] for o in offs] == sorted(o[0] for o in offs)


def test_default_refinement_grid_size():
    rp = RefinementParams()
    assert rp.grid_size == 75 and rp.max_attempts == 75
    assert RefinementParams(i_max=5).max_attempts == 5


@pytest.mark.parametrize(
    "kwargs", [{"behind": (0.0, 0.05)}, {"side": (0.02,)}, {"rotation": ()}, {"i_max": 0}]
)
def test_refinement_grid_validation(kwargs):
    with pytest.raises(ValueError):
        RefinementParams(**kwargs)


def test_behind_offset_moves_against_the_approach():
    g0 = GraspCandidate((0.0, 0.6), 0.0, (1.0, 0.0), 0.1)
    shifted = apply_offset(g0, 0.04, 0.0, 0.0)
    assert shifted.center == pytest.approx((-0.04, 0.6))
    side = apply_offset(g0, 0.0, 0.02, 0.0)
    j = g0.jaw_axis
    assert side.center == pytest.approx((0.02 * j[0], 0.6 + 0.02 * j[1]))
    assert abs(j[0]) == pytest.approx(0.0)


def test_rotation_offset_keeps_the_centre():
    g0 = GraspCandidate((0.0, 0.6), 0.0, (1.0, 0.0), 0.1)
    r = apply_offset(g0, 0.0, 0.0, math.radians(30))
    assert r.center == pytest.approx(g0.center)
    assert r.yaw == pytest.approx(math.radians(30))
    assert r.approach == pytest.approx((math.cos(r.yaw), math.sin(r.yaw)))


# -- grasp sequencing ------------------------------------------------------------


def test_first_good_candidate_bins_in_one_attempt(default_cfg):
    world = world_with(noiseless(default_cfg), [("can", 0.0, 0.6, 0.0)])
    g0 = GraspCandidate((0.0, 0.6), 0.0, (1.0, 0.0), 0.10)
    seq = grasp_sequence(world, enumerate_refinements(g0, RefinementParams()), 75, "can#0")
    assert seq.binned and seq.attempts == 1 and seq.object_id == "can#0"
    assert world.bin == ["can#0"]


def test_unreachable_target_exhausts_i_max(default_cfg):
    world = world_with(noiseless(default_cfg), [("can", 0.0, 0.6, 0.0)])
    # a pose 20 cm away from the object never captures it
    g0 = GraspCandidate((0.3, 0.6), 0.0, (1.0, 0.0), 0.10)
    seq = grasp_sequence(world, enumerate_refinements(g0, RefinementParams()), 6, "can#0")
    assert not seq.binned and seq.attempts == 6
    assert count_attempts(world.events, ["can#0"]) == {"can#0": 6}


def test_empty_candidate_list_is_an_error(default_cfg):
    world = world_with(default_cfg, [])
    with pytest.raises(ValueError):
        grasp_sequence(world, [], 3)


def test_count_attempts_falls_back_to_the_target():
    events = [
        {"type": "candidate", "target": "a"},
        {"type": "grasp", "object_id": None},
        {"type": "candidate", "target": "a"},
        {"type": "grasp", "object_id": "b"},
    ]
    assert count_attempts(events, ["a", "b", "c"]) == {"a": 1, "b": 1, "c": 0}


def test_smallest_pad_is_chosen(default_cfg):
    skin = C.build_skin(default_cfg)
    ids = [p.pad_id for p in skin.pads]
    best = choose_pad(skin, ids)
    assert skin.pad(best).area == min(skin.pad(i).area for i in ids)


# -- full runs ---------------------------------------------------------------------


def test_noiseless_can_is_binned(default_cfg):
    res = whole_body(noiseless(default_cfg), [("can", 0.0, 0.6, 0.0)])
    assert res.objects_binned == 1 and not res.timed_out
    assert res.grasp_attempts == {"can#0": 1}
    assert res.outcomes == {"can#0": "binned"}


def test_empty_table_costs_pure_sweep_time(default_cfg):
    cfg = noiseless(default_cfg)
    res = whole_body(cfg, [])
    moves = [e for e in res.events if e["type"] == "motion"]
    assert {m["mode"] for m in moves} <= {"sweep", "descend", "lift"}
    assert res.simulated_time == pytest.approx(sum(m["duration"] for m in moves))
    assert res.objects_total == 0 and res.success_fraction == 0.0


def test_three_objects_are_binned_right_to_left(default_cfg):
    placements = [("can", -0.2, 0.55, 0.0), ("can", 0.25, 0.75, 0.0), ("can", 0.0, 0.6, 0.0)]
    res = whole_body(noiseless(default_cfg), placements)
    assert res.objects_binned == 3
    assert res.bin_order == ["can#1", "can#2", "can#0"]


def test_baseline_is_much_slower_than_the_skin_sweep(default_cfg):
    cfg = noiseless(default_cfg)
    fast = whole_body(cfg, [])
    world = world_with(cfg, [])
    slow = run_baseline(world, None, C.build_refinement(cfg), C.build_pipeline_params(cfg))
    assert slow.simulated_time >= 5 * fast.simulated_time


def test_runs_are_deterministic_per_seed(default_cfg):
    a = whole_body(default_cfg, [("block", 0.05, 0.65, 30.0)], seed=9)
    b = whole_body(default_cfg, [("block", 0.05, 0.65, 30.0)], seed=9)
    assert a.events == b.events


def test_timeout_is_reported_with_attempts(default_cfg):
    res = whole_body(noiseless(default_cfg), [("can", 0.0, 0.6, 0.0)], timeout=30.0)
    assert res.timed_out and res.simulated_time >= 30.0
    assert res.objects_binned == 0
    assert res.events[-1]["type"] == "run_end"


def test_objects_are_conserved_across_a_cluttered_run(default_cfg):
    placements = [("block", 0.25, 0.75, 45.0), ("sugar", 0.0, 0.6, 10.0), ("mustard", -0.2, 0.55, 0.0)]
    cfg = dataclasses.replace(default_cfg, profile="real")
    res = whole_body(cfg, placements, seed=4)
    end = res.events[-1]
    assert sorted(end["bin"] + end["table"]) == sorted(f"{p[0]}#{i}" for i, p in enumerate(placements))
    assert len(set(end["bin"])) == len(end["bin"])


def test_object_instances_keep_their_catalog_height(default_cfg):
    world = world_with(default_cfg, [("windex", 0.0, 0.6, 0.0)])
    (o,) = world.objects
    assert isinstance(o, ObjectInstance) and o.height == pytest.approx(0.27)
