"""Batch experiments: seeded run specs, a process pool, aggregation and result files."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import statistics
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import config as C
from .pipeline import RunResult, run_baseline, run_whole_body

EXPERIMENTS = ("grid", "rotation", "clutter2", "clutter3", "baseline")

# Published reference figures, shown next to measured values. Hardware numbers are
# annotations only; nothing here is a target.
REFERENCE: dict[str, dict[str, Any]] = {
    "grid": {"success_rate": 0.831},
    "rotation": {"success_rate": 0.757, "success_rate_hardware": 0.857, "mean_time_hardware": 218.0},
    "clutter2": {"success_rate": 0.855, "success_rate_hardware": 0.890},
    "clutter3": {"success_rate": 0.815, "success_rate_hardware": 0.880},
    "baseline": {
        "baseline_empty": 1135.0,
        "baseline_object": 1198.0,
        "whole_body_empty": 87.0,
        "whole_body_object": 197.0,
        "ratio_empty": 1135.0 / 87.0,
        "ratio_object": 1198.0 / 197.0,
    },
}


def derive_seed(master: int, experiment: str, index: int) -> int:
    """Per-run seed from (master, experiment, run index); adding runs never shifts others."""
    if master < 0 or index < 0:
        raise ValueError("seeds and run indices must be non-negative")
    ss = np.random.SeedSequence([master, zlib.crc32(experiment.encode()), index])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True)
class RunSpec:
    experiment: str
    index: int
    method: str  # whole_body | baseline
    placements: tuple  # ((object, x, y, yaw_deg), ...)
    group: tuple  # ((key, value), ...)
    timeout: float


@dataclass
class RunRecord:
    spec: RunSpec
    seed: int
    result: RunResult


@dataclass(frozen=True)
class Summary:
    runs: int
    objects_total: int
    objects_binned: int
    success_rate: float
    time_mean: Optional[float]
    time_std: Optional[float]
    attempts_mean: float
    attempts_std: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ExperimentResult:
    experiment: str
    master_seed: int
    records: list
    overall: Summary
    groups: list  # [{"key": {...}, "summary": Summary}]
    extra: dict = field(default_factory=dict)

    @property
    def reference(self) -> dict:
        return REFERENCE.get(self.experiment, {})


# -- aggregation -----------------------------------------------------------------


def aggregate(results: Sequence[RunResult]) -> Summary:
    """Success over all objects of all runs; times over runs that binned anything.

    Standard deviations are population values. Times are None when no run binned.
    """
    if not results:
        raise ValueError("cannot aggregate an empty result set")
    total = sum(r.objects_total for r in results)
    binned = sum(r.objects_binned for r in results)
    times = [r.simulated_time for r in results if r.objects_binned > 0]
    attempts = [float(r.total_attempts) for r in results]
    return Summary(
        runs=len(results),
        objects_total=total,
        objects_binned=binned,
        success_rate=binned / total if total else 0.0,
        time_mean=statistics.fmean(times) if times else None,
        time_std=statistics.pstdev(times) if times else None,
        attempts_mean=statistics.fmean(attempts),
        attempts_std=statistics.pstdev(attempts),
    )


def group_records(records: Sequence[RunRecord]) -> list[dict]:
    order: list[tuple] = []
    buckets: dict[tuple, list] = {}
    for rec in records:
        if rec.spec.group not in buckets:
            order.append(rec.spec.group)
            buckets[rec.spec.group] = []
        buckets[rec.spec.group].append(rec.result)
    return [{"key": dict(g), "summary": aggregate(buckets[g])} for g in order]


# -- execution -------------------------------------------------------------------


def execute_run(cfg: C.ScenarioConfig, spec: RunSpec, master_seed: int) -> RunRecord:
    seed = derive_seed(master_seed, spec.experiment, spec.index)
    placements = [C.PlacementConfig(o, x, y, yaw) for o, x, y, yaw in spec.placements]
    world = C.build_world(cfg, seed, placements=placements, timeout=spec.timeout)
    refine = C.build_refinement(cfg)
    params = C.build_pipeline_params(cfg)
    if spec.method == "baseline":
        result = run_baseline(world, None, refine, params)
    elif spec.method == "whole_body":
        result = run_whole_body(world, C.build_sweep(cfg), refine, params)
    else:
        raise ValueError(f"unknown method {spec.method!r}")
    return RunRecord(spec, seed, result)


def _execute_star(args) -> RunRecord:
    return execute_run(*args)


def run_specs(
    cfg: C.ScenarioConfig, specs: Sequence[RunSpec], master_seed: int, workers: int = 1
) -> list[RunRecord]:
    """Run independent specs, optionally in a process pool; output order never depends on it."""
    jobs = [(cfg, s, master_seed) for s in specs]
    if workers > 1 and len(jobs) > 1:
        chunk = max(1, len(jobs) // (workers * 8))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_execute_star, jobs, chunksize=chunk))
    else:
        records = [_execute_star(j) for j in jobs]
    records.sort(key=lambda r: (r.spec.experiment, r.spec.index))
    return records


# -- run specs per experiment ------------------------------------------------------


def _r(v: float) -> float:
    return round(float(v), 6)


def grid_axes(cfg: C.ScenarioConfig) -> tuple[list[float], list[float]]:
    g = cfg.experiments.grid
    xs = [_r(g.x_min + g.step * i) for i in range(g.cells)]
    ys = [_r(g.y_min + g.step * k) for k in range(g.cells)]
    return xs, ys


def grid_specs(cfg: C.ScenarioConfig, reps: Optional[int] = None) -> list[RunSpec]:
    g = cfg.experiments.grid
    reps = g.reps if reps is None else reps
    xs, ys = grid_axes(cfg)
    specs = []
    for k, y in enumerate(ys):
        for i, x in enumerate(xs):
            for r in range(reps):
                idx = (k * len(xs) + i) * reps + r
                specs.append(
                    RunSpec("grid", idx, "whole_body", ((g.object, x, y, 0.0),), (("x", x), ("y", y)), g.timeout)
                )
    return specs


def rotation_specs(cfg: C.ScenarioConfig, reps: Optional[int] = None) -> list[RunSpec]:
    rc = cfg.experiments.rotation
    reps = rc.reps if reps is None else reps
    x, y = rc.position
    specs = []
    idx = 0
    for obj in cfg.objects:
        rotations = [0.0] if obj.name in rc.symmetric else [float(a) for a in rc.rotations_deg]
        for rot in rotations:
            for _ in range(reps):
                specs.append(
                    RunSpec(
                        "rotation", idx, "whole_body", ((obj.name, x, y, rot),),
                        (("object", obj.name), ("rotation", rot)), cfg.timeout,
                    )
                )
                idx += 1
    return specs


def clutter_positions(cfg: C.ScenarioConfig, k: int) -> list[tuple[float, float]]:
    """Positions ordered by first skin contact: the sweep runs right to left."""
    pos = [tuple(p) for p in cfg.experiments.clutter.positions]
    if k == 2:
        chosen = [pos[0], pos[-1]]
    elif k == 3:
        chosen = pos[:3]
    else:
        raise ValueError("clutter experiments use k = 2 or k = 3")
    return sorted(chosen, key=lambda p: -p[0])


def clutter_permutations(cfg: C.ScenarioConfig, k: int, master_seed: int) -> list[tuple[str, ...]]:
    names = [o.name for o in cfg.objects]
    perms = list(itertools.permutations(names, k))
    subset = cfg.experiments.clutter.subset
    if subset is not None and subset < len(perms):
        rng = np.random.default_rng(derive_seed(master_seed, f"clutter{k}-subset", 0))
        keep = sorted(rng.choice(len(perms), size=subset, replace=False).tolist())
        perms = [perms[i] for i in keep]
    return perms


def clutter_specs(cfg: C.ScenarioConfig, k: int, master_seed: int, reps: Optional[int] = None) -> list[RunSpec]:
    reps = cfg.experiments.clutter.reps if reps is None else reps
    positions = clutter_positions(cfg, k)
    name = f"clutter{k}"
    specs = []
    idx = 0
    for perm in clutter_permutations(cfg, k, master_seed):
        placements = tuple((o, p[0], p[1], 0.0) for o, p in zip(perm, positions))
        for _ in range(reps):
            specs.append(RunSpec(name, idx, "whole_body", placements, (("objects", ",".join(perm)),), cfg.timeout))
            idx += 1
    return specs


def baseline_specs(cfg: C.ScenarioConfig, reps: Optional[int] = None) -> list[RunSpec]:
    bc = cfg.experiments.baseline
    reps = bc.reps if reps is None else reps
    obj = ((bc.object, bc.position[0], bc.position[1], 0.0),)
    specs = []
    idx = 0
    for method in ("baseline", "whole_body"):
        for scene, placements in (("empty", ()), ("object", obj)):
            for _ in range(reps):
                # both methods run to completion so their times are comparable
                specs.append(
                    RunSpec("baseline", idx, method, placements, (("method", method), ("scene", scene)), math.inf)
                )
                idx += 1
    return specs


def build_specs(name: str, cfg: C.ScenarioConfig, master_seed: int, reps: Optional[int] = None) -> list[RunSpec]:
    if name == "grid":
        return grid_specs(cfg, reps)
    if name == "rotation":
        return rotation_specs(cfg, reps)
    if name in ("clutter2", "clutter3"):
        return clutter_specs(cfg, int(name[-1]), master_seed, reps)
    if name == "baseline":
        return baseline_specs(cfg, reps)
    raise ValueError(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")


# -- experiments -------------------------------------------------------------------


def _result(name: str, master_seed: int, records: list) -> ExperimentResult:
    return ExperimentResult(
        experiment=name,
        master_seed=master_seed,
        records=records,
        overall=aggregate([r.result for r in records]),
        groups=group_records(records),
    )


def grid_matrix(cfg: C.ScenarioConfig, groups: Sequence[dict]) -> list[list[Optional[float]]]:
    """Success per cell, rows indexed by y (near the base first), columns by x."""
    xs, ys = grid_axes(cfg)
    m: list[list[Optional[float]]] = [[None] * len(xs) for _ in ys]
    col = {x: i for i, x in enumerate(xs)}
    row = {y: k for k, y in enumerate(ys)}
    for g in groups:
        m[row[g["key"]["y"]]][col[g["key"]["x"]]] = g["summary"].success_rate
    return m


def run_position_grid(
    cfg: C.ScenarioConfig, master_seed: int, workers: int = 1, reps: Optional[int] = None
) -> ExperimentResult:
    res = _result("grid", master_seed, run_specs(cfg, grid_specs(cfg, reps), master_seed, workers))
    xs, ys = grid_axes(cfg)
    res.extra = {"x": xs, "y": ys, "matrix": grid_matrix(cfg, res.groups)}
    return res


def run_shape_rotation(
    cfg: C.ScenarioConfig, master_seed: int, workers: int = 1, reps: Optional[int] = None
) -> ExperimentResult:
    return _result("rotation", master_seed, run_specs(cfg, rotation_specs(cfg, reps), master_seed, workers))


def run_clutter(
    cfg: C.ScenarioConfig, k: int, master_seed: int, workers: int = 1, reps: Optional[int] = None
) -> ExperimentResult:
    specs = clutter_specs(cfg, k, master_seed, reps)
    res = _result(f"clutter{k}", master_seed, run_specs(cfg, specs, master_seed, workers))
    res.extra = {"permutations": len({s.group for s in specs})}
    return res


def run_baseline_compare(
    cfg: C.ScenarioConfig, master_seed: int, workers: int = 1, reps: Optional[int] = None
) -> ExperimentResult:
    res = _result("baseline", master_seed, run_specs(cfg, baseline_specs(cfg, reps), master_seed, workers))
    means = {}
    for g in res.groups:
        key = f"{g['key']['method']}_{g['key']['scene']}"
        means[key] = statistics.fmean(
            r.result.simulated_time for r in res.records if r.spec.group == tuple(g["key"].items())
        )
    means["ratio_empty"] = means["baseline_empty"] / means["whole_body_empty"]
    means["ratio_object"] = means["baseline_object"] / means["whole_body_object"]
    res.extra = means
    return res


def run_scenario(cfg: C.ScenarioConfig, master_seed: int, method: str = "whole_body") -> ExperimentResult:
    """One run of the scenario's own placements."""
    placements = tuple((p.object, p.x, p.y, p.yaw_deg) for p in cfg.placements)
    spec = RunSpec("run", 0, method, placements, (("scenario", cfg.name),), cfg.timeout)
    return _result("run", master_seed, run_specs(cfg, [spec], master_seed))


def run_experiment(
    name: str, cfg: C.ScenarioConfig, master_seed: int, workers: int = 1, reps: Optional[int] = None
) -> ExperimentResult:
    if name == "grid":
        return run_position_grid(cfg, master_seed, workers, reps)
    if name == "rotation":
        return run_shape_rotation(cfg, master_seed, workers, reps)
    if name in ("clutter2", "clutter3"):
        return run_clutter(cfg, int(name[-1]), master_seed, workers, reps)
    if name == "baseline":
        return run_baseline_compare(cfg, master_seed, workers, reps)
    raise ValueError(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")


# -- output --------------------------------------------------------------------------

RUN_COLUMNS = (
    "experiment",
    "run_index",
    "seed",
    "method",
    "objects_total",
    "objects_binned",
    "success_fraction",
    "simulated_time",
    "timed_out",
    "attempts_total",
    "localizations",
    "localization_failures",
    "attempts",
    "outcomes",
    "bin_order",
)


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def runs_csv(records: Sequence[RunRecord]) -> str:
    group_cols: list[str] = []
    for rec in records:
        for k, _ in rec.spec.group:
            if k not in group_cols:
                group_cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(RUN_COLUMNS[:4]) + group_cols + list(RUN_COLUMNS[4:])
    w.writerow(cols)
    for rec in records:
        r = rec.result
        row = {
            "experiment": rec.spec.experiment,
            "run_index": rec.spec.index,
            "seed": rec.seed,
            "method": rec.spec.method,
            "objects_total": r.objects_total,
            "objects_binned": r.objects_binned,
            "success_fraction": float(r.success_fraction),
            "simulated_time": float(r.simulated_time),
            "timed_out": r.timed_out,
            "attempts_total": r.total_attempts,
            "localizations": r.localizations,
            "localization_failures": r.localization_failures,
            "attempts": json.dumps(r.grasp_attempts, sort_keys=True),
            "outcomes": json.dumps(r.outcomes, sort_keys=True),
            "bin_order": ";".join(r.bin_order),
        }
        row.update(dict(rec.spec.group))
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def _num(v: Optional[float]) -> Optional[float]:
    return None if v is None else round(float(v), 6)


def summary_dict(res: ExperimentResult) -> dict:
    def s(sm: Summary) -> dict:
        return {k: (_num(v) if isinstance(v, float) else v) for k, v in sm.as_dict().items()}

    out = {
        "experiment": res.experiment,
        "master_seed": res.master_seed,
        "overall": s(res.overall),
        "groups": [{"key": g["key"], **s(g["summary"])} for g in res.groups],
        "reference": res.reference,
    }
    if res.extra:
        out["extra"] = {
            k: (_num(v) if isinstance(v, float) else v) for k, v in res.extra.items()
        }
    return out


def summary_table(res: ExperimentResult) -> str:
    """Plain-text table: measured values next to the reference column."""
    lines = [f"experiment: {res.experiment}   master seed: {res.master_seed}   runs: {res.overall.runs}"]
    ref = res.reference
    header = f"{'group':<34} {'success':>8} {'time':>16} {'attempts':>14}"
    lines.append(header)
    lines.append("-" * len(header))

    def row(label: str, sm: Summary) -> str:
        t = "undefined" if sm.time_mean is None else f"{sm.time_mean:7.1f}±{sm.time_std:6.1f}"
        return f"{label:<34} {sm.success_rate:8.3f} {t:>16} {sm.attempts_mean:6.2f}±{sm.attempts_std:5.2f}"

    if res.experiment != "grid":
        for g in res.groups:
            label = ", ".join(f"{k}={v}" for k, v in g["key"].items())
            lines.append(row(label, g["summary"]))
    lines.append(row("overall", res.overall))
    lines.append("")
    lines.append(f"{'quantity':<24} {'measured':>12} {'reference':>12}")
    if not ref:
        lines.pop()
    elif res.experiment == "baseline":
        for k in ("baseline_empty", "baseline_object", "whole_body_empty", "whole_body_object",
                  "ratio_empty", "ratio_object"):
            lines.append(f"{k:<24} {res.extra[k]:12.2f} {ref[k]:12.2f}")
    else:
        lines.append(f"{'success_rate':<24} {res.overall.success_rate:12.3f} {ref['success_rate']:12.3f}")
        for k, v in ref.items():
            if k.endswith("_hardware"):
                lines.append(f"{k:<24} {'-':>12} {v:12.3f}")
    return "\n".join(lines) + "\n"


def events_jsonl(records: Sequence[RunRecord]) -> str:
    buf = io.StringIO()
    for rec in records:
        for e in rec.result.events:
            line = {"experiment": rec.spec.experiment, "run_index": rec.spec.index, **e}
            buf.write(json.dumps(line, sort_keys=False, allow_nan=False))
            buf.write("\n")
    return buf.getvalue()


def write_results(res: ExperimentResult, cfg: C.ScenarioConfig, out_dir: Path, events: bool = True) -> dict:
    """Write every artefact of one experiment; returns the written paths by role."""
    from .heatmap import render_svg  # local import keeps the module import light

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "config": out_dir / "config.json",
        "runs": out_dir / "runs.csv",
        "summary": out_dir / "summary.json",
        "table": out_dir / "summary.txt",
    }
    paths["config"].write_text(C.dumps(cfg))
    paths["runs"].write_text(runs_csv(res.records))
    paths["summary"].write_text(json.dumps(summary_dict(res), indent=2) + "\n")
    paths["table"].write_text(summary_table(res))
    if events:
        paths["events"] = out_dir / "events.jsonl"
        paths["events"].write_text(events_jsonl(res.records))
    if res.experiment == "grid":
        paths["heatmap"] = out_dir / "heatmap.svg"
        paths["heatmap"].write_text(render_svg(res.extra["matrix"], res.extra["x"], res.extra["y"]))
    return paths
