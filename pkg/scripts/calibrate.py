"""Sweep the calibration knobs and print how the batch measures respond.

    python scripts/calibrate.py noise --values 5 10 15 20 --seeds 1 2 3
    python scripts/calibrate.py timing --transport 0.25 0.06 --cycle 8 6 --seeds 0-19
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import statistics

from blindgrasp import config as C
from blindgrasp import harness as H


def seeds(spec: list[str]) -> list[int]:
    out = []
    for s in spec:
        if "-" in s:
            a, b = s.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(s))
    return out


def grid_regions(res: H.ExperimentResult, cfg: C.ScenarioConfig) -> tuple[float, float]:
    near_r = cfg.reach.inner + 0.5 * cfg.gripper.max_width
    near, central = [], []
    for g in res.groups:
        x, y = g["key"]["x"], g["key"]["y"]
        if math.hypot(x, y) < near_r:
            near.append(g["summary"].success_rate)
        if abs(x) <= 0.1 + 1e-9 and abs(y - 0.6) <= 0.1 + 1e-9:
            central.append(g["summary"].success_rate)
    return statistics.fmean(near), statistics.fmean(central)


def sweep_noise(args) -> None:
    base = C.shipped("default")
    print(f"{'noise_mm':>8} {'seed':>5} {'grid':>7} {'near':>7} {'central':>8} {'clutter2':>9} {'clutter3':>9}")
    for noise in args.values:
        cfg = dataclasses.replace(base, noise_mm=noise)
        for s in seeds(args.seeds):
            grid = H.run_experiment("grid", cfg, s, workers=args.workers)
            near, central = grid_regions(grid, cfg)
            c2 = H.run_experiment("clutter2", cfg, s, workers=args.workers).overall.success_rate
            c3 = H.run_experiment("clutter3", cfg, s, workers=args.workers).overall.success_rate
            print(f"{noise:8.1f} {s:5d} {grid.overall.success_rate:7.3f} {near:7.3f} {central:8.3f} {c2:9.3f} {c3:9.3f}",
                  flush=True)


def sweep_timing(args) -> None:
    base = C.shipped("default")
    print(f"{'transport':>9} {'cycle':>6} {'empty':>7} {'obj min':>8} {'obj mean':>9} {'obj max':>8} {'wb obj [s]':>11}")
    for tr in args.transport:
        for ct in args.cycle:
            cfg = dataclasses.replace(
                base,
                speeds=dataclasses.replace(base.speeds, transport=tr),
                gripper=dataclasses.replace(base.gripper, cycle_time=ct),
            )
            ex = [H.run_baseline_compare(cfg, s, workers=args.workers).extra for s in seeds(args.seeds)]
            ro = [e["ratio_object"] for e in ex]
            wb = statistics.fmean(e["whole_body_object"] for e in ex)
            print(f"{tr:9.3f} {ct:6.1f} {ex[0]['ratio_empty']:7.2f} {min(ro):8.2f} {statistics.fmean(ro):9.2f} "
                  f"{max(ro):8.2f} {wb:11.1f}", flush=True)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workers", type=int, default=1)
    sub = ap.add_subparsers(dest="what", required=True)
    p = sub.add_parser("noise", help="probe noise against the grid and clutter success rates")
    p.add_argument("--values", type=float, nargs="+", default=[5.0, 10.0, 15.0, 20.0])
    p.add_argument("--seeds", nargs="+", default=["1", "2", "3"])
    p.set_defaults(func=sweep_noise)
    p = sub.add_parser("timing", help="transport speed and grasp cycle against the baseline ratios")
    p.add_argument("--transport", type=float, nargs="+", default=[0.25, 0.1, 0.06])
    p.add_argument("--cycle", type=float, nargs="+", default=[8.0, 6.0])
    p.add_argument("--seeds", nargs="+", default=["0-19"])
    p.set_defaults(func=sweep_timing)
    args = ap.parse_args()
    args.func(args)


if __name__ == "__main__":
    main()
