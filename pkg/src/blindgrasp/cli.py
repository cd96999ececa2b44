"""Command line: single runs, batch experiments, log replay and heatmap rendering.

Exit codes: 0 success, 1 other failure, 2 configuration error, 3 replay found a violation.
Errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import config as C
from . import harness as H
from . import heatmap, replay

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_REPLAY = 3

# Bundled scenario used when --config is not given.
DEFAULT_SCENARIO = {
    "grid": "paper-sim",
    "clutter2": "paper-sim",
    "clutter3": "paper-sim",
    "rotation": "default",
    "baseline": "default",
}

MAX_REPORTED = 50


class CliError(Exception):
    def __init__(self, code: int, record: dict):
        super().__init__(record.get("message", ""))
        self.code = code
        self.record = record


def load_scenario(ref: str) -> C.ScenarioConfig:
    """A file path, or the name of a bundled scenario."""
    p = Path(ref)
    if p.suffix == ".json" or p.exists():
        return C.parse_config(p)
    try:
        return C.shipped(ref)
    except FileNotFoundError:
        raise C.ConfigError(f"no scenario file or bundled scenario named {ref!r}") from None


def apply_overrides(cfg: C.ScenarioConfig, args: argparse.Namespace) -> C.ScenarioConfig:
    """Flags win over file values."""
    data = C.to_dict(cfg)
    if getattr(args, "seed", None) is not None:
        data["seed"] = args.seed
    if getattr(args, "profile", None) is not None:
        data["profile"] = args.profile
    if getattr(args, "noise", None) is not None:
        data["noise_mm"] = args.noise
    return C.from_dict(data)


def _emit_error(record: dict) -> None:
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def _finish(res: H.ExperimentResult, cfg: C.ScenarioConfig, args: argparse.Namespace) -> int:
    paths = H.write_results(res, cfg, Path(args.out), events=not args.no_events)
    sys.stdout.write(H.summary_table(res))
    for role, p in paths.items():
        print(f"wrote {role}: {p}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_scenario(args.scenario), args)
    res = H.run_scenario(cfg, cfg.seed, args.method)
    return _finish(res, cfg, args)


def cmd_experiment(args: argparse.Namespace) -> int:
    cfg = apply_overrides(load_scenario(args.config or DEFAULT_SCENARIO[args.name]), args)
    if args.workers < 1:
        raise CliError(EXIT_FAILURE, {"error": "usage", "message": "--workers must be >= 1"})
    if args.reps is not None and args.reps < 1:
        raise CliError(EXIT_FAILURE, {"error": "usage", "message": "--reps must be >= 1"})
    res = H.run_experiment(args.name, cfg, cfg.seed, workers=args.workers, reps=args.reps)
    return _finish(res, cfg, args)


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        n, violations = replay.verify_log(args.log)
    except replay.ReplayError as exc:
        raise CliError(EXIT_REPLAY, {"error": "replay", "message": f"malformed log: {exc}"}) from None
    except OSError as exc:
        raise CliError(EXIT_FAILURE, {"error": "io", "message": f"cannot read {args.log}: {exc.strerror}"}) from None
    if violations:
        rules = sorted({v.rule for v in violations})
        raise CliError(
            EXIT_REPLAY,
            {
                "error": "replay",
                "message": f"{len(violations)} violation(s): {', '.join(rules)}",
                "runs": n,
                "violations": [v.as_dict() for v in violations[:MAX_REPORTED]],
            },
        )
    print(f"replay ok: {n} run(s) verified")
    return EXIT_OK


def cmd_render_heatmap(args: argparse.Namespace) -> int:
    out = Path(args.output) if args.output else Path(args.csv).with_suffix(".svg")
    try:
        heatmap.render_csv_to_svg(args.csv, out)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_FAILURE, {"error": "heatmap", "message": str(exc)}) from None
    print(f"wrote heatmap: {out}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="master seed (overrides the file)")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--profile", choices=("sim", "real"), help="failure profile")
    p.add_argument("--noise", type=float, help="probe noise sigma in mm")
    p.add_argument("--no-events", action="store_true", help="skip the JSON-lines event log")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blindgrasp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one run of a scenario's placements")
    p.add_argument("scenario", help="scenario JSON file or bundled name (default, paper-sim)")
    p.add_argument("--method", choices=("whole_body", "baseline"), default="whole_body")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("experiment", help="run a batch experiment")
    p.add_argument("name", choices=H.EXPERIMENTS)
    p.add_argument("--config", help="scenario JSON file or bundled name")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--reps", type=int, help="repetitions per setting (overrides the file)")
    _common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("replay", help="verify invariants of a recorded event log")
    p.add_argument("log", help="events.jsonl")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("render-heatmap", help="grid runs.csv to SVG")
    p.add_argument("csv")
    p.add_argument("-o", "--output", help="SVG path (default: next to the CSV)")
    p.set_defaults(func=cmd_render_heatmap)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except C.ConfigError as exc:
        _emit_error(exc.record())
        return EXIT_CONFIG
    except CliError as exc:
        _emit_error(exc.record)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
