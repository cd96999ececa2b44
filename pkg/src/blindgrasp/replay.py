"""Re-check a recorded event log against the simulator's bookkeeping invariants."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

TIMED = ("motion", "grasp", "bin")
TOL = 1e-6


@dataclass(frozen=True)
class Violation:
    run: str
    seq: int
    rule: str
    detail: str

    def as_dict(self) -> dict:
        return {"run": self.run, "seq": self.seq, "rule": self.rule, "detail": self.detail}

    def __str__(self) -> str:
        return f"[{self.run} #{self.seq}] {self.rule}: {self.detail}"


class ReplayError(ValueError):
    """The log file itself is unreadable or structurally broken."""


def _close(a: float, b: float, tol: float = TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def verify_run(events: Sequence[dict], run: str = "run") -> list[Violation]:
    """All invariant violations found in one run's events (empty list = clean)."""
    out: list[Violation] = []

    def bad(e: dict, rule: str, detail: str) -> None:
        out.append(Violation(run, int(e.get("seq", -1)), rule, detail))

    if not events:
        return [Violation(run, -1, "structure", "run has no events")]
    first, last = events[0], events[-1]
    if first.get("type") != "run_start":
        bad(first, "structure", "first event is not run_start")
        return out
    speeds = first.get("speeds", {})
    cycle = first.get("cycle_time")
    timeout = first.get("timeout")

    clock = first["t"]
    busy = 0.0
    i_max = None
    sweep_x = math.inf
    attempts = 0
    binned: list[str] = []
    fallen: set[str] = set()
    for n, e in enumerate(events):
        kind = e.get("type")
        if e.get("seq") != n:
            bad(e, "sequence", f"expected seq {n}, found {e.get('seq')}")
        t = e.get("t")
        if not isinstance(t, (int, float)) or t < clock - 1e-9:
            bad(e, "clock monotonicity", f"t={t} after t={clock}")
            t = clock
        if kind in TIMED:
            d, t0 = e["duration"], e["t0"]
            if d < 0:
                bad(e, "duration", f"negative duration {d}")
            if not _close(t0, clock):
                bad(e, "clock continuity", f"starts at {t0}, clock was {clock}")
            if not _close(t, t0 + d):
                bad(e, "clock arithmetic", f"t={t} but t0+duration={t0 + d}")
            busy += d
        elif not _close(t, clock):
            bad(e, "clock continuity", f"instant event at {t}, clock was {clock}")
        clock = max(clock, t)

        if kind == "motion":
            mode = e["mode"]
            if mode in speeds and not _close(e["speed"], speeds[mode]):
                bad(e, "speed", f"{mode} at {e['speed']}, table says {speeds[mode]}")
            if not _close(e["length"], math.dist(e["start"], e["stop"])):
                bad(e, "motion length", "length differs from start-stop distance")
            if e["speed"] > 0 and not _close(e["duration"], e["length"] / e["speed"]):
                bad(e, "motion duration", f"{e['duration']} != length/speed")
            if mode == "sweep" and e["stop"][0] > sweep_x + 1e-9:
                bad(e, "sweep direction", f"sweep moved right to x={e['stop'][0]}")
            if mode == "sweep":
                sweep_x = e["stop"][0]
        elif kind == "sweep_step":
            if e["x"] > sweep_x + 1e-9:
                bad(e, "sweep direction", f"sweep step at x={e['x']} after x={sweep_x}")
            sweep_x = e["x"]
        elif kind == "phase":
            i_max = e.get("i_max")
        elif kind == "grasp_plan":
            attempts = 0
        elif kind == "grasp":
            attempts += 1
            if i_max is not None and attempts > i_max:
                bad(e, "attempt limit", f"{attempts} attempts exceed i_max={i_max}")
            if cycle is not None and not _close(e["duration"], cycle):
                bad(e, "grasp duration", f"{e['duration']} != cycle time {cycle}")
            oid = e.get("object_id")
            if e.get("outcome") == "success" and oid in fallen:
                bad(e, "fallen object grasped", f"{oid} succeeded after toppling")
            if e.get("outcome") == "toppled":
                fallen.add(oid)
        elif kind == "bin":
            oid = e["object_id"]
            if oid in binned:
                bad(e, "bin uniqueness", f"{oid} binned twice")
            binned.append(oid)
            if "transport" in speeds and not _close(e["duration"], e["length"] / speeds["transport"]):
                bad(e, "bin duration", "duration != length / transport speed")

    if last.get("type") != "run_end":
        bad(last, "structure", "last event is not run_end")
        return out
    if not _close(busy + first["t"], last["t"]):
        bad(last, "clock total", f"durations sum to {busy}, final clock {last['t']}")
    ids = [o["id"] for o in first.get("objects", [])]
    end_bin, end_table = list(last.get("bin", [])), list(last.get("table", []))
    if sorted(end_bin + end_table) != sorted(ids) or set(end_bin) & set(end_table):
        bad(last, "object conservation", f"start {sorted(ids)} vs bin {end_bin} + table {end_table}")
    if end_bin != binned:
        bad(last, "bin uniqueness", f"bin events {binned} disagree with final bin {end_bin}")
    if last.get("timed_out") and timeout is not None and last["t"] < timeout - 1e-9:
        bad(last, "timeout", f"timed out at {last['t']} before the {timeout} s limit")
    return out


def split_runs(events: Iterable[dict]) -> list[tuple[str, list[dict]]]:
    """Group a flat event stream into runs, keyed by experiment/run_index when present."""
    runs: list[tuple[str, list[dict]]] = []
    for e in events:
        if e.get("type") == "run_start" or not runs:
            key = f"{e.get('experiment', 'run')}:{e.get('run_index', len(runs))}"
            runs.append((key, []))
        runs[-1][1].append(e)
    return runs


def load_events(path) -> list[dict]:
    events = []
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReplayError(f"line {lineno}: {exc.msg}") from None
            if not isinstance(rec, dict) or "type" not in rec:
                raise ReplayError(f"line {lineno}: not an event record")
            events.append(rec)
    return events


def verify_log(path) -> tuple[int, list[Violation]]:
    """Returns (number of runs checked, violations)."""
    runs = split_runs(load_events(path))
    found: list[Violation] = []
    for key, evs in runs:
        found.extend(verify_run(evs, key))
    return len(runs), found
