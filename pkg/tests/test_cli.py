import json
import subprocess
import sys

import pytest

from blindgrasp import config as C
from blindgrasp.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, EXIT_REPLAY, main


def stderr_record(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_run_writes_outputs(tmp_path, capsys):
    assert main(["run", "default", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "overall" in out
    for name in ("config.json", "runs.csv", "summary.json", "summary.txt", "events.jsonl"):
        assert (tmp_path / name).exists()
    assert json.loads((tmp_path / "config.json").read_text())["seed"] == 3


def test_flags_override_the_file(tmp_path):
    assert main(["run", "default", "--noise", "0", "--profile", "real", "--out", str(tmp_path), "--no-events"]) == 0
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["noise_mm"] == 0.0 and cfg["profile"] == "real"
    assert not (tmp_path / "events.jsonl").exists()


def test_bad_config_exits_2_with_field(tmp_path, capsys):
    data = C.to_dict(C.ScenarioConfig())
    data["bogus"] = 1
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(data))
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    rec = stderr_record(capsys)
    assert rec["error"] == "config" and rec["field"] == "bogus"


def test_unknown_bundled_scenario_is_a_config_error(tmp_path, capsys):
    assert main(["run", "nowhere", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "nowhere" in stderr_record(capsys)["message"]


def test_bad_worker_count_is_a_usage_failure(tmp_path, capsys):
    assert main(["experiment", "baseline", "--workers", "0", "--out", str(tmp_path)]) == EXIT_FAILURE
    assert stderr_record(capsys)["error"] == "usage"


def test_experiment_is_reproducible_across_worker_counts(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["experiment", "baseline", "--reps", "1", "--seed", "5", "--out", str(a)]) == 0
    assert main(["experiment", "baseline", "--reps", "1", "--seed", "5", "--workers", "2", "--out", str(b)]) == 0
    assert (a / "runs.csv").read_bytes() == (b / "runs.csv").read_bytes()


def test_replay_accepts_a_clean_log_and_rejects_a_tampered_one(tmp_path, capsys):
    assert main(["run", "default", "--out", str(tmp_path)]) == 0
    log = tmp_path / "events.jsonl"
    assert main(["replay", str(log)]) == EXIT_OK
    assert "replay ok" in capsys.readouterr().out

    lines = log.read_text().splitlines()
    ev = json.loads(lines[6])
    ev["t"] = -1.0
    lines[6] = json.dumps(ev)
    bad = tmp_path / "tampered.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(bad)]) == EXIT_REPLAY
    rec = stderr_record(capsys)
    assert "clock monotonicity" in rec["message"]


def test_replay_of_garbage_exits_3(tmp_path, capsys):
    p = tmp_path / "x.jsonl"
    p.write_text("{oops\n")
    assert main(["replay", str(p)]) == EXIT_REPLAY
    assert "malformed" in stderr_record(capsys)["message"]


def test_replay_of_a_missing_file_exits_1(tmp_path, capsys):
    assert main(["replay", str(tmp_path / "none.jsonl")]) == EXIT_FAILURE


def test_render_heatmap_from_grid_csv(tmp_path):
    cfg = C.to_dict(C.ScenarioConfig())
    cfg["experiments"]["grid"].update(cells=3, reps=1)
    p = tmp_path / "grid.json"
    p.write_text(json.dumps(cfg))
    out = tmp_path / "grid"
    assert main(["experiment", "grid", "--config", str(p), "--out", str(out)]) == 0
    svg = tmp_path / "again.svg"
    assert main(["render-heatmap", str(out / "runs.csv"), "-o", str(svg)]) == 0
    assert svg.read_text().count('class="cell"') == 9
    assert svg.read_text() == (out / "heatmap.svg").read_text()


def test_render_heatmap_rejects_non_grid_csv(tmp_path, capsys):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1,2\n")
    assert main(["render-heatmap", str(p)]) == EXIT_FAILURE


@pytest.mark.parametrize("argv", [["--help"], ["experiment", "nope"]])
def test_console_script_usage(argv):
    proc = subprocess.run([sys.executable, "-m", "blindgrasp.cli", *argv], capture_output=True, text=True)
    assert proc.returncode in (0, 2)
    assert "usage" in (proc.stdout + proc.stderr)
