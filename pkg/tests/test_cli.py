import filecmp
import os

import pytest

from ezsegway.cli import main
from ezsegway.scenarios import run_scenario
from ezsegway.sim import trace_to_csv


def test_run_writes_metrics_and_traces(tmp_path, capsys):
    out = tmp_path / "r"
    rc = main(["run", "--topology", "b4", "--configs", "3", "--pairs", "20", "--seed", "2",
               "--out", str(out), "--traces", "--per-flow", "--verify"])
    assert rc == 0
    for m in ("ezsegway", "centralized"):
        assert (out / f"metrics_{m}.csv").exists() and (out / f"flows_{m}.csv").exists()
        assert len(os.listdir(out / "traces")) == 6
    text = capsys.readouterr().out
    assert "speedup" in text and "verify: 0 violation(s)" in text
    assert main(["stats", str(out / "metrics_ezsegway.csv"), str(out / "metrics_centralized.csv")]) == 0
    assert "msg_ratio" in capsys.readouterr().out


def test_run_single_mode_and_reroute(tmp_path, capsys):
    rc = main(["run", "--topology", "rocketfuel:12:1", "--mode", "ezsegway", "--reroute", "0.5",
               "--configs", "2", "--pairs", "10", "--out", str(tmp_path)])
    assert rc == 0 and not (tmp_path / "metrics_centralized.csv").exists()


def test_usage_and_io_errors(tmp_path, capsys):
    assert main(["run", "--topology", "b4", "--configs", "0", "--out", str(tmp_path)]) == 2
    assert main(["run", "--topology", "b4", "--controller", "999", "--out", str(tmp_path)]) == 2
    assert main(["run", "--topology", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 3
    with pytest.raises(SystemExit) as e:
        main(["run", "--topology", "b4", "--reroute", "1.5"])
    assert e.value.code == 2
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert main(["verify", str(empty)]) == 3
    assert main(["stats", str(empty)]) == 3


def test_verify_clean_and_mutated(tmp_path, capsys):
    rep = run_scenario("fig1").reports["ezsegway"]
    good = tmp_path / "good.csv"
    good.write_text(trace_to_csv(rep.trace))
    assert main(["verify", str(good)]) == 0
    assert capsys.readouterr().out.strip() == "time_ms,kind,detail"
    # drop the first install on the new path: the switch upstream now points at nothing
    lines = good.read_text().splitlines()
    i = next(n for n, l in enumerate(lines) if ",install_rule," in l)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:i] + lines[i + 1:]) + "\n")
    assert main(["verify", str(bad)]) == 1
    assert "BlackHole" in capsys.readouterr().out


def test_scenario_exit_codes(capsys):
    assert main(["scenario", "fig1"]) == 0
    assert "fig1: PASS" in capsys.readouterr().out
    assert main(["scenario", "fig2", "--no-segmentation", "--no-split"]) == 0
    assert main(["scenario", "fig3", "--no-split", "-v"]) == 0
    with pytest.raises(SystemExit):
        main(["scenario", "fig9"])


def test_same_seed_gives_identical_files(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["run", "--topology", "b4", "--configs", "4", "--pairs", "24", "--seed", "5",
                     "--out", str(d), "--traces", "--per-flow"]) == 0
    cmp = filecmp.dircmp(a, b)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    sub = filecmp.dircmp(a / "traces", b / "traces")
    assert len(sub.same_files) == 8 and not sub.diff_files
