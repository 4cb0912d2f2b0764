"""Acceptance criteria. Each test prints one PASS/FAIL line and asserts it."""
import math
import statistics
import time

import pytest

from conftest import report
from ezsegway.cli import main
from ezsegway.controller import RunOptions, plan_update, run_decentralized
from ezsegway.depgraph import assign_priorities
from ezsegway.metrics import read_metrics, rows_to_csv, metrics_row, run_pairs, run_transitions, summarize
from ezsegway.scenarios import run_scenario
from ezsegway.verifier import SAFETY, TooLarge, brute_force_feasible, check_properties
from ezsegway.workload import (config_sequence, load_topology, random_instance, reroute_pairs,
                               rocketfuel_like)
from test_depgraph import random_graph


def _timed(name, **kw):
    t0 = time.perf_counter()
    res = run_scenario(name, **kw)
    return res, time.perf_counter() - t0


def _summary(transitions):
    rows = []
    for tr in transitions:
        for rep in tr.reports.values():
            rows.append(metrics_row(tr.idx, rep))
    return summarize(read_metrics(rows_to_csv(rows)))


def test_fig1_critical_path():
    res, dt = _timed("fig1")
    ez = res.reports["ezsegway"]
    bad = [v for v in check_properties(ez.trace) if v.kind in SAFETY]
    ok = res.passed and not bad and dt < 1.0
    assert report("fig1", ok, f"violations={len(bad)} critical_path={ez.last_op_ms:g}ms time={dt:.3f}s")


def test_fig2_segmentation_resolves_deadlock():
    whole, t1 = _timed("fig2", segmentation=False, split=False)
    seg, t2 = _timed("fig2")
    d = whole.reports["ezsegway"].deadlock
    ok = d == "Unsplittable" and seg.passed and seg.reports["ezsegway"].completed and max(t1, t2) < 1.0
    assert report("fig2", ok, f"whole-flow={d} segmented_completed={seg.reports['ezsegway'].completed}")


def test_fig3_split_resolves_deadlock():
    nosplit, t1 = _timed("fig3", split=False)
    split, t2 = _timed("fig3")
    d = nosplit.reports["ezsegway"].deadlock
    ok = d == "Splittable" and split.passed and max(t1, t2) < 1.0
    assert report("fig3", ok, f"no-split={d} split: {'; '.join(l for l in split.lines if 'first move' in l)}")


def test_fig4_priority_order():
    res, dt = _timed("fig4")
    ok = res.passed and res.reports["ezsegway"].splits == 0 and dt < 1.0
    assert report("fig4", ok, "; ".join(res.lines))


def test_fig5c_segments():
    res, dt = _timed("fig5c")
    ok = res.passed and dt < 1.0
    assert report("fig5c", ok, "; ".join(res.lines[:3]))


def test_random_instances_safe():
    t0 = time.perf_counter()
    viol, stuck = 0, 0
    for seed in range(1000):
        topo, cur, tgt = random_instance(seed)
        rep = run_decentralized(plan_update(topo, cur, tgt))
        viol += sum(1 for v in check_properties(rep.trace, check_termination=rep.completed) if v.kind in SAFETY)
        if not rep.completed and rep.deadlock is None:
            stuck += 1
    dt = time.perf_counter() - t0
    ok = viol == 0 and stuck == 0 and dt < 120
    assert report("random-1000", ok, f"violations={viol} neither-done-nor-deadlock={stuck} time={dt:.1f}s")


def test_oracle_consistency():
    checked, wrong = 0, []
    for seed in range(1000):
        topo, cur, tgt = random_instance(seed)
        plan = plan_update(topo, cur, tgt, segmentation=False)
        try:
            feas = brute_force_feasible(plan.graph, max_ops=6)
        except TooLarge:
            continue
        if feas:
            continue
        checked += 1
        rep = run_decentralized(plan, RunOptions(split=False))
        if rep.completed or rep.deadlock is None:
            wrong.append(seed)
    ok = checked > 0 and not wrong
    assert report("oracle-consistency", ok, f"infeasible instances={checked} without deadlock report={wrong[:5]}")


@pytest.fixture(scope="module")
def b4():
    topo = load_topology("b4")
    return _summary(run_transitions(topo, config_sequence(topo, 100, 1)))


def test_b4_messages(b4):
    r = b4["message_ratio"]
    assert report("b4-messages", r <= 0.5, f"ez/centralized messages={r:.3f} (<= 0.5)")


def test_b4_completion(b4):
    e, c = b4["ezsegway"], b4["centralized"]
    r50, r99 = e["p50"] / c["p50"], e["p99"] / c["p99"]
    ok = r50 <= 0.8 and r99 <= 0.7 and e["completed"] == 100
    assert report("b4-completion", ok, f"p50 ratio={r50:.3f} (<= 0.8) p99 ratio={r99:.3f} (<= 0.7)")


def test_b4_overheads(b4):
    o = b4["overhead"]
    ok = o["extra_rules_mean"] <= 4 and o["extra_rules_max"] <= 8 and o["extra_msgs_mean"] <= 10
    assert report("overheads", ok, f"extra rules mean={o['extra_rules_mean']:.3f} max={o['extra_rules_max']:.0f} "
                                   f"extra msgs mean={o['extra_msgs_mean']:.3f}")


@pytest.mark.parametrize("p", [0.25, 0.75])
def test_rocketfuel_speedup(p):
    topo = rocketfuel_like(50, 7)
    s = _summary(run_pairs(topo, reroute_pairs(topo, 10, 3, p, n_pairs=500)))
    sp = s["speedup"]["mean"]
    ok = 1.3 <= sp <= 2.5 and len(topo.switches) >= 50
    assert report(f"rocketfuel-p{p}", ok, f"mean speedup={sp:.3f} (in [1.3, 2.5])")


def test_priority_assignment_time():
    g = random_graph(200, 500, 1)
    t0 = time.perf_counter()
    pr = assign_priorities(g)
    dt = time.perf_counter() - t0
    ok = dt < 5.0 and len(pr) == 200
    assert report("priorities-200x500", ok, f"time={dt:.3f}s (< 5 s)")


def test_determinism(tmp_path):
    outs = []
    for d in ("a", "b"):
        out = tmp_path / d
        assert main(["run", "--topology", "b4", "--configs", "5", "--seed", "11", "--out", str(out),
                     "--traces"]) == 0
        outs.append(out)
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes() for f in files)
    ok = same and len(files) == 12
    assert report("determinism", ok, f"{len(files)} files byte-identical={same}")
