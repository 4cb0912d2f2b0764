"""Hand-built reference instances with their documented outcomes."""
from __future__ import annotations

from dataclasses import dataclass, field

from .controller import RunOptions, plan_update, run_centralized, run_decentralized
from .netmodel import Flow, FlowUpdate, Link, NetworkConfig, Topology
from .segmentation import IN_LOOP, segment_flow
from .sim import Latencies
from .verifier import SAFETY, check_properties

NAMES = ("fig1", "fig2", "fig3", "fig4", "fig5a", "fig5b", "fig5c")

# seven-switch example network, every link 10 units
EXAMPLE_EDGES = [(1, 2), (2, 3), (2, 6), (3, 4), (3, 6), (3, 7), (4, 5), (4, 7)]


@dataclass
class ScenarioResult:
    name: str
    passed: bool
    lines: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)

    def check(self, ok, what):
        self.lines.append(f"[{'ok' if ok else 'FAIL'}] {what}")
        if not ok:
            self.passed = False


def example_topology(edges=EXAMPLE_EDGES, slow=()):
    """All links 1 ms except those in `slow` (5 ms)."""
    links = []
    for a, b in edges:
        lat = 5.0 if (a, b) in slow or (b, a) in slow else 1.0
        links += [Link(a, b, 10.0, lat), Link(b, a, 10.0, lat)]
    nodes = {x for e in edges for x in e}
    return Topology(nodes, links, name="example")


def _cfg(*flows):
    return NetworkConfig.of([Flow(i, v, p) for i, v, p in flows])


def _narrate(res: ScenarioResult, rep):
    for r in rep.trace:
        if r.action in ("install_rule", "remove_rule", "split", "deadlock_detected"):
            res.lines.append(f"  t={r.time:7.2f} s{r.actor} {r.action} {r.segment} "
                             f"{r.src}->{r.dst} vol={r.volume:g}")


def _safe(res, rep, label):
    bad = [v for v in check_properties(rep.trace, check_termination=rep.completed) if v.kind in SAFETY]
    res.check(not bad, f"{label}: no congestion, loop or black hole" + (f" ({bad[0]})" if bad else ""))


def _first_move(rep, seg, switch):
    for r in rep.trace:
        if r.action == "install_rule" and r.segment == seg and r.actor == switch:
            return r
    return None


def _seg_of(plan, uid, link):
    """Segment of flow uid whose old subpath uses `link`."""
    for s in plan.segments:
        if s.uid == uid and link in s.old_links:
            return s.id
    return None


def fig1(segmentation=True, split=True, verbose=False) -> ScenarioResult:
    res = ScenarioResult("fig1", True)
    topo = example_topology(slow={(2, 6), (3, 6)})
    cur = _cfg(("B", 5, (1, 2, 6, 3, 4)), ("G", 5, (2, 6, 3)), ("R", 5, (2, 3, 7, 4, 5)))
    tgt = _cfg(("B", 5, (1, 2, 3, 7, 4)), ("G", 5, (2, 6, 3)), ("R", 5, (2, 6, 3, 4, 5)))
    plan = plan_update(topo, cur, tgt, segmentation=segmentation)
    opts = RunOptions(split=split, controller=2)
    ez, ce = run_decentralized(plan, opts), run_centralized(plan, opts)
    res.reports = {"ezsegway": ez, "centralized": ce}
    res.check(ez.completed and ce.completed, "both modes complete")
    _safe(res, ez, "ezsegway")
    _safe(res, ce, "centralized")
    if segmentation:
        lat = Latencies(topo)
        want = lat(2, 2) + lat(2, 6) + lat(6, 2)  # controller sits at s2
        res.check(abs(ez.last_op_ms - want) < 1e-9,
                  f"critical path {ez.last_op_ms:g} ms = dissemination + s2<->s6 round trip ({want:g} ms)")
    if verbose:
        _narrate(res, ez)
    return res


def fig2(segmentation=True, split=True, verbose=False) -> ScenarioResult:
    res = ScenarioResult("fig2", True)
    topo = example_topology()
    cur = _cfg(("B", 5, (1, 2, 6, 3, 4)), ("G", 5, (2, 3, 4)), ("R", 5, (2, 3, 7, 4, 5)))
    tgt = _cfg(("B", 5, (1, 2, 3, 7, 4)), ("G", 5, (2, 3, 4)), ("R", 5, (2, 6, 3, 4, 5)))
    plan = plan_update(topo, cur, tgt, segmentation=segmentation)
    ez = run_decentralized(plan, RunOptions(split=split, controller=2))
    res.reports = {"ezsegway": ez}
    _safe(res, ez, "ezsegway")
    if segmentation:
        res.check(ez.completed, "segmented update completes")
    else:
        res.check(not ez.completed and ez.deadlock == "Unsplittable",
                  f"whole-flow update reports Unsplittable (got {ez.deadlock})")
    if verbose:
        _narrate(res, ez)
    return res


def fig3(segmentation=True, split=True, verbose=False) -> ScenarioResult:
    res = ScenarioResult("fig3", True)
    topo = example_topology()
    cur = _cfg(("B", 4, (1, 2, 6, 3, 4)), ("G", 4, (2, 6, 3)), ("N", 4, (2, 3, 4)), ("R", 4, (2, 3, 7, 4, 5)))
    tgt = _cfg(("B", 4, (1, 2, 3, 7, 4)), ("G", 4, (2, 6, 3)), ("N", 4, (2, 3, 4)), ("R", 4, (2, 6, 3, 4, 5)))
    plan = plan_update(topo, cur, tgt, segmentation=segmentation)
    ez = run_decentralized(plan, RunOptions(split=split, controller=2))
    res.reports = {"ezsegway": ez}
    _safe(res, ez, "ezsegway")
    if not split:
        res.check(not ez.completed and ez.deadlock == "Splittable",
                  f"without splitting the update reports Splittable (got {ez.deadlock})")
    else:
        seg = _seg_of(plan, "B", (2, 6)) or "B#0"
        mv = _first_move(ez, seg, 2)
        res.check(mv is not None and abs(mv.volume - 2.0) < 1e-9,
                  f"first move of F_B at s2 carries {mv.volume if mv else None} units (expect 2)")
        res.check(ez.completed, "update completes after splitting")
    if verbose:
        _narrate(res, ez)
    return res


def fig4(segmentation=True, split=True, verbose=False) -> ScenarioResult:
    res = ScenarioResult("fig4", True)
    topo = example_topology([(1, 2), (2, 3), (2, 6), (3, 4), (3, 6)])
    cur = _cfg(("R", 4, (1, 2, 3)), ("B", 4, (1, 2, 6, 3, 4)), ("G", 3, (2, 3)), ("N", 3, (2, 3, 4)))
    tgt = _cfg(("R", 4, (1, 2, 6, 3)), ("B", 4, (1, 2, 3, 4)), ("G", 3, (2, 6, 3)), ("N", 3, (2, 3, 4)))
    plan = plan_update(topo, cur, tgt, segmentation=segmentation)
    ez = run_decentralized(plan, RunOptions(split=split, controller=2))
    res.reports = {"ezsegway": ez}
    _safe(res, ez, "ezsegway")
    res.check(ez.completed and ez.splits == 0, "completes without splitting")
    r = _seg_of(plan, "R", (2, 3))
    g = _seg_of(plan, "G", (2, 3))
    tr, tg = _first_move(ez, r, 6), _first_move(ez, g, 6)
    res.check(tr is not None and tg is not None and tr.time <= tg.time
              and ez.trace.index(tr) < ez.trace.index(tg), "pi_R installs at s6 before pi_G")
    names = {2: "High", 1: "Medium", 0: "Low"}
    pr = {k: names[v] for k, v in plan.priorities.items()}
    b = _seg_of(plan, "B", (2, 6))
    res.check(pr.get(r) == "High" and pr.get(b) == "High" and pr.get(g) == "Medium",
              f"priorities R={pr.get(r)} B={pr.get(b)} G={pr.get(g)}")
    if verbose:
        _narrate(res, ez)
    return res


def _fig5(name, old, new, expected, deps):
    res = ScenarioResult(name, True)
    segs = segment_flow(FlowUpdate("f", 1.0, old, new))
    got = [(s.old_sub, s.new_sub, s.kind) for s in segs]
    res.check(sorted(got) == sorted(expected), f"segments {[(a, b) for a, b, _ in got]}")
    by_old = {s.old_sub: s for s in segs}
    ids = {s.id: s for s in segs}
    for seg_old, dep_old in deps:
        s = by_old.get(seg_old)
        ok = s is not None and s.kind == IN_LOOP and s.dep in ids and ids[s.dep].old_sub == dep_old
        res.check(ok, f"dep of segment {seg_old} is {dep_old}")
    edges = {tuple(sorted(e)) for p in (old, new) for e in zip(p, p[1:])}
    topo = Topology.from_edges(sorted(edges), 10.0, 1.0)
    plan = plan_update(topo, _cfg(("f", 1, old)), _cfg(("f", 1, new)))
    ez = run_decentralized(plan)
    res.reports = {"ezsegway": ez}
    res.check(ez.completed, "update completes")
    _safe(res, ez, "ezsegway")
    return res


def fig5a(**_):
    return _fig5("fig5a", (0, 4, 1, 5, 2, 3), (0, 6, 1, 7, 2, 3),
                 [((0, 4, 1), (0, 6, 1), "NotInLoop"), ((1, 5, 2), (1, 7, 2), "NotInLoop"),
                  ((2, 3), (2, 3), "NotInLoop")], [])


def fig5b(**_):
    return _fig5("fig5b", (0, 4, 1, 5, 2, 6, 3), (0, 8, 2, 1, 7, 3),
                 [((0, 4, 1), (0, 8, 2), "NotInLoop"), ((1, 5, 2), (1, 7, 3), "NotInLoop"),
                  ((2, 6, 3), (2, 1), IN_LOOP)], [((2, 6, 3), (1, 5, 2))])


def fig5c(**_):
    return _fig5("fig5c", (0, 1, 2, 3, 4, 5, 6), (0, 7, 3, 2, 8, 1, 9, 5, 10, 4, 6),
                 [((1, 2, 3), (1, 9, 5), "NotInLoop"), ((4, 5), (4, 6), "NotInLoop"),
                  ((0, 1), (0, 7, 3), "NotInLoop"), ((3, 4), (3, 2, 8, 1), IN_LOOP),
                  ((5, 6), (5, 10, 4), IN_LOOP)],
                 [((3, 4), (1, 2, 3)), ((5, 6), (4, 5))])


SCENARIOS = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig4": fig4,
             "fig5a": fig5a, "fig5b": fig5b, "fig5c": fig5c}


def run_scenario(name, segmentation=True, split=True, verbose=False) -> ScenarioResult:
    fn = SCENARIOS[name]
    if name.startswith("fig5"):
        return fn()
    return fn(segmentation=segmentation, split=split, verbose=verbose)
