"""Replay traces into forwarding snapshots and check for congestion, loops,
black holes and non-termination. Also hosts the brute-force feasibility
oracle and an exhaustive interleaving explorer for segmented updates."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .netmodel import EPS, Flow, NetworkConfig
from .segmentation import IN_LOOP, uid_of

CONGESTION = "Congestion"
LOOP = "Loop"
BLACK_HOLE = "BlackHole"
NON_TERMINATION = "NonTermination"
SAFETY = (CONGESTION, LOOP, BLACK_HOLE)


@dataclass(frozen=True)
class Violation:
    kind: str
    time: float
    detail: str


@dataclass
class FlowState:
    volume: float
    old: tuple = ()
    new: tuple = ()
    installed: dict = field(default_factory=dict)  # switch -> volume on new rule
    removed: dict = field(default_factory=dict)  # switch -> volume taken off old rule
    firsts: set = field(default_factory=set)  # switches that start a segment

    def next_hops(self):
        on = {}
        for a, b in zip(self.old, self.old[1:]):
            on.setdefault(a, {})["old"] = b
        for a, b in zip(self.new, self.new[1:]):
            on.setdefault(a, {})["new"] = b
        return on


class ForwardingState:
    """Per-flow rule state reconstructed from trace records."""

    def __init__(self):
        self.capacity: dict = {}
        self.flows: dict[str, FlowState] = {}
        self._hops: dict = {}

    def flow(self, uid, volume=0.0) -> FlowState:
        if uid not in self.flows:
            self.flows[uid] = FlowState(volume)
            self._hops.pop(uid, None)
        return self.flows[uid]

    def hops(self, uid):
        h = self._hops.get(uid)
        if h is None:
            h = self._hops[uid] = self.flows[uid].next_hops()
        return h

    def apply(self, r) -> str | None:
        """Apply one record; returns the affected flow uid if any."""
        a = r.action
        if a == "capacity":
            self.capacity[(r.src, r.dst)] = r.volume
        elif a in ("old_hop", "new_hop"):
            f = self.flow(r.segment, r.volume)
            f.volume = r.volume
            side = "old" if a == "old_hop" else "new"
            p = getattr(f, side)
            if not p:
                p = (r.src,)
            if p[-1] != r.src:
                raise ValueError(f"non-contiguous {a} for {r.segment}")
            setattr(f, side, p + (r.dst,))
            self._hops.pop(r.segment, None)
        elif a == "seg_first":
            self.flow(uid_of(r.segment)).firsts.add(r.actor)
        elif a == "install_rule":
            f = self.flow(uid_of(r.segment))
            f.installed[r.actor] = f.installed.get(r.actor, 0.0) + r.volume
            return uid_of(r.segment)
        elif a == "remove_rule":
            f = self.flow(uid_of(r.segment))
            f.removed[r.actor] = f.removed.get(r.actor, 0.0) + r.volume
            return uid_of(r.segment)
        return None

    def forwarding(self, uid):
        """Return (edges, injected, sinks) where edges maps switch -> list of
        (next hop, fraction) and sinks maps switch -> dropped fraction."""
        f = self.flows[uid]
        hops = self.hops(uid)
        v = f.volume
        ingress = (f.old or f.new)[0]
        if f.old and f.new:
            inject = 1.0
        elif f.new:
            inject = min(1.0, f.installed.get(ingress, 0.0) / v)
        else:
            inject = max(0.0, 1.0 - f.removed.get(ingress, 0.0) / v)
        egress = (f.new or f.old)[-1]
        edges, drops = {}, {}
        for x, h in hops.items():
            inst = f.installed.get(x, 0.0)
            old_alive = "old" in h and f.removed.get(x, 0.0) < v - EPS
            out = []
            if x in f.firsts and f.old and f.new:
                nf = min(1.0, inst / v) if "new" in h else 0.0
                of = (1.0 - nf) if old_alive else 0.0
                if nf > EPS:
                    out.append((h["new"], nf))
                if of > EPS:
                    out.append((h["old"], of))
                if 1.0 - nf - of > 1e-9:
                    drops[x] = 1.0 - nf - of
            elif "new" in h and inst > EPS:
                out.append((h["new"], 1.0))
            elif old_alive:
                out.append((h["old"], 1.0))
            elif x != egress:
                drops[x] = 1.0
            edges[x] = out
        return edges, inject, drops, ingress, egress

    def propagate(self, uid):
        """Return (link loads, violations list of (kind, detail), delivered path or None)."""
        f = self.flows[uid]
        edges, inject, drops, ingress, egress = self.forwarding(uid)
        loads, bad = {}, []
        if inject <= EPS:
            return loads, bad
        # reachable subgraph and cycle check
        seen, order, onstack = set(), [], set()
        stack = [(ingress, iter(edges.get(ingress, ())))]
        seen.add(ingress)
        onstack.add(ingress)
        cyc = False
        while stack:
            x, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                onstack.discard(x)
                order.append(x)
                continue
            y = nxt[0]
            if y in onstack:
                cyc = True
                bad.append((LOOP, f"flow {uid} loops at {y}"))
                continue
            if y not in seen:
                seen.add(y)
                onstack.add(y)
                stack.append((y, iter(edges.get(y, ()))))
        if cyc:
            return loads, bad
        amount = {ingress: inject * f.volume}
        for x in reversed(order):
            a = amount.get(x, 0.0)
            if a <= EPS:
                continue
            if x in drops:
                bad.append((BLACK_HOLE, f"flow {uid} dropped at {x}"))
            if x not in edges and x != egress:
                bad.append((BLACK_HOLE, f"flow {uid} has no rule at {x}"))
            for y, frac in edges.get(x, ()):
                loads[(x, y)] = loads.get((x, y), 0.0) + a * frac
                amount[y] = amount.get(y, 0.0) + a * frac
        return loads, bad

    def to_config(self) -> NetworkConfig:
        """Best-effort config: each flow on its dominant forwarding path."""
        flows = {}
        for uid in sorted(self.flows):
            f = self.flows[uid]
            if not (f.old or f.new):
                continue
            edges, inject, drops, ingress, egress = self.forwarding(uid)
            if inject <= 0.5:
                continue
            path, x = [ingress], ingress
            while x != egress:
                out = edges.get(x)
                if not out:
                    break
                x = max(out, key=lambda e: (e[1], e[0] == self.hops(uid)[path[-1]].get("new")))[0]
                if x in path:
                    break
                path.append(x)
            if path[-1] != egress:
                continue
            fid = uid.split("~")[0]
            flows[fid] = Flow(fid, f.volume, tuple(path))
        return NetworkConfig(dict(sorted(flows.items())))


def replay_state(records) -> ForwardingState:
    st = ForwardingState()
    for r in records:
        st.apply(r)
    return st


def check_properties(records, check_termination: bool = True) -> list[Violation]:
    """Replay the trace and report every violation. Snapshots are taken after
    each group of records emitted by one actor at one instant."""
    st = ForwardingState()
    out: list[Violation] = []
    i, n = 0, len(records)
    # setup prefix
    while i < n and records[i].action in ("capacity", "old_hop", "new_hop", "seg_first"):
        st.apply(records[i])
        i += 1
    contrib: dict = {}
    total: dict = {}

    def refresh(uid, t):
        old = contrib.get(uid, {})
        for l, v in old.items():
            total[l] -= v
        loads, bad = st.propagate(uid)
        contrib[uid] = loads
        for l, v in loads.items():
            total[l] = total.get(l, 0.0) + v
        for kind, detail in bad:
            out.append(Violation(kind, t, detail))
        return set(old) | set(loads)

    touched = set()
    for uid in sorted(st.flows):
        touched |= refresh(uid, 0.0)
    _congestion(st, total, touched, 0.0, out)
    while i < n:
        r = records[i]
        t, actor = r.time, r.actor
        changed = set()
        while i < n and records[i].time == t and records[i].actor == actor:
            u = st.apply(records[i])
            if u is not None:
                changed.add(u)
            i += 1
        touched = set()
        for uid in sorted(changed):
            touched |= refresh(uid, t)
        _congestion(st, total, touched, t, out)
    if check_termination:
        end = records[-1].time if records else 0.0
        for uid in sorted(st.flows):
            f = st.flows[uid]
            if not _at_target(st, uid):
                out.append(Violation(NON_TERMINATION, end, f"flow {uid} not on its target path"))
    return out


def _congestion(st, total, links, t, out):
    for l in sorted(links, key=str):
        cap = st.capacity.get(l)
        if cap is not None and total.get(l, 0.0) > cap + 1e-9:
            out.append(Violation(CONGESTION, t, f"link {l[0]}-{l[1]} carries {total[l]:.6g} > {cap:g}"))


def _at_target(st: ForwardingState, uid) -> bool:
    f = st.flows[uid]
    edges, inject, drops, ingress, egress = st.forwarding(uid)
    if not f.new:
        return inject <= EPS
    if inject < 1.0 - 1e-9:
        return False
    x, path = ingress, [ingress]
    while x != egress:
        out = [e for e in edges.get(x, ()) if e[1] > 1e-9]
        if len(out) != 1:
            return False
        x = out[0][0]
        path.append(x)
        if len(path) > len(f.new):
            return False
    if tuple(path) != tuple(f.new):
        return False
    # no stale old rules where they would disagree with the target
    hops = st.hops(uid)
    for x, h in hops.items():
        if "old" in h and h.get("old") != h.get("new"):
            if f.removed.get(x, 0.0) < f.volume - EPS:
                return False
    return True


def violations_to_csv(vs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_ms", "kind", "detail"])
    for v in vs:
        w.writerow([repr(round(v.time, 9)), v.kind, v.detail])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# brute-force feasibility oracle

@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    order: tuple = ()
    explored: int = 0

    def __bool__(self):
        return self.feasible


class TooLarge(ValueError):
    pass


def brute_force_feasible(graph, allow_split: bool = False, deps=None, max_ops: int = 8) -> Feasibility:
    """Search for an order of op moves that never overloads a link.

    Ops move whole, or in halves when allow_split. deps maps an op to the op
    that must finish first. Search depth is bounded by 4x the op count."""
    ops = sorted(graph.ops)
    if len(ops) > max_ops:
        raise TooLarge(f"{len(ops)} ops exceed the limit of {max_ops}")
    deps = deps or {}
    steps = 2 if allow_split else 1
    idx = {o: i for i, o in enumerate(ops)}
    links = sorted({l for o in ops for l in graph.ops[o].requires} | {l for o in ops for l in graph.ops[o].frees})
    base = {l: graph.residual.get(l, 0.0) for l in links}
    depth_limit = 4 * len(ops) if ops else 0
    seen = set()
    explored = 0

    def residual(state):
        res = dict(base)
        for o, k in zip(ops, state):
            if k == 0:
                continue
            op = graph.ops[o]
            frac = k / steps
            for l, v in op.requires.items():
                res[l] -= v * frac
            for l, v in op.frees.items():
                res[l] += v * frac
        return res

    def dfs(state, path):
        nonlocal explored
        if all(k == steps for k in state):
            return path
        if state in seen or len(path) >= depth_limit:
            return None
        seen.add(state)
        explored += 1
        res = residual(state)
        for o in ops:
            i = idx[o]
            if state[i] == steps:
                continue
            d = deps.get(o)
            if d is not None and d in idx and state[idx[d]] != steps:
                continue
            op = graph.ops[o]
            for chunk in range(steps - state[i], 0, -1):
                part = chunk / steps
                if all(res[l] >= v * part - EPS for l, v in op.requires.items()):
                    nxt = list(state)
                    nxt[i] += chunk
                    got = dfs(tuple(nxt), path + ((o, part),))
                    if got is not None:
                        return got
        return None

    res = dfs(tuple([0] * len(ops)), ())
    return Feasibility(res is not None, res or (), explored)


# ---------------------------------------------------------------------------
# exhaustive interleavings of per-segment basic updates for one flow

def _segment_steps(seg):
    """Ordered atomic steps of one segment: installs from the far end back,
    the switch-over at the first switch, then removals along the old path."""
    steps = []
    new, old = seg.new_sub, seg.old_sub
    for x in reversed(new[1:-1]):
        steps.append(("install", x))
    steps.append(("switch", seg.first))
    for x in old[1:-1]:
        steps.append(("remove", x))
    return steps


def explore_segmented_update(update, segments, hold=True, limit=200_000):
    """Walk every interleaving (respecting dep) and return the list of
    (kind, state) violations found. Single flow, unit volume."""
    from .segmentation import Segment  # noqa: F401
    active = [s for s in segments if not s.noop]
    steps = [_segment_steps(s) for s in active]
    by_id = {s.id: k for k, s in enumerate(active)}
    new_owner = {}
    for k, s in enumerate(active):
        for x in s.new_sub[:-1]:
            new_owner[x] = k
    old_path, new_path = tuple(update.old_path), tuple(update.new_path)
    egress = new_path[-1]
    old_next = dict(zip(old_path, old_path[1:]))
    new_next = dict(zip(new_path, new_path[1:]))

    def done_switch(state, k):
        return state[k] > steps[k].index(("switch", active[k].first))

    def installed_at(state, x):
        k = new_owner.get(x)
        if k is None:
            return False
        s = active[k]
        if x == s.first:
            return done_switch(state, k)
        return state[k] > steps[k].index(("install", x))

    def removed_at(state, x):
        for k, s in enumerate(active):
            if x in s.old_sub[1:-1]:
                return state[k] > steps[k].index(("remove", x))
            if x == s.first and s.old_sub:
                return done_switch(state, k)
        return False

    def enabled(state, k):
        if state[k] >= len(steps[k]):
            return False
        s = active[k]
        if s.kind == IN_LOOP and s.dep in by_id and not done_switch(state, by_id[s.dep]):
            return False
        kind, x = steps[k][state[k]]
        if kind == "remove" and hold and x in new_next and not installed_at(state, x):
            return False
        return True

    def walk(state):
        x, seen = old_path[0], set()
        while x != egress:
            if x in seen:
                return LOOP
            seen.add(x)
            if installed_at(state, x) and x in new_next:
                x = new_next[x]
            elif x in old_next and not removed_at(state, x):
                x = old_next[x]
            else:
                return BLACK_HOLE
        return None

    start = tuple(0 for _ in active)
    seen = {start}
    todo = [start]
    bad = []
    while todo:
        st = todo.pop()
        v = walk(st)
        if v:
            bad.append((v, st))
        for k in range(len(active)):
            if enabled(st, k):
                nxt = st[:k] + (st[k] + 1,) + st[k + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
                    if len(seen) > limit:
                        raise TooLarge("interleaving space too large")
    final = tuple(len(s) for s in steps)
    if final not in seen:
        bad.append((NON_TERMINATION, final))
    return bad
