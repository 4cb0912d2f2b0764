"""Update planning and the two execution modes.

ezsegway: the controller ships per-switch segment info once; switches then
coordinate among themselves with GoodToMove / Removing messages.

centralized: the same per-switch logic runs inside the controller. Every rule
operation becomes a command to the switch plus an acknowledgement, and any
step that depends on that operation waits for the ack.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .agent import (GTM, INSTALL, REMOVING, AgentConfig, Message, SegmentInfo,
                    SwitchAgent)
from .depgraph import LOW, assign_priorities, build_dependency_graph
from .netmodel import (EPS, NetworkConfig, Topology, diff_update, residuals,
                       validate_config, ValidationError)
from .segmentation import IN_LOOP, plan_segments, uid_of
from .sim import CONTROLLER, Latencies, Simulator, TraceRecord, controller_site


class PlanningError(ValueError):
    pass


@dataclass
class UpdatePlan:
    topology: Topology
    current: NetworkConfig
    target: NetworkConfig
    updates: list
    segments: list  # all segments, no-ops included
    priorities: dict
    graph: object
    infos: dict  # switch -> tuple[SegmentInfo]
    version: int = 1

    @property
    def active(self):
        return [s for s in self.segments if not s.noop]

    def segment(self, sid):
        for s in self.segments:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def dump(self) -> str:
        names = {2: "High", 1: "Medium", 0: "Low"}
        lines = [f"version {self.version}"]
        for s in self.segments:
            tag = "noop" if s.noop else names[self.priorities.get(s.id, LOW)]
            dep = f" dep={s.dep}" if s.dep else ""
            lines.append(f"{s.id} {s.kind} {tag} vol={s.volume:g} "
                         f"old={'-'.join(map(str, s.old_sub))} new={'-'.join(map(str, s.new_sub))}{dep}")
        return "\n".join(lines) + "\n"


def _interior(p):
    return set(p[1:-1])


def _build_infos(segments, updates, priorities):
    by_uid = {u.uid: u for u in updates}
    active = [s for s in segments if not s.noop]
    info: dict = {}

    def get(x, s):
        key = (x, s.id)
        if key not in info:
            info[key] = dict(seg=s.id, uid=s.uid, volume=s.volume,
                             priority=priorities.get(s.id, LOW), kind=s.kind)
        return info[key]

    # switch on the flow's new path -> segment owning its new out-link
    owner = {}
    for s in active:
        for x in s.new_sub[:-1]:
            owner[(s.uid, x)] = s.id
    for s in [s for s in segments if s.noop]:
        for x in s.new_sub[:-1]:
            owner.setdefault((s.uid, x), None)

    for s in active:
        old, new = s.old_sub, s.new_sub
        u = by_uid[s.uid]
        split_ok = not (_interior(new) & set(u.old_path)) and not (_interior(old) & set(u.new_path))
        d = get(s.first, s)
        d["first"] = True
        d["splittable"] = split_ok
        if new:
            d["new_next"] = new[1]
        if old:
            d["old_next"] = old[1]
            d["fwd_removing"] = len(old) > 2
        for i in range(1, len(new) - 1):
            d = get(new[i], s)
            d["new_prev"], d["new_next"] = new[i - 1], new[i + 1]
            d["splittable"] = split_ok
        if len(new) >= 2 and s.kind != IN_LOOP:
            get(new[-2], s)["self_ready"] = True
        for j in range(1, len(old) - 1):
            d = get(old[j], s)
            d["old_next"] = old[j + 1]
            d["fwd_removing"] = j + 1 < len(old) - 1
            d["hold_for"] = owner.get((s.uid, old[j]))
        if s.kind == IN_LOOP:
            d = get(new[-1], next(x for x in active if x.id == s.dep))
            d["waiters"] = d.get("waiters", ()) + ((s.id, new[-2], s.volume),)
    out: dict = {}
    for (x, sid), d in sorted(info.items(), key=lambda kv: (kv[0][0], kv[0][1])):
        d.setdefault("splittable", True)
        out.setdefault(x, []).append(SegmentInfo(**d))
    return {x: tuple(v) for x, v in out.items()}


def plan_update(topology: Topology, current: NetworkConfig, target: NetworkConfig,
                segmentation: bool = True, middlebox_flows=(), version: int = 1) -> UpdatePlan:
    try:
        validate_config(topology, current)
    except ValidationError as e:
        raise PlanningError(f"current config invalid: {e}") from None
    try:
        validate_config(topology, target)
    except ValidationError as e:
        raise PlanningError(f"target config invalid: {e}") from None
    updates = diff_update(current, target)
    segments = []
    for u in updates:
        segments.extend(plan_segments(u, segmentation, middlebox_flows))
    graph = build_dependency_graph(segments, topology, current)
    prio = assign_priorities(graph)
    infos = _build_infos(segments, updates, prio)
    return UpdatePlan(topology, current, target, updates, segments, prio, graph, infos, version)


@dataclass
class RunOptions:
    split: bool = True
    timeout_ms: float = 150.0
    compute_delay_ms: float = 0.0
    controller: object = None
    max_time_ms: float = 1e7
    halt_at_ms: float | None = None


@dataclass
class RunReport:
    mode: str
    completed: bool
    deadlock: str | None
    completion_ms: float
    last_op_ms: float
    messages: int
    install_msgs: int
    gtm_msgs: int
    rm_msgs: int
    command_msgs: int
    ack_msgs: int
    splits: int
    splittable_deadlocks: int
    unsplittable_deadlocks: int
    extra_rules: int
    extra_rules_switch_max: int
    extra_msgs: int
    segment_done: dict
    flow_done: dict
    trace: list = field(repr=False, default_factory=list)
    halted: bool = False


class _Host:
    """Shared plumbing: timers, per-switch serial processing, accounting."""

    def __init__(self, plan: UpdatePlan, opts: RunOptions):
        self.plan, self.opts = plan, opts
        self.sim = Simulator()
        self.lat = Latencies(plan.topology)
        self.ctrl = opts.controller if opts.controller is not None else controller_site(plan.topology, self.lat)
        cfg = AgentConfig(split=opts.split, timeout_ms=opts.timeout_ms)
        res = residuals(plan.topology, plan.current)
        self.agents = {}
        for x in plan.topology.switches:
            mine = {k: v for k, v in res.items() if k[0] == x}
            self.agents[x] = SwitchAgent(x, mine, self, cfg)
        self.timers: dict = {}
        self.busy: dict = {}
        self.counts = {INSTALL: 0, GTM: 0, REMOVING: 0, "cmd": 0, "ack": 0}
        self.seg_msgs: dict = {}
        self.last_fifo: dict = {}

    # channel delivery with FIFO per ordered pair
    def _deliver_at(self, src, dst, t, fn, *args):
        key = (src, dst)
        t = max(t, self.last_fifo.get(key, 0.0))
        self.last_fifo[key] = t
        self.sim.at(t, fn, *args)

    def _process(self, x, cost, fn, *args):
        """Serialise work at switch x, charging `cost` ms per item."""
        start = max(self.sim.now, self.busy.get(x, 0.0))
        self.busy[x] = start + cost
        if cost <= 0 and start <= self.sim.now:
            self._run(fn, args)
        else:
            self.sim.at(start + cost, self._run, fn, args)

    def _run(self, fn, args):
        self.begin()
        fn(*args)
        self.flush()

    def begin(self):
        pass

    def flush(self):
        pass

    # agent host API
    def arm(self, x, seg, reset=False):
        key = (x, seg)
        cur = self.timers.get(key)
        if cur == "expired" and not reset:
            return
        if cur is not None and cur != "expired":
            if not reset:
                return
            cur.cancel()
        self.timers[key] = self.sim.after(self.opts.timeout_ms, self._fire, x, seg, prio=1)

    def cancel(self, x, seg):
        cur = self.timers.pop((x, seg), None)
        if cur not in (None, "expired"):
            cur.cancel()

    def _fire(self, x, seg):
        self.timers[(x, seg)] = "expired"
        self._process(x, 0.0, self.agents[x].handle_timeout, seg)

    def note(self, x, action, seg, link, volume):
        self.sim.record(x, action, seg, link[0], link[1], volume)

    def _count(self, msg):
        self.counts[msg.kind] += 1
        if msg.kind in (GTM, REMOVING):
            self.seg_msgs[msg.seg] = self.seg_msgs.get(msg.seg, 0) + 1

    # setup
    def setup_trace(self):
        sim, plan = self.sim, self.plan
        for (u, v), l in sorted(plan.topology.links.items()):
            sim.record(CONTROLLER, "capacity", "", u, v, l.capacity)
        olds, news = {}, {}
        for f in plan.current:
            olds[f.id] = f
        for f in plan.target:
            news[f.id] = f
        tagged = {u.flow_id for u in plan.updates if u.tag}
        for fid, f in olds.items():
            uid = fid + "~r" if fid in tagged else fid
            for a, b in zip(f.path, f.path[1:]):
                sim.record(CONTROLLER, "old_hop", uid, a, b, f.volume)
        for fid, f in news.items():
            uid = fid + "~a" if fid in tagged else fid
            for a, b in zip(f.path, f.path[1:]):
                sim.record(CONTROLLER, "new_hop", uid, a, b, f.volume)
        for s in plan.active:
            sim.record(s.first, "seg_first", s.id, "", "", s.volume)

    def report(self, mode) -> RunReport:
        plan, sim = self.plan, self.sim
        recs = sim.trace
        done = segment_completion(plan, recs)
        active = plan.active
        completed = len(done) == len(active) and not sim.halted
        ops = [r for r in recs if r.action in ("install_rule", "remove_rule")]
        last_op = max((r.time for r in ops), default=0.0)
        finish = max((r.time + self.lat(r.actor, self.ctrl) for r in ops), default=0.0)
        deadlock = None
        if not completed and not sim.halted:
            kinds = {a.stuck_kind() for a in self.agents.values()} - {None}
            deadlock = "Splittable" if "Splittable" in kinds else "Unsplittable"
        splits = sum(a.splits for a in self.agents.values())
        sd = splits + (1 if deadlock == "Splittable" else 0)
        ud = 1 if deadlock == "Unsplittable" else 0
        # extra rules: segments whose first switch moved traffic in more than one step
        firsts = {}
        for s in active:
            st = self.agents[s.first].state.get(s.id)
            if st is not None and st.installs > 1:
                firsts[s.first] = firsts.get(s.first, 0) + 1
        extra_rules = sum(firsts.values())
        extra_msgs = 0
        for s in active:
            base = max(0, len(s.new_sub) - 2) + max(0, len(s.old_sub) - 2) + (1 if s.kind == IN_LOOP else 0)
            extra_msgs += max(0, self.seg_msgs.get(s.id, 0) - base)
        flow_done = {}
        for sid, t in done.items():
            fid = uid_of(sid).split("~")[0]
            flow_done[fid] = max(flow_done.get(fid, 0.0), t)
        c = self.counts
        if mode == "centralized":
            messages = c["cmd"] + c["ack"]
        else:
            messages = c[INSTALL] + c[GTM] + c[REMOVING]
        if completed:
            sim.record(CONTROLLER, "complete", "", "", "", 0.0)
            recs = sim.trace
        return RunReport(mode, completed, deadlock, finish if completed else math.nan, last_op,
                         messages, c[INSTALL], c[GTM], c[REMOVING], c["cmd"], c["ack"], splits, sd, ud,
                         extra_rules, max(firsts.values(), default=0), extra_msgs, done, flow_done,
                         list(recs), sim.halted)


def segment_completion(plan: UpdatePlan, records) -> dict:
    """Segment id -> time its last rule operation happened (completed ones only)."""
    need = {}
    for s in plan.active:
        req = {}
        if s.new_sub:
            req[(s.first, "install_rule")] = s.volume
        elif s.old_sub:
            req[(s.first, "remove_rule")] = s.volume
        for x in s.old_sub[1:-1]:
            req[(x, "remove_rule")] = s.volume
        need[s.id] = req
    acc: dict = {}
    done = {}
    for r in records:
        if r.action not in ("install_rule", "remove_rule"):
            continue
        req = need.get(r.segment)
        if req is None or r.segment in done:
            continue
        key = (r.actor, r.action)
        if key not in req:
            continue
        acc[(r.segment, key)] = acc.get((r.segment, key), 0.0) + r.volume
        if all(acc.get((r.segment, k), 0.0) >= v - EPS for k, v in req.items()):
            done[r.segment] = r.time
    return done


class EzHost(_Host):
    def send(self, msg: Message):
        self._count(msg)
        self.sim.record(msg.src, "send", f"{msg.kind}/{msg.seg}", msg.src, msg.dst, msg.volume)
        t = self.sim.now + self.lat(msg.src, msg.dst)
        self._deliver_at(msg.src, msg.dst, t, self._arrive, msg)

    def _arrive(self, msg):
        self.sim.record(msg.dst, "recv", f"{msg.kind}/{msg.seg}", msg.src, msg.dst, msg.volume)
        self._process(msg.dst, self.opts.compute_delay_ms, self.agents[msg.dst].handle, msg)

    def rule(self, x, action, seg, link, volume):
        self.sim.record(x, action, seg, link[0], link[1], volume)

    def start(self):
        for x in sorted(self.plan.infos):
            self.send(Message(INSTALL, "", 0.0, self.ctrl, x, self.plan.version, self.plan.infos[x]))


class CentralHost(_Host):
    """Agents live at the controller, which sees every switch's state at
    once. Each rule op becomes a command plus an ack. Installs on a segment's
    new interior carry no traffic yet, so they go out at once and in
    parallel. The move at the segment's first switch waits for their acks
        Steps that depend on the move (removals, loop segments waiting on it)
    wait for the move's own ack. Capacity freed by a removal is credited
    when its ack arrives."""

    def __init__(self, plan, opts):
        super().__init__(plan, opts)
        self.firsts = {s.id: s.first for s in plan.active}
        self.live = {u.uid: set(u.old_path) for u in plan.updates}
        self.installs: dict = {}  # seg -> interior install ids, downstream first
        self.deps: dict = {}  # (switch, seg) -> command ids its progress relies on
        self.cmds: dict = {}  # id -> [op, gate, acked]
        self.held: list = []  # command ids whose gate is still open
        self.waiting: list = []  # [msg, wait set, carried deps]
        self.unacked: dict = {}  # switch -> ids sent or queued but not acked

    def begin(self):
        self._ops = []
        self._out = []
        self._last = None

    def flush(self):
        ops, out = self._ops, self._out
        self._ops, self._out = [], []
        for m, seg in out:
            mine = [c for c in ops if self.cmds[c][0][2] == seg]
            moved = {c for c in mine if self.cmds[c][0][0] == self.firsts.get(seg)}
            d = frozenset(c for c in mine if c not in moved and self.cmds[c][0][1] == "install_rule")
            self.waiting.append([m, moved, d | self.deps.get((m.src, seg), frozenset())])
        self._pump()
        self._release_ready()

    def rule(self, x, action, seg, link, volume):
        cid = len(self.cmds)
        earlier = self.unacked.setdefault(x, [])
        if action == "install_rule" and x != self.firsts.get(seg):
            # a switch still carrying old traffic waits until everything
            # downstream on the new path is in place
            down = self.installs.setdefault(seg, [])
            gate = frozenset(down) if x in self.live.get(uid_of(seg), ()) else frozenset()
            down.append(cid)
        elif x == self.firsts.get(seg):
            gate = self.deps.get((x, seg), frozenset())
        else:
            uid = uid_of(seg)
            gate = self.deps.get((x, seg), frozenset()) | {
                c for c in earlier if self.cmds[c][0][1] == "install_rule" and uid_of(self.cmds[c][0][2]) == uid}
        self.cmds[cid] = [(x, action, seg, link, volume), frozenset(gate), False]
        if action == "remove_rule" and not self.agents[x].infos[seg].shared:
            # the freed capacity only counts once the switch confirms it
            self.agents[x].residual[link] -= volume
        earlier.append(cid)
        self.held.append(cid)
        self._ops.append(cid)
        self._last = seg

    def send(self, msg: Message):
        self._out.append((msg, self._last))

    def _pump(self):
        go = [c for c in self.held if all(self.cmds[g][2] for g in self.cmds[c][1])]
        if go:
            self.held = [c for c in self.held if c not in set(go)]
            for c in go:
                self._send_cmd(c)

    def _send_cmd(self, cid):
        op = self.cmds[cid][0]
        x = op[0]
        self.counts["cmd"] += 1
        self.sim.record(CONTROLLER, "send", f"cmd/{op[2]}", self.ctrl, x, op[4])
        self._deliver_at(self.ctrl, x, self.sim.now + self.lat(self.ctrl, x), self._command, cid)

    def _command(self, cid):
        x = self.cmds[cid][0][0]
        super()._process(x, self.opts.compute_delay_ms, self._apply, cid)

    def _apply(self, cid):
        x, action, seg, link, volume = self.cmds[cid][0]
        self.sim.record(x, action, seg, link[0], link[1], volume)
        self.counts["ack"] += 1
        self.sim.record(x, "send", f"ack/{seg}", x, self.ctrl, volume)
        self._deliver_at(x, self.ctrl, self.sim.now + self.lat(x, self.ctrl), self._ack, cid)

    def _ack(self, cid):
        self.cmds[cid][2] = True
        x, action, seg, link, volume = self.cmds[cid][0]
        self.unacked[x].remove(cid)
        if action == "remove_rule" and not self.agents[x].infos[seg].shared:
            self._run(self.agents[x].credit, (link, volume))
        for w in self.waiting:
            w[1].discard(cid)
        self._pump()
        self._release_ready()

    def _release_ready(self):
        ready = [w for w in self.waiting if not w[1]]
        if not ready:
            return
        self.waiting = [w for w in self.waiting if w[1]]
        for m, _, d in ready:
            self._count(m)
            self.sim.at(self.sim.now, self._local, m, d)

    def _local(self, msg, carried):
        key = (msg.dst, msg.seg)
        self.deps[key] = self.deps.get(key, frozenset()) | carried
        self._run(self.agents[msg.dst].handle, (msg,))

    def _process(self, x, cost, fn, *args):
        # controller-side agent work is free; switch work is charged in _command
        self._run(fn, args)

    def start(self):
        for x in sorted(self.plan.infos):
            m = Message(INSTALL, "", 0.0, self.ctrl, x, self.plan.version, self.plan.infos[x])
            self.sim.at(0.0, self._run, self.agents[x].handle, (m,))


def _execute(plan: UpdatePlan, opts: RunOptions, host_cls, mode) -> RunReport:
    host = host_cls(plan, opts)
    host.setup_trace()
    if opts.halt_at_ms is not None:
        # queued first so that a failure at t pre-empts work scheduled at t
        host.sim.at(opts.halt_at_ms, host.sim.halt)
    host.start()
    host.sim.run(until=opts.max_time_ms)
    return host.report(mode)


def run_decentralized(plan: UpdatePlan, opts: RunOptions | None = None) -> RunReport:
    return _execute(plan, opts or RunOptions(), EzHost, "ezsegway")


def run_centralized(plan: UpdatePlan, opts: RunOptions | None = None) -> RunReport:
    return _execute(plan, opts or RunOptions(), CentralHost, "centralized")


def run_mode(plan, mode, opts=None) -> RunReport:
    if mode == "ezsegway":
        return run_decentralized(plan, opts)
    if mode == "centralized":
        return run_centralized(plan, opts)
    raise ValueError(f"unknown mode {mode}")


def halt_and_query(plan: UpdatePlan, fail_at_ms: float, opts: RunOptions | None = None):
    """Run ezsegway until a simulated controller-visible failure at fail_at_ms,
    then return (report, snapshot config) reconstructed from switch state."""
    from .verifier import replay_state
    o = opts or RunOptions()
    o = RunOptions(o.split, o.timeout_ms, o.compute_delay_ms, o.controller, o.max_time_ms, fail_at_ms)
    rep = run_decentralized(plan, o)
    return rep, replay_state(rep.trace).to_config()
