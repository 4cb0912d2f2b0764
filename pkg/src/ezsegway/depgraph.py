"""Segment dependency graph, critical operations and priority assignment."""
from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx

from .netmodel import EPS, Topology, NetworkConfig, residuals

HIGH, MEDIUM, LOW = 2, 1, 0
PRIORITY_NAMES = {HIGH: "High", MEDIUM: "Medium", LOW: "Low"}

SPLITTABLE = "Splittable"
UNSPLITTABLE = "Unsplittable"


@dataclass
class OpNode:
    id: str
    volume: float
    requires: dict = field(default_factory=dict)  # link -> volume
    frees: dict = field(default_factory=dict)


@dataclass
class DependencyGraph:
    ops: dict  # id -> OpNode
    residual: dict  # link -> residual capacity

    def links(self):
        ks = set(self.residual)
        for op in self.ops.values():
            ks.update(op.requires)
            ks.update(op.frees)
        return sorted(ks)

    def executable(self, op_id) -> bool:
        op = self.ops[op_id]
        return all(self.residual.get(l, 0.0) >= v - EPS for l, v in op.requires.items())

    def to_networkx(self) -> nx.DiGraph:
        """Bipartite digraph: op -> link for frees, link -> op for requires."""
        g = nx.DiGraph()
        for oid in sorted(self.ops):
            op = self.ops[oid]
            g.add_node(("op", oid))
            for l in op.frees:
                g.add_edge(("op", oid), ("link", l))
            for l in op.requires:
                g.add_edge(("link", l), ("op", oid))
        return g

    def dump(self) -> str:
        lines = []
        for oid in sorted(self.ops):
            op = self.ops[oid]
            for l, v in sorted(op.frees.items()):
                lines.append(f"{oid} -> {l[0]}-{l[1]} {v:g}")
            for l, v in sorted(op.requires.items()):
                lines.append(f"{l[0]}-{l[1]} -> {oid} {v:g}")
        for l in self.links():
            lines.append(f"residual {l[0]}-{l[1]} {self.residual.get(l, 0.0):g}")
        return "\n".join(lines) + "\n"


def segment_op(seg) -> OpNode:
    new_l, old_l = set(seg.new_links), set(seg.old_links)
    return OpNode(seg.id, seg.volume,
                  {l: seg.volume for l in seg.new_links if l not in old_l},
                  {l: seg.volume for l in seg.old_links if l not in new_l})


def build_dependency_graph(segments, topology: Topology, current: NetworkConfig) -> DependencyGraph:
    ops = {}
    for s in segments:
        if s.noop:
            continue
        ops[s.id] = segment_op(s)
    return DependencyGraph(dict(sorted(ops.items())), residuals(topology, current))


def find_critical_ops(g: DependencyGraph) -> set:
    """Ops whose free on some link is exactly what lets another op onto it."""
    freed_into: dict = {}
    for op in g.ops.values():
        for l, v in op.frees.items():
            freed_into[l] = freed_into.get(l, 0.0) + v
    needers: dict = {}
    for op in g.ops.values():
        for l, v in op.requires.items():
            needers.setdefault(l, []).append(op)
    crit = set()
    for op in g.ops.values():
        for l, fv in op.frees.items():
            others = g.residual.get(l, 0.0) + freed_into[l] - fv
            for other in needers.get(l, ()):
                if other.id == op.id:
                    continue
                req = other.requires[l]
                if others < req - EPS and req <= others + fv + EPS:
                    crit.add(op.id)
                    break
            if op.id in crit:
                break
    return crit


def _cycle_members_through(adj, c, allowed, budget, want=None):
    """Ops lying on some simple cycle through c, restricted to `allowed` nodes.

    Johnson-style circuit search from c with a step budget. Returns
    (members, exhausted)."""
    members = set()
    blocked = set()
    bmap: dict = {}
    stack = [c]
    steps = 0
    exhausted = False

    def unblock(u):
        todo = [u]
        while todo:
            x = todo.pop()
            if x in blocked:
                blocked.discard(x)
                todo.extend(bmap.pop(x, ()))

    # iterative version of Johnson's CIRCUIT(c)
    blocked.add(c)
    frames = [(c, iter(adj[c]), False)]
    while frames:
        v, it, found = frames[-1]
        advanced = False
        for w in it:
            if w not in allowed:
                continue
            steps += 1
            if steps > budget:
                exhausted = True
                return members, exhausted
            if w == c:
                members.update(stack)
                found = True
                if want is not None and want <= members:
                    return members, exhausted
            elif w not in blocked:
                frames[-1] = (v, it, found)
                stack.append(w)
                blocked.add(w)
                frames.append((w, iter(adj[w]), False))
                advanced = True
                break
        if advanced:
            continue
        frames[-1] = (v, it, found)
        frames.pop()
        stack.pop()
        if found:
            unblock(v)
        else:
            for w in adj[v]:
                if w in allowed:
                    bmap.setdefault(w, set()).add(v)
        if frames:
            pv, pit, pfound = frames[-1]
            frames[-1] = (pv, pit, pfound or found)
    return members, exhausted


def assign_priorities(g: DependencyGraph, budget: int = 200_000) -> dict:
    """Map op id -> HIGH / MEDIUM / LOW.

    Low: on no cycle. Medium: on cycles, none of which hold a critical op.
    High: on a simple cycle together with a critical op. If the cycle search
    runs out of budget, remaining ops of the component are treated as High."""
    dg = g.to_networkx()
    crit = find_critical_ops(g)
    prio = {oid: LOW for oid in g.ops}
    adj = {n: sorted(dg.successors(n)) for n in dg.nodes}
    for comp in sorted(nx.strongly_connected_components(dg), key=min):
        if len(comp) == 1:
            n = next(iter(comp))
            if not dg.has_edge(n, n):
                continue
        ops = sorted(n[1] for n in comp if n[0] == "op")
        ccrit = [o for o in ops if o in crit]
        for o in ops:
            prio[o] = MEDIUM
        if not ccrit:
            continue
        high = set()
        for c in ccrit:
            if len(high) == len(ops):
                break
            want = {("op", o) for o in ops} - {("op", o) for o in high}
            members, exhausted = _cycle_members_through(adj, ("op", c), comp, budget, want)
            high.update(n[1] for n in members if n[0] == "op")
            if exhausted:
                high.update(ops)
                break
        for o in high:
            prio[o] = HIGH
    return prio


def classify_deadlock(g: DependencyGraph, executable_ops=None):
    """None if some op can run; Splittable if some blocked op could move a
    fraction; otherwise Unsplittable."""
    if executable_ops:
        return None
    if any(g.executable(o) for o in g.ops):
        return None
    for op in g.ops.values():
        if op.requires and all(g.residual.get(l, 0.0) > EPS for l in op.requires):
            return SPLITTABLE
    return UNSPLITTABLE
