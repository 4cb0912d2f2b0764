"""Split a flow update into segments that can be updated independently."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .netmodel import FlowUpdate, path_links

IN_LOOP = "InLoop"
NOT_IN_LOOP = "NotInLoop"


@dataclass(frozen=True)
class Segment:
    id: str
    uid: str
    volume: float
    old_sub: tuple
    new_sub: tuple
    kind: str = NOT_IN_LOOP
    dep: str | None = None

    @property
    def first(self):
        return (self.old_sub or self.new_sub)[0]

    @property
    def noop(self) -> bool:
        return self.old_sub == self.new_sub

    @property
    def old_links(self):
        return path_links(self.old_sub)

    @property
    def new_links(self):
        return path_links(self.new_sub)


def segment_id(uid: str, ordinal: int) -> str:
    return f"{uid}#{ordinal}"


def uid_of(seg_id: str) -> str:
    return seg_id.rsplit("#", 1)[0]


def common_switches(old, new) -> list:
    """Switches on both paths, in old-path order."""
    s = set(new)
    return [x for x in old if x in s]


def reversed_pairs(old, new) -> list[tuple]:
    """Common pairs (u, w) with u before w on old but w before u on new."""
    po = {x: i for i, x in enumerate(old)}
    pn = {x: i for i, x in enumerate(new)}
    com = common_switches(old, new)
    out = []
    for i, u in enumerate(com):
        for w in com[i + 1:]:
            if pn[w] < pn[u]:
                out.append((u, w))
    out.sort(key=lambda p: (po[p[0]], po[p[1]]))
    return out


def select_minimal_pairs(pairs, old) -> list[tuple] | None:
    """Fewest pairs whose old-path spans are pairwise disjoint and cover every
    switch that appears in any pair. Ties go to the lexicographically smallest
    sequence of first-element positions. Returns None if no cover exists."""
    if not pairs:
        return []
    pos = {x: i for i, x in enumerate(old)}
    spans = sorted({(pos[u], pos[w]) for u, w in pairs})
    targets = sorted({pos[x] for p in pairs for x in p})

    @lru_cache(maxsize=None)
    def best(p):
        # cheapest cover of targets >= p using spans starting at or after p
        rest = [t for t in targets if t >= p]
        if not rest:
            return (0, (), ())
        t = rest[0]
        cand = None
        for a, b in spans:
            if a < p or a > t or b < t:
                continue
            sub = best(b + 1)
            if sub is None:
                continue
            key = (sub[0] + 1, (a,) + sub[1], (b,) + sub[2])
            if cand is None or key < cand:
                cand = key
        return cand

    res = best(0)
    if res is None:
        return None
    return [(old[a], old[b]) for a, b in zip(res[1], res[2])]


def _sub(path, pos, start, markers):
    i = pos[start]
    j = i + 1
    while path[j] not in markers:
        j += 1
    return tuple(path[i:j + 1])


def whole_segment(update: FlowUpdate) -> list[Segment]:
    if tuple(update.old_path) == tuple(update.new_path):
        return []
    return [Segment(segment_id(update.uid, 0), update.uid, update.volume,
                    tuple(update.old_path), tuple(update.new_path))]


def segment_flow(update: FlowUpdate) -> list[Segment]:
    """Segments ordered by old-path position of their first switch.

    Segments whose old and new subpaths coincide are kept (they are no-ops)
    so that the subpaths still partition both paths."""
    old, new = tuple(update.old_path), tuple(update.new_path)
    if old == new:
        return []
    if not old or not new or old[0] != new[0] or old[-1] != new[-1]:
        return whole_segment(update)
    pr = select_minimal_pairs(reversed_pairs(old, new), old)
    if pr is None:
        return whole_segment(update)
    po = {x: i for i, x in enumerate(old)}
    pn = {x: i for i, x in enumerate(new)}
    inside = set()
    for u, w in pr:
        inside.update(old[po[u]:po[w] + 1])
    firsts = {u for u, _ in pr}
    seconds = {w for _, w in pr}
    markers = {x for x in common_switches(old, new) if x not in inside} | firsts | seconds
    starts = [x for x in old if x in markers and x != old[-1]]
    segs = []
    index = {}
    for k, s in enumerate(starts):
        sid = segment_id(update.uid, k)
        index[s] = sid
        segs.append(Segment(sid, update.uid, update.volume,
                            _sub(old, po, s, markers), _sub(new, pn, s, markers),
                            IN_LOOP if s in seconds else NOT_IN_LOOP))
    out = []
    for seg in segs:
        if seg.kind == IN_LOOP:
            dep = index.get(seg.new_sub[-1])
            dseg = next((x for x in segs if x.id == dep), None)
            if dseg is None or dseg.kind == IN_LOOP:
                return whole_segment(update)
            seg = Segment(seg.id, seg.uid, seg.volume, seg.old_sub, seg.new_sub, IN_LOOP, dep)
        out.append(seg)
    return out


def middlebox_guard(update: FlowUpdate, middlebox_flows) -> bool:
    """False if the flow traverses a middlebox and segmentation would make
    packets cross some switch twice."""
    if update.flow_id not in middlebox_flows:
        return True
    return not any(s.kind == IN_LOOP for s in segment_flow(update))


def plan_segments(update: FlowUpdate, segmentation=True, middlebox_flows=()) -> list[Segment]:
    if not segmentation or not middlebox_guard(update, middlebox_flows):
        return whole_segment(update)
    return segment_flow(update)
