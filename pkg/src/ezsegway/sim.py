"""Deterministic discrete-event kernel and trace records."""
from __future__ import annotations

import csv
import heapq
import io
from typing import NamedTuple

import networkx as nx

TRACE_HEADER = ["time_ms", "actor", "action", "segment", "link_src", "link_dst", "volume"]
CONTROLLER = "ctrl"


class TraceRecord(NamedTuple):
    time: float
    actor: object  # switch id or "ctrl"
    action: str
    segment: str = ""
    src: object = ""
    dst: object = ""
    volume: float = 0.0


class Event:
    __slots__ = ("time", "prio", "seq", "fn", "args", "cancelled")

    def __init__(self, time, prio, seq, fn, args):
        self.time, self.prio, self.seq, self.fn, self.args = time, prio, seq, fn, args
        self.cancelled = False

    def __lt__(self, other):
        return (self.time, self.prio, self.seq) < (other.time, other.prio, other.seq)

    def cancel(self):
        self.cancelled = True


class Simulator:
    """Event queue ordered by (time, priority, insertion seq). Timers use a
    lower priority so a message arriving at the same instant is seen first."""

    def __init__(self):
        self.now = 0.0
        self._q: list[Event] = []
        self._seq = 0
        self.trace: list[TraceRecord] = []
        self.processed = 0
        self.halted = False

    def at(self, time, fn, *args, prio=0) -> Event:
        if time < self.now:
            time = self.now
        ev = Event(time, prio, self._seq, fn, args)
        self._seq += 1
        heapq.heappush(self._q, ev)
        return ev

    def after(self, delay, fn, *args, prio=0) -> Event:
        return self.at(self.now + delay, fn, *args, prio=prio)

    def record(self, actor, action, segment="", src="", dst="", volume=0.0):
        self.trace.append(TraceRecord(self.now, actor, action, segment, src, dst, float(volume)))

    def halt(self):
        self.halted = True

    def pending(self) -> int:
        return sum(1 for e in self._q if not e.cancelled)

    def run(self, until=None) -> bool:
        """Process events. Returns True if the queue drained (quiescence)."""
        while self._q and not self.halted:
            ev = self._q[0]
            if until is not None and ev.time > until:
                return False
            heapq.heappop(self._q)
            if ev.cancelled:
                continue
            self.now = ev.time
            self.processed += 1
            ev.fn(*ev.args)
        return not self.halted


class Latencies:
    """Shortest-path propagation delay between any two switches."""

    def __init__(self, topology):
        g = topology.to_networkx()
        self._d = dict(nx.all_pairs_dijkstra_path_length(g, weight="latency"))

    def __call__(self, a, b) -> float:
        if a == b:
            return 0.0
        return self._d[a][b]

    def eccentricity(self, a) -> float:
        return max(self._d[a].values())


def controller_site(topology, lat: Latencies | None = None):
    """Switch minimising its worst-case latency to every other switch."""
    lat = lat or Latencies(topology)
    return min(topology.switches, key=lambda s: (lat.eccentricity(s), s))


def _fmt(x):
    if isinstance(x, float):
        return repr(round(x, 9))
    return str(x)


def trace_to_csv(records, fh=None) -> str:
    buf = fh or io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for r in records:
        w.writerow([_fmt(float(r.time)), r.actor, r.action, r.segment, r.src, r.dst, _fmt(float(r.volume))])
    return buf.getvalue() if fh is None else ""


class TraceParseError(ValueError):
    pass


def _node(x: str):
    if x == "":
        return ""
    try:
        return int(x)
    except ValueError:
        return x


def trace_from_csv(text: str) -> list[TraceRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != TRACE_HEADER:
        raise TraceParseError("missing or wrong trace header")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(TRACE_HEADER):
            raise TraceParseError(f"line {n}: expected {len(TRACE_HEADER)} fields")
        try:
            t, vol = float(row[0]), float(row[6])
        except ValueError:
            raise TraceParseError(f"line {n}: bad number") from None
        out.append(TraceRecord(t, _node(row[1]), row[2], row[3], _node(row[4]), _node(row[5]), vol))
    return out
