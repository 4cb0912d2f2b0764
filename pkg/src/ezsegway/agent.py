"""Per-switch update logic: GoodToMove / Removing handling, capacity gating,
priority reservation, deadlock timeouts and splitting.

An agent never talks to the network directly. It calls into a host object
(`send`, `rule`, `arm`, `cancel`, `note`) so the same logic can run on the
switch itself or inside a centralized controller.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .netmodel import EPS

GTM = "gtm"
REMOVING = "rm"
INSTALL = "install"

SPLIT_QUANTUM = 1e-6


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class Message:
    kind: str
    seg: str
    volume: float
    src: object
    dst: object
    version: int = 0
    infos: tuple = ()


@dataclass
class SegmentInfo:
    """What one switch needs to know about one segment."""
    seg: str
    uid: str
    volume: float
    priority: int = 0
    kind: str = "NotInLoop"
    first: bool = False
    new_prev: object = None
    new_next: object = None
    old_next: object = None
    fwd_removing: bool = False  # forward Removing to old_next
    self_ready: bool = False  # downstream end needs no signal
    waiters: tuple = ()  # (inloop seg, its new-path predecessor here, volume)
    hold_for: str | None = None
    splittable: bool = True

    @property
    def shared(self) -> bool:
        return self.old_next is not None and self.old_next == self.new_next


@dataclass
class SegState:
    ready: float = 0.0
    reserved: float = 0.0
    freed: float = 0.0
    installs: int = 0
    held: float = 0.0


@dataclass
class AgentConfig:
    split: bool = True
    timeout_ms: float = 150.0


class SwitchAgent:
    def __init__(self, switch, residual: dict, host, cfg: AgentConfig | None = None):
        self.id = switch
        self.residual = dict(residual)  # out-link -> free capacity
        self.host = host
        self.cfg = cfg or AgentConfig()
        self.infos: dict[str, SegmentInfo] = {}
        self.state: dict[str, SegState] = {}
        self.version = None
        self.splits = 0
        self._dirty = False

    # -- helpers -----------------------------------------------------------

    def pending(self, seg) -> float:
        info, st = self.infos[seg], self.state[seg]
        if info.new_next is None:
            return 0.0
        return st.ready - st.reserved

    def out_residual(self, info) -> float:
        if info.shared:
            return float("inf")
        return self.residual.get((self.id, info.new_next), 0.0)

    def blocked(self):
        """Segments with volume ready here that have not been installed yet."""
        return [s for s in sorted(self.infos) if self.pending(s) > EPS]

    def _higher_need(self, info) -> float:
        link_next = info.new_next
        need = 0.0
        for s, o in self.infos.items():
            if s == info.seg or o.new_next != link_next or o.priority <= info.priority:
                continue
            if o.shared:
                continue
            need += max(0.0, o.volume - self.state[s].reserved)
        return need

    def can_execute(self, info, amount) -> bool:
        res = self.out_residual(info)
        if res < amount - EPS:
            return False
        high = self._higher_need(info)
        return high <= EPS or res - amount >= high - EPS

    def _change(self, link, delta):
        if link[1] is None:
            return
        self.residual[link] = self.residual.get(link, 0.0) + delta
        self._dirty = True

    # -- actions -----------------------------------------------------------

    def _execute(self, info, amount):
        st = self.state[info.seg]
        link = (self.id, info.new_next)
        if not info.shared:
            self._change(link, -amount)
        st.reserved += amount
        st.installs += 1
        self.host.rule(self.id, "install_rule", info.seg, link, amount)
        if info.first:
            if info.old_next is not None:
                self._free(info, amount)
            if st.reserved >= info.volume - EPS:
                for w, prev, vol in info.waiters:
                    self.host.send(Message(GTM, w, vol, self.id, prev))
        else:
            self.host.send(Message(GTM, info.seg, amount, self.id, info.new_prev))
        self._release_holds()

    def _free(self, info, amount):
        st = self.state[info.seg]
        amount = min(amount, info.volume - st.freed)
        if amount <= EPS:
            return
        link = (self.id, info.old_next)
        if not info.shared:
            self._change(link, amount)
        st.freed += amount
        self.host.rule(self.id, "remove_rule", info.seg, link, amount)
        if info.fwd_removing:
            self.host.send(Message(REMOVING, info.seg, amount, self.id, info.old_next))

    def _installed(self, seg) -> bool:
        st = self.state.get(seg)
        return st is not None and st.reserved > EPS

    def _release_holds(self):
        for s in sorted(self.state):
            st = self.state[s]
            if st.held > EPS and self._installed(self.infos[s].hold_for):
                amt, st.held = st.held, 0.0
                self._free(self.infos[s], amt)

    def _drain(self):
        """Run every segment that fits, highest priority first, to a fixpoint."""
        while True:
            order = sorted(self.blocked(), key=lambda s: (-self.infos[s].priority, s))
            for s in order:
                info = self.infos[s]
                amt = self.pending(s)
                if self.can_execute(info, amt):
                    self._execute(info, amt)
                    break
            else:
                break

    def _timers(self):
        blocked = set(self.blocked())
        for s in sorted(self.infos):
            if s in blocked:
                self.host.arm(self.id, s, reset=self._dirty)
            else:
                self.host.cancel(self.id, s)
        self._dirty = False

    def _finish(self):
        self._drain()
        self._timers()

    # -- message handlers --------------------------------------------------

    def handle_install(self, msg: Message):
        if self.version == msg.version:
            return  # duplicate
        self.version = msg.version
        for info in msg.infos:
            self.infos[info.seg] = info
            self.state[info.seg] = SegState()
        for info in msg.infos:
            st = self.state[info.seg]
            if info.self_ready:
                st.ready = info.volume
            if info.first and info.new_next is None and info.old_next is not None:
                # pure removal: stop the flow at its ingress
                self._free(info, info.volume)
                st.reserved = info.volume
        self._finish()

    def handle_good_to_move(self, msg: Message):
        if msg.seg not in self.infos:
            raise ProtocolError(f"switch {self.id}: GoodToMove for unknown segment {msg.seg}")
        self.state[msg.seg].ready += msg.volume
        self._finish()

    def handle_removing(self, msg: Message):
        info = self.infos.get(msg.seg)
        if info is None or info.old_next is None:
            return  # nothing installed for it here
        st = self.state[msg.seg]
        if info.hold_for is not None and not self._installed(info.hold_for):
            st.held += msg.volume
        else:
            self._free(info, msg.volume)
        self._finish()

    def credit(self, link, amount):
        """Capacity on an out-link confirmed free by an outside party."""
        self._change(link, amount)
        self._finish()

    def handle(self, msg: Message):
        if msg.kind == INSTALL:
            self.handle_install(msg)
        elif msg.kind == GTM:
            self.handle_good_to_move(msg)
        elif msg.kind == REMOVING:
            self.handle_removing(msg)
        else:
            raise ProtocolError(f"unknown message kind {msg.kind}")

    def needed(self, info) -> float:
        """Smallest extra capacity this segment's free would hand to another
        blocked segment here; falls back to its whole pending volume."""
        pend = self.pending(info.seg)
        if not info.first or info.old_next is None or info.shared:
            return pend
        link = (self.id, info.old_next)
        gaps = []
        for s in self.blocked():
            o = self.infos[s]
            if s != info.seg and o.new_next == info.old_next and not o.shared:
                gap = self.pending(s) - self.residual.get(link, 0.0)
                if gap > EPS:
                    gaps.append(gap)
        return min(gaps) if gaps else pend

    def handle_timeout(self, seg):
        info = self.infos[seg]
        pend = self.pending(seg)
        if pend <= EPS:
            return
        link = (self.id, info.new_next)
        res = self.out_residual(info)
        if res >= pend - EPS:
            # held back only by reservations for higher priorities
            self.host.note(self.id, "deadlock_detected", seg, link, res)
            self._execute(info, pend)
        elif self.cfg.split and info.splittable and res > SPLIT_QUANTUM:
            amt = min(res, self.needed(info), pend)
            self.host.note(self.id, "deadlock_detected", seg, link, res)
            self.host.note(self.id, "split", seg, link, amt)
            self.splits += 1
            self._execute(info, amt)
        else:
            self.host.note(self.id, "deadlock_detected", seg, link, max(res, 0.0))
            self._drain()
            return  # wait for a residual change to re-arm
        self._dirty = True
        self._finish()

    def stuck_kind(self):
        """'Splittable' if some blocked segment sees spare capacity, else
        'Unsplittable'; None if nothing is blocked here."""
        b = self.blocked()
        if not b:
            return None
        for s in b:
            if self.out_residual(self.infos[s]) > EPS:
                return "Splittable"
        return "Unsplittable"
