import pytest

from ezsegway.agent import (GTM, INSTALL, REMOVING, AgentConfig, Message, ProtocolError,
                            SegmentInfo, SwitchAgent)


class Host:
    """Records what an agent asks its environment to do."""

    def __init__(self):
        self.sent, self.rules, self.notes, self.timers = [], [], [], {}

    def send(self, m):
        self.sent.append((m.kind, m.seg, m.dst, m.volume))

    def rule(self, x, action, seg, link, vol):
        self.rules.append((action, seg, link, vol))

    def arm(self, x, seg, reset=False):
        self.timers[seg] = "armed"

    def cancel(self, x, seg):
        self.timers.pop(seg, None)

    def note(self, x, action, seg, link, vol):
        self.notes.append((action, seg, vol))


def agent(residual, *infos, split=True):
    h = Host()
    a = SwitchAgent(2, residual, h, AgentConfig(split=split))
    a.handle(Message(INSTALL, "", 0, "ctrl", 2, 1, infos))
    return a, h


def test_interior_installs_on_gtm_and_passes_it_back():
    info = SegmentInfo("f#0", "f", 3.0, new_prev=1, new_next=3)
    a, h = agent({(2, 3): 5.0}, info)
    assert h.rules == [] and "f#0" not in h.timers
    a.handle(Message(GTM, "f#0", 3.0, 3, 2))
    assert h.rules == [("install_rule", "f#0", (2, 3), 3.0)]
    assert h.sent == [(GTM, "f#0", 1, 3.0)]
    assert a.residual[(2, 3)] == 2.0


def test_self_ready_first_switch_moves_and_removes():
    info = SegmentInfo("f#0", "f", 3.0, first=True, new_next=3, old_next=4,
                       fwd_removing=True, self_ready=True)
    a, h = agent({(2, 3): 5.0, (2, 4): 0.0}, info)
    assert h.rules == [("install_rule", "f#0", (2, 3), 3.0), ("remove_rule", "f#0", (2, 4), 3.0)]
    assert h.sent == [(REMOVING, "f#0", 4, 3.0)]
    assert a.residual == {(2, 3): 2.0, (2, 4): 3.0}


def test_blocked_segment_arms_timer_then_splits():
    info = SegmentInfo("f#0", "f", 4.0, first=True, new_next=3, old_next=4, self_ready=True)
    a, h = agent({(2, 3): 1.5}, info)
    assert h.rules == [] and h.timers == {"f#0": "armed"}
    a.handle_timeout("f#0")
    assert ("split", "f#0", 1.5) in h.notes
    assert h.rules[0] == ("install_rule", "f#0", (2, 3), 1.5)
    assert a.splits == 1 and a.pending("f#0") == pytest.approx(2.5)


def test_unsplittable_or_split_disabled_just_reports():
    info = SegmentInfo("f#0", "f", 4.0, first=True, new_next=3, self_ready=True)
    a, h = agent({(2, 3): 1.5}, info, split=False)
    a.handle_timeout("f#0")
    assert h.rules == [] and h.notes[0][0] == "deadlock_detected"
    assert a.stuck_kind() == "Splittable"
    b, _ = agent({(2, 3): 0.0}, info)
    assert b.stuck_kind() == "Unsplittable"


def test_reservation_holds_low_priority_back():
    hi = SegmentInfo("h#0", "h", 3.0, priority=2, new_prev=1, new_next=3)
    lo = SegmentInfo("l#0", "l", 2.0, priority=0, first=True, new_next=3, self_ready=True)
    a, h = agent({(2, 3): 4.0}, hi, lo)
    assert h.rules == []  # 4 - 2 would leave less than the 3 the high one needs
    a.handle(Message(GTM, "h#0", 3.0, 3, 2))
    assert [r[1] for r in h.rules] == ["h#0"]
    a.handle_timeout("l#0")
    assert h.rules[-1] == ("install_rule", "l#0", (2, 3), 1.0)


def test_reservation_override_on_timeout():
    hi = SegmentInfo("h#0", "h", 3.0, priority=2, new_prev=1, new_next=3)
    lo = SegmentInfo("l#0", "l", 2.0, priority=0, first=True, new_next=3, self_ready=True)
    a, h = agent({(2, 3): 4.0}, hi, lo)
    a.handle_timeout("l#0")
    assert h.rules == [("install_rule", "l#0", (2, 3), 2.0)]
    assert h.notes == [("deadlock_detected", "l#0", 4.0)]


def test_removing_is_held_until_own_new_rule():
    old = SegmentInfo("f#0", "f", 1.0, old_next=5, fwd_removing=True, hold_for="f#1")
    new = SegmentInfo("f#1", "f", 1.0, new_prev=1, new_next=3)
    a, h = agent({(2, 3): 1.0, (2, 5): 0.0}, old, new)
    a.handle(Message(REMOVING, "f#0", 1.0, 1, 2))
    assert h.rules == []
    a.handle(Message(GTM, "f#1", 1.0, 3, 2))
    assert [r[0] for r in h.rules] == ["install_rule", "remove_rule"]
    assert (REMOVING, "f#0", 5, 1.0) in h.sent


def test_waiters_released_after_full_move():
    dep = SegmentInfo("f#1", "f", 1.0, first=True, new_next=9, old_next=3, self_ready=True,
                      waiters=(("f#2", 8, 1.0),))
    a, h = agent({(2, 9): 1.0}, dep)
    assert (GTM, "f#2", 8, 1.0) in h.sent


def test_shared_next_hop_needs_no_capacity():
    info = SegmentInfo("f#0", "f", 3.0, first=True, new_next=3, old_next=3, self_ready=True)
    a, h = agent({(2, 3): 0.0}, info)
    assert [r[0] for r in h.rules] == ["install_rule", "remove_rule"]
    assert a.residual[(2, 3)] == 0.0


def test_duplicate_install_ignored_and_protocol_errors():
    info = SegmentInfo("f#0", "f", 1.0, new_prev=1, new_next=3)
    a, h = agent({(2, 3): 1.0}, info)
    a.handle(Message(INSTALL, "", 0, "ctrl", 2, 1, ()))
    assert "f#0" in a.infos
    with pytest.raises(ProtocolError):
        a.handle(Message(GTM, "nope", 1.0, 3, 2))
    with pytest.raises(ProtocolError):
        a.handle(Message("bogus", "f#0", 1.0, 3, 2))
    a.handle(Message(REMOVING, "nope", 1.0, 3, 2))  # unknown removals are ignored
