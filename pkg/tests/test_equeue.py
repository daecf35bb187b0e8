import itertools
import time

import pytest

from detloop.equeue import (
    DeliverFastForward,
    DeliverInPlace,
    Empty,
    EventQueue,
    PlaceholderState,
    StallUntilPhysicalAhead,
    WaitPlaceholder,
)
from detloop.errors import AlreadyResolved, UnknownPlaceholder
from detloop.vmclock import DeterministicClock


def deliver(q, clock, phys):
    """Fetch once and apply the decision to ``clock``; returns the decision."""
    d = q.next(clock.read_now(), phys)
    if isinstance(d, DeliverFastForward):
        q.commit(d)
        clock.fast_forward(d.target)
    elif isinstance(d, DeliverInPlace):
        q.commit(d)
    return d


# -- the four cases ----------------------------------------------------------------


def test_case1_fast_forward():
    q, c = EventQueue(), DeterministicClock(0, 10, 1)
    q.push_event(50, "e")
    d = deliver(q, c, 100)
    assert d.case == 1 and d.event == "e"
    assert c.read_now() == 50


def test_case2_in_place():
    q, c = EventQueue(), DeterministicClock(0, 60, 1)
    q.push_event(50, "late")
    d = deliver(q, c, 100)
    assert d.case == 2
    assert c.read_now() == 60


def test_case3_wait_then_fill():
    q, c = EventQueue(), DeterministicClock(0, 10, 1)
    pid = q.push_placeholder(20)
    d = deliver(q, c, 30)
    assert isinstance(d, WaitPlaceholder) and d.id == pid and d.case == 3
    assert c.read_now() == 10
    q.resolve_placeholder(pid, "result")
    d = deliver(q, c, 500)
    assert d.case == 1 and d.event == "result"
    assert c.read_now() == 20


def test_case4_stall_then_holder():
    q, c = EventQueue(), DeterministicClock(0, 30, 1)
    assert isinstance(deliver(q, c, 30), StallUntilPhysicalAhead)
    q.attach_physical("net", 31)
    d = deliver(q, c, 31)
    assert d.case == 1 and d.from_holder and d.event == "net"
    assert c.read_now() == 31


def test_empty_when_main_behind_and_nothing_ready():
    q = EventQueue()
    assert isinstance(q.next(3, 10), Empty)
    q.push_event(20, "future")
    assert isinstance(q.next(3, 10), Empty)


def test_det_entry_waits_for_physical_time():
    q, c = EventQueue(), DeterministicClock(0, 0, 1)
    q.push_event(40, "t")
    assert isinstance(deliver(q, c, 39), Empty)
    assert deliver(q, c, 40).event == "t"
    assert c.read_now() == 40


def test_holder_sorts_after_det_entry_of_equal_priority():
    q = EventQueue()
    q.attach_physical("phys", 50)
    q.push_event(50, "det")
    assert q.next(10, 50).event == "det"


def test_canceled_placeholder_is_skipped_without_clock_change():
    q, c = EventQueue(), DeterministicClock(0, 5, 1)
    pid = q.push_placeholder(10)
    q.push_event(30, "next")
    q.cancel_placeholder(pid)
    assert q.placeholder_state(pid) is PlaceholderState.CANCELED
    d = deliver(q, c, 100)
    assert d.event == "next" and c.read_now() == 30


def test_fifo_on_ties_and_push_front():
    q = EventQueue()
    q.push_event(5, "a")
    q.push_event(5, "b")
    q.push_front(5, "first")
    got = []
    while not q.is_idle():
        d = q.next(5, 100)
        q.commit(d)
        got.append(d.event)
    assert got == ["first", "a", "b"]


def test_placeholder_errors():
    q = EventQueue()
    pid = q.push_placeholder(1)
    q.resolve_placeholder(pid, "x")
    with pytest.raises(AlreadyResolved):
        q.resolve_placeholder(pid, "y")
    with pytest.raises(AlreadyResolved):
        q.cancel_placeholder(pid)
    with pytest.raises(UnknownPlaceholder):
        q.cancel_placeholder(999)


def test_filled_placeholder_keeps_its_slot():
    q = EventQueue()
    q.push_event(7, "later")
    pid = q.push_placeholder(3)
    q.resolve_placeholder(pid, "early")
    assert q.next(0, 100).event == "early"


# -- exhaustive comparison against a straight-line oracle ---------------------------


class ListOracle:
    """Unsorted list; every fetch scans for the minimum."""

    def __init__(self):
        self.items = []  # [priority, seq, kind, state, label]
        self.holder = []
        self.seq = 0

    def push(self, prio, label, pending=False):
        self.items.append([prio, self.seq, "ph" if pending else "ev", "pending" if pending else "ready", label])
        self.seq += 1
        return self.items[-1]

    def fetch(self, main, phys):
        live = [i for i in self.items if i[3] != "canceled"]
        front = None
        for i in live:
            if front is None or (i[0], i[1]) < (front[0], front[1]):
                front = i
        if front is not None and front[0] <= phys:
            if front[3] == "pending":
                return ("wait", front[4])
            return ("ff", front[0], front[4]) if front[0] > main else ("inplace", front[4])
        if main >= phys:
            return ("stall",)
        if self.holder:
            return ("ff", phys, self.holder[0])
        return ("empty",)

    def take(self, label):
        if self.holder and self.holder[0] == label:
            self.holder.pop(0)
        else:
            self.items = [i for i in self.items if i[4] != label]


def _shape(d):
    if isinstance(d, DeliverFastForward):
        return ("ff", d.target, d.event)
    if isinstance(d, DeliverInPlace):
        return ("inplace", d.event)
    if isinstance(d, WaitPlaceholder):
        return ("wait", d.id)
    if isinstance(d, StallUntilPhysicalAhead):
        return ("stall",)
    return ("empty",)


ITEM_CHOICES = (
    [("det", p, None) for p in range(3)]
    + [("phys", None, None)]
    + [("ph", p, fate) for p in range(3) for fate in ("fill", "cancel", "late")]
)


def _schedules():
    for n_e in range(4):
        for n_p in range(3):
            for slots in itertools.combinations(range(n_e + n_p), n_p):
                ev_choices = [c for c in ITEM_CHOICES if c[0] != "ph"]
                ph_choices = [c for c in ITEM_CHOICES if c[0] == "ph"]
                for evs in itertools.product(ev_choices, repeat=n_e):
                    for phs in itertools.product(ph_choices, repeat=n_p):
                        e, p = iter(evs), iter(phs)
                        yield [next(p) if i in slots else next(e) for i in range(n_e + n_p)]


def _run_both(schedule):
    q, o = EventQueue(), ListOracle()
    main, phys = 0, 0
    ph_ids, late = {}, []
    for n, (kind, prio, fate) in enumerate(schedule):
        label = f"i{n}"
        if kind == "det":
            q.push_event(prio, label)
            o.push(prio, label)
        elif kind == "phys":
            q.attach_physical(label, phys)
            o.holder.append(label)
        else:
            pid = q.push_placeholder(prio)
            rec = o.push(prio, pid, pending=True)
            ph_ids[pid] = (rec, label)
            if fate == "fill":
                q.resolve_placeholder(pid, label)
                rec[3], rec[4] = "ready", label
            elif fate == "cancel":
                q.cancel_placeholder(pid)
                rec[3] = "canceled"
            else:
                late.append(pid)
    steps = 0
    while True:
        steps += 1
        assert steps < 50
        d = q.next(main, phys)
        want = o.fetch(main, phys)
        assert _shape(d) == want, (schedule, main, phys)
        if want[0] in ("ff", "inplace"):
            q.commit(d)
            o.take(want[-1])
            if want[0] == "ff":
                main = want[1]
            main += 1  # the delivered task runs one opcode
            phys = max(phys, main) + 1
        elif want[0] == "wait":
            pid = want[1]
            rec, label = ph_ids[pid]
            q.resolve_placeholder(pid, label)
            rec[3], rec[4] = "ready", label
            phys += 1
        elif want[0] == "stall":
            phys = main + 1
        else:
            if not q.entries() and not q.holder.events:
                break
            phys += 1
    assert q.is_idle()


def test_exhaustive_schedules_match_oracle():
    t0 = time.perf_counter()
    n = 0
    for sched in _schedules():
        _run_both(sched)
        n += 1
    assert n > 10_000
    assert time.perf_counter() - t0 < 5.0
