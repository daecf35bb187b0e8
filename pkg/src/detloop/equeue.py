"""Priority event queue of the main frame.

Entries are ordered by ``(priority, seq)``: priority is the expected delivery
time on the main clock and ``seq`` is an insertion counter, so equal
priorities are served first-in first-out.

Besides ordinary events the queue holds *placeholders* (slots reserved for
results still being computed by a deterministic auxiliary frame) and exactly
one *physical-clock holder*. The holder sits at the current physical time
(physical ticks map one-to-one onto main-clock ticks) and sorts after every
other entry of equal priority. Events from physical-time frames ride on the
holder rather than taking a fixed slot, so whenever one is delivered the main
clock is synchronized to the physical time of that moment.
"""

from __future__ import annotations

import heapq
import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Union

from detloop.errors import AlreadyResolved, UnknownPlaceholder


class PlaceholderState(Enum):
    PENDING = "pending"
    FILLED = "filled"
    CANCELED = "canceled"


@dataclass(eq=False)
class QueueEntry:
    priority: int
    seq: int
    event: Any = None
    placeholder: int | None = None
    state: PlaceholderState | None = None

    @property
    def is_placeholder(self) -> bool:
        return self.placeholder is not None

    def sort_key(self) -> tuple[int, int]:
        return (self.priority, self.seq)


@dataclass(eq=False)
class PhysicalHolder:
    priority: int = 0
    events: deque[Any] = field(default_factory=deque)


# -- fetch decisions ---------------------------------------------------------


@dataclass(frozen=True)
class DeliverFastForward:
    """Case 1: move the main clock forward to ``target``, then deliver."""

    event: Any
    target: int
    entry: QueueEntry | None = None
    from_holder: bool = False
    case: int = 1


@dataclass(frozen=True)
class DeliverInPlace:
    """Case 2: the entry is overdue; deliver without touching the clock."""

    event: Any
    entry: QueueEntry | None = None
    from_holder: bool = False
    case: int = 2


@dataclass(frozen=True)
class WaitPlaceholder:
    """Case 3: front slot is still being computed; freeze and wait."""

    id: int
    priority: int
    case: int = 3


@dataclass(frozen=True)
class StallUntilPhysicalAhead:
    """Case 4: main clock caught up with the physical clock."""

    case: int = 4


@dataclass(frozen=True)
class Empty:
    case: int = 0


FetchDecision = Union[DeliverFastForward, DeliverInPlace, WaitPlaceholder, StallUntilPhysicalAhead, Empty]


class EventQueue:
    def __init__(self) -> None:
        self._heap: list[tuple[int, int, QueueEntry]] = []
        self._seq = itertools.count()
        self._front_seq = itertools.count(-1, -1)
        self._ids = itertools.count(1)
        self._placeholders: dict[int, QueueEntry] = {}
        self.holder = PhysicalHolder()

    def __len__(self) -> int:
        """Live entries, excluding the holder and canceled placeholders."""
        return sum(1 for _, _, e in self._heap if e.state is not PlaceholderState.CANCELED)

    # -- insertion --

    def _insert(self, entry: QueueEntry) -> QueueEntry:
        heapq.heappush(self._heap, (entry.priority, entry.seq, entry))
        return entry

    def push_event(self, time: int, event: Any) -> QueueEntry:
        return self._insert(QueueEntry(time, next(self._seq), event))

    def push_front(self, time: int, event: Any) -> QueueEntry:
        """Insert ahead of every existing entry of the same priority."""
        return self._insert(QueueEntry(time, next(self._front_seq), event))

    def push_placeholder(self, expected: int) -> int:
        pid = next(self._ids)
        entry = QueueEntry(expected, next(self._seq), None, pid, PlaceholderState.PENDING)
        self._placeholders[pid] = entry
        self._insert(entry)
        return pid

    def _placeholder(self, pid: int) -> QueueEntry:
        try:
            return self._placeholders[pid]
        except KeyError:
            raise UnknownPlaceholder(f"no placeholder {pid}") from None

    def placeholder_state(self, pid: int) -> PlaceholderState:
        return self._placeholder(pid).state  # type: ignore[return-value]

    def resolve_placeholder(self, pid: int, event: Any) -> None:
        entry = self._placeholder(pid)
        if entry.state is not PlaceholderState.PENDING:
            raise AlreadyResolved(f"placeholder {pid} is {entry.state.value}")
        entry.state = PlaceholderState.FILLED
        entry.event = event

    def cancel_placeholder(self, pid: int) -> None:
        entry = self._placeholder(pid)
        if entry.state is not PlaceholderState.PENDING:
            raise AlreadyResolved(f"placeholder {pid} is {entry.state.value}")
        entry.state = PlaceholderState.CANCELED

    def physical_holder_position(self, physical_now: int) -> int:
        self.holder.priority = physical_now
        return physical_now

    def attach_physical(self, event: Any, physical_now: int) -> int:
        """Queue an event from a physical-time frame at the holder."""
        pos = self.physical_holder_position(physical_now)
        self.holder.events.append(event)
        return pos

    # -- inspection --

    def _drop_canceled(self) -> None:
        while self._heap and self._heap[0][2].state is PlaceholderState.CANCELED:
            heapq.heappop(self._heap)

    def peek(self) -> QueueEntry | None:
        self._drop_canceled()
        return self._heap[0][2] if self._heap else None

    def entries(self) -> list[QueueEntry]:
        """Live entries in delivery order (for inspection and tests)."""
        return [e for _, _, e in sorted(self._heap) if e.state is not PlaceholderState.CANCELED]

    def pending_placeholders(self) -> list[int]:
        return [
            pid for pid, e in self._placeholders.items() if e.state is PlaceholderState.PENDING
        ]

    def is_idle(self) -> bool:
        return self.peek() is None and not self.holder.events

    def next(self, main_now: int, physical_now: int) -> FetchDecision:
        holder_pos = self.physical_holder_position(physical_now)
        front = self.peek()
        if front is not None and front.priority <= holder_pos:
            if front.state is PlaceholderState.PENDING:
                return WaitPlaceholder(front.placeholder, front.priority)  # type: ignore[arg-type]
            if front.priority > main_now:
                return DeliverFastForward(front.event, front.priority, front)
            return DeliverInPlace(front.event, front)
        # the holder is at the front
        if main_now >= holder_pos:
            return StallUntilPhysicalAhead()
        if self.holder.events:
            return DeliverFastForward(self.holder.events[0], holder_pos, None, from_holder=True)
        return Empty()

    def commit(self, decision: DeliverFastForward | DeliverInPlace) -> Any:
        """Remove the entry a delivery decision refers to; returns its event."""
        if decision.from_holder:
            return self.holder.events.popleft()
        entry = decision.entry
        assert entry is not None
        top = self.peek()
        if top is not entry:
            raise RuntimeError("queue changed between next() and commit()")
        heapq.heappop(self._heap)
        if entry.placeholder is not None:
            self._placeholders.pop(entry.placeholder, None)
        return entry.event


# functional spellings of the queue operations


def push_event(queue: EventQueue, time: int, event: Any) -> EventQueue:
    queue.push_event(time, event)
    return queue


def push_placeholder(queue: EventQueue, expected: int) -> int:
    return queue.push_placeholder(expected)


def resolve_placeholder(queue: EventQueue, pid: int, event: Any) -> EventQueue:
    queue.resolve_placeholder(pid, event)
    return queue


def cancel_placeholder(queue: EventQueue, pid: int) -> EventQueue:
    queue.cancel_placeholder(pid)
    return queue


def next_decision(queue: EventQueue, main_now: int, physical_now: int) -> FetchDecision:
    return queue.next(main_now, physical_now)


def physical_holder_position(queue: EventQueue, physical_now: int) -> int:
    return queue.physical_holder_position(physical_now)
