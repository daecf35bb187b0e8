"""Dual-clock execution traces.

A trace is an ordered list of records, each carrying both the main-clock
and the physical-clock time at which it happened. On disk it is JSON Lines::

    {"k":"op","main":12,"phys":36,"frame":0,"detail":{"pc":4,"op":"binary_op"}}

Record kinds: ``op`` (one executed opcode, stamped before it runs),
``deliver`` (an event handed to a main frame, stamped after any clock jump),
``spawn`` (an auxiliary frame started) and ``out`` (a value passed to
``output``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, NamedTuple

from detloop.errors import TraceFormatError
from detloop.frames import DEFAULT_RF_CONSTANTS

RECORD_KINDS = ("op", "deliver", "spawn", "out")


class TraceRecord(NamedTuple):
    k: str
    main: int
    phys: int
    frame: int
    detail: Any

    def to_json(self) -> str:
        return json.dumps(
            {"k": self.k, "main": self.main, "phys": self.phys, "frame": self.frame, "detail": self.detail},
            separators=(",", ":"),
        )


class Trace:
    def __init__(self, records: Iterable[TraceRecord] = ()) -> None:
        self.records: list[TraceRecord] = list(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Trace) and self.records == other.records

    def append(self, k: str, main: int, phys: int, frame: int, detail: Any) -> None:
        self.records.append(TraceRecord(k, main, phys, frame, detail))

    def of_kind(self, k: str) -> list[TraceRecord]:
        return [r for r in self.records if r.k == k]

    def ops(self, frame: int | None = None) -> list[TraceRecord]:
        return [r for r in self.records if r.k == "op" and (frame is None or r.frame == frame)]

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str) -> Trace:
        records = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            records.append(_record_from(doc, lineno))
        return cls(records)

    @classmethod
    def load(cls, path: str | Path) -> Trace:
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))

    def check_monotone(self) -> None:
        """Both clock columns are non-decreasing within each frame."""
        last: dict[int, tuple[int, int]] = {}
        for i, r in enumerate(self.records):
            pm, pp = last.get(r.frame, (0, 0))
            if r.main < pm or r.phys < pp:
                raise TraceFormatError(f"record {i}: clock went backwards")
            last[r.frame] = (r.main, r.phys)


def _record_from(doc: Any, lineno: int) -> TraceRecord:
    if not isinstance(doc, dict) or set(doc) != {"k", "main", "phys", "frame", "detail"}:
        raise TraceFormatError(f"line {lineno}: expected keys k, main, phys, frame, detail")
    if doc["k"] not in RECORD_KINDS:
        raise TraceFormatError(f"line {lineno}: unknown record kind {doc['k']!r}")
    for key in ("main", "phys", "frame"):
        v = doc[key]
        if not isinstance(v, int) or isinstance(v, bool) or v < 0:
            raise TraceFormatError(f"line {lineno}: {key} must be a non-negative integer")
    if doc["k"] == "op" and not (
        isinstance(doc["detail"], dict) and {"pc", "op"} <= set(doc["detail"])
    ):
        raise TraceFormatError(f"line {lineno}: op record needs pc and op")
    return TraceRecord(doc["k"], doc["main"], doc["phys"], doc["frame"], doc["detail"])


# -- replay comparison -------------------------------------------------------


@dataclass(frozen=True)
class TraceDiff:
    """Outcome of comparing the opcode records of two traces.

    ``ok`` means both traces executed the same opcodes in the same order per
    frame and every main-clock stamp differs by the single constant
    ``offset`` (a minus b).
    """

    ok: bool
    offset: int | None
    compared: int
    divergence: int | None = None
    message: str = ""


def trace_diff(a: Trace, b: Trace) -> TraceDiff:
    frames = sorted({r.frame for r in a.ops()} | {r.frame for r in b.ops()})
    offset: int | None = None
    compared = 0
    for f in frames:
        ra, rb = a.ops(f), b.ops(f)
        for i, (x, y) in enumerate(zip(ra, rb)):
            if x.detail.get("pc") != y.detail.get("pc") or x.detail.get("op") != y.detail.get("op"):
                return TraceDiff(False, offset, compared, i, f"frame {f} op {i}: executed {x.detail} vs {y.detail}")
            d = x.main - y.main
            if offset is None:
                offset = d
            elif d != offset:
                return TraceDiff(
                    False, offset, compared, i,
                    f"frame {f} op {i} (pc {x.detail['pc']}): main {x.main} vs {y.main}, "
                    f"offset {d} != {offset}",
                )
            compared += 1
        if len(ra) != len(rb):
            i = min(len(ra), len(rb))
            return TraceDiff(False, offset, compared, i, f"frame {f}: {len(ra)} vs {len(rb)} opcodes")
    return TraceDiff(True, offset if offset is not None else 0, compared)


# -- observation-only recomputation -------------------------------------------


def check_observations(
    trace: Trace,
    unit: int = 1,
    constants: Mapping[str, int] = DEFAULT_RF_CONSTANTS,
) -> list[str]:
    """Recompute every main-clock stamp from what the observer saw.

    Only the records themselves are used: opcodes advance by ``unit``, a
    deterministic frame delivers at its spawn time plus its constant (or
    delay), a physical-time delivery jumps to its stamp and a message to its
    send time. Returns a description of each mismatch; empty means the trace
    is consistent.
    """
    cursor: dict[int, int] = {}
    expected: dict[int, int] = {}
    problems: list[str] = []
    for i, r in enumerate(trace):
        cur = cursor.get(r.frame, 0)
        d = r.detail if isinstance(r.detail, dict) else {}
        if r.k == "op":
            want, after = cur, cur + unit
        elif r.k == "out":
            want = after = cur
        elif r.k == "spawn":
            want = after = cur
            kind, aux = d.get("kind"), d.get("aux")
            if kind in constants:
                expected[aux] = r.main + constants[kind]
            elif kind == "timer":
                prev = d.get("rearm_of")
                base = expected[prev] if prev is not None and prev in expected else r.main
                expected[aux] = base + d["delay"]
        else:
            kind = d.get("kind")
            if kind == "task":
                want = cur
            elif kind == "message":
                want = max(cur, d["sent_at"])
            elif d.get("stamp") is not None:
                want = d["stamp"]
                if want < cur:
                    problems.append(f"record {i}: stamp {want} behind main clock {cur}")
            else:
                want = max(cur, expected.get(d.get("aux"), cur))
            after = want
        if r.main != want:
            problems.append(f"record {i} ({r.k}): main {r.main}, recomputed {want}")
            after = r.main + (after - want)
        cursor[r.frame] = after
    return problems
