"""Event loop that ties the VM, auxiliary frames and event queues together.

One loop iteration:

1. complete every live auxiliary frame whose physical completion time has
   been reached, in (completion time, frame id) order. Deterministic frames
   fill their placeholder; physical-time frames (and, in legacy mode, every
   frame) queue their event on the physical-clock holder;
2. ask each main frame's queue for a decision and, if any frame can take a
   delivery, run the one with the smallest delivery time (lowest frame id on
   ties) as a task;
3. otherwise move physical time forward: to the awaited frame's completion
   (case 3), to one past the main clock (case 4), or to the next moment
   anything can happen. With nothing left to happen the run halts.

In legacy mode there are no placeholders: every event is delivered when it
physically arrives and scripts read physical time floored to ``grain``. The
main-clock column of a legacy trace is therefore physical time.

Record and replay
-----------------
A deterministic run logs each physical-time delivery as (delivery ordinal,
aux frame id, stamp, payload) in an :class:`InputLog`. A run constructed
with ``replay=log`` never lets its own physical-time frames complete;
instead it hands over the logged event when its delivery counter reaches the
logged ordinal, with the main clock set to the logged stamp. This fixes the
inputs from the outside world while the machine profile changes.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from detloop.equeue import (
    DeliverFastForward,
    DeliverInPlace,
    Empty,
    EventQueue,
    PlaceholderState,
    StallUntilPhysicalAhead,
    WaitPlaceholder,
)
from detloop.errors import (
    ConfigError,
    NotRun,
    PhysicalBudgetExceeded,
    UnknownFrame,
    UnknownOrigin,
    VmTrap,
)
from detloop.frames import (
    DEFAULT_FRAME_PERIOD,
    DEFAULT_RF_CONSTANTS,
    PHYSICAL_KINDS,
    AuxFrame,
    FrameRequest,
    RfKind,
    complete,
    spawn,
    validate_rf_constants,
)
from detloop.lang.compiler import UNIT, FuncRef, Op, Program, compile_source
from detloop.trace import Trace, TraceRecord
from detloop.vm import (
    DEFAULT_STEP_BUDGET,
    BuiltinRequest,
    VmState,
    builtin_now,
    callable_ref,
    run_task,
)
from detloop.vmclock import (
    ClockMode,
    DeterministicClock,
    Environment,
    EnvironmentProfile,
    PhysicalClock,
)

MESSAGE_HANDLER = "on_message"
INPUT_HANDLER = "on_input"
_OP_LABELS = tuple(op.label for op in Op)


# -- configuration ----------------------------------------------------------


@dataclass(frozen=True)
class RuntimeConfig:
    mode: ClockMode = ClockMode.DETERMINISTIC
    unit: int = 1
    grain: int = 100_000
    rf_constants: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_RF_CONSTANTS))
    frame_period: int = DEFAULT_FRAME_PERIOD
    origin: str = "https://app.example"
    # fetch targets a script may name; empty means any origin is allowed
    origins: tuple[str, ...] = ()
    step_budget: int = DEFAULT_STEP_BUDGET
    physical_budget: int | None = None
    trace_opcodes: bool = True
    profile: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.mode, ClockMode):
            raise ConfigError("mode", "must be 'det' or 'legacy'")
        for name in ("unit", "grain", "frame_period", "step_budget"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ConfigError(name, "must be a positive integer")
        if self.physical_budget is not None and (
            not isinstance(self.physical_budget, int) or self.physical_budget <= 0
        ):
            raise ConfigError("physical_budget", "must be a positive integer")
        if not isinstance(self.origin, str) or not self.origin:
            raise ConfigError("origin", "must be a non-empty string")
        for i, o in enumerate(self.origins):
            if not isinstance(o, str) or not o:
                raise ConfigError(f"origins[{i}]", "must be a non-empty string")
        object.__setattr__(self, "rf_constants", validate_rf_constants(self.rf_constants))

    def validate_for(self, profile: EnvironmentProfile) -> None:
        floor = profile.min_opcode_cost()
        if self.unit > floor:
            raise ConfigError(
                "unit", f"{self.unit} exceeds the smallest opcode cost {floor} of profile {profile.name!r}"
            )

    def with_mode(self, mode: ClockMode | str) -> RuntimeConfig:
        return replace(self, mode=ClockMode(mode))

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> RuntimeConfig:
        if not isinstance(doc, Mapping):
            raise ConfigError("$", "config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        for key in doc:
            if key not in known:
                raise ConfigError(key, "unknown config key")
        kw: dict[str, Any] = dict(doc)
        if "mode" in kw:
            try:
                kw["mode"] = ClockMode(kw["mode"])
            except ValueError:
                raise ConfigError("mode", "must be 'det' or 'legacy'") from None
        if "rf_constants" in kw and not isinstance(kw["rf_constants"], Mapping):
            raise ConfigError("rf_constants", "must be an object")
        if "origins" in kw:
            if not isinstance(kw["origins"], list):
                raise ConfigError("origins", "must be a list")
            kw["origins"] = tuple(kw["origins"])
        if "trace_opcodes" in kw and not isinstance(kw["trace_opcodes"], bool):
            raise ConfigError("trace_opcodes", "must be a boolean")
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> RuntimeConfig:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from None
        cfg = cls.from_dict(doc)
        if cfg.profile is not None and not Path(cfg.profile).is_absolute():
            cfg = replace(cfg, profile=str(path.parent / cfg.profile))
        return cfg

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode.value,
            "unit": self.unit,
            "grain": self.grain,
            "rf_constants": dict(self.rf_constants),
            "frame_period": self.frame_period,
            "origin": self.origin,
            "origins": list(self.origins),
            "step_budget": self.step_budget,
            "physical_budget": self.physical_budget,
            "trace_opcodes": self.trace_opcodes,
        }


# -- events -----------------------------------------------------------------


@dataclass(frozen=True)
class CrossFrameMessage:
    sender: int
    receiver: int
    payload: Any
    sent_at: int

    def __post_init__(self) -> None:
        if not isinstance(self.payload, (int, str, bool)) and self.payload is not UNIT:
            raise VmTrap(f"cannot post {self.payload!r} across frames")


@dataclass(frozen=True)
class Delivery:
    """What a main frame receives from its queue."""

    kind: str  # "task", "message", or an RfKind value
    callback: str | None = None
    payload: Any = UNIT
    aux: int | None = None
    sent_at: int | None = None
    # physical-time deliveries: the stamp is fixed when the event is delivered
    physical: bool = False
    replayed_stamp: int | None = None


@dataclass(frozen=True)
class LoggedInput:
    ordinal: int
    aux: int
    owner: int
    kind: str
    callback: str | None
    stamp: int
    payload: Any


@dataclass
class InputLog:
    entries: list[LoggedInput] = field(default_factory=list)

    def to_list(self) -> list[dict[str, Any]]:
        return [e.__dict__.copy() for e in self.entries]

    @classmethod
    def from_list(cls, items: list[Mapping[str, Any]]) -> InputLog:
        return cls([LoggedInput(**dict(i)) for i in items])


@dataclass(frozen=True)
class DeliveryStamp:
    frame: int
    kind: str
    main: int
    phys: int


@dataclass(frozen=True)
class OracleReport:
    physical_total: int
    main_totals: dict[int, int]
    deliveries: tuple[DeliveryStamp, ...]
    outputs: tuple[tuple[int, int, int, Any], ...]
    opcodes: int

    @property
    def observer_outputs(self) -> list[Any]:
        return [o[3] for o in self.outputs]


# -- main frames --------------------------------------------------------------


class MainFrame:
    def __init__(self, fid: int, runtime: Runtime, program: Program, inputs: Mapping[str, Any]) -> None:
        self.id = fid
        self.runtime = runtime
        self.program = program
        self.clock = DeterministicClock(0, 0, runtime.config.unit)
        self.queue = EventQueue()
        self.vm = VmState(
            program,
            self.clock,
            runtime.physical,
            runtime.env,
            runtime.config.mode,
            runtime.config.grain,
            dict(inputs),
            runtime.config.step_budget,
        )
        if runtime.config.trace_opcodes:
            self.vm.on_op = self._record_op
        self.queue.push_event(0, Delivery("task"))

    def _record_op(self, pc: int, op: int) -> None:
        rt = self.runtime
        phys = rt.physical.now
        main = phys if rt.legacy else self.clock.read_now()
        rt.trace.records.append(TraceRecord("op", main, phys, self.id, {"pc": pc, "op": _OP_LABELS[op]}))

    def main_now(self) -> int:
        return self.runtime.physical.now if self.runtime.legacy else self.clock.read_now()


class Runtime:
    def __init__(
        self,
        config: RuntimeConfig | None = None,
        profile: EnvironmentProfile | None = None,
        replay: InputLog | None = None,
    ) -> None:
        self.config = config or RuntimeConfig()
        self.profile = profile or EnvironmentProfile()
        self.config.validate_for(self.profile)
        self.env = Environment(self.profile)
        self.physical = PhysicalClock(0)
        self.legacy = self.config.mode is ClockMode.LEGACY
        self.trace = Trace()
        self.frames: list[MainFrame] = []
        self.aux: dict[int, AuxFrame] = {}
        self._live: list[tuple[int, int]] = []
        self._by_placeholder: dict[tuple[int, int], AuxFrame] = {}
        self._next_aux = 1
        self._next_timer = 1
        self._timers: dict[int, AuxFrame] = {}
        self._cleared: set[int] = set()
        self.deliveries = 0
        self.delivery_stamps: list[DeliveryStamp] = []
        self.outputs: list[tuple[int, int, int, Any]] = []
        self.input_log = InputLog()
        self.replay = replay
        self._replay_pos = 0
        self._pending_inputs: list[tuple[int, Any, int]] = []
        self.finished = False

    # -- setup --

    def load(self, source: str, inputs: Mapping[str, Any] | None = None) -> MainFrame:
        """Compile ``source`` as the script of main frame 0."""
        if self.frames:
            raise RuntimeError("a script is already loaded; use add_main_frame")
        return self.add_main_frame(source, inputs)

    def add_main_frame(self, source: str, inputs: Mapping[str, Any] | None = None) -> MainFrame:
        inputs = dict(inputs or {})
        program = compile_source(source, tuple(inputs))
        frame = MainFrame(len(self.frames), self, program, inputs)
        self.frames.append(frame)
        return frame

    def inject_input(self, at: int, value: Any, frame: int = 0) -> int:
        """Schedule a user-input event arriving at physical time ``at``."""
        self._frame(frame)
        if not isinstance(value, (int, str, bool)):
            raise ValueError("input values must be plain data")
        self._pending_inputs.append((at, value, frame))
        return len(self._pending_inputs)

    def _frame(self, fid: int) -> MainFrame:
        if isinstance(fid, bool) or not isinstance(fid, int) or not 0 <= fid < len(self.frames):
            raise UnknownFrame(f"no main frame {fid!r}")
        return self.frames[fid]

    @property
    def main(self) -> MainFrame:
        return self._frame(0)

    # -- aux frames --

    def _spawn(self, owner: MainFrame, kind: RfKind, request: FrameRequest, main_now: int | None = None) -> AuxFrame:
        aid = self._next_aux
        self._next_aux += 1
        t = owner.clock.read_now() if main_now is None else main_now
        f = spawn(
            aid, kind, request, t, self.physical.now, self.env,
            self.config.rf_constants, self.config.frame_period,
        )
        f.owner = owner.id
        self.aux[aid] = f
        replay_owned = self.replay is not None and kind in PHYSICAL_KINDS
        f.meta["replay_owned"] = replay_owned
        if not replay_owned:
            heapq.heappush(self._live, (f.physical_completion, aid))
        if not self.legacy and f.expected_delivery is not None:
            f.placeholder = owner.queue.push_placeholder(f.expected_delivery)
            self._by_placeholder[(owner.id, f.placeholder)] = f
        return f

    def _record_spawn(self, owner: MainFrame, f: AuxFrame, **extra: Any) -> None:
        detail: dict[str, Any] = {"aux": f.id, "kind": f.kind.value}
        if f.kind is RfKind.TIMER:
            detail["delay"] = f.request.delay
            detail["timer"] = f.timer_id
        if f.request.magnitude:
            detail["magnitude"] = f.request.magnitude
        detail.update(extra)
        self.trace.records.append(TraceRecord("spawn", owner.main_now(), self.physical.now, owner.id, detail))

    def _live_frames(self) -> bool:
        while self._live and self.aux[self._live[0][1]].completed:
            heapq.heappop(self._live)
        return bool(self._live)

    def _complete_ready(self) -> None:
        phys = self.physical.now
        while self._live and self._live[0][0] <= phys:
            _, aid = heapq.heappop(self._live)
            f = self.aux[aid]
            if f.completed:
                continue
            ev = complete(f, phys)
            owner = self.frames[f.owner]
            payload = self._payload(f, ev.payload)
            physical = f.kind in PHYSICAL_KINDS
            d = Delivery(f.kind.value, ev.callback, payload, aid, physical=physical or self.legacy)
            if self.legacy or physical:
                owner.queue.attach_physical(d, phys)
            else:
                owner.queue.resolve_placeholder(f.placeholder, d)

    def _payload(self, f: AuxFrame, given: Any) -> Any:
        if f.kind is RfKind.TIMER:
            return f.timer_id
        if f.kind is RfKind.VIDEO_FRAME:
            return f.physical_completion
        if f.kind is RfKind.USER_INPUT:
            return given
        # same-origin fetches carry their arrival stamp, filled in at delivery
        return 0

    # -- builtins --

    def _handler(self, frame: MainFrame):
        def handle(state: VmState, req: BuiltinRequest) -> Any:
            return self._builtin(frame, req)

        return handle

    def _builtin(self, frame: MainFrame, req: BuiltinRequest) -> Any:
        name, args = req.name, req.args
        if name == "now":
            return builtin_now(frame.vm)
        if name == "output":
            return self._output(frame, args[0])
        if name == "set_timeout" or name == "set_interval":
            return self.builtin_set_timer(frame, args[0], args[1], repeating=name == "set_interval")
        if name == "clear_interval":
            return self.builtin_clear_interval(frame, args[0])
        if name == "fetch":
            return self.builtin_fetch(frame, args[0], args[1], args[2])
        if name == "secret_sync":
            return self.builtin_secret_sync(frame, args[0])
        if name == "secret_async":
            return self.builtin_secret_async(frame, args[0], args[1])
        if name == "request_frame":
            return self.builtin_request_frame(frame, args[0])
        if name == "post":
            return self.builtin_post(frame, args[0], args[1])
        raise VmTrap(f"unknown builtin {name!r}")

    def _output(self, frame: MainFrame, value: Any) -> Any:
        if isinstance(value, FuncRef):
            value = repr(value)
        main = frame.main_now()
        self.outputs.append((frame.id, main, self.physical.now, value))
        frame.vm.outputs.append((main, self.physical.now, value))
        self.trace.records.append(TraceRecord("out", main, self.physical.now, frame.id, None if value is UNIT else value))
        return UNIT

    @staticmethod
    def _magnitude(v: Any, what: str) -> int:
        if type(v) is not int or v < 0:
            raise VmTrap(f"{what} must be a non-negative integer, got {v!r}")
        return v

    def builtin_set_timer(self, frame: MainFrame, fn: Any, delay: Any, repeating: bool = False) -> int:
        cb = callable_ref(fn, frame.program)
        delay = self._magnitude(delay, "timer delay")
        if repeating and delay == 0:
            raise VmTrap("interval period must be positive")
        tid = self._next_timer
        self._next_timer += 1
        f = self._spawn(frame, RfKind.TIMER, FrameRequest(delay=delay, callback=cb))
        f.timer_id = tid
        f.repeating = repeating
        self._timers[tid] = f
        self._record_spawn(frame, f)
        return tid

    def builtin_clear_interval(self, frame: MainFrame, tid: Any) -> Any:
        f = self._timers.get(tid) if type(tid) is int else None
        if f is None or f.owner != frame.id or tid in self._cleared:
            return UNIT
        self._cleared.add(tid)
        if not f.completed:
            f.completed = True
            if f.placeholder is not None and frame.queue.placeholder_state(f.placeholder) is PlaceholderState.PENDING:
                frame.queue.cancel_placeholder(f.placeholder)
        return UNIT

    def builtin_fetch(self, frame: MainFrame, origin: Any, size: Any, fn: Any) -> int:
        if not isinstance(origin, str) or not origin:
            raise VmTrap(f"fetch origin must be a non-empty string, got {origin!r}")
        known = self.config.origins
        if known and origin != self.config.origin and origin not in known:
            raise UnknownOrigin(f"unknown origin {origin!r}")
        size = self._magnitude(size, "fetch size")
        cb = callable_ref(fn, frame.program)
        kind = RfKind.NETWORK_SAME if origin == self.config.origin else RfKind.NETWORK_CROSS
        f = self._spawn(frame, kind, FrameRequest(magnitude=size, origin=origin, callback=cb))
        self._record_spawn(frame, f)
        return f.id

    def builtin_secret_sync(self, frame: MainFrame, work: Any) -> Any:
        """A blocking DOM operation: the task waits for it in place."""
        work = self._magnitude(work, "work")
        f = self._spawn(frame, RfKind.DOM_OP, FrameRequest(magnitude=work))
        self._record_spawn(frame, f)
        self.physical.advance_to(f.physical_completion)
        complete(f, self.physical.now)
        if f.placeholder is not None:
            frame.queue.cancel_placeholder(f.placeholder)
            frame.clock.fast_forward(max(frame.clock.read_now(), f.expected_delivery))
        self.trace.records.append(TraceRecord(
            "deliver", frame.main_now(), self.physical.now, frame.id,
            {"case": "sync", "aux": f.id, "kind": f.kind.value, "fn": None, "stamp": None},
        ))
        return UNIT

    def builtin_secret_async(self, frame: MainFrame, work: Any, fn: Any) -> int:
        work = self._magnitude(work, "work")
        cb = callable_ref(fn, frame.program)
        f = self._spawn(frame, RfKind.COMPUTE_SECRET, FrameRequest(magnitude=work, callback=cb))
        self._record_spawn(frame, f)
        return f.id

    def builtin_request_frame(self, frame: MainFrame, fn: Any) -> int:
        cb = callable_ref(fn, frame.program)
        f = self._spawn(frame, RfKind.VIDEO_FRAME, FrameRequest(callback=cb))
        self._record_spawn(frame, f)
        return f.id

    def builtin_post(self, frame: MainFrame, target: Any, value: Any) -> Any:
        receiver = self._frame(target)
        self.send_cross_frame(CrossFrameMessage(frame.id, receiver.id, value, frame.main_now()))
        return UNIT

    def send_cross_frame(self, msg: CrossFrameMessage) -> None:
        self._frame(msg.sender)
        receiver = self._frame(msg.receiver)
        d = Delivery("message", MESSAGE_HANDLER, msg.payload, sent_at=msg.sent_at)
        if self.legacy:
            receiver.queue.attach_physical(d, self.physical.now)
            return
        r_now = receiver.clock.read_now()
        if msg.sent_at > r_now:
            receiver.queue.push_event(msg.sent_at, d)
        else:
            receiver.queue.push_front(r_now, d)

    # -- delivery --

    def _deliver(self, frame: MainFrame, decision: DeliverFastForward | DeliverInPlace | None, d: Delivery) -> None:
        case: Any = decision.case if decision is not None else "replay"
        if decision is not None:
            frame.queue.commit(decision)
        f = self.aux.get(d.aux) if d.aux is not None else None
        if f is not None and f.timer_id is not None and f.timer_id in self._cleared:
            return  # cleared after it was filled: dropped, clock untouched
        if isinstance(decision, DeliverFastForward) and not self.legacy:
            frame.clock.fast_forward(decision.target)

        self.deliveries += 1
        main = frame.main_now()
        stamp = None
        payload = d.payload
        if d.replayed_stamp is not None:
            stamp = d.replayed_stamp
        elif d.physical and not self.legacy:
            stamp = self.physical.now
            if d.kind == RfKind.NETWORK_SAME.value:
                payload = stamp
            self.input_log.entries.append(
                LoggedInput(self.deliveries, d.aux or 0, frame.id, d.kind, d.callback, stamp, payload)
            )
        elif d.physical and d.kind == RfKind.NETWORK_SAME.value:
            payload = self.physical.now

        detail: dict[str, Any] = {"case": case, "aux": d.aux, "kind": d.kind, "fn": d.callback, "stamp": stamp}
        if d.sent_at is not None:
            detail["sent_at"] = d.sent_at
        self.trace.records.append(TraceRecord("deliver", main, self.physical.now, frame.id, detail))
        self.delivery_stamps.append(DeliveryStamp(frame.id, d.kind, main, self.physical.now))

        if f is not None and f.repeating:
            self._rearm(frame, f)

        if d.kind == "task":
            run_task(frame.vm, None, (), self._handler(frame))
            return
        if d.callback is None or d.callback not in frame.program.functions:
            return  # no handler for this event
        arity = frame.program.functions[d.callback].arity
        if arity > 1:
            raise VmTrap(f"callback {d.callback} must take at most one argument")
        args = (payload,) if arity == 1 else ()
        run_task(frame.vm, d.callback, args, self._handler(frame))

    def _rearm(self, frame: MainFrame, prev: AuxFrame) -> None:
        delay = prev.request.delay or 0
        aid = self._next_aux
        self._next_aux += 1
        phys_completion = prev.physical_completion + delay
        expected = None if self.legacy else (prev.expected_delivery or 0) + delay
        f = AuxFrame(
            id=aid, kind=RfKind.TIMER, request=prev.request,
            t_init=frame.main_now(), spawn_physical=self.physical.now,
            physical_completion=phys_completion, expected_delivery=expected,
            owner=frame.id, timer_id=prev.timer_id, repeating=True,
        )
        f.meta["replay_owned"] = False
        self.aux[aid] = f
        self._timers[f.timer_id] = f
        heapq.heappush(self._live, (phys_completion, aid))
        if expected is not None:
            f.placeholder = frame.queue.push_placeholder(expected)
            self._by_placeholder[(frame.id, f.placeholder)] = f
        self._record_spawn(frame, f, rearm_of=prev.id)

    def _replay_due(self) -> LoggedInput | None:
        if self.replay is None or self._replay_pos >= len(self.replay.entries):
            return None
        e = self.replay.entries[self._replay_pos]
        return e if e.ordinal == self.deliveries + 1 else None

    def _deliver_replayed(self, e: LoggedInput) -> None:
        self._replay_pos += 1
        frame = self._frame(e.owner)
        f = self.aux.get(e.aux)
        if f is None or f.kind.value != e.kind or not f.meta.get("replay_owned"):
            raise VmTrap(f"replay diverged at delivery {e.ordinal}: no matching frame {e.aux}")
        f.completed = True
        if e.stamp < frame.clock.read_now():
            raise VmTrap(f"replay diverged at delivery {e.ordinal}: stamp behind main clock")
        frame.clock.fast_forward(e.stamp)
        self.physical.advance_to(e.stamp)
        self._deliver(frame, None, Delivery(e.kind, e.callback, e.payload, e.aux, physical=True, replayed_stamp=e.stamp))

    # -- main loop --

    def run(self, physical_budget: int | None = None) -> Trace:
        if not self.frames:
            raise NotRun("no script loaded")
        if self.finished:
            raise RuntimeError("runtime already ran")
        budget = physical_budget if physical_budget is not None else self.config.physical_budget
        for at, value, fid in self._pending_inputs:
            owner = self.frames[fid]
            f = self._spawn(owner, RfKind.USER_INPUT, FrameRequest(at=at, payload=value, callback=INPUT_HANDLER), 0)
            self._record_spawn(owner, f)
        self._pending_inputs = []

        while True:
            if budget is not None and self.physical.now > budget:
                raise PhysicalBudgetExceeded(f"physical clock {self.physical.now} passed budget {budget}")
            due = self._replay_due()
            if due is not None:
                self._deliver_replayed(due)
                continue
            self._complete_ready()
            phys = self.physical.now

            best: tuple[int, int, MainFrame, Any] | None = None
            targets: list[int] = []
            for frame in self.frames:
                main = -1 if self.legacy else frame.clock.read_now()
                dec = frame.queue.next(main, phys)
                if isinstance(dec, (DeliverFastForward, DeliverInPlace)):
                    when = dec.target if isinstance(dec, DeliverFastForward) else main
                    if best is None or (when, frame.id) < best[:2]:
                        best = (when, frame.id, frame, dec)
                elif isinstance(dec, WaitPlaceholder):
                    targets.append(self._by_placeholder[(frame.id, dec.id)].physical_completion)
                elif isinstance(dec, StallUntilPhysicalAhead):
                    targets.append(main + 1)
                else:
                    assert isinstance(dec, Empty)
                    front = frame.queue.peek()
                    if front is not None:
                        targets.append(front.priority)

            if best is not None:
                _, _, frame, dec = best
                self._deliver(frame, dec, dec.event)
                continue
            live = self._live_frames()
            if not live and all(f.queue.is_idle() for f in self.frames) and self._replay_due() is None:
                if self.replay is not None and self._replay_pos < len(self.replay.entries):
                    raise VmTrap("replay diverged: logged inputs left over")
                break
            if live:
                targets.append(self._live[0][0])
            targets = [t for t in targets if t > phys]
            if targets:
                self.physical.advance_to(min(targets))
                continue
            if self.replay is not None and self._replay_pos < len(self.replay.entries):
                raise VmTrap("replay diverged: logged inputs left over")
            break

        self.finished = True
        return self.trace

    # -- reporting --

    def oracle_report(self) -> OracleReport:
        if not self.finished:
            raise NotRun("run() has not completed")
        return OracleReport(
            physical_total=self.physical.now,
            main_totals={f.id: f.main_now() for f in self.frames},
            deliveries=tuple(self.delivery_stamps),
            outputs=tuple(self.outputs),
            opcodes=sum(f.vm.executed for f in self.frames),
        )

    def observer_outputs(self, frame: int = 0) -> list[Any]:
        return [o[3] for o in self.outputs if o[0] == frame]


def new_runtime(config: RuntimeConfig | None = None, profile: EnvironmentProfile | None = None) -> Runtime:
    return Runtime(config, profile)


def run_source(
    source: str,
    config: RuntimeConfig | None = None,
    profile: EnvironmentProfile | None = None,
    inputs: Mapping[str, Any] | None = None,
    replay: InputLog | None = None,
) -> Runtime:
    """Load, run and return a runtime for a single-frame script."""
    rt = Runtime(config, profile, replay)
    rt.load(source, inputs)
    rt.run()
    return rt
