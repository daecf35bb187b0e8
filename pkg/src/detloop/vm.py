"""Opcode interpreter for a main reference frame.

One call to :func:`exec_step` executes exactly one opcode, ticks the
deterministic clock once, and charges that opcode's physical cost. Builtin
calls are not executed here: the step returns a :class:`BuiltinRequest` and
the owning runtime services it and hands back the result with
:meth:`VmState.resume`. A task runs to completion; nothing else in the
runtime observes the state while it is active.

Value semantics: integers are signed 64-bit and overflow traps; ``/``
truncates toward zero and ``%`` takes the sign of the dividend; ``&&`` and
``||`` evaluate both operands. Truthiness: ``false``, ``0``, ``""`` and unit
are false, everything else is true.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from detloop.errors import StepBudgetExceeded, VmTrap
from detloop.lang.compiler import GLOBAL, INT_MAX, INT_MIN, UNIT, FuncRef, Op, Program
from detloop.vmclock import ClockMode, DeterministicClock, Environment, PhysicalClock, legacy_now

DEFAULT_STEP_BUDGET = 10**8

_PUSH_CONST = int(Op.PUSH_CONST)
_LOAD_VAR = int(Op.LOAD_VAR)
_STORE_VAR = int(Op.STORE_VAR)
_BINARY_OP = int(Op.BINARY_OP)
_UNARY_OP = int(Op.UNARY_OP)
_JUMP = int(Op.JUMP)
_JUMP_IF_FALSE = int(Op.JUMP_IF_FALSE)
_CALL = int(Op.CALL)
_CALL_BUILTIN = int(Op.CALL_BUILTIN)
_RETURN = int(Op.RETURN)
_POP = int(Op.POP)


class _Uninitialized:
    def __repr__(self) -> str:
        return "<uninitialized>"


UNINITIALIZED = _Uninitialized()


@dataclass
class Frame:
    function: str | None
    return_pc: int
    locals: list[Any]
    stack: list[Any] = field(default_factory=list)


@dataclass(frozen=True)
class BuiltinRequest:
    name: str
    args: tuple[Any, ...]


class StepEffect:
    CONTINUE = "continue"
    TASK_DONE = "task-done"


OpHook = Callable[[int, int], None]


def truthy(v: Any) -> bool:
    if v is True or v is False:
        return v
    if v is UNIT or v is None:
        return False
    if isinstance(v, (int, str)):
        return bool(v)
    return True


def _int(v: Any, pc: int) -> int:
    if type(v) is not int:
        raise VmTrap(f"expected an integer, got {v!r}", pc)
    return v


def _fit(v: int, pc: int) -> int:
    if v < INT_MIN or v > INT_MAX:
        raise VmTrap("integer overflow", pc)
    return v


def binary(op: str, a: Any, b: Any, pc: int = -1) -> Any:
    if op == "==":
        return type(a) is type(b) and a == b
    if op == "!=":
        return not (type(a) is type(b) and a == b)
    if op == "&&":
        return truthy(a) and truthy(b)
    if op == "||":
        return truthy(a) or truthy(b)
    x, y = _int(a, pc), _int(b, pc)
    if op == "+":
        return _fit(x + y, pc)
    if op == "-":
        return _fit(x - y, pc)
    if op == "*":
        return _fit(x * y, pc)
    if op == "/" or op == "%":
        if y == 0:
            raise VmTrap("division by zero", pc)
        q = abs(x) // abs(y)
        if (x < 0) != (y < 0):
            q = -q
        return _fit(q, pc) if op == "/" else x - q * y
    if op == "<":
        return x < y
    if op == "<=":
        return x <= y
    if op == ">":
        return x > y
    if op == ">=":
        return x >= y
    raise VmTrap(f"unknown binary operator {op!r}", pc)


def unary(op: str, a: Any, pc: int = -1) -> Any:
    if op == "-":
        return _fit(-_int(a, pc), pc)
    if op == "!":
        return not truthy(a)
    raise VmTrap(f"unknown unary operator {op!r}", pc)


class VmState:
    def __init__(
        self,
        program: Program,
        clock: DeterministicClock,
        physical: PhysicalClock,
        env: Environment,
        mode: ClockMode = ClockMode.DETERMINISTIC,
        grain: int = 1,
        inputs: dict[str, Any] | None = None,
        step_budget: int = DEFAULT_STEP_BUDGET,
    ) -> None:
        self.program = program
        self.clock = clock
        self.physical = physical
        self.env = env
        self.mode = mode
        self.grain = grain
        self.step_budget = step_budget
        self.globals: list[Any] = [UNINITIALIZED] * len(program.globals)
        inputs = dict(inputs or {})
        for name in program.inputs:
            if name not in inputs:
                raise VmTrap(f"missing input {name!r}")
            self.globals[program.globals.index(name)] = inputs.pop(name)
        if inputs:
            raise VmTrap(f"unexpected inputs {sorted(inputs)}")
        self.frames: list[Frame] = []
        self.pc = 0
        self.active = False
        self.top_level = False
        self.result: Any = None
        self.task_steps = 0
        self.executed = 0
        self.pending_builtin: BuiltinRequest | None = None
        self.outputs: list[tuple[int, int, Any]] = []
        self.on_op: OpHook | None = None
        costs = env.costs
        self._flat_cost = costs[0] if not env.amplitude and len(set(costs)) == 1 else None

    # -- task control --

    def start_task(self, entry: str | None, args: tuple[Any, ...] = ()) -> None:
        if self.active:
            raise RuntimeError("a task is already active")
        if entry is None:
            self.frames = [Frame(None, -1, [])]
            self.pc = 0
            self.top_level = True
        else:
            info = self.program.functions.get(entry)
            if info is None:
                raise VmTrap(f"unknown function {entry!r}")
            if len(args) != info.arity:
                raise VmTrap(f"{entry} expects {info.arity} argument(s), got {len(args)}")
            self.frames = [Frame(entry, -1, list(args) + [UNIT] * (info.nlocals - info.arity))]
            self.pc = info.entry
            self.top_level = False
        self.active = True
        self.result = None
        self.task_steps = 0
        self.pending_builtin = None
        if self.top_level and self.pc >= self.program.main_end:
            self._finish(UNIT)

    def _finish(self, value: Any) -> None:
        self.active = False
        self.result = value
        self.frames = []

    def resume(self, value: Any) -> None:
        """Supply the result of the builtin the last step requested."""
        if self.pending_builtin is None:
            raise RuntimeError("no builtin request outstanding")
        self.pending_builtin = None
        self.frames[-1].stack.append(value)
        if self.top_level and len(self.frames) == 1 and self.pc >= self.program.main_end:
            self._finish(UNIT)

    # -- clocks seen by the script --

    def now(self) -> int:
        if self.mode is ClockMode.LEGACY:
            return legacy_now(self.physical.now, self.grain)
        return self.clock.read_now()

    def charge(self, op: int) -> None:
        cost = self._flat_cost
        if cost is None:
            cost = self.env.opcode_cost(op)
        self.physical.advance(cost)


def exec_step(state: VmState) -> str | BuiltinRequest:
    """Execute one opcode of the active task."""
    if not state.active:
        raise RuntimeError("no active task")
    if state.pending_builtin is not None:
        raise RuntimeError("builtin request not yet serviced")
    if state.task_steps >= state.step_budget:
        raise StepBudgetExceeded(f"task exceeded {state.step_budget} opcodes")

    program = state.program
    pc = state.pc
    if not 0 <= pc < len(program.code):
        raise VmTrap("pc out of range", pc)
    op, arg = program.code[pc]
    op = int(op)

    if state.on_op is not None:
        state.on_op(pc, op)
    state.clock.tick()
    state.charge(op)
    state.task_steps += 1
    state.executed += 1

    frame = state.frames[-1]
    stack = frame.stack
    next_pc = pc + 1
    try:
        if op == _PUSH_CONST:
            stack.append(program.constants[arg])
        elif op == _LOAD_VAR:
            scope, slot = arg
            v = state.globals[slot] if scope == GLOBAL else frame.locals[slot]
            if v is UNINITIALIZED:
                raise VmTrap(f"global {program.globals[slot]!r} read before assignment", pc)
            stack.append(v)
        elif op == _STORE_VAR:
            scope, slot = arg
            v = stack.pop()
            if scope == GLOBAL:
                state.globals[slot] = v
            else:
                frame.locals[slot] = v
        elif op == _BINARY_OP:
            b = stack.pop()
            a = stack.pop()
            stack.append(binary(arg, a, b, pc))
        elif op == _UNARY_OP:
            stack.append(unary(arg, stack.pop(), pc))
        elif op == _JUMP:
            next_pc = arg
        elif op == _JUMP_IF_FALSE:
            if not truthy(stack.pop()):
                next_pc = arg
        elif op == _CALL:
            name, argc = arg
            info = program.functions[name]
            args = stack[len(stack) - argc:] if argc else []
            del stack[len(stack) - argc:]
            state.frames.append(Frame(name, next_pc, args + [UNIT] * (info.nlocals - argc)))
            next_pc = info.entry
        elif op == _CALL_BUILTIN:
            name, argc = arg
            args = tuple(stack[len(stack) - argc:]) if argc else ()
            del stack[len(stack) - argc:]
            req = BuiltinRequest(name, args)
            state.pending_builtin = req
            state.pc = next_pc
            return req
        elif op == _RETURN:
            value = stack.pop()
            state.frames.pop()
            if not state.frames:
                state.pc = next_pc
                state._finish(value)
                return StepEffect.TASK_DONE
            next_pc = frame.return_pc
            state.frames[-1].stack.append(value)
        elif op == _POP:
            stack.pop()
        else:
            raise VmTrap(f"bad opcode {op}", pc)
    except IndexError:
        raise VmTrap("operand stack underflow", pc) from None

    if not 0 <= next_pc <= len(program.code):
        raise VmTrap(f"bad jump target {next_pc}", pc)
    state.pc = next_pc
    if state.top_level and len(state.frames) == 1 and next_pc >= program.main_end:
        state._finish(UNIT)
        return StepEffect.TASK_DONE
    return StepEffect.CONTINUE


BuiltinHandler = Callable[[VmState, BuiltinRequest], Any]


def run_task(
    state: VmState,
    entry: str | None,
    args: tuple[Any, ...],
    handler: BuiltinHandler,
) -> Any:
    """Run one task to completion, servicing builtins through ``handler``."""
    state.start_task(entry, args)
    while state.active:
        effect = exec_step(state)
        if isinstance(effect, BuiltinRequest):
            state.resume(handler(state, effect))
    return state.result


def builtin_now(state: VmState) -> int:
    return state.now()


def builtin_output(state: VmState, value: Any) -> Any:
    state.outputs.append((state.now(), state.physical.now, value))
    return UNIT


def callable_ref(value: Any, program: Program) -> str:
    if not isinstance(value, FuncRef) or value.name not in program.functions:
        raise VmTrap(f"expected a function reference, got {value!r}")
    return value.name
