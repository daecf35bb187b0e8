"""Auxiliary reference frames and their clock policies.

A deterministic-policy frame knows, at spawn time, the main-clock time at
which its result will be delivered (its *expected delivery*). A physical-time
frame does not; its result reaches the main frame through the physical-clock
holder whenever it physically completes.

WebSpeech- and WebVTT-like sources are not separate kinds: they behave like
``VIDEO_FRAME`` (physical-time clocks, no secret) and are modelled as such.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from detloop.errors import AlreadyCompleted, ConfigError, NotYetComplete, PolicyMismatch
from detloop.vmclock import Environment, checked


class RfKind(Enum):
    MAIN_JS = "main_js"
    TIMER = "timer"
    NETWORK_CROSS = "network_cross"
    NETWORK_SAME = "network_same"
    DOM_OP = "dom"
    COMPUTE_SECRET = "compute_secret"
    VIDEO_FRAME = "video_frame"
    USER_INPUT = "user_input"


class PolicyKind(Enum):
    DETERMINISTIC_CONSTANT = "deterministic_constant"
    DETERMINISTIC_DELAY = "deterministic_delay"
    PHYSICAL_TIME = "physical_time"


@dataclass(frozen=True)
class ClockPolicy:
    kind: PolicyKind
    constant: int = 0

    @property
    def deterministic(self) -> bool:
        return self.kind is not PolicyKind.PHYSICAL_TIME


DEFAULT_RF_CONSTANTS: dict[str, int] = {
    "dom": 10,
    "network_cross": 500_000,
    "compute_secret": 1_000_000,
}
DEFAULT_FRAME_PERIOD = 16_666_667

_CONSTANT_KINDS = {
    RfKind.DOM_OP: "dom",
    RfKind.NETWORK_CROSS: "network_cross",
    RfKind.COMPUTE_SECRET: "compute_secret",
}
PHYSICAL_KINDS = frozenset({RfKind.NETWORK_SAME, RfKind.VIDEO_FRAME, RfKind.USER_INPUT})


def validate_rf_constants(constants: Mapping[str, Any]) -> dict[str, int]:
    merged = dict(DEFAULT_RF_CONSTANTS)
    for key, value in constants.items():
        if key not in DEFAULT_RF_CONSTANTS:
            raise ConfigError(f"rf_constants.{key}", "unknown rf constant")
        if not isinstance(value, int) or isinstance(value, bool) or value <= 0:
            raise ConfigError(f"rf_constants.{key}", "must be a positive integer")
        merged[key] = value
    return merged


def policy_for(kind: RfKind, constants: Mapping[str, int] = DEFAULT_RF_CONSTANTS) -> ClockPolicy:
    if kind in _CONSTANT_KINDS:
        return ClockPolicy(PolicyKind.DETERMINISTIC_CONSTANT, constants[_CONSTANT_KINDS[kind]])
    if kind is RfKind.TIMER:
        return ClockPolicy(PolicyKind.DETERMINISTIC_DELAY)
    if kind in PHYSICAL_KINDS:
        return ClockPolicy(PolicyKind.PHYSICAL_TIME)
    raise ValueError(f"{kind} is not an auxiliary frame kind")


@dataclass(frozen=True)
class FrameRequest:
    """What the main frame asked for. Unused fields stay at their defaults."""

    magnitude: int = 0
    delay: int | None = None
    origin: str | None = None
    callback: str | None = None
    # user input only: scripted physical arrival time and value
    at: int | None = None
    payload: Any = None


@dataclass
class AuxFrame:
    id: int
    kind: RfKind
    request: FrameRequest
    t_init: int
    spawn_physical: int
    physical_completion: int
    expected_delivery: int | None
    owner: int = 0
    placeholder: int | None = None
    completed: bool = False
    # timers: the logical timer this frame serves, and whether it repeats
    timer_id: int | None = None
    repeating: bool = False
    meta: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class CompletionEvent:
    frame_id: int
    kind: RfKind
    callback: str | None
    owner: int
    placeholder: int | None
    physical_time: int | None = None
    payload: Any = None


def spawn(
    frame_id: int,
    kind: RfKind,
    request: FrameRequest,
    main_now: int,
    physical_now: int,
    env: Environment,
    constants: Mapping[str, int] = DEFAULT_RF_CONSTANTS,
    frame_period: int = DEFAULT_FRAME_PERIOD,
) -> AuxFrame:
    if request.magnitude < 0:
        raise ValueError("request magnitude must be non-negative")
    if request.delay is not None and kind is not RfKind.TIMER:
        raise PolicyMismatch(f"{kind.value} frames do not take a delay")
    policy = policy_for(kind, constants)

    if kind is RfKind.TIMER:
        delay = request.delay if request.delay is not None else 0
        if delay < 0:
            raise ValueError("timer delay must be non-negative")
        completion = physical_now + delay
        expected = main_now + delay
    elif kind is RfKind.VIDEO_FRAME:
        completion = (physical_now // frame_period + 1) * frame_period
        expected = None
    elif kind is RfKind.USER_INPUT:
        if request.at is None or request.at < physical_now:
            raise ValueError("user input needs an arrival time not in the past")
        completion = request.at
        expected = None
    else:
        completion = physical_now + env.service_time(_service_key(kind), request.magnitude)
        expected = main_now + policy.constant if policy.deterministic else None

    return AuxFrame(
        id=frame_id,
        kind=kind,
        request=request,
        t_init=main_now,
        spawn_physical=physical_now,
        physical_completion=checked(completion),
        expected_delivery=None if expected is None else checked(expected),
    )


def _service_key(kind: RfKind) -> str:
    return kind.value


def complete(frame: AuxFrame, physical_now: int) -> CompletionEvent:
    if frame.completed:
        raise AlreadyCompleted(f"frame {frame.id} already completed")
    if physical_now < frame.physical_completion:
        raise NotYetComplete(
            f"frame {frame.id} completes at {frame.physical_completion}, now {physical_now}"
        )
    frame.completed = True
    physical = frame.kind in PHYSICAL_KINDS
    return CompletionEvent(
        frame_id=frame.id,
        kind=frame.kind,
        callback=frame.request.callback,
        owner=frame.owner,
        placeholder=frame.placeholder,
        physical_time=frame.physical_completion if physical else None,
        payload=frame.request.payload,
    )
