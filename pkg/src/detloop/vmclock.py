"""Clocks and the simulated machine they run on.

All clocks count integer ticks of one shared resolution (think nanoseconds).
Nothing here reads the host's wall clock: physical time only moves when the
runtime charges an opcode cost, a service time, or an explicit wait.

Jitter generator
----------------
Jitter comes from xorshift64* seeded through one splitmix64 step, which is
specified here so any implementation can reproduce it bit-for-bit::

    state = splitmix64(seed)          # mixes seed; 0 is a valid seed
    next():
        state ^= state >> 12
        state ^= (state << 25) mod 2**64
        state ^= state >> 27
        return (state * 0x2545F4914F6CDD1D) mod 2**64

    splitmix64(x):
        z = (x + 0x9E3779B97F4A7C15) mod 2**64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) mod 2**64
        return z ^ (z >> 31)               # 0 is remapped to 1

A jitter draw with amplitude ``a > 0`` is ``next() % (2a + 1) - a``.
Amplitude 0 draws nothing, so a jitter-free profile never touches the stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Mapping

from detloop.errors import ClockOverflow, ConfigError, TargetInPast
from detloop.lang.compiler import Op

U64_MAX = 2**64 - 1
_MASK = U64_MAX

VirtualTime = int


def checked(ticks: int) -> VirtualTime:
    if not 0 <= ticks <= U64_MAX:
        raise ClockOverflow(f"time {ticks} outside unsigned 64-bit range")
    return ticks


# --------------------------------------------------------------------------
# deterministic main clock
# --------------------------------------------------------------------------


@dataclass
class DeterministicClock:
    """``now = t_start + count * unit``.

    ``tick`` and ``fast_forward`` mutate in place; the module-level functions
    of the same names return updated copies instead.
    """

    t_start: int = 0
    count: int = 0
    unit: int = 1

    def __post_init__(self) -> None:
        if self.unit <= 0:
            raise ValueError("unit must be a positive integer")
        checked(self.t_start)
        checked(self.count)
        self.read_now()

    def read_now(self) -> VirtualTime:
        return checked(self.t_start + self.count * self.unit)

    def tick(self) -> None:
        count = self.count + 1
        if count > U64_MAX or self.t_start + count * self.unit > U64_MAX:
            raise ClockOverflow("opcode counter overflow")
        self.count = count

    def fast_forward(self, target: VirtualTime) -> None:
        now = self.read_now()
        if target < now:
            raise TargetInPast(now, target)
        checked(target)
        # t_start absorbs the jump so now == t_start + count*unit still holds
        self.t_start = target - self.count * self.unit


def tick_opcode(clock: DeterministicClock) -> DeterministicClock:
    new = replace(clock)
    new.tick()
    return new


def read_now(clock: DeterministicClock) -> VirtualTime:
    return clock.read_now()


def fast_forward(clock: DeterministicClock, target: VirtualTime) -> DeterministicClock:
    new = replace(clock)
    new.fast_forward(target)
    return new


@dataclass
class PhysicalClock:
    now: int = 0

    def advance(self, ticks: int) -> VirtualTime:
        if ticks < 0:
            raise ValueError("physical time never decreases")
        self.now = checked(self.now + ticks)
        return self.now

    def advance_to(self, target: int) -> VirtualTime:
        if target > self.now:
            self.now = checked(target)
        return self.now


def advance_physical(clock: PhysicalClock, ticks: int) -> VirtualTime:
    return clock.advance(ticks)


class ClockMode(Enum):
    DETERMINISTIC = "det"
    LEGACY = "legacy"


def legacy_now(physical_now: int, grain: int) -> VirtualTime:
    """Physical time floored to the legacy clock granularity."""
    return physical_now - physical_now % grain


# --------------------------------------------------------------------------
# jitter
# --------------------------------------------------------------------------


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed: int) -> None:
        self.state = splitmix64(seed & _MASK) or 1

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def jitter(self, amplitude: int) -> int:
        if amplitude <= 0:
            return 0
        return self.next() % (2 * amplitude + 1) - amplitude


# --------------------------------------------------------------------------
# environment profiles
# --------------------------------------------------------------------------

SERVICE_KINDS = ("dom", "network_cross", "network_same", "compute_secret")

# Nominal latencies of a cost-1 machine. Machines built with machine_profile
# scale every entry by their speed factor.
DEFAULT_SERVICES: dict[str, tuple[int, int]] = {
    "dom": (1_000, 10),
    "network_cross": (1_000_000, 100),
    "network_same": (1_000_000, 100),
    "compute_secret": (1_000, 500),
}

OPCODE_KINDS = tuple(op.label for op in Op)


@dataclass(frozen=True)
class Service:
    base: int
    per_unit: int


@dataclass(frozen=True)
class EnvironmentProfile:
    """A simulated machine: opcode costs, service latencies and jitter."""

    opcode_cost: int | Mapping[str, int] = 1
    services: Mapping[str, Service] = field(
        default_factory=lambda: {k: Service(*v) for k, v in DEFAULT_SERVICES.items()}
    )
    jitter: int = 0
    seed: int = 0
    name: str = "default"

    def __post_init__(self) -> None:
        if isinstance(self.opcode_cost, int):
            if self.opcode_cost <= 0:
                raise ConfigError("opcode_cost", "must be a positive integer")
        else:
            for kind, cost in self.opcode_cost.items():
                if kind not in OPCODE_KINDS:
                    raise ConfigError(f"opcode_cost.{kind}", "unknown opcode kind")
                if not isinstance(cost, int) or cost <= 0:
                    raise ConfigError(f"opcode_cost.{kind}", "must be a positive integer")
        for kind, svc in self.services.items():
            if kind not in SERVICE_KINDS:
                raise ConfigError(f"services.{kind}", "unknown service kind")
            if svc.base <= 0:
                raise ConfigError(f"services.{kind}.base", "must be a positive integer")
            if svc.per_unit < 0:
                raise ConfigError(f"services.{kind}.per_unit", "must be non-negative")
        missing = set(SERVICE_KINDS) - set(self.services)
        if missing:
            raise ConfigError("services", f"missing kinds {sorted(missing)}")
        if self.jitter < 0:
            raise ConfigError("jitter", "must be non-negative")

    def cost_table(self) -> tuple[int, ...]:
        """Nominal cost per opcode, indexed by ``Op`` value."""
        if isinstance(self.opcode_cost, int):
            return tuple(self.opcode_cost for _ in Op)
        return tuple(self.opcode_cost.get(op.label, 1) for op in Op)

    def min_opcode_cost(self) -> int:
        """Smallest cost any opcode can be charged once jitter is applied."""
        return max(1, min(self.cost_table()) - self.jitter)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], name: str = "profile") -> EnvironmentProfile:
        known = {"opcode_cost", "services", "jitter", "seed", "name"}
        for key in doc:
            if key not in known:
                raise ConfigError(key, "unknown profile key")
        cost = doc.get("opcode_cost", 1)
        if isinstance(cost, Mapping):
            cost = dict(cost)
        elif not isinstance(cost, int) or isinstance(cost, bool):
            raise ConfigError("opcode_cost", "must be an integer or an object")
        services = {k: Service(*v) for k, v in DEFAULT_SERVICES.items()}
        for kind, spec in dict(doc.get("services", {})).items():
            if not isinstance(spec, Mapping) or set(spec) - {"base", "per_unit"}:
                raise ConfigError(f"services.{kind}", "expected {base, per_unit}")
            default = services.get(kind, Service(1, 0))
            services[kind] = Service(
                int(spec.get("base", default.base)), int(spec.get("per_unit", default.per_unit))
            )
        return cls(
            opcode_cost=cost,
            services=services,
            jitter=int(doc.get("jitter", 0)),
            seed=int(doc.get("seed", 0)),
            name=str(doc.get("name", name)),
        )

    @classmethod
    def load(cls, path: str | Path) -> EnvironmentProfile:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(str(path), "profile must be a JSON object")
        return cls.from_dict(doc, name=path.stem)

    def to_dict(self) -> dict[str, Any]:
        cost = self.opcode_cost if isinstance(self.opcode_cost, int) else dict(self.opcode_cost)
        return {
            "name": self.name,
            "opcode_cost": cost,
            "services": {
                k: {"base": s.base, "per_unit": s.per_unit} for k, s in sorted(self.services.items())
            },
            "jitter": self.jitter,
            "seed": self.seed,
        }

    def with_seed(self, seed: int) -> EnvironmentProfile:
        return replace(self, seed=seed)


def machine_profile(speed: int, jitter: int = 0, seed: int = 0, name: str | None = None) -> EnvironmentProfile:
    """A machine ``speed`` times slower than the nominal one, everywhere."""
    return EnvironmentProfile(
        opcode_cost=speed,
        services={k: Service(b * speed, p * speed) for k, (b, p) in DEFAULT_SERVICES.items()},
        jitter=jitter,
        seed=seed,
        name=name or (f"cost{speed}" + (f"+j{jitter}s{seed}" if jitter else "")),
    )


class Environment:
    """A profile plus its live jitter stream."""

    def __init__(self, profile: EnvironmentProfile) -> None:
        self.profile = profile
        self.rng = XorShift64Star(profile.seed)
        self.costs = profile.cost_table()
        self.amplitude = profile.jitter

    def opcode_cost(self, op: int) -> int:
        base = self.costs[op]
        if not self.amplitude:
            return base
        return max(1, base + self.rng.jitter(self.amplitude))

    def service_time(self, kind: str, magnitude: int) -> int:
        if magnitude < 0:
            raise ValueError("magnitude must be non-negative")
        svc = self.profile.services[kind]
        t = svc.base + magnitude * svc.per_unit
        if self.amplitude:
            t = max(1, t + self.rng.jitter(self.amplitude))
        return t


def opcode_cost(env: Environment, op: Op | int) -> int:
    return env.opcode_cost(int(op))


def service_time(env: Environment, kind: str, magnitude: int) -> int:
    return env.service_time(kind, magnitude)
