"""Timing-attack scenarios and a set-disjointness distinguisher.

Each scenario is a script (or one script per main frame) plus the inputs it
is run with. One input may be designated the *secret*; a scenario is run
once per secret value and once per run index, and each run yields a single
integer measurement taken from the observer's outputs.

Two profiles are told apart when the multisets of measurements they produce
share no value. There is no statistics here: in deterministic mode the claim
is exact equality, so plain disjointness is the right test.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Iterable, Mapping, Sequence

from detloop.runtime import Runtime, RuntimeConfig
from detloop.vmclock import ClockMode, EnvironmentProfile, machine_profile

CROSS_ORIGIN = "https://cdn.other.example"


def script_source(name: str) -> str:
    return resources.files("detloop").joinpath("scripts", name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class AttackScenario:
    name: str
    scripts: tuple[str, ...]
    params: Mapping[str, Any] = field(default_factory=dict)
    secret: str | None = None
    secrets: tuple[Any, ...] = ()
    # which main frame's outputs hold the measurement, and which output
    observer: int = 0
    extract: int = -1
    # params that only some frames declare
    frame_params: tuple[tuple[str, ...], ...] | None = None

    @property
    def sources(self) -> tuple[str, ...]:
        return tuple(script_source(s) for s in self.scripts)

    @property
    def source(self) -> str:
        return self.sources[0]

    def with_params(self, **params: Any) -> AttackScenario:
        merged = dict(self.params)
        secrets = self.secrets
        for k, v in params.items():
            if k == self.secret and isinstance(v, (list, tuple)):
                secrets = tuple(v)
            else:
                merged[k] = v
        return replace(self, params=merged, secrets=secrets)

    def secret_values(self) -> tuple[Any, ...]:
        return self.secrets if self.secret is not None else (None,)

    def inputs_for(self, frame: int, secret: Any) -> dict[str, Any]:
        inputs = dict(self.params)
        if self.secret is not None:
            inputs[self.secret] = secret
        if self.frame_params is not None:
            inputs = {k: v for k, v in inputs.items() if k in self.frame_params[frame]}
        return inputs


SCENARIOS: dict[str, AttackScenario] = {
    s.name: s
    for s in (
        AttackScenario("clock-edge", ("fig1_sync.ds",)),
        AttackScenario(
            "clock-edge-modified", ("clock_edge_modified.ds",), {"loops": 15_000, "repeats": 3}
        ),
        AttackScenario(
            "async-interval", ("fig1_async.ds",), {"u": 30_000}, secret="work", secrets=(2_000, 20_000)
        ),
        AttackScenario(
            "resource-size",
            ("resource_size.ds",),
            {"target": CROSS_ORIGIN},
            secret="size",
            secrets=(100_000, 2_000_000, 5_000_000),
        ),
        AttackScenario(
            "compute-filter",
            ("compute_filter.ds",),
            {"period": 16_666_667},
            secret="work",
            secrets=(40_000, 2_073_600),
        ),
        AttackScenario(
            "covert-channel",
            ("covert_sender.ds", "covert_receiver.ds"),
            secret="work",
            secrets=(0, 100_000),
            observer=1,
            frame_params=(("work",), ()),
        ),
        AttackScenario(
            "sync-side-channel",
            ("fig1_sync_sidechannel.ds",),
            {"grain": 100_000},
            secret="work",
            secrets=(10, 100_000),
        ),
        AttackScenario("sync-secret", ("sync_secret.ds",), secret="work", secrets=(10, 10_000)),
    )
}

# the scenarios of the robustness table, plus the covert channel
MATRIX = (
    "clock-edge",
    "clock-edge-modified",
    "async-interval",
    "resource-size",
    "compute-filter",
    "covert-channel",
)


def standard_profiles() -> list[EnvironmentProfile]:
    return [machine_profile(1), machine_profile(3), machine_profile(2, jitter=1, seed=7)]


def get_scenario(name: str) -> AttackScenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(SCENARIOS))}") from None


class RuntimeFactory:
    """Builds fresh runtimes for one mode/config; one runtime per run."""

    def __init__(self, config: RuntimeConfig | None = None, mode: ClockMode | str | None = None) -> None:
        config = config or RuntimeConfig(trace_opcodes=False)
        if mode is not None:
            config = config.with_mode(mode)
        self.config = config

    @property
    def mode(self) -> ClockMode:
        return self.config.mode

    def __call__(self, profile: EnvironmentProfile) -> Runtime:
        return Runtime(self.config, profile)


def run_scenario(
    scenario: AttackScenario,
    factory: RuntimeFactory,
    profile: EnvironmentProfile,
    secret: Any = None,
) -> int:
    rt = factory(profile)
    for i, src in enumerate(scenario.sources):
        rt.add_main_frame(src, scenario.inputs_for(i, secret))
    rt.run()
    outs = rt.observer_outputs(scenario.observer)
    return outs[scenario.extract]


@dataclass(frozen=True)
class Measurement:
    run: int
    secret: Any
    value: int


@dataclass(frozen=True)
class AttackReport:
    scenario: str
    mode: str
    profile: str
    runs: tuple[Measurement, ...]

    @property
    def values(self) -> list[int]:
        return [m.value for m in self.runs]

    @property
    def distinguishable(self) -> bool:
        """Whether the secret values are told apart: per-secret groups disjoint."""
        groups: dict[Any, set[int]] = {}
        for m in self.runs:
            groups.setdefault(m.secret, set()).add(m.value)
        sets = list(groups.values())
        if len(sets) < 2:
            return False
        return all(a.isdisjoint(b) for i, a in enumerate(sets) for b in sets[i + 1:])

    @property
    def constant(self) -> bool:
        return len(set(self.values)) == 1

    def summary(self) -> dict[str, Any]:
        v = self.values
        return {"min": min(v), "max": max(v), "median": statistics.median(v), "n": len(v)}

    def records(self) -> list[dict[str, Any]]:
        return [
            {"scenario": self.scenario, "mode": self.mode, "profile": self.profile, "run": m.run, "value": m.value}
            for m in self.runs
        ]


def attack(
    scenario: AttackScenario | str,
    factory: RuntimeFactory,
    profile: EnvironmentProfile,
    runs: int = 1,
    seed: int | None = None,
) -> AttackReport:
    """Run ``scenario`` ``runs`` times per secret value under ``profile``.

    With ``seed`` set, run ``i`` uses jitter seed ``seed + i``.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if isinstance(scenario, str):
        scenario = get_scenario(scenario)
    out = []
    n = 0
    for r in range(runs):
        p = profile if seed is None else profile.with_seed(seed + r)
        for secret in scenario.secret_values():
            out.append(Measurement(n, secret, run_scenario(scenario, factory, p, secret)))
            n += 1
    return AttackReport(scenario.name, factory.mode.value, profile.name, tuple(out))


def disjoint(a: Iterable[int], b: Iterable[int]) -> bool:
    return set(a).isdisjoint(set(b))


def distinguish(
    scenario: AttackScenario | str,
    profile_a: EnvironmentProfile,
    profile_b: EnvironmentProfile,
    runs: int = 1,
    factory: RuntimeFactory | None = None,
) -> tuple[bool, AttackReport, AttackReport]:
    """True iff the two profiles' measurement multisets share no value."""
    factory = factory or RuntimeFactory()
    ra = attack(scenario, factory, profile_a, runs)
    rb = attack(scenario, factory, profile_b, runs)
    return disjoint(ra.values, rb.values), ra, rb


# -- named entry points --------------------------------------------------------


def attack_clock_edge(factory: RuntimeFactory, profile: EnvironmentProfile) -> AttackReport:
    return attack("clock-edge", factory, profile)


def attack_clock_edge_modified(
    factory: RuntimeFactory, profile: EnvironmentProfile, repeats: int = 3, loops: int = 15_000
) -> AttackReport:
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    s = get_scenario("clock-edge-modified").with_params(repeats=repeats, loops=loops)
    return attack(s, factory, profile)


def attack_async_interval(
    factory: RuntimeFactory, profile: EnvironmentProfile, u: int = 30_000, work: Sequence[int] | int = (2_000,)
) -> AttackReport:
    if u <= 0:
        raise ValueError("u must be positive")
    works = (work,) if isinstance(work, int) else tuple(work)
    s = get_scenario("async-interval").with_params(u=u, work=works)
    return attack(s, factory, profile)


def attack_resource_size(
    factory: RuntimeFactory,
    profile: EnvironmentProfile,
    origin: str = CROSS_ORIGIN,
    sizes: Sequence[int] = (100_000, 2_000_000, 5_000_000),
) -> AttackReport:
    if not sizes or any(s < 0 for s in sizes):
        raise ValueError("sizes must be non-empty and non-negative")
    s = get_scenario("resource-size").with_params(target=origin, size=tuple(sizes))
    return attack(s, factory, profile)


def attack_compute_filter(
    factory: RuntimeFactory, profile: EnvironmentProfile, works: Sequence[int] = (40_000, 2_073_600)
) -> AttackReport:
    if not works:
        raise ValueError("works must be non-empty")
    s = get_scenario("compute-filter").with_params(work=tuple(works))
    return attack(s, factory, profile)


# -- matrix ------------------------------------------------------------------------


def run_matrix(
    scenarios: Sequence[str],
    modes: Sequence[str],
    profiles: Sequence[EnvironmentProfile],
    runs: int = 1,
    seed: int | None = None,
    config: RuntimeConfig | None = None,
) -> list[AttackReport]:
    reports = []
    base = config or RuntimeConfig(trace_opcodes=False)
    for name in scenarios:
        sc = get_scenario(name)
        for mode in modes:
            factory = RuntimeFactory(base, mode)
            for p in profiles:
                reports.append(attack(sc, factory, p, runs, seed))
    return reports


def matrix_verdicts(reports: Sequence[AttackReport]) -> dict[tuple[str, str], bool]:
    """(scenario, mode) -> robust.

    A cell is vulnerable when some pair of profiles is told apart, or when
    some profile tells its secret values apart.
    """
    cells: dict[tuple[str, str], list[AttackReport]] = {}
    for r in reports:
        cells.setdefault((r.scenario, r.mode), []).append(r)
    verdicts = {}
    for key, rs in cells.items():
        verdicts[key] = not any(r.distinguishable for r in rs) and not any(
            disjoint(a.values, b.values) for i, a in enumerate(rs) for b in rs[i + 1:]
        )
    return verdicts


def reports_to_jsonl(reports: Iterable[AttackReport]) -> str:
    recs = [rec for r in reports for rec in r.records()]
    recs.sort(key=lambda d: (d["scenario"], d["mode"], d["profile"], d["run"]))
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in recs)


