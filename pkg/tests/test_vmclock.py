import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from detloop.errors import ClockOverflow, ConfigError, TargetInPast
from detloop.lang import Op
from detloop.vmclock import (
    U64_MAX,
    DeterministicClock,
    Environment,
    EnvironmentProfile,
    PhysicalClock,
    XorShift64Star,
    fast_forward,
    legacy_now,
    machine_profile,
    read_now,
    service_time,
    splitmix64,
    tick_opcode,
)

# First five outputs for seed 42, produced by a separate ctypes/c_uint64
# implementation of splitmix64 + xorshift64*.
SEED42 = [
    3580622183945639842,
    10378725325292465923,
    8967075514996744559,
    5001014893397904463,
    14825054885549601002,
]


def test_tick_and_read():
    c = DeterministicClock(t_start=100, count=0, unit=5)
    for _ in range(3):
        c = tick_opcode(c)
    assert read_now(c) == 115


def test_fast_forward_preserves_equation():
    c = fast_forward(DeterministicClock(0, 4, 2), 50)
    assert c.read_now() == 50
    assert c.t_start + c.count * c.unit == 50 and c.count == 4


def test_fast_forward_to_now_is_noop():
    c = DeterministicClock(0, 3, 1)
    assert fast_forward(c, 3) == c


def test_fast_forward_into_past():
    with pytest.raises(TargetInPast):
        fast_forward(DeterministicClock(0, 10, 1), 9)


def test_overflow_is_an_error():
    c = DeterministicClock(U64_MAX - 1, 0, 1)
    c = tick_opcode(c)
    with pytest.raises(ClockOverflow):
        tick_opcode(c)
    with pytest.raises(ClockOverflow):
        fast_forward(DeterministicClock(), U64_MAX + 1)


@given(st.integers(0, 10**6), st.integers(1, 100), st.lists(st.integers(0, 1000), max_size=20))
def test_clock_value_is_start_plus_count_times_unit(t0, unit, steps):
    c = DeterministicClock(t0, 0, unit)
    for s in steps:
        if s % 3 == 0:
            c = fast_forward(c, c.read_now() + s)
        else:
            c = tick_opcode(c)
        assert c.read_now() == c.t_start + c.count * c.unit


def test_physical_clock_only_moves_forward():
    p = PhysicalClock()
    p.advance(5)
    assert p.advance_to(3) == 5
    assert p.advance_to(9) == 9
    with pytest.raises(ValueError):
        p.advance(-1)


def test_legacy_now_floors_to_grain():
    assert legacy_now(123_456, 100_000) == 100_000
    assert legacy_now(99_999, 100_000) == 0


def test_jitter_stream_matches_reference():
    r = XorShift64Star(42)
    assert [r.next() for _ in range(5)] == SEED42


def test_splitmix_zero_seed_is_usable():
    assert XorShift64Star(0).state == (splitmix64(0) or 1)
    assert XorShift64Star(0).next() != 0


def test_jitter_draw_range_and_zero_amplitude():
    r = XorShift64Star(42)
    assert [r.jitter(1) for _ in range(5)] == [x % 3 - 1 for x in SEED42]
    untouched = XorShift64Star(42)
    assert untouched.jitter(0) == 0
    assert untouched.next() == SEED42[0]


def test_profile_without_jitter_has_exact_costs():
    env = Environment(EnvironmentProfile(opcode_cost={"call_builtin": 7}))
    assert env.opcode_cost(int(Op.CALL_BUILTIN)) == 7
    assert env.opcode_cost(int(Op.POP)) == 1
    assert service_time(env, "dom", 3) == 1000 + 3 * 10


def test_jittered_profile_is_reproducible():
    p = machine_profile(2, jitter=1, seed=7)
    a, b = Environment(p), Environment(p)
    xs = [a.opcode_cost(0) for _ in range(50)]
    assert xs == [b.opcode_cost(0) for _ in range(50)]
    assert set(xs) <= {1, 2, 3} and len(set(xs)) > 1


def test_machine_profile_scales_everything():
    p = machine_profile(3)
    assert p.cost_table() == (3,) * len(Op)
    assert Environment(p).service_time("network_cross", 10) == 3 * (1_000_000 + 10 * 100)
    assert p.name == "cost3"
    assert machine_profile(2, jitter=1, seed=7).name == "cost2+j1s7"


@pytest.mark.parametrize(
    "doc,path",
    [
        ({"opcode_cost": 0}, "opcode_cost"),
        ({"opcode_cost": {"frobnicate": 1}}, "opcode_cost.frobnicate"),
        ({"jitter": -1}, "jitter"),
        ({"services": {"dom": {"base": 0}}}, "services.dom.base"),
        ({"colour": "red"}, "colour"),
    ],
)
def test_profile_validation_paths(doc, path):
    with pytest.raises(ConfigError) as info:
        EnvironmentProfile.from_dict(doc)
    assert info.value.path == path


def test_profile_file_roundtrip(tmp_path):
    p = machine_profile(2, jitter=1, seed=7)
    f = tmp_path / "slow.json"
    f.write_text(json.dumps(p.to_dict()))
    q = EnvironmentProfile.load(f)
    assert q.to_dict() == p.to_dict()


def test_min_opcode_cost_accounts_for_jitter():
    assert machine_profile(3, jitter=1).min_opcode_cost() == 2
    assert machine_profile(1, jitter=5).min_opcode_cost() == 1
