import json

import pytest

from detloop.errors import (
    ConfigError,
    NotRun,
    ParseError,
    PhysicalBudgetExceeded,
    StepBudgetExceeded,
    TraceFormatError,
    UnknownFrame,
    UnknownOrigin,
)
from detloop.runtime import CrossFrameMessage, Runtime, RuntimeConfig, run_source
from detloop.trace import Trace, check_observations, trace_diff
from detloop.vmclock import ClockMode, EnvironmentProfile, Service, machine_profile

LEGACY = RuntimeConfig(mode=ClockMode.LEGACY)


def deliveries(rt, frame=0):
    return [r for r in rt.trace if r.k == "deliver" and r.frame == frame]


# -- construction and loading ------------------------------------------------------


def test_default_runtime_starts_at_zero():
    rt = Runtime()
    assert rt.physical.now == 0 and len(rt.trace) == 0


def test_unit_above_opcode_cost_is_rejected():
    with pytest.raises(ConfigError) as info:
        Runtime(RuntimeConfig(unit=2), machine_profile(1))
    assert info.value.path == "unit"
    Runtime(RuntimeConfig(unit=3), machine_profile(3))


def test_unknown_rf_constant_path():
    with pytest.raises(ConfigError) as info:
        RuntimeConfig.from_dict({"rf_constants": {"foo": 1}})
    assert info.value.path == "rf_constants.foo"


@pytest.mark.parametrize(
    "doc,path",
    [({"mode": "fast"}, "mode"), ({"origin": ""}, "origin"), ({"grain": 0}, "grain"), ({"nope": 1}, "nope")],
)
def test_config_field_paths(doc, path):
    with pytest.raises(ConfigError) as info:
        RuntimeConfig.from_dict(doc)
    assert info.value.path == path


def test_config_file_roundtrip(tmp_path):
    cfg = RuntimeConfig(mode=ClockMode.LEGACY, grain=1000, rf_constants={"dom": 3})
    f = tmp_path / "c.json"
    f.write_text(json.dumps(cfg.to_dict()))
    assert RuntimeConfig.load(f) == cfg


def test_load_queues_top_level_at_zero():
    rt = Runtime()
    frame = rt.load("let x = 1;")
    [entry] = frame.queue.entries()
    assert entry.priority == 0


def test_syntax_error_leaves_runtime_unchanged():
    rt = Runtime()
    with pytest.raises(ParseError):
        rt.load("let = ;")
    assert rt.frames == []


def test_empty_script():
    rt = run_source("")
    rep = rt.oracle_report()
    assert rep.physical_total == 0 and rep.main_totals == {0: 0}
    assert rep.outputs == () and rep.opcodes == 0


def test_oracle_report_before_run():
    rt = Runtime()
    rt.load("let x = 1;")
    with pytest.raises(NotRun):
        rt.oracle_report()


# -- deterministic timing -------------------------------------------------------------


SYNC = "let a = now(); secret_sync(work); let b = now(); output(b - a);"


@pytest.mark.parametrize("work", [1, 999])
@pytest.mark.parametrize("speed", [1, 3])
def test_sync_secret_reads_constant(work, speed):
    # Between the two reads: store a, push work, call, pop, call now = 5 opcodes.
    rt = run_source(SYNC, profile=machine_profile(speed), inputs={"work": work})
    assert rt.observer_outputs() == [10 + 5]


ASYNC = (
    "let total = 0; let iv = 0;"
    "function count() { total = total + 1; }"
    "function done() { clear_interval(iv); output(total * u); }"
    "iv = set_interval(count, u); secret_async(7, done);"
)


@pytest.mark.parametrize("u,want", [(30_000, 990_000), (250_000, 1_000_000)])
@pytest.mark.parametrize("speed", [1, 3])
def test_async_interval_measurement(u, want, speed):
    rt = run_source(ASYNC, profile=machine_profile(speed), inputs={"u": u})
    assert rt.observer_outputs() == [want]


def test_same_origin_fetch_synchronizes_clocks():
    services = {k: Service(*v) for k, v in {
        "dom": (1000, 10), "network_cross": (1000, 0), "network_same": (6996, 0), "compute_secret": (1000, 0)
    }.items()}
    profile = EnvironmentProfile(services=services, name="p")
    rt = run_source('function cb(t) { output(t); } fetch("https://app.example", 0, cb);', profile=profile)
    d = deliveries(rt)[-1]
    assert d.main == d.phys == 7000 and d.detail["stamp"] == 7000
    assert rt.observer_outputs() == [7000]


def test_timer_delivers_at_expected_time():
    rt = run_source("function cb() { output(now()); } set_timeout(cb, 100);", profile=machine_profile(3))
    # spawn at main 3 (push fn, push delay, call), delivery at 103, now() one opcode later
    assert deliveries(rt)[-1].main == 103
    assert rt.observer_outputs() == [104]


def test_cross_origin_fetch_is_constant():
    src = 'let s = now(); function cb() { output(now() - s); } fetch("https://x.example", size, cb);'
    outs = {
        run_source(src, profile=machine_profile(sp), inputs={"size": size}).observer_outputs()[0]
        for sp in (1, 3)
        for size in (0, 10**6)
    }
    assert len(outs) == 1


def test_clear_interval_before_fill_and_after():
    src = (
        "let n = 0; let iv = 0;"
        "function tick() { n = n + 1; if (n == 3) { clear_interval(iv); output(n); } }"
        "iv = set_interval(tick, 10);"
    )
    rt = run_source(src)
    assert rt.observer_outputs() == [3]
    assert sum(1 for d in deliveries(rt) if d.detail["kind"] == "timer") == 3


def test_clear_interval_on_filled_timer_drops_it():
    src = (
        "let iv = 0;"
        "function tick() { output(1); }"
        "function stop() { clear_interval(iv); }"
        "iv = set_interval(tick, 100);"
        "secret_sync(50000);"  # physical time passes the timer while the task runs
        "set_timeout(stop, 0);"
    )
    rt = run_source(src, RuntimeConfig(rf_constants={"dom": 1}))
    assert rt.observer_outputs() == []


def test_user_input_delivery():
    rt = Runtime()
    rt.load("function on_input(v) { output(v); output(now()); }")
    rt.inject_input(5000, 42)
    rt.run()
    d = deliveries(rt)[-1]
    assert d.main == d.phys == 5000 == d.detail["stamp"]
    # load v, call output, pop, then the now() call is the fourth opcode
    assert rt.observer_outputs() == [42, 5004]


def test_video_frame_payload_is_frame_time():
    rt = run_source("function f(t) { output(t); } request_frame(f);")
    assert rt.observer_outputs() == [16_666_667]


# -- communication between main frames ---------------------------------------------------


def _two_frames(receiver_at):
    rt = Runtime()
    rt.add_main_frame("let x = 0;")
    r = rt.add_main_frame("function on_message(v) { output(v); }")
    r.clock.fast_forward(receiver_at)
    return rt, r


def test_message_from_ahead_sender_waits_for_send_time():
    rt, r = _two_frames(200)
    rt.send_cross_frame(CrossFrameMessage(0, 1, 7, 500))
    assert [e.priority for e in r.queue.entries()] == [0, 500]
    rt.physical.advance_to(1000)
    rt.run()
    d = [x for x in deliveries(rt, 1) if x.detail["kind"] == "message"][0]
    assert d.main == 500


@pytest.mark.parametrize("sent_at", [200, 500])
def test_message_from_behind_or_equal_sender_is_immediate(sent_at):
    rt, r = _two_frames(500)
    rt.send_cross_frame(CrossFrameMessage(0, 1, 7, sent_at))
    [msg] = [e for e in r.queue.entries() if e.event.kind == "message"]
    assert msg.priority == 500
    rt.physical.advance_to(1000)
    rt.run()
    d = [x for x in deliveries(rt, 1) if x.detail["kind"] == "message"][0]
    assert d.main == 500


def test_post_to_unknown_frame():
    rt = Runtime()
    rt.load("post(3, 1);")
    with pytest.raises(UnknownFrame):
        rt.run()


def test_post_between_scripts():
    rt = Runtime()
    rt.add_main_frame("post(1, 99);")
    rt.add_main_frame("function on_message(v) { output(v); }")
    rt.run()
    assert rt.observer_outputs(1) == [99]


# -- budgets and errors -------------------------------------------------------------------


def test_physical_budget():
    with pytest.raises(PhysicalBudgetExceeded):
        run_source("function f() {} set_timeout(f, 1000000);", RuntimeConfig(physical_budget=5000))


def test_step_budget_propagates():
    with pytest.raises(StepBudgetExceeded):
        run_source("while (true) { }", RuntimeConfig(step_budget=500))


def test_unknown_origin():
    cfg = RuntimeConfig(origins=("https://cdn.example",))
    with pytest.raises(UnknownOrigin):
        run_source('function f() {} fetch("https://evil.example", 1, f);', cfg)
    run_source('function f() {} fetch("https://cdn.example", 1, f);', cfg)


# -- traces ---------------------------------------------------------------------------------


MIXED = """
let n = 0;
function got(t) { n = n + 1; if (n < 3) { request_frame(tick); } }
function tick(ft) { fetch("https://app.example", 10, got); }
function other() { output(now()); }
fetch("https://app.example", 0, got);
fetch("https://cdn.example", 5000, other);
set_timeout(other, 123);
secret_async(7, other);
"""


def test_trace_invariants():
    rt = run_source(MIXED, profile=machine_profile(2, jitter=1, seed=7))
    ops = rt.trace.ops()
    assert len(ops) == rt.oracle_report().opcodes
    rt.trace.check_monotone()
    assert check_observations(rt.trace) == []


def test_trace_jsonl_roundtrip(tmp_path):
    rt = run_source(MIXED)
    path = tmp_path / "t.jsonl"
    rt.trace.dump(path)
    assert Trace.load(path) == Trace(rt.trace.records)
    first = json.loads(path.read_text().splitlines()[0])
    assert list(first) == ["k", "main", "phys", "frame", "detail"]


@pytest.mark.parametrize("line", ["{", '{"k":"op"}', '{"k":"zz","main":0,"phys":0,"frame":0,"detail":null}'])
def test_malformed_trace(line):
    with pytest.raises(TraceFormatError):
        Trace.from_jsonl(line + "\n")


def test_same_inputs_give_identical_traces():
    p = machine_profile(2, jitter=1, seed=7)
    assert run_source(MIXED, profile=p).trace.to_jsonl() == run_source(MIXED, profile=p).trace.to_jsonl()


def test_replay_removes_profile_dependence():
    live = run_source(MIXED)
    for p in (machine_profile(3), machine_profile(2, jitter=1, seed=7)):
        rt = run_source(MIXED, profile=p, replay=live.input_log)
        d = trace_diff(live.trace, rt.trace)
        assert d.ok and d.offset == 0


def test_legacy_main_column_is_physical():
    rt = run_source("let x = 1; output(now());", LEGACY, machine_profile(3))
    assert all(r.main == r.phys for r in rt.trace)


def test_legacy_trace_diverges_from_det():
    det = run_source("let x = 1; let y = x + 1;", profile=machine_profile(3))
    leg = run_source("let x = 1; let y = x + 1;", LEGACY, machine_profile(3))
    assert not trace_diff(det.trace, leg.trace).ok


def test_oracle_sees_what_the_observer_does_not():
    a = run_source(SYNC, profile=machine_profile(1), inputs={"work": 10})
    b = run_source(SYNC, profile=machine_profile(1), inputs={"work": 10_000})
    assert a.oracle_report().observer_outputs == b.oracle_report().observer_outputs
    assert b.oracle_report().physical_total - a.oracle_report().physical_total == (10_000 - 10) * 10


def test_sync_delivery_record_serializes():
    rt = run_source(SYNC, inputs={"work": 3})
    [sync] = [r for r in deliveries(rt) if r.detail["case"] == "sync"]
    assert sync.k == "deliver"
    assert Trace.from_jsonl(rt.trace.to_jsonl()) == rt.trace
