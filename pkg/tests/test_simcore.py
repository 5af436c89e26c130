import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thzwdc.simcore import EVENT_LOG_HEADER, Engine, PastEventError, RngStream, draw_uniform


def test_schedule_at_now_returns_first_id():
    eng = Engine()
    assert eng.schedule(0, "flow-start") == 0


def test_equal_time_events_dispatch_in_sequence_order():
    eng = Engine()
    seen = []
    eng.on("flow-start", lambda e, ev: seen.append(ev.sequence))
    for _ in range(5):
        eng.schedule(0, "reconfig-epoch")
    a = eng.schedule(100, "flow-start")
    b = eng.schedule(100, "flow-start")
    eng.run_until(200)
    assert seen == [a, b] and a < b


def test_past_event_rejected():
    eng = Engine()
    eng.run_until(60)
    with pytest.raises(PastEventError, match="past event"):
        eng.schedule(50, "flow-start")


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        Engine().schedule(0, "teleport")


def test_run_until_empty_queue_advances_clock():
    eng = Engine()
    assert eng.run_until(1000) == 0
    assert eng.now == 1000


def test_run_until_is_inclusive():
    eng = Engine()
    for t in (10, 10, 20):
        eng.schedule(t, "flow-start")
    assert eng.run_until(15) == 2
    assert eng.now == 15
    assert eng.run_until(20) == 1


def test_run_until_rejects_going_backwards():
    eng = Engine()
    eng.run_until(10)
    with pytest.raises(PastEventError):
        eng.run_until(5)


def test_handler_cascade_within_window():
    eng = Engine()
    times = []

    def cascade(e, ev):
        times.append(e.now)
        if ev.payload["depth"] < 2:
            e.schedule(e.now + 1, "flow-start", {"depth": ev.payload["depth"] + 1})

    eng.on("flow-start", cascade)
    eng.schedule(5, "flow-start", {"depth": 0})
    assert eng.run_until(10) == 3
    assert times == [5, 6, 7]


def test_cancel_skips_event():
    eng = Engine()
    seen = []
    eng.on("flow-end", lambda e, ev: seen.append(ev.sequence))
    keep = eng.schedule(1, "flow-end")
    drop = eng.schedule(1, "flow-end")
    assert eng.cancel(drop)
    assert not eng.cancel(drop)
    eng.run_until(5)
    assert seen == [keep]


def test_named_handler_registered_once():
    eng = Engine()
    calls = []
    for _ in range(3):
        eng.on("link-up", lambda e, ev: calls.append(1), name="once")
    eng.schedule(0, "link-up")
    eng.run_until(0)
    assert calls == [1]


def test_event_log_csv_format():
    eng = Engine()
    eng.schedule(3, "flow-start", {"src": "r1", "bps": 1.5, "dst": "r0"})
    eng.run_until(3)
    text = eng.event_log_csv()
    lines = text.split("\n")
    assert lines[0] == ",".join(EVENT_LOG_HEADER)
    assert lines[1] == "3,0,flow-start,bps=1.5;dst=r0;src=r1"
    assert "\r" not in text and text.endswith("\n")


def test_same_seed_same_draws():
    a = [draw_uniform(RngStream(42, "traffic")) for _ in range(1)]
    s1, s2 = RngStream(42, "traffic"), RngStream(42, "traffic")
    assert [s1.uniform() for _ in range(1000)] == [s2.uniform() for _ in range(1000)]
    assert a[0] == RngStream(42, "traffic").uniform()


def test_stream_ids_are_independent():
    a = RngStream(42, "traffic").uniforms(100)
    b = RngStream(42, "blockage").uniforms(100)
    assert not np.array_equal(a, b)


def test_uniform_mean():
    draws = RngStream(7, "lln").uniforms(100_000)
    assert abs(draws.mean() - 0.5) < 0.01
    assert draws.min() >= 0.0 and draws.max() < 1.0


def test_draws_pinned_across_platforms():
    # Philox output is specified bit-for-bit, so these values are portable
    s = RngStream(0, "golden")
    assert [s.uniform() for _ in range(3)] == [0.27871696581611394, 0.2089879776237228, 0.6100285845816805]


def test_seed_range_checked():
    with pytest.raises(ValueError):
        RngStream(-1, "x")
    with pytest.raises(ValueError):
        RngStream(2**64, "x")


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=1000), min_size=1, max_size=40))
def test_dispatch_order_is_total_and_monotone(times):
    eng = Engine()
    order = []
    eng.on("flow-start", lambda e, ev: order.append((ev.fire_at, ev.sequence)))
    for t in times:
        eng.schedule(t, "flow-start")
    eng.run_until(max(times))
    assert order == sorted(order)
    assert len(set(order)) == len(order) == len(times)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=0, max_value=2**64 - 1), st.text(min_size=1, max_size=12))
def test_stream_replay_identical(seed, stream_id):
    assert np.array_equal(RngStream(seed, stream_id).uniforms(16), RngStream(seed, stream_id).uniforms(16))
