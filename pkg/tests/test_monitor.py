"""Drift monitor state machine."""

import itertools
import json

import pytest
from hypothesis import given, strategies as st

from wattscope.errors import NonPositiveAggregate
from wattscope.monitor import (
    HISTORY_LIMIT,
    MonitorEvent,
    MonitorState,
    monitor_stream,
    observe,
    records_to_jsonl,
)

OK_W = [95.0]      # 5% error at p=100
BREACH_W = [80.0]  # 20% error at p=100


def drive(bits, **state_kw):
    """Feed a breach/ok bit string; return the event list."""
    state = MonitorState(**state_kw)
    return [observe(state, 100.0, BREACH_W if b else OK_W) for b in bits]


def test_perfect_reconstruction_stays_ok():
    state = MonitorState()
    for _ in range(30):
        assert observe(state, 100.0, [60.0, 40.0]) is MonitorEvent.Ok
    assert state.breach_run == 0


def test_error_at_threshold_is_ok():
    state = MonitorState()
    assert observe(state, 100.0, [90.0]) is MonitorEvent.Ok
    assert state.history[-1] == pytest.approx(0.10)


def test_eleven_breaches_then_recovery():
    events = drive([1] * 11 + [0])
    assert events == [MonitorEvent.Degraded] * 11 + [MonitorEvent.Ok]


def test_reselect_on_twelfth_consecutive():
    events = drive([1] * 12)
    assert events[:11] == [MonitorEvent.Degraded] * 11
    assert events[11] is MonitorEvent.Reselect


def test_reselect_resets_the_run():
    events = drive([1] * 25)
    reselect_at = [i for i, e in enumerate(events) if e is MonitorEvent.Reselect]
    assert reselect_at == [11, 23]
    assert events[24] is MonitorEvent.Degraded


def test_interrupted_run_never_reselects():
    # one recovery inside each would-be hour of breaches
    bits = ([1] * 11 + [0]) * 4
    assert MonitorEvent.Reselect not in drive(bits)


def expected_events(bits, persistence):
    """Independent oracle from the raw bit string: the consecutive-breach
    run length ending at t decides the event."""
    out = []
    run = 0
    for b in bits:
        run = run + 1 if b else 0
        if not b:
            out.append(MonitorEvent.Ok)
        elif run % persistence == 0:
            out.append(MonitorEvent.Reselect)
        else:
            out.append(MonitorEvent.Degraded)
    return out


@pytest.mark.parametrize("persistence", [1, 2, 3, 5])
def test_exhaustive_breach_strings(persistence):
    for n in range(1, 11):
        for bits in itertools.product((0, 1), repeat=n):
            got = drive(bits, persistence=persistence)
            assert got == expected_events(bits, persistence), (persistence, bits)


@given(
    errs=st.lists(st.floats(0.0, 1.0), min_size=1, max_size=60),
    thresholds=st.tuples(st.floats(0.01, 0.9), st.floats(0.01, 0.9)),
)
def test_lower_threshold_never_fewer_degraded(errs, thresholds):
    lo, hi = sorted(thresholds)
    counts = {}
    for th in (lo, hi):
        state = MonitorState(threshold_nmae=th)
        events = [observe(state, 100.0, [100.0 * (1 - e)]) for e in errs]
        counts[th] = (
            sum(e is MonitorEvent.Degraded for e in events),
            sum(e is not MonitorEvent.Ok for e in events),
        )
    assert counts[lo][0] >= counts[hi][0]
    assert counts[lo][1] >= counts[hi][1]


def test_nonpositive_aggregate_rejected():
    state = MonitorState()
    for bad in (0.0, -5.0):
        with pytest.raises(NonPositiveAggregate):
            observe(state, bad, [10.0])
    assert len(state.history) == 0  # rejected samples leave no trace


def test_history_is_bounded_and_recent():
    state = MonitorState()
    n = HISTORY_LIMIT + 50
    for i in range(n):
        observe(state, 100.0, [100.0 - i * 100.0 / n])
    assert len(state.history) == HISTORY_LIMIT
    assert state.history[-1] == pytest.approx((n - 1) / n)


def test_monitor_stream_records():
    state = MonitorState()
    records = monitor_stream(
        state,
        "srv1",
        timestamps=[1000, 1300, 1600],
        aggregate_w=[100.0, 100.0, 100.0],
        inferred_per_job={"a": [50.0, 40.0, 50.0], "b": [50.0, 40.0, 45.0]},
    )
    assert [r["event"] for r in records] == ["Ok", "Degraded", "Ok"]
    assert [r["timestamp"] for r in records] == [1000, 1300, 1600]
    assert records[1]["rel_err"] == pytest.approx(0.20)
    assert all(r["server_id"] == "srv1" for r in records)


def test_jsonl_round_trip():
    state = MonitorState()
    records = monitor_stream(
        state, "s", [0, 300], [100.0, 100.0], {"a": [95.0, 70.0]}
    )
    text = records_to_jsonl(records)
    assert text.endswith("\n")
    lines = text.splitlines()
    assert [json.loads(line) for line in lines] == records
    # keys are sorted so the stream diffs cleanly
    assert lines[0].index('"event"') < lines[0].index('"rel_err"')
