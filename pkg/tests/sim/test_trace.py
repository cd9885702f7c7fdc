import numpy as np
import pytest

from hybridplan.errors import InvalidRecordError
from hybridplan.geometry import trajectory_from_positions
from hybridplan.sim import SimTrace, TickRecord, read_trace, write_trace
from hybridplan.sim.trace import CandidateRecord, FailureRecord, TraceHeader
from hybridplan.store import records_open


def tick(t, with_trajectory=False):
    trajectory = None
    if with_trajectory:
        xy = np.stack([np.linspace(0.0, 8.0, 81), np.zeros(81)], axis=1)
        trajectory = trajectory_from_positions(xy, 0.1, start_time=t)
    return TickRecord(
        time=t,
        x=5.0 * t,
        y=0.1,
        heading=0.0,
        speed=5.0,
        steering=0.01,
        accel=-0.5,
        selected=7,
        override=False,
        used_fallback=True,
        qp_invoked=True,
        mlp_invoked=False,
        candidates=(CandidateRecord(0.6, -1.0, 42.5, False),),
        trajectory=trajectory,
        mpt_trajectory=trajectory,
        lead_gap=20.0 if t > 0 else None,
        lead_speed=3.0 if t > 0 else None,
        agents=({"id": "lead", "x": 30.0, "y": 0.0, "heading": 0.0},),
    )


def test_round_trip(fs):
    trace = SimTrace(TraceHeader("acc", "hybrid", 3, 0.1))
    trace.ticks.extend([tick(0.0, True), tick(0.1)])
    trace.failure = FailureRecord(0.2, "QpInfeasibleError: infeasible")
    write_trace(trace, "trace.jsonl")

    loaded = read_trace("trace.jsonl")
    assert loaded.header == trace.header
    assert loaded.ticks == trace.ticks
    assert loaded.failure == trace.failure
    assert loaded.times == [0.0, 0.1]
    assert loaded.ticks[0].trajectory == trace.ticks[0].trajectory
    assert loaded.ticks[0].trajectory.start_time == 0.0
    assert loaded.ticks[1].trajectory is None
    assert loaded.ticks[0].candidates[0].total == 42.5


def test_records_carry_kind(fs):
    trace = SimTrace(TraceHeader("s", "sample_only", 0, 0.1), [tick(0.0)])
    write_trace(trace, "trace.jsonl")
    with records_open("trace.jsonl") as reader:
        kinds = [record["kind"] for record in reader]
    assert kinds == ["header", "tick"]


def test_missing_header(fs):
    with records_open("trace.jsonl", "w") as writer:
        writer.append(dict(kind="tick", **tick(0.0).to_dict()))
    with pytest.raises(InvalidRecordError, match="no header"):
        read_trace("trace.jsonl")


def test_record_after_failure(fs):
    trace = SimTrace(TraceHeader("s", "hybrid", 0, 0.1))
    trace.failure = FailureRecord(0.0, "error")
    write_trace(trace, "trace.jsonl")
    with records_open("trace.jsonl", "r") as reader:
        records = list(reader)
    with records_open("trace.jsonl", "w") as writer:
        writer.extend(records + [dict(kind="tick", **tick(0.1).to_dict())])
    with pytest.raises(InvalidRecordError, match="record after failure"):
        read_trace("trace.jsonl")


def test_unknown_kind(fs):
    with records_open("trace.jsonl", "w") as writer:
        writer.append(dict(kind="header", scenario="s", mode="hybrid", seed=0, dt=0.1))
        writer.append({"kind": "weather"})
    with pytest.raises(InvalidRecordError, match="unexpected record kind"):
        read_trace("trace.jsonl")
