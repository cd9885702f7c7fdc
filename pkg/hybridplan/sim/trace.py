"""Closed-loop traces

A trace file is an indexed JSONL record file: one header record, one record
per planning tick, and a failure record when the run was aborted. Every
record has a ``kind`` field.
"""

from dataclasses import asdict, dataclass, field
from logging import getLogger as get_logger
from typing import List, Optional, Tuple

from hybridplan.errors import InvalidRecordError
from hybridplan.geometry import Trajectory
from hybridplan.store import records_open

__all__ = [
    "TRACE_VERSION",
    "CandidateRecord",
    "FailureRecord",
    "SimTrace",
    "TickRecord",
    "TraceHeader",
    "read_trace",
    "write_trace",
]

logger = get_logger(__name__)

TRACE_VERSION = 1


@dataclass(frozen=True)
class TraceHeader:
    scenario: str
    mode: str
    seed: int
    dt: float
    version: int = TRACE_VERSION


@dataclass(frozen=True)
class CandidateRecord:
    speed_fraction: float
    lateral_offset: float
    total: float
    at_fault_collision: bool


@dataclass(frozen=True)
class TickRecord:
    """Plant state at the start of a planning tick and the plans made at it

    ``lead_gap`` and ``lead_speed`` describe the real lead vehicle only.
    """

    time: float
    x: float
    y: float
    heading: float
    speed: float
    steering: float
    accel: float
    selected: int
    override: bool
    used_fallback: bool
    qp_invoked: bool
    mlp_invoked: bool
    candidates: Tuple[CandidateRecord, ...] = ()
    nn_trajectory: Optional[Trajectory] = field(default=None, compare=False)
    mpt_trajectory: Optional[Trajectory] = field(default=None, compare=False)
    trajectory: Optional[Trajectory] = field(default=None, compare=False)
    lead_gap: Optional[float] = None
    lead_speed: Optional[float] = None
    agents: Tuple[dict, ...] = ()

    def to_dict(self) -> dict:
        data = {
            name: getattr(self, name)
            for name in self.__dataclass_fields__
            if name not in ("candidates",) and not name.endswith("trajectory")
        }
        data["candidates"] = [asdict(c) for c in self.candidates]
        for name in ("nn_trajectory", "mpt_trajectory", "trajectory"):
            value = getattr(self, name)
            data[name] = None if value is None else value.to_dict()
        data["agents"] = list(self.agents)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TickRecord":
        values = dict(data)
        values.pop("kind", None)
        values["candidates"] = tuple(
            CandidateRecord(**c) for c in values.get("candidates", ())
        )
        for name in ("nn_trajectory", "mpt_trajectory", "trajectory"):
            if values.get(name) is not None:
                values[name] = Trajectory.from_dict(values[name])
        values["agents"] = tuple(values.get("agents", ()))
        return cls(**values)


@dataclass(frozen=True)
class FailureRecord:
    time: float
    error: str


@dataclass
class SimTrace:
    header: TraceHeader
    ticks: List[TickRecord] = field(default_factory=list)
    failure: Optional[FailureRecord] = None

    def __len__(self) -> int:
        return len(self.ticks)

    @property
    def times(self) -> List[float]:
        return [tick.time for tick in self.ticks]


def write_trace(trace: SimTrace, path: str):
    with records_open(path, "w") as writer:
        writer.append(dict(kind="header", **asdict(trace.header)))
        for tick in trace.ticks:
            writer.append(dict(kind="tick", **tick.to_dict()))
        if trace.failure is not None:
            writer.append(dict(kind="failure", **asdict(trace.failure)))
    logger.info("trace written: %r, %d ticks", path, len(trace.ticks))


def read_trace(path: str) -> SimTrace:
    """Read a trace written by :func:`write_trace`

    :raises InvalidRecordError: When the record kinds are out of order
    """
    with records_open(path, "r") as reader:
        records = list(reader)
    if not records or records[0].get("kind") != "header":
        raise InvalidRecordError("trace has no header: %r" % path)
    header = dict(records[0])
    header.pop("kind")
    trace = SimTrace(TraceHeader(**header))
    for index, record in enumerate(records[1:], start=1):
        kind = record.get("kind")
        if trace.failure is not None:
            raise InvalidRecordError(
                "record after failure: %r, index: %d" % (path, index)
            )
        if kind == "tick":
            trace.ticks.append(TickRecord.from_dict(record))
        elif kind == "failure":
            trace.failure = FailureRecord(record["time"], record["error"])
        else:
            raise InvalidRecordError(
                "unexpected record kind: %r, index: %d, kind: %r" % (path, index, kind)
            )
    return trace
