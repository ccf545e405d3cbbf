"""Timetag streams and their binary wire format.

A stream is a tick-sorted set of detection records.  The on-disk format is
a flat sequence of little-endian records: 64-bit unsigned tick, 8-bit
channel (bit value), 8-bit truth code.  Ground-truth pulse indices are
in-memory only and do not survive a round trip through a file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

# Truth codes carried in the 8-bit truth field.
TRUTH_UNKNOWN = 0
TRUTH_SIGNAL = 1
TRUTH_DECOY = 2
TRUTH_DARK = 3
TRUTH_BACKGROUND = 4
TRUTH_CLOCK = 5

_RECORD_DTYPE = np.dtype([("tick", "<u8"), ("channel", "u1"), ("truth", "u1")])


@dataclass(eq=False)
class TimetagStream:
    """Detection events as integer ticks plus channel and truth labels.

    ``ticks`` are non-decreasing timestamps in units of ``tick_resolution``
    seconds.  ``channel`` holds the measured bit value for detections.
    ``truth`` is a TRUTH_* code; ``pulse_index`` (optional, -1 for noise)
    identifies the originating pulse for oracle tests.
    """

    ticks: np.ndarray
    channel: np.ndarray
    truth: np.ndarray
    tick_resolution: float
    pulse_index: np.ndarray | None = field(default=None)

    def __post_init__(self) -> None:
        self.ticks = np.asarray(self.ticks, dtype=np.int64)
        self.channel = np.asarray(self.channel, dtype=np.uint8)
        self.truth = np.asarray(self.truth, dtype=np.uint8)
        if self.pulse_index is not None:
            self.pulse_index = np.asarray(self.pulse_index, dtype=np.int64)
        if not self.tick_resolution > 0:
            raise ParameterError(f"tick_resolution must be > 0, got {self.tick_resolution}")
        n = len(self.ticks)
        if len(self.channel) != n or len(self.truth) != n:
            raise ParameterError("ticks, channel and truth must have equal length")
        if self.pulse_index is not None and len(self.pulse_index) != n:
            raise ParameterError("pulse_index must match the stream length")
        if n > 1 and np.any(np.diff(self.ticks) < 0):
            raise ParameterError("ticks must be sorted non-decreasing")

    def __len__(self) -> int:
        return len(self.ticks)

    def times(self) -> np.ndarray:
        """Event times in seconds."""
        return self.ticks * self.tick_resolution

    @classmethod
    def empty(cls, tick_resolution: float) -> "TimetagStream":
        return cls(
            ticks=np.empty(0, dtype=np.int64),
            channel=np.empty(0, dtype=np.uint8),
            truth=np.empty(0, dtype=np.uint8),
            tick_resolution=tick_resolution,
            pulse_index=np.empty(0, dtype=np.int64),
        )


def write_timetags(path, stream: TimetagStream) -> None:
    """Write a stream to the binary record format (tick/channel/truth)."""
    if np.any(stream.ticks < 0):
        raise ParameterError("cannot serialize negative ticks")
    records = np.empty(len(stream), dtype=_RECORD_DTYPE)
    records["tick"] = stream.ticks.astype(np.uint64)
    records["channel"] = stream.channel
    records["truth"] = stream.truth
    with open(path, "wb") as fh:
        records.tofile(fh)


def read_timetags(path, tick_resolution: float) -> TimetagStream:
    """Read a stream written by ``write_timetags``.

    The file format does not carry the tick resolution; the caller supplies
    it.  Pulse indices are not recoverable from a file.
    """
    records = np.fromfile(path, dtype=_RECORD_DTYPE)
    return TimetagStream(
        ticks=records["tick"].astype(np.int64),
        channel=records["channel"].copy(),
        truth=records["truth"].copy(),
        tick_resolution=tick_resolution,
    )


def merge_streams(streams: list[TimetagStream]) -> TimetagStream:
    """Concatenate streams and sort by tick (stable in input order)."""
    if not streams:
        raise ParameterError("merge_streams needs at least one stream")
    res = streams[0].tick_resolution
    for s in streams:
        if s.tick_resolution != res:
            raise ParameterError("cannot merge streams with different tick resolutions")
    ticks = np.concatenate([s.ticks for s in streams])
    channel = np.concatenate([s.channel for s in streams])
    truth = np.concatenate([s.truth for s in streams])
    have_idx = all(s.pulse_index is not None for s in streams)
    pulse_index = (
        np.concatenate([s.pulse_index for s in streams]) if have_idx else None
    )
    order = np.argsort(ticks, kind="stable")
    return TimetagStream(
        ticks=ticks[order],
        channel=channel[order],
        truth=truth[order],
        tick_resolution=res,
        pulse_index=pulse_index[order] if pulse_index is not None else None,
    )
