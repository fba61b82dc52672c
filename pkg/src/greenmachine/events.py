"""Time-tagged event streams: generation from a pipeline, CSV I/O and decoding.

Stream records are (channel, time_ps) with channel 0 = clock (one tick per
frame start), 1 = upper-rail detector, 2 = lower-rail detector.  Records are
ordered by time, clock first on equal timestamps.
"""
from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import blocks, child_rng
from .detection import (CLOCK, DET_LOWER, DET_UPPER, DetectorModel, apply_dead_time,
                        check_frame_timing, classify_frames, draw_records, tally, to_ps)
from .errors import InvalidArgument, MalformedStream

log = logging.getLogger(__name__)

HEADER = ("channel", "time_ps")
BLOCK_FRAMES = 1 << 16


@dataclass(eq=False)
class EventStream:
    channels: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.int8)
        self.times = np.asarray(self.times, dtype=np.int64)
        if self.channels.shape != self.times.shape or self.times.ndim != 1:
            raise MalformedStream("channel and time arrays must be 1-D and equal length")

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other) -> bool:
        return (isinstance(other, EventStream) and np.array_equal(self.channels, other.channels)
                and np.array_equal(self.times, other.times))

    @property
    def clock_times(self) -> np.ndarray:
        return self.times[self.channels == CLOCK]

    def validate(self) -> None:
        if np.any(np.diff(self.times) < 0):
            bad = int(np.flatnonzero(np.diff(self.times) < 0)[0]) + 1
            raise MalformedStream("timestamps decrease", line=bad + 2)
        bad = np.flatnonzero((self.channels < CLOCK) | (self.channels > DET_LOWER))
        if bad.size:
            raise MalformedStream(f"unknown channel {self.channels[bad[0]]}", line=int(bad[0]) + 2)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(HEADER) + "\n")
            if len(self):
                np.savetxt(fh, np.column_stack([self.channels, self.times]), fmt="%d",
                           delimiter=",")

    @classmethod
    def from_csv(cls, path) -> "EventStream":
        text = Path(path).read_text()
        lines = text.splitlines()
        if not lines or tuple(c.strip() for c in lines[0].split(",")) != HEADER:
            raise MalformedStream(f"expected header {','.join(HEADER)!r}", line=1)
        body = "\n".join(lines[1:])
        if not body.strip():
            return cls([], [])
        try:
            data = np.loadtxt(io.StringIO(body), delimiter=",", dtype=np.int64, ndmin=2)
        except ValueError:
            data = _parse_slow(lines)
        if data.shape[1] != 2:
            data = _parse_slow(lines)
        stream = cls(data[:, 0], data[:, 1])
        stream.validate()
        return stream


def _parse_slow(lines) -> np.ndarray:
    """Row-by-row parse that reports the first bad line."""
    rows = []
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedStream(f"expected 2 fields, got {len(row)}", line=lineno)
        try:
            rows.append((int(row[0]), int(row[1])))
        except ValueError:
            raise MalformedStream(f"non-integer field in {row!r}", line=lineno) from None
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


@dataclass
class DecodeResult:
    tallies: np.ndarray
    histogram: np.ndarray
    frames: int
    dropped_frames: int = 0
    warnings: list = field(default_factory=list)


def _frame_ps(detector: DetectorModel, order: int, tau: float) -> int:
    timing = check_frame_timing(detector, tau)
    return order * timing.bin_ps


def _schedule_rows(schedule, order):
    sched = [(int(j), int(c)) for j, c in schedule]
    for j, c in sched:
        if not 1 <= j <= order or c < 0:
            raise InvalidArgument(f"bad schedule entry ({j}, {c})")
    return sched


def generate_event_stream(schedule, pipeline, sync_freq: float, seed=None,
                          return_tallies: bool = False):
    """Simulate the detector record stream for a codeword schedule.

    ``schedule`` lists (codeword j, frame_count) pairs sent back to back.
    Randomness is keyed by (seed, schedule entry, block), so the internal
    tallies match ``simulate_tallies`` for the schedule [(j, F) for j in 1..N].
    """
    n = pipeline.order
    frame_ps = _frame_ps(pipeline.detector, n, pipeline.symbol_duration)
    if not sync_freq > 0 or abs(to_ps(1 / sync_freq) - frame_ps) > 1:
        raise InvalidArgument(
            f"sync period {1 / sync_freq if sync_freq > 0 else float('inf'):.6g} s does not "
            f"match the frame duration {frame_ps * 1e-12:.6g} s")
    sched = _schedule_rows(schedule, n)
    timing = pipeline.detector.timing()
    energies = pipeline.slot_energies()
    probs = pipeline.detector.click_probability(energies)

    total = sum(c for _, c in sched)
    rec_f, rec_c, rec_t = [], [], []
    counts = np.zeros((n, n + 3), dtype=np.int64)
    first = 0
    for e, (j, count) in enumerate(sched):
        start = first
        for b, cnt in blocks(count, BLOCK_FRAMES):
            frame, chan, off = draw_records(probs[j - 1], cnt, pipeline.detector,
                                            child_rng(seed, e, b), timing)
            # raw clicks go to the stream; the decoder applies dead time itself
            kf, _, koff = apply_dead_time(frame, chan, off, timing.dead_ps)
            counts[j - 1] += tally(classify_frames(kf, koff, cnt, n, timing), n)
            rec_f.append(frame + start)
            rec_c.append(chan)
            rec_t.append(off)
            start += cnt
        first += count

    frame = np.concatenate(rec_f) if rec_f else np.empty(0, np.int64)
    chan = np.concatenate(rec_c) if rec_c else np.empty(0, np.int8)
    off = np.concatenate(rec_t) if rec_t else np.empty(0, np.int64)
    times = np.concatenate([np.arange(total, dtype=np.int64) * frame_ps, frame * frame_ps + off])
    chans = np.concatenate([np.full(total, CLOCK, np.int8), chan])
    order = np.lexsort((chans, times))
    stream = EventStream(chans[order], times[order])
    return (stream, counts) if return_tallies else stream


def decode_event_stream(stream: EventStream, detector: DetectorModel, order: int, tau: float,
                        schedule, end_ps: int | None = None) -> DecodeResult:
    """Frame the stream on its clock ticks and tally outcomes per codeword.

    A frame is complete when the next tick (or ``end_ps`` for the last frame)
    is at least one frame duration later; incomplete frames are dropped with a
    warning.  Without ``end_ps`` the last frame is taken as complete.
    """
    frame_ps = _frame_ps(detector, order, tau)
    timing = detector.timing()
    sched = _schedule_rows(schedule, order)
    clocks = stream.clock_times
    if clocks.size == 0:
        raise MalformedStream("stream has no clock records")
    notes = []

    ends = np.append(clocks[1:], np.iinfo(np.int64).max if end_ps is None else end_ps)
    complete = ends - clocks >= frame_ps
    if not complete.all():
        bad = np.flatnonzero(~complete)
        msg = f"dropped {bad.size} truncated frame(s), first at {clocks[bad[0]]} ps"
        notes.append(msg)
        warnings.warn(msg, stacklevel=2)

    det = stream.channels != CLOCK
    t = stream.times[det]
    chan = stream.channels[det]
    fidx = np.searchsorted(clocks, t, side="right") - 1
    off = t - clocks[np.maximum(fidx, 0)]
    inside = (fidx >= 0) & (off < frame_ps)
    if (~inside).sum():
        msg = f"ignored {(~inside).sum()} record(s) outside any frame window"
        notes.append(msg)
        log.info(msg)
    keep = inside & complete[np.maximum(fidx, 0)]
    fidx, chan, off = fidx[keep], chan[keep], off[keep]

    fidx, chan, off = apply_dead_time(fidx, chan, off, timing.dead_ps)
    codes = classify_frames(fidx, off, clocks.size, order, timing)

    scheduled = sum(c for _, c in sched)
    if clocks.size > scheduled:
        raise InvalidArgument(f"stream has {clocks.size} frames but the schedule covers {scheduled}")
    word = np.repeat([j - 1 for j, _ in sched], [c for _, c in sched])[: clocks.size]

    tallies = np.zeros((order, order + 3), dtype=np.int64)
    np.add.at(tallies, (word[complete], codes[complete]), 1)

    bins = off // timing.bin_ps
    in_win = timing.in_window(off - bins * timing.bin_ps) & (bins < order)
    histogram = np.zeros((order, order), dtype=np.int64)
    np.add.at(histogram, (word[fidx[in_win]], bins[in_win]), 1)
    return DecodeResult(tallies, histogram, int(complete.sum()), int((~complete).sum()), notes)
