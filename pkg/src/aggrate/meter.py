"""Receiver-side aggregation measurement from MAC timestamps.

Packets carried by one aggregated frame share a MAC timestamp, so clustering
equal consecutive timestamps recovers frames. Sequence numbers in the payload
expose link-layer losses (holes) and retransmissions (out-of-order arrivals);
both are reconciled before per-slot feedback reports are built.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

TS_WRAP = 1 << 32  # MAC TSF timestamps are 32-bit microsecond counters
WRAP_GAP_US = 1_000_000

_REPORT = struct.Struct("<IHIQII")


@dataclass
class ObservedFrame:
    mac_timestamp: int
    received_seqs: np.ndarray
    inferred_tx_count: int = 0
    is_retx_inferred: bool = False
    holes: int = 0
    duplicates: int = 0
    mcs_rate: Optional[float] = None
    span: int = 0  # new sequence numbers covered (received + holes)

    def __post_init__(self):
        self.received_seqs = np.asarray(self.received_seqs, dtype=np.int64)
        if len(self.received_seqs) == 0:
            raise ValueError("an observed frame needs at least one packet")
        if self.inferred_tx_count == 0:
            self.inferred_tx_count = len(self.received_seqs)


@dataclass(frozen=True)
class FeedbackReport:
    slot: int
    station: int
    mean_agg: Optional[float]
    mean_mcs: Optional[float]
    frame_count: int
    loss_fraction: float = 0.0

    def encode(self) -> bytes:
        """Little-endian wire record; an empty slot encodes mean_agg as 0."""
        agg = 0 if self.mean_agg is None else int(round(self.mean_agg * 100))
        mcs = 0 if self.mean_mcs is None else int(round(self.mean_mcs))
        return _REPORT.pack(self.slot, self.station, agg, mcs, self.frame_count,
                            int(round(self.loss_fraction * 1e6)))

    @classmethod
    def decode(cls, payload: bytes) -> "FeedbackReport":
        if len(payload) != _REPORT.size:
            raise ValueError(f"feedback record must be {_REPORT.size} bytes, got {len(payload)}")
        slot, station, agg, mcs, count, loss = _REPORT.unpack(payload)
        empty = count == 0 or agg == 0
        return cls(slot, station, None if empty else agg / 100.0,
                   None if empty else float(mcs), count, loss / 1e6)


REPORT_SIZE = _REPORT.size


def unwrap_timestamps(ts: Sequence[int]) -> np.ndarray:
    """Undo 32-bit TSF wrap: a backwards jump larger than one second is a wrap."""
    ts = np.asarray(ts, dtype=np.int64)
    if len(ts) < 2:
        return ts.copy()
    back = np.diff(ts) < -WRAP_GAP_US
    return ts + TS_WRAP * np.concatenate(([0], np.cumsum(back)))


def cluster_by_mac_timestamp(seqs: Sequence[int], mac_ts: Sequence[int],
                             mcs: Optional[Sequence[float]] = None) -> list[ObservedFrame]:
    """Group delivered packets (in receive order) into frames by equal MAC timestamp."""
    seqs = np.asarray(seqs, dtype=np.int64)
    ts = unwrap_timestamps(mac_ts)
    if len(seqs) != len(ts):
        raise ValueError("seqs and mac_ts differ in length")
    if len(seqs) == 0:
        return []
    starts = np.flatnonzero(np.concatenate(([True], ts[1:] != ts[:-1])))
    ends = np.append(starts[1:], len(ts))
    frames = []
    for a, b in zip(starts, ends):
        frames.append(ObservedFrame(int(ts[a]), seqs[a:b],
                                    mcs_rate=None if mcs is None else float(mcs[a])))
    return frames


class SeqReconciler:
    """Streaming hole/retransmission book-keeping for one flow.

    A hole is charged to the frame whose sequence range spans it; a frame that
    carries only sequence numbers at or below the running maximum is a
    retransmission and is excluded from aggregation statistics.
    """

    PRUNE_AT = 50_000
    KEEP = 20_000

    def __init__(self, first_seq: int = 0):
        self.max_seq = first_seq - 1
        self.open_holes: dict[int, int] = {}  # seq -> tag supplied when opened
        self.seen_dup = 0

    def _prune(self, top: int) -> None:
        if len(self.open_holes) > self.PRUNE_AT:
            floor = top - self.KEEP
            self.open_holes = {s: t for s, t in self.open_holes.items() if s >= floor}

    def reconcile(self, frame: ObservedFrame, tag: int = 0) -> tuple[ObservedFrame, list[int]]:
        """Return the annotated frame and the tags of holes it closed."""
        seqs = frame.received_seqs
        m = self.max_seq
        n = len(seqs)
        if seqs[0] > m and (n == 1 or seqs[-1] - seqs[0] == n - 1 and np.all(seqs[1:] > seqs[:-1])):
            # common case: one contiguous run of new sequence numbers
            top = int(seqs[-1])
            span = top - m
            n_holes = span - n
            if n_holes:
                for s in range(m + 1, int(seqs[0])):
                    self.open_holes[s] = tag
                self._prune(top)
            self.max_seq = top
            out = copy.copy(frame)
            out.inferred_tx_count, out.is_retx_inferred = span, False
            out.holes, out.duplicates, out.span = n_holes, 0, span
            return out, []
        fresh = seqs[seqs > m]
        old = seqs[seqs <= m]
        dups = 0
        if len(fresh) > 1:
            uniq = np.unique(fresh)
            dups += len(fresh) - len(uniq)
            fresh = uniq
        closed = []
        for s in old.tolist():
            t = self.open_holes.pop(s, None)
            if t is None:
                dups += 1
            else:
                closed.append(t)
        if len(fresh):
            top = int(fresh[-1]) if len(fresh) == 1 else int(fresh.max())
            span = top - m
            n_holes = span - len(fresh)
            if n_holes:
                missing = np.setdiff1d(np.arange(m + 1, top + 1), fresh, assume_unique=True)
                for s in missing.tolist():
                    self.open_holes[s] = tag
            self.max_seq = top
            self._prune(top)
            out = copy.copy(frame)
            # retransmitted members were already charged as holes to their first frame
            out.inferred_tx_count, out.is_retx_inferred = span, False
            out.holes, out.duplicates, out.span = n_holes, dups, span
        else:
            out = copy.copy(frame)
            out.inferred_tx_count, out.is_retx_inferred = max(len(seqs), 1), True
            out.holes, out.duplicates, out.span = 0, dups, 0
        self.seen_dup += dups
        return out, closed


def reconcile_seq(frames: Iterable[ObservedFrame], first_seq: int = 0) -> list[ObservedFrame]:
    rec = SeqReconciler(first_seq)
    return [rec.reconcile(f)[0] for f in frames]


@dataclass
class _Slot:
    agg_sum: float = 0.0
    frames: int = 0
    mcs_sum: float = 0.0
    mcs_n: int = 0
    span: int = 0
    holes: int = 0


class AggMeter:
    """Per-station streaming meter: frames in, one FeedbackReport per slot out."""

    def __init__(self, station: int, delta: float, first_seq: int = 0):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.station = station
        self.delta_us = delta * 1e6
        self.rec = SeqReconciler(first_seq)
        self._slots: dict[int, _Slot] = {}
        self.last_reported = -1

    def slot_of(self, mac_ts_us: float) -> int:
        return int(mac_ts_us // self.delta_us)

    def observe(self, frame: ObservedFrame) -> ObservedFrame:
        k = self.slot_of(frame.mac_timestamp)
        obs, closed = self.rec.reconcile(frame, tag=k)
        for t in closed:
            s = self._slots.get(t)
            if s is not None and t > self.last_reported:
                s.holes -= 1
        slot = self._slots.setdefault(k, _Slot())
        if obs.mcs_rate is not None:
            slot.mcs_sum += obs.mcs_rate
            slot.mcs_n += 1
        if not obs.is_retx_inferred:
            slot.agg_sum += obs.inferred_tx_count
            slot.frames += 1
            slot.span += obs.span
            slot.holes += obs.holes
        return obs

    def observe_packets(self, mac_ts_us: int, seqs: np.ndarray, mcs_rate: Optional[float] = None) -> ObservedFrame:
        return self.observe(ObservedFrame(int(mac_ts_us), seqs, mcs_rate=mcs_rate))

    def report(self, k: int) -> FeedbackReport:
        """Close slot ``k`` (call at time (k+1)*delta) and return its report."""
        s = self._slots.pop(k, None)
        for old in [j for j in self._slots if j < k]:
            del self._slots[old]
        self.last_reported = max(self.last_reported, k)
        if s is None or s.frames == 0:
            mcs = s.mcs_sum / s.mcs_n if s is not None and s.mcs_n else None
            return FeedbackReport(k, self.station, None, mcs, 0, 0.0)
        loss = s.holes / s.span if s.span else 0.0
        return FeedbackReport(k, self.station, s.agg_sum / s.frames,
                              s.mcs_sum / s.mcs_n if s.mcs_n else None, s.frames, max(loss, 0.0))


def slot_report(frames: Iterable[ObservedFrame], delta: float, station: int = 0,
                first_seq: int = 0, reconciled: bool = False) -> list[FeedbackReport]:
    """Batch form of :class:`AggMeter`: one report per slot from 0 to the last frame's slot."""
    frames = list(frames)
    if reconciled:
        # frames already carry counts and flags; feed them without re-reconciling
        return _reports_from_reconciled(frames, delta, station)
    meter = AggMeter(station, delta, first_seq)
    last = -1
    for f in frames:
        meter.observe(f)
        last = max(last, meter.slot_of(f.mac_timestamp))
    return [meter.report(k) for k in range(last + 1)]


def _reports_from_reconciled(frames: list[ObservedFrame], delta: float, station: int) -> list[FeedbackReport]:
    delta_us = delta * 1e6
    slots: dict[int, _Slot] = {}
    for f in frames:
        k = int(f.mac_timestamp // delta_us)
        s = slots.setdefault(k, _Slot())
        if f.mcs_rate is not None:
            s.mcs_sum += f.mcs_rate
            s.mcs_n += 1
        if not f.is_retx_inferred:
            s.agg_sum += f.inferred_tx_count
            s.frames += 1
            s.span += f.span or f.inferred_tx_count
            s.holes += f.holes
    out = []
    for k in range(max(slots, default=-1) + 1):
        s = slots.get(k)
        if s is None or s.frames == 0:
            out.append(FeedbackReport(k, station, None, None, 0, 0.0))
        else:
            out.append(FeedbackReport(k, station, s.agg_sum / s.frames,
                                      s.mcs_sum / s.mcs_n if s.mcs_n else None, s.frames,
                                      s.holes / s.span if s.span else 0.0))
    return out
