"""Simulation output: frame table, optional per-packet table, per-station totals."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import Scenario

# drop codes in the packet table
DELIVERED = 0
DROP_BACKHAUL = 1
DROP_AP_QUEUE = 2
DROP_RETRY = 3
IN_FLIGHT = 4  # still queued somewhere when the run ended

FRAME_DTYPE = np.dtype([
    ("frame_id", np.int64), ("station", np.int32), ("ap", np.int16), ("n_agg", np.int32),
    ("n_lost", np.int32), ("mcs_rate", np.float64), ("t_start", np.int64), ("t_end", np.int64),
    ("is_retx", np.bool_), ("collided", np.bool_),
])

PACKET_DTYPE = np.dtype([
    ("seq", np.int64), ("station", np.int32), ("t_send", np.float64), ("t_ap_arrival", np.float64),
    ("frame_id", np.int64), ("t_mac_rx", np.int64), ("t_kernel_rx", np.float64),
    ("dropped", np.int8), ("lost_in_frame", np.int16),
])


@dataclass
class StationStats:
    sid: int
    mode: str
    sent: int = 0
    delivered: int = 0
    drops: dict = field(default_factory=lambda: {DROP_BACKHAUL: 0, DROP_AP_QUEUE: 0, DROP_RETRY: 0})
    in_flight: int = 0
    bits: float = 0.0
    delays: np.ndarray = field(default_factory=lambda: np.zeros(0, np.float32))  # us, per delivered packet
    delay_times: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))  # us, rx frame start

    @property
    def overflow_drops(self) -> int:
        return self.drops[DROP_AP_QUEUE]


@dataclass
class Trace:
    """Everything one run produced. Times in the tables are microseconds."""

    scenario: Scenario
    seed: int
    duration: float
    frames: np.ndarray
    stations: dict
    controller_log: list = field(default_factory=list)
    reports: list = field(default_factory=list)
    packets: Optional[np.ndarray] = None
    channel_busy_us: int = 0

    def station_frames(self, sid: int) -> np.ndarray:
        return self.frames[self.frames["station"] == sid]

    def goodput(self, sid: int, t0: float = 0.0) -> float:
        """Delivered payload bits/s of a station, optionally from ``t0`` seconds on."""
        st = self.stations[sid]
        if t0 <= 0:
            return st.bits / self.duration
        n = int(np.count_nonzero(st.delay_times >= t0 * 1e6))
        return n * self._packet_len(sid) / (self.duration - t0)

    def _packet_len(self, sid: int) -> int:
        for s in self.scenario.stations:
            if s.sid == sid:
                return s.packet_len
        raise KeyError(sid)

    def delays(self, sid: int, t0: float = 0.0) -> np.ndarray:
        """One-way delays (s) of packets delivered from ``t0`` seconds on."""
        st = self.stations[sid]
        d = st.delays.astype(np.float64) * 1e-6
        if t0 > 0:
            d = d[st.delay_times >= t0 * 1e6]
        return d

    def mean_agg(self, sid: Optional[int] = None, t0: float = 0.0, fresh_only: bool = True) -> float:
        f = self.frames
        m = f["t_start"] >= t0 * 1e6
        if sid is not None:
            m &= f["station"] == sid
        if fresh_only:
            m &= ~f["is_retx"]
        return float(f["n_agg"][m].mean()) if m.any() else 0.0

    # -- CSV export ----------------------------------------------------------

    def frames_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame_id", "station", "ap", "n_agg", "n_lost", "mcs_rate", "t_start", "t_end",
                    "is_retx", "collided"])
        f = self.frames
        for row in zip(f["frame_id"].tolist(), f["station"].tolist(), f["ap"].tolist(),
                       f["n_agg"].tolist(), f["n_lost"].tolist(), np.rint(f["mcs_rate"]).astype(np.int64).tolist(),
                       f["t_start"].tolist(), f["t_end"].tolist(), f["is_retx"].astype(int).tolist(),
                       f["collided"].astype(int).tolist()):
            w.writerow(row)
        return buf.getvalue()

    def packets_csv(self) -> str:
        if self.packets is None:
            raise ValueError("packet records were not kept; set record_packets")
        p = self.packets
        fid = p["frame_id"]
        by_id = {}
        f = self.frames
        if len(f):
            by_id = dict(zip(f["frame_id"].tolist(), zip(f["n_agg"].tolist(),
                                                         np.rint(f["mcs_rate"]).astype(np.int64).tolist(),
                                                         f["is_retx"].astype(int).tolist())))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seq", "station", "t_send", "t_ap_arrival", "frame_id", "n_agg", "mcs_rate",
                    "t_mac_rx", "t_kernel_rx", "dropped", "is_retx"])

        def us(col):
            v = p[col]
            ok = np.isfinite(v)
            out = np.where(ok, np.rint(np.where(ok, v, 0)), 0).astype(np.int64).tolist()
            return [x if k else "" for x, k in zip(out, ok.tolist())]

        ts, ta, tk = us("t_send"), us("t_ap_arrival"), us("t_kernel_rx")
        rx = p["t_mac_rx"].tolist()
        for i, (seq, sid, fr, dr) in enumerate(zip(p["seq"].tolist(), p["station"].tolist(),
                                                   fid.tolist(), p["dropped"].tolist())):
            n_agg, mcs, retx = by_id.get(fr, ("", "", ""))
            w.writerow([seq, sid, ts[i], ta[i], fr if fr >= 0 else "", n_agg, mcs,
                        rx[i] if rx[i] >= 0 else "", tk[i], dr, retx])
        return buf.getvalue()

    def controller_csv(self) -> str:
        from ..controller import log_to_csv
        return log_to_csv(self.controller_log)
