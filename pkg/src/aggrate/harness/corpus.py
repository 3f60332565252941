"""Synthetic training and evaluation corpora for the learned estimators.

Boundary corpus: open-loop AMSDU traces across send rates with modelled
kernel timestamps. Bottleneck corpus: link-limited runs (100 Mb/s and
1 Gb/s) plus switched cross traffic on a gigabit link.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..bottleneck import build_clf_features
from ..meter import ObservedFrame, cluster_by_mac_timestamp
from ..sim.config import NoiseConfig, Scenario
from ..sim.engine import run_scenario
from ..sim.trace import DELIVERED
from ..tsml.logit import LogitModel, boundary_labels, build_boundary_features, segment_frames
from ..tsml.rbf import slot_features, slot_stats
from . import presets


class SchemaError(ValueError):
    pass


# -- frame-boundary corpus -------------------------------------------------------

@dataclass
class BoundaryTrace:
    rate: float
    ts_us: np.ndarray  # kernel timestamps in receive order
    frame_id: np.ndarray

    @property
    def labels(self) -> np.ndarray:
        return boundary_labels(self.frame_id)


def delivered_packets(trace, station: int = 0) -> np.ndarray:
    p = trace.packets
    return p[(p["station"] == station) & (p["dropped"] == DELIVERED)]


def boundary_trace(rate: float, seed: int = 0, duration: float = 3.0,
                   noise: Optional[NoiseConfig] = None) -> BoundaryTrace:
    tr = run_scenario(presets.tsml_trace(rate, duration, seed, noise))
    p = delivered_packets(tr)
    p = p[np.argsort(p["t_kernel_rx"], kind="stable")]
    return BoundaryTrace(rate, p["t_kernel_rx"].astype(np.float64), p["frame_id"].astype(np.int64))


def boundary_corpus(rates: Sequence[float] = presets.TSML_RATES, seed: int = 0, duration: float = 3.0,
                    noise: Optional[NoiseConfig] = None) -> list[BoundaryTrace]:
    return [boundary_trace(r, seed * 1000 + i, duration, noise) for i, r in enumerate(rates)]


def boundary_dataset(traces: Sequence[BoundaryTrace], m: int = 20, use_sigma: bool = True):
    """Stacked features, labels and the send rate of every row."""
    Xs, ys, loads = [], [], []
    for t in traces:
        X = build_boundary_features(t.ts_us, m, use_sigma)
        Xs.append(X)
        ys.append(t.labels[m:])
        loads.append(np.full(len(X), t.rate))
    dim = m + 1 if use_sigma else m
    if not Xs:
        return np.zeros((0, dim)), np.zeros(0, np.int8), np.zeros(0)
    return np.vstack(Xs), np.concatenate(ys), np.concatenate(loads)


BOUNDARY_COLUMNS = ["packet_index", "kernel_ts_us", "label", "frame_id", "rate"]


def write_boundary_csv(traces: Sequence[BoundaryTrace], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BOUNDARY_COLUMNS)
        for t in traces:
            for i, (ts, lab, fid) in enumerate(zip(t.ts_us.tolist(), t.labels.tolist(), t.frame_id.tolist())):
                w.writerow([i, repr(ts), lab, fid, repr(float(t.rate))])


def read_boundary_csv(path) -> list[BoundaryTrace]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        head = next(r, None)
        if head != BOUNDARY_COLUMNS:
            raise SchemaError(f"{path}: expected columns {BOUNDARY_COLUMNS}, got {head}")
        rows = list(r)
    out: dict = {}
    for _, ts, _, fid, rate in rows:
        out.setdefault(float(rate), ([], []))
        out[float(rate)][0].append(float(ts))
        out[float(rate)][1].append(int(fid))
    return [BoundaryTrace(rate, np.array(a), np.array(b, np.int64)) for rate, (a, b) in out.items()]


# -- slot corpus for the corrector --------------------------------------------

@dataclass
class SlotSet:
    X: np.ndarray
    y: np.ndarray  # true slot mean aggregation
    raw: np.ndarray  # slot mean of the boundary estimator
    load: np.ndarray


def slot_rows(t: BoundaryTrace, model: LogitModel, n_max: int = 128, slot: float = 0.1, d: int = 5):
    """Slot features from a boundary model's labels, with the true slot means.

    Packets before the model's first estimate are treated as unlabelled; a
    frame is stamped with the kernel timestamp of its first packet.
    """
    m = model.m
    lab = np.zeros(len(t.ts_us), np.int8)
    if len(t.ts_us) > m:
        lab[m:] = model.predict(build_boundary_features(t.ts_us, m, model.uses_sigma))
    starts, sizes = segment_frames(lab, n_max)
    est = slot_stats(t.ts_us[starts], sizes, slot)
    true_starts = np.flatnonzero(t.labels)
    true_sizes = np.diff(np.append(true_starts, len(t.ts_us)))
    truth = slot_stats(t.ts_us[true_starts], true_sizes, slot)
    X, rows = slot_features(est, d)
    truth_of = dict(zip(truth.slot.tolist(), truth.mu.tolist()))
    keep = np.array([est.slot[i] in truth_of for i in rows], dtype=bool)
    rows = rows[keep]
    y = np.array([truth_of[est.slot[i]] for i in rows], dtype=np.float64)
    return X[keep], y, est.mu[rows]


def slot_dataset(traces: Sequence[BoundaryTrace], model: LogitModel, n_max: int = 128, slot: float = 0.1,
                 d: int = 5) -> SlotSet:
    parts = [slot_rows(t, model, n_max, slot, d) + (t.rate,) for t in traces]
    if not parts:
        return SlotSet(np.zeros((0, d + 2)), np.zeros(0), np.zeros(0), np.zeros(0))
    return SlotSet(np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                   np.concatenate([p[2] for p in parts]),
                   np.concatenate([np.full(len(p[1]), p[3]) for p in parts]))


# -- bottleneck corpus ------------------------------------------------------------

LINK_RATES = {
    100e6: (105e6, 110e6, 120e6, 150e6, 200e6, 300e6, 400e6, 600e6),
    1000e6: (50e6, 100e6, 200e6, 300e6, 400e6, 500e6, 600e6, 700e6),
}
CROSS_RATES = (300e6, 500e6, 600e6)


@dataclass
class ClfRun:
    source: str  # "link" or "cross"
    rate: float
    frames: list  # ObservedFrame, receive order
    labels: np.ndarray  # per frame: 1 = backhaul bottleneck


def observed_frames(trace, station: int = 0) -> list[ObservedFrame]:
    p = delivered_packets(trace, station)
    p = p[np.lexsort((p["seq"], p["t_mac_rx"]))]
    return cluster_by_mac_timestamp(p["seq"], p["t_mac_rx"])


def backhaul_limited(sc: Scenario, t_s: np.ndarray) -> np.ndarray:
    """Ground truth: offered load on the wired link exceeds its rate at time ``t_s``."""
    bh = sc.backhaul
    if bh.link_rate is None:
        return np.zeros(len(t_s), np.int8)
    offered = np.full(len(t_s), sum(s.rate for s in sc.stations if s.mode != "legacy"))
    if bh.cross_rate > 0:
        if bh.cross_schedule:
            on = np.zeros(len(t_s), bool)
            for a, b in bh.cross_schedule:
                on |= (t_s >= a) & (t_s < b)
        else:
            on = np.ones(len(t_s), bool)
        offered = offered + on * bh.cross_rate
    return (offered > bh.link_rate).astype(np.int8)


def clf_run(sc: Scenario, source: str) -> ClfRun:
    tr = run_scenario(sc)
    frames = observed_frames(tr)
    t = np.array([f.mac_timestamp for f in frames], dtype=np.float64) * 1e-6
    return ClfRun(source, sc.stations[0].rate, frames, backhaul_limited(sc, t))


def clf_corpus(seed: int = 0, duration: float = 2.0, link_rates: Optional[dict] = None,
               cross_rates: Sequence[float] = CROSS_RATES) -> list[ClfRun]:
    runs = []
    k = 0
    for link, rates in (link_rates or LINK_RATES).items():
        for r in rates:
            runs.append(clf_run(presets.link_limited(link, r, duration, seed * 1000 + k), "link"))
            k += 1
    for r in cross_rates:
        runs.append(clf_run(presets.cross_traffic(r, duration, seed * 1000 + k), "cross"))
        k += 1
    return runs


@dataclass
class ClfSet:
    X: np.ndarray
    y: np.ndarray
    t_us: np.ndarray
    load: np.ndarray
    frame_index: np.ndarray


def clf_dataset(runs: Sequence[ClfRun], n: int = 5, p: int = 100) -> ClfSet:
    Xs, ys, ts, loads, idxs = [], [], [], [], []
    for run in runs:
        X, idx = build_clf_features(run.frames, n, p)
        Xs.append(X)
        ys.append(run.labels[idx])
        ts.append(np.array([run.frames[i].mac_timestamp for i in idx], dtype=np.int64))
        loads.append(np.full(len(idx), run.rate))
        idxs.append(idx)
    if not Xs:
        z = np.zeros(0)
        return ClfSet(np.zeros((0, n + 1)), z.astype(np.int8), z.astype(np.int64), z, z.astype(np.int64))
    return ClfSet(np.vstack(Xs), np.concatenate(ys), np.concatenate(ts), np.concatenate(loads),
                  np.concatenate(idxs))


def write_clf_csv(data: ClfSet, path) -> None:
    n = data.X.shape[1] - 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index"] + [f"agg{j}" for j in range(n)] + ["loss", "label", "t_us", "rate"])
        for i in range(len(data.y)):
            w.writerow([int(data.frame_index[i])] + [repr(float(v)) for v in data.X[i]]
                       + [int(data.y[i]), int(data.t_us[i]), repr(float(data.load[i]))])


def read_clf_csv(path) -> ClfSet:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        head = next(r, None)
        if not head or head[0] != "frame_index" or head[-4:] != ["loss", "label", "t_us", "rate"]:
            raise SchemaError(f"{path}: not a bottleneck corpus")
        rows = [list(map(float, row)) for row in r]
    a = np.array(rows, dtype=np.float64).reshape(len(rows), len(head))
    return ClfSet(a[:, 1:-3], a[:, -3].astype(np.int8), a[:, -2].astype(np.int64), a[:, -1],
                  a[:, 0].astype(np.int64))


def corpus_kind(path) -> str:
    """'boundary' or 'bottleneck' from a corpus file's header."""
    with open(Path(path), newline="") as fh:
        head = next(csv.reader(fh), None)
    if head == BOUNDARY_COLUMNS:
        return "boundary"
    if head and head[0] == "frame_index":
        return "bottleneck"
    raise SchemaError(f"{path}: unrecognised corpus header")
