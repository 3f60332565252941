"""Aggregation-regulating rate controller.

Each slot the sender moves its rate against the aggregation error
``N - n_eps``: too much aggregation means the AP queue is building, too little
means spare airtime. With several stations only the station with the highest
MCS rate is driven by the error; the others are set in proportion to their MCS
rate so that payload airtimes come out equal.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .meter import FeedbackReport

MBPS = 1e6  # gain K is expressed in Mb/s per packet of aggregation error


@dataclass(frozen=True)
class ControllerParams:
    k0: float = 1.0
    delta: float = 0.5
    n_eps: float = 32.0
    n_stations: int = 1
    x_min: float = 1e6
    x_max: float = 10e9
    literal_eq1: bool = False  # drive i* with the station-averaged aggregation

    @property
    def gain(self) -> float:
        """Effective gain in bits/s per packet."""
        return self.k0 / max(self.n_stations, 1) * MBPS

    def clamp(self, x: float) -> float:
        return min(max(x, self.x_min), self.x_max)


# rate vector keyed by station id
RateVector = dict


def update_rate_single(x: float, report: Optional[FeedbackReport], params: ControllerParams) -> float:
    """One integral step; an empty or missing report holds the rate."""
    if report is None or report.frame_count == 0 or report.mean_agg is None:
        return x
    return params.clamp(x - params.gain * (report.mean_agg - params.n_eps))


def pick_reference(mcs: Mapping[int, float]) -> Optional[int]:
    """Station with the highest MCS estimate, lowest id on ties."""
    best, best_r = None, -math.inf
    for sid in sorted(mcs):
        r = mcs[sid]
        if r is not None and r > best_r:
            best, best_r = sid, r
    return best


def update_rates_multi(rates: Mapping[int, float], reports: Mapping[int, FeedbackReport],
                       params: ControllerParams,
                       mcs_estimates: Optional[Mapping[int, float]] = None) -> tuple[RateVector, Optional[int]]:
    """Drive the highest-MCS station with its aggregation error, scale the rest by MCS ratio.

    ``mcs_estimates`` supplies the last known MCS of stations without a fresh
    estimate this slot. Returns the new rate vector and the reference station;
    when the reference has no aggregation measurement all rates are held.
    """
    mcs = dict(mcs_estimates or {})
    for sid, rep in reports.items():
        if rep is not None and rep.mean_mcs is not None:
            mcs[sid] = rep.mean_mcs
    mcs = {sid: r for sid, r in mcs.items() if sid in rates}
    i_star = pick_reference(mcs)
    out = dict(rates)
    if i_star is None:
        return out, None
    rep = reports.get(i_star)
    if rep is None or rep.frame_count == 0 or rep.mean_agg is None:
        return out, i_star
    n_bar = rep.mean_agg
    if params.literal_eq1:
        vals = [r.mean_agg for r in reports.values()
                if r is not None and r.frame_count > 0 and r.mean_agg is not None]
        n_bar = float(np.mean(vals))
    x_star = params.clamp(rates[i_star] - params.gain * (n_bar - params.n_eps))
    r_star = mcs[i_star]
    for sid in rates:
        if sid == i_star:
            out[sid] = x_star
        elif sid in mcs:
            out[sid] = params.clamp(x_star * mcs[sid] / r_star)
    return out, i_star


@dataclass(frozen=True)
class LogRow:
    slot: int
    station: int
    mean_agg: Optional[float]
    mean_mcs: Optional[float]
    x_before: float
    x_after: float
    i_star: Optional[int]
    t_apply: float = 0.0


class Controller:
    """Per-WLAN controller state: rates, MCS estimates and the slot log."""

    def __init__(self, stations: Sequence[int], params: ControllerParams, x0: float = 50e6):
        if not stations:
            raise ValueError("controller needs at least one station")
        self.params = params
        self.stations = sorted(stations)
        self.rates: RateVector = {s: params.clamp(x0) for s in self.stations}
        self.mcs: dict[int, float] = {}
        self.log: list[LogRow] = []

    def tick(self, k: int, reports: Mapping[int, FeedbackReport], t_apply: float = 0.0) -> RateVector:
        before = dict(self.rates)
        if len(self.stations) == 1:
            sid = self.stations[0]
            rep = reports.get(sid)
            self.rates = {sid: update_rate_single(before[sid], rep, self.params)}
            i_star = sid
        else:
            self.rates, i_star = update_rates_multi(before, reports, self.params, self.mcs)
        for sid, rep in reports.items():
            if rep is not None and rep.mean_mcs is not None:
                self.mcs[sid] = rep.mean_mcs
        for sid in self.stations:
            rep = reports.get(sid)
            self.log.append(LogRow(k, sid, rep.mean_agg if rep else None,
                                   rep.mean_mcs if rep else None,
                                   before[sid], self.rates[sid], i_star, t_apply))
        return dict(self.rates)


LOG_COLUMNS = ("slot", "station", "mean_agg", "mean_mcs", "x_before", "x_after", "i_star")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def log_to_csv(rows: Iterable[LogRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in rows:
        w.writerow([_cell(getattr(r, c)) for c in LOG_COLUMNS])
    return buf.getvalue()


@dataclass(frozen=True)
class Convergence:
    time_to_target: float
    std: float
    converged: bool
    slot: Optional[int]


def agg_series(rows: Iterable[LogRow], station: Optional[int] = None) -> np.ndarray:
    """Per-slot aggregation of one station (NaN where the slot was empty)."""
    rows = list(rows)
    if station is None and rows:
        station = rows[0].station
    vals = {}
    for r in rows:
        if r.station == station:
            vals[r.slot] = np.nan if r.mean_agg is None else r.mean_agg
    if not vals:
        return np.zeros(0)
    out = np.full(max(vals) + 1, np.nan)
    for k, v in vals.items():
        out[k] = v
    return out


def convergence_metrics(series, n_eps: float = 32.0, delta: float = 0.5, band: float = 0.10,
                        hold: int = 5, min_slots: int = 20) -> Convergence:
    """Time until aggregation enters and stays ``hold`` slots within ``band`` of target.

    ``series`` is a per-slot aggregation array or a controller log. The spread
    is measured from the convergence slot onwards, or over the second half of
    the run when the target is never held.
    """
    if not isinstance(series, np.ndarray):
        series = list(series)
        if series and isinstance(series[0], LogRow):
            series = agg_series(series)
    n = np.asarray(series, dtype=float)
    if len(n) < min_slots:
        raise ValueError(f"need at least {min_slots} slots, got {len(n)}")
    inside = np.abs(n - n_eps) <= band * n_eps  # NaN compares False
    run = 0
    for k, ok in enumerate(inside):
        run = run + 1 if ok else 0
        if run == hold:
            k0 = k - hold + 1
            return Convergence(k0 * delta, float(np.nanstd(n[k0:])), True, k0)
    tail = n[len(n) // 2:]
    std = float(np.nanstd(tail)) if np.isfinite(tail).any() else math.inf
    return Convergence(len(n) * delta, std, False, None)
