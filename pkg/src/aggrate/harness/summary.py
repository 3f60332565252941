"""Per-run metric summaries and the closed-loop runner."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from ..controller import agg_series, convergence_metrics
from ..metrics import jain_index
from ..sim.airtime import theoretical_goodput
from ..sim.config import Scenario
from ..sim.engine import run_scenario
from ..sim.trace import DROP_AP_QUEUE, DROP_BACKHAUL, DROP_RETRY, Trace


@dataclass
class MetricSummary:
    scenario: str
    digest: str
    seed: int
    axis: str = ""
    value: object = ""
    n_stations: int = 0
    goodput: float = 0.0  # total over regulated/open-loop stations, bits/s
    goodput_min: float = 0.0
    goodput_max: float = 0.0
    goodput_bound: float = 0.0  # all stations together
    goodput_all: float = 0.0  # including legacy stations
    jain: float = math.nan
    delay_mean: float = math.nan  # s
    delay_p50: float = math.nan
    delay_p95: float = math.nan
    delay_p99: float = math.nan
    legacy_goodput: float = math.nan  # per legacy station
    legacy_delay_mean: float = math.nan
    drops_backhaul: int = 0
    drops_ap: int = 0
    drops_retry: int = 0
    mean_agg: float = math.nan
    time_to_target: float = math.nan
    agg_std: float = math.nan
    converged: Optional[bool] = None
    f1: float = math.nan
    rmse: float = math.nan

    def row(self) -> dict:
        return asdict(self)


SUMMARY_COLUMNS = [f.name for f in fields(MetricSummary)]


def goodput_bound(sc: Scenario) -> float:
    """Upper bound on total delivered payload rate for a scenario.

    Back-to-back full frames at the highest PHY rate any station can reach,
    with no backoff (several contenders shrink the idle gap below one
    station's mean backoff) and beacon airtime removed.
    """
    peak = 0.0
    length = 0
    for st in sc.stations:
        r = max([st.mcs_rate] + [m for _, m in st.mcs_schedule])
        if st.variation is not None:
            r *= st.variation.ceil
        peak = max(peak, r)
        length = max(length, st.packet_len)
    if peak == 0:
        return 0.0
    ap = max(sc.aps, key=lambda a: a.n_max)
    best = replace(ap, cw_min=1)
    return theoretical_goodput(best.n_max, peak, 1, 0.0, ap.beacon_pps, packet_len=length, ap=best)


def summarize(trace: Trace, warmup: float = 0.0, axis: str = "", value="") -> MetricSummary:
    """Collapse a trace into one summary row; steady-state figures skip ``warmup`` seconds."""
    sc = trace.scenario
    modes = {s.sid: s.mode for s in sc.stations}
    active = [sid for sid, m in modes.items() if m != "legacy"]
    legacy = [sid for sid, m in modes.items() if m == "legacy"]
    out = MetricSummary(sc.name, sc.digest(), trace.seed, axis, value, len(sc.stations))
    out.goodput_bound = goodput_bound(sc)
    out.goodput_all = sum(trace.stations[s].bits for s in trace.stations) / trace.duration
    for st in trace.stations.values():
        out.drops_backhaul += st.drops[DROP_BACKHAUL]
        out.drops_ap += st.drops[DROP_AP_QUEUE]
        out.drops_retry += st.drops[DROP_RETRY]
    if active:
        g = np.array([trace.goodput(s, warmup) for s in active])
        out.goodput = float(g.sum())
        out.goodput_min, out.goodput_max = float(g.min()), float(g.max())
        if g.sum() > 0:
            out.jain = jain_index(g)
        d = np.concatenate([trace.delays(s, warmup) for s in active])
        if len(d):
            out.delay_mean = float(d.mean())
            out.delay_p50, out.delay_p95, out.delay_p99 = (float(v) for v in np.percentile(d, [50, 95, 99]))
        aggs = [trace.mean_agg(s, warmup) for s in active]
        out.mean_agg = float(np.mean(aggs))
    if legacy:
        out.legacy_goodput = float(np.mean([trace.goodput(s, warmup) for s in legacy]))
        d = np.concatenate([trace.delays(s, warmup) for s in legacy])
        if len(d):
            out.legacy_delay_mean = float(d.mean())
    c = sc.controller
    if c.enabled and trace.controller_log:
        series = agg_series(trace.controller_log, active[0]) if active else np.zeros(0)
        if len(series) >= 20:
            conv = convergence_metrics(series, c.n_eps, c.delta)
            out.time_to_target, out.agg_std, out.converged = conv.time_to_target, conv.std, conv.converged
    return out


def run_closed_loop(sc: Scenario, warmup: float = 0.0) -> tuple[Trace, MetricSummary]:
    """Run a scenario with the rate controller in the loop and summarise it."""
    if not sc.controller.enabled:
        raise ValueError("run_closed_loop needs controller.enabled")
    tr = run_scenario(sc)
    return tr, summarize(tr, warmup)
