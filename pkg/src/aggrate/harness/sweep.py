"""Parameter sweeps over one scenario field, one summary row per value and seed."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, Optional, Sequence

import numpy as np

from ..sim.config import Scenario, set_field
from ..sim.engine import run_scenario
from .summary import SUMMARY_COLUMNS, MetricSummary, summarize


def _point(args) -> MetricSummary:
    sc, axis, value, warmup = args
    return summarize(run_scenario(sc), warmup, axis, value)


def sweep_points(template: Scenario, axis: str, values: Sequence, seeds: Optional[Sequence[int]] = None):
    """The scenarios a sweep will run, in output order (value-major, then seed)."""
    set_field(template, axis, None)  # rejects unknown axes even for an empty grid
    seeds = list(seeds) if seeds is not None else list(template.seeds or (template.seed,))
    out = []
    for v in values:
        sc = set_field(template, axis, v)
        for s in seeds:
            out.append((sc.with_seed(s).validate(), v))
    return out


def sweep(template: Scenario, axis: str, values: Sequence, seeds: Optional[Sequence[int]] = None,
          warmup: float = 0.0, workers: int = 1) -> list[MetricSummary]:
    """Run ``template`` with ``axis`` set to each value for every seed.

    Every point is an independent simulation with its own RNG; with
    ``workers > 1`` points run in separate processes, but rows always come
    back in (value, seed) order.
    """
    jobs = [(sc, axis, v, warmup) for sc, v in sweep_points(template, axis, values, seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_point, jobs))
    return [_point(j) for j in jobs]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def summaries_to_csv(rows: Iterable[MetricSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        d = r.row()
        w.writerow([_cell(d[c]) for c in SUMMARY_COLUMNS])
    return buf.getvalue()


def column(rows: Sequence[MetricSummary], name: str, reduce: str = "median") -> list:
    """Per-value reduction of one column across seeds, in axis order."""
    groups: dict = {}
    order = []
    for r in rows:
        key = repr(r.value)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(getattr(r, name))
    fn = {"median": np.median, "mean": np.mean, "max": np.max, "min": np.min}[reduce]
    return [float(fn(np.asarray(groups[k], dtype=float))) for k in order]
