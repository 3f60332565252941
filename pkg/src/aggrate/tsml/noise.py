"""Host receive-path timestamp model.

The NIC hands a frame's packets to the host once the frame completes. The
host then timestamps them one by one on a single core. At low packet rates
every frame is announced by an interrupt, so a frame shows up as a tight burst
of timestamps and frames are separated by a clear gap. Above a packet-rate
threshold the driver switches to polling. A poll serves at most ``poll_budget``
packets before the next one, which opens large gaps inside frames. A busy host
also falls behind, so consecutive frames merge and the gaps between them
vanish. Occasional scheduling stalls add jumps anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..sim.config import NoiseConfig

LOAD_WINDOW_US = 20_000.0


@dataclass(frozen=True)
class NoiseParams:
    jitter: float = 1.5
    service: float = 4.0
    irq_gap: float = 40.0
    poll_threshold: float = 30000.0
    poll_gap_mean: float = 60.0
    poll_budget: int = 16
    stall_prob: float = 0.01
    stall_mean: float = 80.0
    host_sd: float = 0.0
    host_hold: float = 0.05

    @classmethod
    def from_config(cls, cfg: NoiseConfig) -> "NoiseParams":
        return cls(cfg.jitter, cfg.service, cfg.irq_gap, cfg.poll_threshold, cfg.poll_gap_mean,
                   cfg.poll_budget, cfg.stall_prob, cfg.stall_mean, cfg.host_sd, cfg.host_hold)


def kernel_noise(frame_end_us: Sequence[float], frame_sizes: Sequence[int], params: NoiseParams,
                 rng: np.random.Generator) -> np.ndarray:
    """Kernel timestamps (us) for every packet of time-ordered delivered frames.

    ``frame_end_us`` is when each frame finished on air and ``frame_sizes`` how
    many of its packets reached the host. Output is in receive order.
    """
    ends = np.asarray(frame_end_us, dtype=np.float64)
    sizes = np.asarray(frame_sizes, dtype=np.int64)
    if len(ends) != len(sizes):
        raise ValueError("frame_end_us and frame_sizes differ in length")
    if len(ends) > 1 and np.any(np.diff(ends) < 0):
        raise ValueError("frames must be time ordered")
    total = int(sizes.sum())
    out = np.empty(total, dtype=np.float64)
    if total == 0:
        return out
    # offered packet rate over a trailing window decides interrupt vs polled mode
    cum = np.concatenate(([0], np.cumsum(sizes)))
    lo = np.searchsorted(ends, ends - LOAD_WINDOW_US, side="left")
    pps = (cum[1:] - cum[lo]) / (LOAD_WINDOW_US * 1e-6)
    polled = pps > params.poll_threshold

    svc = params.service + np.abs(rng.normal(0.0, params.jitter, total))
    stall = rng.random(total) < params.stall_prob
    svc[stall] += rng.exponential(params.stall_mean, int(stall.sum()))
    irq = params.irq_gap + rng.exponential(max(params.jitter, 1e-9) * 4, len(ends))
    budget = max(int(params.poll_budget), 1)
    # host speed: every delay of a frame is stretched by a piecewise-constant factor
    if params.host_sd > 0:
        hold = params.host_hold * 1e6
        lvl = np.floor((ends - ends[0]) / hold).astype(np.int64)
        speed = np.exp(rng.normal(0.0, params.host_sd, int(lvl[-1]) + 1))[lvl]
    else:
        speed = np.ones(len(ends))

    free = -np.inf
    pos = 0
    for f in range(len(ends)):
        n = int(sizes[f])
        if n == 0:
            continue
        c = speed[f]
        s = svc[pos:pos + n] * c
        if polled[f]:
            start = max(ends[f], free) + c * rng.exponential(params.poll_gap_mean)
            k = np.arange(budget, n, budget)
            if len(k):
                s[k] += c * rng.exponential(params.poll_gap_mean, len(k))
        else:
            start = max(ends[f] + c * irq[f], free)
        t = start + np.cumsum(s) - s[0]
        out[pos:pos + n] = t
        free = t[-1] + s[0]
        pos += n
    return out


def kernel_noise_for_trace(trace, rng: np.random.Generator, params: Optional[NoiseParams] = None) -> None:
    """Fill ``t_kernel_rx`` of delivered packets in a recorded trace, in place."""
    p = trace.packets
    if p is None:
        raise ValueError("trace has no packet records")
    params = params or NoiseParams.from_config(trace.scenario.noise)
    f = trace.frames
    fend = dict(zip(f["frame_id"].tolist(), f["t_end"].tolist()))
    for sid in np.unique(p["station"]).tolist():
        idx = np.flatnonzero((p["station"] == sid) & (p["dropped"] == 0))
        if len(idx) == 0:
            continue
        rx = p["t_mac_rx"][idx]
        order = np.lexsort((p["seq"][idx], rx))
        idx = idx[order]
        fid = p["frame_id"][idx]
        starts = np.flatnonzero(np.concatenate(([True], fid[1:] != fid[:-1])))
        sizes = np.diff(np.append(starts, len(idx)))
        ends = np.array([fend[x] for x in fid[starts].tolist()], dtype=np.float64)
        p["t_kernel_rx"][idx] = kernel_noise(ends, sizes, params, rng)
