"""Frame airtime, channel access and the saturated goodput bound."""

from __future__ import annotations

import numpy as np

from .config import ApConfig


def frame_airtime(n_agg: int, packet_bits: float, mcs_rate: float, overhead: float) -> float:
    """Channel occupancy in seconds of a frame aggregating ``n_agg`` packets.

    The payload portion is exactly ``n_agg * packet_bits / mcs_rate``.
    """
    if n_agg <= 0 or packet_bits <= 0 or mcs_rate <= 0 or overhead < 0:
        raise ValueError("frame_airtime arguments must be positive")
    return overhead + n_agg * packet_bits / mcs_rate


def mean_access_delay(ap: ApConfig) -> float:
    """Expected DIFS + backoff with no collisions."""
    return ap.difs + ap.slot_time * (ap.cw_min - 1) / 2.0


def theoretical_goodput(
    n_eps: int,
    mcs_rate: float,
    nss: int = 1,
    feedback_pps: float = 10.0,
    beacons_pps: float = 10.0,
    *,
    n_stations: int = 1,
    packet_len: int = 12000,
    ap: ApConfig | None = None,
) -> float:
    """Collision-free goodput (bits/s) of back-to-back frames of ``n_eps`` packets.

    ``mcs_rate`` is the per-spatial-stream PHY rate, so the frame is sent at
    ``mcs_rate * nss``. Airtime spent on beacons and on ``feedback_pps`` reports
    per receiver is removed from the time available for data.
    """
    ap = ap or ApConfig()
    if not 1 <= n_eps <= ap.n_max:
        raise ValueError(f"n_eps must lie in [1, {ap.n_max}]")
    if mcs_rate <= 0 or nss < 1:
        raise ValueError("mcs_rate and nss must be positive")
    per_frame = mean_access_delay(ap) + frame_airtime(
        n_eps, packet_len + ap.mpdu_overhead_bits, mcs_rate * nss, ap.phy_overhead
    )
    control = beacons_pps * ap.beacon_airtime + n_stations * feedback_pps * ap.feedback_airtime
    if control >= 1.0:
        return 0.0
    return (1.0 - control) * n_eps * packet_len / per_frame


def channel_access_interval(contenders: int, rng: np.random.Generator, ap: ApConfig | None = None,
                            max_rounds: int = 64) -> float:
    """Idle time (s) before a tagged station wins the channel against saturated rivals.

    Every contender draws a uniform backoff in ``[0, cw)``. Equal minimum draws
    collide; colliders double ``cw`` (up to ``cw_max``) and the round restarts
    after another DIFS. Rival transmissions are not included, only idle time.
    """
    if contenders < 1:
        raise ValueError("contenders must be >= 1")
    ap = ap or ApConfig()
    cw = np.full(contenders, ap.cw_min, dtype=np.int64)
    counters = rng.integers(0, cw)
    total = 0.0
    for _ in range(max_rounds):
        total += ap.difs
        low = counters.min()
        total += low * ap.slot_time
        counters -= low
        winners = np.flatnonzero(counters == 0)
        if len(winners) == 1 and winners[0] == 0:
            return total
        if len(winners) > 1:
            cw[winners] = np.minimum(cw[winners] * 2, ap.cw_max)
        else:
            cw[winners] = ap.cw_min
        counters[winners] = rng.integers(0, cw[winners])
    return total
