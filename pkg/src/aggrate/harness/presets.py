"""Named scenario presets used by the CLI, the sweeps and the acceptance checks."""

from __future__ import annotations

from dataclasses import replace
from typing import Callable, Optional

from ..sim.config import (ApConfig, BackhaulConfig, ChannelVariation, ControllerConfig, NoiseConfig,
                          Scenario, StationConfig)

# two-stream MCS 9 at 80 MHz, the default station PHY rate
MCS9_NSS2 = 780e6
# two-stream MCS 7; used for the gain/interval study where loop gain matters
MCS7_NSS2 = 585e6

# channel wander used for the parameter studies: 100 ms fast fading on top of a slow drift
STUDY_CHANNEL = ChannelVariation(fast_sd=0.05, fast_hold=0.1, slow_sd=0.015, slow_hold=15.0)

SEND_RATES = (10e6, 50e6, 100e6, 200e6, 300e6, 400e6, 500e6, 600e6)
TSML_RATES = (50e6, 100e6, 200e6, 300e6, 400e6, 500e6, 600e6, 700e6)
LOW_MID_RATES = (50e6, 100e6, 200e6, 300e6, 400e6)
HIGH_RATES = (500e6, 600e6, 700e6)


def open_loop(rate: float = 100e6, duration: float = 10.0, seed: int = 0, mcs: float = MCS9_NSS2,
              n_max: int = 64, record_packets: bool = False) -> Scenario:
    """Single station, fixed send rate, no controller."""
    return Scenario(name="open-loop", duration=duration, seed=seed, aps=(ApConfig(n_max=n_max),),
                    stations=(StationConfig(0, mcs_rate=mcs, rate=rate),), record_packets=record_packets)


def saturated(duration: float = 10.0, seed: int = 0, mcs: float = MCS9_NSS2) -> Scenario:
    """Single always-backlogged station: the delay reference for regulation."""
    return Scenario(name="saturated", duration=duration, seed=seed,
                    stations=(StationConfig(0, mcs_rate=mcs, mode="legacy"),))


def closed_loop(duration: float = 60.0, seed: int = 0, k0: float = 1.0, delta: float = 0.5,
                n_eps: float = 32.0, mcs: float = MCS9_NSS2, variation: Optional[ChannelVariation] = None,
                mcs_schedule: tuple = ()) -> Scenario:
    """Single controlled station."""
    st = StationConfig(0, mcs_rate=mcs, variation=variation, mcs_schedule=mcs_schedule)
    return Scenario(name="closed-loop", duration=duration, seed=seed, stations=(st,),
                    controller=ControllerConfig(enabled=True, k0=k0, delta=delta, n_eps=n_eps))


def param_study(duration: float = 100.0, seed: int = 0, k0: float = 1.0, delta: float = 1.0) -> Scenario:
    """Closed loop on the wandering two-stream MCS 7 channel."""
    sc = closed_loop(duration, seed, k0, delta, mcs=MCS7_NSS2, variation=STUDY_CHANNEL)
    return replace(sc, name="param-study")


def channel_drop(duration: float = 40.0, seed: int = 0, t_drop: float = 20.0, k0: float = 1.0,
                 delta: float = 0.5) -> Scenario:
    """Closed loop where the PHY rate halves at ``t_drop``."""
    sc = closed_loop(duration, seed, k0, delta, mcs_schedule=((t_drop, MCS9_NSS2 / 2),))
    return replace(sc, name="channel-drop")


def fairness(n: int, duration: float = 30.0, seed: int = 0, mcs=None, k0: float = 1.0,
             delta: float = 0.5) -> Scenario:
    """``n`` controlled stations on one AP; ``mcs`` may list a PHY rate per station."""
    rates = list(mcs) if mcs is not None else [MCS9_NSS2] * n
    if len(rates) != n:
        raise ValueError("need one PHY rate per station")
    sts = tuple(StationConfig(i, mcs_rate=r) for i, r in enumerate(rates))
    return Scenario(name=f"fairness-{n}", duration=duration, seed=seed, stations=sts,
                    controller=ControllerConfig(enabled=True, k0=k0, delta=delta))


def coexistence(n_controlled: int = 2, n_legacy: int = 2, shared_ap: bool = False, duration: float = 30.0,
                seed: int = 0) -> Scenario:
    """Controlled and always-backlogged stations.

    With ``shared_ap`` all stations hang off one AP; otherwise each group has its
    own AP and the two BSSs contend for the channel.
    """
    aps = (ApConfig(),) if shared_ap else (ApConfig(), ApConfig())
    sts = [StationConfig(i, ap=0) for i in range(n_controlled)]
    sts += [StationConfig(n_controlled + j, mode="legacy", ap=0 if shared_ap else 1) for j in range(n_legacy)]
    name = "coexist-shared" if shared_ap else "coexist"
    return Scenario(name=name, duration=duration, seed=seed, aps=aps, stations=tuple(sts),
                    controller=ControllerConfig(enabled=True))


def tsml_trace(rate: float, duration: float = 3.0, seed: int = 0, noise: Optional[NoiseConfig] = None) -> Scenario:
    """Open-loop AMSDU (N_max 128) trace with kernel timestamps."""
    sc = open_loop(rate, duration, seed, n_max=128, record_packets=True)
    return replace(sc, name="tsml", noise=noise or NoiseConfig(enabled=True))


def link_limited(link_rate: float, rate: float, duration: float = 2.0, seed: int = 0,
                 queue_len: int = 100) -> Scenario:
    """Sender behind a rate-limited wired link."""
    return Scenario(name="link-limit", duration=duration, seed=seed, stations=(StationConfig(0, rate=rate),),
                    backhaul=BackhaulConfig(link_rate=link_rate, queue_len=queue_len), record_packets=True)


CROSS_SCHEDULE = ((0.5, 1.0), (1.5, 2.0))


def cross_traffic(rate: float = 600e6, duration: float = 2.0, seed: int = 0, cross_rate: float = 600e6,
                  schedule: tuple = CROSS_SCHEDULE, link_rate: float = 1e9) -> Scenario:
    """Sender sharing a gigabit link with switched cross traffic."""
    return Scenario(name="cross", duration=duration, seed=seed, stations=(StationConfig(0, rate=rate),),
                    backhaul=BackhaulConfig(link_rate=link_rate, queue_len=100, cross_rate=cross_rate,
                                            cross_schedule=schedule),
                    record_packets=True)


PRESETS: dict[str, Callable[..., Scenario]] = {
    "open-loop": open_loop,
    "saturated": saturated,
    "closed-loop": closed_loop,
    "param-study": param_study,
    "channel-drop": channel_drop,
    "fairness": lambda **kw: fairness(kw.pop("n", 5), **kw),
    "coexist": coexistence,
    "coexist-shared": lambda **kw: coexistence(shared_ap=True, **kw),
    "tsml": lambda **kw: tsml_trace(kw.pop("rate", 300e6), **kw),
    "link-limit": lambda **kw: link_limited(kw.pop("link_rate", 100e6), kw.pop("rate", 200e6), **kw),
    "cross": cross_traffic,
}


def preset(name: str, **kw) -> Scenario:
    try:
        fn = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None
    return fn(**kw)
