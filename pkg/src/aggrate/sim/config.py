"""Scenario configuration for the WLAN downlink simulator.

All user-facing quantities are SI: seconds, bits and bits/second. The engine
converts to integer microseconds internally.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields, replace
from typing import Optional


class ConfigError(ValueError):
    """Invalid scenario configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ApConfig:
    n_max: int = 64
    queue_capacity: int = 1000
    phy_overhead: float = 137e-6  # preamble + SIFS + block-ack, per frame
    difs: float = 34e-6
    sifs: float = 16e-6
    slot_time: float = 9e-6
    cw_min: int = 16
    cw_max: int = 1024
    per_packet_error_prob: float = 0.0
    retry_limit: int = 7
    mpdu_overhead_bits: int = 240  # MAC header + FCS carried per aggregated packet
    beacon_pps: float = 10.0
    beacon_airtime: float = 450e-6
    feedback_airtime: float = 150e-6

    def validate(self, prefix: str = "ap") -> None:
        if self.n_max not in (64, 128):
            raise ConfigError(f"{prefix}.n_max", "must be 64 (AMPDU) or 128 (AMSDU)")
        if self.queue_capacity <= self.n_max:
            raise ConfigError(f"{prefix}.queue_capacity", "must exceed n_max")
        for name in ("phy_overhead", "difs", "slot_time", "beacon_airtime", "feedback_airtime"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{prefix}.{name}", "must be non-negative")
        if self.slot_time <= 0:
            raise ConfigError(f"{prefix}.slot_time", "must be positive")
        if not 1 <= self.cw_min <= self.cw_max:
            raise ConfigError(f"{prefix}.cw_min", "need 1 <= cw_min <= cw_max")
        if not 0.0 <= self.per_packet_error_prob <= 1.0:
            raise ConfigError(f"{prefix}.per_packet_error_prob", "must be a probability")
        if self.retry_limit < 0:
            raise ConfigError(f"{prefix}.retry_limit", "must be >= 0")
        if self.beacon_pps < 0:
            raise ConfigError(f"{prefix}.beacon_pps", "must be >= 0")


@dataclass(frozen=True)
class ChannelVariation:
    """Two-timescale multiplicative MCS fluctuation.

    The station's PHY rate is multiplied by ``exp(a_fast + a_slow)`` where each
    term is piecewise constant with exponentially distributed hold times and
    Gaussian levels.
    """

    fast_sd: float = 0.0
    fast_hold: float = 0.1
    slow_sd: float = 0.0
    slow_hold: float = 5.0
    floor: float = 0.5
    ceil: float = 1.5


@dataclass(frozen=True)
class StationConfig:
    sid: int
    mcs_rate: float = 780e6
    packet_len: int = 12000
    mode: str = "controlled"  # or "legacy"
    rate: float = 0.0  # open-loop send rate, or initial rate when controlled
    rate_schedule: tuple = ()  # ((t, rate), ...) open-loop changes
    mcs_schedule: tuple = ()  # ((t, mcs_rate), ...)
    ap: int = 0
    variation: Optional[ChannelVariation] = None

    def mcs_at(self, t: float) -> float:
        r = self.mcs_rate
        for ts, val in self.mcs_schedule:
            if t >= ts:
                r = val
        return r

    def validate(self, duration: float) -> None:
        p = f"station{self.sid}"
        if self.mcs_rate <= 0:
            raise ConfigError(f"{p}.mcs_rate", "must be positive")
        if self.packet_len <= 0:
            raise ConfigError(f"{p}.packet_len", "must be positive")
        if self.mode not in ("controlled", "legacy"):
            raise ConfigError(f"{p}.mode", "must be 'controlled' or 'legacy'")
        if self.rate < 0:
            raise ConfigError(f"{p}.rate", "must be >= 0")
        for t, r in self.rate_schedule:
            if not 0 <= t <= duration:
                raise ConfigError(f"{p}.rate_schedule", f"time {t} outside [0, duration]")
            if r < 0:
                raise ConfigError(f"{p}.rate_schedule", "rates must be >= 0")
        for t, r in self.mcs_schedule:
            if not 0 <= t <= duration:
                raise ConfigError(f"{p}.mcs_schedule", f"time {t} outside [0, duration]")
            if r <= 0:
                raise ConfigError(f"{p}.mcs_schedule", "rates must be positive")


@dataclass(frozen=True)
class BackhaulConfig:
    link_rate: Optional[float] = None  # None: ideal wire, no queueing
    queue_len: int = 100
    cross_rate: float = 0.0
    cross_schedule: tuple = ()  # ((t_on, t_off), ...); empty + cross_rate>0 means always on
    prop_delay: float = 0.0

    def validate(self, duration: float) -> None:
        if self.link_rate is not None and self.link_rate <= 0:
            raise ConfigError("backhaul.link_rate", "must be positive")
        if self.queue_len <= 0:
            raise ConfigError("backhaul.queue_len", "must be positive")
        if self.cross_rate < 0:
            raise ConfigError("backhaul.cross_rate", "must be >= 0")
        if self.cross_rate > 0 and self.link_rate is None:
            raise ConfigError("backhaul.cross_rate", "cross traffic needs a finite link_rate")
        for on, off in self.cross_schedule:
            if not 0 <= on <= off <= duration:
                raise ConfigError("backhaul.cross_schedule", f"bad interval ({on}, {off})")
        if self.prop_delay < 0:
            raise ConfigError("backhaul.prop_delay", "must be >= 0")


@dataclass(frozen=True)
class ControllerConfig:
    enabled: bool = False
    k0: float = 1.0
    delta: float = 0.5
    n_eps: float = 32.0
    x_min: float = 1e6
    x_max: float = 10e9
    x0: float = 50e6
    feedback_delay: float = 2e-3
    literal_eq1: bool = False

    def validate(self, n_max: int) -> None:
        if self.k0 <= 0:
            raise ConfigError("controller.k0", "must be positive")
        if self.delta <= 0:
            raise ConfigError("controller.delta", "must be positive")
        if not 1 <= self.n_eps <= n_max:
            raise ConfigError("controller.n_eps", f"must lie in [1, {n_max}]")
        if not 0 < self.x_min <= self.x_max:
            raise ConfigError("controller.x_min", "need 0 < x_min <= x_max")
        if self.feedback_delay < 0:
            raise ConfigError("controller.feedback_delay", "must be >= 0")


@dataclass(frozen=True)
class ContenderConfig:
    """Saturated background transmitters (uplink / other BSS) sharing the channel."""

    count: int = 0
    airtime: float = 1e-3

    def validate(self) -> None:
        if self.count < 0:
            raise ConfigError("contenders.count", "must be >= 0")
        if self.airtime <= 0:
            raise ConfigError("contenders.airtime", "must be positive")


@dataclass(frozen=True)
class NoiseConfig:
    """Receive-path timestamping model used to derive kernel timestamps."""

    enabled: bool = False
    jitter: float = 1.5  # us, per-packet service jitter
    service: float = 4.0  # us, per-packet kernel service time
    irq_gap: float = 40.0  # us, interrupt latency before a frame is serviced
    poll_threshold: float = 30000.0  # pps above which the driver polls
    poll_gap_mean: float = 60.0  # us, mean gap between polls
    poll_budget: int = 16
    stall_prob: float = 0.01
    stall_mean: float = 80.0  # us
    host_sd: float = 0.0  # log-sd of the slowly varying host speed factor
    host_hold: float = 0.05  # s, how long one host speed level lasts


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    version: int = 1
    duration: float = 10.0
    seed: int = 0
    aps: tuple = (ApConfig(),)
    stations: tuple = ()
    backhaul: BackhaulConfig = BackhaulConfig()
    controller: ControllerConfig = ControllerConfig()
    contenders: ContenderConfig = ContenderConfig()
    noise: NoiseConfig = NoiseConfig()
    record_packets: bool = False
    seeds: tuple = ()  # seed list for sweeps; empty means (seed,)

    @property
    def ap(self) -> ApConfig:
        return self.aps[0]

    def validate(self) -> "Scenario":
        if self.duration <= 0:
            raise ConfigError("scenario.duration", "must be positive")
        if not self.aps:
            raise ConfigError("ap", "at least one AP is required")
        for i, ap in enumerate(self.aps):
            ap.validate("ap" if i == 0 else f"ap{i}")
        ids = [s.sid for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ConfigError("station", "duplicate station ids")
        for s in self.stations:
            s.validate(self.duration)
            if not 0 <= s.ap < len(self.aps):
                raise ConfigError(f"station{s.sid}.ap", "refers to a missing AP")
        self.backhaul.validate(self.duration)
        self.contenders.validate()
        if self.controller.enabled:
            self.controller.validate(min(ap.n_max for ap in self.aps))
        return self

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def to_text(self) -> str:
        return dump_scenario(self)

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


# -- key=value text format -------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        parts = []
        for item in value:
            parts.append(":".join(repr(float(v)) for v in item))
        return ", ".join(parts)
    return str(value)


def _section(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if f.name in ("variation",):
            continue
        out[f.name] = _fmt(v)
    return out


def dump_scenario(sc: Scenario) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {
        "name": sc.name,
        "version": str(sc.version),
        "duration": repr(float(sc.duration)),
        "seed": str(sc.seed),
        "record_packets": _fmt(sc.record_packets),
        "seeds": ", ".join(str(s) for s in sc.seeds),
    }
    for i, ap in enumerate(sc.aps):
        cp["ap" if i == 0 else f"ap {i}"] = _section(ap)
    for st in sc.stations:
        sec = _section(st)
        if st.variation is not None:
            for f in fields(st.variation):
                sec[f"variation_{f.name}"] = _fmt(getattr(st.variation, f.name))
        cp[f"station {st.sid}"] = sec
    cp["backhaul"] = _section(sc.backhaul)
    cp["controller"] = _section(sc.controller)
    cp["contenders"] = _section(sc.contenders)
    cp["noise"] = _section(sc.noise)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _parse_value(raw: str, like, key: str):
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, tuple):
            if not raw:
                return ()
            items = []
            for chunk in raw.split(","):
                items.append(tuple(float(v) for v in chunk.strip().split(":")))
            return tuple(items)
        if isinstance(like, int):
            return int(float(raw))
        if isinstance(like, float) or like is None:
            if raw.lower() == "none":
                return None
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None


def _build(cls, section, prefix: str, base=None):
    base = base if base is not None else cls()
    kwargs = {}
    names = {f.name for f in fields(cls)}
    for key, raw in section.items():
        if key.startswith("variation_"):
            continue
        if key not in names:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
        kwargs[key] = _parse_value(raw, getattr(base, key), f"{prefix}.{key}")
    return replace(base, **kwargs)


def parse_scenario(text: str) -> Scenario:
    """Parse the line-based key=value scenario format and validate it."""
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("scenario", str(exc)) from None
    sc = Scenario()
    aps: dict[int, ApConfig] = {}
    stations = []
    for name in cp.sections():
        sec = cp[name]
        head, _, idx = name.partition(" ")
        if head == "scenario":
            kw = {}
            for key, raw in sec.items():
                if key == "seeds":
                    kw["seeds"] = tuple(int(s) for s in raw.replace(",", " ").split())
                elif key in ("name",):
                    kw[key] = raw
                elif key in ("version", "seed"):
                    kw[key] = int(raw)
                elif key == "duration":
                    kw[key] = float(raw)
                elif key == "record_packets":
                    kw[key] = _parse_value(raw, False, "scenario.record_packets")
                else:
                    raise ConfigError(f"scenario.{key}", "unknown key")
            sc = replace(sc, **kw)
        elif head == "ap":
            i = int(idx) if idx else 0
            aps[i] = _build(ApConfig, sec, f"ap{i}")
        elif head == "station":
            sid = int(idx)
            st = _build(StationConfig, {k: v for k, v in sec.items() if k != "sid"},
                        f"station{sid}", StationConfig(sid=sid))
            var = {k[len("variation_"):]: v for k, v in sec.items() if k.startswith("variation_")}
            if var:
                st = replace(st, variation=_build(ChannelVariation, var, f"station{sid}.variation"))
            stations.append(st)
        elif head == "backhaul":
            sc = replace(sc, backhaul=_build(BackhaulConfig, sec, "backhaul"))
        elif head == "controller":
            sc = replace(sc, controller=_build(ControllerConfig, sec, "controller"))
        elif head == "contenders":
            sc = replace(sc, contenders=_build(ContenderConfig, sec, "contenders"))
        elif head == "noise":
            sc = replace(sc, noise=_build(NoiseConfig, sec, "noise"))
        else:
            raise ConfigError(name, "unknown section")
    if aps:
        sc = replace(sc, aps=tuple(aps[i] for i in sorted(aps)))
    sc = replace(sc, stations=tuple(sorted(stations, key=lambda s: s.sid)))
    return sc.validate()


def set_field(sc: Scenario, path: str, value) -> Scenario:
    """Return a copy with ``path`` (e.g. ``controller.k0`` or ``station.rate``) replaced.

    ``station.X`` applies to every station; ``station3.X`` to one.
    """
    head, _, key = path.partition(".")
    if not key:
        if head in {f.name for f in fields(Scenario)}:
            return replace(sc, **{head: value})
        raise ConfigError(path, "unknown axis")
    if head == "ap":
        if key not in {f.name for f in fields(ApConfig)}:
            raise ConfigError(path, "unknown axis")
        return replace(sc, aps=tuple(replace(a, **{key: value}) for a in sc.aps))
    if head.startswith("station"):
        if key not in {f.name for f in fields(StationConfig)}:
            raise ConfigError(path, "unknown axis")
        which = head[len("station"):]
        sts = tuple(
            replace(s, **{key: value}) if (not which or int(which) == s.sid) else s
            for s in sc.stations
        )
        return replace(sc, stations=sts)
    for name, cls in (("backhaul", BackhaulConfig), ("controller", ControllerConfig),
                      ("contenders", ContenderConfig), ("noise", NoiseConfig)):
        if head == name:
            if key not in {f.name for f in fields(cls)}:
                raise ConfigError(path, "unknown axis")
            return replace(sc, **{name: replace(getattr(sc, name), **{key: value})})
    raise ConfigError(path, "unknown axis")


def get_field(sc: Scenario, path: str):
    """Current value at ``path``; for ``station.X`` the first station's value."""
    head, _, key = path.partition(".")
    if not key:
        if head in {f.name for f in fields(Scenario)}:
            return getattr(sc, head)
        raise ConfigError(path, "unknown field")
    if head == "ap":
        obj = sc.aps[0]
    elif head.startswith("station"):
        which = head[len("station"):]
        sts = [s for s in sc.stations if not which or s.sid == int(which)]
        if not sts:
            raise ConfigError(path, "no such station")
        obj = sts[0]
    elif head in ("backhaul", "controller", "contenders", "noise"):
        obj = getattr(sc, head)
    else:
        raise ConfigError(path, "unknown field")
    if key not in {f.name for f in fields(obj)}:
        raise ConfigError(path, "unknown field")
    return getattr(obj, key)


def parse_field(sc: Scenario, path: str, raw: str):
    """Parse ``raw`` with the type of the current value at ``path``."""
    like = get_field(sc, path)
    if path.partition(".")[0] == "seeds":
        return tuple(int(s) for s in raw.replace(",", " ").split())
    return _parse_value(raw, like, path)


def set_field_text(sc: Scenario, path: str, raw: str) -> Scenario:
    return set_field(sc, path, parse_field(sc, path, raw))
