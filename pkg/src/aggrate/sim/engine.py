"""Discrete-event simulation of a paced downlink through a WLAN access point.

Senders pace packets into an optional backhaul FIFO that feeds per-station AP
queues. Each AP serves its backlogged stations round-robin and sends one
aggregated frame per channel access. Channel access is DCF-like: every
backlogged transmitter counts down a random backoff after DIFS, the first to
reach zero transmits and the others freeze their residual counters. Beacons
and feedback reports are sent after DIFS with no backoff.

MAC-side times (frame starts and ends) are integer microseconds; send and
arrival times are float microseconds so that pacing is exact.
"""

from __future__ import annotations

import heapq
import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..controller import Controller, ControllerParams
from ..meter import AggMeter
from .config import ApConfig, BackhaulConfig, ChannelVariation, Scenario, StationConfig
from .trace import (DROP_AP_QUEUE, DROP_BACKHAUL, DROP_RETRY, FRAME_DTYPE, IN_FLIGHT, PACKET_DTYPE,
                    StationStats, Trace)

US = 1e6
CHUNK_US = 10_000  # traffic is generated ahead of the MAC in chunks of this length
_EMPTY_I = np.zeros(0, np.int64)
_EMPTY_F = np.zeros(0, np.float64)


# -- sender ----------------------------------------------------------------------

class Pacer:
    """Constant-interval packet source.

    A rate change keeps the send that is already scheduled and applies the new
    interval after it; switching on from rate 0 sends immediately.
    """

    def __init__(self, packet_len: int, rate: float = 0.0, t0: float = 0.0):
        self.packet_len = packet_len
        self.rate = 0.0
        self.next = math.inf
        self._base = 0.0
        self._idx = 0
        self._iv = math.inf
        self.set_rate(rate, t0)

    def set_rate(self, rate: float, t_us: float) -> None:
        if rate < 0:
            raise ValueError("rate must be >= 0")
        if rate == 0:
            self.rate, self.next, self._iv = 0.0, math.inf, math.inf
            return
        self._base = t_us if self.rate == 0 else self.next
        self._idx = 0
        self.rate = rate
        self._iv = self.packet_len / rate * US
        self.next = self._base

    def take(self, until_us: float) -> np.ndarray:
        """Send times (us) in ``[next, until_us)``."""
        if self.next >= until_us:
            return _EMPTY_F
        total = math.ceil((until_us - self._base) / self._iv)
        k = total - self._idx
        if k <= 0:
            return _EMPTY_F
        t = self._base + self._iv * np.arange(self._idx, total, dtype=np.float64)
        t = t[t < until_us]
        self._idx += len(t)
        self.next = self._base + self._iv * self._idx
        return t


class CrossSource:
    """Cross-traffic source: near-constant-rate sends with packet sizes uniform in ``size_range`` bits.

    Each gap is the mean gap scaled by a uniform factor in ``[1 - spread, 1 + spread]``;
    the mixed sizes keep the backhaul's departures from phase-locking to a paced flow.
    """

    def __init__(self, rng: np.random.Generator, rate: float = 0.0, t0: float = 0.0,
                 size_range: tuple = (4000, 12000), spread: float = 0.5):
        self.rng = rng
        self.spread = spread
        self.lo, self.hi = size_range
        self.mean_bits = 0.5 * (self.lo + self.hi)
        self.rate = 0.0
        self.next = math.inf
        self.set_rate(rate, t0)

    def set_rate(self, rate: float, t_us: float) -> None:
        if rate < 0:
            raise ValueError("rate must be >= 0")
        self.rate = rate
        self.next = t_us + self._gaps(1)[0] if rate > 0 else math.inf

    def _gaps(self, n: int) -> np.ndarray:
        return self.mean_bits / self.rate * US * self.rng.uniform(1 - self.spread, 1 + self.spread, n)

    def take(self, until_us: float) -> tuple[np.ndarray, np.ndarray]:
        """Send times (us) in ``[next, until_us)`` and their sizes (bits)."""
        if self.next >= until_us:
            return _EMPTY_F, _EMPTY_F
        out = []
        t = self.next
        while True:
            n = int((until_us - t) * self.rate / (self.mean_bits * US) * 1.2) + 8
            ts = t + np.concatenate(([0.0], np.cumsum(self._gaps(n - 1))))
            if ts[-1] >= until_us:
                k = int(np.searchsorted(ts, until_us))
                out.append(ts[:k])
                self.next = float(ts[k])
                break
            out.append(ts)
            t = ts[-1] + self._gaps(1)[0]
            if t >= until_us:
                self.next = t
                break
        times = np.concatenate(out)
        bits = self.rng.integers(self.lo, self.hi + 1, len(times)).astype(np.float64)
        return times, bits


def enqueue_paced(rate: float, duration: float, packet_len: int = 12000, t0: float = 0.0,
                  schedule=()) -> np.ndarray:
    """Send times (s) of a paced flow starting at ``t0`` with optional ``(t, rate)`` changes."""
    if rate < 0:
        raise ValueError("rate must be >= 0")
    p = Pacer(packet_len, rate, t0 * US)
    out = []
    for t, r in sorted(schedule):
        out.append(p.take(t * US))
        p.set_rate(r, t * US)
    out.append(p.take(duration * US))
    return np.concatenate(out) / US


# -- backhaul --------------------------------------------------------------------

class Backhaul:
    """Drop-tail FIFO link; ``queue_len`` counts packets in the system including the one in service."""

    def __init__(self, cfg: BackhaulConfig):
        self.cfg = cfg
        self.ideal = cfg.link_rate is None
        self.prop = cfg.prop_delay * US
        self._deps: deque = deque()
        self._last = -math.inf

    def transit(self, t_send: np.ndarray, bits) -> np.ndarray:
        """AP arrival times (us) for sends ordered in time; NaN marks a drop."""
        t_send = np.asarray(t_send, dtype=np.float64)
        if self.ideal or len(t_send) == 0:
            return t_send + self.prop
        s = np.broadcast_to(np.asarray(bits, dtype=np.float64), t_send.shape) / self.cfg.link_rate * US
        qlen = self.cfg.queue_len
        # optimistic pass assuming nothing is dropped
        cs = np.cumsum(s)
        prev = np.concatenate(([0.0], cs[:-1]))
        dep = cs + np.maximum(np.maximum.accumulate(t_send - prev), self._last)
        idx = np.arange(len(t_send))
        occ = idx - np.searchsorted(dep, t_send, side="right")
        if self._deps:
            old = np.fromiter(self._deps, dtype=np.float64, count=len(self._deps))
            occ = occ + len(old) - np.searchsorted(old, t_send, side="right")
        if occ.max() < qlen:
            self._last = float(dep[-1])
            tail = t_send[-1]
            self._deps = deque(x for x in self._deps if x > tail)
            self._deps.extend(dep[dep > tail].tolist())
            return dep + self.prop
        return self._transit_loop(t_send, s) + self.prop

    def _transit_loop(self, t_send, s):
        out = np.full(len(t_send), np.nan)
        deps, last, qlen = self._deps, self._last, self.cfg.queue_len
        for i, (a, si) in enumerate(zip(t_send.tolist(), s.tolist())):
            while deps and deps[0] <= a:
                deps.popleft()
            if len(deps) >= qlen:
                continue
            last = (last if last > a else a) + si
            deps.append(last)
            out[i] = last
        self._last = last
        return out


def backhaul_transit(t_send, cfg: BackhaulConfig, packet_len: int = 12000) -> np.ndarray:
    """Batch form: AP arrival times (s) of sends at ``t_send`` (s); NaN where dropped."""
    return Backhaul(cfg).transit(np.asarray(t_send, dtype=np.float64) * US, packet_len) / US


# -- AP queue --------------------------------------------------------------------

class StationQueue:
    """Per-station AP queue with drop-tail admission and a retransmission head.

    Arrivals wait in ``pending`` until the queue is next inspected; since the
    queue only drains at frame assembly, admitting them lazily is exact.
    """

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._pend: deque = deque()  # [seqs, t_arr, offset]
        self._segs: deque = deque()
        self.count = 0
        self.retx_seqs = _EMPTY_I
        self.retx_att = _EMPTY_I

    def push_arrivals(self, seqs, t_arr) -> None:
        if len(seqs):
            self._pend.append([np.asarray(seqs, np.int64), np.asarray(t_arr, np.float64), 0])

    def push(self, seqs) -> np.ndarray:
        """Admit packets immediately; returns the ones that did not fit."""
        seqs = np.asarray(seqs, np.int64)
        room = self.capacity - self.count - len(self.retx_seqs)
        take = max(min(room, len(seqs)), 0)
        if take:
            self._segs.append(seqs[:take])
            self.count += take
        return seqs[take:]

    def next_arrival(self) -> float:
        while self._pend:
            seqs, ta, off = self._pend[0]
            if off < len(seqs):
                return float(ta[off])
            self._pend.popleft()
        return math.inf

    def pull(self, t_us: float) -> Optional[np.ndarray]:
        """Admit arrivals up to ``t_us``; returns seqs dropped for lack of room."""
        dropped = None
        while self._pend:
            entry = self._pend[0]
            seqs, ta, off = entry
            k = int(np.searchsorted(ta, t_us, side="right"))
            if k <= off:
                break
            room = self.capacity - self.count - len(self.retx_seqs)
            take = min(k - off, max(room, 0))
            if take:
                self._segs.append(seqs[off:off + take])
                self.count += take
            if k - off > take:
                d = seqs[off + take:k]
                dropped = d if dropped is None else np.concatenate((dropped, d))
            if k == len(seqs):
                self._pend.popleft()
            else:
                entry[2] = k
                break
        return dropped

    @property
    def backlog(self) -> int:
        return self.count + len(self.retx_seqs)

    def take(self, n: int) -> np.ndarray:
        parts = []
        need = n
        while need:
            seg = self._segs[0]
            if len(seg) <= need:
                parts.append(self._segs.popleft())
                need -= len(seg)
            else:
                parts.append(seg[:need])
                self._segs[0] = seg[need:]
                need = 0
        self.count -= n
        return parts[0] if len(parts) == 1 else np.concatenate(parts)

    def requeue_head(self, seqs, attempts) -> None:
        if len(seqs):
            self.retx_seqs = np.concatenate((seqs, self.retx_seqs))
            self.retx_att = np.concatenate((attempts, self.retx_att))


@dataclass
class Assembled:
    seqs: np.ndarray
    attempts: np.ndarray  # transmissions already made, before this one
    is_retx: bool

    @property
    def n_agg(self) -> int:
        return len(self.seqs)


def assemble_frame(queue: StationQueue, n_max: int) -> Assembled:
    """Dequeue one frame: pending retransmissions first, else up to ``n_max`` fresh packets."""
    if queue.backlog == 0:
        raise ValueError("cannot assemble a frame from an empty queue")
    if len(queue.retx_seqs):
        n = min(len(queue.retx_seqs), n_max)
        seqs, att = queue.retx_seqs[:n], queue.retx_att[:n]
        queue.retx_seqs, queue.retx_att = queue.retx_seqs[n:], queue.retx_att[n:]
        return Assembled(seqs, att, True)
    n = min(queue.count, n_max)
    return Assembled(queue.take(n), np.zeros(n, np.int64), False)


@dataclass
class LossOutcome:
    delivered: np.ndarray
    retx_seqs: np.ndarray
    retx_attempts: np.ndarray
    dropped: np.ndarray
    n_lost: int


def apply_loss_and_retx(frame: Assembled, error_prob: float, retry_limit: int,
                        rng: Optional[np.random.Generator] = None, collided: bool = False) -> LossOutcome:
    """Independent per-packet loss; survivors of the retry budget go back for retransmission.

    A packet is dropped once it has been sent ``1 + retry_limit`` times.
    """
    att = frame.attempts + 1
    n = frame.n_agg
    if collided:
        lost = np.ones(n, bool)
    elif error_prob <= 0:
        return LossOutcome(frame.seqs, _EMPTY_I, _EMPTY_I, _EMPTY_I, 0)
    else:
        lost = rng.random(n) < error_prob
    if not lost.any():
        return LossOutcome(frame.seqs, _EMPTY_I, _EMPTY_I, _EMPTY_I, 0)
    lseq, latt = frame.seqs[lost], att[lost]
    out = latt >= 1 + retry_limit
    return LossOutcome(frame.seqs[~lost], lseq[~out], latt[~out], lseq[out], int(lost.sum()))


# -- per-station bookkeeping -------------------------------------------------------

class _Book:
    """Growable per-packet columns of one flow, indexed by seq."""

    def __init__(self, record: bool):
        self.record = record
        self.n = 0
        self._cap = 0
        self.t_send = _EMPTY_F
        if record:
            self.t_arr = _EMPTY_F
            self.frame_id = _EMPTY_I
            self.t_rx = _EMPTY_I
            self.drop = np.zeros(0, np.int8)
            self.lost = np.zeros(0, np.int16)

    def _grow(self, need):
        cap = max(1024, self._cap * 2, need)
        def g(a, fill, dt):
            b = np.full(cap, fill, dtype=dt)
            b[:self.n] = a[:self.n]
            return b
        self.t_send = g(self.t_send, np.nan, np.float64)
        if self.record:
            self.t_arr = g(self.t_arr, np.nan, np.float64)
            self.frame_id = g(self.frame_id, -1, np.int64)
            self.t_rx = g(self.t_rx, -1, np.int64)
            self.drop = g(self.drop, 0, np.int8)
            self.lost = g(self.lost, 0, np.int16)
        self._cap = cap

    def add(self, t_send: np.ndarray) -> np.ndarray:
        k = len(t_send)
        if self.n + k > self._cap:
            self._grow(self.n + k)
        self.t_send[self.n:self.n + k] = t_send
        seqs = np.arange(self.n, self.n + k, dtype=np.int64)
        self.n += k
        return seqs


class _McsProfile:
    """Piecewise-constant PHY rate: configured schedule times optional random fluctuation."""

    def __init__(self, st: StationConfig, duration: float, rng: Optional[np.random.Generator]):
        pts = [(0.0, st.mcs_rate)] + sorted(st.mcs_schedule)
        self._bt = [t * US for t, _ in pts]
        self._bv = [v for _, v in pts]
        self._vt = [0.0]
        self._vv = [1.0]
        var = st.variation
        if var is not None and rng is not None and (var.fast_sd > 0 or var.slow_sd > 0):
            self._vt, self._vv = _variation_path(var, duration, rng)

    def at(self, t_us: float) -> float:
        b = self._bv[bisect_right(self._bt, t_us) - 1]
        return b * self._vv[bisect_right(self._vt, t_us) - 1]


def _hold_path(rng, sd, hold, duration):
    if sd <= 0:
        return np.zeros(1), np.zeros(1)
    times = [0.0]
    while times[-1] < duration:
        times.extend((times[-1] + np.cumsum(rng.exponential(hold, 64))).tolist())
    t = np.array([x for x in times if x < duration])
    return t, rng.normal(0.0, sd, len(t))


def _variation_path(var: ChannelVariation, duration: float, rng) -> tuple[list, list]:
    ft, fv = _hold_path(rng, var.fast_sd, var.fast_hold, duration)
    st, sv = _hold_path(rng, var.slow_sd, var.slow_hold, duration)
    t = np.union1d(ft, st)
    lvl = fv[np.searchsorted(ft, t, side="right") - 1] + sv[np.searchsorted(st, t, side="right") - 1]
    mult = np.clip(np.exp(lvl), var.floor, var.ceil)
    return (t * US).tolist(), mult.tolist()


class _Station:
    def __init__(self, cfg: StationConfig, ap: ApConfig, record: bool, profile: _McsProfile):
        self.cfg = cfg
        self.sid = cfg.sid
        self.legacy = cfg.mode == "legacy"
        self.ap = ap
        self.profile = profile
        self.bits_per_pkt = cfg.packet_len + ap.mpdu_overhead_bits
        self.stats = StationStats(cfg.sid, cfg.mode)
        self.delays: list = []
        self.delay_t: list = []
        self.meter: Optional[AggMeter] = None
        if self.legacy:
            n_batches = math.ceil(ap.queue_capacity / ap.n_max)
            self.batches = deque([0] * n_batches)  # entry times of queued n_max-packet batches
            self.pacer = None
            self.book = None
            self.queue = None
        else:
            self.pacer = Pacer(cfg.packet_len, cfg.rate)
            self.book = _Book(record)
            self.queue = StationQueue(ap.queue_capacity)

    def backlogged(self, t_us: float) -> bool:
        if self.legacy:
            return True
        q = self.queue
        if q.backlog:
            return True
        if q.next_arrival() <= t_us:
            return True
        return False


class _Draws:
    """Batched uniform draws for backoff counters."""

    def __init__(self, rng: np.random.Generator, n: int = 4096):
        self.rng, self.n = rng, n
        self._buf = rng.random(n).tolist()
        self._i = 0

    def below(self, hi: int) -> int:
        if self._i == self.n:
            self._buf = self.rng.random(self.n).tolist()
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return int(u * hi)


class _Entity:
    """One DCF contender: an AP or a saturated background transmitter."""

    def __init__(self, kind, cw_min, cw_max, draws: _Draws, index=0, airtime_us=0, stations=None,
                 ap_cfg=None):
        self.kind = kind
        self.index = index
        self.cw_min, self.cw_max = cw_min, cw_max
        self.cw = cw_min
        self.draws = draws
        self.counter = draws.below(cw_min)
        self.airtime_us = airtime_us
        self.stations = stations or []
        self.ap_cfg = ap_cfg
        self.rr = 0
        self.start = 0
        self.ready = 0

    def backlog_time(self) -> float:
        if self.kind == "bg":
            return -math.inf
        best = math.inf
        for st in self.stations:
            if st.legacy or st.queue.backlog:
                return -math.inf
            na = st.queue.next_arrival()
            if na < best:
                best = na
        return best

    def success(self):
        self.cw = self.cw_min
        self.counter = self.draws.below(self.cw)

    def failure(self):
        self.cw = min(self.cw * 2, self.cw_max)
        self.counter = self.draws.below(self.cw)


# -- simulator ---------------------------------------------------------------------

class Simulator:
    def __init__(self, sc: Scenario):
        sc.validate()
        self.sc = sc
        self.end = int(round(sc.duration * US))
        ap0 = sc.aps[0]
        self.difs = int(round(ap0.difs * US))
        self.slot = int(round(ap0.slot_time * US))
        ss = np.random.SeedSequence(sc.seed)
        s_backoff, s_loss, s_var, s_noise, s_cross = ss.spawn(5)
        self.rng_loss = np.random.default_rng(s_loss)
        self.noise_seed = s_noise
        draws = _Draws(np.random.default_rng(s_backoff))
        var_seeds = s_var.spawn(max(len(sc.stations), 1))

        self.stations: dict[int, _Station] = {}
        for i, st in enumerate(sc.stations):
            prof = _McsProfile(st, sc.duration, np.random.default_rng(var_seeds[i]))
            self.stations[st.sid] = _Station(st, sc.aps[st.ap], sc.record_packets, prof)
        self.flows = [s for s in self.stations.values() if not s.legacy]

        self.entities: list[_Entity] = []
        for a, ap in enumerate(sc.aps):
            members = [self.stations[s.sid] for s in sc.stations if s.ap == a]
            if members:
                self.entities.append(_Entity("ap", ap.cw_min, ap.cw_max, draws, a, stations=members,
                                             ap_cfg=ap))
        for j in range(sc.contenders.count):
            self.entities.append(_Entity("bg", ap0.cw_min, ap0.cw_max, draws, j,
                                         airtime_us=int(round(sc.contenders.airtime * US))))

        self.backhaul = Backhaul(sc.backhaul)
        self.cross = None
        if sc.backhaul.cross_rate > 0:
            self.cross = CrossSource(np.random.default_rng(s_cross))
        self.gen_t = 0.0
        self.t_idle = 0
        self.busy_us = 0

        self._ev: list = []
        self._ev_n = 0
        self._ctrl: list = []
        self._ctrl_n = 0
        self.frames: list = []
        self.reports: list = []
        self.groups: list[Controller] = []
        self._setup_events()

    # events
    def _push(self, t_us, kind, data=None):
        heapq.heappush(self._ev, (t_us, self._ev_n, kind, data))
        self._ev_n += 1

    def _push_ctrl(self, t_us, airtime_us, kind, data=None):
        heapq.heappush(self._ctrl, (t_us, self._ctrl_n, airtime_us, kind, data))
        self._ctrl_n += 1

    def _setup_events(self):
        sc = self.sc
        for st in self.stations.values():
            for t, r in sorted(st.cfg.rate_schedule):
                self._push(t * US, "rate", (st.sid, r))
        bh = sc.backhaul
        if self.cross is not None:
            if bh.cross_schedule:
                for on, off in bh.cross_schedule:
                    self._push(on * US, "cross", bh.cross_rate)
                    self._push(off * US, "cross", 0.0)
            else:
                self.cross.set_rate(bh.cross_rate, 0.0)
        for a, ap in enumerate(sc.aps):
            if ap.beacon_pps > 0 and any(e.kind == "ap" and e.index == a for e in self.entities):
                self._push_ctrl(0, int(round(ap.beacon_airtime * US)), "beacon", a)
        c = sc.controller
        if c.enabled:
            for a, ap in enumerate(sc.aps):
                sids = [s.sid for s in sc.stations if s.ap == a and s.mode == "controlled"]
                if not sids:
                    continue
                params = ControllerParams(c.k0, c.delta, c.n_eps, len(sids), c.x_min, c.x_max, c.literal_eq1)
                ctl = Controller(sids, params, c.x0)
                self.groups.append(ctl)
                for sid in sids:
                    st = self.stations[sid]
                    st.meter = AggMeter(sid, c.delta)
                    st.pacer.set_rate(ctl.rates[sid], 0.0)
            if self.groups:
                self._push(c.delta * US, "report", 0)

    def _process_event(self, t, kind, data):
        if kind == "rate":
            sid, r = data
            self.stations[sid].pacer.set_rate(r, t)
        elif kind == "cross":
            self.cross.set_rate(data, t)
        elif kind == "report":
            k = data
            c = self.sc.controller
            fb_air = int(round(self.sc.aps[0].feedback_airtime * US))
            for g, ctl in enumerate(self.groups):
                reps = {}
                for sid in ctl.stations:
                    rep = self.stations[sid].meter.report(k)
                    reps[sid] = rep
                    self.reports.append(rep)
                    if fb_air > 0:
                        self._push_ctrl(t, fb_air, "feedback", sid)
                self._push(t + c.feedback_delay * US, "apply", (g, k, reps))
            nxt = (k + 2) * c.delta * US
            if nxt < self.end:
                self._push(nxt, "report", k + 1)
        elif kind == "apply":
            g, k, reps = data
            ctl = self.groups[g]
            rates = ctl.tick(k, reps, t / US)
            for sid, x in rates.items():
                self.stations[sid].pacer.set_rate(x, t)

    # traffic
    def _generate(self, horizon):
        sends = []
        for st in self.flows:
            ts = st.pacer.take(horizon)
            if len(ts):
                sends.append((st, ts, st.book.add(ts)))
                st.stats.sent += len(ts)
        cross, cbits = self.cross.take(horizon) if self.cross is not None else (_EMPTY_F, _EMPTY_F)
        self.gen_t = horizon
        if not sends:
            if len(cross):
                self.backhaul.transit(cross, cbits)
            return
        if self.backhaul.ideal:
            for st, ts, seqs in sends:
                arr = ts + self.backhaul.prop
                if st.book.record:
                    st.book.t_arr[seqs] = arr
                st.queue.push_arrivals(seqs, arr)
            return
        times = [ts for _, ts, _ in sends] + [cross]
        flow = np.concatenate([np.full(len(ts), i) for i, ts in enumerate(times)])
        bits = np.concatenate([np.full(len(ts), st.cfg.packet_len, np.float64) for st, ts, _ in sends]
                              + [cbits])
        allt = np.concatenate(times)
        order = np.argsort(allt, kind="stable")
        arr = np.empty(len(allt))
        arr[order] = self.backhaul.transit(allt[order], bits[order])
        pos = 0
        for i, (st, ts, seqs) in enumerate(sends):
            a = arr[pos:pos + len(ts)]
            pos += len(ts)
            ok = ~np.isnan(a)
            if not ok.all():
                bad = seqs[~ok]
                st.stats.drops[DROP_BACKHAUL] += len(bad)
                if st.book.record:
                    st.book.drop[bad] = DROP_BACKHAUL
                seqs, a = seqs[ok], a[ok]
            if st.book.record:
                st.book.t_arr[seqs] = a
            st.queue.push_arrivals(seqs, a)

    # channel
    def _candidate(self):
        t_idle, difs, slot = self.t_idle, self.difs, self.slot
        best_r, best = math.inf, None
        ready = []
        for e in self.entities:
            b = e.backlog_time()
            if b == math.inf:
                continue
            s = t_idle if b <= t_idle else math.ceil(b)
            r = s + difs + e.counter * slot
            e.start, e.ready = s, r
            ready.append(e)
            if r < best_r:
                best_r, best = r, e
        if self._ctrl:
            due = self._ctrl[0][0]
            rc = (t_idle if due <= t_idle else math.ceil(due)) + difs
            if rc <= best_r:
                return rc, "ctrl", ready
        return best_r, best, ready

    def _freeze(self, ready, r, skip):
        difs, slot = self.difs, self.slot
        for x in ready:
            if x in skip:
                continue
            el = r - x.start - difs
            if el > 0:
                x.counter = max(x.counter - el // slot, 0)

    def _transmit(self, r, who, ready):
        if who == "ctrl":
            _, _, air, kind, data = heapq.heappop(self._ctrl)
            if kind == "beacon":
                ap = self.sc.aps[data]
                nxt = r + US / ap.beacon_pps
                if nxt < self.end:
                    self._push_ctrl(nxt, air, "beacon", data)
            self._freeze(ready, r, ())
            self.t_idle = r + air
            self.busy_us += air
            return
        colliders = [x for x in ready if x is not who and x.ready < r + self.slot and x.start <= r]
        group = [who] + colliders
        self._freeze(ready, r, group)
        collided = bool(colliders)
        t_end = r
        for e in group:
            if e.kind == "ap":
                te = self._ap_frame(e, r, collided)
            else:
                te = r + e.airtime_us
            t_end = max(t_end, te)
            if collided:
                e.failure()
            else:
                e.success()
        self.busy_us += t_end - r
        self.t_idle = t_end

    def _ap_frame(self, e: _Entity, t: int, collided: bool) -> int:
        n = len(e.stations)
        st = None
        for i in range(n):
            cand = e.stations[(e.rr + i) % n]
            if not cand.legacy:
                dropped = cand.queue.pull(t)
                if dropped is not None:
                    cand.stats.drops[DROP_AP_QUEUE] += len(dropped)
                    if cand.book.record:
                        cand.book.drop[dropped] = DROP_AP_QUEUE
                if not cand.queue.backlog:
                    continue
            st = cand
            e.rr = (e.rr + i + 1) % n
            break
        if st is None:
            return t
        ap = e.ap_cfg
        mcs = st.profile.at(t)
        fid = len(self.frames)
        if st.legacy:
            n_agg = ap.n_max
            dur = max(1, int(round((ap.phy_overhead + n_agg * st.bits_per_pkt / mcs) * US)))
            t_end = t + dur
            if collided:
                lost = n_agg
            elif ap.per_packet_error_prob > 0:
                lost = int((self.rng_loss.random(n_agg) < ap.per_packet_error_prob).sum())
            else:
                lost = 0
            self.frames.append((fid, st.sid, e.index, n_agg, lost, mcs, t, t_end, False, collided))
            if collided:
                return t_end
            entry = st.batches.popleft()
            st.batches.append(t)
            got = n_agg - lost
            if got:
                st.stats.delivered += got
                st.stats.bits += got * st.cfg.packet_len
                st.delays.append(np.full(got, t_end - entry, np.float32))
                st.delay_t.append((t, got))
            return t_end
        fr = assemble_frame(st.queue, ap.n_max)
        n_agg = fr.n_agg
        dur = max(1, int(round((ap.phy_overhead + n_agg * st.bits_per_pkt / mcs) * US)))
        t_end = t + dur
        out = apply_loss_and_retx(fr, ap.per_packet_error_prob, ap.retry_limit, self.rng_loss, collided)
        self.frames.append((fid, st.sid, e.index, n_agg, out.n_lost, mcs, t, t_end, fr.is_retx, collided))
        book = st.book
        d = out.delivered
        if len(d):
            st.stats.delivered += len(d)
            st.stats.bits += len(d) * st.cfg.packet_len
            st.delays.append((t_end - book.t_send[d]).astype(np.float32))
            st.delay_t.append((t, len(d)))
            if book.record:
                book.frame_id[d] = fid
                book.t_rx[d] = t
            if st.meter is not None:
                st.meter.observe_packets(t, d, mcs)
        if out.n_lost:
            if book.record:
                lost = np.concatenate((out.retx_seqs, out.dropped))
                book.lost[lost] += 1
                book.frame_id[lost] = fid
            st.queue.requeue_head(out.retx_seqs, out.retx_attempts)
            if len(out.dropped):
                st.stats.drops[DROP_RETRY] += len(out.dropped)
                if book.record:
                    book.drop[out.dropped] = DROP_RETRY
        return t_end

    def run(self) -> Trace:
        end = self.end
        ev = self._ev
        while True:
            te = ev[0][0] if ev else math.inf
            r, who, ready = self._candidate()
            limit = min(r, te, end)
            if self.gen_t < limit:
                self._generate(min(te, end, max(limit, self.gen_t + CHUNK_US)))
                continue
            if te <= r and te < end:
                t, _, kind, data = heapq.heappop(ev)
                self._process_event(t, kind, data)
                continue
            if r >= end:
                break
            self._transmit(r, who, ready)
        return self._finish()

    def _finish(self) -> Trace:
        sc = self.sc
        frames = np.array(self.frames, dtype=FRAME_DTYPE) if self.frames else np.zeros(0, FRAME_DTYPE)
        stats = {}
        packets = []
        for sid, st in self.stations.items():
            s = st.stats
            if st.delays:
                s.delays = np.concatenate(st.delays)
                t, n = np.array(st.delay_t, dtype=np.int64).T
                s.delay_times = np.repeat(t, n)
            if not st.legacy:
                s.in_flight = s.sent - s.delivered - sum(s.drops.values())
                if st.book.record:
                    b = st.book
                    n = b.n
                    p = np.zeros(n, PACKET_DTYPE)
                    p["seq"] = np.arange(n)
                    p["station"] = sid
                    p["t_send"] = b.t_send[:n]
                    p["t_ap_arrival"] = b.t_arr[:n]
                    p["frame_id"] = b.frame_id[:n]
                    p["t_mac_rx"] = b.t_rx[:n]
                    p["t_kernel_rx"] = np.nan
                    drop = b.drop[:n].copy()
                    drop[(drop == 0) & (b.t_rx[:n] < 0)] = IN_FLIGHT
                    p["dropped"] = drop
                    p["lost_in_frame"] = b.lost[:n]
                    packets.append(p)
            stats[sid] = s
        pk = None
        if sc.record_packets:
            pk = np.concatenate(packets) if packets else np.zeros(0, PACKET_DTYPE)
        log = [row for ctl in self.groups for row in ctl.log]
        log.sort(key=lambda r: (r.slot, r.station))
        tr = Trace(sc, sc.seed, sc.duration, frames, stats, log, self.reports, pk, self.busy_us)
        if sc.noise.enabled and pk is not None:
            from ..tsml.noise import kernel_noise_for_trace
            kernel_noise_for_trace(tr, np.random.default_rng(self.noise_seed))
        return tr


def run_scenario(config: Scenario, duration: Optional[float] = None, seed: Optional[int] = None) -> Trace:
    """Run one scenario; ``duration`` and ``seed`` override the config's values."""
    from dataclasses import replace
    if duration is not None:
        config = replace(config, duration=duration)
    if seed is not None:
        config = replace(config, seed=seed)
    return Simulator(config).run()
