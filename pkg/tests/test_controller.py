import numpy as np
import pytest
from hypothesis import given, strategies as st

from aggrate.controller import (Controller, ControllerParams, agg_series, convergence_metrics, pick_reference,
                                update_rate_single, update_rates_multi)
from aggrate.harness import presets
from aggrate.meter import FeedbackReport
from aggrate.sim import run_scenario


def rep(n, mcs=780e6, sid=0, k=0):
    return FeedbackReport(k, sid, n, mcs, 10)


def test_single_update_value():
    # 400 - 1 * (40 - 32) = 392 Mb/s
    x = update_rate_single(400e6, rep(40.0), ControllerParams(k0=1.0))
    assert x == pytest.approx(392e6)


def test_at_target_unchanged():
    assert update_rate_single(123e6, rep(32.0), ControllerParams()) == 123e6


def test_empty_report_holds():
    p = ControllerParams()
    assert update_rate_single(5e7, None, p) == 5e7
    assert update_rate_single(5e7, FeedbackReport(0, 0, None, None, 0), p) == 5e7


def test_gain_shared_between_stations():
    assert ControllerParams(k0=2.0, n_stations=4).gain == pytest.approx(0.5e6)


def test_clamps():
    p = ControllerParams()
    assert update_rate_single(1.5e6, rep(64.0), p) == p.x_min
    assert update_rate_single(p.x_max, rep(1.0), p) == p.x_max


@given(x=st.floats(2e6, 5e9), n=st.floats(1, 64), k0=st.floats(0.1, 10))
def test_sign(x, n, k0):
    p = ControllerParams(k0=k0)
    y = update_rate_single(x, rep(n), p)
    if n > p.n_eps:
        assert y < x or y == p.x_min
    elif n < p.n_eps:
        assert y > x or y == p.x_max
    else:
        assert y == x


def test_equal_airtime_allocation():
    rates = {0: 300e6, 1: 100e6}
    reps = {0: rep(24.0, 390e6, 0), 1: rep(30.0, 195e6, 1)}
    p = ControllerParams(k0=16.0, n_stations=2)  # gain 8 Mb/s per packet
    out, i_star = update_rates_multi(rates, reps, p)
    assert i_star == 0
    assert out[0] == pytest.approx(364e6)
    assert out[1] == pytest.approx(182e6)
    reps = {0: rep(32.0 - 100 / 8, 390e6, 0), 1: rep(30.0, 195e6, 1)}
    out, _ = update_rates_multi(rates, reps, p)
    assert out[0] == pytest.approx(400e6) and out[1] == pytest.approx(200e6)


def test_equal_mcs_equal_rates_and_scale_free():
    rates = {0: 10e6, 1: 20e6, 2: 30e6}
    reps = {i: rep(20.0, 390e6, i) for i in rates}
    out, _ = update_rates_multi(rates, reps, ControllerParams(n_stations=3))
    assert len(set(out.values())) == 1
    mcs = {0: 390e6, 1: 195e6, 2: 97.5e6}
    a, _ = update_rates_multi(rates, {i: rep(20.0, mcs[i], i) for i in rates}, ControllerParams(n_stations=3))
    b, _ = update_rates_multi(rates, {i: rep(20.0, 2 * mcs[i], i) for i in rates}, ControllerParams(n_stations=3))
    for i in rates:
        assert a[i] / a[0] == pytest.approx(b[i] / b[0])


def test_pick_reference_ties_lowest_id():
    assert pick_reference({3: 1.0, 1: 2.0, 2: 2.0}) == 1
    assert pick_reference({}) is None


@given(st.lists(st.floats(1e7, 1e9), min_size=1, max_size=6), st.lists(st.floats(5e7, 9e8), min_size=6, max_size=6))
def test_fixed_point(xs, mcs):
    p = ControllerParams(n_stations=len(xs))
    c = Controller(list(range(len(xs))), p)
    reps = {i: rep(p.n_eps, mcs[i], i) for i in range(len(xs))}
    c.tick(0, reps)
    first = dict(c.rates)
    ref = c.log[-1].i_star
    for k in range(1, 5):
        c.tick(k, reps)
        assert c.rates == first and c.log[-1].i_star == ref


def test_convergence_immediate():
    c = convergence_metrics(np.full(30, 32.0), 32.0, 0.5)
    assert c.time_to_target == 0 and c.converged


def test_convergence_never():
    n = 32 + 20 * np.sin(np.arange(60))
    c = convergence_metrics(n, 32.0, 1.0)
    assert not c.converged and c.std > 5


def test_convergence_too_short():
    with pytest.raises(ValueError):
        convergence_metrics(np.full(5, 32.0))


def test_saturation_drives_rate_down():
    sc = presets.channel_drop(duration=24.0, t_drop=20.0)
    tr = run_scenario(sc)
    log = [r for r in tr.controller_log if r.mean_agg is not None and r.mean_agg >= 60]
    assert log, "the drop should push aggregation to the cap"
    assert all(r.x_after < r.x_before for r in log)
    s = agg_series(tr.controller_log, 0)
    assert s[-1] < 45  # back under the cap once the rate fits the channel
