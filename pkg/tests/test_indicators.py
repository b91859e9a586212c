import numpy as np
import pytest

from clmmlab import indicators as ind


def constant_bars(n=300, price=100.0):
    p = np.full(n, price)
    return p.copy(), p.copy(), p.copy(), p.copy()  # o, h, l, c


def random_bars(n=400, seed=0):
    rng = np.random.default_rng(seed)
    c = 100.0 * np.exp(np.cumsum(rng.normal(0, 0.01, n)))
    o = np.concatenate([[c[0]], c[:-1]])
    spread = np.abs(rng.normal(0, 0.002, n)) + 1e-6
    h = np.maximum(o, c) * (1 + spread)
    l = np.minimum(o, c) / (1 + spread)
    v = 1e6 * (1 + np.abs(rng.normal(0, 1, n)))
    return o, h, l, c, v


def test_sma_and_ema_hand_values():
    x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    s = ind.sma(x, 3)
    assert np.isnan(s[1])
    assert s[2] == pytest.approx(2.0)
    assert s[4] == pytest.approx(4.0)
    e = ind.ema(x, 3)
    # seed = mean(1,2,3) = 2; alpha = 0.5
    assert e[2] == pytest.approx(2.0)
    assert e[3] == pytest.approx(3.0)
    assert e[4] == pytest.approx(4.0)


def test_dema_on_linear_ramp_tracks_ramp():
    # double EMA compensates the EMA lag exactly on a straight line, in the
    # steady state
    x = np.arange(1.0, 301.0)
    d = ind.dema(x, 10)
    assert d[-1] == pytest.approx(x[-1], rel=1e-6)


def test_momentum_ramp():
    x = np.arange(300.0) + 300.0
    m = ind.momentum(x, 10)
    assert m[50] == pytest.approx(10.0)
    assert np.isnan(m[9])


def test_cmo_strictly_increasing_is_100():
    x = np.cumsum(np.ones(50)) + 100.0
    c = ind.cmo(x, 14)
    assert c[20] == pytest.approx(100.0)
    down = ind.cmo(x[::-1].copy(), 14)
    assert down[20] == pytest.approx(-100.0)


def test_true_range_uses_prev_close():
    h = np.array([10.0, 12.0, 11.0])
    l = np.array([9.0, 10.5, 10.0])
    c = np.array([9.5, 11.0, 10.2])
    tr = ind.true_range(h, l, c)
    assert np.isnan(tr[0])
    assert tr[1] == pytest.approx(max(12.0 - 10.5, abs(12.0 - 9.5), abs(10.5 - 9.5)))
    assert tr[2] == pytest.approx(max(11.0 - 10.0, abs(11.0 - 11.0), abs(10.0 - 11.0)))


def test_constant_series_degenerate_values():
    o, h, l, c = constant_bars()
    assert np.all(ind.bop(o, h, l, c) == 0.0)
    assert ind.cmo(c, 14)[250] == 0.0
    assert ind.cci(h, l, c, 14)[250] == 0.0
    assert ind.dx(h, l, c, 14)[250] == 0.0
    assert ind.adx(h, l, c, 14)[250] == 0.0
    assert ind.true_range(h, l, c)[250] == 0.0
    assert ind.natr(h, l, c, 14)[250] == 0.0
    slow_k, slow_d = ind.stochastic(h, l, c)
    assert slow_k[250] == 0.0 and slow_d[250] == 0.0
    assert ind.ultimate_oscillator(h, l, c)[250] == 0.0
    assert ind.aroon_osc(h, l, 14)[250] == 0.0
    assert ind.parabolic_sar(h, l)[250] == pytest.approx(100.0)
    assert ind.dema(c, 30)[250] == pytest.approx(100.0)
    assert ind.trix(c, 30)[250] == 0.0
    assert ind.apo(c)[250] == 0.0
    # Hilbert outputs finite on flat input
    assert np.isfinite(ind.ht_dc_period(c)[250])
    assert np.isfinite(ind.ht_dc_phase(c)[250])


def test_oscillator_ranges():
    o, h, l, c, v = random_bars(seed=3)
    for arr, lo, hi in [
        (ind.adx(h, l, c, 14), 0.0, 100.0),
        (ind.dx(h, l, c, 14), 0.0, 100.0),
        (ind.cmo(c, 14), -100.0, 100.0),
        (ind.aroon_osc(h, l, 14), -100.0, 100.0),
        (ind.ultimate_oscillator(h, l, c), 0.0, 100.0),
        (ind.bop(o, h, l, c), -1.0, 1.0),
        (ind.stochastic(h, l, c)[0], 0.0, 100.0),
        (ind.stochastic_fast(h, l, c)[0], 0.0, 100.0),
    ]:
        vals = arr[np.isfinite(arr)]
        assert np.all(vals >= lo - 1e-9) and np.all(vals <= hi + 1e-9)


def test_plus_minus_dm_nonnegative_and_trend_sensitive():
    o, h, l, c, v = random_bars(seed=5)
    p = ind.plus_dm(h, l, 14)
    m = ind.minus_dm(h, l, 14)
    assert np.all(p[np.isfinite(p)] >= 0.0)
    assert np.all(m[np.isfinite(m)] >= 0.0)
    # strict uptrend: no minus DM at all
    up = np.arange(100.0) + 100.0
    assert np.all(ind.minus_dm(up, up - 0.5, 14)[20:] == 0.0)
    assert np.all(ind.plus_dm(up, up - 0.5, 14)[20:] > 0.0)


def test_adx_rises_in_persistent_trend():
    n = 300
    up = 100.0 * 1.01 ** np.arange(n)
    h = up * 1.001
    l = up * 0.999
    a = ind.adx(h, l, up, 14)
    assert a[-1] > 90.0


def test_sar_flips_below_uptrend_above_downtrend():
    n = 120
    up = 100.0 * 1.01 ** np.arange(n)
    h, l = up * 1.001, up * 0.999
    s = ind.parabolic_sar(h, l)
    assert np.all(s[5:] < l[5:])
    down = up[::-1].copy()
    h2, l2 = down * 1.001, down * 0.999
    s2 = ind.parabolic_sar(h2, l2)
    assert np.all(s2[5:] > h2[5:])


def test_stochastic_extremes():
    n = 60
    up = np.arange(n) + 100.0
    h, l = up + 0.5, up - 0.5
    slow_k, slow_d = ind.stochastic(h, l, up)
    # in a steady uptrend the close sits near the top of every window
    assert slow_k[-1] > 80.0
    fast_k, fast_d = ind.stochastic_fast(h, l, up)
    assert fast_k[-1] > 80.0


def test_trix_sign_follows_trend():
    n = 300
    up = 100.0 * 1.002 ** np.arange(n)
    assert ind.trix(up, 30)[-1] > 0.0
    assert ind.trix(up[::-1].copy(), 30)[-1] < 0.0


def test_ht_dc_period_bounds_and_cycle_detection():
    n = 600
    t = np.arange(n)
    x = 100.0 + 5.0 * np.sin(2 * np.pi * t / 20.0)
    per = ind.ht_dc_period(x)
    tail = per[400:]
    assert np.all(np.isfinite(tail))
    assert np.all((tail >= 6.0) & (tail <= 50.0))
    # a clean 20-bar cycle should be picked up within a couple of bars
    assert abs(float(np.median(tail)) - 20.0) < 3.0


def test_ht_dc_phase_finite_and_bounded():
    o, h, l, c, v = random_bars(600, seed=11)
    ph = ind.ht_dc_phase(c)
    tail = ph[200:]
    assert np.all(np.isfinite(tail))
    assert np.all((tail > -360.0) & (tail < 360.0))


def test_warmup_prefixes_are_nan_then_finite():
    o, h, l, c, v = random_bars(400, seed=13)
    for arr in [
        ind.dema(c, 30),
        ind.adx(h, l, c, 14),
        ind.trix(c, 30),
        ind.ultimate_oscillator(h, l, c),
        ind.ht_dc_period(c),
        ind.ht_dc_phase(c),
        ind.natr(h, l, c, 14),
    ]:
        assert np.isnan(arr[0])
        assert np.all(np.isfinite(arr[200:]))


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        ind.true_range(np.ones(5), np.ones(4), np.ones(5))
    with pytest.raises(ValueError):
        ind.apo(np.ones(50), 26, 12)
    with pytest.raises(ValueError):
        ind.sma(np.ones(5), 0)
