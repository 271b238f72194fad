import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pleonet.linkmodel import (
    TURBO_BPSK,
    UNCODED_BPSK,
    FadeProcess,
    JammerModel,
    LinkProfile,
    ModCod,
    PowerLimits,
    ber,
    crossing_ebn0_db,
    ebn0_grid,
    effective_jam_db,
    fade_series,
    fspl_db,
    is_stationary,
    jammed_sinr_db,
    per,
    per_from_ber,
    power_control_run,
    power_control_step,
    processing_gain_db,
    rain_fade_step,
    simulate_hop_hits,
    snr_db,
)

# mpmath 40-digit references
FSPL_27G5_1000KM = 181.23665387660526
FSPL_27G5_550KM = 176.04390766649013
BER_BPSK_9DB6 = 9.736176018578597e-06
PER_1E5_1500 = 0.014888134280822598


def test_fspl_closed_form():
    assert fspl_db(27.5, 1000) == pytest.approx(181.24, abs=0.01)
    assert fspl_db(27.5, 1000) == pytest.approx(FSPL_27G5_1000KM, abs=1e-9)
    assert fspl_db(27.5, 550) == pytest.approx(176.05, abs=0.01)
    assert fspl_db(27.5, 550) == pytest.approx(FSPL_27G5_550KM, abs=1e-9)


@given(f=st.floats(0.1, 300), d=st.floats(1, 1e5), alpha=st.floats(0.01, 100))
def test_fspl_telescopes(f, d, alpha):
    assert fspl_db(f, alpha * d) - fspl_db(f, d) == pytest.approx(20 * math.log10(alpha), abs=1e-9)


@pytest.mark.parametrize("bad", [(0, 10), (10, 0), (-1, 5)])
def test_fspl_domain(bad):
    with pytest.raises(ValueError):
        fspl_db(*bad)


def test_processing_gain():
    assert processing_gain_db(240) == pytest.approx(23.80, abs=0.005)
    assert math.floor(processing_gain_db(240)) == 23
    assert processing_gain_db(1) == 0.0
    assert processing_gain_db(100) == pytest.approx(20.0)


def test_snr_linear_in_eirp():
    p = LinkProfile()
    q = LinkProfile(tx_eirp_dbw=p.tx_eirp_dbw + 3)
    assert snr_db(q, 800).ebn0_db - snr_db(p, 800).ebn0_db == pytest.approx(3.0, abs=1e-12)


def test_snr_constructed_identity():
    # pick EIRP so that the budget sums to exactly 10 dB at 1000 km
    p0 = LinkProfile(tx_eirp_dbw=0.0, rx_gt_dbk=0.0, data_rate_bps=1e6)
    offset = snr_db(p0, 1000.0).ebn0_db
    p = LinkProfile(tx_eirp_dbw=10.0 - offset, rx_gt_dbk=0.0, data_rate_bps=1e6)
    assert snr_db(p, 1000.0).ebn0_db == pytest.approx(10.0, abs=1e-12)


def test_budget_sheet_fig3_parameters():
    # hand sheet: FSPL(20 GHz, 1000 km) = 178.4706; C/N0 = 36 + 10 - 178.4706 + 228.6
    # Eb/N0 = C/N0 - 10log10(16e6) = 24.0882; ten DSSS users at SF 240 -> 13.8299
    single = LinkProfile(freq_ghz=20.0, tx_eirp_dbw=36.0, rx_gt_dbk=10.0)
    assert snr_db(single, 1000.0).ebn0_db == pytest.approx(24.0882, abs=0.01)
    shared = LinkProfile(freq_ghz=20.0, tx_eirp_dbw=36.0, rx_gt_dbk=10.0, num_users=10)
    assert snr_db(shared, 1000.0).ebn0_db == pytest.approx(13.8299, abs=0.01)


def test_esn0_accounts_bits_per_symbol():
    p = LinkProfile(modcod=ModCod("16QAM"))
    s = snr_db(p, 1000.0)
    assert s.esn0_db - s.ebn0_db == pytest.approx(10 * math.log10(4))


def test_ber_bpsk_reference():
    assert ber(UNCODED_BPSK, 9.6) == pytest.approx(1.0e-5, rel=0.2)
    assert ber(UNCODED_BPSK, 9.6) == pytest.approx(BER_BPSK_9DB6, rel=1e-9)


def test_per_reference_and_limits():
    assert per_from_ber(1e-5, 1500) == pytest.approx(1.49e-2, abs=1e-4)
    assert per_from_ber(1e-5, 1500) == pytest.approx(PER_1E5_1500, rel=1e-12)
    assert per_from_ber(0.0, 1500) == 0.0
    assert per_from_ber(1.0, 1500) == 1.0
    with pytest.raises(ValueError):
        per_from_ber(0.1, 0)


@pytest.mark.parametrize("mc", [UNCODED_BPSK, ModCod("QPSK"), ModCod("16QAM"), TURBO_BPSK])
def test_monotone_curves(mc):
    grid = np.linspace(-10, 40, 501)
    b = ber(mc, grid)
    assert np.all(np.diff(b) <= 0)
    assert ber(mc, 60.0) < 1e-100
    p = per(mc, grid, 1500)
    assert np.all(np.diff(p) <= 0)


@given(x=st.floats(-20, 30), n=st.integers(1, 20000))
def test_gain_shift_exact(x, n):
    coded = ModCod("BPSK", 12.0)
    assert ber(coded, x) == ber(UNCODED_BPSK, x + 12.0)
    assert per(coded, x, n) == per(UNCODED_BPSK, x + 12.0, n)


def test_per_monotone_in_ber():
    b = np.linspace(0, 1, 1001)
    assert np.all(np.diff(per_from_ber(b, 1500)) >= 0)


def test_turbo_crossing_shift():
    grid = ebn0_grid(-5.0, 20.0, 0.1)
    xu = crossing_ebn0_db(grid, per(UNCODED_BPSK, grid, 1500), 1e-3)
    xc = crossing_ebn0_db(grid, per(TURBO_BPSK, grid, 1500), 1e-3)
    assert xu - xc == pytest.approx(12.0, abs=0.1)


def test_fade_degenerate_constant():
    proc = FadeProcess(ar_coeffs=(), ma_coeffs=(), noise_std_db=0.0, mean_fade_db=2.5)
    assert np.all(fade_series(proc, 50) == 2.5)
    proc0 = FadeProcess(ar_coeffs=(0.0,), ma_coeffs=(0.0,), noise_std_db=0.0, mean_fade_db=1.0)
    assert np.all(fade_series(proc0, 20) == 1.0)


def test_fade_ar1_autocorrelation():
    x = fade_series(FadeProcess(ar_coeffs=(0.9,), noise_std_db=1.0, seed=3), 100_000)
    x = x - x.mean()
    rho = np.dot(x[:-1], x[1:]) / np.dot(x, x)
    assert rho == pytest.approx(0.9, abs=0.05)


def test_fade_default_std_about_3db():
    x = fade_series(FadeProcess(seed=1), 100_000)
    assert x.std() == pytest.approx(3.0, rel=0.15)


def test_fade_deterministic():
    p = FadeProcess(ar_coeffs=(0.5, 0.2), ma_coeffs=(0.3,), seed=9)
    np.testing.assert_array_equal(fade_series(p, 200), fade_series(p, 200))


def test_fade_arma_matches_recursion():
    p = FadeProcess(ar_coeffs=(0.5, -0.2), ma_coeffs=(0.4,), noise_std_db=1.0, mean_fade_db=1.0, seed=4)
    e = np.random.default_rng(4).normal(0.0, 1.0, 30)
    xs = []
    for t in range(30):
        x = e[t] + 0.4 * (e[t - 1] if t >= 1 else 0.0)
        x += 0.5 * (xs[t - 1] if t >= 1 else 0.0) - 0.2 * (xs[t - 2] if t >= 2 else 0.0)
        xs.append(x)
    np.testing.assert_allclose(fade_series(p, 30), 1.0 + np.array(xs), rtol=0, atol=1e-12)


@pytest.mark.parametrize("coeffs", [(1.0,), (1.2,), (0.5, 0.6), (-1.1,)])
def test_fade_rejects_unstable(coeffs):
    assert not is_stationary(coeffs)
    with pytest.raises(ValueError):
        FadeProcess(ar_coeffs=coeffs)


def test_power_control_inversion_and_saturation():
    lim = PowerLimits(0.0, 20.0)
    tx0, out0 = power_control_step(10.0, 2.0, 12.0, lim)
    tx1, out1 = power_control_step(10.0, 5.0, tx0, lim)
    assert tx1 - tx0 == pytest.approx(3.0)
    assert not out0 and not out1
    tx2, out2 = power_control_step(10.0, 40.0, tx1, lim)
    assert tx2 == 20.0 and out2


def test_power_control_outage_matches_exceedance():
    proc = FadeProcess(seed=21, mean_fade_db=2.0)
    lim = PowerLimits(-10.0, 6.0)
    target, offset = 10.0, 8.0
    _, outage = power_control_run(proc, 100_000, target, lim, offset)
    # oracle on the fade process alone: outage iff fade exceeds the headroom
    fades = fade_series(proc, 100_000)
    threshold = lim.max_dbw + offset - target
    expected = np.mean(fades > threshold + 1e-9)
    assert expected > 0.01
    assert outage.mean() == pytest.approx(expected, rel=0.2)


def test_power_limits_validation():
    with pytest.raises(ValueError):
        PowerLimits(5.0, 1.0)


JAMMER = JammerModel(jammer_eirp_dbw=40.0, strategy="single_tone", null_depth_db=30.0, hop_channels=10)
PROFILE = LinkProfile(num_users=1)


def test_no_jammer_limit():
    quiet = JammerModel(jammer_eirp_dbw=-math.inf)
    s = snr_db(PROFILE, 1000).ebn0_db
    assert jammed_sinr_db(PROFILE, 1000, quiet, jammer_distance_km=500) == s
    weak = JammerModel(jammer_eirp_dbw=-300.0)
    assert jammed_sinr_db(PROFILE, 1000, weak, jammer_distance_km=500) == pytest.approx(s, abs=1e-12)


def test_null_depth_exact():
    j_none = effective_jam_db(PROFILE, JAMMER, 600, "none")
    j_null = effective_jam_db(PROFILE, JAMMER, 600, "null_steering")
    assert j_none - j_null == pytest.approx(30.0, abs=1e-12)
    assert jammed_sinr_db(PROFILE, 1000, JAMMER, "null_steering", jammer_distance_km=600) > \
        jammed_sinr_db(PROFILE, 1000, JAMMER, "none", jammer_distance_km=600)


def test_processing_gain_always_applied():
    narrow = LinkProfile(spreading_factor=1)
    assert effective_jam_db(narrow, JAMMER, 600) - effective_jam_db(PROFILE, JAMMER, 600) == \
        pytest.approx(processing_gain_db(240))


def test_hop_dilution_matches_monte_carlo():
    dil = effective_jam_db(PROFILE, JAMMER, 600, "none") - effective_jam_db(PROFILE, JAMMER, 600, "freq_hop")
    assert dil == pytest.approx(10.0)
    hit = simulate_hop_hits(10, 100_000, 5)
    assert hit == pytest.approx(10 ** (-dil / 10), rel=0.02)


def test_rx_position_geometry():
    j = JammerModel(jammer_eirp_dbw=30.0, position_km=(0.0, 0.0, 0.0))
    a = jammed_sinr_db(PROFILE, 1000, j, rx_position_km=(600.0, 0.0, 0.0))
    b = jammed_sinr_db(PROFILE, 1000, j, jammer_distance_km=600.0)
    assert a == b
    with pytest.raises(ValueError):
        jammed_sinr_db(PROFILE, 1000, j)


@given(eirp=st.floats(-50, 80), dist=st.floats(10, 5000),
       strategy=st.sampled_from(["barrage", "single_tone", "follower"]),
       hops=st.integers(1, 64), null=st.floats(0, 60))
def test_mitigation_never_hurts(eirp, dist, strategy, hops, null):
    jam = JammerModel(eirp, strategy=strategy, hop_channels=hops, null_depth_db=null)
    base = jammed_sinr_db(PROFILE, 800, jam, "none", jammer_distance_km=dist)
    for m in ("null_steering", "freq_hop", "both"):
        assert jammed_sinr_db(PROFILE, 800, jam, m, jammer_distance_km=dist) >= base


def test_invalid_types():
    with pytest.raises(ValueError):
        ModCod("8PSK")
    with pytest.raises(ValueError):
        ModCod("BPSK", -1.0)
    with pytest.raises(ValueError):
        LinkProfile(spreading_factor=0.5)
    with pytest.raises(ValueError):
        LinkProfile(rolloff=1.0)
    with pytest.raises(ValueError):
        JammerModel(10.0, hop_channels=0)
