"""Link quality for a Ka-band DSSS ground-to-LEO link.

Walks from a free-space budget to packet error rates, then shows what rain
fading does with and without power control, and how much a jammer costs
under each mitigation.
"""

import numpy as np

from pleonet.linkmodel import (
    TURBO_BPSK,
    UNCODED_BPSK,
    FadeProcess,
    JammerModel,
    LinkProfile,
    PowerLimits,
    crossing_ebn0_db,
    ebn0_grid,
    fade_series,
    fspl_db,
    jammed_sinr_db,
    per,
    per_sweep,
    power_control_run,
    processing_gain_db,
    snr_db,
)

# Budget sheet: 20 GHz downlink from a 550 km satellite at zenith
single = LinkProfile(num_users=1)
shared = LinkProfile(num_users=10)
print(f"FSPL at 550 km: {fspl_db(20.0, 550.0):.2f} dB")
print(f"processing gain, SF 240: {processing_gain_db(240):.2f} dB")
print(f"Eb/N0, 1 user:   {snr_db(single, 550.0).ebn0_db:.2f} dB")
print(f"Eb/N0, 10 users: {snr_db(shared, 550.0).ebn0_db:.2f} dB (MAI limited)")

# PER curves, and where each crosses 1e-3
grid = ebn0_grid(-5, 15, 0.1)
rows = per_sweep([UNCODED_BPSK, TURBO_BPSK], grid, 1500)
for mc in (UNCODED_BPSK, TURBO_BPSK):
    vals = np.array([p for _, lab, p in rows if lab == mc.label])
    print(f"{mc.label:>13}: PER 1e-3 at {crossing_ebn0_db(grid, vals, 1e-3):6.2f} dB")

# Rain fade: 3 dB std AR(1), one sample per second for an hour
proc = FadeProcess(mean_fade_db=2.0, seed=4)
fade = fade_series(proc, 3600)
print(f"fade: mean {fade.mean():.2f} dB, 99th pct {np.percentile(fade, 99):.2f} dB")

limits = PowerLimits(20.0, 36.0)
clear = snr_db(shared, 800.0).ebn0_db - shared.tx_eirp_dbw  # SNR at 0 dBW
tx, outage = power_control_run(proc, 3600, target_snr_db=9.0, limits=limits, snr_at_0dbw_db=clear)
print(f"power control to 9 dB: mean tx {tx.mean():.1f} dBW, outage {outage.mean():.2%}")
fixed = clear + shared.tx_eirp_dbw - fade
# same outage as running flat out, but the mean transmit power is lower
print(f"fixed 36 dBW: below 9 dB {np.mean(fixed < 9.0):.2%} of the time")

# Jamming: a 40 dBW single-tone jammer 900 km from the satellite
jam = JammerModel(40.0, strategy="single_tone", null_depth_db=25.0, hop_channels=16)
for mit in ("none", "null_steering", "freq_hop", "both"):
    s = jammed_sinr_db(shared, 800.0, jam, mit, jammer_distance_km=900.0)
    print(f"{mit:>13}: Eb/(N0+J0) {s:6.2f} dB, PER {float(per(UNCODED_BPSK, s, 1500)):.2e}")
