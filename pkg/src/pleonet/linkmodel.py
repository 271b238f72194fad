"""
Link model
==========

Physical-layer link quality for ground-LEO links: free-space loss, link
budgets, DSSS processing gain, analytic BER/PER curves, ARMA rain fading,
adaptive power control and jamming with its mitigations.

Coded schemes are an Eb/N0 shift of the uncoded curve by ``coding_gain_db``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import erfc

from .constants import BOLTZMANN_DBW

MODULATIONS = {"BPSK": 1, "QPSK": 2, "16QAM": 4}  # bits per symbol
MITIGATIONS = ("none", "null_steering", "freq_hop", "both")
JAMMER_STRATEGIES = ("barrage", "single_tone", "follower")


@dataclass(frozen=True)
class ModCod:
    modulation: str = "BPSK"
    coding_gain_db: float = 0.0
    code_rate: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.modulation not in MODULATIONS:
            raise ValueError(f"unknown modulation {self.modulation!r}")
        if self.coding_gain_db < 0:
            raise ValueError("coding_gain_db must be >= 0")
        if not 0 < self.code_rate <= 1:
            raise ValueError("code_rate must be in (0, 1]")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        return self.modulation if self.coding_gain_db == 0 else f"{self.modulation}+{self.coding_gain_db:g}dB"


UNCODED_BPSK = ModCod("BPSK", 0.0, 1.0, "BPSK-uncoded")
TURBO_BPSK = ModCod("BPSK", 12.0, 0.5, "BPSK-turbo")


@dataclass(frozen=True)
class LinkProfile:
    """Parameters of one link. Defaults follow the Ka-band DSSS downlink
    scenario: 16 Mbps, spreading factor 240, 0.35 roll-off, 1500-bit packets,
    ten terminals sharing the channel."""

    freq_ghz: float = 20.0
    tx_eirp_dbw: float = 36.0
    rx_gt_dbk: float = 10.0
    bandwidth_hz: float = 16e6 * 240 * 1.35
    data_rate_bps: float = 16e6
    spreading_factor: float = 240.0
    rolloff: float = 0.35
    modcod: ModCod = field(default_factory=lambda: UNCODED_BPSK)
    packet_bits: int = 1500
    num_users: int = 1

    def __post_init__(self):
        if self.spreading_factor < 1:
            raise ValueError("spreading_factor must be >= 1")
        if not 0 <= self.rolloff < 1:
            raise ValueError("rolloff must be in [0, 1)")
        if self.data_rate_bps <= 0:
            raise ValueError("data_rate_bps must be > 0")
        if self.num_users < 1:
            raise ValueError("num_users must be >= 1")


def fspl_db(freq_ghz: float, distance_km: float) -> float:
    """Free-space path loss in dB for GHz / km inputs."""
    if freq_ghz <= 0 or distance_km <= 0:
        raise ValueError("frequency and distance must be positive")
    return 92.45 + 20.0 * math.log10(freq_ghz) + 20.0 * math.log10(distance_km)


def processing_gain_db(spreading_factor: float) -> float:
    if spreading_factor < 1:
        raise ValueError("spreading_factor must be >= 1")
    return 10.0 * math.log10(spreading_factor)


def db_to_lin(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def lin_to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(x, dtype=float))


class LinkSnr(NamedTuple):
    ebn0_db: float
    esn0_db: float


def cn0_dbhz(profile: LinkProfile, distance_km: float, extra_losses_db: float = 0.0) -> float:
    return (profile.tx_eirp_dbw + profile.rx_gt_dbk - fspl_db(profile.freq_ghz, distance_km)
            - extra_losses_db - BOLTZMANN_DBW)


def mai_limited_ebn0_db(ebn0_db: float, num_users: int, spreading_factor: float) -> float:
    """Eb/(N0 + I0) with multi-access interference as a Gaussian noise rise.

    I0 from K-1 equal-power co-channel users after despreading gives
    Eb/I0 = spreading_factor / (K - 1).
    """
    if num_users <= 1:
        return ebn0_db
    inv = 1.0 / db_to_lin(ebn0_db) + (num_users - 1) / spreading_factor
    return float(lin_to_db(1.0 / inv))


def snr_db(profile: LinkProfile, distance_km: float, extra_losses_db: float = 0.0) -> LinkSnr:
    """Eb/N0 and Es/N0 of a link budget (MAI included when num_users > 1)."""
    ebn0 = cn0_dbhz(profile, distance_km, extra_losses_db) - 10.0 * math.log10(profile.data_rate_bps)
    ebn0 = mai_limited_ebn0_db(ebn0, profile.num_users, profile.spreading_factor)
    bits = MODULATIONS[profile.modcod.modulation] * profile.modcod.code_rate
    return LinkSnr(float(ebn0), float(ebn0 + 10.0 * math.log10(bits)))


def _qfunc(x):
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def uncoded_ber(modulation: str, ebn0_db):
    g = db_to_lin(ebn0_db)
    if modulation in ("BPSK", "QPSK"):
        return _qfunc(np.sqrt(2.0 * g))
    if modulation == "16QAM":
        # Gray-coded nearest-neighbour approximation, capped at 1/2
        return np.minimum(0.75 * _qfunc(np.sqrt(0.8 * g)), 0.5)
    raise ValueError(f"unknown modulation {modulation!r}")


def ber(modcod: ModCod, ebn0_db):
    """AWGN bit error rate; scalar in, float out; array in, array out."""
    out = uncoded_ber(modcod.modulation, np.asarray(ebn0_db, dtype=float) + modcod.coding_gain_db)
    return float(out) if np.ndim(out) == 0 else out


def per_from_ber(bit_error_rate, packet_bits: int):
    if packet_bits < 1:
        raise ValueError("packet_bits must be >= 1")
    b = np.asarray(bit_error_rate, dtype=float)
    with np.errstate(divide="ignore"):
        out = -np.expm1(packet_bits * np.log1p(-b))
    return float(out) if np.ndim(out) == 0 else out


def per(modcod: ModCod, ebn0_db, packet_bits: int):
    return per_from_ber(ber(modcod, ebn0_db), packet_bits)


def per_sweep(schemes: Sequence[ModCod], ebn0_grid_db, packet_bits: int) -> list[tuple[float, str, float]]:
    """Rows ``(ebn0_db, scheme, per)`` for a Fig.-3-style chart."""
    grid = np.asarray(ebn0_grid_db, dtype=float)
    rows = []
    for mc in schemes:
        vals = np.atleast_1d(per(mc, grid, packet_bits))
        rows += [(float(x), mc.label, float(p)) for x, p in zip(grid, vals)]
    return rows


def ebn0_grid(start_db: float, stop_db: float, step_db: float) -> np.ndarray:
    n = int(round((stop_db - start_db) / step_db))
    return np.round(start_db + step_db * np.arange(n + 1), 10)


def crossing_ebn0_db(grid_db, per_values, target: float) -> float:
    """Eb/N0 where a monotone PER curve first drops to ``target``.

    Linear interpolation of log10(PER) between the bracketing grid points.
    """
    grid = np.asarray(grid_db, dtype=float)
    vals = np.asarray(per_values, dtype=float)
    below = np.flatnonzero(vals <= target)
    if below.size == 0:
        raise ValueError("curve never reaches target")
    i = below[0]
    if i == 0:
        return float(grid[0])
    y0, y1 = math.log10(vals[i - 1]), math.log10(max(vals[i], 1e-300))
    yt = math.log10(target)
    return float(grid[i - 1] + (yt - y0) * (grid[i] - grid[i - 1]) / (y1 - y0))


# --------------------------------------------------------------------------
# Rain fading
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FadeProcess:
    """ARMA(p, q) rain fade in dB around ``mean_fade_db``."""

    ar_coeffs: tuple = (0.98,)
    ma_coeffs: tuple = ()
    noise_std_db: float = 3.0 * math.sqrt(1 - 0.98**2)  # 3 dB stationary std
    mean_fade_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ar_coeffs", tuple(float(a) for a in self.ar_coeffs))
        object.__setattr__(self, "ma_coeffs", tuple(float(b) for b in self.ma_coeffs))
        if self.noise_std_db < 0:
            raise ValueError("noise_std_db must be >= 0")
        if self.ar_coeffs and not is_stationary(self.ar_coeffs):
            raise ValueError(f"AR coefficients {self.ar_coeffs} are not stationary")

    def initial_state(self) -> "FadeState":
        return FadeState(np.random.default_rng(self.seed),
                         [0.0] * len(self.ar_coeffs), [0.0] * len(self.ma_coeffs))


def is_stationary(ar_coeffs: Sequence[float]) -> bool:
    """Roots of z^p - a1 z^(p-1) - ... - ap strictly inside the unit circle."""
    if not any(ar_coeffs):
        return True
    roots = np.roots(np.concatenate([[1.0], -np.asarray(ar_coeffs, dtype=float)]))
    return bool(np.all(np.abs(roots) < 1.0))


@dataclass
class FadeState:
    rng: np.random.Generator
    x_hist: list  # most recent first
    e_hist: list


def rain_fade_step(process: FadeProcess, state: FadeState) -> tuple[float, FadeState]:
    e = float(state.rng.normal(0.0, process.noise_std_db)) if process.noise_std_db > 0 else 0.0
    x = e
    for a, xp in zip(process.ar_coeffs, state.x_hist):
        x += a * xp
    for b, ep in zip(process.ma_coeffs, state.e_hist):
        x += b * ep
    x_hist = ([x] + state.x_hist)[:len(process.ar_coeffs)]
    e_hist = ([e] + state.e_hist)[:len(process.ma_coeffs)]
    return process.mean_fade_db + x, FadeState(state.rng, x_hist, e_hist)


def fade_series(process: FadeProcess, n: int) -> np.ndarray:
    state = process.initial_state()
    out = np.empty(n)
    for i in range(n):
        out[i], state = rain_fade_step(process, state)
    return out


# --------------------------------------------------------------------------
# Power control
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLimits:
    min_dbw: float
    max_dbw: float

    def __post_init__(self):
        if self.min_dbw > self.max_dbw:
            raise ValueError("min_dbw must be <= max_dbw")


def power_control_step(target_snr_db: float, measured_fade_db: float, current_tx_dbw: float,
                       limits: PowerLimits, snr_at_0dbw_db: float = 0.0) -> tuple[float, bool]:
    """Fade-inverting transmit power update.

    ``snr_at_0dbw_db`` is the clear-sky SNR a 0 dBW transmission achieves, so
    the achieved SNR is ``tx + snr_at_0dbw_db - fade``. Returns the clamped
    new power and an outage flag (target missed even after clamping).
    """
    achieved = current_tx_dbw + snr_at_0dbw_db - measured_fade_db
    new_tx = min(max(current_tx_dbw + (target_snr_db - achieved), limits.min_dbw), limits.max_dbw)
    outage = new_tx + snr_at_0dbw_db - measured_fade_db < target_snr_db - 1e-9
    return new_tx, outage


def power_control_run(process: FadeProcess, n_steps: int, target_snr_db: float,
                      limits: PowerLimits, snr_at_0dbw_db: float = 0.0,
                      initial_tx_dbw: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Closed loop over ``n_steps`` fade samples; returns (tx_dbw, outage) arrays."""
    state = process.initial_state()
    tx = limits.min_dbw if initial_tx_dbw is None else initial_tx_dbw
    txs = np.empty(n_steps)
    outs = np.zeros(n_steps, dtype=bool)
    for i in range(n_steps):
        fade, state = rain_fade_step(process, state)
        tx, outs[i] = power_control_step(target_snr_db, fade, tx, limits, snr_at_0dbw_db)
        txs[i] = tx
    return txs, outs


# --------------------------------------------------------------------------
# Jamming
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class JammerModel:
    jammer_eirp_dbw: float
    position_km: tuple = (0.0, 0.0, 0.0)
    strategy: str = "barrage"
    null_depth_db: float = 30.0
    hop_channels: int = 1
    hop_overlap: float | None = None  # None: 1/hop_channels

    def __post_init__(self):
        if self.strategy not in JAMMER_STRATEGIES:
            raise ValueError(f"unknown jammer strategy {self.strategy!r}")
        if self.null_depth_db < 0:
            raise ValueError("null_depth_db must be >= 0")
        if self.hop_channels < 1:
            raise ValueError("hop_channels must be >= 1")
        if self.hop_overlap is not None and not 0 < self.hop_overlap <= 1:
            raise ValueError("hop_overlap must be in (0, 1]")

    @property
    def overlap(self) -> float:
        return 1.0 / self.hop_channels if self.hop_overlap is None else self.hop_overlap


def hop_dilution_db(jammer: JammerModel) -> float:
    """Average jam-power reduction from frequency hopping.

    Only a single-tone jammer is diluted; a follower tracks the hops and a
    barrage jammer already sits on every channel.
    """
    if jammer.strategy != "single_tone":
        return 0.0
    return -10.0 * math.log10(jammer.overlap)


def effective_jam_db(profile: LinkProfile, jammer: JammerModel, jammer_distance_km: float,
                     mitigation: str = "none") -> float:
    """Post-despreading jam density relative to N0, per bit, in dB."""
    if mitigation not in MITIGATIONS:
        raise ValueError(f"unknown mitigation {mitigation!r}")
    j = (jammer.jammer_eirp_dbw + profile.rx_gt_dbk - fspl_db(profile.freq_ghz, jammer_distance_km)
         - BOLTZMANN_DBW - 10.0 * math.log10(profile.data_rate_bps))
    j -= processing_gain_db(profile.spreading_factor)
    if mitigation in ("null_steering", "both"):
        j -= jammer.null_depth_db
    if mitigation in ("freq_hop", "both"):
        j -= hop_dilution_db(jammer)
    return j


def jammed_sinr_db(profile: LinkProfile, distance_km: float, jammer: JammerModel,
                   mitigation: str = "none", rx_position_km=None,
                   jammer_distance_km: float | None = None) -> float:
    """Eb/(N0 + J0) for the link under ``jammer`` and a mitigation choice.

    The jammer range comes from ``jammer_distance_km`` or, failing that, from
    ``rx_position_km`` and the jammer's position.
    """
    if jammer_distance_km is None:
        if rx_position_km is None:
            raise ValueError("need rx_position_km or jammer_distance_km")
        jammer_distance_km = float(np.linalg.norm(np.asarray(jammer.position_km) - np.asarray(rx_position_km)))
    s = snr_db(profile, distance_km).ebn0_db
    if jammer.jammer_eirp_dbw == -math.inf:
        return s
    j = effective_jam_db(profile, jammer, jammer_distance_km, mitigation)
    return float(s - lin_to_db(1.0 + db_to_lin(j)))


def simulate_hop_hits(hop_channels: int, n_hops: int, rng, overlap: float | None = None) -> float:
    """Monte-Carlo fraction of hops landing on the jammed channel."""
    rng = np.random.default_rng(rng)
    p = 1.0 / hop_channels if overlap is None else overlap
    return float(np.mean(rng.random(n_hops) < p))
