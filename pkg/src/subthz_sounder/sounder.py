"""Rotating directional receiver: antenna weighting, drift, noise, raw IQ.

Random streams are counter-based: angle bin ``a`` of a run with seed ``s``
draws from ``Philox(key=s, counter=[0, 0, a, band_tag])`` where
``band_tag = round(carrier_GHz)``. Each bin therefore owns a disjoint part of
the counter space and simulating bins in any order, or in parallel, gives
bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.constants import Boltzmann

from .scene import PropagationPath

__all__ = [
    "AntennaPattern",
    "SounderConfig",
    "RawCapture",
    "kraus_hpbw",
    "antenna_gain_at",
    "effective_cir",
    "bin_generator",
    "simulate_angle",
    "simulate_capture",
    "db_to_lin",
    "dbm_to_watt",
]

TWO_PI = 2.0 * math.pi


def db_to_lin(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watt(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def kraus_hpbw(gain_dbi: float) -> float:
    """HPBW in radians of a symmetric pencil beam, ``G ~ 41253 / theta_deg^2``."""
    return math.radians(math.sqrt(41253.0 / db_to_lin(gain_dbi)))


@dataclass(frozen=True)
class AntennaPattern:
    boresight_gain: float = 20.0  # dBi
    hpbw: float | None = None  # radians; None -> Kraus estimate from the gain
    sidelobe_floor: float = -30.0  # dB relative to boresight

    def __post_init__(self):
        if self.hpbw is None:
            object.__setattr__(self, "hpbw", kraus_hpbw(self.boresight_gain))
        if not self.hpbw > 0:
            raise ValueError("hpbw must be positive")
        if self.sidelobe_floor > 0:
            raise ValueError("sidelobe_floor is relative to boresight and must be <= 0 dB")


def antenna_gain_at(pattern: AntennaPattern, offset) -> np.ndarray | float:
    """Linear power gain at an azimuth offset from boresight.

    Gaussian main lobe ``G0 exp(-4 ln2 (theta / hpbw)^2)`` clamped from below
    at the sidelobe floor.
    """
    theta = np.angle(np.exp(1j * np.asarray(offset, dtype=float)))
    g0 = db_to_lin(pattern.boresight_gain)
    gain = g0 * np.exp(-4.0 * math.log(2.0) * (theta / pattern.hpbw) ** 2)
    gain = np.maximum(gain, g0 * db_to_lin(pattern.sidelobe_floor))
    return float(gain) if gain.ndim == 0 else gain


@dataclass(frozen=True)
class SounderConfig:
    carrier_frequency: float = 158e9
    bandwidth: float = 200e6
    sequence_duration: float = 12.5e-6
    n_angle_bins: int = 24
    angle_step: float = TWO_PI / 24
    n_snapshots: int = 150
    tx_power: float = 10.0  # dBm
    tx_antenna_gain: float = 8.0  # dBi
    rx_antenna: AntennaPattern = field(default_factory=AntennaPattern)
    rx_noise_figure: float = 22.7  # dB
    phase_drift_std_per_snapshot: float = 0.05  # rad
    rng_seed: int = 0
    oversampling: int = 2
    zc_root: int = 1
    chain_gain_db: float = 0.0
    chain_delay: float = 0.0
    temperature: float = 290.0
    add_noise: bool = True

    def __post_init__(self):
        for name in ("carrier_frequency", "bandwidth", "sequence_duration", "temperature"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_snapshots < 1:
            raise ValueError("n_snapshots must be >= 1")
        if self.n_angle_bins < 1:
            raise ValueError("n_angle_bins must be >= 1")
        if abs(self.n_angle_bins * self.angle_step - TWO_PI) > 1e-9:
            raise ValueError("n_angle_bins * angle_step must cover exactly 2 pi")
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")
        if self.phase_drift_std_per_snapshot < 0:
            raise ValueError("phase_drift_std_per_snapshot must be >= 0")
        if not 0 <= self.rng_seed < 2**63:
            raise ValueError("rng_seed must be a non-negative 63-bit integer")

    @property
    def sample_rate(self) -> float:
        return self.bandwidth * self.oversampling

    @property
    def pointing_azimuths(self) -> np.ndarray:
        return np.arange(self.n_angle_bins) * self.angle_step

    @property
    def chain_gain(self) -> float:
        return math.sqrt(db_to_lin(self.chain_gain_db))

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watt(self.tx_power)

    @property
    def noise_power_w(self) -> float:
        """Receiver input noise per complex sample over the full sample rate."""
        return Boltzmann * self.temperature * self.sample_rate * db_to_lin(self.rx_noise_figure)

    @property
    def band_tag(self) -> int:
        return int(round(self.carrier_frequency / 1e9))


@dataclass
class RawCapture:
    angle_bin: int
    pointing_azimuth: float
    snapshots: np.ndarray  # (n_snapshots, samples_per_snapshot), complex64
    sample_rate: float
    carrier_frequency: float = 0.0

    def __post_init__(self):
        if self.snapshots.ndim != 2:
            raise ValueError("snapshots must be a 2D array")


def effective_cir(paths: Sequence[PropagationPath], pointing: float, pattern: AntennaPattern,
                  tx_gain: float) -> list[tuple[float, complex]]:
    """Per-path (delay, amplitude) seen by the RX horn pointing at ``pointing``."""
    if not paths:
        raise ValueError("path list must not be empty")
    g_tx = math.sqrt(db_to_lin(tx_gain))
    out = []
    for p in paths:
        g_rx = math.sqrt(antenna_gain_at(pattern, p.aoa_azimuth - pointing))
        out.append((p.delay, complex(p.gain) * g_tx * g_rx))
    return out


def bin_generator(seed: int, angle_bin: int, band_tag: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, angle_bin, band_tag]))


def _channel_response(taps: Iterable[tuple[float, complex]], freqs: np.ndarray) -> np.ndarray:
    response = np.zeros(len(freqs), dtype=complex)
    for delay, amplitude in taps:
        response += amplitude * np.exp(-2j * np.pi * freqs * delay)
    return response


def simulate_angle(config: SounderConfig, paths: Sequence[PropagationPath], waveform: np.ndarray,
                   angle_bin: int) -> RawCapture:
    """Capture all snapshots for one receiver pointing direction."""
    waveform = np.asarray(waveform, dtype=complex)
    n_samples = len(waveform)
    if n_samples == 0:
        raise ValueError("waveform must not be empty")
    fs = config.sample_rate
    window = n_samples / fs
    if paths:
        longest = max(p.delay for p in paths) + config.chain_delay
        if longest >= window:
            raise ValueError(
                f"path delay {longest:.4g} s exceeds the sounding window {window:.4g} s; "
                "use a longer sequence")

    pointing = float(config.pointing_azimuths[angle_bin])
    freqs = np.fft.fftfreq(n_samples, d=1.0 / fs)
    if paths:
        taps = effective_cir(paths, pointing, config.rx_antenna, config.tx_antenna_gain)
        response = _channel_response(taps, freqs) * np.exp(-2j * np.pi * freqs * config.chain_delay)
        clean = np.fft.ifft(np.fft.fft(waveform) * response) * math.sqrt(config.tx_power_w)
    else:
        clean = np.zeros(n_samples, dtype=complex)

    rng = bin_generator(config.rng_seed, angle_bin, config.band_tag)
    n_snap = config.n_snapshots
    steps = rng.normal(0.0, config.phase_drift_std_per_snapshot, n_snap - 1)
    phases = np.concatenate([[0.0], np.cumsum(steps)])
    snapshots = clean[None, :] * np.exp(1j * phases)[:, None]
    if config.add_noise:
        sigma = math.sqrt(config.noise_power_w / 2.0)
        noise = rng.standard_normal((n_snap, n_samples, 2))
        snapshots = snapshots + sigma * (noise[..., 0] + 1j * noise[..., 1])
    snapshots = (config.chain_gain * snapshots).astype(np.complex64)
    return RawCapture(angle_bin, pointing, snapshots, fs, config.carrier_frequency)


def simulate_capture(config: SounderConfig, paths: Sequence[PropagationPath], waveform: np.ndarray,
                     angle_bins: Iterable[int] | None = None) -> list[RawCapture]:
    """Simulate one full receiver rotation (or the selected angle bins)."""
    bins = range(config.n_angle_bins) if angle_bins is None else angle_bins
    return [simulate_angle(config, paths, waveform, int(a)) for a in bins]
