"""Zadoff-Chu sounding sequences, baseband synthesis and back-to-back records."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SoundingSequence",
    "ReferenceRecord",
    "is_prime",
    "nearest_prime",
    "generate_cazac",
    "make_sequence",
    "synthesize_baseband",
    "apply_delay",
    "make_b2b_reference",
]


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % p for p in range(3, math.isqrt(n) + 1, 2))


def nearest_prime(n: int) -> int:
    """Prime closest to ``n``; ties go to the smaller one."""
    if n <= 2:
        return 2
    for step in range(n):
        if is_prime(n - step):
            return n - step
        if is_prime(n + step):
            return n + step
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class SoundingSequence:
    chips: np.ndarray
    chip_rate: float

    def __post_init__(self):
        if not self.chip_rate > 0:
            raise ValueError("chip_rate must be positive")
        if len(self.chips) == 0 or np.max(np.abs(np.abs(self.chips) - 1.0)) > 1e-9:
            raise ValueError("chips must be non-empty and of unit magnitude")

    @property
    def chip_count(self) -> int:
        return len(self.chips)

    @property
    def duration(self) -> float:
        return self.chip_count / self.chip_rate


@dataclass(frozen=True)
class ReferenceRecord:
    """Noise-free back-to-back recording of the TX waveform through the chain."""

    samples: np.ndarray
    sample_rate: float
    reference_power: float
    chain_gain: complex = 1.0
    chain_delay: float = 0.0

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def energy(self) -> float:
        return float(np.vdot(self.samples, self.samples).real)


def generate_cazac(length: int, root: int = 1) -> np.ndarray:
    """Zadoff-Chu chips ``exp(-j pi u n (n + 1) / N)`` for prime ``N``."""
    if not is_prime(length) or length < 3:
        raise ValueError(f"length must be an odd prime, got {length}")
    if not 1 <= root < length:
        raise ValueError(f"root must satisfy 1 <= root < {length}, got {root}")
    n = np.arange(length, dtype=np.int64)
    # reduce the quadratic phase modulo 2N before scaling to keep it exact
    k = (root * n * (n + 1)) % (2 * length)
    return np.exp(-1j * np.pi * k / length)


def make_sequence(bandwidth: float, duration: float, root: int = 1) -> SoundingSequence:
    """ZC sequence whose length is the prime nearest ``bandwidth * duration``."""
    length = nearest_prime(int(round(bandwidth * duration)))
    return SoundingSequence(generate_cazac(length, root), chip_rate=bandwidth)


def synthesize_baseband(seq: SoundingSequence, oversampling: int = 1) -> tuple[np.ndarray, float]:
    """Periodic band-limited interpolation of the chips.

    The chip spectrum is zero-padded, so every sample lies within
    ``+/- chip_rate / 2`` and every ``oversampling``-th sample equals a chip.
    The result has unit mean power.
    """
    oversampling = int(oversampling)
    if oversampling < 1:
        raise ValueError("oversampling must be >= 1")
    chips = np.asarray(seq.chips, dtype=complex)
    n = len(chips)
    rate = seq.chip_rate * oversampling
    if oversampling == 1:
        return chips.copy(), rate
    m = n * oversampling
    spectrum = np.fft.fft(chips)
    padded = np.zeros(m, dtype=complex)
    half = (n - 1) // 2
    padded[: half + 1] = spectrum[: half + 1]
    padded[m - half:] = spectrum[n - half:]
    if n % 2 == 0:
        # split the Nyquist bin between +/- fs/2 to keep the result symmetric
        padded[half + 1] = spectrum[half + 1] / 2
        padded[m - half - 1] = spectrum[half + 1] / 2
    return np.fft.ifft(padded) * (m / n), rate


def apply_delay(samples: np.ndarray, delay: float, sample_rate: float) -> np.ndarray:
    """Circular fractional delay by a linear phase ramp (periodic signals)."""
    samples = np.asarray(samples)
    if delay == 0:
        return samples.astype(complex, copy=True)
    freqs = np.fft.fftfreq(samples.shape[-1], d=1.0 / sample_rate)
    ramp = np.exp(-2j * np.pi * freqs * delay)
    return np.fft.ifft(np.fft.fft(samples, axis=-1) * ramp, axis=-1)


def make_b2b_reference(seq: SoundingSequence, chain_gain: complex = 1.0, chain_delay: float = 0.0,
                       oversampling: int = 1, tx_power_w: float = 1.0) -> ReferenceRecord:
    """Record the transmit waveform through an ideal single-tap chain."""
    if chain_gain == 0:
        raise ValueError("chain_gain must be non-zero")
    if tx_power_w <= 0:
        raise ValueError("tx_power_w must be positive")
    waveform, rate = synthesize_baseband(seq, oversampling)
    samples = math.sqrt(tx_power_w) * complex(chain_gain) * apply_delay(waveform, chain_delay, rate)
    power = float(np.mean(np.abs(samples) ** 2))
    return ReferenceRecord(samples, rate, power, complex(chain_gain), float(chain_delay))
