"""Evaluation products computed from the per-direction CIRs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .pipeline import CalibratedCir
from .scene import PathKind, Placement, PropagationPath, friis_gain_db
from .sounder import SounderConfig

__all__ = [
    "OmniCir",
    "PathEstimate",
    "RoseData",
    "GainReport",
    "NoiseFloorError",
    "NUMERIC_FLOOR_DB",
    "FIRST_PEAK_RANGE_DB",
    "pseudo_omni",
    "estimate_noise_floor",
    "combined_noise_floor",
    "extract_paths",
    "strongest_path_report",
    "rose_data",
    "first_peak",
    "two_ray_gain_db",
]

# a floor further than this below the CIR peak is treated as numerically zero
NUMERIC_FLOOR_DB = 120.0

# first-arrival search range below the strongest path
FIRST_PEAK_RANGE_DB = 30.0


class NoiseFloorError(ValueError):
    pass


@dataclass
class OmniCir:
    delay_axis: np.ndarray
    power: np.ndarray  # dB
    contributing_angle: np.ndarray

    def __post_init__(self):
        if len(self.power) != len(self.delay_axis):
            raise ValueError("power and delay_axis lengths differ")


@dataclass(frozen=True)
class PathEstimate:
    delay: float
    angle_bin: int
    power: float  # dB
    amplitude: complex
    delay_index: int = -1  # grid sample of the underlying local maximum


@dataclass
class RoseData:
    bin_power_normalized: np.ndarray
    path_dots: list[tuple[int, float]] = field(default_factory=list)

    def top_bins_share(self, count: int) -> float:
        return float(np.sort(self.bin_power_normalized)[::-1][:count].sum())


@dataclass(frozen=True)
class GainReport:
    measured_gain: float
    theoretical_gain: float
    delta: float
    delay: float
    angle_bin: int


def _check_axes(cirs: Sequence[CalibratedCir]) -> np.ndarray:
    if not cirs:
        raise ValueError("no CIRs given")
    axis = cirs[0].delay_axis
    for c in cirs[1:]:
        if len(c.delay_axis) != len(axis) or not np.array_equal(c.delay_axis, axis):
            raise ValueError(f"CIR of angle bin {c.angle_bin} has a different delay axis")
    return axis


def pseudo_omni(cirs: Sequence[CalibratedCir]) -> OmniCir:
    """Per-delay maximum power over all pointing directions."""
    axis = _check_axes(cirs)
    power = np.stack([c.power for c in cirs])
    best = np.argmax(power, axis=0)
    bins = np.array([c.angle_bin for c in cirs])
    with np.errstate(divide="ignore"):
        omni_db = 10.0 * np.log10(power[best, np.arange(power.shape[1])])
    return OmniCir(axis.copy(), omni_db, bins[best])


def estimate_noise_floor(cir: CalibratedCir, guard: float = 0.1, exclusion_bins: float = 10.0,
                         detect_db: float = 20.0) -> float:
    """Mean power (dB) over the trailing ``guard`` fraction of the delay window.

    Samples within ``exclusion_bins`` delay-resolution bins (circularly) of a
    detected peak are skipped; peaks are local maxima more than ``detect_db``
    above the median CIR power. Returns ``-inf`` when the floor is more than
    ``NUMERIC_FLOOR_DB`` below the CIR peak, i.e. a noise-free CIR.
    """
    if not 0.0 < guard < 1.0:
        raise ValueError("guard must lie in (0, 1)")
    power = cir.power
    n = len(power)
    peak = float(power.max()) if n else 0.0
    if peak == 0.0:
        return -math.inf

    left, right = np.roll(power, 1), np.roll(power, -1)
    level = np.median(power) * 10.0 ** (detect_db / 10.0)
    peaks = np.flatnonzero((power > left) & (power > right) & (power > level))

    start = n - max(1, int(math.ceil(guard * n)))
    region = np.arange(start, n)
    radius = exclusion_bins * cir.samples_per_bin
    keep = np.ones(region.size, dtype=bool)
    for p in peaks:
        dist = np.abs(region - p)
        dist = np.minimum(dist, n - dist)
        keep &= dist > radius
    if not keep.any():
        raise NoiseFloorError("every sample of the noise window lies next to a detected peak")
    floor = float(power[region[keep]].mean())
    if floor <= peak * 10.0 ** (-NUMERIC_FLOOR_DB / 10.0):
        return -math.inf
    return 10.0 * math.log10(floor)


def combined_noise_floor(cirs: Sequence[CalibratedCir], guard: float = 0.1) -> float:
    """Power-average of the per-direction floors (``-inf`` if all are)."""
    floors = [estimate_noise_floor(c, guard) for c in cirs]
    finite = [f for f in floors if math.isfinite(f)]
    if not finite:
        return -math.inf
    return 10.0 * math.log10(np.mean([10.0 ** (f / 10.0) for f in finite]))


def _refine(spectrum: np.ndarray, power_db: np.ndarray, index: int) -> tuple[float, complex]:
    """Sub-sample peak position (parabola on dB) and band-limited amplitude."""
    n = len(power_db)
    lo, mid, hi = power_db[(index - 1) % n], power_db[index], power_db[(index + 1) % n]
    denom = lo - 2.0 * mid + hi
    offset = 0.5 * (lo - hi) / denom if np.isfinite(denom) and denom < 0 else 0.0
    offset = float(np.clip(offset, -0.5, 0.5))
    k = np.fft.fftfreq(n) * n
    position = index + offset
    amplitude = np.sum(spectrum * np.exp(2j * np.pi * k * position / n)) / n
    return position, complex(amplitude)


def extract_paths(cirs: Sequence[CalibratedCir], noise_floor: float, margin: float = 6.0,
                  n_angle_bins: int | None = None, angular_peak: bool = True) -> list[PathEstimate]:
    """Local peak search in the angular-delay domain.

    A sample is a path candidate when its power is at least
    ``noise_floor + margin`` dB, strictly above both delay neighbours and,
    with ``angular_peak``, not below the same delay sample in the adjacent
    pointing directions (ties go to the lower bin). Within a direction,
    candidates closer than one delay-resolution bin are merged keeping the
    stronger (earlier on exact ties). Delays and amplitudes are refined off
    the grid; ``delay_index`` keeps the grid sample.
    """
    if not margin > 0:
        raise ValueError("margin must be positive")
    axis = _check_axes(cirs)
    n_bins = n_angle_bins or max(len(cirs), max(c.angle_bin for c in cirs) + 1)
    by_bin = {c.angle_bin: c for c in cirs}
    threshold = 10.0 ** ((noise_floor + margin) / 10.0) if math.isfinite(noise_floor) else 0.0
    dt = float(axis[1] - axis[0])

    out: list[PathEstimate] = []
    for cir in cirs:
        power = cir.power
        candidate = (power > np.roll(power, 1)) & (power > np.roll(power, -1)) & (power >= threshold)
        if angular_peak:
            below = by_bin.get((cir.angle_bin - 1) % n_bins)
            above = by_bin.get((cir.angle_bin + 1) % n_bins)
            if below is not None and below is not cir:
                candidate &= power > below.power
            if above is not None and above is not cir:
                candidate &= power >= above.power
        idx = np.flatnonzero(candidate)
        if idx.size == 0:
            continue

        kept: list[int] = []
        min_gap = cir.samples_per_bin
        for i in idx:
            if kept and i - kept[-1] < min_gap - 1e-9:
                if power[i] > power[kept[-1]] + 1e-12 * power[kept[-1]]:
                    kept[-1] = i
                continue
            kept.append(int(i))

        spectrum = np.fft.fft(cir.amplitude)
        with np.errstate(divide="ignore"):
            power_db = 10.0 * np.log10(power)
        for i in kept:
            position, amplitude = _refine(spectrum, power_db, i)
            out.append(PathEstimate(
                delay=float(axis[0] + position * dt),
                angle_bin=cir.angle_bin,
                power=10.0 * math.log10(abs(amplitude) ** 2),
                amplitude=amplitude,
                delay_index=i,
            ))
    out.sort(key=lambda e: (-e.power, e.delay))
    return out


def strongest_path_report(estimates: Sequence[PathEstimate], placement: Placement,
                          config: SounderConfig) -> GainReport:
    """Compare the strongest extracted path with free space plus antenna gains."""
    if not estimates:
        raise ValueError("no path estimates")
    best = max(estimates, key=lambda e: e.power)
    theory = (friis_gain_db(placement.distance, config.carrier_frequency)
              + config.tx_antenna_gain + config.rx_antenna.boresight_gain)
    return GainReport(best.power, theory, best.power - theory, best.delay, best.angle_bin)


def rose_data(estimates: Sequence[PathEstimate], n_angle_bins: int = 24) -> RoseData:
    """Per-bin path power normalised by the total power of all paths."""
    if not estimates:
        raise ValueError("no path estimates")
    linear = np.array([abs(e.amplitude) ** 2 for e in estimates])
    total = linear.sum()
    bins = np.zeros(n_angle_bins)
    dots = []
    for e, p in zip(estimates, linear):
        share = p / total
        bins[e.angle_bin] += share
        dots.append((e.angle_bin, float(share)))
    return RoseData(bins, dots)


def first_peak(estimates: Sequence[PathEstimate], within_db: float | None = None) -> PathEstimate:
    """Earliest path, optionally only among those within ``within_db`` of the strongest.

    The range limit keeps isolated noise peaks that pass a low extraction
    margin from being reported as the first arrival.
    """
    if not estimates:
        raise ValueError("no path estimates")
    pool = estimates
    if within_db is not None:
        top = max(e.power for e in estimates)
        pool = [e for e in estimates if e.power >= top - within_db]
    return min(pool, key=lambda e: (e.delay, -e.power))


def two_ray_gain_db(paths: Sequence[PropagationPath], tx_gain: float = 0.0,
                    rx_gain: float = 0.0) -> float:
    """Power of the coherent LOS + ground-bounce sum, with boresight gains."""
    total = sum(p.gain for p in paths if p.kind in (PathKind.LOS, PathKind.GROUND))
    return 20.0 * math.log10(abs(total)) + tx_gain + rx_gain
