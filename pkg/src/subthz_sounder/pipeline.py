"""Raw IQ snapshot stacks to calibrated channel impulse responses.

Chain per angle bin: resample to the reference rate, band-limit, estimate
and remove the common phase drift, average coherently, then correlate with
the back-to-back reference. Every snapshot record holds exactly one period
of the periodic sounding sequence, so all filtering is circular and done in
the frequency domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .sounder import RawCapture
from .waveform import ReferenceRecord

__all__ = [
    "CalibratedCir",
    "PhaseEstimationError",
    "resample",
    "bandlimit",
    "estimate_phase_drift",
    "compensate_and_average",
    "correlate_calibrate",
    "drift_gate",
    "process_capture",
    "DEFAULT_WINDOW",
]

DEFAULT_WINDOW = "nuttall"


class PhaseEstimationError(ValueError):
    pass


@dataclass
class CalibratedCir:
    """Complex CIR on a uniform delay grid, in units of channel gain.

    0 dB equals the transmitted reference power; antenna gains are included.
    """

    angle_bin: int
    delay_axis: np.ndarray
    amplitude: np.ndarray
    delay_resolution: float
    pointing_azimuth: float = 0.0

    def __post_init__(self):
        if len(self.delay_axis) != len(self.amplitude):
            raise ValueError("delay_axis and amplitude lengths differ")
        if len(self.delay_axis) > 1:
            steps = np.diff(self.delay_axis)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
                raise ValueError("delay_axis must be strictly increasing and uniform")

    @property
    def sample_period(self) -> float:
        return float(self.delay_axis[1] - self.delay_axis[0])

    @property
    def samples_per_bin(self) -> float:
        return self.delay_resolution / self.sample_period

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    @property
    def power_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.power)


def resample(samples, in_rate: float, out_rate: float) -> np.ndarray:
    """Band-limited rate conversion of periodic records along the last axis."""
    if not in_rate > 0 or not out_rate > 0:
        raise ValueError("sample rates must be positive")
    samples = np.asarray(samples, dtype=complex)
    if in_rate == out_rate:
        return samples.copy()
    n_in = samples.shape[-1]
    n_out = n_in * out_rate / in_rate
    if abs(n_out - round(n_out)) < 1e-9:
        return signal.resample(samples, int(round(n_out)), axis=-1)
    # record length not commensurate with the new rate: polyphase fallback
    from fractions import Fraction
    ratio = Fraction(out_rate / in_rate).limit_denominator(10000)
    return signal.resample_poly(samples, ratio.numerator, ratio.denominator, axis=-1)


def bandlimit(samples, sample_rate: float, bandwidth: float) -> np.ndarray:
    """Ideal (brick-wall) low-pass keeping ``|f| <= bandwidth / 2``."""
    if bandwidth > sample_rate:
        raise ValueError("bandwidth must not exceed the sample rate")
    samples = np.asarray(samples, dtype=complex)
    freqs = np.fft.fftfreq(samples.shape[-1], d=1.0 / sample_rate)
    keep = np.abs(freqs) <= bandwidth / 2 * (1 + 1e-12)
    return np.fft.ifft(np.fft.fft(samples, axis=-1) * keep, axis=-1)


def estimate_phase_drift(snapshots) -> np.ndarray:
    """Phase of each snapshot relative to the first, unwrapped along snapshots."""
    snapshots = np.asarray(snapshots)
    if snapshots.ndim != 2 or snapshots.shape[0] < 2:
        raise ValueError("need a (n_snapshots >= 2, n_samples) matrix")
    energy = np.einsum("ij,ij->i", snapshots, snapshots.conj()).real
    if np.any(energy == 0):
        raise PhaseEstimationError(
            f"snapshot(s) {np.flatnonzero(energy == 0).tolist()} are all zero")
    inner = snapshots @ snapshots[0].conj()
    phases = np.unwrap(np.angle(inner))
    return phases - phases[0]


def compensate_and_average(snapshots, phases) -> np.ndarray:
    snapshots = np.asarray(snapshots)
    phases = np.asarray(phases, dtype=float)
    if len(phases) != snapshots.shape[0]:
        raise ValueError("one phase per snapshot required")
    return np.exp(-1j * phases) @ snapshots / len(phases)


def _spectral_weights(reference: ReferenceRecord, bandwidth: float, window: str | None):
    n = len(reference.samples)
    freqs = np.fft.fftfreq(n, d=1.0 / reference.sample_rate)
    inband = np.abs(freqs) <= bandwidth / 2 * (1 + 1e-12)
    weights = inband.astype(float)
    if window not in (None, "none", "boxcar", "rect"):
        order = np.argsort(freqs[inband])
        taper = signal.get_window(window, int(inband.sum()), fftbins=False)
        shaped = np.empty_like(taper)
        shaped[order] = taper
        weights[inband] = shaped
    return weights


def correlate_calibrate(averaged, reference: ReferenceRecord, bandwidth: float,
                        sample_rate: float | None = None, window: str | None = DEFAULT_WINDOW,
                        angle_bin: int = 0, pointing_azimuth: float = 0.0) -> CalibratedCir:
    """Circular cross-correlation with the back-to-back record.

    The output is scaled so that a channel tap of complex gain ``g`` (the
    capture having passed the same TX/RX chain as the reference) gives a CIR
    peak of ``g`` at its absolute delay. ``window`` tapers the in-band
    spectrum to push down range sidelobes; its weights are normalised to
    unit coherent gain, so a peak keeps its amplitude while the noise floor
    rises by the window's equivalent noise bandwidth.
    """
    averaged = np.asarray(averaged, dtype=complex)
    if sample_rate is not None and not math.isclose(sample_rate, reference.sample_rate,
                                                    rel_tol=1e-12):
        raise ValueError(
            f"sample rate {sample_rate} differs from reference rate {reference.sample_rate}")
    if averaged.shape[-1] != len(reference.samples):
        raise ValueError("averaged record and reference differ in length")
    ref_spec = np.fft.fft(reference.samples)
    ref_psd = np.abs(ref_spec) ** 2
    weights = _spectral_weights(reference, bandwidth, window)
    coherent_gain = np.sum(ref_psd * weights) / np.sum(ref_psd)
    spectrum = np.fft.fft(averaged) * ref_spec.conj() * (weights / coherent_gain)
    cir = np.fft.ifft(spectrum) / reference.energy
    n = len(cir)
    return CalibratedCir(angle_bin=angle_bin,
                         delay_axis=np.arange(n) / reference.sample_rate,
                         amplitude=cir,
                         delay_resolution=1.0 / bandwidth,
                         pointing_azimuth=pointing_azimuth)


def drift_gate(corr_snapshots: np.ndarray, gate_db: float = 10.0) -> np.ndarray:
    """Delay taps whose incoherent mean power clears the median by ``gate_db``."""
    mean_power = np.mean(np.abs(corr_snapshots) ** 2, axis=0)
    level = np.median(mean_power)
    return np.flatnonzero(mean_power > level * 10.0 ** (gate_db / 10.0))


def process_capture(capture: RawCapture, reference: ReferenceRecord, bandwidth: float,
                    window: str | None = DEFAULT_WINDOW, compensate_drift: bool = True,
                    gate_db: float = 10.0) -> CalibratedCir:
    """Run the full calibration chain for one angle bin.

    The drift is estimated on the correlated snapshots restricted to the
    signal-bearing delay taps, which keeps the estimate usable at the low
    per-sample SNR of a single raw snapshot. Averaging and calibration then
    act on the raw snapshots; both steps are linear so the order is
    immaterial for the result.
    """
    x = resample(capture.snapshots, capture.sample_rate, reference.sample_rate)
    fs = reference.sample_rate
    # band-limiting and correlation share one forward FFT of the snapshot stack
    freqs = np.fft.fftfreq(x.shape[-1], d=1.0 / fs)
    if bandwidth > fs:
        raise ValueError("bandwidth must not exceed the sample rate")
    spectra = np.fft.fft(x, axis=-1) * (np.abs(freqs) <= bandwidth / 2 * (1 + 1e-12))
    phases = np.zeros(x.shape[0])
    if compensate_drift and x.shape[0] >= 2:
        corr = np.fft.ifft(spectra * np.fft.fft(reference.samples).conj(), axis=-1)
        taps = drift_gate(corr, gate_db)
        if taps.size:
            phases = estimate_phase_drift(corr[:, taps])
    averaged = np.fft.ifft(compensate_and_average(spectra, phases))
    return correlate_calibrate(averaged, reference, bandwidth, fs, window,
                               capture.angle_bin, capture.pointing_azimuth)
