"""Spectral analysis and band-pass filtering of PPG signals.

Two filters are provided: a fixed 0.5-12.5 Hz band (the conventional one) and a
per-subject adaptive band derived from the heart-rate fundamental, re-estimated
over a sliding window so it tracks heart-rate changes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import BandOutOfRange, F1hOutOfRange, SignalTooShort
from .signals import PpgSignal

F1H_RANGE = (0.5, 3.0)
SOA_BAND = (0.5, 12.5)
MAX_BIN_SPACING_HZ = 0.05
CROSSFADE_S = 0.1


@dataclass(frozen=True)
class WindowPlan:
    window_s: float = 5.0
    stride_s: float = 1.0

    def __post_init__(self):
        if not 0 < self.stride_s <= self.window_s:
            raise ValueError("need 0 < stride_s <= window_s")


@dataclass(frozen=True)
class BandSpec:
    f_low_hz: float
    f_high_hz: float

    def check(self, sample_rate_hz: float) -> None:
        nyq = sample_rate_hz / 2.0
        if not 0 < self.f_low_hz < self.f_high_hz < nyq:
            raise BandOutOfRange(
                f"band [{self.f_low_hz:g}, {self.f_high_hz:g}] Hz invalid at Nyquist {nyq:g} Hz"
            )


@dataclass(frozen=True)
class HarmonicEstimate:
    f1h_hz: float
    window_start_s: float
    freqs_hz: np.ndarray
    power: np.ndarray
    window_s: float = 5.0

    @property
    def power_spectrum(self) -> list[tuple[float, float]]:
        return list(zip(self.freqs_hz.tolist(), self.power.tolist()))


def periodogram(x: np.ndarray, fs: float, min_spacing_hz: float = MAX_BIN_SPACING_HZ):
    """Hann-tapered, zero-mean, zero-padded power spectrum."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    nfft = 1 << int(np.ceil(np.log2(max(x.size, fs / min_spacing_hz))))
    spec = np.fft.rfft(x * np.hanning(x.size), nfft)
    return np.fft.rfftfreq(nfft, 1.0 / fs), np.abs(spec) ** 2


def _window_starts(n: int, fs: float, window: WindowPlan) -> tuple[list[int], int]:
    n_win = int(round(window.window_s * fs))
    n_stride = max(1, int(round(window.stride_s * fs)))
    if n < n_win:
        raise SignalTooShort(f"signal has {n} samples, window needs {n_win}")
    starts = list(range(0, n - n_win + 1, n_stride))
    return starts, n_win


def estimate_f1h(sig: PpgSignal, window: WindowPlan = WindowPlan()) -> list[HarmonicEstimate]:
    """Heart-rate fundamental per sliding window, searched within 0.5-3 Hz."""
    fs = sig.sample_rate_hz
    starts, n_win = _window_starts(len(sig), fs, window)
    out = []
    for s in starts:
        freqs, power = periodogram(sig.samples[s:s + n_win], fs)
        band = np.flatnonzero((freqs >= F1H_RANGE[0]) & (freqs <= F1H_RANGE[1]))
        k = band[np.argmax(power[band])]
        f = freqs[k]
        # parabolic refinement on log power, kept inside the search band
        if band[0] < k < band[-1]:
            a, b, c = np.log(power[k - 1:k + 2] + 1e-300)
            denom = a - 2 * b + c
            if denom < 0:
                f += 0.5 * (a - c) / denom * (freqs[1] - freqs[0])
        f = float(np.clip(f, *F1H_RANGE))
        out.append(HarmonicEstimate(f, s / fs, freqs, power, n_win / fs))
    return out


def butterworth_sos(band: BandSpec, sample_rate_hz: float, order: int = 2) -> np.ndarray:
    """Digital band-pass sections (bilinear transform with pre-warped edges)."""
    band.check(sample_rate_hz)
    return sps.butter(order, [band.f_low_hz, band.f_high_hz], btype="bandpass", fs=sample_rate_hz, output="sos")


def _bandpass(x: np.ndarray, band: BandSpec, fs: float, order: int) -> np.ndarray:
    return sps.sosfiltfilt(butterworth_sos(band, fs, order), x)


def butterworth_bandpass(sig: PpgSignal, band: BandSpec, order: int = 2) -> PpgSignal:
    """Zero-phase (forward-backward) Butterworth band-pass."""
    return sig.with_samples(_bandpass(sig.samples, band, sig.sample_rate_hz, order))


def soa_filter(sig: PpgSignal, order: int = 2) -> PpgSignal:
    """Conventional fixed 0.5-12.5 Hz band-pass, i.e. f(t)."""
    return butterworth_bandpass(sig, BandSpec(*SOA_BAND), order)


def adaptive_band(f1h_hz: float, fl_multiplier: float = 2.0, fh_multiplier: float = 5.5) -> BandSpec:
    """Band that drops the first harmonic and keeps harmonics 2 through 5."""
    if not F1H_RANGE[0] - 1e-9 <= f1h_hz <= F1H_RANGE[1] + 1e-9:
        raise F1hOutOfRange(f"f1h={f1h_hz} Hz outside {F1H_RANGE}")
    return BandSpec(fl_multiplier * f1h_hz, fh_multiplier * f1h_hz)


def harmonic_filter(
    sig: PpgSignal,
    window: WindowPlan = WindowPlan(),
    estimates: list[HarmonicEstimate] | None = None,
    fl_multiplier: float = 2.0,
    fh_multiplier: float = 5.5,
    order: int = 2,
) -> PpgSignal:
    """Adaptive band-pass h(t).

    Every window is filtered with its own band; each output sample is taken from
    the window whose centre is nearest, with a short cross-fade between
    neighbouring windows. A final window flush with the end of the signal covers
    the tail left over by the stride.
    """
    fs = sig.sample_rate_hz
    x = sig.samples
    n = x.size
    starts, n_win = _window_starts(n, fs, window)
    if estimates is None:
        estimates = estimate_f1h(sig, window)
    f1h = [e.f1h_hz for e in estimates]
    if len(f1h) != len(starts):
        raise ValueError("estimates do not match the window plan")
    if starts[-1] + n_win < n:
        # tail window reuses the last estimate
        starts.append(n - n_win)
        f1h.append(f1h[-1])

    centers = np.asarray(starts) + n_win / 2.0
    owner = np.searchsorted((centers[1:] + centers[:-1]) / 2.0, np.arange(n))
    fade = max(1, int(round(CROSSFADE_S * fs)))
    box = np.ones(fade) / fade

    out = np.zeros(n)
    total = np.zeros(n)
    for j, (s, f) in enumerate(zip(starts, f1h)):
        seg = slice(s, s + n_win)
        mask = (owner[seg] == j).astype(float)
        if not mask.any():
            continue
        w = np.convolve(mask, box, mode="same")
        y = _bandpass(x[seg], adaptive_band(f, fl_multiplier, fh_multiplier), fs, order)
        out[seg] += w * y
        total[seg] += w
    return sig.with_samples(out / total)


def second_derivative(sig: PpgSignal) -> PpgSignal:
    """Central second difference scaled to units per second squared."""
    x = sig.samples
    if x.size < 5:
        raise SignalTooShort("second derivative needs at least 5 samples")
    y = np.empty_like(x)
    y[1:-1] = (x[2:] - 2 * x[1:-1] + x[:-2]) * sig.sample_rate_hz ** 2
    y[0], y[-1] = y[1], y[-2]
    return sig.with_samples(y)
