"""Cardiac period segmentation, extrema counting, morphology labels and
cross-track-error (CTE) signal variance."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import find_peaks

from .errors import NoPeriodsFound, TooFewPeriods
from .filtering import HarmonicEstimate
from .signals import PpgSignal

PERIOD_LEN = 100
DURATION_BOUNDS_S = (1.0 / 3.0, 2.0)
PERIOD_TOLERANCE = 0.25
PROMINENCE_FRAC = 0.05


class Morphology(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"
    DISCARD = "Discard"

    @property
    def accepted(self) -> bool:
        return self is not Morphology.DISCARD


# (peaks, valleys) -> class
_MORPHOLOGY_COUNTS = {(3, 4): Morphology.M1, (4, 5): Morphology.M2, (5, 6): Morphology.M3}
ACCEPTED_MORPHOLOGIES = (Morphology.M1, Morphology.M2, Morphology.M3)


@dataclass(frozen=True)
class CardiacPeriod:
    """One beat of h(t) and h''(t), resampled to a fixed length and min-max normalised.

    ``h_ptp`` / ``h2_ptp`` keep the peak-to-peak amplitude before normalisation.
    """

    h_samples: np.ndarray
    h2_samples: np.ndarray
    duration_s: float
    raw_start_idx: int
    raw_end_idx: int
    subject_id: str | None = None
    h_ptp: float = 1.0
    h2_ptp: float = 1.0

    def samples(self, which: str) -> np.ndarray:
        return self.h_samples if which == "h" else self.h2_samples

    def ptp(self, which: str) -> float:
        return self.h_ptp if which == "h" else self.h2_ptp


@dataclass(frozen=True)
class Extrema:
    peaks: list[tuple[int, float]]
    valleys: list[tuple[int, float]]

    def merged(self) -> list[tuple[int, float, str]]:
        """All extrema ordered by index, tagged ``"P"`` or ``"V"``."""
        out = [(i, v, "P") for i, v in self.peaks] + [(i, v, "V") for i, v in self.valleys]
        return sorted(out)


@dataclass(frozen=True)
class CteReport:
    per_period_cte: np.ndarray
    signal_variance: float
    mean_period: np.ndarray = field(repr=False)


def _resample(seg: np.ndarray, n: int) -> np.ndarray:
    t = np.arange(seg.size, dtype=float)
    return CubicSpline(t, seg)(np.linspace(0.0, seg.size - 1, n))


def _minmax(x: np.ndarray) -> tuple[np.ndarray, float]:
    lo, hi = x.min(), x.max()
    span = hi - lo
    if not span > 1e-12 * max(1.0, abs(hi), abs(lo)):
        return None, 0.0
    return (x - lo) / span, float(span)


def make_period(
    h_seg: np.ndarray,
    h2_seg: np.ndarray,
    sample_rate_hz: float,
    start: int = 0,
    subject_id: str | None = None,
    period_len: int = PERIOD_LEN,
) -> CardiacPeriod | None:
    """Normalise one raw beat (boundary samples included). None for flat beats."""
    h_seg = np.asarray(h_seg, dtype=float)
    h2_seg = np.asarray(h2_seg, dtype=float)
    if h_seg.size < 4 or h_seg.size != h2_seg.size:
        return None
    h_norm, h_ptp = _minmax(_resample(h_seg, period_len))
    h2_norm, h2_ptp = _minmax(_resample(h2_seg, period_len))
    if h_norm is None or h2_norm is None:
        return None
    h_norm.setflags(write=False)
    h2_norm.setflags(write=False)
    return CardiacPeriod(
        h_samples=h_norm,
        h2_samples=h2_norm,
        duration_s=(h_seg.size - 1) / sample_rate_hz,
        raw_start_idx=int(start),
        raw_end_idx=int(start + h_seg.size - 1),
        subject_id=subject_id,
        h_ptp=h_ptp,
        h2_ptp=h2_ptp,
    )


def _local_minima(x: np.ndarray) -> np.ndarray:
    idx, _ = find_peaks(-x)
    return idx


def segment_periods(
    h: PpgSignal,
    h2: PpgSignal,
    f1h_per_window: list[HarmonicEstimate],
    period_len: int = PERIOD_LEN,
    duration_bounds_s: tuple[float, float] = DURATION_BOUNDS_S,
    tolerance: float = PERIOD_TOLERANCE,
) -> list[CardiacPeriod]:
    """Cut h(t) valley to valley, steering each cut by the local heart rate.

    The next boundary is the deepest valley within ``1 +/- tolerance`` expected
    periods of the previous one. When no valley falls inside that range the
    tracker re-anchors on the next valley without emitting a period.
    """
    if len(h) != len(h2) or h.sample_rate_hz != h2.sample_rate_hz:
        raise ValueError("h and h2 must share length and sample rate")
    if not f1h_per_window:
        raise ValueError("need at least one harmonic estimate")
    fs = h.sample_rate_hz
    x = h.samples
    n = x.size
    if not np.ptp(x) > 1e-12 * max(1.0, np.abs(x).max()):
        raise NoPeriodsFound("signal is flat")

    centers = np.array([e.window_start_s + e.window_s / 2.0 for e in f1h_per_window]) * fs
    rates = np.array([e.f1h_hz for e in f1h_per_window])

    def expected(i: int) -> float:
        return fs / rates[np.argmin(np.abs(centers - i))]

    minima = _local_minima(x)
    if minima.size == 0:
        raise NoPeriodsFound("no valleys in signal")

    def deepest(lo: float, hi: float) -> int | None:
        cand = minima[(minima >= lo) & (minima <= hi)]
        return int(cand[np.argmin(x[cand])]) if cand.size else None

    prev = deepest(0, expected(0))
    if prev is None:
        prev = int(minima[0])
    periods = []
    lo_dur, hi_dur = duration_bounds_s
    while True:
        T = expected(prev)
        lo, hi = prev + (1 - tolerance) * T, prev + (1 + tolerance) * T
        if lo >= n - 1:
            break
        nxt = deepest(lo, hi)
        if nxt is None:
            later = minima[minima > hi]
            if later.size == 0:
                break
            prev = deepest(later[0], later[0] + T) or int(later[0])
            continue
        dur = (nxt - prev) / fs
        if lo_dur <= dur <= hi_dur:
            p = make_period(x[prev:nxt + 1], h2.samples[prev:nxt + 1], fs, prev, h.subject_id, period_len)
            if p is not None:
                periods.append(p)
        prev = nxt
    if not periods:
        raise NoPeriodsFound("no valid cardiac periods found")
    return periods


def detect_extrema(samples, prominence_frac: float = PROMINENCE_FRAC) -> Extrema:
    """Peaks and valleys of one normalised period.

    Interior extrema must have a topographic prominence of at least
    ``prominence_frac`` of the segment's range. The two boundary samples are
    valleys. Adjacent extrema of the same type are merged, keeping the more
    extreme one, so the result alternates V, P, V, ..., V.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 5:
        raise ValueError("need at least 5 samples")
    span = np.ptp(x)
    if span == 0:
        return Extrema(peaks=[], valleys=[(0, float(x[0])), (x.size - 1, float(x[-1]))])
    thr = prominence_frac * span
    pk, _ = find_peaks(x, prominence=thr)
    vl, _ = find_peaks(-x, prominence=thr)
    events = sorted(
        [(0, "V")] + [(int(i), "P") for i in pk] + [(int(i), "V") for i in vl] + [(x.size - 1, "V")]
    )
    chain: list[tuple[int, str]] = []
    for i, kind in events:
        if chain and chain[-1][1] == kind:
            j = chain[-1][0]
            keep_new = x[i] > x[j] if kind == "P" else x[i] < x[j]
            if keep_new:
                chain[-1] = (i, kind)
            continue
        chain.append((i, kind))
    return Extrema(
        peaks=[(i, float(x[i])) for i, k in chain if k == "P"],
        valleys=[(i, float(x[i])) for i, k in chain if k == "V"],
    )


def classify_morphology(ext: Extrema) -> Morphology:
    return _MORPHOLOGY_COUNTS.get((len(ext.peaks), len(ext.valleys)), Morphology.DISCARD)


def point_polyline_distance(points: np.ndarray, line: np.ndarray) -> np.ndarray:
    """Shortest distance from each 2-D point to a polyline given by its vertices."""
    a = line[:-1]
    ab = line[1:] - a
    ap = points[:, None, :] - a[None, :, :]
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom > 0, denom, 1.0)
    t = np.clip(np.einsum("pij,ij->pi", ap, ab) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.sqrt(((points[:, None, :] - closest) ** 2).sum(-1)).min(axis=1)


def cross_track_errors(curves: np.ndarray, amplitude_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-curve mean perpendicular distance to the pointwise mean curve.

    Curves are equal-length rows; the time axis runs over ``index / L`` and the
    amplitude axis is multiplied by ``amplitude_scale``.
    """
    curves = np.asarray(curves, dtype=float)
    if curves.ndim != 2 or curves.shape[0] < 2:
        raise TooFewPeriods("need at least two periods")
    L = curves.shape[1]
    tt = np.arange(L) / L
    # offset form keeps the mean bit-exact when all curves are identical
    mean = curves[0] + (curves - curves[0]).mean(axis=0)
    line = np.column_stack([tt, mean * amplitude_scale])
    errs = np.array([
        # the vertex at the same index bounds the distance and is exact when the curves coincide
        np.minimum(
            point_polyline_distance(np.column_stack([tt, c * amplitude_scale]), line),
            np.abs(c - mean) * amplitude_scale,
        ).mean()
        for c in curves
    ])
    return errs, mean


def cte_variance(periods: list[CardiacPeriod], which: str = "h", amplitude_scale: float | None = None) -> CteReport:
    """Signal variance as the mean absolute CTE of the periods to their average.

    By default the normalised amplitude is scaled back by the mean raw
    peak-to-peak of the chosen signal so values carry signal units.
    """
    if which not in ("h", "h2"):
        raise ValueError("which must be 'h' or 'h2'")
    if len(periods) < 2:
        raise TooFewPeriods(f"need at least two periods, got {len(periods)}")
    if amplitude_scale is None:
        amplitude_scale = float(np.mean([p.ptp(which) for p in periods]))
    errs, mean = cross_track_errors(np.stack([p.samples(which) for p in periods]), amplitude_scale)
    return CteReport(per_period_cte=errs, signal_variance=float(np.mean(np.abs(errs))), mean_period=mean)
