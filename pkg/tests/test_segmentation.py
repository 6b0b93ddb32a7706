import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy.signal import argrelextrema

from oracles import polyline_distance_dense

from cardioid.errors import NoPeriodsFound, TooFewPeriods
from cardioid.filtering import HarmonicEstimate, estimate_f1h, harmonic_filter, second_derivative
from cardioid.segmentation import (
    CardiacPeriod,
    Extrema,
    Morphology,
    classify_morphology,
    cross_track_errors,
    cte_variance,
    detect_extrema,
    make_period,
    point_polyline_distance,
    segment_periods,
)
from cardioid.signals import PpgSignal
from cardioid.synthetic import SyntheticSpec, generate_synthetic

FS = 100.0
PULSE = [(0.2, 1.0, 0.08), (0.5, 0.5, 0.1)]


def segment(sig):
    est = estimate_f1h(sig)
    h = harmonic_filter(sig, estimates=est)
    return segment_periods(h, second_derivative(h), est)


def test_noiseless_1hz_periods():
    sig = generate_synthetic(SyntheticSpec(1, [(1.0, 0.0)], [PULSE], duration_s=10.0, seed=0))[0]
    periods = segment(sig)
    assert len(periods) in (9, 10)
    assert all(abs(p.duration_s - 1.0) <= 0.02 for p in periods)
    for p in periods:
        assert p.h_samples.size == p.h2_samples.size == 100
        assert p.h_samples.min() == 0 and p.h_samples.max() == 1
        assert p.h2_samples.min() == 0 and p.h2_samples.max() == 1
    # boundaries are ordered and do not overlap
    for a, b in zip(periods[:-1], periods[1:]):
        assert a.raw_start_idx < a.raw_end_idx <= b.raw_start_idx


def test_constant_signal():
    s = PpgSignal(np.zeros(1000), FS)
    est = [HarmonicEstimate(1.0, 0.0, np.zeros(1), np.zeros(1))]
    with pytest.raises(NoPeriodsFound):
        segment_periods(s, s, est)


def test_two_heart_rate_regimes():
    # oracle: durations follow directly from the construction
    t = np.arange(int(40 * FS)) / FS
    phase = np.where(t < 20, t, 20 + 1.5 * (t - 20))
    x = np.sin(2 * np.pi * phase - np.pi / 2) + 0.4 * np.sin(4 * np.pi * phase)
    periods = segment(PpgSignal(x, FS))
    d = np.array([p.duration_s for p in periods])
    slow, fast = d[d > 0.83], d[d <= 0.83]
    assert len(slow) >= 12 and len(fast) >= 20
    assert np.median(slow) == pytest.approx(1.0, abs=0.02)
    assert np.median(fast) == pytest.approx(2 / 3, abs=0.02)


def test_duration_bounds_drop_periods():
    sig = generate_synthetic(SyntheticSpec(1, [(1.0, 0.0)], [PULSE], duration_s=10.0, seed=0))[0]
    est = estimate_f1h(sig)
    h = harmonic_filter(sig, estimates=est)
    with pytest.raises(NoPeriodsFound):
        segment_periods(h, second_derivative(h), est, duration_bounds_s=(1.2, 2.0))


def test_make_period_flat_is_none():
    assert make_period(np.ones(50), np.arange(50.0), FS) is None


# ---------------------------------------------------------------- extrema


def test_sine_period_extrema():
    x = -np.cos(np.linspace(0, 2 * np.pi, 100))
    e = detect_extrema(x)
    assert len(e.peaks) == 1 and len(e.valleys) == 2


def test_constant_extrema():
    e = detect_extrema(np.ones(100))
    assert e.peaks == [] and len(e.valleys) == 2


def test_four_interior_maxima():
    t = np.linspace(0, 1, 100)
    x = -np.cos(2 * np.pi * 4 * t) + 0.3 * np.sin(2 * np.pi * t)
    e = detect_extrema(x, 0.01)
    # oracle: exhaustive strict-extrema scan of this clean curve
    assert len(e.peaks) == len(argrelextrema(x, np.greater)[0]) == 4
    assert len(e.valleys) == 5


def test_small_wiggles_ignored():
    t = np.linspace(0, 1, 100)
    x = -np.cos(2 * np.pi * t) + 0.001 * np.sin(2 * np.pi * 20 * t)
    e = detect_extrema(x, 0.05)
    assert len(e.peaks) == 1


def test_too_short():
    with pytest.raises(ValueError):
        detect_extrema([0, 1, 0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=5, max_size=120), st.floats(0.0, 0.3))
def test_extrema_interleave(values, prom):
    # a constant period is the one case with two valleys and no peak
    assume(np.ptp(values) > 0)
    e = detect_extrema(np.array(values), prom)
    merged = e.merged()
    kinds = [k for _, _, k in merged]
    assert kinds[0] == "V" and kinds[-1] == "V"
    assert all(a != b for a, b in zip(kinds[:-1], kinds[1:]))
    assert len(e.valleys) - len(e.peaks) == 1
    assert [i for i, _, _ in merged] == sorted(i for i, _, _ in merged)


@pytest.mark.parametrize(
    "peaks,morph",
    [(3, Morphology.M1), (4, Morphology.M2), (5, Morphology.M3), (2, Morphology.DISCARD), (6, Morphology.DISCARD)],
)
def test_classify(peaks, morph):
    ext = Extrema([(i, 1.0) for i in range(peaks)], [(i, 0.0) for i in range(peaks + 1)])
    assert classify_morphology(ext) is morph


@given(st.integers(0, 8), st.integers(0, 9))
def test_classify_total(p, v):
    ext = Extrema([(i, 1.0) for i in range(p)], [(i, 0.0) for i in range(v)])
    assert classify_morphology(ext) in set(Morphology)


# ---------------------------------------------------------------- CTE


def _period(h, ptp=1.0):
    h = np.asarray(h, dtype=float)
    return CardiacPeriod(h, h, 1.0, 0, 99, None, ptp, ptp)


def test_identical_periods_zero_cte():
    h = (1 - np.cos(np.linspace(0, 2 * np.pi, 100))) / 2
    rep = cte_variance([_period(h)] * 5)
    assert rep.signal_variance == 0.0
    assert np.allclose(rep.mean_period, h)


def test_offset_periods_give_delta():
    # flat-topped template so the perpendicular distance equals the offset
    base = np.full(100, 0.5)
    delta = 0.2
    errs, _ = cross_track_errors(np.stack([base + delta, base - delta]), amplitude_scale=1.0)
    assert np.mean(np.abs(errs)) == pytest.approx(delta, rel=0.05)


def test_offset_on_sloped_template():
    # oracle: dense polyline sampling
    tt = np.arange(100) / 100
    base = 0.2 * np.sin(2 * np.pi * tt)
    curves = np.stack([base + 0.05, base - 0.05])
    errs, mean = cross_track_errors(curves, 1.0)
    line = np.column_stack([tt, mean])
    ref = [polyline_distance_dense(np.column_stack([tt, c]), line).mean() for c in curves]
    assert np.allclose(errs, ref, atol=1e-5)
    # perpendicular offset shrinks with the local slope
    slope = np.gradient(base, tt)
    assert np.mean(errs) == pytest.approx(np.mean(0.05 / np.sqrt(1 + slope ** 2)), rel=0.03)


def test_point_polyline_distance_basic():
    line = np.array([[0.0, 0.0], [1.0, 0.0]])
    pts = np.array([[0.5, 1.0], [2.0, 0.0], [-1.0, -1.0]])
    assert np.allclose(point_polyline_distance(pts, line), [1.0, 1.0, np.sqrt(2)])


def test_cte_needs_two_periods():
    with pytest.raises(TooFewPeriods):
        cte_variance([_period(np.linspace(0, 1, 100))])
    with pytest.raises(ValueError):
        cte_variance([_period(np.linspace(0, 1, 100))] * 2, which="x")


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10_000))
def test_cte_zero_iff_equal(n, seed):
    rng = np.random.default_rng(seed)
    h = rng.uniform(size=100)
    assert cte_variance([_period(h)] * n).signal_variance == 0.0
    other = h.copy()
    other[rng.integers(100)] += 0.1
    assert cte_variance([_period(h)] * (n - 1) + [_period(other)]).signal_variance > 0.0


def test_cte_scales_with_amplitude():
    h = (1 - np.cos(np.linspace(0, 2 * np.pi, 100))) / 2
    periods = [_period(np.clip(h + d, 0, 1), ptp=3.0) for d in (-0.05, 0.05)]
    unscaled = cte_variance(periods, amplitude_scale=1.0).signal_variance
    scaled = cte_variance(periods).signal_variance
    assert scaled > unscaled
