import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import CubicSpline

from cardioid.errors import DegenerateGap, HMorphologyMismatch, MalformedInput, UnknownMorphology
from cardioid.features import (
    DIMS,
    FeatureVector,
    FiducialPoint,
    _gap_features,
    area_ratio,
    extract_features,
    fiducials_h,
    read_feature_csv,
    write_feature_csv,
)
from cardioid.filtering import estimate_f1h, harmonic_filter, second_derivative
from cardioid.segmentation import CardiacPeriod, Morphology, make_period, segment_periods
from cardioid.synthetic import MORPHOLOGY_TEMPLATES, SyntheticSpec, generate_synthetic


def periods_for(peaks: int, hr: float = 1.1, seconds: float = 30.0):
    spec = SyntheticSpec(1, [(hr, 0.0)], [MORPHOLOGY_TEMPLATES[peaks]], duration_s=seconds, seed=3)
    sig = generate_synthetic(spec)[0]
    est = estimate_f1h(sig)
    h = harmonic_filter(sig, estimates=est)
    return segment_periods(h, second_derivative(h), est)[3:-3]


@pytest.fixture(scope="module")
def m2_period():
    return periods_for(4)[0]


@pytest.mark.parametrize("peaks,morph", [(3, Morphology.M1), (4, Morphology.M2), (5, Morphology.M3)])
def test_dims_per_morphology(peaks, morph):
    fv = extract_features(periods_for(peaks)[0])
    assert fv.morphology is morph
    assert fv.dims == DIMS[morph] == {Morphology.M1: 32, Morphology.M2: 38, Morphology.M3: 44}[morph]
    assert np.all(np.isfinite(fv.values))


def test_discard_raises(m2_period):
    # valid h(t) but an h''(t) with only two peaks
    two = (1 - np.cos(np.linspace(0, 4 * np.pi, 100))) / 2
    with pytest.raises(UnknownMorphology):
        extract_features(dataclasses.replace(m2_period, h2_samples=two))


def test_symmetric_area_ratio():
    h = (1 - np.cos(np.linspace(0, 2 * np.pi, 101))) / 2
    assert area_ratio(h, 50) == pytest.approx(1.0, abs=1e-12)


def test_time_dilation(m2_period):
    # one raw beat recorded over 1 s and over 2 s at the same sample rate
    fh = CubicSpline(np.linspace(0, 1, 100), m2_period.h_samples)
    fh2 = CubicSpline(np.linspace(0, 1, 100), m2_period.h2_samples)
    beats = [make_period(fh(np.linspace(0, 1, n)), fh2(np.linspace(0, 1, n)), 100.0) for n in (101, 201)]
    a, b = (extract_features(p) for p in beats)
    assert b.values[0] == pytest.approx(2 * a.values[0])
    assert np.allclose(b.values[1:], a.values[1:], atol=1e-3)


def test_monotone_h_mismatch():
    x = np.linspace(0, 1, 100)
    with pytest.raises(HMorphologyMismatch):
        extract_features(CardiacPeriod(x, x, 1.0, 0, 99))


def test_degenerate_gap():
    pts = [FiducialPoint(0.0, 0.0, "valley"), FiducialPoint(0.0, 1.0, "peak")]
    with pytest.raises(DegenerateGap):
        _gap_features(pts)


def test_gap_feature_layout():
    pts = [FiducialPoint(0.0, 0.0, "valley"), FiducialPoint(0.25, 1.0, "peak"), FiducialPoint(1.0, 0.2, "valley")]
    assert _gap_features(pts) == pytest.approx([0.25, 1.0, 4.0, 0.75, -0.8, -0.8 / 0.75])


def test_vector_is_read_only():
    fv = FeatureVector(Morphology.M1, np.zeros(32), "a")
    with pytest.raises(ValueError):
        fv.values[0] = 1.0


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    vecs = [FeatureVector(m, rng.normal(size=DIMS[m]), f"s{i}") for i, m in enumerate(DIMS)]
    p = tmp_path / "f.csv"
    write_feature_csv(p, vecs)
    back = read_feature_csv(p)
    assert [(v.subject_id, v.morphology) for v in back] == [(v.subject_id, v.morphology) for v in vecs]
    for a, b in zip(vecs, back):
        assert np.array_equal(a.values, b.values)


def test_csv_malformed(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n")
    with pytest.raises(MalformedInput):
        read_feature_csv(p)
    p.write_text("subject,morphology,f0\na,M1,1.0\n")
    with pytest.raises(MalformedInput):
        read_feature_csv(p)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0))
def test_only_first_entry_tracks_duration(m2_period, scale):
    a = extract_features(m2_period)
    b = extract_features(dataclasses.replace(m2_period, duration_s=scale * m2_period.duration_s))
    assert b.values[0] == pytest.approx(scale * a.values[0])
    assert np.array_equal(b.values[1:], a.values[1:])


def test_fiducial_kinds_and_order(m2_period):
    pts = fiducials_h(m2_period)
    assert [p.kind for p in pts] == ["valley", "peak", "valley", "peak", "valley"]
    assert all(a.t_norm < b.t_norm for a, b in zip(pts[:-1], pts[1:]))
