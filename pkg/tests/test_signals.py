import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cardioid.errors import (
    DimensionMismatch,
    EmptyFrameSequence,
    MalformedInput,
    NonMonotonicTime,
    TooShort,
)
from cardioid.signals import PpgSignal, RgbFrame, frame_sample, frames_to_signal, load_signal, save_signal


def test_signal_invariants():
    s = PpgSignal([1.0, 2.0, 3.0], 2.0, "a")
    assert s.duration_s == 1.0
    assert np.allclose(s.times, [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        s.samples[0] = 5.0
    with pytest.raises(Exception):
        PpgSignal([1.0], 10.0)
    with pytest.raises(Exception):
        PpgSignal([1.0, 2.0], 0.0)


def test_csv_header_form(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("sample_rate_hz=100\n" + "\n".join(str(i) for i in range(500)) + "\n")
    s = load_signal(p)
    assert len(s) == 500 and s.sample_rate_hz == 100
    assert s.subject_id == "x"


def test_csv_timestamp_form(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("0.0,1.0\n0.5,2.0\n1.0,3.0\n")
    s = load_signal(p)
    assert s.sample_rate_hz == pytest.approx(2.0)
    assert list(s.samples) == [1.0, 2.0, 3.0]


def test_non_monotonic_time(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("0.0,1.0\n0.5,2.0\n0.4,3.0\n")
    with pytest.raises(NonMonotonicTime):
        load_signal(p)


def test_non_uniform_resampled(tmp_path):
    p = tmp_path / "t.jsonl"
    t = [0.0, 0.1, 0.2, 0.35, 0.4, 0.5]
    p.write_text("".join(json.dumps({"t": a, "v": 2 * a}) + "\n" for a in t))
    s = load_signal(p)
    assert s.sample_rate_hz == pytest.approx(10.0)
    # linear input stays linear after linear resampling
    assert np.allclose(s.samples, 2 * (s.times + t[0]))


def test_malformed_and_short(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("sample_rate_hz=10\n1\nabc\n")
    with pytest.raises(MalformedInput):
        load_signal(bad)
    short = tmp_path / "short.csv"
    short.write_text("sample_rate_hz=10\n1\n")
    with pytest.raises(TooShort):
        load_signal(short)


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    s = PpgSignal(rng.normal(size=50), 60.0, "subj")
    p = tmp_path / "subj.csv"
    save_signal(s, p)
    back = load_signal(p)
    assert back.sample_rate_hz == 60.0
    assert np.array_equal(back.samples, s.samples)


def test_frame_rule_examples():
    assert frame_sample(RgbFrame(1, 1, [(200, 10, 10)])) == 200
    assert frame_sample(RgbFrame(2, 1, [(200, 10, 10), (100, 100, 100)])) == 200
    frames = [RgbFrame(1, 1, [(200, 10, 10)])] * 60
    sig, drops = frames_to_signal(frames, 60.0)
    assert len(sig) == 60 and sig.sample_rate_hz == 60.0 and drops == 0
    assert np.all(sig.samples == 200)


def test_frame_dropout_holds_last_value():
    good = RgbFrame(1, 1, [(200, 10, 10)])
    grey = RgbFrame(1, 1, [(90, 90, 90)])
    sig, drops = frames_to_signal([grey, good, grey, grey], 30.0)
    assert list(sig.samples) == [90.0, 200.0, 200.0, 200.0]
    assert drops == 3


def test_frame_errors():
    with pytest.raises(EmptyFrameSequence):
        frames_to_signal([], 30.0)
    with pytest.raises(DimensionMismatch):
        frames_to_signal([RgbFrame(1, 1, [(1, 0, 0)]), RgbFrame(2, 1, [(1, 0, 0), (1, 0, 0)])], 30.0)


pixel = st.tuples(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))


@settings(max_examples=60, deadline=None)
@given(st.lists(pixel, min_size=1, max_size=30), st.randoms(use_true_random=False), st.floats(0.1, 10.0))
def test_frame_permutation_and_scale(pixels, rnd, c):
    base = frame_sample(RgbFrame(len(pixels), 1, pixels))
    shuffled = list(pixels)
    rnd.shuffle(shuffled)
    again = frame_sample(RgbFrame(len(pixels), 1, shuffled))
    assert (again is None) if base is None else again == pytest.approx(base)
    scaled = frame_sample(RgbFrame(len(pixels), 1, [tuple(c * v for v in p) for p in pixels]))
    if base is None:
        assert scaled is None
    else:
        assert scaled == pytest.approx(c * base)
