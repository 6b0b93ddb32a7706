import json

import numpy as np
import pytest

from cardioid.errors import InvalidSpec
from cardioid.filtering import estimate_f1h, harmonic_filter, second_derivative
from cardioid.segmentation import cte_variance, segment_periods
from cardioid.synthetic import MORPHOLOGY_TEMPLATES, SyntheticSpec, generate_synthetic, pulse_shape, separable_spec

PULSE = [(0.2, 1.0, 0.08), (0.5, 0.5, 0.1)]


def _periods(sig):
    est = estimate_f1h(sig)
    h = harmonic_filter(sig, estimates=est)
    return segment_periods(h, second_derivative(h), est)


def test_deterministic_under_seed():
    spec = SyntheticSpec(3, [(1.0, 0.05)], [PULSE], noise_std=0.02, pressure_drift=0.05, respiration=(0.1, 0.3), seed=5)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    assert [s.subject_id for s in a] == ["s0", "s1", "s2"]
    for x, y in zip(a, b):
        assert np.array_equal(x.samples, y.samples)
    c = generate_synthetic(SyntheticSpec.from_dict(spec.to_dict() | {"seed": 6}))
    assert not np.array_equal(a[0].samples, c[0].samples)


def test_noiseless_periodic_construction():
    spec = SyntheticSpec(1, [(1.0, 0.0)], [PULSE], duration_s=10.0, seed=0)
    x = generate_synthetic(spec)[0].samples
    assert x.size == 1001
    # exactly periodic with a 100-sample period
    assert np.allclose(x[100:], x[:-100], atol=1e-12)


def test_noiseless_periods_have_zero_cte():
    spec = SyntheticSpec(1, [(1.0, 0.0)], [PULSE], duration_s=20.0, seed=0)
    periods = _periods(generate_synthetic(spec)[0])
    # filter start-up disturbs the first and last couple of beats
    assert cte_variance(periods[3:-3]).signal_variance < 2e-3


def test_noise_increases_cte():
    values = []
    for noise in (0.0, 0.01, 0.03):
        spec = SyntheticSpec(1, [(1.0, 0.0)], [PULSE], noise_std=noise, duration_s=30.0, seed=2)
        values.append(cte_variance(_periods(generate_synthetic(spec)[0])[3:-3]).signal_variance)
    assert values[0] < values[1] < values[2]


def test_heart_rate_in_spectrum():
    spec = SyntheticSpec(1, [(1.25, 0.0)], [MORPHOLOGY_TEMPLATES[4]], noise_std=0.01, duration_s=20.0, seed=1)
    est = estimate_f1h(generate_synthetic(spec)[0])
    assert all(abs(e.f1h_hz - 1.25) <= 0.05 for e in est)


@pytest.mark.parametrize(
    "kw",
    [
        {"n_subjects": 0},
        {"heart_rate_hz": [(3.5, 0.0)]},
        {"heart_rate_hz": [(1.0, -0.1)]},
        {"pulse_template": [[(1.5, 1.0, 0.1)]]},
        {"noise_std": -1.0},
        {"duration_s": 0.0},
        {"heart_rate_hz": [(1.0, 0.0), (1.0, 0.0)]},
    ],
)
def test_invalid_spec(kw):
    base = {"n_subjects": 1, "heart_rate_hz": [(1.0, 0.0)], "pulse_template": [PULSE]}
    with pytest.raises(InvalidSpec):
        SyntheticSpec(**(base | kw))


def test_json_roundtrip_and_unknown_keys(tmp_path):
    spec = separable_spec()
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(spec.to_dict()))
    again = SyntheticSpec.from_json(p)
    assert again == spec
    with pytest.raises(InvalidSpec):
        SyntheticSpec.from_dict(spec.to_dict() | {"colour": "red"})


def test_pulse_shape_is_periodic():
    phase = np.linspace(0, 1, 101)
    y = pulse_shape(phase, PULSE)
    assert y[0] == pytest.approx(y[-1])
