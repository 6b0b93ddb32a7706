"""Seeded multi-subject PPG generator used for desk-scale verification.

Each subject's signal is a train of pulses built from Gaussian bumps placed at
relative positions inside the beat, with beat-to-beat heart-rate jitter, a
respiration sinusoid, a random-walk pressure drift and white noise on top.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidSpec
from .signals import PpgSignal

HR_RANGE = (0.5, 3.0)

Bump = tuple[float, float, float]  # (relative time in [0, 1], amplitude, width)

# Pulse templates whose harmonically filtered second derivative settles into a
# given number of peaks per beat (2 -> rejected, 3/4/5 -> the three accepted
# morphologies). Found by scanning bump layouts through the full pipeline.
MORPHOLOGY_TEMPLATES: dict[int, list[Bump]] = {
    2: [(0.2, 1.0, 0.1), (0.5, 0.6, 0.08)],
    3: [
        (0.2414, 1.0, 0.1339), (0.6822, 0.1478, 0.1149),
        (0.0627, 0.0774, 0.0324), (0.3127, 0.0774, 0.0324), (0.5627, 0.0774, 0.0324), (0.8127, 0.0774, 0.0324),
    ],
    4: [(0.1438, 1.0, 0.1228), (0.6454, 0.2906, 0.0712)],
    5: [(0.193, 1.0, 0.1043), (0.0258, 0.1541, 0.0292), (0.3591, 0.1541, 0.0292), (0.6924, 0.1541, 0.0292)],
}


@dataclass(frozen=True)
class SyntheticSpec:
    n_subjects: int
    heart_rate_hz: Sequence[tuple[float, float]]
    pulse_template: Sequence[Sequence[Bump]]
    respiration: tuple[float, float] = (0.0, 0.25)
    pressure_drift: float = 0.0
    noise_std: float = 0.0
    duration_s: float = 60.0
    sample_rate_hz: float = 100.0
    seed: int = 0

    def __post_init__(self):
        hr = [tuple(map(float, x)) for x in _per_subject(self.heart_rate_hz, self.n_subjects, "heart_rate_hz", pairs=True)]
        tmpl = [
            [tuple(map(float, b)) for b in t]
            for t in _per_subject(self.pulse_template, self.n_subjects, "pulse_template", pairs=False)
        ]
        object.__setattr__(self, "heart_rate_hz", hr)
        object.__setattr__(self, "pulse_template", tmpl)
        object.__setattr__(self, "respiration", tuple(map(float, self.respiration)))
        self.validate()

    def validate(self) -> None:
        if self.n_subjects < 1:
            raise InvalidSpec("n_subjects must be positive")
        for mean, jitter in self.heart_rate_hz:
            if not HR_RANGE[0] <= mean <= HR_RANGE[1]:
                raise InvalidSpec(f"heart rate mean {mean} Hz outside {HR_RANGE}")
            if jitter < 0:
                raise InvalidSpec("heart rate jitter must be >= 0")
        for tmpl in self.pulse_template:
            if not tmpl:
                raise InvalidSpec("pulse template needs at least one bump")
            for t, _, w in tmpl:
                if not 0.0 <= t <= 1.0 or w <= 0:
                    raise InvalidSpec(f"bad bump (t={t}, width={w})")
        if self.pressure_drift < 0 or self.noise_std < 0 or self.respiration[0] < 0:
            raise InvalidSpec("noise, drift and respiration amplitudes must be >= 0")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0:
            raise InvalidSpec("duration_s and sample_rate_hz must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["heart_rate_hz"] = [list(x) for x in self.heart_rate_hz]
        d["pulse_template"] = [[list(b) for b in t] for t in self.pulse_template]
        d["respiration"] = list(self.respiration)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise InvalidSpec(f"unknown spec keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _per_subject(value, n: int, name: str, pairs: bool) -> list:
    """Broadcast a single entry (bare or in a one-item list) to ``n`` subjects."""
    value = list(value)
    if not value:
        raise InvalidSpec(f"{name} is empty")
    single = np.ndim(value[0]) == 0 if pairs else np.ndim(value[0][0]) == 0
    if single:
        return [value] * n
    if len(value) == 1:
        return value * n
    if len(value) != n:
        raise InvalidSpec(f"{name} has {len(value)} entries for {n} subjects")
    return value


def pulse_shape(phase: np.ndarray, template: Sequence[Bump]) -> np.ndarray:
    """Evaluate a template at beat phases in [0, 1), wrapping bumps periodically."""
    out = np.zeros_like(phase, dtype=float)
    for center, amp, width in template:
        for shift in (-1.0, 0.0, 1.0):
            out += amp * np.exp(-0.5 * ((phase - center - shift) / width) ** 2)
    return out


def _subject_signal(rng: np.random.Generator, spec: SyntheticSpec, i: int) -> np.ndarray:
    fs = spec.sample_rate_hz
    n = int(round(spec.duration_s * fs)) + 1
    t = np.arange(n) / fs
    hr_mean, jitter = spec.heart_rate_hz[i]

    # beat onsets, starting somewhere inside a beat so subjects are not phase locked
    onsets = [-rng.uniform(0.0, 1.0 / hr_mean)]
    while onsets[-1] <= t[-1]:
        rate = np.clip(hr_mean + jitter * rng.standard_normal(), *HR_RANGE) if jitter > 0 else hr_mean
        onsets.append(onsets[-1] + 1.0 / rate)
    onsets = np.asarray(onsets)
    k = np.searchsorted(onsets, t, side="right") - 1
    phase = (t - onsets[k]) / (onsets[k + 1] - onsets[k])
    x = pulse_shape(phase, spec.pulse_template[i])

    resp_amp, resp_freq = spec.respiration
    if resp_amp > 0:
        x += resp_amp * np.sin(2 * np.pi * resp_freq * t + rng.uniform(0, 2 * np.pi))
    if spec.pressure_drift > 0:
        x += np.cumsum(rng.standard_normal(n)) * spec.pressure_drift / np.sqrt(fs)
    if spec.noise_std > 0:
        x += spec.noise_std * rng.standard_normal(n)
    return x


def generate_synthetic(spec: SyntheticSpec) -> list[PpgSignal]:
    """One signal per subject; bit-identical for a fixed ``spec.seed``."""
    spec.validate()
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.n_subjects)
    width = len(str(spec.n_subjects - 1))
    return [
        PpgSignal(
            _subject_signal(np.random.default_rng(s), spec, i),
            spec.sample_rate_hz,
            subject_id=f"s{i:0{width}d}",
        )
        for i, s in enumerate(seeds)
    ]


def _scaled(template: Sequence[Bump], bump: int, column: int, factor: float) -> list[Bump]:
    out = [list(b) for b in template]
    out[bump][column] *= factor
    return [tuple(b) for b in out]


def separable_spec(
    n_subjects: int = 5,
    duration_s: float = 120.0,
    noise_std: float = 0.005,
    seed: int = 7,
) -> SyntheticSpec:
    """Subjects with distinct pulse templates and well-spaced resting heart rates.

    Cycles through the three accepted morphologies; repeated morphologies get a
    slightly reshaped template and always a different heart rate.
    """
    if not 1 <= n_subjects <= 6:
        raise InvalidSpec("separable_spec supports 1 to 6 subjects")
    base = [MORPHOLOGY_TEMPLATES[3], MORPHOLOGY_TEMPLATES[4], MORPHOLOGY_TEMPLATES[5]]
    # second pass over the morphologies: narrower systolic wave or weaker diastolic wave
    reshape = [(0, 2, 0.95), (1, 1, 0.9), (0, 2, 0.95)]
    templates, rates = [], []
    for i in range(n_subjects):
        t = base[i % 3]
        templates.append(_scaled(t, *reshape[i % 3]) if i >= 3 else list(t))
        rates.append((0.9 + 0.15 * i, 0.01))
    return SyntheticSpec(
        n_subjects, rates, templates,
        respiration=(0.05, 0.25), pressure_drift=0.02, noise_std=noise_std,
        duration_s=duration_s, seed=seed,
    )
