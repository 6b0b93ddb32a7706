"""Fiducial feature vectors from normalised h(t) and h''(t) periods.

Layout of a vector, for a period with h'' morphology M1/M2/M3::

    [t_p, area_ratio, (dt, da, slope) x 4 h-gaps, (dt, da, slope) x {6, 8, 10} h''-gaps]

giving 14 + {18, 24, 30} = {32, 38, 44} values. ``t_p`` is the only entry in
seconds; every other time is a fraction of the period and every amplitude is
min-max normalised, so the rest of the vector does not move with heart rate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateGap, HMorphologyMismatch, MalformedInput, UnknownMorphology
from .segmentation import (
    PROMINENCE_FRAC,
    CardiacPeriod,
    Extrema,
    Morphology,
    classify_morphology,
    detect_extrema,
)

H_DIMS = 14
H2_DIMS = {Morphology.M1: 18, Morphology.M2: 24, Morphology.M3: 30}
DIMS = {m: H_DIMS + d for m, d in H2_DIMS.items()}
MAX_DIMS = max(DIMS.values())


@dataclass(frozen=True)
class FiducialPoint:
    t_norm: float
    a_norm: float
    kind: str  # "peak" or "valley"


@dataclass(frozen=True)
class FeatureVector:
    morphology: Morphology
    values: np.ndarray
    subject_id: str | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "morphology", Morphology(self.morphology))

    @property
    def dims(self) -> int:
        return self.values.size


def _points(samples: np.ndarray, ext: Extrema) -> list[FiducialPoint]:
    scale = samples.size - 1
    return [
        FiducialPoint(i / scale, float(v), "peak" if k == "P" else "valley")
        for i, v, k in ext.merged()
    ]


def fiducials_h(period: CardiacPeriod, prominence_frac: float = PROMINENCE_FRAC) -> list[FiducialPoint]:
    """Start valley, systolic peak, dicrotic notch, second wave, end valley."""
    ext = detect_extrema(period.h_samples, prominence_frac)
    if len(ext.peaks) != 2 or len(ext.valleys) != 3:
        raise HMorphologyMismatch(
            f"h(t) period has {len(ext.peaks)} peaks and {len(ext.valleys)} valleys, expected 2 and 3"
        )
    return _points(period.h_samples, ext)


def _gap_features(points: list[FiducialPoint]) -> list[float]:
    out = []
    for a, b in zip(points[:-1], points[1:]):
        dt = b.t_norm - a.t_norm
        if dt <= 0:
            raise DegenerateGap(f"fiducials at t={a.t_norm:.4f} and t={b.t_norm:.4f} coincide")
        da = b.a_norm - a.a_norm
        out.extend((dt, da, da / dt))
    return out


def area_ratio(h: np.ndarray, peak_idx: int) -> float:
    """Area under the normalised curve before the systolic peak over the area after it."""
    t = np.arange(h.size) / (h.size - 1)
    pre = np.trapezoid(h[:peak_idx + 1], t[:peak_idx + 1])
    post = np.trapezoid(h[peak_idx:], t[peak_idx:])
    if post <= 0:
        raise DegenerateGap("zero area after the systolic peak")
    return float(pre / post)


def morphology_of(period: CardiacPeriod, prominence_frac: float = PROMINENCE_FRAC) -> Morphology:
    return classify_morphology(detect_extrema(period.h2_samples, prominence_frac))


def extract_features(period: CardiacPeriod, prominence_frac: float = PROMINENCE_FRAC) -> FeatureVector:
    h_pts = fiducials_h(period, prominence_frac)
    ext2 = detect_extrema(period.h2_samples, prominence_frac)
    morph = classify_morphology(ext2)
    if not morph.accepted:
        raise UnknownMorphology(
            f"h''(t) period has {len(ext2.peaks)} peaks and {len(ext2.valleys)} valleys"
        )
    systolic = int(round(h_pts[1].t_norm * (period.h_samples.size - 1)))
    values = [period.duration_s, area_ratio(period.h_samples, systolic)]
    values += _gap_features(h_pts)
    values += _gap_features(_points(period.h2_samples, ext2))
    fv = FeatureVector(morph, np.array(values), period.subject_id)
    assert fv.dims == DIMS[morph]
    return fv


def write_feature_csv(path, vectors: list[FeatureVector]) -> None:
    """``subject,morphology,f0..f43``; shorter vectors leave trailing cells empty."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "morphology"] + [f"f{i}" for i in range(MAX_DIMS)])
        for fv in vectors:
            cells = [repr(float(v)) for v in fv.values]
            w.writerow([fv.subject_id or "", fv.morphology.value] + cells + [""] * (MAX_DIMS - len(cells)))


def read_feature_csv(path) -> list[FeatureVector]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["subject", "morphology"]:
            raise MalformedInput(f"{path}: expected header 'subject,morphology,f0,...'")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            try:
                morph = Morphology(row[1])
                vals = [float(c) for c in row[2:] if c.strip()]
            except ValueError:
                raise MalformedInput(f"{path}: line {lineno}: bad row") from None
            if morph in DIMS and len(vals) != DIMS[morph]:
                raise MalformedInput(f"{path}: line {lineno}: {morph.value} needs {DIMS[morph]} values, got {len(vals)}")
            out.append(FeatureVector(morph, np.array(vals), row[0] or None))
    return out
