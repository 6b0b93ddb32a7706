"""Signal to labelled periods: filter, differentiate, segment, classify, extract."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import DegenerateGap, HMorphologyMismatch, TooFewPeriods
from .features import FeatureVector, extract_features, morphology_of
from .filtering import WindowPlan, estimate_f1h, harmonic_filter, second_derivative, soa_filter
from .segmentation import CardiacPeriod, Morphology, cte_variance, segment_periods
from .signals import PpgSignal

STAGES = ("soa", "harmonic")


@dataclass(frozen=True)
class ProcessedPeriod:
    index: int  # chronological position within the subject's recording
    morphology: Morphology
    features: FeatureVector | None  # None when fiducials could not be placed
    cte: float

    @property
    def accepted(self) -> bool:
        return self.features is not None


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    periods: tuple[ProcessedPeriod, ...]
    elapsed_s: float


def filter_signal(sig: PpgSignal, stage: str, cfg: PipelineConfig = PipelineConfig()):
    """Return ``(x, x'', f1h estimates)`` for the chosen stage."""
    window = WindowPlan(cfg.window_s, cfg.stride_s)
    est = estimate_f1h(sig, window)
    if stage == "soa":
        x = soa_filter(sig, cfg.butterworth_order)
    elif stage == "harmonic":
        x = harmonic_filter(sig, window, est, cfg.fl_multiplier, cfg.fh_multiplier, cfg.butterworth_order)
    else:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    return x, second_derivative(x), est


def periods_of(sig: PpgSignal, stage: str = "harmonic", cfg: PipelineConfig = PipelineConfig()) -> list[CardiacPeriod]:
    x, x2, est = filter_signal(sig, stage, cfg)
    return segment_periods(
        x, x2, est, cfg.period_len, cfg.duration_bounds_s, cfg.period_tolerance
    )


def label_period(period: CardiacPeriod, prominence_frac: float) -> tuple[Morphology, FeatureVector | None]:
    morph = morphology_of(period, prominence_frac)
    if not morph.accepted:
        return morph, None
    try:
        return morph, extract_features(period, prominence_frac)
    except (HMorphologyMismatch, DegenerateGap):
        return morph, None


def process_signal(sig: PpgSignal, stage: str = "harmonic", cfg: PipelineConfig = PipelineConfig()) -> SubjectRecord:
    """Every period of one recording with its morphology, features and CTE."""
    periods = periods_of(sig, stage, cfg)
    try:
        cte = cte_variance(periods).per_period_cte
    except TooFewPeriods:
        cte = np.zeros(len(periods))
    out = []
    for i, (p, e) in enumerate(zip(periods, cte)):
        morph, fv = label_period(p, cfg.prominence_frac)
        out.append(ProcessedPeriod(i, morph, fv, float(e)))
    return SubjectRecord(sig.subject_id or "", tuple(out), sig.duration_s)
