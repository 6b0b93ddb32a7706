"""Metrics, emulated variance subsets and benchmark runs.

Benchmarks work on :class:`~cardioid.pipeline.SubjectRecord` lists, one list
per filtering stage, so a recording is filtered and segmented once and then
reused by every variant.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .authentication import enroll, verify
from .config import PipelineConfig
from .errors import (
    CardioIdError,
    EmptySubset,
    InsufficientData,
    InvalidCounts,
    TooFewSubjects,
    UndefinedRate,
)
from .identification import NnArch, identify, train_knn, train_lda, train_nn
from .pipeline import STAGES, SubjectRecord, process_signal
from .segmentation import ACCEPTED_MORPHOLOGIES, Morphology
from .signals import PpgSignal

REPORT_COLUMNS = ["subset", "variant", "subjects_included_pct", "acq_rate", "acq_speed", "tpr", "tnr", "bac", "tp", "fp", "tn", "fn"]


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        vals = (self.tp, self.fp, self.tn, self.fn)
        if any(int(v) != v or v < 0 for v in vals):
            raise InvalidCounts(f"counts must be non-negative integers, got {vals}")
        if sum(vals) < 1:
            raise InvalidCounts("confusion matrix is empty")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def bac(c: ConfusionCounts) -> tuple[float, float, float]:
    """Standard rates: TPR = TP/(TP+FN), TNR = TN/(TN+FP), BAC = their mean."""
    if c.tp + c.fn == 0:
        raise UndefinedRate("no positive samples: TPR undefined")
    if c.tn + c.fp == 0:
        raise UndefinedRate("no negative samples: TNR undefined")
    tpr = c.tp / (c.tp + c.fn)
    tnr = c.tn / (c.tn + c.fp)
    return tpr, tnr, (tpr + tnr) / 2


@dataclass(frozen=True)
class AcquisitionStats:
    total_periods: int
    accepted_periods: int
    elapsed_s: float

    @property
    def rate_exact(self) -> Fraction:
        return Fraction(self.accepted_periods, self.total_periods) if self.total_periods else Fraction(0)

    @property
    def speed_exact(self) -> Fraction:
        return Fraction(self.accepted_periods) / Fraction(self.elapsed_s) if self.elapsed_s else Fraction(0)

    @property
    def rate(self) -> float:
        return float(self.rate_exact)

    @property
    def speed(self) -> float:
        return float(self.speed_exact)


def acquisition(periods_all: int, periods_accepted: int, elapsed_s: float) -> AcquisitionStats:
    """Acquisition rate S'/S and speed S'/elapsed."""
    if periods_all < 0 or not 0 <= periods_accepted <= periods_all:
        raise InvalidCounts(f"need 0 <= S' <= S, got S={periods_all}, S'={periods_accepted}")
    if not elapsed_s >= 0 or not math.isfinite(elapsed_s):
        raise InvalidCounts(f"elapsed time must be finite and >= 0, got {elapsed_s}")
    if elapsed_s == 0 and periods_accepted > 0:
        raise InvalidCounts("accepted periods in zero elapsed time")
    return AcquisitionStats(int(periods_all), int(periods_accepted), float(elapsed_s))


def multiclass_rates(truth: Sequence, predicted: Sequence) -> tuple[float, float, ConfusionCounts]:
    """Macro one-vs-rest TPR and TNR over the classes present in ``truth``.

    A ``None`` prediction (no model for the period) is wrong for every class.
    Returns the macro rates and the summed per-class counts.
    """
    truth = list(truth)
    predicted = list(predicted)
    if not truth:
        raise EmptySubset("no test periods")
    tprs, tnrs = [], []
    total = None
    for c in sorted(set(truth), key=str):
        tp = sum(t == c and p == c for t, p in zip(truth, predicted))
        fn = sum(t == c and p != c for t, p in zip(truth, predicted))
        fp = sum(t != c and p == c for t, p in zip(truth, predicted))
        tn = len(truth) - tp - fn - fp
        cc = ConfusionCounts(tp, fp, tn, fn)
        total = cc if total is None else total + cc
        tprs.append(tp / (tp + fn))
        tnrs.append(tn / (tn + fp) if tn + fp else 1.0)
    return float(np.mean(tprs)), float(np.mean(tnrs)), total


# ---------------------------------------------------------------- subsets


@dataclass(frozen=True)
class EmulatedSubset:
    variance_cap: float
    included: Mapping[str, tuple[int, ...]]  # subject -> kept period indices
    excluded_subjects: tuple[str, ...]

    @property
    def label(self) -> str:
        return "inf" if math.isinf(self.variance_cap) else f"{self.variance_cap:g}"

    def key(self) -> tuple:
        return tuple(sorted(self.included.items()))


def emulate_subsets(
    periods: Mapping[str, Sequence],
    caps: Iterable[float] = (2.0, 4.0, 6.0, math.inf),
    min_periods: int = 20,
) -> list[EmulatedSubset]:
    """Keep periods with CTE <= cap and subjects with at least ``min_periods`` of them.

    ``periods`` maps a subject to its per-period CTE values, or to objects with a
    ``cte`` attribute.
    """
    ctes = {s: [getattr(p, "cte", p) for p in seq] for s, seq in periods.items()}
    out = []
    for cap in caps:
        included, excluded = {}, []
        for s in sorted(ctes, key=str):
            keep = tuple(i for i, e in enumerate(ctes[s]) if e <= cap)
            if len(keep) >= min_periods:
                included[s] = keep
            else:
                excluded.append(s)
        out.append(EmulatedSubset(float(cap), included, tuple(excluded)))
    return out


def full_subset(records: Sequence[SubjectRecord]) -> EmulatedSubset:
    return EmulatedSubset(math.inf, {r.subject_id: tuple(range(len(r.periods))) for r in records}, ())


# ---------------------------------------------------------------- variants


@dataclass(frozen=True)
class Variant:
    name: str
    task: str  # "ident" or "auth"
    stage: str
    morphologies: tuple[Morphology, ...]
    method: str  # knn / lda / nn for identification, euclidean / mahalanobis for authentication
    multi_cluster: bool = False


_M2 = (Morphology.M2,)
VARIANTS = {
    v.name: v
    for v in (
        Variant("SoA-ident", "ident", "soa", _M2, "knn"),
        Variant("MS", "ident", "harmonic", _M2, "knn"),
        Variant("MC", "ident", "harmonic", ACCEPTED_MORPHOLOGIES, "knn"),
        Variant("CardioID-LDA", "ident", "harmonic", ACCEPTED_MORPHOLOGIES, "lda"),
        Variant("CardioID-NN", "ident", "harmonic", ACCEPTED_MORPHOLOGIES, "nn"),
        Variant("SoA-auth", "auth", "soa", _M2, "euclidean"),
        Variant("MS-auth", "auth", "harmonic", _M2, "euclidean"),
        Variant("MC-auth", "auth", "harmonic", ACCEPTED_MORPHOLOGIES, "euclidean"),
        Variant("Mahal", "auth", "harmonic", ACCEPTED_MORPHOLOGIES, "mahalanobis"),
        Variant("CardioID-auth", "auth", "harmonic", ACCEPTED_MORPHOLOGIES, "mahalanobis", multi_cluster=True),
    )
}
IDENT_VARIANTS = [n for n, v in VARIANTS.items() if v.task == "ident"]
AUTH_VARIANTS = [n for n, v in VARIANTS.items() if v.task == "auth"]


@dataclass
class ReportRow:
    subset: str
    variant: str
    subjects_included_pct: float
    acq_rate: float
    acq_speed: float
    tpr: float
    tnr: float
    bac: float
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0


@dataclass(frozen=True)
class _Split:
    train: dict  # subject -> list of FeatureVector
    test: dict
    acq: AcquisitionStats
    included_pct: float


def _split(records: Sequence[SubjectRecord], variant: Variant, subset: EmulatedSubset, train_fraction: float) -> _Split:
    """Chronological per-subject split of the subset's periods."""
    by_id = {r.subject_id: r for r in records}
    if not subset.included:
        raise EmptySubset(f"subset {subset.label} has no subjects")
    allowed = set(variant.morphologies)
    train, test = {}, {}
    total = accepted = 0
    elapsed = 0.0
    for s, idx in sorted(subset.included.items()):
        rec = by_id[s]
        periods = [rec.periods[i] for i in idx]
        n_train = int(math.floor(train_fraction * len(periods)))
        ok = [p.accepted and p.morphology in allowed for p in periods]
        total += len(periods)
        accepted += sum(ok)
        elapsed += rec.elapsed_s * len(periods) / max(1, len(rec.periods))
        train[s] = [p.features for p, k in zip(periods[:n_train], ok[:n_train]) if k]
        test[s] = [p.features for p, k in zip(periods[n_train:], ok[n_train:]) if k]
    n_all = len(subset.included) + len(subset.excluded_subjects)
    return _Split(train, test, acquisition(total, accepted, elapsed), 100.0 * len(subset.included) / n_all)


def _nn_arch_overrides(cfg: PipelineConfig) -> dict:
    return dict(
        l2=cfg.nn_l2, sparsity_target=cfg.nn_sparsity_target, sparsity_weight=cfg.nn_sparsity_weight,
        lr=cfg.nn_lr, momentum=cfg.nn_momentum, epochs=cfg.nn_epochs,
        pretrain_epochs=cfg.nn_pretrain_epochs, batch_size=cfg.nn_batch_size,
    )


def train_ident(train, method: str, cfg: PipelineConfig = PipelineConfig(), seed: int | None = None):
    if method == "knn":
        return train_knn(train, cfg.knn_k)
    if method == "lda":
        return train_lda(train, cfg.lda_ridge)
    if method == "nn":
        return train_nn(train, seed=cfg.seed if seed is None else seed, **_nn_arch_overrides(cfg))
    raise ValueError(f"unknown identification method {method!r}")


def run_ident_benchmark(
    records: Sequence[SubjectRecord],
    variant: str | Variant,
    subset: EmulatedSubset | None = None,
    cfg: PipelineConfig = PipelineConfig(),
    shuffle_labels: bool = False,
) -> ReportRow:
    """Train on each subject's first periods, identify each later period alone."""
    v = VARIANTS[variant] if isinstance(variant, str) else variant
    subset = subset or full_subset(records)
    sp = _split(records, v, subset, cfg.train_fraction)
    train = [fv for s in sorted(sp.train) for fv in sp.train[s]]
    if shuffle_labels:
        rng = np.random.default_rng(cfg.seed)
        labels = [fv.subject_id for fv in train]
        perm = rng.permutation(len(labels))
        train = [replace(fv, subject_id=labels[j]) for fv, j in zip(train, perm)]
    if not train:
        raise EmptySubset("no accepted training periods")
    model = train_ident(train, v.method, cfg)
    truth, pred = [], []
    for s in sorted(sp.test):
        for fv in sp.test[s]:
            truth.append(s)
            pred.append(identify(model, fv)[0] if fv.morphology in model.sub else None)
    tpr, tnr, cc = multiclass_rates(truth, pred)
    return ReportRow(subset.label, v.name, sp.included_pct, sp.acq.rate, sp.acq.speed, tpr, tnr, (tpr + tnr) / 2,
                     cc.tp, cc.fp, cc.tn, cc.fn)


def run_auth_benchmark(
    records: Sequence[SubjectRecord],
    variant: str | Variant,
    subset: EmulatedSubset | None = None,
    cfg: PipelineConfig = PipelineConfig(),
) -> ReportRow:
    """Enroll each subject alone; everyone else's test periods are impostors.

    Subjects with too few accepted training periods to enroll are left out of
    the averages.
    """
    v = VARIANTS[variant] if isinstance(variant, str) else variant
    subset = subset or full_subset(records)
    if len(subset.included) < 2:
        raise TooFewSubjects(f"authentication needs at least 2 subjects, got {len(subset.included)}")
    sp = _split(records, v, subset, cfg.train_fraction)
    tprs, tnrs = [], []
    total = None
    for s in sorted(sp.train):
        try:
            profile = enroll(
                sp.train[s], s, metric=v.method, multi_cluster=v.multi_cluster,
                tau_percentile=cfg.tau_percentile, pca_variance=cfg.pca_variance,
                grid_cells_per_dim=cfg.grid_cells_per_dim, min_periods=cfg.min_subject_periods,
            )
        except InsufficientData:
            continue
        pos = [verify(profile, fv)[0] for fv in sp.test[s]]
        neg = [verify(profile, fv)[0] for o in sorted(sp.test) if o != s for fv in sp.test[o]]
        if not pos or not neg:
            continue
        cc = ConfusionCounts(sum(pos), sum(neg), len(neg) - sum(neg), len(pos) - sum(pos))
        total = cc if total is None else total + cc
        tpr, tnr, _ = bac(cc)
        tprs.append(tpr)
        tnrs.append(tnr)
    if not tprs:
        raise InsufficientData("no subject could be enrolled and tested")
    tpr, tnr = float(np.mean(tprs)), float(np.mean(tnrs))
    return ReportRow(subset.label, v.name, sp.included_pct, sp.acq.rate, sp.acq.speed, tpr, tnr, (tpr + tnr) / 2,
                     total.tp, total.fp, total.tn, total.fn)


# ---------------------------------------------------------------- full runs


@dataclass
class Dataset:
    """Per-stage processed recordings of the same subjects."""

    stages: dict = field(default_factory=dict)  # stage -> list[SubjectRecord]

    def records(self, stage: str) -> list[SubjectRecord]:
        return self.stages[stage]


def build_dataset(signals: Sequence[PpgSignal], cfg: PipelineConfig = PipelineConfig(), stages=STAGES) -> Dataset:
    return Dataset({st: [process_signal(s, st, cfg) for s in signals] for st in stages})


def _nan_row(subset: str, variant: str) -> ReportRow:
    nan = float("nan")
    return ReportRow(subset, variant, nan, nan, nan, nan, nan, nan)


def _run_one(args) -> ReportRow:
    records, name, subset, cfg = args
    v = VARIANTS[name]
    try:
        if v.task == "ident":
            return run_ident_benchmark(records, v, subset, cfg)
        return run_auth_benchmark(records, v, subset, cfg)
    except CardioIdError:
        return _nan_row(subset.label, name)


def run_benchmark(
    dataset: Dataset,
    variants: Sequence[str] = tuple(VARIANTS),
    cfg: PipelineConfig = PipelineConfig(),
) -> list[ReportRow]:
    """One row per (variance cap, variant).

    Caps that select exactly the same periods share a single computation.
    """
    jobs, keys = [], []
    for name in variants:
        records = dataset.records(VARIANTS[name].stage)
        subsets = emulate_subsets({r.subject_id: r.periods for r in records}, cfg.variance_caps, cfg.min_subject_periods)
        for sub in subsets:
            keys.append((sub.label, name, VARIANTS[name].stage, sub.key()))
            jobs.append((records, name, sub, cfg))

    unique: dict = {}
    for k, job in zip(keys, jobs):
        unique.setdefault(k[1:], job)
    order = list(unique)
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            results = dict(zip(order, pool.map(_run_one, [unique[k] for k in order])))
    else:
        results = {k: _run_one(unique[k]) for k in order}
    return [replace(results[k[1:]], subset=k[0]) for k in keys]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 12))
    return str(v)


def write_report_csv(rows: Sequence[ReportRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[c]) for c in REPORT_COLUMNS])


def write_report_json(rows: Sequence[ReportRow], path) -> None:
    def clean(d):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}

    Path(path).write_text(json.dumps([clean(asdict(r)) for r in rows], indent=1, sort_keys=True) + "\n")


def read_report_csv(path) -> list[ReportRow]:
    rows = []
    with Path(path).open(newline="") as fh:
        for d in csv.DictReader(fh):
            rows.append(ReportRow(
                d["subset"], d["variant"],
                *(float(d[c]) for c in REPORT_COLUMNS[2:8]),
                *(int(d[c]) for c in REPORT_COLUMNS[8:]),
            ))
    return rows
