"""Pipeline configuration with documented defaults.

Every tunable of the library lives here so that one JSON file (plus CLI
overrides) describes a full run. Unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError

SEED_ENV = "PPG_BIOID_SEED"


@dataclass(frozen=True)
class PipelineConfig:
    # spectral filtering
    window_s: float = 5.0  # sliding window for the f1h estimate
    stride_s: float = 1.0
    fl_multiplier: float = 2.0  # adaptive band low edge, times f1h
    fh_multiplier: float = 5.5  # adaptive band high edge, times f1h
    butterworth_order: int = 2
    # segmentation and morphology
    period_len: int = 100  # samples per normalised period
    duration_bounds_s: tuple = (1.0 / 3.0, 2.0)  # periods outside are dropped
    period_tolerance: float = 0.25  # next valley searched within (1 +/- tol) periods
    prominence_frac: float = 0.05
    # identification
    knn_k: int = 3
    lda_ridge: float = 1e-4
    nn_epochs: int = 200
    nn_pretrain_epochs: int = 50
    nn_lr: float = 0.05
    nn_momentum: float = 0.9
    nn_batch_size: int = 32
    nn_l2: float = 1e-4
    nn_sparsity_target: float = 0.05
    nn_sparsity_weight: float = 0.1
    # authentication
    pca_variance: float = 0.95
    tau_percentile: float = 95.0
    grid_cells_per_dim: int | None = None  # None: sized from the enrollment sample
    # evaluation
    variance_caps: tuple = (2.0, 4.0, 6.0, math.inf)
    min_subject_periods: int = 20
    train_fraction: float = 0.8
    # run plumbing
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    data: tuple = field(default_factory=tuple)  # input signal paths

    def __post_init__(self):
        object.__setattr__(self, "variance_caps", tuple(float(c) for c in self.variance_caps))
        object.__setattr__(self, "data", tuple(str(p) for p in self.data))
        object.__setattr__(self, "duration_bounds_s", tuple(float(b) for b in self.duration_bounds_s))
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must be in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        d = dict(d)
        if "variance_caps" in d:
            d["variance_caps"] = [math.inf if c in (None, "inf", "Infinity") else c for c in d["variance_caps"]]
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path=None, **overrides) -> "PipelineConfig":
        """File values, then the seed env var if the file has none, then ``overrides``."""
        base = {}
        if path is not None:
            try:
                base = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            if not isinstance(base, dict):
                raise ConfigError("config file must hold a JSON object")
        if "seed" not in base and os.environ.get(SEED_ENV):
            try:
                base["seed"] = int(os.environ[SEED_ENV])
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer") from None
        cfg = cls.from_dict(base)
        overrides = {k: v for k, v in overrides.items() if v is not None}
        return replace(cfg, **overrides) if overrides else cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variance_caps"] = ["inf" if math.isinf(c) else c for c in self.variance_caps]
        d["data"] = list(self.data)
        d["duration_bounds_s"] = list(self.duration_bounds_s)
        return d
