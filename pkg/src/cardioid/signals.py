"""Signal containers and ingestion from sample files and decoded camera frames."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyFrameSequence,
    MalformedInput,
    NonMonotonicTime,
    TooShort,
)

RATE_HEADER = "sample_rate_hz="
# fraction of the frame's total intensity the red channel must exceed
RED_DOMINANCE = 0.8


@dataclass(frozen=True)
class PpgSignal:
    """Uniformly sampled scalar time series."""

    samples: np.ndarray
    sample_rate_hz: float
    subject_id: str | None = None
    t0: float | None = None

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float).ravel()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        rate = float(self.sample_rate_hz)
        if not np.isfinite(rate) or rate <= 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "sample_rate_hz", rate)
        if samples.size < 2:
            raise TooShort(f"need at least 2 samples, got {samples.size}")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return (self.samples.size - 1) / self.sample_rate_hz

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate_hz

    def with_samples(self, samples) -> "PpgSignal":
        """Same rate and identity, new sample values."""
        return PpgSignal(samples, self.sample_rate_hz, self.subject_id, self.t0)


@dataclass(frozen=True)
class RgbFrame:
    """One decoded camera frame, pixels stored row-major as (red, green, blue)."""

    width: int
    height: int
    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DimensionMismatch("frame width and height must be positive")
        px = np.asarray(self.pixels, dtype=float).reshape(-1, 3)
        if px.shape[0] != self.width * self.height:
            raise DimensionMismatch(
                f"expected {self.width * self.height} pixels, got {px.shape[0]}"
            )
        if np.any(px < 0):
            raise ValueError("pixel intensities must be non-negative")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, image) -> "RgbFrame":
        """Build from an ``(height, width, 3)`` array."""
        image = np.asarray(image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise DimensionMismatch(f"expected (h, w, 3) image, got shape {image.shape}")
        return cls(width=image.shape[1], height=image.shape[0], pixels=image.reshape(-1, 3))


def _from_timestamps(t: np.ndarray, v: np.ndarray, subject_id: str | None) -> PpgSignal:
    if t.size < 2:
        raise TooShort(f"need at least 2 samples, got {t.size}")
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad = int(np.argmax(dt <= 0)) + 1
        raise NonMonotonicTime(f"timestamp at row {bad} does not increase ({t[bad]} after {t[bad - 1]})")
    step = float(np.median(dt))
    rate = 1.0 / step
    if np.allclose(dt, step, rtol=1e-6, atol=0.0):
        return PpgSignal(v, rate, subject_id, float(t[0]))
    n = int(np.floor((t[-1] - t[0]) / step + 1e-9)) + 1
    grid = t[0] + np.arange(n) * step
    return PpgSignal(np.interp(grid, t, v), rate, subject_id, float(t[0]))


def _parse_float(text: str, lineno: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise MalformedInput(f"line {lineno}: cannot parse {text!r} as a number") from None


def load_signal(path, fmt: str | None = None, subject_id: str | None = None) -> PpgSignal:
    """Read a signal from CSV or JSONL.

    CSV files either start with a ``sample_rate_hz=<rate>`` line followed by one
    value per row, or hold ``t_seconds,value`` rows (an optional literal column
    header is skipped). JSONL holds one ``{"t": ..., "v": ...}`` object per line.
    Irregular timestamps are linearly resampled to the median rate.
    """
    path = Path(path)
    if fmt is None:
        fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    if subject_id is None:
        subject_id = path.stem
    if fmt == "jsonl":
        return _load_jsonl(path, subject_id)
    if fmt == "csv":
        return _load_csv(path, subject_id)
    raise ValueError(f"unknown format {fmt!r}")


def _load_csv(path: Path, subject_id: str | None) -> PpgSignal:
    with path.open(newline="") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if row and any(c.strip() for c in row)]
    if not rows:
        raise TooShort(f"{path}: empty file")
    first = rows[0][1][0].strip()
    if first.startswith(RATE_HEADER):
        rate = _parse_float(first[len(RATE_HEADER):], rows[0][0])
        if rate <= 0:
            raise MalformedInput(f"{path}: sample rate must be positive")
        values = [_parse_float(row[-1].strip(), lineno) for lineno, row in rows[1:]]
        if len(values) < 2:
            raise TooShort(f"{path}: need at least 2 samples, got {len(values)}")
        return PpgSignal(values, rate, subject_id)
    if first.lower() in ("t", "t_seconds", "time"):
        rows = rows[1:]
    t, v = [], []
    for lineno, row in rows:
        if len(row) < 2:
            raise MalformedInput(f"{path}: line {lineno}: expected 't_seconds,value'")
        t.append(_parse_float(row[0].strip(), lineno))
        v.append(_parse_float(row[1].strip(), lineno))
    return _from_timestamps(np.asarray(t), np.asarray(v), subject_id)


def _load_jsonl(path: Path, subject_id: str | None) -> PpgSignal:
    t, v = [], []
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t.append(float(rec["t"]))
                v.append(float(rec["v"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise MalformedInput(f"{path}: line {lineno}: expected {{\"t\": ..., \"v\": ...}}") from None
    return _from_timestamps(np.asarray(t), np.asarray(v), subject_id)


def save_signal(sig: PpgSignal, path) -> None:
    """Write ``sig`` as a rate-header CSV readable by :func:`load_signal`."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"{RATE_HEADER}{float(sig.sample_rate_hz)!r}\n")
        for x in sig.samples:
            fh.write(f"{float(x)!r}\n")


def frame_sample(frame: RgbFrame) -> float | None:
    """Mean red intensity over red-dominant pixels, or None if there are none."""
    red = frame.pixels[:, 0]
    keep = red > RED_DOMINANCE * frame.pixels.sum(axis=1)
    if not keep.any():
        return None
    return float(red[keep].mean())


def frames_to_signal(
    frames: Sequence[RgbFrame] | Iterable[RgbFrame], fps: float, subject_id: str | None = None
) -> tuple[PpgSignal, int]:
    """Average the red channel over red-dominant pixels, one sample per frame.

    A pixel is kept when ``red > 0.8 * (red + green + blue)``. Frames without a
    single qualifying pixel repeat the previous sample (the very first frame falls
    back to the mean red of all its pixels); the number of such frames is
    returned alongside the signal.
    """
    frames = list(frames)
    if not frames:
        raise EmptyFrameSequence("no frames given")
    if not fps > 0:
        raise ValueError(f"fps must be positive, got {fps}")
    w, h = frames[0].width, frames[0].height
    out = np.empty(len(frames))
    dropouts = 0
    for i, fr in enumerate(frames):
        if (fr.width, fr.height) != (w, h):
            raise DimensionMismatch(f"frame {i} is {fr.width}x{fr.height}, expected {w}x{h}")
        value = frame_sample(fr)
        if value is None:
            dropouts += 1
            value = out[i - 1] if i > 0 else fr.pixels[:, 0].mean()
        out[i] = value
    if out.size < 2:
        # a single frame is a valid capture but not a valid signal
        raise TooShort("need at least 2 frames")
    return PpgSignal(out, fps, subject_id), dropouts
