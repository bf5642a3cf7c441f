"""Dataset ingestion, chronological splitting, sliding windows, instance normalization.

CSV layout: header row, first column named ``date`` (ISO-8601 strings), remaining
columns numeric.  All values are parsed as float64.  Splits are chronological;
val/test segments borrow `lookback` steps of context from the preceding segment
so that every target point in a segment can be forecast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class Dataset:
    name: str
    timestamps: tuple[str, ...]
    values: np.ndarray  # [T_total, N] float64
    frequency_hint: str = ""

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError(f"values must be 2-D, got ndim={v.ndim}")
        if v.shape[0] < 2:
            raise ValueError("dataset needs at least 2 time steps")
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise ValueError(f"non-finite value at row {bad[0]}, column {bad[1]}")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2
    lookback: int = 96
    horizon: int = 96

    def __post_init__(self):
        total = self.train_frac + self.val_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {total}, expected 1")
        for f in (self.train_frac, self.val_frac, self.test_frac):
            if not 0.0 <= f <= 1.0:
                raise ValueError("split fractions must lie in [0, 1]")
        if self.lookback < 1 or self.horizon < 1:
            raise ValueError("lookback and horizon must be positive")


@dataclass(frozen=True)
class Segment:
    """Contiguous slice of a dataset, possibly extended backward for context.

    `start`/`end` are the segment's own (target) index range in the source
    series; `values` additionally contains `context_pad` leading steps borrowed
    from the preceding segment, used only to build windows whose targets lie
    inside [start, end).
    """

    values: np.ndarray
    start: int
    end: int
    context_pad: int = 0

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TimeSeriesWindow:
    """One sliding window: raw context/target plus per-variable context statistics."""

    context: np.ndarray  # [T, N]
    target: np.ndarray  # [H, N]
    mean: np.ndarray  # [N]
    std: np.ndarray  # [N], population convention, floored at SIGMA_FLOOR
    norm_const: float = 1.0


def load_csv(path, name: str | None = None) -> Dataset:
    """Parse an ETT-format CSV into a Dataset.

    First header column must be a date column; every other column is numeric.
    Raises ValueError naming the offending row/column for non-numeric cells and
    ragged rows.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header_line = fh.readline()
        if not header_line:
            raise ValueError(f"{path}: empty file")
        header = [c.strip() for c in header_line.rstrip("\r\n").split(",")]
        if len(header) < 2:
            raise ValueError(f"{path}: need a date column plus at least one value column")
        n_cols = len(header)
        timestamps: list[str] = []
        rows: list[list[float]] = []
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) != n_cols:
                raise ValueError(
                    f"{path}: ragged row {lineno} has {len(cells)} fields, expected {n_cols}"
                )
            timestamps.append(cells[0].strip())
            parsed = []
            for col, cell in enumerate(cells[1:], start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col}"
                    ) from None
            rows.append(parsed)
    values = np.asarray(rows, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ValueError(f"{path}: need at least 2 data rows")
    return Dataset(
        name=name or path.stem,
        timestamps=tuple(timestamps),
        values=values,
        frequency_hint=_infer_frequency(timestamps),
    )


def _infer_frequency(timestamps) -> str:
    if len(timestamps) < 2:
        return ""
    try:
        t0 = datetime.fromisoformat(timestamps[0])
        t1 = datetime.fromisoformat(timestamps[1])
    except ValueError:
        return ""
    minutes = (t1 - t0).total_seconds() / 60.0
    if minutes <= 0:
        return ""
    if minutes % 60 == 0:
        return f"{int(minutes // 60)}h"
    return f"{int(minutes)}min"


def chronological_split(ds: Dataset, spec: SplitSpec) -> tuple[Segment, Segment, Segment]:
    """Split a dataset into contiguous train/val/test segments in time order.

    Val and test are extended backward by `spec.lookback` steps (window
    construction only); their target ranges stay disjoint from train.
    """
    n = ds.n_steps
    end_train = int(round(spec.train_frac * n))
    end_val = int(round((spec.train_frac + spec.val_frac) * n))
    bounds = [(0, end_train), (end_train, end_val), (end_val, n)]
    segments = []
    for i, (start, end) in enumerate(bounds):
        pad = 0 if i == 0 else min(spec.lookback, start)
        seg = Segment(
            values=ds.values[start - pad : end],
            start=start,
            end=end,
            context_pad=pad,
        )
        if len(seg) < spec.lookback + spec.horizon:
            label = ("train", "val", "test")[i]
            raise ValueError(
                f"{label} segment has {len(seg)} steps, "
                f"needs at least lookback+horizon = {spec.lookback + spec.horizon}"
            )
        segments.append(seg)
    return tuple(segments)


def few_shot_subset(segment: Segment, ratio: float, min_window: int | None = None) -> Segment:
    """Earliest `ratio` fraction of a training segment (prefix, deterministic)."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must lie in (0, 1], got {ratio}")
    if ratio == 1.0:
        return segment
    keep = int(math.floor(ratio * len(segment)))
    if min_window is not None and keep < min_window:
        raise ValueError(
            f"few-shot subset of {keep} steps is shorter than one window ({min_window})"
        )
    if keep < 1:
        raise ValueError("few-shot subset is empty")
    return Segment(
        values=segment.values[:keep],
        start=segment.start,
        end=segment.start + keep - segment.context_pad,
        context_pad=segment.context_pad,
    )


def windows(segment: Segment, T: int, H: int, stride: int = 1, norm_const: float = 1.0):
    """Sliding windows over a segment; count = floor((len-T-H)/stride) + 1.

    Normalization statistics (mean, population std) are computed per window per
    variable over the context only.
    """
    vals = segment.values
    n = vals.shape[0]
    if n < T + H:
        raise ValueError(f"segment of {n} steps too short for T+H = {T + H}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    out = []
    count = (n - T - H) // stride + 1
    for k in range(count):
        s = k * stride
        ctx = vals[s : s + T]
        tgt = vals[s + T : s + T + H]
        mean = ctx.mean(axis=0)
        std = np.maximum(ctx.std(axis=0), SIGMA_FLOOR)  # population convention
        out.append(
            TimeSeriesWindow(
                context=ctx, target=tgt, mean=mean, std=std, norm_const=norm_const
            )
        )
    return out


def normalize(w: TimeSeriesWindow, norm_const: float | None = None) -> np.ndarray:
    """Per-variable z-score of the context, scaled by norm_const."""
    c = w.norm_const if norm_const is None else norm_const
    return (w.context - w.mean) / w.std * c


def normalize_target(w: TimeSeriesWindow, norm_const: float | None = None) -> np.ndarray:
    """Target mapped through the context statistics (training-loss space)."""
    c = w.norm_const if norm_const is None else norm_const
    return (w.target - w.mean) / w.std * c


def denormalize(y_norm: np.ndarray, w: TimeSeriesWindow) -> np.ndarray:
    """Invert `normalize`: y = y'/norm_const * std + mean."""
    return y_norm / w.norm_const * w.std + w.mean


# Component period multipliers for the sinusoid mix; the first entry is the
# nominal period, later entries add a slower and a faster cycle.
_MIX_MULTIPLIERS = (1.0, 3.0, 0.5)


def synth_series(
    kind: str,
    length: int,
    period: int,
    amplitude=1.0,
    noise_std: float = 0.0,
    seed: int = 0,
    name: str | None = None,
) -> Dataset:
    """Deterministic synthetic series.

    kind = "sinusoid_mix": sum of sinusoids with random phases.  A scalar
    `amplitude` gives a single sinusoid at `period`; a sequence of amplitudes
    assigns one component per entry at periods period * (1, 3, 0.5, ...).
    kind = "trend_plus_season": linear ramp (0 -> amplitude over the series)
    plus a sinusoid at `period`.
    kind = "noise": white Gaussian noise only.
    """
    if length < 2 * period:
        raise ValueError(f"length {length} must be at least 2*period = {2 * period}")
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    if kind == "sinusoid_mix":
        amps = np.atleast_1d(np.asarray(amplitude, dtype=np.float64))
        x = np.zeros(length)
        for i, a in enumerate(amps):
            p = period * _MIX_MULTIPLIERS[i % len(_MIX_MULTIPLIERS)]
            phase = rng.uniform(0.0, 2.0 * np.pi)
            x += a * np.sin(2.0 * np.pi * t / p + phase)
    elif kind == "trend_plus_season":
        a = float(np.asarray(amplitude).reshape(-1)[0])
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x = a * t / max(length - 1, 1) + a * np.sin(2.0 * np.pi * t / period + phase)
    elif kind == "noise":
        x = np.zeros(length)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    if noise_std > 0:
        x = x + rng.normal(0.0, noise_std, size=length)
    stamps = tuple(f"t{i:08d}" for i in range(length))
    return Dataset(
        name=name or f"synth_{kind}",
        timestamps=stamps,
        values=x[:, None],
        frequency_hint="1h",
    )
