"""Duration tolerance factors and the duration mismatch term.

A fitted table maps (phone, speed bucket) to a tolerance T = mean + 1.5 *
population std of the absolute duration error seen for that cell, with
per-phone and global fallbacks for sparse cells. The mismatch of an
observed phone is then |aligned - predicted| - T; negative means the
duration is within normal variation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import DataError

DEFAULT_BUCKET_WIDTH = 1.0
DEFAULT_BUCKET_RANGE = (2, 20)
MIN_CELL_COUNT = 5
STD_WEIGHT = 1.5


@dataclass(frozen=True)
class BalanceRecord:
    """Durations of one utterance: aligned truth vs model prediction."""

    phones: tuple[int, ...]
    aligned: tuple[float, ...]
    predicted: tuple[float, ...]
    speed: float

    def __post_init__(self):
        object.__setattr__(self, "phones", tuple(int(p) for p in self.phones))
        object.__setattr__(self, "aligned", tuple(float(d) for d in self.aligned))
        object.__setattr__(self, "predicted",
                           tuple(float(d) for d in self.predicted))
        if not self.phones:
            raise DataError("balance record has no phones")
        if not len(self.phones) == len(self.aligned) == len(self.predicted):
            raise DataError("balance record fields differ in length")
        if any(d <= 0 for d in self.aligned + self.predicted):
            raise DataError("durations must be positive")
        if self.speed <= 0:
            raise DataError(f"speed must be positive, got {self.speed}")


def speed_bucket(
    speed: float,
    bucket_width: float = DEFAULT_BUCKET_WIDTH,
    bucket_range: tuple[int, int] = DEFAULT_BUCKET_RANGE,
) -> int:
    """Clamped round-half-up bucket index for a speed in frames."""
    if bucket_width <= 0:
        raise DataError(f"bucket_width must be positive, got {bucket_width}")
    lo, hi = bucket_range
    if lo > hi:
        raise DataError(f"bucket_range is inverted: {bucket_range}")
    # floor(x + 0.5) rather than round(): no banker's rounding surprises
    index = int(math.floor(speed / bucket_width + 0.5))
    return min(hi, max(lo, index))


@dataclass(frozen=True)
class BalanceTable:
    entries: Mapping[tuple[int, int], float]
    phone_backoff: Mapping[int, float]
    global_backoff: float
    bucket_width: float = DEFAULT_BUCKET_WIDTH
    bucket_range: tuple[int, int] = DEFAULT_BUCKET_RANGE

    def __post_init__(self):
        for t in list(self.entries.values()) + list(self.phone_backoff.values()):
            if t < 0 or not np.isfinite(t):
                raise DataError(f"tolerance must be finite and >= 0, got {t}")
        if self.global_backoff < 0 or not np.isfinite(self.global_backoff):
            raise DataError(
                f"global tolerance must be finite and >= 0, got {self.global_backoff}"
            )


def _tolerance(errors: Sequence[float]) -> float:
    # Sorting first makes the sum independent of corpus record order.
    arr = np.sort(np.asarray(errors, dtype=np.float64))
    return float(arr.mean() + STD_WEIGHT * arr.std())


def fit_balance_table(
    records: Sequence[BalanceRecord],
    bucket_width: float = DEFAULT_BUCKET_WIDTH,
    bucket_range: tuple[int, int] = DEFAULT_BUCKET_RANGE,
    min_count: int = MIN_CELL_COUNT,
) -> BalanceTable:
    """Fit per-(phone, speed-bucket) tolerances with two-level backoff.

    Cells with fewer than min_count observations are dropped; lookups for
    them fall back to the phone-level tolerance and then to the global one.
    """
    if not records:
        raise DataError("cannot fit a balance table from an empty corpus")
    if min_count < 1:
        raise DataError(f"min_count must be >= 1, got {min_count}")
    by_cell: dict[tuple[int, int], list[float]] = {}
    by_phone: dict[int, list[float]] = {}
    everything: list[float] = []
    for rec in records:
        bucket = speed_bucket(rec.speed, bucket_width, bucket_range)
        for phone, d_align, d_pred in zip(rec.phones, rec.aligned, rec.predicted):
            err = abs(d_align - d_pred)
            by_cell.setdefault((phone, bucket), []).append(err)
            by_phone.setdefault(phone, []).append(err)
            everything.append(err)
    entries = {
        cell: _tolerance(errs)
        for cell, errs in by_cell.items()
        if len(errs) >= min_count
    }
    phone_backoff = {phone: _tolerance(errs) for phone, errs in by_phone.items()}
    return BalanceTable(
        entries=entries,
        phone_backoff=phone_backoff,
        global_backoff=_tolerance(everything),
        bucket_width=bucket_width,
        bucket_range=bucket_range,
    )


def lookup_tolerance(table: BalanceTable, phone: int, speed: float) -> float:
    """Cell tolerance, else phone backoff, else the global value."""
    bucket = speed_bucket(speed, table.bucket_width, table.bucket_range)
    cell = table.entries.get((phone, bucket))
    if cell is not None:
        return cell
    phone_level = table.phone_backoff.get(phone)
    if phone_level is not None:
        return phone_level
    return table.global_backoff


def delta(d_align: float, d_pred: float, tolerance: float) -> float:
    """Duration mismatch |d_align - d_pred| - tolerance; negative is normal."""
    return abs(d_align - d_pred) - tolerance
