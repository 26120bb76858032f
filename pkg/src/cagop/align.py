"""Forced alignment of a phone sequence onto a posteriorgram.

Alignment maximizes the summed log posterior of the assigned phones over a
monotone segmentation, directly on posterior rows (no transition model).
Optional silence segments may be inserted before, between, and after the
mandatory phones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import (
    PROB_FLOOR,
    Alignment,
    DataError,
    PhoneSegment,
    Posteriorgram,
    slice_segment,
)


@dataclass(frozen=True)
class AlignConfig:
    """Aligner knobs.

    silence_self_loop_penalty is added (log domain) for every frame spent
    inside a silence segment; 0 leaves silences unpenalized. silence_index
    selects the posterior column used for inserted silences and must be set
    whenever allow_optional_silence is.
    """

    allow_optional_silence: bool = False
    min_segment_frames: int = 1
    silence_self_loop_penalty: float = 0.0
    silence_index: Optional[int] = None

    def __post_init__(self):
        if self.min_segment_frames < 1:
            raise DataError(
                f"min_segment_frames must be >= 1, got {self.min_segment_frames}"
            )


@dataclass(frozen=True)
class _Element:
    phone: int
    min_len: int
    optional: bool
    is_silence: bool


def _expand_elements(phones: Sequence[int], cfg: AlignConfig) -> list[_Element]:
    elements: list[_Element] = []
    if cfg.allow_optional_silence:
        if cfg.silence_index is None:
            raise DataError("allow_optional_silence requires silence_index")
        sil = _Element(cfg.silence_index, 1, True, True)
        elements.append(sil)
        for p in phones:
            elements.append(_Element(p, cfg.min_segment_frames, False, False))
            elements.append(sil)
    else:
        elements = [
            _Element(p, cfg.min_segment_frames, False, False) for p in phones
        ]
    return elements


def align(
    pg: Posteriorgram, phones: Sequence[int], cfg: AlignConfig = AlignConfig()
) -> Alignment:
    """Best monotone segmentation of ``phones`` over the posteriorgram.

    Each mandatory phone occupies at least ``cfg.min_segment_frames``
    contiguous frames; inserted silences occupy at least one. Score ties are
    broken toward the earliest boundary, and toward omitting an optional
    silence when inserting it does not improve the score.
    """
    phones = list(phones)
    if not phones:
        raise DataError("cannot align an empty phone sequence")
    for p in phones:
        if not 0 <= p < pg.num_phones:
            raise DataError(f"phone index {p} outside posteriorgram columns")
    num_frames = pg.num_frames
    needed = len(phones) * cfg.min_segment_frames
    if num_frames < needed:
        raise DataError(
            f"infeasible: {len(phones)} phones need >= {needed} frames, "
            f"posteriorgram has {num_frames}"
        )

    elements = _expand_elements(phones, cfg)
    log_probs = np.log(np.maximum(pg.probs, PROB_FLOOR))

    # best[i][t]: best score covering frames [0, t) with elements 0..i-1 done.
    neg_inf = -np.inf
    best = np.full((len(elements) + 1, num_frames + 1), neg_inf)
    best[0, 0] = 0.0
    cum_by_element = []
    for i, el in enumerate(elements):
        frame_scores = log_probs[:, el.phone]
        if el.is_silence and cfg.silence_self_loop_penalty != 0.0:
            frame_scores = frame_scores + cfg.silence_self_loop_penalty
        cum = np.concatenate(([0.0], np.cumsum(frame_scores)))
        cum_by_element.append(cum)
        entry = best[i] - cum
        prefix_best = np.maximum.accumulate(entry)
        row = best[i + 1]
        row[el.min_len :] = cum[el.min_len :] + prefix_best[: num_frames + 1 - el.min_len]
        if el.optional:
            np.maximum(row, best[i], out=row)

    if not np.isfinite(best[-1, -1]):
        raise DataError("infeasible: no legal segmentation")

    segments: list[PhoneSegment] = []
    t = num_frames
    for i in range(len(elements) - 1, -1, -1):
        el = elements[i]
        if el.optional and best[i, t] == best[i + 1, t]:
            continue  # tie prefers no silence segment
        entry = best[i, : t - el.min_len + 1] - cum_by_element[i][: t - el.min_len + 1]
        start = int(np.argmax(entry))  # first occurrence: earliest boundary
        segments.append(PhoneSegment(el.phone, start, t - start))
        t = start
    segments.reverse()
    return Alignment(tuple(segments))


def alignment_log_score(pg: Posteriorgram, al: Alignment) -> float:
    """Sum of floored log posteriors of each segment's phone over its frames."""
    total = 0.0
    for seg in al.segments:
        rows = slice_segment(pg, seg)
        total += float(np.sum(np.log(np.maximum(rows[:, seg.phone], PROB_FLOOR))))
    return total
