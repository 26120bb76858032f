"""Shared helpers for building posteriorgrams and segments in tests."""

import numpy as np

from cagop import Posteriorgram


def make_pg(rows, frame_shift_ms=30.0):
    return Posteriorgram(np.asarray(rows, dtype=np.float64), frame_shift_ms)


def random_pg(rng, num_frames, num_phones, frame_shift_ms=30.0):
    """Dirichlet rows: valid distributions with varied entropy."""
    alpha = rng.uniform(0.3, 4.0)
    probs = rng.dirichlet(np.full(num_phones, alpha), size=num_frames)
    return Posteriorgram(probs, frame_shift_ms)
