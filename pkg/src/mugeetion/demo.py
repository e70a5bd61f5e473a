"""A built-in emotion model for running without fitting anything first.

Ranges are hand-set around plausible class centers rather than fitted
from data; they are deliberately narrow and well separated so the three
classes never overlap. Fit a real model from your own calibration CSV
for anything beyond a quick demo.
"""

from __future__ import annotations

from .emotion import AURange, EmotionModel, default_extraction_table
from .faceosc import FEATURE_RANGES

_EYEBROW_REFLECT = sum(FEATURE_RANGES["eyebrow_left"]) / 2 \
    + sum(FEATURE_RANGES["eyebrow_right"]) / 2  # 14.7476
_MW_REFLECT = sum(FEATURE_RANGES["mouth_width"])  # 25.2991

# (center, half-width) per AU, per label; sad centers mirror each other
# through the calibration spans so synthetic sad faces stay consistent.
_SAD_BROW = 6.95
_SAD_MW = 8.2
_CENTERS = {
    "happy": {6: (2.6605, 0.12), 12: (18.2263, 1.2), 25: (2.3777, 0.35)},
    "neutral": {6: (2.95, 0.12), 12: (11.5, 1.2), 25: (1.35, 0.35)},
    "sad": {1: (_SAD_BROW, 0.2),
            4: (_EYEBROW_REFLECT - _SAD_BROW, 0.2),
            15: (_MW_REFLECT - _SAD_MW, 1.2)},
}


def demo_model() -> EmotionModel:
    table = default_extraction_table()
    emotions = []
    for label in ("happy", "neutral", "sad"):
        ranges = tuple(
            AURange(au=au, lo=c - w, hi=c + w, mean=c)
            for au, (c, w) in _CENTERS[label].items())
        emotions.append((label, ranges))
    return EmotionModel(emotions=tuple(emotions), table=table, sample_counts={})
