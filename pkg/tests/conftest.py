"""Shared fixtures: seeded training data, fitted model, session files."""

from __future__ import annotations

import random

import pytest

from mugeetion.emotion import fit_model
from mugeetion.faceosc import FEATURE_NAMES
from mugeetion.session import CSV_HEADER, load_training_csv, record

# Class centers in feature space. The happy face averages follow the
# published FaceOSC feature statistics for smiles; neutral and sad are
# plausible well-separated centers chosen for fixture stability.
CLASS_CENTERS = {
    "happy": {
        "mouth_width": 18.2263, "mouth_height": 2.3777,
        "eyebrow_left": 7.8, "eyebrow_right": 7.8,
        "eye_left": 2.6605, "eye_right": 2.6605,
        "jaw": 21.0, "nostrils": 7.0,
    },
    "neutral": {
        "mouth_width": 11.5, "mouth_height": 1.35,
        "eyebrow_left": 7.4, "eyebrow_right": 7.4,
        "eye_left": 2.95, "eye_right": 2.95,
        "jaw": 20.5, "nostrils": 7.2,
    },
    "sad": {
        "mouth_width": 8.2, "mouth_height": 1.0,
        "eyebrow_left": 6.95, "eyebrow_right": 6.95,
        "eye_left": 2.55, "eye_right": 2.55,
        "jaw": 20.0, "nostrils": 6.5,
    },
}

# Per-feature jitter half-widths; small enough that the three classes
# stay disjoint in AU space.
JITTER = {
    "mouth_width": 0.5, "mouth_height": 0.15,
    "eyebrow_left": 0.08, "eyebrow_right": 0.08,
    "eye_left": 0.05, "eye_right": 0.05,
    "jaw": 0.3, "nostrils": 0.15,
}

TRAIN_SEED = 42
SAMPLES_PER_LABEL = 20


def make_training_rows(n_per_label: int = SAMPLES_PER_LABEL,
                       seed: int = TRAIN_SEED):
    rng = random.Random(seed)
    rows = []
    for label in ("happy", "neutral", "sad"):
        for _ in range(n_per_label):
            values = [CLASS_CENTERS[label][f] + rng.uniform(-JITTER[f], JITTER[f])
                      for f in FEATURE_NAMES]
            rows.append((label, values))
    return rows


def training_csv_text(rows=None) -> str:
    rows = rows if rows is not None else make_training_rows()
    lines = [",".join(CSV_HEADER)]
    for label, values in rows:
        lines.append(",".join([label] + [repr(v) for v in values]))
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def training_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("training") / "training.csv"
    path.write_text(training_csv_text(), encoding="utf-8")
    return str(path)


@pytest.fixture(scope="session")
def fitted_model(training_csv):
    return fit_model(load_training_csv(training_csv))


@pytest.fixture(scope="session")
def happy_session(tmp_path_factory, fitted_model):
    """A 2-second recorded happy stream."""
    from mugeetion.session import synth_gestures

    path = tmp_path_factory.mktemp("sessions") / "happy.jsonl"
    frames = synth_gestures("happy", 2000, 11, fitted_model)
    record(frames, str(path), source="fixture", created="2026-01-01T00:00:00Z")
    return str(path)


def as_ref_model(model):
    """EmotionModel -> the plain-dict shape the reference scorer takes."""
    return [(label, {r.au: (r.lo, r.hi, r.mean) for r in ranges})
            for label, ranges in model.emotions]
