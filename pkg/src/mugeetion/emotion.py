"""Action-unit extraction, range models, and the emotion classifier.

The model is deliberately simple and auditable: per emotion, per action
unit, a (min, max, mean) range fitted from labeled frames. A frame is
scored against each emotion by how far its action units sit outside the
fitted ranges (zero inside), normalized by range width so units cancel;
the smallest score wins. Ties fall back to normalized distance from the
range means, then to declaration order (happy, neutral, sad).

Scores are plain floats over plain dicts; everything here is pure and a
fitted model is immutable, so values can be shared freely across threads.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field

from .faceosc import FEATURE_NAMES, FEATURE_RANGES, FacialFrame

LABELS = ("happy", "neutral", "sad")
MODEL_FORMAT_VERSION = 1
RANGE_EPSILON = 1e-3  # widening applied to degenerate ranges, FaceOSC units

# Action units FaceOSC features stand in for; happy must keep 6, 12, 25.
AU_CHEEK_RAISER = 6
AU_LIP_CORNER_PULLER = 12
AU_LIPS_PART = 25
AU_INNER_BROW_RAISER = 1
AU_BROW_LOWERER = 4
AU_LIP_CORNER_DEPRESSOR = 15


class EmotionError(Exception):
    pass


class MissingFeature(EmotionError):
    """Extraction table references a feature the frame type lacks."""


class InsufficientSamples(EmotionError):
    pass


class MissingLabel(EmotionError):
    pass


class MissingAU(EmotionError):
    pass


class UnknownLabel(EmotionError):
    pass


class ModelFormatError(EmotionError):
    """Model document is structurally invalid or has the wrong version."""


@dataclass(frozen=True)
class AUVector:
    scores: dict[int, float]
    timestamp: float


@dataclass(frozen=True)
class AUEntry:
    """One extraction rule: an action unit fed by one or two features.

    Two source features are averaged. Inverted polarity reflects each
    source inside its calibration span before averaging, so a low raw
    value yields a high activation.
    """

    au: int
    source: tuple[str, ...]
    polarity: str = "direct"

    def __post_init__(self):
        src = (self.source,) if isinstance(self.source, str) else tuple(self.source)
        object.__setattr__(self, "source", src)
        if self.polarity not in ("direct", "inverted"):
            raise ValueError(f"polarity must be direct or inverted, got {self.polarity!r}")
        if not 1 <= len(src) <= 2:
            raise ValueError("source must name one or two features")
        for name in src:
            if name not in FEATURE_NAMES:
                raise MissingFeature(f"unknown feature {name!r} for AU{self.au}")


@dataclass(frozen=True)
class AUExtractionTable:
    """Extraction rules plus the AU set each emotion is judged on."""

    entries: tuple[AUEntry, ...]
    emotion_aus: dict[str, tuple[int, ...]]
    table_id: str = "default"

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "emotion_aus",
                           {k: tuple(v) for k, v in self.emotion_aus.items()})
        ids = [e.au for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate AU ids in table: {sorted(ids)}")
        known = set(ids)
        for label, aus in self.emotion_aus.items():
            if label not in LABELS:
                raise UnknownLabel(f"emotion_aus references unknown label {label!r}")
            missing = [a for a in aus if a not in known]
            if missing:
                raise ValueError(f"{label} uses AUs with no extraction entry: {missing}")
        for label in LABELS:
            if label not in self.emotion_aus:
                raise MissingLabel(f"table has no AU set for {label!r}")

    def entry(self, au: int) -> AUEntry:
        for e in self.entries:
            if e.au == au:
                return e
        raise KeyError(au)

    def to_dict(self) -> dict:
        return {
            "id": self.table_id,
            "entries": [
                {"au": e.au, "source": list(e.source), "polarity": e.polarity}
                for e in self.entries
            ],
            "emotion_aus": {k: list(v) for k, v in self.emotion_aus.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AUExtractionTable":
        try:
            entries = tuple(
                AUEntry(au=int(e["au"]), source=tuple(_as_sources(e["source"])),
                        polarity=e.get("polarity", "direct"))
                for e in doc["entries"]
            )
            emotion_aus = {k: tuple(int(a) for a in v)
                           for k, v in doc["emotion_aus"].items()}
            return cls(entries=entries, emotion_aus=emotion_aus,
                       table_id=str(doc.get("id", "custom")))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, EmotionError):
                raise
            raise ModelFormatError(f"bad extraction table: {e}") from None


def _as_sources(value) -> list[str]:
    return [value] if isinstance(value, str) else list(value)


def default_extraction_table() -> AUExtractionTable:
    """Factory table: smile units from mouth and eyes, sadness units from
    brows and mouth narrowing."""
    smile_set = (AU_CHEEK_RAISER, AU_LIP_CORNER_PULLER, AU_LIPS_PART)
    return AUExtractionTable(
        entries=(
            AUEntry(AU_CHEEK_RAISER, ("eye_left", "eye_right")),
            AUEntry(AU_LIP_CORNER_PULLER, ("mouth_width",)),
            AUEntry(AU_LIPS_PART, ("mouth_height",)),
            AUEntry(AU_INNER_BROW_RAISER, ("eyebrow_left", "eyebrow_right")),
            AUEntry(AU_BROW_LOWERER, ("eyebrow_left", "eyebrow_right"), "inverted"),
            AUEntry(AU_LIP_CORNER_DEPRESSOR, ("mouth_width",), "inverted"),
        ),
        emotion_aus={
            "happy": smile_set,
            "neutral": smile_set,
            "sad": (AU_INNER_BROW_RAISER, AU_BROW_LOWERER, AU_LIP_CORNER_DEPRESSOR),
        },
        table_id="default",
    )


def extract_aus(frame: FacialFrame, table: AUExtractionTable) -> AUVector:
    """Score every table entry against one frame.

    Requires a frame with the face found; the pipeline skips extraction
    while the face is lost.
    """
    if not frame.face_found:
        raise ValueError("cannot extract action units from a face-lost frame")
    scores: dict[int, float] = {}
    for e in table.entries:
        vals = []
        for name in e.source:
            x = getattr(frame, name)
            if e.polarity == "inverted":
                lo, hi = FEATURE_RANGES[name]
                x = hi + lo - x
            vals.append(x)
        scores[e.au] = sum(vals) / len(vals)
    return AUVector(scores=scores, timestamp=frame.timestamp)


@dataclass(frozen=True)
class AURange:
    au: int
    lo: float
    hi: float
    mean: float

    def __post_init__(self):
        if not self.lo <= self.mean <= self.hi:
            raise ValueError(f"AU{self.au}: need min <= mean <= max, "
                             f"got {self.lo}/{self.mean}/{self.hi}")
        if not self.hi - self.lo > 0:
            raise ValueError(f"AU{self.au}: empty range after widening")


@dataclass(frozen=True)
class EmotionModel:
    """Per-emotion AU ranges plus the table that produced the AUs."""

    emotions: tuple[tuple[str, tuple[AURange, ...]], ...]
    table: AUExtractionTable
    sample_counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        labels = [label for label, _ in self.emotions]
        if tuple(labels) != LABELS:
            raise ValueError(f"model must declare emotions {LABELS}, got {labels}")
        happy_aus = {r.au for r in dict(self.emotions)["happy"]}
        required = {AU_CHEEK_RAISER, AU_LIP_CORNER_PULLER, AU_LIPS_PART}
        if not required <= happy_aus:
            raise ValueError(f"happy must keep AUs {sorted(required)}, has {sorted(happy_aus)}")

    def ranges(self, label: str) -> tuple[AURange, ...]:
        for candidate, ranges in self.emotions:
            if candidate == label:
                return ranges
        raise UnknownLabel(label)

    @property
    def all_aus(self) -> set[int]:
        return {r.au for _, ranges in self.emotions for r in ranges}

    def to_json(self) -> str:
        """Canonical single-document form; byte-stable for equal models."""
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "extraction_table": self.table.to_dict(),
            "emotions": [
                {"label": label,
                 "ranges": [{"au": r.au, "min": r.lo, "max": r.hi, "mean": r.mean}
                            for r in ranges]}
                for label, ranges in self.emotions
            ],
            "sample_counts": dict(self.sample_counts),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "EmotionModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"model is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ModelFormatError("model document must be a JSON object")
        version = doc.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format_version {version!r}")
        try:
            table = AUExtractionTable.from_dict(doc["extraction_table"])
            emotions = tuple(
                (entry["label"],
                 tuple(AURange(au=int(r["au"]), lo=float(r["min"]),
                               hi=float(r["max"]), mean=float(r["mean"]))
                       for r in entry["ranges"]))
                for entry in doc["emotions"]
            )
            counts = {k: int(v) for k, v in doc.get("sample_counts", {}).items()}
        except (KeyError, TypeError, ValueError) as e:
            raise ModelFormatError(f"bad model document: {e}") from None
        return cls(emotions=emotions, table=table, sample_counts=counts)


def load_model(path: str) -> EmotionModel:
    with open(path, encoding="utf-8") as f:
        return EmotionModel.from_json(f.read())


def save_model(model: EmotionModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(model.to_json())
        f.write("\n")


def fit_model(samples: list[tuple[FacialFrame, str]],
              table: AUExtractionTable | None = None) -> EmotionModel:
    """Fit per-emotion AU ranges from labeled frames.

    Needs all three labels and at least two samples each. A degenerate
    range (every sample identical) is widened to mean +/- RANGE_EPSILON so
    the normalized distances stay defined.
    """
    table = table or default_extraction_table()
    by_label: dict[str, list[AUVector]] = {label: [] for label in LABELS}
    for frame, label in samples:
        if label not in by_label:
            raise UnknownLabel(f"sample labeled {label!r}; expected one of {LABELS}")
        by_label[label].append(extract_aus(frame, table))
    for label in LABELS:
        if not by_label[label]:
            raise MissingLabel(f"no samples labeled {label!r}")
        if len(by_label[label]) < 2:
            raise InsufficientSamples(
                f"need at least 2 samples per label, {label!r} has {len(by_label[label])}")
    emotions = []
    for label in LABELS:
        vectors = by_label[label]
        ranges = []
        for au in table.emotion_aus[label]:
            values = [v.scores[au] for v in vectors]
            lo, hi = min(values), max(values)
            mean = sum(values) / len(values)
            if hi == lo:
                lo, hi = mean - RANGE_EPSILON, mean + RANGE_EPSILON
            ranges.append(AURange(au=au, lo=lo, hi=hi, mean=mean))
        emotions.append((label, tuple(ranges)))
    counts = {label: len(by_label[label]) for label in LABELS}
    return EmotionModel(emotions=tuple(emotions), table=table, sample_counts=counts)


@dataclass(frozen=True)
class EmotionState:
    label: str
    scores: dict[str, float]  # per-emotion fit score, lower is better
    timestamp: float

    @property
    def intensity(self) -> float:
        """How strongly the frame fits the winning emotion, in [0, 1]."""
        return min(1.0, max(0.0, 1.0 - min(self.scores.values())))


def _range_score(x: float, r: AURange) -> float:
    if x < r.lo:
        return (r.lo - x) / (r.hi - r.lo)
    if x > r.hi:
        return (x - r.hi) / (r.hi - r.lo)
    return 0.0


def classify(au: AUVector, model: EmotionModel) -> EmotionState:
    """Assign the emotion whose fitted ranges the AU vector fits best.

    Raises MissingAU when the vector lacks an AU the model scores.
    """
    for needed in sorted(model.all_aus):
        if needed not in au.scores:
            raise MissingAU(f"AU{needed} missing from vector")
    scores: dict[str, float] = {}
    mean_dists: dict[str, float] = {}
    for label, ranges in model.emotions:
        total = 0.0
        dist = 0.0
        for r in ranges:
            x = au.scores[r.au]
            total += _range_score(x, r)
            dist += abs(x - r.mean) / (r.hi - r.lo)
        scores[label] = total / len(ranges)
        mean_dists[label] = dist / len(ranges)
    best = min(scores.values())
    tied = [label for label, _ in model.emotions if scores[label] == best]
    if len(tied) > 1:
        best_dist = min(mean_dists[label] for label in tied)
        tied = [label for label in tied if mean_dists[label] == best_dist]
    return EmotionState(label=tied[0], scores=scores, timestamp=au.timestamp)


class LabelSmoother:
    """Majority filter over the last ``window`` states.

    Scores and timestamp pass through from the newest input; only the
    label is smoothed. Ties keep the previous output label when it is
    among the tied candidates, else fall back to declaration order.
    """

    def __init__(self, window: int = 5):
        self._window = _check_window(window)
        self._buffer: deque[str] = deque(maxlen=self._window)
        self._previous: str | None = None

    @property
    def window(self) -> int:
        return self._window

    def set_window(self, window: int) -> None:
        self._window = _check_window(window)
        recent = list(self._buffer)[-self._window:]
        self._buffer = deque(recent, maxlen=self._window)

    def feed(self, state: EmotionState) -> EmotionState:
        self._buffer.append(state.label)
        counts = Counter(self._buffer)
        top = max(counts.values())
        tied = [label for label in LABELS if counts.get(label) == top]
        if self._previous in tied:
            label = self._previous
        else:
            label = tied[0]
        self._previous = label
        if label == state.label:
            return state
        return EmotionState(label=label, scores=state.scores, timestamp=state.timestamp)


def _check_window(window: int) -> int:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"smoothing window must be odd and >= 1, got {window}")
    return window


def smooth(states, window: int = 5):
    """Offline convenience: smooth a finite state stream into a list."""
    smoother = LabelSmoother(window)
    return [smoother.feed(s) for s in states]
