"""Session recording, timed replay, synthetic gestures, training CSV.

Sessions are JSON-lines: a header object, then one object per frame with
abbreviated keys. Text form keeps sessions diff-able and greppable; at
30 fps even hour-long takes stay small.
"""

from __future__ import annotations

import csv
import json
import math
import random
import time
from typing import Iterable, Iterator

from .emotion import LABELS, EmotionModel, UnknownLabel
from .faceosc import FEATURE_NAMES, FEATURE_RANGES, FacialFrame

SESSION_FORMAT_VERSION = 1
FRAME_PERIOD_MS = 1000.0 / 30.0

# session key -> FacialFrame field
_FIELD_FOR_KEY = {
    "mw": "mouth_width", "mh": "mouth_height",
    "ebl": "eyebrow_left", "ebr": "eyebrow_right",
    "eyl": "eye_left", "eyr": "eye_right",
    "jaw": "jaw", "no": "nostrils",
}
_RECORD_KEYS = ("t_ms", "found", "mw", "mh", "ebl", "ebr", "eyl", "eyr", "jaw", "no")

CSV_HEADER = ("label",) + FEATURE_NAMES


class SessionError(Exception):
    pass


class IoFailure(SessionError):
    pass


class BadHeader(SessionError):
    pass


class NonMonotonicTime(SessionError):
    pass


class BadLabel(SessionError):
    pass


class NonNumericField(SessionError):
    pass


def _record_line(frame: FacialFrame) -> str:
    doc = {"t_ms": frame.timestamp, "found": 1 if frame.face_found else 0}
    for key, field in _FIELD_FOR_KEY.items():
        doc[key] = getattr(frame, field)
    return json.dumps(doc, separators=(",", ":"))


def write_session_header(f, source: str = "live", created: str | None = None) -> None:
    header = {
        "format_version": SESSION_FORMAT_VERSION,
        "created": created if created is not None else _utc_now(),
        "source": source,
    }
    f.write(json.dumps(header, separators=(",", ":")) + "\n")


def dump_session(frames: Iterable[FacialFrame], f, source: str = "live",
                 created: str | None = None) -> int:
    """Write header + one line per frame to an open text stream."""
    write_session_header(f, source=source, created=created)
    count = 0
    for frame in frames:
        f.write(_record_line(frame) + "\n")
        count += 1
    return count


class SessionWriter:
    """Appends frames to a session file; header goes out on open."""

    def __init__(self, path: str, source: str = "live", created: str | None = None):
        try:
            self._f = open(path, "w", encoding="utf-8", newline="\n")
            write_session_header(self._f, source=source, created=created)
        except OSError as e:
            raise IoFailure(f"cannot write session {path!r}: {e}") from None
        self.count = 0

    def write(self, frame: FacialFrame) -> None:
        try:
            self._f.write(_record_line(frame) + "\n")
        except OSError as e:
            raise IoFailure(f"session write failed: {e}") from None
        self.count += 1

    def close(self) -> None:
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _utc_now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def record(frames: Iterable[FacialFrame], path: str, source: str = "live",
           created: str | None = None) -> int:
    with SessionWriter(path, source=source, created=created) as w:
        for frame in frames:
            w.write(frame)
        return w.count


def read_session(path: str) -> Iterator[FacialFrame]:
    """Yield frames in file order, validating header and time monotonicity."""
    with open(path, encoding="utf-8") as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError:
            raise BadHeader(f"{path}:1: header is not valid JSON") from None
        if not isinstance(header, dict) or "format_version" not in header:
            raise BadHeader(f"{path}:1: missing format_version")
        if header["format_version"] != SESSION_FORMAT_VERSION:
            raise BadHeader(
                f"{path}:1: unrecognized format_version {header['format_version']!r}")
        prev_t = None
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                t_ms = float(doc["t_ms"])
                found = bool(doc["found"])
                features = {field: float(doc[key])
                            for key, field in _FIELD_FOR_KEY.items()}
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise BadHeader(f"{path}:{lineno}: malformed record") from None
            if prev_t is not None and t_ms <= prev_t:
                raise NonMonotonicTime(
                    f"{path}:{lineno}: t_ms {t_ms} not after {prev_t}")
            prev_t = t_ms
            yield FacialFrame(timestamp=t_ms, face_found=found, **features)


def replay(path: str, speed: float | str = "max") -> Iterator[FacialFrame]:
    """Yield a session's frames, pacing wall time by original deltas / speed.

    "max" skips pacing entirely; logical timestamps are preserved either
    way, so downstream output is identical at every speed.
    """
    if speed != "max":
        speed = float(speed)
        if not speed > 0:
            raise ValueError(f"speed must be positive or 'max', got {speed}")
    first_t = None
    start_wall = None
    for frame in read_session(path):
        if speed != "max":
            if first_t is None:
                first_t = frame.timestamp
                start_wall = time.monotonic()
            else:
                # absolute schedule against the first frame, so sleep error
                # does not accumulate across a long session
                target = start_wall + (frame.timestamp - first_t) / (1000.0 * speed)
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
        yield frame


def synth_gestures(label: str, duration_ms: float, seed: int,
                   model: EmotionModel) -> list[FacialFrame]:
    """Generate a 30 fps stream whose action units sit inside the label's
    fitted ranges, with seeded sinusoidal jitter.

    Each feature rides its own 0.5-2 Hz sinusoid. Constrained features
    are centered on the label's AU means (pulled back through the
    extraction rules); amplitude is 30% of the fitted half-width, capped
    below the distance to the range bounds so jitter cannot escape them.
    Unconstrained features swing around their calibration midpoints.
    Deterministic in (label, duration_ms, seed, model).
    """
    if label not in LABELS:
        raise UnknownLabel(f"unknown emotion {label!r}")
    try:
        ranges = {r.au: r for r in model.ranges(label)}
    except UnknownLabel:
        raise UnknownLabel(f"model has no ranges for {label!r}") from None
    table = model.table

    # Walk the label's AUs in declaration order; the first AU to touch a
    # feature pins its center/amplitude, later ones are redundant by fit.
    centers: dict[str, tuple[float, float]] = {}
    for au in table.emotion_aus[label]:
        entry = table.entry(au)
        r = ranges[au]
        half = (r.hi - r.lo) / 2.0
        room = min(r.mean - r.lo, r.hi - r.mean)
        amp = min(0.3 * half, 0.95 * room)
        for name in entry.source:
            if name in centers:
                continue
            if entry.polarity == "inverted":
                lo, hi = FEATURE_RANGES[name]
                centers[name] = (hi + lo - r.mean, amp)
            else:
                centers[name] = (r.mean, amp)
    for name in FEATURE_NAMES:
        if name not in centers:
            lo, hi = FEATURE_RANGES[name]
            centers[name] = ((lo + hi) / 2.0, 0.3 * (hi - lo) / 2.0)

    rng = random.Random(f"{label}:{seed}")
    waves = {}
    for name in FEATURE_NAMES:
        freq = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        waves[name] = (freq, phase)

    frames = []
    i = 0
    while True:
        t_ms = round(i * 1000 / 30)
        if t_ms >= duration_ms or duration_ms <= 0:
            break
        values = {}
        for name in FEATURE_NAMES:
            center, amp = centers[name]
            freq, phase = waves[name]
            values[name] = center + amp * math.sin(
                2.0 * math.pi * freq * (t_ms / 1000.0) + phase)
        frames.append(FacialFrame(timestamp=float(t_ms), face_found=True, **values))
        i += 1
    return frames


def synth_segments(segments: list[tuple[str, float]], seed: int,
                   model: EmotionModel) -> list[FacialFrame]:
    """Concatenate per-label synthetic runs into one continuous stream.

    Segment i uses seed + i so a repeated label still gets fresh jitter;
    timestamps are offset so t stays strictly increasing end to end.
    """
    frames: list[FacialFrame] = []
    offset = 0.0
    for i, (label, ms) in enumerate(segments):
        for frame in synth_gestures(label, ms, seed + i, model):
            frames.append(FacialFrame(
                timestamp=offset + frame.timestamp, face_found=True,
                **{name: getattr(frame, name) for name in FEATURE_NAMES}))
        offset += ms
    return frames


def load_training_csv(path: str) -> list[tuple[FacialFrame, str]]:
    """Load labeled feature rows for model fitting.

    Strict about shape: the header must match CSV_HEADER exactly and
    every field must be a finite number. Errors carry line numbers.
    """
    samples = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise BadHeader(f"{path}:1: empty file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise BadHeader(
                f"{path}:1: header must be {','.join(CSV_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(CSV_HEADER):
                raise NonNumericField(
                    f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            label = row[0].strip()
            if label not in LABELS:
                raise BadLabel(f"{path}:{lineno}: unknown label {label!r}")
            values = {}
            for name, cell in zip(FEATURE_NAMES, row[1:]):
                try:
                    x = float(cell)
                except ValueError:
                    raise NonNumericField(
                        f"{path}:{lineno}: {name} value {cell!r} is not a number"
                    ) from None
                if not math.isfinite(x):
                    raise NonNumericField(
                        f"{path}:{lineno}: {name} value {cell!r} is not finite")
                values[name] = x
            t = float(len(samples))
            samples.append((FacialFrame(timestamp=t, face_found=True, **values), label))
    return samples
