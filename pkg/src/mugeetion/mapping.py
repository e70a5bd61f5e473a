"""Data-driven mapping from frames and emotion states to MIDI and tracks.

A profile is an ordered rule list plus a per-emotion playlist. Rules pull
a scalar from the current frame (a raw feature, an action-unit score, or
the emotion intensity), rescale it into a MIDI value, and drive a target:
a monophonic note stream, a control-change lane, the note velocity, or a
per-emotion transpose. Continuous targets emit change-only so a 30 fps
stream does not flood the synth.

All evaluation is synchronous over an explicit MapperState owned by the
single pipeline consumer; nothing here is shared or locked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .emotion import (AUVector, EmotionState, LABELS, default_extraction_table,
                      extract_aus)
from .faceosc import FEATURE_NAMES, FEATURE_RANGES, FacialFrame
from .midi import MidiEvent, control_change, note_off, note_on

SOURCE_INTENSITY = "emotion_intensity"
TARGET_NOTE = "note_stream"
TARGET_CC = "cc"
TARGET_VELOCITY = "velocity"
TARGET_TRANSPOSE = "transpose"
TARGET_TRACKS = "track_playlist"
TARGETS = (TARGET_NOTE, TARGET_CC, TARGET_VELOCITY, TARGET_TRANSPOSE, TARGET_TRACKS)

DEFAULT_VELOCITY = 100
PROFILE_FORMAT_VERSION = 1

# Reference playlist; titles are what the track sink forwards verbatim.
DEFAULT_PLAYLIST = {
    "happy": ("Piano Sonata No 16 in C major",
              "Eine Kleine Nachtmusik K 525 Allegro"),
    "neutral": ("Piano Sonata No 11 in A major K 331",),
    "sad": ("Symphony No 25 in G Minor K 183 1st Movement",
            "Requiem in D minor"),
}


class MappingError(Exception):
    pass


class ProfileFormatError(MappingError):
    pass


class EmptyPlaylist(MappingError):
    pass


def au_source_range(au: int, table=None) -> tuple[float, float]:
    """Default input bounds for an AU source, derived from the factory
    calibration of its feature(s). Span reflection preserves the bounds,
    so polarity does not matter here."""
    table = table or default_extraction_table()
    entry = table.entry(au)
    los = [FEATURE_RANGES[name][0] for name in entry.source]
    his = [FEATURE_RANGES[name][1] for name in entry.source]
    return sum(los) / len(los), sum(his) / len(his)


def _default_bounds(source) -> tuple[float, float]:
    if source == SOURCE_INTENSITY:
        return 0.0, 1.0
    if isinstance(source, int):
        return au_source_range(source)
    return FEATURE_RANGES[source]


@dataclass(frozen=True)
class MappingRule:
    """One mapping: source scalar -> rescaled value -> target.

    source: a feature name, an AU id (int), or "emotion_intensity".
    active_when: "always" or a tuple of emotion labels.
    """

    source: str | int
    target: str
    in_min: float | None = None
    in_max: float | None = None
    out_min: int = 0
    out_max: int = 127
    controller: int | None = None
    semitones: int = 0
    channel: int = 0
    curve: str = "linear"
    active_when: str | tuple[str, ...] = "always"

    def __post_init__(self):
        src = self.source
        if isinstance(src, str) and src.startswith("au:"):
            src = int(src[3:])
            object.__setattr__(self, "source", src)
        if isinstance(src, str) and src != SOURCE_INTENSITY and src not in FEATURE_NAMES:
            raise ValueError(f"unknown source {src!r}")
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}")
        if self.curve != "linear":
            raise ValueError(f"unsupported curve {self.curve!r}")
        if self.in_min is None or self.in_max is None:
            lo, hi = _default_bounds(src)
            object.__setattr__(self, "in_min", self.in_min if self.in_min is not None else lo)
            object.__setattr__(self, "in_max", self.in_max if self.in_max is not None else hi)
        if not self.in_min < self.in_max:
            raise ValueError(f"need in_min < in_max, got {self.in_min} >= {self.in_max}")
        if not 0 <= self.out_min <= self.out_max <= 127:
            raise ValueError(f"need 0 <= out_min <= out_max <= 127, "
                             f"got {self.out_min}..{self.out_max}")
        if self.target == TARGET_CC:
            if self.controller is None or not 0 <= self.controller <= 127:
                raise ValueError("cc target needs controller in 0..127")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel {self.channel} outside 0..15")
        if not -48 <= self.semitones <= 48:
            raise ValueError(f"semitones {self.semitones} outside -48..48")
        if self.active_when != "always":
            labels = tuple(self.active_when)
            object.__setattr__(self, "active_when", labels)
            bad = [x for x in labels if x not in LABELS]
            if bad or not labels:
                raise ValueError(f"active_when must be 'always' or labels from {LABELS}")

    def is_active(self, label: str) -> bool:
        return self.active_when == "always" or label in self.active_when

    def scaled(self, x: float) -> int:
        """Rescale x from the in range to the out range, half-up, clamped.

        Exact rationals over the binary float values keep .5 boundaries
        deterministic; with out 0..127 this matches normalize_to_midi.
        """
        ratio = ((Fraction(x) - Fraction(self.in_min))
                 / (Fraction(self.in_max) - Fraction(self.in_min)))
        ratio = min(Fraction(1), max(Fraction(0), ratio))
        span = self.out_max - self.out_min
        return self.out_min + math.floor(span * ratio + Fraction(1, 2))


@dataclass(frozen=True)
class MappingProfile:
    name: str
    rules: tuple[MappingRule, ...]
    playlist: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_PLAYLIST.items()})

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "playlist",
                           {k: tuple(v) for k, v in self.playlist.items()})
        for label in LABELS:
            if label not in self.playlist:
                raise ValueError(f"playlist must cover {LABELS}, missing {label!r}")
        for label in LABELS:
            streams = [r for r in self.rules
                       if r.target == TARGET_NOTE and r.is_active(label)]
            if len(streams) > 1:
                raise ValueError(
                    f"{len(streams)} note_stream rules active for {label!r}; at most 1")

    def to_json(self) -> str:
        doc = {
            "format_version": PROFILE_FORMAT_VERSION,
            "name": self.name,
            "rules": [_rule_to_dict(r) for r in self.rules],
            "playlist": {k: list(v) for k, v in self.playlist.items()},
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "MappingProfile":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ProfileFormatError(f"profile is not valid JSON: {e}") from None
        if not isinstance(doc, dict):
            raise ProfileFormatError("profile document must be a JSON object")
        if doc.get("format_version") != PROFILE_FORMAT_VERSION:
            raise ProfileFormatError(
                f"unsupported profile format_version {doc.get('format_version')!r}")
        try:
            rules = tuple(_rule_from_dict(r) for r in doc["rules"])
            playlist = {k: tuple(v) for k, v in doc["playlist"].items()}
            return cls(name=str(doc.get("name", "custom")), rules=rules,
                       playlist=playlist)
        except (KeyError, TypeError, ValueError) as e:
            raise ProfileFormatError(f"bad profile document: {e}") from None


def _rule_to_dict(r: MappingRule) -> dict:
    doc = {
        "source": r.source, "target": r.target,
        "in_min": r.in_min, "in_max": r.in_max,
        "out_min": r.out_min, "out_max": r.out_max,
        "channel": r.channel, "curve": r.curve,
        "active_when": (r.active_when if r.active_when == "always"
                        else list(r.active_when)),
    }
    if r.target == TARGET_CC:
        doc["controller"] = r.controller
    if r.target == TARGET_TRANSPOSE:
        doc["semitones"] = r.semitones
    return doc


def _rule_from_dict(doc: dict) -> MappingRule:
    known = {"source", "target", "in_min", "in_max", "out_min", "out_max",
             "controller", "semitones", "channel", "curve", "active_when"}
    extra = set(doc) - known
    if extra:
        raise ValueError(f"unknown rule fields {sorted(extra)}")
    kwargs = dict(doc)
    if isinstance(kwargs.get("active_when"), list):
        kwargs["active_when"] = tuple(kwargs["active_when"])
    return MappingRule(**kwargs)


def load_profile(path: str) -> MappingProfile:
    with open(path, encoding="utf-8") as f:
        return MappingProfile.from_json(f.read())


def save_profile(profile: MappingProfile, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(profile.to_json())
        f.write("\n")


def default_profile() -> MappingProfile:
    """Factory mapping: mouth openness drives a note stream; a happy face
    boosts velocity, raises pitch an octave, and opens the volume lane; a
    sad face feeds noise-amount and distortion-amount controllers."""
    return MappingProfile(
        name="default",
        rules=(
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_VELOCITY,
                        out_min=100, out_max=127, active_when=("happy",)),
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_TRANSPOSE,
                        semitones=12, active_when=("happy",)),
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_CC,
                        controller=7, out_min=40, out_max=127),
            MappingRule(source=25, target=TARGET_NOTE, out_min=48, out_max=84),
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_CC,
                        controller=70, active_when=("sad",)),
            MappingRule(source=4, target=TARGET_CC,
                        controller=71, active_when=("sad",)),
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_TRACKS),
        ),
    )


@dataclass
class MapperState:
    """Prior values the mapper carries between frames; single-owner."""

    notes: dict[int, tuple[int, int]] = field(default_factory=dict)  # rule idx -> (channel, pitch)
    cc_values: dict[tuple[int, int], int] = field(default_factory=dict)
    was_active: dict[int, bool] = field(default_factory=dict)

    def flush(self, t_ms: float) -> list[MidiEvent]:
        """Close every sounding note; call at shutdown or stream end."""
        events = [note_off(pitch, t_ms, channel)
                  for channel, pitch in self.notes.values()]
        self.notes.clear()
        self.was_active.clear()
        return events


def _source_value(rule: MappingRule, frame: FacialFrame,
                  state: EmotionState, aus: AUVector | None) -> float | None:
    if rule.source == SOURCE_INTENSITY:
        return state.intensity
    if isinstance(rule.source, int):
        if aus is None or rule.source not in aus.scores:
            return None
        return aus.scores[rule.source]
    return getattr(frame, rule.source)


def map_frame(frame: FacialFrame, state: EmotionState, profile: MappingProfile,
              mapper: MapperState, aus: AUVector | None = None) -> list[MidiEvent]:
    """Evaluate the profile's rules in order against one classified frame.

    Never raises: inactive rules are skipped, as are AU-sourced rules
    whose AU the vector lacks. Velocity and transpose are recomputed each
    frame from the active rules, so they fall back to their defaults the
    moment the driving emotion ends; a note stream losing its rule (or a
    cc lane going inactive) is closed out rather than left hanging.
    """
    if not frame.face_found:
        return []
    if aus is None and any(isinstance(r.source, int) for r in profile.rules):
        aus = extract_aus(frame, default_extraction_table())
    t = frame.timestamp
    events: list[MidiEvent] = []
    velocity = DEFAULT_VELOCITY
    transpose = 0
    for idx, rule in enumerate(profile.rules):
        active = rule.is_active(state.label)
        previously = mapper.was_active.get(idx, False)
        mapper.was_active[idx] = active
        if not active:
            if previously and rule.target == TARGET_NOTE and idx in mapper.notes:
                channel, pitch = mapper.notes.pop(idx)
                events.append(note_off(pitch, t, channel))
            if previously and rule.target == TARGET_CC:
                key = (rule.channel, rule.controller)
                if mapper.cc_values.get(key) != rule.out_min:
                    mapper.cc_values[key] = rule.out_min
                    events.append(control_change(rule.controller, rule.out_min, t, rule.channel))
            continue
        x = _source_value(rule, frame, state, aus)
        if x is None:
            continue
        if rule.target == TARGET_VELOCITY:
            velocity = rule.scaled(x)
        elif rule.target == TARGET_TRANSPOSE:
            transpose = rule.semitones
        elif rule.target == TARGET_CC:
            value = rule.scaled(x)
            key = (rule.channel, rule.controller)
            if mapper.cc_values.get(key) != value:
                mapper.cc_values[key] = value
                events.append(control_change(rule.controller, value, t, rule.channel))
        elif rule.target == TARGET_NOTE:
            pitch = min(127, max(0, rule.scaled(x) + transpose))
            sounding = mapper.notes.get(idx)
            if sounding != (rule.channel, pitch):
                if sounding is not None:
                    events.append(note_off(sounding[1], t, sounding[0]))
                mapper.notes[idx] = (rule.channel, pitch)
                events.append(note_on(pitch, velocity, t, rule.channel))
        # track_playlist rules carry no MIDI; the track selector owns them
    return events


@dataclass(frozen=True)
class TrackCommand:
    action: str  # "play" is the only emitted action
    track: str
    label: str
    timestamp: float


class TrackSelector:
    """Change-only track chooser with per-label round-robin.

    The session starts from an implicit neutral, so the first neutral
    segment selects nothing and the first departure from neutral plays.
    """

    def __init__(self, playlist: dict[str, tuple[str, ...]],
                 initial_label: str = "neutral"):
        self._playlist = {k: tuple(v) for k, v in playlist.items()}
        self._label = initial_label
        self._cursor: dict[str, int] = {}

    def carry_from(self, other: "TrackSelector") -> None:
        """Adopt another selector's rotation for labels whose track list
        is unchanged, so a profile swap does not restart the rotation."""
        for label, tracks in self._playlist.items():
            if other._playlist.get(label) == tracks and label in other._cursor:
                self._cursor[label] = other._cursor[label]

    def feed(self, state: EmotionState) -> TrackCommand | None:
        if state.label == self._label:
            return None
        self._label = state.label
        tracks = self._playlist.get(state.label, ())
        if not tracks:
            raise EmptyPlaylist(f"no tracks configured for {state.label!r}")
        i = self._cursor.get(state.label, 0)
        self._cursor[state.label] = (i + 1) % len(tracks)
        return TrackCommand(action="play", track=tracks[i],
                            label=state.label, timestamp=state.timestamp)


def select_track(states, profile: MappingProfile) -> list[TrackCommand]:
    """Offline convenience: run the selector over a finite state stream."""
    selector = TrackSelector(profile.playlist)
    out = []
    for s in states:
        cmd = selector.feed(s)
        if cmd is not None:
            out.append(cmd)
    return out
