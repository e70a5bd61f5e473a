"""FaceOSC address schema and the burst-to-frame assembler.

FaceOSC streams one burst of gesture messages per video frame with no
frame delimiter, so frames have to be reassembled from message order and
timing. The policy: a burst opens at its first gesture message and is
flushed when all eight features arrived, when an address repeats (the
repeat starts the next burst), or when the burst has been open for more
than ``BURST_TIMEOUT_MS``. Features missing at flush time are held over
from the previous frame; if there is no previous frame yet the partial
burst is dropped.

Feature values live in FaceOSC's own geometry units. ``FEATURE_RANGES``
holds the factory calibration spans measured from FaceOSC output; values
farther than four spans from a range midpoint are treated as tracker
glitches and skipped.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .osc import OscMessage

log = logging.getLogger(__name__)

FOUND_ADDRESS = "/found"

GESTURE_ADDRESSES = {
    "/gesture/mouth/width": "mouth_width",
    "/gesture/mouth/height": "mouth_height",
    "/gesture/eyebrow/left": "eyebrow_left",
    "/gesture/eyebrow/right": "eyebrow_right",
    "/gesture/eye/left": "eye_left",
    "/gesture/eye/right": "eye_right",
    "/gesture/jaw": "jaw",
    "/gesture/nostrils": "nostrils",
}

FEATURE_NAMES = tuple(GESTURE_ADDRESSES.values())

# Factory calibration: (min, max) per feature in FaceOSC units.
FEATURE_RANGES: dict[str, tuple[float, float]] = {
    "mouth_width": (6.0244, 19.2747),
    "mouth_height": (0.8893, 3.0010),
    "eyebrow_left": (6.7666, 8.0714),
    "eyebrow_right": (6.6787, 7.9785),
    "eye_left": (2.4329, 3.4357),
    "eye_right": (2.3950, 3.3144),
    "jaw": (18.9888, 22.9718),
    "nostrils": (5.6477, 8.8061),
}

BURST_TIMEOUT_MS = 50.0
SANITY_SPANS = 4.0


@dataclass(frozen=True)
class FacialFrame:
    """One time-stamped snapshot of the eight FaceOSC gesture features."""

    timestamp: float  # ms since session start
    mouth_width: float
    mouth_height: float
    eyebrow_left: float
    eyebrow_right: float
    eye_left: float
    eye_right: float
    jaw: float
    nostrils: float
    face_found: bool = True

    def features(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in FEATURE_NAMES}


def feature_in_bounds(name: str, value: float) -> bool:
    """True unless the value is non-finite or a tracker glitch.

    Glitch means farther than SANITY_SPANS range-spans from the
    calibration midpoint of the feature.
    """
    if not math.isfinite(value):
        return False
    lo, hi = FEATURE_RANGES[name]
    span = hi - lo
    mid = (hi + lo) / 2.0
    return abs(value - mid) <= SANITY_SPANS * span


class FrameAssembler:
    """Stateful decoder from a timed OSC message stream to FacialFrames.

    Feed messages with their arrival time in ms; each call returns the
    frames completed by that message (usually zero or one). Counters for
    skipped input are kept on the instance for the engine's stats.
    """

    def __init__(self, timeout_ms: float = BURST_TIMEOUT_MS):
        self.timeout_ms = timeout_ms
        self.unknown_address = 0
        self.wrong_arity = 0
        self.rejected_value = 0
        self.dropped_partial = 0
        self._pending: dict[str, float] = {}
        self._pending_t = 0.0
        self._last_features: dict[str, float] | None = None
        self._last_ts: float | None = None

    def feed(self, msg: OscMessage, t_ms: float) -> list[FacialFrame]:
        out: list[FacialFrame] = []
        if self._pending and t_ms - self._pending_t >= self.timeout_ms:
            self._finalize(out)
        if msg.address == FOUND_ADDRESS:
            if len(msg.args) != 1 or not isinstance(msg.args[0], int):
                self.wrong_arity += 1
                log.warning("skipping %s with args %r", msg.address, msg.args)
                return out
            if msg.args[0] == 0:
                self._finalize(out)
                out.append(self._emit(self._last_features or dict.fromkeys(FEATURE_NAMES, 0.0),
                                      t_ms, found=False))
            # /found 1 carries no feature data; the burst itself marks presence
            return out
        feature = GESTURE_ADDRESSES.get(msg.address)
        if feature is None:
            self.unknown_address += 1
            log.warning("skipping unknown address %s", msg.address)
            return out
        if len(msg.args) != 1 or not isinstance(msg.args[0], float):
            self.wrong_arity += 1
            log.warning("skipping %s with args %r", msg.address, msg.args)
            return out
        value = msg.args[0]
        if not feature_in_bounds(feature, value):
            self.rejected_value += 1
            log.warning("rejecting glitch value %s=%r", feature, value)
            return out
        if feature in self._pending:
            self._finalize(out)
        if not self._pending:
            self._pending_t = t_ms
        self._pending[feature] = value
        if len(self._pending) == len(FEATURE_NAMES):
            self._finalize(out)
        return out

    def flush_stale(self, now_ms: float) -> list[FacialFrame]:
        """Flush a burst that has been waiting longer than the timeout."""
        out: list[FacialFrame] = []
        if self._pending and now_ms - self._pending_t >= self.timeout_ms:
            self._finalize(out)
        return out

    def finish(self) -> list[FacialFrame]:
        """Flush whatever is pending at end of stream."""
        out: list[FacialFrame] = []
        self._finalize(out)
        return out

    def _finalize(self, out: list[FacialFrame]) -> None:
        if not self._pending:
            return
        features = dict(self._pending)
        t = self._pending_t
        self._pending = {}
        missing = [n for n in FEATURE_NAMES if n not in features]
        if missing:
            if self._last_features is None:
                self.dropped_partial += 1
                log.debug("dropping partial burst missing %s", missing)
                return
            for name in missing:
                features[name] = self._last_features[name]
        out.append(self._emit(features, t, found=True))

    def _emit(self, features: dict[str, float], t: float, found: bool) -> FacialFrame:
        if self._last_ts is not None and t <= self._last_ts:
            t = self._last_ts + 1  # keep timestamps strictly increasing
        self._last_ts = t
        self._last_features = dict(features)
        return FacialFrame(timestamp=t, face_found=found, **features)


def decode_faceosc(timed_messages) -> "list[FacialFrame]":
    """Assemble a finite (t_ms, OscMessage) stream into frames.

    Convenience wrapper over FrameAssembler for offline use; the trailing
    partial burst is flushed at end of stream.
    """
    asm = FrameAssembler()
    frames: list[FacialFrame] = []
    for t_ms, msg in timed_messages:
        frames.extend(asm.feed(msg, t_ms))
    frames.extend(asm.finish())
    return frames
