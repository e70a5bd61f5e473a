"""MIDI event types, wire encoding, and Standard MIDI File rendering.

Only the output side lives here: channel-voice encoding for live sinks
and a format 0 SMF writer for session renders. Parsing stays out; the
test suite carries its own independent reader.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction

NOTE_ON = "note_on"
NOTE_OFF = "note_off"
CONTROL_CHANGE = "control_change"

_STATUS = {NOTE_OFF: 0x80, NOTE_ON: 0x90, CONTROL_CHANGE: 0xB0}

VLQ_MAX = 0x0FFFFFFF
SMF_DIVISION = 480  # ticks per quarter at a fixed 120 BPM: 1 tick = 1/960 s


class MidiError(Exception):
    pass


class DegenerateRange(MidiError):
    pass


class OutOfRange(MidiError):
    pass


class UnsortedEvents(MidiError):
    pass


@dataclass(frozen=True)
class MidiEvent:
    kind: str
    channel: int
    data1: int
    data2: int
    timestamp: float  # milliseconds

    def __post_init__(self):
        if self.kind not in _STATUS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel {self.channel} outside 0..15")
        for name in ("data1", "data2"):
            v = getattr(self, name)
            if not 0 <= v <= 127:
                raise ValueError(f"{name}={v} outside 0..127")


def note_on(note: int, velocity: int, t_ms: float, channel: int = 0) -> MidiEvent:
    return MidiEvent(NOTE_ON, channel, note, velocity, t_ms)


def note_off(note: int, t_ms: float, channel: int = 0) -> MidiEvent:
    return MidiEvent(NOTE_OFF, channel, note, 0, t_ms)


def control_change(controller: int, value: int, t_ms: float, channel: int = 0) -> MidiEvent:
    return MidiEvent(CONTROL_CHANGE, channel, controller, value, t_ms)


def normalize_to_midi(x: float, in_min: float, in_max: float) -> int:
    """Rescale x from [in_min, in_max] to 0..127, rounding half-up.

    Exact rational arithmetic over the binary float values, so interval
    midpoints land on .5 and round deterministically instead of drifting
    with accumulated float error.
    """
    if not (math.isfinite(x) and math.isfinite(in_min) and math.isfinite(in_max)):
        raise ValueError("normalize_to_midi requires finite inputs")
    if not in_min < in_max:
        raise DegenerateRange(f"need in_min < in_max, got {in_min} >= {in_max}")
    ratio = (Fraction(x) - Fraction(in_min)) / (Fraction(in_max) - Fraction(in_min))
    rounded = math.floor(127 * ratio + Fraction(1, 2))
    return min(127, max(0, rounded))


def encode_midi(e: MidiEvent) -> bytes:
    return bytes((_STATUS[e.kind] | e.channel, e.data1, e.data2))


def encode_vlq(n: int) -> bytes:
    if not 0 <= n <= VLQ_MAX:
        raise OutOfRange(f"VLQ value {n} outside 0..{VLQ_MAX:#x}")
    out = [n & 0x7F]
    n >>= 7
    while n:
        out.append(0x80 | (n & 0x7F))
        n >>= 7
    return bytes(reversed(out))


def ms_to_ticks(t_ms: float) -> int:
    """Quantize a millisecond timestamp to SMF ticks, half-up.

    ticks = t_ms * 960/1000; exact rationals keep .5 boundaries stable.
    """
    return math.floor((1920 * Fraction(t_ms) + 1000) / 2000)


def write_smf(events: list[MidiEvent]) -> bytes:
    """Render a time-ordered event list as a format 0 SMF byte string."""
    track = bytearray()
    prev_ms = None
    prev_tick = 0
    for e in events:
        if prev_ms is not None and e.timestamp < prev_ms:
            raise UnsortedEvents(
                f"timestamp {e.timestamp} after {prev_ms} decreases")
        prev_ms = e.timestamp
        tick = ms_to_ticks(e.timestamp)
        track += encode_vlq(tick - prev_tick)
        prev_tick = tick
        track += encode_midi(e)
    track += b"\x00\xff\x2f\x00"  # end of track
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, SMF_DIVISION)
    return header + b"MTrk" + struct.pack(">I", len(track)) + bytes(track)


def write_smf_file(events: list[MidiEvent], path: str) -> None:
    with open(path, "wb") as f:
        f.write(write_smf(events))
