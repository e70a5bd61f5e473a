"""Output backends for MIDI events and track commands.

Every sink exposes the same tiny surface: a write method plus close().
File sinks are deterministic byte-for-byte given the same event stream;
network sinks fire and forget over UDP.
"""

from __future__ import annotations

import json
import socket

from .mapping import TrackCommand
from .midi import MidiEvent, encode_midi, write_smf
from .osc import OscMessage, serialize_message

TRACK_OSC_ADDRESS = "/mugeetion/track"


class MidiSink:
    def write(self, event: MidiEvent) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class NullMidiSink(MidiSink):
    def write(self, event: MidiEvent) -> None:
        pass


class RawMidiFileSink(MidiSink):
    """Appends the 3-byte wire encoding of each event; no timing data."""

    def __init__(self, path: str):
        self._f = open(path, "wb")

    def write(self, event: MidiEvent) -> None:
        self._f.write(encode_midi(event))

    def close(self) -> None:
        self._f.close()


class SmfFileSink(MidiSink):
    """Collects events and renders a format 0 SMF on close."""

    def __init__(self, path: str):
        self._path = path
        self._events: list[MidiEvent] = []

    def write(self, event: MidiEvent) -> None:
        self._events.append(event)

    def close(self) -> None:
        with open(self._path, "wb") as f:
            f.write(write_smf(self._events))


class UdpMidiSink(MidiSink):
    def __init__(self, host: str, port: int):
        self._addr = (host, port)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def write(self, event: MidiEvent) -> None:
        self._sock.sendto(encode_midi(event), self._addr)

    def close(self) -> None:
        self._sock.close()


class MemoryMidiSink(MidiSink):
    """Test helper: keeps the events in order."""

    def __init__(self):
        self.events: list[MidiEvent] = []

    def write(self, event: MidiEvent) -> None:
        self.events.append(event)


class TeeMidiSink(MidiSink):
    """Fans every event out to several sinks (raw bytes + SMF, say)."""

    def __init__(self, *children: MidiSink):
        self._children = children

    def write(self, event: MidiEvent) -> None:
        for child in self._children:
            child.write(event)

    def close(self) -> None:
        for child in self._children:
            child.close()


class TrackSink:
    def write(self, cmd: TrackCommand) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class NullTrackSink(TrackSink):
    def write(self, cmd: TrackCommand) -> None:
        pass


class JsonlTrackSink(TrackSink):
    def __init__(self, path: str):
        self._f = open(path, "w", encoding="utf-8", newline="\n")

    def write(self, cmd: TrackCommand) -> None:
        doc = {"t_ms": cmd.timestamp, "action": cmd.action,
               "track": cmd.track, "label": cmd.label}
        self._f.write(json.dumps(doc, separators=(",", ":")) + "\n")

    def close(self) -> None:
        self._f.close()


class OscTrackSink(TrackSink):
    """Sends each selection as an OSC message with the title as its one
    string argument, for an external player to act on."""

    def __init__(self, host: str, port: int):
        self._addr = (host, port)
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def write(self, cmd: TrackCommand) -> None:
        msg = OscMessage(TRACK_OSC_ADDRESS, (cmd.track,))
        self._sock.sendto(serialize_message(msg), self._addr)

    def close(self) -> None:
        self._sock.close()


class MemoryTrackSink(TrackSink):
    def __init__(self):
        self.commands: list[TrackCommand] = []

    def write(self, cmd: TrackCommand) -> None:
        self.commands.append(cmd)
