"""Engine configuration: JSON schema, validation, and object builders.

Validation failures name the exact field path so a bad config is a
one-glance fix. Builders turn the validated document into live pieces
(model, profile, sinks) without the engine knowing about file layout.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from . import sinks
from .demo import demo_model
from .emotion import LABELS, EmotionModel, ModelFormatError, load_model
from .mapping import MappingProfile, ProfileFormatError, default_profile, load_profile


class ConfigError(Exception):
    pass


DEFAULT_API_PORT = 8765
DEFAULT_UDP_PORT = 8338


@dataclass(frozen=True)
class EngineConfig:
    input: dict
    model_path: str | None = None
    profile_path: str | None = None
    smoothing_window: int = 5
    midi_sink: dict = field(default_factory=lambda: {"type": "null"})
    track_sink: dict = field(default_factory=lambda: {"type": "null"})
    api: dict | None = None
    stats_interval_s: float = 5.0

    def build_model(self) -> EmotionModel:
        if self.model_path is None:
            return demo_model()
        try:
            return load_model(self.model_path)
        except FileNotFoundError:
            raise ConfigError(f"model: file not found: {self.model_path}") from None
        except ModelFormatError as e:
            raise ConfigError(f"model: {e}") from None

    def build_profile(self) -> MappingProfile:
        if self.profile_path is None:
            return default_profile()
        try:
            return load_profile(self.profile_path)
        except FileNotFoundError:
            raise ConfigError(f"profile: file not found: {self.profile_path}") from None
        except (ProfileFormatError, ValueError) as e:
            raise ConfigError(f"profile: {e}") from None

    def build_midi_sink(self) -> sinks.MidiSink:
        kind = self.midi_sink["type"]
        if kind == "null":
            return sinks.NullMidiSink()
        if kind == "raw":
            return sinks.RawMidiFileSink(self.midi_sink["path"])
        if kind == "smf":
            return sinks.SmfFileSink(self.midi_sink["path"])
        if kind == "udp":
            return sinks.UdpMidiSink(self.midi_sink["host"], self.midi_sink["port"])
        raise ConfigError(f"midi_sink.type: unknown sink {kind!r}")

    def build_track_sink(self) -> sinks.TrackSink:
        kind = self.track_sink["type"]
        if kind == "null":
            return sinks.NullTrackSink()
        if kind == "jsonl":
            return sinks.JsonlTrackSink(self.track_sink["path"])
        if kind == "osc":
            return sinks.OscTrackSink(self.track_sink["host"], self.track_sink["port"])
        raise ConfigError(f"track_sink.type: unknown sink {kind!r}")


def _need(doc: dict, key: str, kind, path: str):
    if key not in doc:
        raise ConfigError(f"{path}{key}: required field missing")
    value = doc[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}{key}: expected number, got {value!r}")
        return float(value)
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{path}{key}: expected integer, got {value!r}")
    if kind is str and not isinstance(value, str):
        raise ConfigError(f"{path}{key}: expected string, got {value!r}")
    return value


def _port(doc: dict, key: str, path: str) -> int:
    p = _need(doc, key, int, path)
    if not 1 <= p <= 65535:
        raise ConfigError(f"{path}{key}: port {p} outside 1..65535")
    return p


def _validate_input(doc, path="input.") -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("input: expected an object")
    kind = _need(doc, "type", str, path)
    if kind == "udp":
        out = {"type": "udp", "port": _port(doc, "port", path),
               "host": doc.get("host", "0.0.0.0")}
    elif kind == "session":
        out = {"type": "session", "path": _need(doc, "path", str, path),
               "speed": doc.get("speed", "max")}
        speed = out["speed"]
        if speed != "max":
            if isinstance(speed, bool) or not isinstance(speed, (int, float)) or speed <= 0:
                raise ConfigError(f"{path}speed: expected positive number or \"max\"")
            out["speed"] = float(speed)
        if not os.path.exists(out["path"]):
            raise ConfigError(f"{path}path: file not found: {out['path']}")
    elif kind == "synth":
        segments = doc.get("segments")
        if not isinstance(segments, list) or not segments:
            raise ConfigError(f"{path}segments: expected a non-empty array")
        parsed = []
        for i, seg in enumerate(segments):
            seg_path = f"{path}segments[{i}]."
            if not isinstance(seg, dict):
                raise ConfigError(f"{path}segments[{i}]: expected an object")
            label = _need(seg, "label", str, seg_path)
            if label not in LABELS:
                raise ConfigError(f"{seg_path}label: {label!r} not one of {list(LABELS)}")
            ms = _need(seg, "ms", float, seg_path)
            if ms <= 0:
                raise ConfigError(f"{seg_path}ms: must be positive")
            parsed.append({"label": label, "ms": ms})
        seed = doc.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int):
            raise ConfigError(f"{path}seed: expected integer")
        out = {"type": "synth", "segments": parsed, "seed": seed}
    else:
        raise ConfigError(f"{path}type: unknown input type {kind!r}")
    return out


def _validate_sink(doc, name: str, kinds: tuple[str, ...]) -> dict:
    if doc is None:
        return {"type": "null"}
    if not isinstance(doc, dict):
        raise ConfigError(f"{name}: expected an object")
    kind = _need(doc, "type", str, f"{name}.")
    if kind not in kinds:
        raise ConfigError(f"{name}.type: unknown sink {kind!r}; one of {list(kinds)}")
    out = {"type": kind}
    if kind in ("raw", "smf", "jsonl"):
        out["path"] = _need(doc, "path", str, f"{name}.")
    elif kind in ("udp", "osc"):
        out["host"] = _need(doc, "host", str, f"{name}.")
        out["port"] = _port(doc, "port", f"{name}.")
    return out


def parse_config(doc: dict) -> EngineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: expected a JSON object")
    known = {"input", "model", "profile", "smoothing_window", "midi_sink",
             "track_sink", "api", "stats_interval_s"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"config: unknown fields {sorted(extra)}")
    if "input" not in doc:
        raise ConfigError("input: required field missing")
    input_spec = _validate_input(doc["input"])

    model_path = doc.get("model")
    if model_path is not None:
        if not isinstance(model_path, str):
            raise ConfigError(f"model: expected string path, got {model_path!r}")
        if not os.path.exists(model_path):
            raise ConfigError(f"model: file not found: {model_path}")
    profile_path = doc.get("profile")
    if profile_path is not None:
        if not isinstance(profile_path, str):
            raise ConfigError(f"profile: expected string path, got {profile_path!r}")
        if not os.path.exists(profile_path):
            raise ConfigError(f"profile: file not found: {profile_path}")

    window = doc.get("smoothing_window", 5)
    if isinstance(window, bool) or not isinstance(window, int):
        raise ConfigError(f"smoothing_window: expected integer, got {window!r}")
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"smoothing_window: must be odd and >= 1, got {window}")

    midi_sink = _validate_sink(doc.get("midi_sink"), "midi_sink",
                               ("null", "raw", "smf", "udp"))
    track_sink = _validate_sink(doc.get("track_sink"), "track_sink",
                                ("null", "jsonl", "osc"))

    api = doc.get("api")
    if api is not None:
        if not isinstance(api, dict):
            raise ConfigError("api: expected an object or null")
        enabled = api.get("enabled", True)
        if not isinstance(enabled, bool):
            raise ConfigError("api.enabled: expected boolean")
        parsed_api = {"enabled": enabled,
                      "host": api.get("host", "127.0.0.1"),
                      "port": api.get("port", DEFAULT_API_PORT)}
        if not isinstance(parsed_api["host"], str):
            raise ConfigError("api.host: expected string")
        # unlike input/sink ports, 0 is allowed here: bind an ephemeral
        # port and report it at startup
        if (isinstance(parsed_api["port"], bool)
                or not isinstance(parsed_api["port"], int)
                or not 0 <= parsed_api["port"] <= 65535):
            raise ConfigError(f"api.port: port {parsed_api['port']!r} outside 0..65535")
        api = parsed_api if enabled else None

    stats = doc.get("stats_interval_s", 5.0)
    if isinstance(stats, bool) or not isinstance(stats, (int, float)) or stats <= 0:
        raise ConfigError(f"stats_interval_s: expected positive number, got {stats!r}")

    return EngineConfig(input=input_spec, model_path=model_path,
                        profile_path=profile_path, smoothing_window=window,
                        midi_sink=midi_sink, track_sink=track_sink,
                        api=api, stats_interval_s=float(stats))


def load_config(path: str) -> EngineConfig:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from None
    return parse_config(doc)
