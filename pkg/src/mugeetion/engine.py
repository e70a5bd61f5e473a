"""Pipeline orchestration: source -> decode -> classify -> smooth -> map.

One consumer thread owns every pipeline stage and all mutable state, so
stage order is deterministic and live steering cannot tear a frame.
Producers (UDP listener, replay feeder) push frames through a bounded
queue; control commands are validated on the caller's thread, then
applied by the consumer between ticks and acknowledged with the new
config hash. Snapshots are immutable dicts swapped atomically, readable
from any thread without locks.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from collections import deque
from dataclasses import replace

from .config import EngineConfig
from .emotion import (EmotionModel, EmotionState, LabelSmoother, classify,
                      extract_aus)
from .faceosc import FEATURE_NAMES, FacialFrame, FrameAssembler
from .mapping import MapperState, MappingProfile, TrackSelector, map_frame
from .net import BindFailed, FrameQueue, UdpListener
from .session import replay as replay_session
from .session import synth_segments

log = logging.getLogger("mugeetion.engine")

SNAPSHOT_SCHEMA_VERSION = 1


class EngineError(Exception):
    pass


class NotRunning(EngineError):
    pass


class ValidationFailed(EngineError):
    pass


class _Command:
    __slots__ = ("apply", "done", "result")

    def __init__(self, apply):
        self.apply = apply
        self.done = threading.Event()
        self.result: dict = {}


class Engine:
    """Runs the pipeline over one input source until it ends or stop().

    ``frames`` overrides the configured input with any frame iterable,
    which keeps tests free of sockets and timing. ``on_tick`` is called
    on the consumer thread after each processed frame; a callback may
    enqueue control commands (wait=False) to steer deterministically.
    """

    def __init__(self, config: EngineConfig, *, frames=None, on_tick=None,
                 midi_sink=None, track_sink=None):
        self._config = config
        self._model: EmotionModel = config.build_model()
        self._model_doc: dict = json.loads(self._model.to_json())
        self._profile: MappingProfile = config.build_profile()
        self._smoother = LabelSmoother(config.smoothing_window)
        self._midi_sink = midi_sink if midi_sink is not None else config.build_midi_sink()
        self._track_sink = track_sink if track_sink is not None else config.build_track_sink()
        self._mapper = MapperState()
        self._selector = TrackSelector(self._profile.playlist)
        self._frames_override = frames
        self._on_tick = on_tick

        self._queue = FrameQueue(maxsize=64)
        self._commands: deque[_Command] = deque()
        self._cmd_lock = threading.Lock()
        self._stop_evt = threading.Event()
        self._running = False
        self._fatal: BaseException | None = None

        self._tick = 0
        self._started_at = 0.0
        self._last_frame: FacialFrame | None = None
        self._last_aus = None
        self._last_raw: EmotionState | None = None
        self._last_smoothed: EmotionState | None = None
        self._now_playing: str | None = None
        self._tick_walls: deque[float] = deque(maxlen=45)
        self._listener: UdpListener | None = None
        self._snapshot: dict | None = None
        self._config_hash = self._hash_config()
        self._producer: threading.Thread | None = None
        self._consumer: threading.Thread | None = None
        self._api_server = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        if (self._frames_override is None
                and self._config.input["type"] == "udp"):
            # bind on the caller's thread so a taken port fails loudly now
            self._listener = UdpListener(port=self._config.input["port"],
                                         host=self._config.input["host"])
        self._running = True
        self._started_at = time.monotonic()
        self._publish()
        self._producer = threading.Thread(target=self._produce, name="mugeetion-src",
                                          daemon=True)
        self._consumer = threading.Thread(target=self._consume, name="mugeetion-pipe",
                                          daemon=True)
        self._producer.start()
        self._consumer.start()
        if self._config.api:
            from .api import start_api
            self._api_server = start_api(self, self._config.api["host"],
                                         self._config.api["port"])

    def run(self) -> int:
        """start() if needed, wait for the source to finish, tear down."""
        try:
            if not self._running:
                self.start()
        except (BindFailed, OSError) as e:
            log.error("startup failed: %s", e)
            return 2
        try:
            while self._consumer.is_alive():
                self._consumer.join(timeout=0.2)
        except KeyboardInterrupt:
            log.info("interrupted, shutting down")
            self.stop()
        self.stop()
        return 2 if self._fatal is not None else 0

    def stop(self) -> None:
        if not self._running:
            return
        self._stop_evt.set()
        if self._listener is not None:
            self._listener.stop()
        self._queue.close()
        if self._producer is not None:
            self._producer.join(timeout=2.0)
        if self._consumer is not None and self._consumer is not threading.current_thread():
            self._consumer.join(timeout=2.0)
        if self._api_server is not None:
            self._api_server.shutdown()
            self._api_server = None
        self._running = False

    @property
    def running(self) -> bool:
        return self._running

    @property
    def fatal_error(self) -> BaseException | None:
        return self._fatal

    @property
    def frames_processed(self) -> int:
        return self._tick

    @property
    def api_server(self):
        return self._api_server

    # -- producer side -----------------------------------------------------

    def _produce(self) -> None:
        try:
            if self._frames_override is not None:
                self._feed_frames(self._frames_override)
            else:
                spec = self._config.input
                if spec["type"] == "udp":
                    self._produce_udp()
                elif spec["type"] == "session":
                    self._feed_frames(replay_session(spec["path"], spec["speed"]))
                elif spec["type"] == "synth":
                    segments = [(s["label"], s["ms"]) for s in spec["segments"]]
                    self._feed_frames(
                        synth_segments(segments, spec["seed"], self._model))
        except BaseException as e:
            self._fatal = e
            log.error("source failed: %s", e)
        finally:
            self._queue.close()

    def _feed_frames(self, frames) -> None:
        for frame in frames:
            if self._stop_evt.is_set():
                break
            self._queue.put(frame, block=True)  # replay never drops

    def _produce_udp(self) -> None:
        assembler = FrameAssembler()
        try:
            while not self._stop_evt.is_set():
                for t_ms, msg in self._listener.poll():
                    for frame in assembler.feed(msg, t_ms):
                        self._queue.put(frame)
                for frame in assembler.flush_stale(self._listener.now_ms()):
                    self._queue.put(frame)
        finally:
            self._listener.close()

    # -- consumer side -----------------------------------------------------

    def _consume(self) -> None:
        stats_due = time.monotonic() + self._config.stats_interval_s
        try:
            while not self._stop_evt.is_set():
                self._drain_commands()
                frame = self._queue.get(timeout=0.05)
                if frame is None:
                    if self._queue.finished:
                        break
                    continue
                self._step(frame)
                self._publish()
                if self._on_tick is not None:
                    self._on_tick(self, self._tick)
                if time.monotonic() >= stats_due:
                    self._log_stats()
                    stats_due = time.monotonic() + self._config.stats_interval_s
        except BaseException as e:
            self._fatal = e
            log.error("pipeline failed: %s", e)
        finally:
            self._drain_commands()
            self._shutdown_sinks()
            self._publish()

    def _step(self, frame: FacialFrame) -> None:
        self._tick += 1
        self._tick_walls.append(time.monotonic())
        self._last_frame = frame
        if frame.face_found:
            aus = extract_aus(frame, self._model.table)
            raw = classify(aus, self._model)
            smoothed = self._smoother.feed(raw)
            self._last_aus = aus
            self._last_raw = raw
            self._last_smoothed = smoothed
            for event in map_frame(frame, smoothed, self._profile,
                                   self._mapper, aus):
                self._midi_sink.write(event)
            cmd = self._selector.feed(smoothed)
            if cmd is not None:
                self._track_sink.write(cmd)
                self._now_playing = cmd.track

    def _shutdown_sinks(self) -> None:
        t = self._last_frame.timestamp if self._last_frame is not None else 0.0
        for event in self._mapper.flush(t):
            self._midi_sink.write(event)
        self._midi_sink.close()
        self._track_sink.close()

    def _log_stats(self) -> None:
        log.info("frames=%d dropped=%d label=%s track=%s",
                 self._tick, self._queue.dropped,
                 self._last_smoothed.label if self._last_smoothed else "-",
                 self._now_playing or "-")

    # -- observability -----------------------------------------------------

    def snapshot(self) -> dict:
        if not self._running:
            raise NotRunning("engine is not running")
        return self._snapshot

    def _publish(self) -> None:
        now = time.monotonic()
        walls = [w for w in self._tick_walls if now - w <= 1.5]
        fps = len(walls) / 1.5
        frame = self._last_frame
        snap = {
            "schema_version": SNAPSHOT_SCHEMA_VERSION,
            "tick": self._tick,
            "stale": self._tick == 0,
            "uptime_s": now - self._started_at,
            "fps": round(fps, 2),
            "frame": None if frame is None else {
                "t_ms": frame.timestamp,
                "found": frame.face_found,
                **{name: getattr(frame, name) for name in FEATURE_NAMES},
            },
            "aus": None if self._last_aus is None else
                {str(au): v for au, v in self._last_aus.scores.items()},
            "raw": _state_doc(self._last_raw),
            "smoothed": _state_doc(self._last_smoothed),
            "intensity": (None if self._last_smoothed is None
                          else self._last_smoothed.intensity),
            "now_playing": self._now_playing,
            "counters": {
                "frames": self._tick,
                "dropped": self._queue.dropped,
                "parse_errors": (self._listener.parse_errors
                                 if self._listener else 0),
            },
            "config": {
                "smoothing_window": self._smoother.window,
                "profile": self._profile.name,
                "emotions": [label for label, _ in self._model.emotions],
                # full model document so a console can edit ranges and
                # send the result back through swap_model
                "model": self._model_doc,
                "hash": self._config_hash,
            },
        }
        self._snapshot = snap

    def _hash_config(self) -> str:
        doc = json.dumps({
            "model": self._model.to_json(),
            "profile": self._profile.to_json(),
            "smoothing_window": self._smoother.window,
        }, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(doc.encode()).hexdigest()

    # -- control -----------------------------------------------------------

    def apply_control(self, cmd: dict, wait: bool = True) -> dict:
        """Validate a command now, apply it between ticks, ack with hash.

        Validation failures raise before anything is queued, so engine
        state never changes on a rejected command. With wait=False (the
        only safe mode from an on_tick callback) the ack reports pending
        and the caller reads the new hash from a later snapshot.
        """
        if not self._running:
            raise NotRunning("engine is not running")
        if not isinstance(cmd, dict):
            raise ValidationFailed("command must be an object")
        apply_fn = self._build_command(cmd)
        command = _Command(apply_fn)
        with self._cmd_lock:
            self._commands.append(command)
        if not wait:
            return {"ok": True, "pending": True}
        if not command.done.wait(timeout=5.0):
            return {"ok": True, "pending": True}
        return command.result

    def _build_command(self, cmd: dict):
        kind = cmd.get("cmd")
        if kind == "set_smoothing_window":
            window = cmd.get("window")
            if (isinstance(window, bool) or not isinstance(window, int)
                    or window < 1 or window % 2 == 0):
                raise ValidationFailed(
                    f"window must be an odd integer >= 1, got {window!r}")

            def apply():
                self._smoother.set_window(window)
            return apply

        if kind == "swap_profile":
            profile = self._parse_profile(cmd.get("profile"))

            def apply():
                # close sounding notes under the old rule indices first
                t = self._last_frame.timestamp if self._last_frame else 0.0
                for event in self._mapper.flush(t):
                    self._midi_sink.write(event)
                self._profile = profile
                selector = TrackSelector(
                    profile.playlist,
                    initial_label=(self._last_smoothed.label
                                   if self._last_smoothed else "neutral"))
                selector.carry_from(self._selector)
                self._selector = selector
            return apply

        if kind == "swap_model":
            model = self._parse_model(cmd.get("model"))

            def apply():
                self._model = model
                self._model_doc = json.loads(model.to_json())
            return apply

        if kind == "set_rule_bounds":
            index = cmd.get("rule_index")
            if not isinstance(index, int) or isinstance(index, bool):
                raise ValidationFailed("rule_index must be an integer")
            if not 0 <= index < len(self._profile.rules):
                raise ValidationFailed(
                    f"rule_index {index} outside 0..{len(self._profile.rules) - 1}")
            updates = {}
            for key in ("in_min", "in_max"):
                if key in cmd:
                    value = cmd[key]
                    if isinstance(value, bool) or not isinstance(value, (int, float)):
                        raise ValidationFailed(f"{key} must be a number")
                    updates[key] = float(value)
            for key in ("out_min", "out_max"):
                if key in cmd:
                    value = cmd[key]
                    if isinstance(value, bool) or not isinstance(value, int):
                        raise ValidationFailed(f"{key} must be an integer")
                    updates[key] = value
            if not updates:
                raise ValidationFailed("no bounds given")
            try:
                new_rule = replace(self._profile.rules[index], **updates)
                new_profile = MappingProfile(
                    name=self._profile.name,
                    rules=self._profile.rules[:index] + (new_rule,)
                    + self._profile.rules[index + 1:],
                    playlist=self._profile.playlist)
            except ValueError as e:
                raise ValidationFailed(str(e)) from None

            def apply():
                self._profile = new_profile
            return apply

        raise ValidationFailed(f"unknown command {kind!r}")

    def _parse_profile(self, doc) -> MappingProfile:
        if isinstance(doc, dict):
            doc = json.dumps(doc)
        if not isinstance(doc, str):
            raise ValidationFailed("profile must be a JSON object or string")
        try:
            return MappingProfile.from_json(doc)
        except Exception as e:
            raise ValidationFailed(f"bad profile: {e}") from None

    def _parse_model(self, doc) -> EmotionModel:
        if isinstance(doc, dict):
            doc = json.dumps(doc)
        if not isinstance(doc, str):
            raise ValidationFailed("model must be a JSON object or string")
        try:
            return EmotionModel.from_json(doc)
        except Exception as e:
            raise ValidationFailed(f"bad model: {e}") from None

    def _drain_commands(self) -> None:
        while True:
            with self._cmd_lock:
                if not self._commands:
                    return
                command = self._commands.popleft()
            try:
                command.apply()
                self._config_hash = self._hash_config()
                command.result = {"ok": True, "config_hash": self._config_hash}
            except Exception as e:
                command.result = {"ok": False, "error": str(e)}
            finally:
                self._publish()
                command.done.set()


def _state_doc(state: EmotionState | None):
    if state is None:
        return None
    return {"label": state.label, "scores": dict(state.scores),
            "t_ms": state.timestamp}


def run(config: EngineConfig) -> int:
    """Build an engine from config and run it to completion."""
    return Engine(config).run()
