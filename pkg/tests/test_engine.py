"""Engine orchestration: config validation, determinism, live control."""

import json
import threading
import time

import pytest

from mugeetion.config import ConfigError, EngineConfig, load_config, parse_config
from mugeetion.demo import demo_model
from mugeetion.engine import Engine, NotRunning, ValidationFailed
from mugeetion.mapping import MappingProfile
from mugeetion.session import synth_segments
from mugeetion.sinks import MemoryMidiSink, MemoryTrackSink

SEGMENTS = [("neutral", 700.0), ("happy", 700.0), ("sad", 700.0)]


def feed_config(**overrides) -> EngineConfig:
    base = dict(input={"type": "synth",
                       "segments": [{"label": l, "ms": ms} for l, ms in SEGMENTS],
                       "seed": 3})
    base.update(overrides)
    return EngineConfig(**base)


def run_engine(frames, config=None, on_tick=None):
    midi, tracks = MemoryMidiSink(), MemoryTrackSink()
    engine = Engine(config or feed_config(), frames=frames,
                    on_tick=on_tick, midi_sink=midi, track_sink=tracks)
    code = engine.run()
    return engine, code, midi, tracks


@pytest.fixture()
def demo_frames():
    return synth_segments(SEGMENTS, 3, demo_model())


class TestParseConfig:
    def test_minimal_udp(self):
        cfg = parse_config({"input": {"type": "udp", "port": 9000}})
        assert cfg.input == {"type": "udp", "port": 9000, "host": "0.0.0.0"}
        assert cfg.smoothing_window == 5
        assert cfg.midi_sink == {"type": "null"}
        assert cfg.api is None

    def test_error_paths_name_fields(self, tmp_path):
        session = tmp_path / "s.jsonl"
        session.write_text('{"format_version":1,"created":"x","source":"u"}\n')
        cases = [
            ({}, "input: required field missing"),
            ({"input": {"type": "udp", "port": 9000}, "volume": 1},
             "unknown fields"),
            ({"input": {"type": "udp"}}, "input.port: required field missing"),
            ({"input": {"type": "udp", "port": 99999}}, "input.port"),
            ({"input": {"type": "teapot"}}, "input.type"),
            ({"input": {"type": "session", "path": "/nope.jsonl"}},
             "input.path: file not found"),
            ({"input": {"type": "session", "path": str(session), "speed": 0}},
             "input.speed"),
            ({"input": {"type": "synth", "segments": []}}, "input.segments"),
            ({"input": {"type": "synth",
                        "segments": [{"label": "bored", "ms": 100}]}},
             "input.segments[0].label"),
            ({"input": {"type": "synth",
                        "segments": [{"label": "happy", "ms": -5}]}},
             "input.segments[0].ms"),
            ({"input": {"type": "udp", "port": 9000}, "smoothing_window": 4},
             "smoothing_window"),
            ({"input": {"type": "udp", "port": 9000},
              "midi_sink": {"type": "tape"}}, "midi_sink.type"),
            ({"input": {"type": "udp", "port": 9000},
              "midi_sink": {"type": "smf"}}, "midi_sink.path"),
            ({"input": {"type": "udp", "port": 9000},
              "api": {"port": 700000}}, "api.port"),
            ({"input": {"type": "udp", "port": 9000}, "model": "/nope.json"},
             "model: file not found"),
        ]
        for doc, needle in cases:
            with pytest.raises(ConfigError, match=None) as exc:
                parse_config(doc)
            assert needle in str(exc.value), doc

    def test_api_disabled_drops_block(self):
        cfg = parse_config({"input": {"type": "udp", "port": 9000},
                            "api": {"enabled": False, "port": 9100}})
        assert cfg.api is None

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "nope.json"))

    def test_load_config_bad_json(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(str(path))

    def test_load_config_good(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "input": {"type": "synth",
                      "segments": [{"label": "happy", "ms": 100}]},
            "smoothing_window": 3}))
        cfg = load_config(str(path))
        assert cfg.smoothing_window == 3
        assert cfg.input["seed"] == 0


class TestEngineRun:
    def test_processes_all_frames(self, demo_frames):
        engine, code, midi, tracks = run_engine(demo_frames)
        assert code == 0
        assert engine.frames_processed == len(demo_frames)
        assert midi.events
        assert tracks.commands

    def test_two_runs_are_identical(self, demo_frames):
        _, _, midi_a, tracks_a = run_engine(demo_frames)
        _, _, midi_b, tracks_b = run_engine(demo_frames)
        assert midi_a.events == midi_b.events
        assert tracks_a.commands == tracks_b.commands

    def test_configured_synth_input_matches_frames_override(self, demo_frames):
        _, _, midi_a, _ = run_engine(demo_frames)
        midi_b, tracks_b = MemoryMidiSink(), MemoryTrackSink()
        engine = Engine(feed_config(), midi_sink=midi_b, track_sink=tracks_b)
        assert engine.run() == 0
        assert midi_b.events == midi_a.events

    def test_shutdown_closes_sounding_notes(self, demo_frames):
        _, _, midi, _ = run_engine(demo_frames)
        sounding = set()
        for e in midi.events:
            key = (e.channel, e.data1)
            if e.kind == "note_on":
                assert key not in sounding
                sounding.add(key)
            elif e.kind == "note_off":
                sounding.discard(key)
        assert not sounding
        assert midi.events[-1].kind == "note_off"

    def test_failing_source_reports_fatal(self):
        def frames():
            yield from synth_segments([("neutral", 200)], 1, demo_model())
            raise RuntimeError("camera unplugged")

        engine, code, _, _ = run_engine(frames())
        assert code == 2
        assert "camera unplugged" in str(engine.fatal_error)

    def test_stop_is_idempotent(self, demo_frames):
        engine, _, _, _ = run_engine(demo_frames)
        engine.stop()
        engine.stop()
        assert not engine.running


class TestSnapshot:
    def test_not_running_raises(self, demo_frames):
        engine = Engine(feed_config(), frames=demo_frames,
                        midi_sink=MemoryMidiSink(), track_sink=MemoryTrackSink())
        with pytest.raises(NotRunning):
            engine.snapshot()
        engine.run()
        with pytest.raises(NotRunning):
            engine.snapshot()

    def test_live_snapshot_shape(self, demo_frames):
        seen = []

        def on_tick(engine, tick):
            if tick in (1, len(demo_frames)):
                seen.append(engine.snapshot())

        run_engine(demo_frames, on_tick=on_tick)
        assert len(seen) == 2
        first, last = seen
        assert first["tick"] == 1 and not first["stale"]
        assert first["frame"]["t_ms"] == demo_frames[0].timestamp
        assert first["schema_version"] == 1
        assert set(first["aus"]) == {"1", "4", "6", "12", "15", "25"}
        assert first["raw"]["label"] in ("happy", "neutral", "sad")
        assert first["smoothed"]["label"] == first["raw"]["label"]
        assert 0.0 <= first["intensity"] <= 1.0
        assert first["counters"]["frames"] == 1
        assert first["config"]["smoothing_window"] == 5
        assert first["config"]["profile"] == "default"
        # the full model document rides along so a console can edit it
        assert first["config"]["model"] == json.loads(demo_model().to_json())
        assert last["counters"]["frames"] == len(demo_frames)
        assert last["now_playing"] is not None

    def test_snapshot_is_immutable_swap(self, demo_frames):
        snaps = []

        def on_tick(engine, tick):
            snaps.append(engine.snapshot())

        run_engine(demo_frames, on_tick=on_tick)
        ticks = [s["tick"] for s in snaps]
        assert ticks == list(range(1, len(demo_frames) + 1))


class PacedFeed:
    """Iterator the test can hold open until released."""

    def __init__(self, frames):
        self._frames = list(frames)
        self._release = threading.Event()
        self._i = 0

    def release(self):
        self._release.set()

    def __iter__(self):
        return self

    def __next__(self):
        if self._i < 3:  # a few frames right away, then hold
            self._i += 1
            return self._frames[self._i - 1]
        self._release.wait(timeout=10.0)
        if self._i >= len(self._frames):
            raise StopIteration
        self._i += 1
        return self._frames[self._i - 1]


def wait_for(predicate, timeout_s=5.0):
    deadline = time.monotonic() + timeout_s
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(0.01)
    return False


class TestControl:
    def start_paced(self, demo_frames):
        feed = PacedFeed(demo_frames)
        midi, tracks = MemoryMidiSink(), MemoryTrackSink()
        engine = Engine(feed_config(), frames=feed, midi_sink=midi,
                        track_sink=tracks)
        engine.start()
        assert wait_for(lambda: engine.frames_processed >= 3)
        return engine, feed, midi

    def finish(self, engine, feed):
        feed.release()
        assert wait_for(lambda: not engine._consumer.is_alive())
        engine.stop()

    def test_set_smoothing_window_acks_with_hash(self, demo_frames):
        engine, feed, _ = self.start_paced(demo_frames)
        try:
            before = engine.snapshot()["config"]["hash"]
            result = engine.apply_control({"cmd": "set_smoothing_window",
                                           "window": 3})
            assert result["ok"] is True
            assert result["config_hash"] != before
            assert engine.snapshot()["config"]["smoothing_window"] == 3
            assert engine.snapshot()["config"]["hash"] == result["config_hash"]
        finally:
            self.finish(engine, feed)

    def test_validation_fails_synchronously(self, demo_frames):
        engine, feed, _ = self.start_paced(demo_frames)
        try:
            before = engine.snapshot()["config"]["hash"]
            for cmd in (
                {"cmd": "set_smoothing_window", "window": 4},
                {"cmd": "set_smoothing_window", "window": "five"},
                {"cmd": "swap_profile", "profile": '{"oops'},
                {"cmd": "swap_model", "model": 7},
                {"cmd": "set_rule_bounds", "rule_index": 99, "in_min": 0.0},
                {"cmd": "set_rule_bounds", "rule_index": 0,
                 "in_min": 2.0, "in_max": 1.0},
                {"cmd": "set_rule_bounds", "rule_index": 0},
                {"cmd": "warp_time"},
            ):
                with pytest.raises(ValidationFailed):
                    engine.apply_control(cmd)
            assert engine.snapshot()["config"]["hash"] == before
        finally:
            self.finish(engine, feed)

    def test_apply_control_requires_running(self, demo_frames):
        engine = Engine(feed_config(), frames=demo_frames,
                        midi_sink=MemoryMidiSink(), track_sink=MemoryTrackSink())
        with pytest.raises(NotRunning):
            engine.apply_control({"cmd": "set_smoothing_window", "window": 3})

    def test_set_rule_bounds_applies(self, demo_frames):
        engine, feed, _ = self.start_paced(demo_frames)
        try:
            result = engine.apply_control({"cmd": "set_rule_bounds",
                                           "rule_index": 3,
                                           "out_min": 60, "out_max": 72})
            assert result["ok"] is True
            rule = engine._profile.rules[3]
            assert (rule.out_min, rule.out_max) == (60, 72)
        finally:
            self.finish(engine, feed)

    def test_swap_profile_flushes_notes(self, demo_frames):
        engine, feed, midi = self.start_paced(demo_frames)
        try:
            sounding = [e for e in midi.events if e.kind == "note_on"]
            assert sounding
            silent = MappingProfile(name="silent", rules=())
            result = engine.apply_control({"cmd": "swap_profile",
                                           "profile": silent.to_json()})
            assert result["ok"] is True
            offs = [e for e in midi.events if e.kind == "note_off"]
            assert offs, "profile swap must close sounding notes"
            assert engine.snapshot()["config"]["profile"] == "silent"
        finally:
            self.finish(engine, feed)

    def test_swap_model_acks(self, demo_frames, fitted_model):
        engine, feed, _ = self.start_paced(demo_frames)
        try:
            result = engine.apply_control({"cmd": "swap_model",
                                           "model": fitted_model.to_json()})
            assert result["ok"] is True
            snap_model = engine.snapshot()["config"]["model"]
            assert snap_model == json.loads(fitted_model.to_json())
        finally:
            self.finish(engine, feed)

    def test_on_tick_can_steer_without_deadlock(self, demo_frames):
        acks = []

        def on_tick(engine, tick):
            if tick == 5:
                acks.append(engine.apply_control(
                    {"cmd": "set_smoothing_window", "window": 7}, wait=False))

        engine, code, _, _ = run_engine(demo_frames, on_tick=on_tick)
        assert code == 0
        assert acks == [{"ok": True, "pending": True}]
        assert engine._smoother.window == 7
