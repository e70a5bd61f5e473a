"""Mapping rules, profile documents, frame mapping, and track selection."""

import random

import pytest

from conftest import CLASS_CENTERS
from mugeetion.emotion import EmotionState
from mugeetion.faceosc import FEATURE_RANGES, FacialFrame
from mugeetion.mapping import (
    DEFAULT_PLAYLIST,
    DEFAULT_VELOCITY,
    SOURCE_INTENSITY,
    TARGET_CC,
    TARGET_NOTE,
    TARGET_TRACKS,
    TARGET_TRANSPOSE,
    TARGET_VELOCITY,
    EmptyPlaylist,
    MapperState,
    MappingProfile,
    MappingRule,
    ProfileFormatError,
    TrackSelector,
    au_source_range,
    default_profile,
    load_profile,
    map_frame,
    save_profile,
    select_track,
)
from mugeetion.midi import control_change, note_off, note_on
from reference.scale_ref import ref_scale


def frame(t=0.0, **features) -> FacialFrame:
    base = dict(CLASS_CENTERS["neutral"])
    base.update(features)
    return FacialFrame(timestamp=t, **base)


def state(label="neutral", best=0.0, t=0.0) -> EmotionState:
    return EmotionState(label=label, scores={label: best}, timestamp=t)


class TestRuleScaling:
    def test_matches_reference_full_range(self):
        rule = MappingRule(source="mouth_width", target=TARGET_CC, controller=1)
        lo, hi = FEATURE_RANGES["mouth_width"]
        rng = random.Random(31)
        for _ in range(300):
            x = rng.uniform(lo - 2.0, hi + 2.0)
            assert rule.scaled(x) == ref_scale(x, lo, hi)

    def test_matches_reference_narrow_out_range(self):
        rule = MappingRule(source=SOURCE_INTENSITY, target=TARGET_CC,
                           controller=7, out_min=40, out_max=127)
        rng = random.Random(32)
        for _ in range(300):
            x = rng.uniform(-0.2, 1.2)
            assert rule.scaled(x) == ref_scale(x, 0.0, 1.0, 40, 127)

    def test_clamped_to_out_bounds(self):
        rule = MappingRule(source=SOURCE_INTENSITY, target=TARGET_CC,
                           controller=7, out_min=10, out_max=20)
        assert rule.scaled(-5.0) == 10
        assert rule.scaled(5.0) == 20

    def test_midpoint_rounds_up(self):
        rule = MappingRule(source=SOURCE_INTENSITY, target=TARGET_CC, controller=7)
        assert rule.scaled(0.5) == 64

    def test_constant_out_range(self):
        rule = MappingRule(source=SOURCE_INTENSITY, target=TARGET_NOTE,
                           out_min=60, out_max=60)
        for x in (0.0, 0.3, 1.0):
            assert rule.scaled(x) == 60


class TestRuleDefaults:
    def test_feature_source_uses_calibration(self):
        rule = MappingRule(source="jaw", target=TARGET_CC, controller=1)
        assert (rule.in_min, rule.in_max) == FEATURE_RANGES["jaw"]

    def test_intensity_source_uses_unit_interval(self):
        rule = MappingRule(source=SOURCE_INTENSITY, target=TARGET_CC, controller=1)
        assert (rule.in_min, rule.in_max) == (0.0, 1.0)

    def test_au_source_uses_mean_of_feature_bounds(self):
        rule = MappingRule(source=6, target=TARGET_CC, controller=1)
        lo_l, hi_l = FEATURE_RANGES["eye_left"]
        lo_r, hi_r = FEATURE_RANGES["eye_right"]
        assert rule.in_min == pytest.approx((lo_l + lo_r) / 2)
        assert rule.in_max == pytest.approx((hi_l + hi_r) / 2)
        assert (rule.in_min, rule.in_max) == au_source_range(6)

    def test_au_string_normalized(self):
        rule = MappingRule(source="au:25", target=TARGET_NOTE)
        assert rule.source == 25
        assert (rule.in_min, rule.in_max) == au_source_range(25)

    def test_explicit_bounds_win(self):
        rule = MappingRule(source="jaw", target=TARGET_CC, controller=1,
                           in_min=1.0, in_max=2.0)
        assert (rule.in_min, rule.in_max) == (1.0, 2.0)


class TestRuleValidation:
    def test_bad_values_rejected(self):
        good = dict(source=SOURCE_INTENSITY, target=TARGET_CC, controller=7)
        for patch in (
            dict(source="smile"),
            dict(target="lights"),
            dict(curve="exp"),
            dict(in_min=2.0, in_max=1.0),
            dict(in_min=1.0, in_max=1.0),
            dict(out_min=-1),
            dict(out_max=128),
            dict(out_min=90, out_max=10),
            dict(controller=None),
            dict(controller=300),
            dict(channel=16),
            dict(active_when=("angry",)),
            dict(active_when=()),
        ):
            with pytest.raises(ValueError):
                MappingRule(**{**good, **patch})
        with pytest.raises(ValueError):
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_TRANSPOSE,
                        semitones=60)

    def test_is_active(self):
        always = MappingRule(source=SOURCE_INTENSITY, target=TARGET_TRACKS)
        happy_only = MappingRule(source=SOURCE_INTENSITY, target=TARGET_TRACKS,
                                 active_when=("happy",))
        assert always.is_active("sad")
        assert happy_only.is_active("happy")
        assert not happy_only.is_active("sad")


class TestProfile:
    def test_default_profile_round_trip(self):
        profile = default_profile()
        text = profile.to_json()
        again = MappingProfile.from_json(text)
        assert again.to_json() == text
        assert again.rules == profile.rules
        assert again.playlist == profile.playlist

    def test_save_load(self, tmp_path):
        path = str(tmp_path / "profile.json")
        save_profile(default_profile(), path)
        assert load_profile(path).to_json() == default_profile().to_json()

    def test_unknown_rule_field_rejected(self):
        text = default_profile().to_json().replace(
            '"curve":"linear"', '"curve":"linear","wavetable":3', 1)
        with pytest.raises(ProfileFormatError):
            MappingProfile.from_json(text)

    def test_bad_version_rejected(self):
        text = default_profile().to_json().replace(
            '"format_version":1', '"format_version":9')
        with pytest.raises(ProfileFormatError):
            MappingProfile.from_json(text)

    def test_playlist_must_cover_labels(self):
        with pytest.raises(ValueError):
            MappingProfile(name="x", rules=(), playlist={"happy": ("a",)})

    def test_single_note_stream_per_label(self):
        n1 = MappingRule(source="mouth_height", target=TARGET_NOTE)
        n2 = MappingRule(source="jaw", target=TARGET_NOTE)
        with pytest.raises(ValueError):
            MappingProfile(name="x", rules=(n1, n2))
        # disjoint labels are fine
        MappingProfile(name="x", rules=(
            MappingRule(source="mouth_height", target=TARGET_NOTE,
                        active_when=("happy",)),
            MappingRule(source="jaw", target=TARGET_NOTE,
                        active_when=("sad",)),
        ))

    def test_empty_playlist_list_allowed_until_used(self):
        prof = MappingProfile(name="x", rules=(), playlist={
            "happy": (), "neutral": ("n",), "sad": ("s",)})
        assert prof.playlist["happy"] == ()


def cc_profile(**rule_kwargs) -> MappingProfile:
    defaults = dict(source=SOURCE_INTENSITY, target=TARGET_CC, controller=7)
    return MappingProfile(name="t", rules=(MappingRule(**{**defaults, **rule_kwargs}),))


class TestMapFrame:
    def test_cc_change_only(self):
        mapper = MapperState()
        prof = cc_profile()
        s = state(best=0.5)  # intensity 0.5 -> 64
        out1 = map_frame(frame(t=0.0), s, prof, mapper)
        assert out1 == [control_change(7, 64, 0.0)]
        out2 = map_frame(frame(t=33.0), state(best=0.5, t=33.0), prof, mapper)
        assert out2 == []
        out3 = map_frame(frame(t=66.0), state(best=0.25, t=66.0), prof, mapper)
        assert out3 == [control_change(7, 95, 66.0)]  # intensity 0.75

    def test_cc_deactivation_emits_floor_once(self):
        mapper = MapperState()
        prof = cc_profile(active_when=("happy",), out_min=10)
        map_frame(frame(t=0.0), state("happy", best=0.0), prof, mapper)
        out = map_frame(frame(t=33.0), state("neutral", t=33.0), prof, mapper)
        assert out == [control_change(7, 10, 33.0)]
        out = map_frame(frame(t=66.0), state("neutral", t=66.0), prof, mapper)
        assert out == []

    def test_cc_deactivation_skips_redundant_floor(self):
        mapper = MapperState()
        prof = cc_profile(active_when=("happy",))
        # intensity 0 scales to the floor already
        map_frame(frame(t=0.0), state("happy", best=1.0), prof, mapper)
        out = map_frame(frame(t=33.0), state("neutral", t=33.0), prof, mapper)
        assert out == []

    def test_note_stream_lifecycle(self):
        mapper = MapperState()
        prof = MappingProfile(name="t", rules=(
            MappingRule(source="mouth_height", target=TARGET_NOTE,
                        in_min=0.0, in_max=4.0, out_min=0, out_max=127),))
        out = map_frame(frame(t=0.0, mouth_height=2.0), state(), prof, mapper)
        assert out == [note_on(64, DEFAULT_VELOCITY, 0.0)]
        # same pitch holds silently
        out = map_frame(frame(t=33.0, mouth_height=2.0), state(t=33.0), prof, mapper)
        assert out == []
        # pitch change closes the old note first
        out = map_frame(frame(t=66.0, mouth_height=0.0), state(t=66.0), prof, mapper)
        assert out == [note_off(64, 66.0), note_on(0, DEFAULT_VELOCITY, 66.0)]

    def test_velocity_rule_scopes_note_on(self):
        prof = MappingProfile(name="t", rules=(
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_VELOCITY,
                        out_min=100, out_max=127, active_when=("happy",)),
            MappingRule(source="mouth_height", target=TARGET_NOTE,
                        in_min=0.0, in_max=4.0),
        ))
        mapper = MapperState()
        out = map_frame(frame(t=0.0, mouth_height=2.0), state("happy", best=0.0),
                        prof, mapper)
        assert out == [note_on(64, 127, 0.0)]  # full intensity tops the range
        # back to neutral with a new pitch: velocity resets to the default
        out = map_frame(frame(t=33.0, mouth_height=0.0), state("neutral", t=33.0),
                        prof, mapper)
        assert out == [note_off(64, 33.0), note_on(0, DEFAULT_VELOCITY, 33.0)]

    def test_transpose_shifts_effective_pitch(self):
        prof = MappingProfile(name="t", rules=(
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_TRANSPOSE,
                        semitones=12, active_when=("happy",)),
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_NOTE,
                        out_min=60, out_max=60),
        ))
        mapper = MapperState()
        out = map_frame(frame(t=0.0), state("neutral"), prof, mapper)
        assert out == [note_on(60, DEFAULT_VELOCITY, 0.0)]
        # gaining the transpose re-voices the sounding note
        out = map_frame(frame(t=33.0), state("happy", t=33.0), prof, mapper)
        assert out == [note_off(60, 33.0), note_on(72, DEFAULT_VELOCITY, 33.0)]
        out = map_frame(frame(t=66.0), state("happy", t=66.0), prof, mapper)
        assert out == []
        # losing it re-voices back down
        out = map_frame(frame(t=99.0), state("neutral", t=99.0), prof, mapper)
        assert out == [note_off(72, 99.0), note_on(60, DEFAULT_VELOCITY, 99.0)]

    def test_transposed_pitch_clamped(self):
        prof = MappingProfile(name="t", rules=(
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_TRANSPOSE,
                        semitones=12, active_when=("happy",)),
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_NOTE,
                        out_min=120, out_max=120),
        ))
        mapper = MapperState()
        out = map_frame(frame(t=0.0), state("happy"), prof, mapper)
        assert out == [note_on(127, DEFAULT_VELOCITY, 0.0)]

    def test_note_deactivation_closes_note(self):
        prof = MappingProfile(name="t", rules=(
            MappingRule(source=SOURCE_INTENSITY, target=TARGET_NOTE,
                        out_min=64, out_max=64, active_when=("happy",)),))
        mapper = MapperState()
        map_frame(frame(t=0.0), state("happy"), prof, mapper)
        assert mapper.notes
        out = map_frame(frame(t=33.0), state("sad", t=33.0), prof, mapper)
        assert out == [note_off(64, 33.0)]
        assert not mapper.notes

    def test_au_rule_with_implicit_extraction(self):
        # AU25 mirrors mouth height directly
        prof = MappingProfile(name="t", rules=(
            MappingRule(source=25, target=TARGET_CC, controller=11,
                        in_min=0.0, in_max=4.0),))
        mapper = MapperState()
        out = map_frame(frame(t=0.0, mouth_height=2.0), state(), prof, mapper)
        assert out == [control_change(11, 64, 0.0)]

    def test_au_rule_skipped_when_vector_lacks_it(self):
        from mugeetion.emotion import AUVector
        prof = MappingProfile(name="t", rules=(
            MappingRule(source=25, target=TARGET_CC, controller=11),))
        mapper = MapperState()
        sparse = AUVector(scores={6: 1.0}, timestamp=0.0)
        out = map_frame(frame(t=0.0), state(), prof, mapper, aus=sparse)
        assert out == []

    def test_face_lost_maps_to_nothing(self):
        prof = default_profile()
        mapper = MapperState()
        lost = FacialFrame(timestamp=0.0, mouth_width=0, mouth_height=0,
                           eyebrow_left=0, eyebrow_right=0, eye_left=0,
                           eye_right=0, jaw=0, nostrils=0, face_found=False)
        assert map_frame(lost, state(), prof, mapper) == []

    def test_flush_closes_all_notes(self):
        prof = MappingProfile(name="t", rules=(
            MappingRule(source="mouth_height", target=TARGET_NOTE,
                        in_min=0.0, in_max=4.0, channel=2),))
        mapper = MapperState()
        map_frame(frame(t=0.0, mouth_height=2.0), state(), prof, mapper)
        out = mapper.flush(100.0)
        assert out == [note_off(64, 100.0, channel=2)]
        assert not mapper.notes and not mapper.was_active
        assert mapper.flush(200.0) == []

    def test_default_profile_emits_all_kinds(self):
        prof = default_profile()
        mapper = MapperState()
        events = []
        seq = [("neutral", 0.2), ("happy", 0.0), ("happy", 0.1), ("sad", 0.05)]
        for i, (label, best) in enumerate(seq):
            f = frame(t=i * 33.0, **CLASS_CENTERS[label])
            events += map_frame(f, state(label, best=best, t=i * 33.0),
                                prof, mapper)
        kinds = {e.kind for e in events}
        assert kinds == {"note_on", "note_off", "control_change"}
        # every note_on is eventually matched or still sounding
        sounding = {}
        for e in events:
            if e.kind == "note_on":
                assert (e.channel, e.data1) not in sounding
                sounding[(e.channel, e.data1)] = True
            elif e.kind == "note_off":
                assert sounding.pop((e.channel, e.data1), None)
        assert len(sounding) <= 1


class TestTrackSelection:
    def test_initial_neutral_is_silent(self):
        sel = TrackSelector(DEFAULT_PLAYLIST)
        assert sel.feed(state("neutral")) is None

    def test_change_plays_first_track(self):
        sel = TrackSelector(DEFAULT_PLAYLIST)
        cmd = sel.feed(state("happy", t=5.0))
        assert cmd is not None
        assert (cmd.action, cmd.track, cmd.label, cmd.timestamp) == (
            "play", DEFAULT_PLAYLIST["happy"][0], "happy", 5.0)

    def test_round_robin_on_reentry(self):
        sel = TrackSelector(DEFAULT_PLAYLIST)
        first = sel.feed(state("happy"))
        sel.feed(state("sad"))
        second = sel.feed(state("happy"))
        third_visit = sel.feed(state("sad"))
        fourth = sel.feed(state("happy"))
        assert first.track == DEFAULT_PLAYLIST["happy"][0]
        assert second.track == DEFAULT_PLAYLIST["happy"][1]
        assert fourth.track == DEFAULT_PLAYLIST["happy"][0]  # wrapped
        assert third_visit.track == DEFAULT_PLAYLIST["sad"][1]  # second sad visit

    def test_steady_label_stays_quiet(self):
        sel = TrackSelector(DEFAULT_PLAYLIST)
        sel.feed(state("happy"))
        for _ in range(10):
            assert sel.feed(state("happy")) is None

    def test_empty_playlist_raises_on_entry(self):
        sel = TrackSelector({"happy": (), "neutral": ("n",), "sad": ("s",)})
        with pytest.raises(EmptyPlaylist):
            sel.feed(state("happy"))

    def test_carry_from_keeps_rotation_for_unchanged_labels(self):
        old = TrackSelector(DEFAULT_PLAYLIST)
        old.feed(state("happy"))  # happy cursor now points at track 1
        old.feed(state("sad"))
        new = TrackSelector(DEFAULT_PLAYLIST, initial_label="sad")
        new.carry_from(old)
        cmd = new.feed(state("happy"))
        assert cmd.track == DEFAULT_PLAYLIST["happy"][1]

    def test_carry_from_resets_changed_labels(self):
        old = TrackSelector(DEFAULT_PLAYLIST)
        old.feed(state("happy"))
        changed = dict(DEFAULT_PLAYLIST)
        changed["happy"] = ("Rondo Alla Turca",)
        new = TrackSelector(changed, initial_label="neutral")
        new.carry_from(old)
        cmd = new.feed(state("happy"))
        assert cmd.track == "Rondo Alla Turca"

    def test_offline_helper(self):
        states = [state(lbl, t=float(i)) for i, lbl in enumerate(
            ["neutral", "happy", "happy", "sad", "happy"])]
        cmds = select_track(states, default_profile())
        assert [c.track for c in cmds] == [
            DEFAULT_PLAYLIST["happy"][0],
            DEFAULT_PLAYLIST["sad"][0],
            DEFAULT_PLAYLIST["happy"][1],
        ]
