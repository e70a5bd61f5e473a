"""mugeetion: facial gestures in, emotion-driven MIDI and track choices out.

A FaceOSC stream (or a recorded/synthetic session) is decoded into
facial frames, scored as action units, classified into happy / neutral /
sad, smoothed, and mapped through a data-driven profile to MIDI events
and playlist commands. A small HTTP/WebSocket API exposes the pipeline
to an operator console.
"""

__version__ = "0.1.0"

from .emotion import (AUVector, EmotionModel, EmotionState, LabelSmoother,
                      classify, default_extraction_table, extract_aus,
                      fit_model, load_model, save_model)
from .faceosc import FEATURE_NAMES, FEATURE_RANGES, FacialFrame, FrameAssembler
from .mapping import (MapperState, MappingProfile, MappingRule, TrackCommand,
                      TrackSelector, default_profile, load_profile, map_frame,
                      save_profile, select_track)
from .midi import (MidiEvent, encode_midi, encode_vlq, normalize_to_midi,
                   write_smf)
from .osc import OscBundle, OscMessage, parse_packet, serialize_message
from .session import (load_training_csv, read_session, record, replay,
                      synth_gestures)

__all__ = [
    "__version__",
    "AUVector", "EmotionModel", "EmotionState", "LabelSmoother",
    "classify", "default_extraction_table", "extract_aus", "fit_model",
    "load_model", "save_model",
    "FEATURE_NAMES", "FEATURE_RANGES", "FacialFrame", "FrameAssembler",
    "MapperState", "MappingProfile", "MappingRule", "TrackCommand",
    "TrackSelector", "default_profile", "load_profile", "map_frame",
    "save_profile", "select_track",
    "MidiEvent", "encode_midi", "encode_vlq", "normalize_to_midi", "write_smf",
    "OscBundle", "OscMessage", "parse_packet", "serialize_message",
    "load_training_csv", "read_session", "record", "replay", "synth_gestures",
]
