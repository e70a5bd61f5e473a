"""Command line entry points.

Exit codes: 0 ok, 1 configuration/usage error, 2 runtime failure.
MUGEETION_LOG sets the log level (debug/info/warning/error).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ConfigError, EngineConfig, load_config
from .demo import demo_model
from .emotion import (AUExtractionTable, EmotionError, default_extraction_table,
                      fit_model, load_model, save_model)
from .engine import Engine
from .faceosc import FrameAssembler
from .net import BindFailed, UdpListener
from .session import (SessionError, SessionWriter, dump_session,
                      load_training_csv, synth_gestures)
from .sinks import RawMidiFileSink, SmfFileSink, TeeMidiSink

log = logging.getLogger("mugeetion.cli")


class _Parser(argparse.ArgumentParser):
    # usage mistakes are config errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _setup_logging() -> None:
    level_name = os.environ.get("MUGEETION_LOG", "warning").upper()
    level = getattr(logging, level_name, logging.WARNING)
    logging.basicConfig(level=level,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _speed(value: str):
    if value == "max":
        return "max"
    try:
        speed = float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"speed must be a number or 'max', got {value!r}")
    if speed <= 0:
        raise argparse.ArgumentTypeError("speed must be positive")
    return speed


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mugeetion",
                     description="Facial-gesture sonification engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the engine from a config file")
    p.add_argument("--config", required=True, help="engine config JSON")

    p = sub.add_parser("fit", help="fit an emotion model from a labeled CSV")
    p.add_argument("--csv", required=True, help="training data CSV")
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--table", help="custom AU extraction table JSON")

    p = sub.add_parser("replay", help="replay a session file through the pipeline")
    p.add_argument("session", help="session file to replay")
    p.add_argument("--speed", type=_speed, default="max",
                   help="timing multiplier or 'max' (default)")
    p.add_argument("--model", help="model file (built-in demo model if omitted)")
    p.add_argument("--profile", help="mapping profile JSON")
    p.add_argument("--smf", help="write the MIDI output as a Standard MIDI File")
    p.add_argument("--midi-out", help="write raw MIDI bytes to this file")
    p.add_argument("--track-out", help="write track commands as JSON lines")

    p = sub.add_parser("simulate", help="generate a synthetic gesture session")
    p.add_argument("--emotion", required=True, choices=("happy", "neutral", "sad"))
    p.add_argument("--seconds", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", help="model file (built-in demo model if omitted)")
    p.add_argument("--out", help="session output path (stdout if omitted)")

    p = sub.add_parser("record", help="record incoming FaceOSC frames to a session")
    p.add_argument("--port", type=int, default=8338)
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--out", required=True, help="session output path")

    return parser


def _cmd_run(args) -> int:
    try:
        config = load_config(args.config)
        engine = Engine(config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        engine.start()
    except (BindFailed, OSError) as e:
        print(f"startup failed: {e}", file=sys.stderr)
        return 2
    if engine.api_server is not None:
        # port 0 in the config binds an ephemeral port; tell the
        # operator (and any scripted console) where we actually are
        host = config.api["host"]
        print(f"api listening on http://{host}:{engine.api_server.port}",
              flush=True)
    return engine.run()


def _cmd_fit(args) -> int:
    try:
        table = default_extraction_table()
        if args.table:
            with open(args.table, encoding="utf-8") as f:
                table = AUExtractionTable.from_dict(json.load(f))
        samples = load_training_csv(args.csv)
        model = fit_model(samples, table)
        save_model(model, args.out)
    except (SessionError, EmotionError, OSError, json.JSONDecodeError) as e:
        print(f"fit failed: {e}", file=sys.stderr)
        return 1
    print(f"model written to {args.out}")
    for label, ranges in model.emotions:
        print(f"  {label}: {model.sample_counts[label]} samples")
        for r in ranges:
            print(f"    AU{r.au}: [{r.lo:.4f}, {r.hi:.4f}] mean {r.mean:.4f}")
    return 0


def _cmd_replay(args) -> int:
    track_sink_spec = ({"type": "jsonl", "path": args.track_out}
                       if args.track_out else {"type": "null"})
    try:
        if not os.path.exists(args.session):
            raise ConfigError(f"session file not found: {args.session}")
        for name, path in (("model", args.model), ("profile", args.profile)):
            if path and not os.path.exists(path):
                raise ConfigError(f"{name}: file not found: {path}")
        config = EngineConfig(
            input={"type": "session", "path": args.session, "speed": args.speed},
            model_path=args.model, profile_path=args.profile,
            track_sink=track_sink_spec)
        # output files open only after the inputs check out
        midi_children = []
        if args.midi_out:
            midi_children.append(RawMidiFileSink(args.midi_out))
        if args.smf:
            midi_children.append(SmfFileSink(args.smf))
        midi_sink = TeeMidiSink(*midi_children) if midi_children else None
        engine = Engine(config, midi_sink=midi_sink)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    status = engine.run()
    if status == 0:
        print(f"replayed {engine.frames_processed} frames")
    elif engine.fatal_error is not None:
        print(f"replay failed: {engine.fatal_error}", file=sys.stderr)
    return status


def _cmd_simulate(args) -> int:
    try:
        model = load_model(args.model) if args.model else demo_model()
        frames = synth_gestures(args.emotion, args.seconds * 1000.0,
                                args.seed, model)
    except (EmotionError, OSError) as e:
        print(f"simulate failed: {e}", file=sys.stderr)
        return 1
    source = f"synth:{args.emotion}:seed={args.seed}"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as f:
            count = dump_session(frames, f, source=source)
        print(f"wrote {count} frames to {args.out}")
    else:
        dump_session(frames, sys.stdout, source=source)
    return 0


def _cmd_record(args) -> int:
    try:
        listener = UdpListener(port=args.port, host=args.host)
    except BindFailed as e:
        print(f"cannot listen: {e}", file=sys.stderr)
        return 1
    assembler = FrameAssembler()
    count = 0
    try:
        with SessionWriter(args.out, source=f"udp:{args.port}") as writer:
            print(f"recording from UDP port {listener.port}; Ctrl-C to stop",
                  file=sys.stderr)
            try:
                while True:
                    for t_ms, msg in listener.poll():
                        for frame in assembler.feed(msg, t_ms):
                            writer.write(frame)
                            count += 1
                    for frame in assembler.flush_stale(listener.now_ms()):
                        writer.write(frame)
                        count += 1
            except KeyboardInterrupt:
                for frame in assembler.finish():
                    writer.write(frame)
                    count += 1
    except SessionError as e:
        print(f"record failed: {e}", file=sys.stderr)
        return 2
    finally:
        listener.close()
    print(f"recorded {count} frames to {args.out}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    handlers = {
        "run": _cmd_run,
        "fit": _cmd_fit,
        "replay": _cmd_replay,
        "simulate": _cmd_simulate,
        "record": _cmd_record,
    }
    try:
        return handlers[args.command](args)
    except KeyboardInterrupt:
        return 0
    except Exception as e:  # anything unplanned is a runtime failure
        log.exception("fatal")
        print(f"fatal: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
