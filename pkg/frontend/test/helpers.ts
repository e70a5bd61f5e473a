// A realistic snapshot document for tests, shaped like the engine's
// /v1/snapshot payload. Override fields per test via the patch arg.

import { ModelDoc, Snapshot } from "../src/protocol.js";

export function makeModel(): ModelDoc {
  return {
    format_version: 1,
    emotions: [
      {
        label: "happy",
        ranges: [
          { au: 6, min: 2.54, max: 2.78, mean: 2.66 },
          { au: 12, min: 17.02, max: 19.42, mean: 18.22 },
          { au: 25, min: 2.02, max: 2.72, mean: 2.37 },
        ],
      },
      {
        label: "neutral",
        ranges: [
          { au: 6, min: 2.83, max: 3.07, mean: 2.95 },
          { au: 12, min: 10.3, max: 12.7, mean: 11.5 },
          { au: 25, min: 1.0, max: 1.7, mean: 1.35 },
        ],
      },
      {
        label: "sad",
        ranges: [
          { au: 1, min: 6.75, max: 7.15, mean: 6.95 },
          { au: 4, min: 7.59, max: 7.99, mean: 7.79 },
          { au: 15, min: 15.89, max: 18.29, mean: 17.09 },
        ],
      },
    ],
    extraction_table: {},
    sample_counts: { happy: 20, neutral: 20, sad: 20 },
  };
}

export function makeSnapshot(patch: Partial<Snapshot> = {}): Snapshot {
  const base: Snapshot = {
    schema_version: 1,
    tick: 42,
    stale: false,
    uptime_s: 1.4,
    fps: 30.0,
    frame: {
      t_ms: 1400, found: true,
      mouth_width: 15.2, mouth_height: 2.1,
      eyebrow_left: 7.4, eyebrow_right: 7.3,
      eye_left: 2.9, eye_right: 2.8, jaw: 20.0, nostrils: 7.0,
    },
    aus: { "1": 7.35, "4": 7.39, "6": 2.85, "12": 15.2, "15": 10.09, "25": 2.1 },
    raw: { label: "happy", scores: { happy: 0.1, neutral: 0.9, sad: 2.4 }, t_ms: 1400 },
    smoothed: { label: "happy", scores: { happy: 0.1, neutral: 0.9, sad: 2.4 }, t_ms: 1400 },
    intensity: 0.9,
    now_playing: "Piano Sonata No 16 in C major",
    counters: { frames: 42, dropped: 0, parse_errors: 0 },
    config: {
      smoothing_window: 5,
      profile: "default",
      emotions: ["happy", "neutral", "sad"],
      model: makeModel(),
      hash: "a".repeat(64),
    },
  };
  return { ...base, ...patch };
}
