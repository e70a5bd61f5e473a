// Types for the engine's JSON surface, field names as on the wire.
// Parsing is deliberately shallow: we check the fields the console
// renders and carry everything else through untouched.

export const LABELS = ["happy", "neutral", "sad"] as const;
export type Label = (typeof LABELS)[number];

export interface RangeDoc {
  au: number;
  min: number;
  max: number;
  mean: number;
}

export interface ModelDoc {
  format_version: number;
  emotions: { label: string; ranges: RangeDoc[] }[];
  extraction_table: unknown;
  sample_counts: Record<string, number>;
}

export interface EmotionStateDoc {
  label: string;
  scores: Record<string, number>;
  t_ms: number;
}

export interface Snapshot {
  schema_version: number;
  tick: number;
  stale: boolean;
  uptime_s: number;
  fps: number;
  // t_ms and found plus the eight gesture features, flattened
  frame: ({ t_ms: number; found: boolean } & Record<string, number | boolean>) | null;
  aus: Record<string, number> | null;
  raw: EmotionStateDoc | null;
  smoothed: EmotionStateDoc | null;
  intensity: number;
  now_playing: string | null;
  counters: { frames: number; dropped: number; parse_errors: number };
  config: {
    smoothing_window: number;
    profile: string;
    emotions: string[];
    model: ModelDoc;
    hash: string;
  };
}

export interface Ack {
  ok: boolean;
  config_hash?: string;
  pending?: boolean;
  error?: string;
}

export class ProtocolError extends Error {}

function bad(msg: string): never {
  throw new ProtocolError(msg);
}

/** Validate the fields the console depends on; throws ProtocolError. */
export function parseSnapshot(data: unknown): Snapshot {
  if (typeof data !== "object" || data === null) bad("snapshot: not an object");
  const snap = data as Record<string, unknown>;
  if (typeof snap.tick !== "number") bad("snapshot: missing tick");
  if (typeof snap.stale !== "boolean") bad("snapshot: missing stale");
  if (typeof snap.aus !== "object") bad("snapshot: missing aus");
  const counters = snap.counters as Record<string, unknown> | undefined;
  if (!counters || typeof counters.frames !== "number") {
    bad("snapshot: missing counters");
  }
  const config = snap.config as Record<string, unknown> | undefined;
  if (!config || typeof config.hash !== "string") bad("snapshot: missing config");
  if (typeof config.model !== "object" || config.model === null) {
    bad("snapshot: missing config.model");
  }
  for (const key of ["raw", "smoothed"]) {
    const st = snap[key];
    if (st !== null && st !== undefined) {
      const doc = st as Record<string, unknown>;
      if (typeof doc.label !== "string" || typeof doc.scores !== "object") {
        bad(`snapshot: bad ${key} state`);
      }
    }
  }
  return data as Snapshot;
}

// -- control command builders -------------------------------------------

export function setSmoothing(window: number): object {
  return { cmd: "set_smoothing_window", window };
}

export function swapProfile(profile: object | string): object {
  return { cmd: "swap_profile", profile };
}

export function swapModel(model: ModelDoc): object {
  return { cmd: "swap_model", model };
}

export class RangeEditError extends Error {}

/**
 * Return a copy of the model with one emotion's AU range replaced.
 * The engine re-validates on swap_model; this guard just catches the
 * obviously doomed edits before a round trip.
 */
export function editModelRanges(
  model: ModelDoc, label: string, au: number, min: number, max: number,
): ModelDoc {
  if (!Number.isFinite(min) || !Number.isFinite(max)) {
    throw new RangeEditError("range bounds must be finite numbers");
  }
  if (min >= max) {
    throw new RangeEditError(`min ${min} must be below max ${max}`);
  }
  const copy: ModelDoc = JSON.parse(JSON.stringify(model));
  const emotion = copy.emotions.find((e) => e.label === label);
  if (!emotion) throw new RangeEditError(`no emotion ${label} in model`);
  const range = emotion.ranges.find((r) => r.au === au);
  if (!range) throw new RangeEditError(`no AU${au} range under ${label}`);
  if (range.mean < min || range.mean > max) {
    throw new RangeEditError(
      `fitted mean ${range.mean} falls outside [${min}, ${max}]`);
  }
  range.min = min;
  range.max = max;
  return copy;
}
