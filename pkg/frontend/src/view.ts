// Pure view-model builders: snapshot in, render-ready rows out.
// Everything here renders only data the engine sent; scales for the AU
// bars come from the model document inside the snapshot itself.

import { ModelDoc, Snapshot } from "./protocol.js";

export interface AuBar {
  au: number;
  value: number;
  lo: number;
  hi: number;
  pct: number; // 0..100, clamped
}

export interface Gauge {
  label: string;
  score: number;
  pct: number; // 100 at score 0, shrinking as the score grows
  best: boolean;
}

export interface StatusLine {
  fps: number;
  frames: number;
  dropped: number;
  parseErrors: number;
  nowPlaying: string | null;
  engineStale: boolean;
}

const SPAN_PAD = 0.05;

/** Per-AU display span: union of that AU's ranges across all emotions. */
export function auSpans(model: ModelDoc): Map<number, { lo: number; hi: number }> {
  const spans = new Map<number, { lo: number; hi: number }>();
  for (const emotion of model.emotions) {
    for (const r of emotion.ranges) {
      const cur = spans.get(r.au);
      if (!cur) {
        spans.set(r.au, { lo: r.min, hi: r.max });
      } else {
        cur.lo = Math.min(cur.lo, r.min);
        cur.hi = Math.max(cur.hi, r.max);
      }
    }
  }
  for (const span of spans.values()) {
    const pad = (span.hi - span.lo) * SPAN_PAD;
    span.lo -= pad;
    span.hi += pad;
  }
  return spans;
}

function clampPct(x: number): number {
  return Math.max(0, Math.min(100, x));
}

export function auBars(snap: Snapshot): AuBar[] {
  if (!snap.aus) return [];
  const spans = auSpans(snap.config.model);
  const bars: AuBar[] = [];
  for (const key of Object.keys(snap.aus).sort((a, b) => Number(a) - Number(b))) {
    const au = Number(key);
    const value = snap.aus[key];
    // an AU the model never ranges still renders, centered on itself
    const span = spans.get(au) ?? { lo: value - 1, hi: value + 1 };
    const width = span.hi - span.lo;
    const pct = width > 0 ? clampPct(((value - span.lo) / width) * 100) : 50;
    bars.push({ au, value, lo: span.lo, hi: span.hi, pct });
  }
  return bars;
}

export function gauges(snap: Snapshot): Gauge[] {
  const state = snap.smoothed ?? snap.raw;
  if (!state) return [];
  return Object.keys(state.scores).map((label) => {
    const score = state.scores[label];
    return {
      label,
      score,
      pct: clampPct(100 / (1 + Math.max(0, score))),
      best: label === state.label,
    };
  });
}

export function statusLine(snap: Snapshot): StatusLine {
  return {
    fps: snap.fps,
    frames: snap.counters.frames,
    dropped: snap.counters.dropped,
    parseErrors: snap.counters.parse_errors,
    nowPlaying: snap.now_playing,
    engineStale: snap.stale,
  };
}

export interface TimelineSegment {
  label: string;
  startMs: number;
  endMs: number;
}

/** Rolling last-60s record of the smoothed label. */
export class LabelTimeline {
  private entries: { t: number; label: string }[] = [];

  constructor(private windowMs = 60_000) {}

  push(tMs: number, label: string): void {
    const last = this.entries[this.entries.length - 1];
    if (last && tMs < last.t) {
      // engine restarted or session looped; start over
      this.entries = [];
    }
    this.entries.push({ t: tMs, label });
    this.prune(tMs);
  }

  private prune(nowMs: number) {
    const cutoff = nowMs - this.windowMs;
    // keep one entry left of the cutoff so the oldest segment still
    // reaches the window edge
    let firstKept = 0;
    while (
      firstKept + 1 < this.entries.length &&
      this.entries[firstKept + 1].t <= cutoff
    ) {
      firstKept += 1;
    }
    if (firstKept > 0) this.entries = this.entries.slice(firstKept);
  }

  /** Merged same-label segments clipped to [now - window, now]. */
  segments(nowMs: number): TimelineSegment[] {
    const cutoff = nowMs - this.windowMs;
    const out: TimelineSegment[] = [];
    for (let i = 0; i < this.entries.length; i++) {
      const entry = this.entries[i];
      const next = this.entries[i + 1];
      const start = Math.max(entry.t, cutoff);
      const end = Math.min(next ? next.t : nowMs, nowMs);
      if (end <= start) continue;
      const last = out[out.length - 1];
      if (last && last.label === entry.label && last.endMs === start) {
        last.endMs = end;
      } else {
        out.push({ label: entry.label, startMs: start, endMs: end });
      }
    }
    return out;
  }

  clear(): void {
    this.entries = [];
  }
}
