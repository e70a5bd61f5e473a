// Browser wiring: one EngineClient feeding the DOM panels, plus the
// operator controls (smoothing, profile, model ranges).

import { EngineClient } from "./client.js";
import {
  editModelRanges, ModelDoc, RangeEditError, setSmoothing, Snapshot,
  swapModel, swapProfile,
} from "./protocol.js";
import { auBars, gauges, LabelTimeline, statusLine } from "./view.js";

const LABEL_COLORS: Record<string, string> = {
  happy: "#3a8f4a",
  neutral: "#8a8a8a",
  sad: "#3a5f9f",
};

function engineBase(): string {
  const param = new URLSearchParams(location.search).get("engine");
  if (param) return param.startsWith("http") ? param : `http://${param}`;
  return "http://127.0.0.1:8765";
}

const $ = (id: string) => document.getElementById(id)!;

function setBanner(text: string | null) {
  const el = $("banner");
  el.textContent = text ?? "";
  el.style.display = text ? "block" : "none";
}

function renderBars(snap: Snapshot) {
  const host = $("au-bars");
  host.innerHTML = "";
  for (const bar of auBars(snap)) {
    const row = document.createElement("div");
    row.className = "bar-row";
    const name = document.createElement("span");
    name.className = "bar-name";
    name.textContent = `AU${bar.au}`;
    const track = document.createElement("div");
    track.className = "bar-track";
    const fill = document.createElement("div");
    fill.className = "bar-fill";
    fill.style.width = `${bar.pct}%`;
    track.appendChild(fill);
    const value = document.createElement("span");
    value.className = "bar-value";
    value.textContent = bar.value.toFixed(3);
    row.append(name, track, value);
    host.appendChild(row);
  }
}

function renderGauges(snap: Snapshot) {
  const host = $("gauges");
  host.innerHTML = "";
  for (const g of gauges(snap)) {
    const row = document.createElement("div");
    row.className = "bar-row" + (g.best ? " best" : "");
    const name = document.createElement("span");
    name.className = "bar-name";
    name.textContent = g.label;
    const track = document.createElement("div");
    track.className = "bar-track";
    const fill = document.createElement("div");
    fill.className = "bar-fill";
    fill.style.width = `${g.pct}%`;
    fill.style.background = LABEL_COLORS[g.label] ?? "#999";
    track.appendChild(fill);
    const value = document.createElement("span");
    value.className = "bar-value";
    value.textContent = g.score.toFixed(3);
    row.append(name, track, value);
    host.appendChild(row);
  }
  const label = $("label-big");
  const state = snap.smoothed ?? snap.raw;
  label.textContent = state ? state.label : "(no face yet)";
  label.style.color = state ? LABEL_COLORS[state.label] ?? "#333" : "#999";
}

const timeline = new LabelTimeline();

function renderTimeline(snap: Snapshot) {
  if (snap.smoothed) timeline.push(snap.smoothed.t_ms, snap.smoothed.label);
  const host = $("timeline");
  host.innerHTML = "";
  const now = snap.smoothed ? snap.smoothed.t_ms : 0;
  const windowMs = 60_000;
  for (const seg of timeline.segments(now)) {
    const div = document.createElement("div");
    div.className = "tl-seg";
    div.style.left = `${((seg.startMs - (now - windowMs)) / windowMs) * 100}%`;
    div.style.width = `${((seg.endMs - seg.startMs) / windowMs) * 100}%`;
    div.style.background = LABEL_COLORS[seg.label] ?? "#999";
    div.title = seg.label;
    host.appendChild(div);
  }
}

function renderStatus(snap: Snapshot, live: string) {
  const st = statusLine(snap);
  $("status").textContent =
    `${st.fps.toFixed(1)} fps | ${st.frames} frames | ` +
    `${st.dropped} dropped | ${st.parseErrors} parse errors`;
  $("now-playing").textContent = st.nowPlaying ?? "(nothing yet)";
  const flag = $("stale-flag");
  const stale = st.engineStale || live === "stale";
  flag.style.display = stale ? "inline" : "none";
}

// -- model range editor --------------------------------------------------

let currentModel: ModelDoc | null = null;
let currentHash = "";

function renderRanges(model: ModelDoc) {
  const host = $("ranges");
  host.innerHTML = "";
  for (const emotion of model.emotions) {
    for (const r of emotion.ranges) {
      const row = document.createElement("div");
      row.className = "range-row";
      const name = document.createElement("span");
      name.className = "range-name";
      name.textContent = `${emotion.label} AU${r.au}`;
      const lo = document.createElement("input");
      lo.type = "number";
      lo.step = "0.01";
      lo.value = String(r.min);
      const hi = document.createElement("input");
      hi.type = "number";
      hi.step = "0.01";
      hi.value = String(r.max);
      const apply = document.createElement("button");
      apply.textContent = "apply";
      apply.onclick = () => applyRangeEdit(
        emotion.label, r.au, Number(lo.value), Number(hi.value));
      row.append(name, lo, hi, apply);
      host.appendChild(row);
    }
  }
}

async function applyRangeEdit(label: string, au: number, min: number, max: number) {
  if (!currentModel) return;
  let edited: ModelDoc;
  try {
    edited = editModelRanges(currentModel, label, au, min, max);
  } catch (err) {
    if (err instanceof RangeEditError) {
      setBanner(`edit rejected: ${err.message}`);
      return;
    }
    throw err;
  }
  const ack = await client.control(swapModel(edited));
  setBanner(ack.ok ? null : `engine rejected edit: ${ack.error}`);
}

// -- controls ------------------------------------------------------------

async function applySmoothing() {
  const window = Number(($("smoothing") as HTMLInputElement).value);
  const ack = await client.control(setSmoothing(window));
  setBanner(ack.ok ? null : `smoothing rejected: ${ack.error}`);
}

async function applyProfile() {
  const raw = ($("profile-json") as HTMLTextAreaElement).value.trim();
  if (!raw) return;
  let doc: object;
  try {
    doc = JSON.parse(raw);
  } catch (err) {
    setBanner(`profile is not valid JSON: ${err}`);
    return;
  }
  const ack = await client.control(swapProfile(doc));
  setBanner(ack.ok ? null : `profile rejected: ${ack.error}`);
}

// -- boot ----------------------------------------------------------------

const client = new EngineClient(engineBase());

function onPush(snap: Snapshot) {
  renderBars(snap);
  renderGauges(snap);
  renderTimeline(snap);
  renderStatus(snap, lastLive);
  ($("profile-name") as HTMLElement).textContent = snap.config.profile;
  if (snap.config.hash !== currentHash) {
    currentHash = snap.config.hash;
    currentModel = snap.config.model;
    renderRanges(currentModel);
    ($("smoothing") as HTMLInputElement).value =
      String(snap.config.smoothing_window);
  }
}

let lastLive = "connecting";

function onStatus(status: string, detail?: string) {
  lastLive = status;
  $("conn").textContent = status;
  if (status === "down") {
    setBanner(detail ? `engine unreachable: ${detail}` : "engine unreachable, retrying");
  } else if (status === "live") {
    setBanner(null);
  }
  const flag = $("stale-flag");
  if (status === "stale") flag.style.display = "inline";
}

window.addEventListener("load", () => {
  $("engine-addr").textContent = engineBase();
  ($("smoothing-apply") as HTMLButtonElement).onclick = applySmoothing;
  ($("profile-apply") as HTMLButtonElement).onclick = applyProfile;
  client.connectLive({
    onPush,
    onStatus,
    onError: (detail) => setBanner(detail),
  });
});
