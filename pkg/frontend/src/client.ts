// Engine client: snapshot/control over HTTP, live feed over WebSocket.
// The socket and fetch implementations are injectable so tests (and the
// node-side e2e harness) can run without a browser.

import { Ack, ProtocolError, parseSnapshot, Snapshot } from "./protocol.js";

export type LiveStatus = "connecting" | "live" | "stale" | "down";

export interface WebSocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export interface LiveHandlers {
  onPush: (snap: Snapshot) => void;
  onStatus?: (status: LiveStatus, detail?: string) => void;
  // non-fatal problems (bad payload, rejected command): banner material
  onError?: (detail: string) => void;
}

export interface ClientOptions {
  fetchFn?: typeof fetch;
  wsFactory?: (url: string) => WebSocketLike;
  staleAfterMs?: number;
  backoffBaseMs?: number;
  backoffMaxMs?: number;
}

export class EngineNotRunning extends Error {}

export class EngineClient {
  private base: string;
  private fetchFn: typeof fetch;
  private wsFactory: (url: string) => WebSocketLike;
  private staleAfterMs: number;
  private backoffBaseMs: number;
  private backoffMaxMs: number;

  private ws: WebSocketLike | null = null;
  private handlers: LiveHandlers | null = null;
  private attempts = 0;
  private staleTimer: ReturnType<typeof setTimeout> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private closed = false;

  constructor(base: string, opts: ClientOptions = {}) {
    this.base = base.replace(/\/+$/, "");
    this.fetchFn = opts.fetchFn ?? ((...args) => fetch(...args));
    this.wsFactory = opts.wsFactory ?? ((url) => {
      if (typeof WebSocket === "undefined") {
        throw new Error("no WebSocket in this runtime; pass wsFactory");
      }
      return new WebSocket(url) as unknown as WebSocketLike;
    });
    this.staleAfterMs = opts.staleAfterMs ?? 1000;
    this.backoffBaseMs = opts.backoffBaseMs ?? 500;
    this.backoffMaxMs = opts.backoffMaxMs ?? 8000;
  }

  async snapshot(): Promise<Snapshot> {
    const res = await this.fetchFn(`${this.base}/v1/snapshot`);
    if (res.status === 409) throw new EngineNotRunning("engine not running");
    if (!res.ok) throw new Error(`snapshot failed: http ${res.status}`);
    return parseSnapshot(await res.json());
  }

  /** Send one control command. Never throws; rejections come back as ok:false. */
  async control(cmd: object): Promise<Ack> {
    try {
      const res = await this.fetchFn(`${this.base}/v1/control`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(cmd),
      });
      const body = (await res.json()) as Ack;
      if (!res.ok && body.error === undefined) {
        return { ok: false, error: `http ${res.status}` };
      }
      return body;
    } catch (err) {
      return { ok: false, error: String(err) };
    }
  }

  connectLive(handlers: LiveHandlers): void {
    this.handlers = handlers;
    this.closed = false;
    this.attempts = 0;
    this.dial();
  }

  close(): void {
    this.closed = true;
    if (this.staleTimer !== null) clearTimeout(this.staleTimer);
    if (this.reconnectTimer !== null) clearTimeout(this.reconnectTimer);
    this.staleTimer = null;
    this.reconnectTimer = null;
    const ws = this.ws;
    this.ws = null;
    if (ws) ws.close();
  }

  get liveUrl(): string {
    return this.base.replace(/^http/, "ws") + "/v1/live";
  }

  private status(s: LiveStatus, detail?: string) {
    this.handlers?.onStatus?.(s, detail);
  }

  private dial() {
    if (this.closed) return;
    this.status("connecting");
    let ws: WebSocketLike;
    try {
      ws = this.wsFactory(this.liveUrl);
    } catch (err) {
      this.status("down", String(err));
      this.scheduleReconnect();
      return;
    }
    this.ws = ws;

    ws.onopen = () => {
      this.attempts = 0;
      this.armStaleTimer();
    };
    ws.onmessage = (ev) => {
      let snap: Snapshot;
      try {
        snap = parseSnapshot(JSON.parse(String(ev.data)));
      } catch (err) {
        const what = err instanceof ProtocolError ? err.message : String(err);
        this.handlers?.onError?.(`dropped bad push: ${what}`);
        return;
      }
      this.armStaleTimer();
      this.status("live");
      this.handlers?.onPush(snap);
    };
    ws.onerror = () => {
      // the close handler owns recovery; nothing to do here
    };
    ws.onclose = () => {
      if (this.ws !== ws) return; // superseded or closed by us
      this.ws = null;
      if (this.staleTimer !== null) clearTimeout(this.staleTimer);
      this.staleTimer = null;
      if (this.closed) return;
      this.status("down");
      this.scheduleReconnect();
    };
  }

  private armStaleTimer() {
    if (this.staleTimer !== null) clearTimeout(this.staleTimer);
    this.staleTimer = setTimeout(() => {
      this.status("stale", `no push for ${this.staleAfterMs}ms`);
    }, this.staleAfterMs);
  }

  private scheduleReconnect() {
    if (this.closed || this.reconnectTimer !== null) return;
    const delay = Math.min(
      this.backoffBaseMs * 2 ** this.attempts, this.backoffMaxMs);
    this.attempts += 1;
    this.reconnectTimer = setTimeout(() => {
      this.reconnectTimer = null;
      this.dial();
    }, delay);
  }
}
