// Typed client for the engine HTTP API. The console talks to exactly these
// endpoints and nothing else:
//   POST   /api/queries            submit query text
//   GET    /api/queries            list handles
//   DELETE /api/queries/{id}       stop
//   GET    /api/alerts/stream      server-sent events, cursor in message id
//   POST   /api/replay             start a replay session
//   GET    /api/replay/status      poll progress
//   GET    /api/stats              agents, groups, journal bounds

export interface QueryError {
  line: number;
  col: number;
  message: string;
}

export interface QueryHandle {
  id: string;
  status: "validating" | "running" | "error" | "stopped";
  group: string | null;
  error: QueryError | null;
  counters: Record<string, number>;
  text: string;
}

export interface AlertRow {
  cursor: number;
  query: string;
  kind: "rule" | "timeseries" | "invariant" | "outlier";
  window: number | null;
  group: unknown[] | null;
  values: unknown[];
  ts: number;
}

export interface ReplaySpec {
  agents: string[];
  t_start?: number;
  t_end?: number;
  speed: number;
}

export interface ReplayStatus {
  running: boolean;
  done: boolean;
  emitted: number;
  total: number;
  speed: number | null;
  wall_ms: number;
  error: string | null;
  effective_rate: number | null;
}

export interface EngineStats {
  queries: number;
  groups: { id: string; master: string | null; dependents: string[] }[];
  journal: { first: number; last: number };
  store: { agents: string[] };
  replay: ReplayStatus;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function expectJson<T>(res: Response): Promise<T> {
  const body = await res.json().catch(() => ({}));
  if (!res.ok) {
    const message = (body as { error?: string }).error ?? res.statusText;
    throw new ApiError(res.status, message);
  }
  return body as T;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  submitQuery(text: string): Promise<QueryHandle> {
    return fetch(`${this.base}/api/queries`, {
      method: "POST",
      headers: { "Content-Type": "text/plain" },
      body: text,
    }).then((r) => expectJson<QueryHandle>(r));
  }

  listQueries(): Promise<QueryHandle[]> {
    return fetch(`${this.base}/api/queries`).then((r) => expectJson<QueryHandle[]>(r));
  }

  stopQuery(id: string): Promise<QueryHandle> {
    return fetch(`${this.base}/api/queries/${id}`, { method: "DELETE" }).then((r) =>
      expectJson<QueryHandle>(r),
    );
  }

  stats(): Promise<EngineStats> {
    return fetch(`${this.base}/api/stats`).then((r) => expectJson<EngineStats>(r));
  }

  startReplay(spec: ReplaySpec): Promise<unknown> {
    return fetch(`${this.base}/api/replay`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    }).then((r) => expectJson(r));
  }

  replayStatus(): Promise<ReplayStatus> {
    return fetch(`${this.base}/api/replay/status`).then((r) =>
      expectJson<ReplayStatus>(r),
    );
  }

  streamAlerts(opts: AlertStreamOptions): Promise<void> {
    return runAlertStream(this.base, opts);
  }
}

// ---------------------------------------------------------------------------
// Server-sent-events plumbing: a small incremental parser (exported for
// tests) plus a reconnecting reader that always resumes from the last seen
// cursor, so a dropped connection never duplicates or loses rendered alerts.

export interface SseMessage {
  event: string; // "message" unless the server names one (e.g. "gap")
  id: number | null;
  data: string;
}

export class SseParser {
  private buffer = "";
  private event = "message";
  private id: number | null = null;
  private data: string[] = [];

  push(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const out: SseMessage[] = [];
    let nl;
    while ((nl = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, nl).replace(/\r$/, "");
      this.buffer = this.buffer.slice(nl + 1);
      if (line === "") {
        if (this.data.length > 0) {
          out.push({ event: this.event, id: this.id, data: this.data.join("\n") });
        }
        this.event = "message";
        this.data = [];
        continue;
      }
      if (line.startsWith(":")) continue; // keepalive comment
      const colon = line.indexOf(":");
      const field = colon < 0 ? line : line.slice(0, colon);
      let value = colon < 0 ? "" : line.slice(colon + 1);
      if (value.startsWith(" ")) value = value.slice(1);
      if (field === "event") this.event = value;
      else if (field === "id") this.id = Number(value);
      else if (field === "data") this.data.push(value);
    }
    return out;
  }
}

export interface AlertStreamOptions {
  since: number;
  signal: AbortSignal;
  onAlert(alert: AlertRow): void;
  onGap(restart: number): void;
  onStatus(connected: boolean): void;
  retryMs?: number;
}

async function runAlertStream(base: string, opts: AlertStreamOptions): Promise<void> {
  let cursor = opts.since;
  const retryMs = opts.retryMs ?? 1000;
  while (!opts.signal.aborted) {
    try {
      const res = await fetch(`${base}/api/alerts/stream?since=${cursor}`, {
        signal: opts.signal,
        headers: { Accept: "text/event-stream" },
      });
      if (!res.ok || res.body === null) throw new ApiError(res.status, res.statusText);
      opts.onStatus(true);
      const reader = res.body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        for (const msg of parser.push(decoder.decode(value, { stream: true }))) {
          if (msg.event === "gap") {
            const restart = (JSON.parse(msg.data) as { restart: number }).restart;
            cursor = restart;
            opts.onGap(restart);
          } else if (msg.id !== null) {
            cursor = msg.id;
            const alert = JSON.parse(msg.data) as Omit<AlertRow, "cursor">;
            opts.onAlert({ cursor: msg.id, ...alert });
          }
        }
      }
    } catch (err) {
      if (opts.signal.aborted) break;
    }
    opts.onStatus(false);
    if (opts.signal.aborted) break;
    await new Promise((resolve) => setTimeout(resolve, retryMs));
  }
}
