// DOM rendering and wiring. Every control maps to exactly one API call;
// all data shown comes from the store.

import { ApiClient, ApiError, type QueryHandle } from "./api.js";
import {
  isGap,
  replayRangeValid,
  Store,
  visibleAlerts,
  type ConsoleState,
} from "./state.js";

export interface Controller {
  store: Store;
  refreshQueries(): Promise<void>;
  refreshStats(): Promise<void>;
  submitEditor(): Promise<QueryHandle | null>;
  stopQuery(id: string): Promise<void>;
  startReplayFromForm(): Promise<boolean>;
  pollReplayOnce(): Promise<void>;
  startAlertTail(): void;
  forceReconnect(): void;
  dispose(): void;
}

function el<T extends HTMLElement>(root: ParentNode, selector: string): T {
  const found = root.querySelector(selector);
  if (!found) throw new Error(`missing element ${selector}`);
  return found as T;
}

function fmtTime(ms: number): string {
  return new Date(ms).toISOString().replace("T", " ").replace(".000Z", "Z");
}

function fmtValue(v: unknown): string {
  if (Array.isArray(v)) return v.map(fmtValue).join(", ");
  return String(v);
}

export function mountConsole(root: ParentNode, api: ApiClient): Controller {
  const store = new Store();
  const editor = el<HTMLTextAreaElement>(root, "#query-editor");
  const diagnostic = el<HTMLElement>(root, "#editor-diagnostic");
  const banner = el<HTMLElement>(root, "#banner");
  const connBadge = el<HTMLElement>(root, "#connection");
  const cards = el<HTMLElement>(root, "#query-cards");
  const tail = el<HTMLTableSectionElement>(root, "#alert-rows");
  const filters = el<HTMLElement>(root, "#alert-filters");
  const agentsBox = el<HTMLSelectElement>(root, "#replay-agents");
  const fromInput = el<HTMLInputElement>(root, "#replay-from");
  const toInput = el<HTMLInputElement>(root, "#replay-to");
  const fromMirror = el<HTMLElement>(root, "#replay-from-human");
  const toMirror = el<HTMLElement>(root, "#replay-to-human");
  const speedInput = el<HTMLInputElement>(root, "#replay-speed");
  const progress = el<HTMLElement>(root, "#replay-progress");
  const replayError = el<HTMLElement>(root, "#replay-error");

  let streamAbort: AbortController | null = null;
  let streamPromise: Promise<void> | null = null;

  // --- rendering -------------------------------------------------------------

  function render(state: ConsoleState): void {
    connBadge.textContent = state.connected ? "live" : "disconnected";
    connBadge.className = state.connected ? "badge ok" : "badge bad";
    banner.textContent = state.banner ?? "";
    banner.style.display = state.banner ? "block" : "none";
    diagnostic.textContent = state.submitError
      ? `line ${state.submitError.line}, col ${state.submitError.col}: ${state.submitError.message}`
      : "";

    cards.replaceChildren(
      ...state.queries.map((q) => {
        const card = document.createElement("div");
        card.className = `card status-${q.status}`;
        card.dataset.queryId = q.id;
        const head = document.createElement("div");
        head.className = "card-head";
        head.textContent = `${q.id} · ${q.status}` + (q.group ? ` · ${q.group}` : "");
        const body = document.createElement("pre");
        body.textContent = q.text.trim();
        const counters = document.createElement("div");
        counters.className = "counters";
        counters.textContent =
          `events ${q.counters.events ?? 0} · windows ${q.counters.windows ?? 0}` +
          ` · alerts ${q.counters.alerts ?? 0}`;
        card.append(head, body, counters);
        if (q.status === "running") {
          const stop = document.createElement("button");
          stop.textContent = "stop";
          stop.addEventListener("click", () => void controller.stopQuery(q.id));
          card.append(stop);
        }
        return card;
      }),
    );

    const known = [...new Set(state.alerts.filter((a) => !isGap(a))
      .map((a) => (a as { query: string }).query))];
    filters.replaceChildren(
      ...known.map((qid) => {
        const label = document.createElement("label");
        const box = document.createElement("input");
        box.type = "checkbox";
        box.checked = !state.hidden.has(qid);
        box.dataset.queryId = qid;
        box.addEventListener("change", () =>
          store.dispatch({ type: "toggle-filter", query: qid }),
        );
        label.append(box, document.createTextNode(qid));
        return label;
      }),
    );

    tail.replaceChildren(
      ...visibleAlerts(state).map((entry) => {
        const row = document.createElement("tr");
        if (isGap(entry)) {
          row.className = "gap";
          const cell = document.createElement("td");
          cell.colSpan = 5;
          cell.textContent = "… feed gap: journal entries expired before reconnect …";
          row.append(cell);
          return row;
        }
        row.dataset.cursor = String(entry.cursor);
        const kind = document.createElement("td");
        kind.innerHTML = `<span class="badge kind-${entry.kind}">${entry.kind}</span>`;
        const query = document.createElement("td");
        query.textContent = entry.query;
        const win = document.createElement("td");
        win.textContent = entry.window === null ? "—" : `w${entry.window}`;
        const values = document.createElement("td");
        values.textContent = fmtValue(entry.values);
        const ts = document.createElement("td");
        ts.textContent = fmtTime(entry.ts);
        row.append(kind, query, win, values, ts);
        return row;
      }),
    );

    const current = new Set(Array.from(agentsBox.options).map((o) => o.value));
    if (state.agents.some((a) => !current.has(a))) {
      agentsBox.replaceChildren(
        ...state.agents.map((agent) => {
          const option = document.createElement("option");
          option.value = agent;
          option.textContent = agent;
          return option;
        }),
      );
    }

    if (state.replay) {
      const { emitted, total, done, error } = state.replay;
      const pct = total > 0 ? Math.min(100, Math.round((emitted / total) * 100)) : 0;
      progress.textContent = done
        ? `done: ${emitted} events`
        : `${pct}% (${emitted}/${total})`;
      (progress.style as CSSStyleDeclaration).setProperty("--pct", `${pct}%`);
      if (error) replayError.textContent = error;
    }
  }

  store.subscribe(render);

  // --- actions ---------------------------------------------------------------

  const controller: Controller = {
    store,

    async refreshQueries() {
      try {
        store.dispatch({ type: "queries", queries: await api.listQueries() });
        store.dispatch({ type: "banner", message: null });
      } catch (err) {
        store.dispatch({ type: "banner", message: `engine unreachable: ${err}` });
      }
    },

    async refreshStats() {
      try {
        const stats = await api.stats();
        store.dispatch({ type: "agents", agents: stats.store.agents });
      } catch (err) {
        store.dispatch({ type: "banner", message: `engine unreachable: ${err}` });
      }
    },

    async submitEditor() {
      store.dispatch({ type: "submit-error", error: null });
      try {
        const handle = await api.submitQuery(editor.value);
        if (handle.status === "error" && handle.error) {
          store.dispatch({ type: "submit-error", error: handle.error });
        } else {
          editor.value = "";
        }
        store.dispatch({ type: "query-upsert", handle });
        return handle;
      } catch (err) {
        // network failure: keep the editor content, show a retryable banner
        store.dispatch({ type: "banner", message: `submit failed: ${err}` });
        return null;
      }
    },

    async stopQuery(id: string) {
      try {
        store.dispatch({ type: "query-upsert", handle: await api.stopQuery(id) });
      } catch (err) {
        store.dispatch({ type: "banner", message: `stop failed: ${err}` });
      }
    },

    async startReplayFromForm() {
      replayError.textContent = "";
      const t_start = fromInput.value === "" ? null : Number(fromInput.value);
      const t_end = toInput.value === "" ? null : Number(toInput.value);
      if (!replayRangeValid(t_start, t_end)) {
        replayError.textContent = "start must be before end";
        return false;
      }
      const spec = {
        agents: Array.from(agentsBox.selectedOptions).map((o) => o.value),
        speed: Number(speedInput.value || "0"),
        ...(t_start !== null ? { t_start } : {}),
        ...(t_end !== null ? { t_end } : {}),
      };
      try {
        await api.startReplay(spec);
        await controller.pollReplayOnce();
        return true;
      } catch (err) {
        replayError.textContent =
          err instanceof ApiError && err.status === 409
            ? `a replay session is already running (${err.message})`
            : `replay failed: ${err}`;
        return false;
      }
    },

    async pollReplayOnce() {
      try {
        store.dispatch({ type: "replay-status", status: await api.replayStatus() });
      } catch {
        // transient while the engine restarts; badge already reflects it
      }
    },

    startAlertTail() {
      if (streamAbort) return;
      streamAbort = new AbortController();
      streamPromise = api.streamAlerts({
        since: store.state.lastCursor,
        signal: streamAbort.signal,
        retryMs: 250,
        onAlert: (alert) => store.dispatch({ type: "alert", alert }),
        onGap: (restart) => store.dispatch({ type: "gap", restart }),
        onStatus: (connected) => store.dispatch({ type: "connection", connected }),
      });
    },

    forceReconnect() {
      // drop the socket; the stream loop reconnects from the last cursor
      const old = streamAbort;
      streamAbort = null;
      old?.abort();
      controller.startAlertTail();
    },

    dispose() {
      streamAbort?.abort();
      streamAbort = null;
      void streamPromise;
    },
  };

  el<HTMLButtonElement>(root, "#submit-query").addEventListener("click", () =>
    void controller.submitEditor(),
  );
  el<HTMLButtonElement>(root, "#start-replay").addEventListener("click", () =>
    void controller.startReplayFromForm(),
  );
  const mirror = (input: HTMLInputElement, target: HTMLElement) => {
    const update = () => {
      target.textContent = input.value === "" ? "" : fmtTime(Number(input.value));
    };
    input.addEventListener("input", update);
    update();
  };
  mirror(fromInput, fromMirror);
  mirror(toInput, toMirror);

  render(store.state);
  return controller;
}
