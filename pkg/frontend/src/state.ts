// Console state lives in one store updated through a single reducer; the UI
// renders from state and never keeps engine data anywhere else, so closing
// and reopening the page reconstructs everything from the server.

import type { AlertRow, QueryHandle, ReplayStatus } from "./api.js";

export interface GapMarker {
  gap: true;
  afterCursor: number;
}

export type AlertEntry = AlertRow | GapMarker;

export function isGap(entry: AlertEntry): entry is GapMarker {
  return (entry as GapMarker).gap === true;
}

export interface ConsoleState {
  queries: QueryHandle[];
  /** newest first, bounded; ordering always matches server cursors */
  alerts: AlertEntry[];
  alertLimit: number;
  lastCursor: number;
  /** query ids explicitly hidden in the tail */
  hidden: ReadonlySet<string>;
  connected: boolean;
  agents: string[];
  replay: ReplayStatus | null;
  banner: string | null;
  submitError: { line: number; col: number; message: string } | null;
}

export function initialState(alertLimit = 500): ConsoleState {
  return {
    queries: [],
    alerts: [],
    alertLimit,
    lastCursor: 0,
    hidden: new Set(),
    connected: false,
    agents: [],
    replay: null,
    banner: null,
    submitError: null,
  };
}

export type Action =
  | { type: "queries"; queries: QueryHandle[] }
  | { type: "query-upsert"; handle: QueryHandle }
  | { type: "alert"; alert: AlertRow }
  | { type: "gap"; restart: number }
  | { type: "toggle-filter"; query: string }
  | { type: "connection"; connected: boolean }
  | { type: "agents"; agents: string[] }
  | { type: "replay-status"; status: ReplayStatus | null }
  | { type: "banner"; message: string | null }
  | { type: "submit-error"; error: ConsoleState["submitError"] };

export function reduce(state: ConsoleState, action: Action): ConsoleState {
  switch (action.type) {
    case "queries":
      return { ...state, queries: action.queries };
    case "query-upsert": {
      const rest = state.queries.filter((q) => q.id !== action.handle.id);
      return { ...state, queries: [...rest, action.handle] };
    }
    case "alert": {
      // server cursors are monotone; anything at or below the last rendered
      // cursor is a replayed duplicate (e.g. after a reconnect race)
      if (action.alert.cursor <= state.lastCursor) return state;
      const alerts = [action.alert as AlertEntry, ...state.alerts];
      if (alerts.length > state.alertLimit) alerts.length = state.alertLimit;
      return { ...state, alerts, lastCursor: action.alert.cursor };
    }
    case "gap": {
      const marker: GapMarker = { gap: true, afterCursor: state.lastCursor };
      return {
        ...state,
        alerts: [marker as AlertEntry, ...state.alerts],
        lastCursor: Math.max(state.lastCursor, action.restart),
      };
    }
    case "toggle-filter": {
      const hidden = new Set(state.hidden);
      if (hidden.has(action.query)) hidden.delete(action.query);
      else hidden.add(action.query);
      return { ...state, hidden };
    }
    case "connection":
      return { ...state, connected: action.connected };
    case "agents":
      return { ...state, agents: action.agents };
    case "replay-status":
      return { ...state, replay: action.status };
    case "banner":
      return { ...state, banner: action.message };
    case "submit-error":
      return { ...state, submitError: action.error };
  }
}

/** Rows the tail should render, honoring per-query filters (gaps stay). */
export function visibleAlerts(state: ConsoleState): AlertEntry[] {
  return state.alerts.filter(
    (entry) => isGap(entry) || !state.hidden.has(entry.query),
  );
}

/** Client-side replay form check: start must precede end. */
export function replayRangeValid(t_start: number | null, t_end: number | null): boolean {
  if (t_start === null || t_end === null) return true; // defaults are open
  return t_start < t_end;
}

export class Store {
  private listeners: ((s: ConsoleState) => void)[] = [];

  constructor(public state: ConsoleState = initialState()) {}

  dispatch = (action: Action): void => {
    this.state = reduce(this.state, action);
    for (const fn of this.listeners) fn(this.state);
  };

  subscribe(fn: (s: ConsoleState) => void): void {
    this.listeners.push(fn);
  }
}
