import { vi } from "vitest";

import { MetricsRow, RunRecord, RunStatus, RunSummary, defaultConfig }
  from "../src/types.js";

export function row(round: number, grad = 1 / (round + 1)): MetricsRow {
  return {
    round,
    f_global: grad * grad,
    grad_norm_global: grad,
    train_loss_sampled: grad * grad,
    oracle_calls_cum: (round + 1) * 500,
    bits_up_cum: (round + 1) * 6400,
    bits_down_cum: 0,
    bits_up_round_avg_per_client: 640,
    clients: 10,
    wall_clock_s: 0.01 * (round + 1),
  };
}

export function record(id: string, status: RunStatus, rows: MetricsRow[],
): RunRecord {
  return {
    id, status, created_at: 1, group: null, comment: null, error: null,
    config: defaultConfig(), rows,
  };
}

export function summary(id: string, status: RunStatus, roundsDone = 0,
): RunSummary {
  return {
    id, status, created_at: 1, group: null, comment: null,
    algorithm: "scaffold", compressor: "randk:40%", rounds_done: roundsDone,
    last_row: null,
  };
}

export interface Route {
  /** substring or regex matched against `${method} ${url}` */
  match: string | RegExp;
  reply: (url: string, init?: RequestInit) =>
    { status?: number; body?: unknown; text?: string;
      headers?: Record<string, string> };
}

/** Installs a fetch mock dispatching on method+URL; returns the call log. */
export function mockFetch(routes: Route[]): Array<{ url: string; init?: RequestInit }> {
  const calls: Array<{ url: string; init?: RequestInit }> = [];
  vi.stubGlobal("fetch", vi.fn(async (url: string, init?: RequestInit) => {
    calls.push({ url, init });
    const key = `${init?.method ?? "GET"} ${url}`;
    for (const route of routes) {
      const hit = typeof route.match === "string"
        ? key.includes(route.match)
        : route.match.test(key);
      if (!hit) continue;
      const out = route.reply(url, init);
      const status = out.status ?? 200;
      const text = out.text ?? JSON.stringify(out.body ?? null);
      const headers = new Map(
        Object.entries(out.headers ?? {}).map(([k, v]) => [k.toLowerCase(), v]));
      // a plain Response-like object: body reads settle in microtasks only,
      // so tests can drive the app with fake timers
      return {
        ok: status >= 200 && status < 300,
        status,
        statusText: "",
        headers: { get: (name: string) => headers.get(name.toLowerCase()) ?? null },
        json: async () => JSON.parse(text),
        text: async () => text,
      } as unknown as Response;
    }
    throw new Error(`unmocked fetch: ${key}`);
  }));
  return calls;
}
