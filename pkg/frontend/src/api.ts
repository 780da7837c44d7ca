/** Thin typed client over the fedsim HTTP API. */

import {
  RunConfig, RunRecord, RunStatus, RunSummary, SystemInfo, XAxis, YAxis,
  YScale,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

async function detailOf(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") return body.detail;
  } catch {
    /* non-JSON error body */
  }
  return `${resp.status} ${resp.statusText}`;
}

export interface ExportResult {
  csv: string;
  droppedPoints: number;
}

export class ApiClient {
  constructor(readonly base: string = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    return (await resp.json()) as T;
  }

  launch(config: RunConfig): Promise<{ id: string; status: RunStatus }> {
    return this.json("/experiments", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  list(filters: { group?: string; algorithm?: string; status?: string } = {},
  ): Promise<RunSummary[]> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value) params.set(key, value);
    }
    const qs = params.toString();
    return this.json(`/experiments${qs ? "?" + qs : ""}`);
  }

  get(id: string, sinceRound?: number): Promise<RunRecord> {
    const qs = sinceRound === undefined ? "" : `?since_round=${sinceRound}`;
    return this.json(`/experiments/${id}${qs}`);
  }

  stop(id: string): Promise<{ id: string; status: RunStatus }> {
    return this.json(`/experiments/${id}/stop`, { method: "POST" });
  }

  async cli(id: string): Promise<string> {
    const resp = await fetch(`${this.base}/experiments/${id}/cli`);
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    return resp.text();
  }

  exportUrl(ids: string[], x: XAxis, y: YAxis, scale: YScale): string {
    const [first, ...rest] = ids;
    const params = new URLSearchParams({ x, y, scale });
    if (rest.length > 0) params.set("ids", rest.join(","));
    return `${this.base}/experiments/${first}/export?${params.toString()}`;
  }

  async export(ids: string[], x: XAxis, y: YAxis, scale: YScale,
  ): Promise<ExportResult> {
    const resp = await fetch(this.exportUrl(ids, x, y, scale));
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    const dropped = Number(resp.headers.get("X-Dropped-Points") ?? "0");
    return { csv: await resp.text(), droppedPoints: dropped };
  }

  system(): Promise<SystemInfo> {
    return this.json("/system");
  }
}
