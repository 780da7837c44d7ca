import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { FINISHED_INTERVAL_MS, LIVE_INTERVAL_MS, RunPoller }
  from "../src/poller.js";
import { MetricsRow, RunStatus } from "../src/types.js";
import { mockFetch, record, row } from "./helpers.js";

beforeEach(() => vi.useFakeTimers());
afterEach(() => {
  vi.useRealTimers();
  vi.unstubAllGlobals();
});

async function flush(): Promise<void> {
  // let pending fetch promises settle between timer steps
  for (let i = 0; i < 5; i++) await Promise.resolve();
}

describe("RunPoller", () => {
  it("appends rows incrementally without refetching history", async () => {
    const pages: Array<{ status: RunStatus; rows: MetricsRow[] }> = [
      { status: "running", rows: [row(0), row(1)] },
      { status: "running", rows: [row(2)] },
      { status: "finished", rows: [row(3)] },
    ];
    let page = 0;
    const calls = mockFetch([{
      match: /GET \/experiments\/r1/,
      reply: () => {
        const current = pages[Math.min(page, pages.length - 1)];
        page += 1;
        return { body: record("r1", current.status, current.rows) };
      },
    }]);

    const seen: number[] = [];
    const statuses: RunStatus[] = [];
    const poller = new RunPoller(new ApiClient(""), "r1", {
      onRows: (rows) => seen.push(...rows.map((r) => r.round)),
      onStatus: (status) => statuses.push(status),
    });
    poller.start();
    await flush();
    expect(seen).toEqual([0, 1]);
    expect(calls[0].url).toBe("/experiments/r1?since_round=-1");

    await vi.advanceTimersByTimeAsync(LIVE_INTERVAL_MS);
    await flush();
    expect(seen).toEqual([0, 1, 2]);
    // only rows after the last seen round were requested
    expect(calls[1].url).toBe("/experiments/r1?since_round=1");

    await vi.advanceTimersByTimeAsync(LIVE_INTERVAL_MS);
    await flush();
    expect(seen).toEqual([0, 1, 2, 3]);
    expect(statuses.at(-1)).toBe("finished");
    poller.stop();
  });

  it("backs off to the slow interval once the run is finished", async () => {
    const calls = mockFetch([{
      match: /GET \/experiments\/r2/,
      reply: () => ({ body: record("r2", "finished", []) }),
    }]);
    const poller = new RunPoller(new ApiClient(""), "r2", {
      onRows: () => {},
      onStatus: () => {},
    });
    poller.start();
    await flush();
    expect(calls.length).toBe(1);

    // a live-interval step must NOT trigger another request...
    await vi.advanceTimersByTimeAsync(LIVE_INTERVAL_MS);
    await flush();
    expect(calls.length).toBe(1);
    // ...but the finished-interval step does
    await vi.advanceTimersByTimeAsync(FINISHED_INTERVAL_MS - LIVE_INTERVAL_MS);
    await flush();
    expect(calls.length).toBe(2);
    poller.stop();
  });

  it("stop() prevents any further requests", async () => {
    const calls = mockFetch([{
      match: /GET \/experiments\/r3/,
      reply: () => ({ body: record("r3", "running", [row(0)]) }),
    }]);
    const poller = new RunPoller(new ApiClient(""), "r3", {
      onRows: () => {},
      onStatus: () => {},
    });
    poller.start();
    await flush();
    poller.stop();
    await vi.advanceTimersByTimeAsync(10 * FINISHED_INTERVAL_MS);
    await flush();
    expect(calls.length).toBe(1);
  });
});
