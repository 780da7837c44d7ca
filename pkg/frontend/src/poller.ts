/** Incremental run polling: fetches only rows newer than the last one seen
 * (`since_round`), so live charts append without refetching history. Polls
 * every second while a run is live and backs off to five seconds once it
 * reaches a terminal status. */

import { ApiClient } from "./api.js";
import { MetricsRow, RunStatus, isTerminal } from "./types.js";

export const LIVE_INTERVAL_MS = 1000;
export const FINISHED_INTERVAL_MS = 5000;

export interface PollerCallbacks {
  onRows(rows: MetricsRow[]): void;
  onStatus(status: RunStatus, error: string | null): void;
  onError?(err: unknown): void;
}

export class RunPoller {
  private lastRound = -1;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly api: ApiClient,
    readonly runId: string,
    private readonly callbacks: PollerCallbacks,
  ) {}

  start(): void {
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private async tick(): Promise<void> {
    let interval = LIVE_INTERVAL_MS;
    try {
      const record = await this.api.get(this.runId, this.lastRound);
      if (this.stopped) return;
      if (record.rows.length > 0) {
        this.lastRound = record.rows[record.rows.length - 1].round;
        this.callbacks.onRows(record.rows);
      }
      this.callbacks.onStatus(record.status, record.error);
      if (isTerminal(record.status)) interval = FINISHED_INTERVAL_MS;
    } catch (err) {
      this.callbacks.onError?.(err);
      interval = FINISHED_INTERVAL_MS;
    }
    if (!this.stopped) {
      this.timer = setTimeout(() => void this.tick(), interval);
    }
  }
}
