// The live activity feed: ordered application, sequence de-duplication on
// reconnect, gap markers for dropped events, backoff reconnect resuming
// from the last seen sequence number.

import type { ActivityEventDto, GapMarkerDto } from "./types.js";

export type FeedRow =
  | { type: "event"; event: ActivityEventDto }
  | { type: "gap"; dropped: number };

export class FeedState {
  rows: FeedRow[] = [];
  lastSeq = 0;

  /** Apply one stream message; returns the new row, or null when it was a
   * duplicate from a reconnect replay. */
  apply(message: ActivityEventDto | GapMarkerDto): FeedRow | null {
    if ("gap" in message && message.gap) {
      const row: FeedRow = { type: "gap", dropped: message.dropped };
      this.rows.push(row);
      return row;
    }
    const event = message as ActivityEventDto;
    if (event.seq <= this.lastSeq) return null;
    this.lastSeq = event.seq;
    const row: FeedRow = { type: "event", event };
    this.rows.push(row);
    return row;
  }
}

export interface EventSourceLike {
  onmessage: ((message: { data: string }) => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

type MakeSource = (sinceSeq: number) => EventSourceLike;
type Schedule = (callback: () => void, delayMs: number) => void;

export class LiveFeed {
  readonly state = new FeedState();
  private source: EventSourceLike | null = null;
  private attempts = 0;
  private stopped = false;
  reconnects = 0;

  constructor(
    private makeSource: MakeSource,
    private onRow: (row: FeedRow) => void,
    private schedule: Schedule = (callback, delayMs) => void setTimeout(callback, delayMs),
    private baseDelayMs = 500,
    private maxDelayMs = 15_000,
  ) {}

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    this.source?.close();
    this.source = null;
  }

  private connect(): void {
    if (this.stopped) return;
    const source = this.makeSource(this.state.lastSeq);
    this.source = source;
    source.onmessage = (message) => {
      this.attempts = 0;
      const row = this.state.apply(JSON.parse(message.data));
      if (row) this.onRow(row);
    };
    source.onerror = () => {
      source.close();
      if (this.stopped) return;
      const delay = Math.min(this.baseDelayMs * 2 ** this.attempts, this.maxDelayMs);
      this.attempts += 1;
      this.reconnects += 1;
      this.schedule(() => this.connect(), delay);
    };
  }
}
