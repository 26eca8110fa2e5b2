/** Ordered event consumption with gap recovery.
 *
 * The server numbers inputs and events from one shared counter, so the
 * event stream may legitimately skip sequence numbers (inputs occupy
 * them). On any apparent gap the client re-fetches the backlog after the
 * last applied event; the server's answer is authoritative, so every
 * event it returns is applied in order and anything that arrived live in
 * the meantime is flushed after it. Events are never applied out of
 * order and never applied twice.
 */
import type { WireEvent } from "./types.js";
import { isWireEvent } from "./types.js";

export type BacklogFetch = (since: number) => Promise<WireEvent[]>;

export class EventStream {
  private lastSeq = 0;
  private pending = new Map<number, WireEvent>();
  private listeners: Array<(e: WireEvent) => void> = [];
  private recovering = false;

  constructor(private backlog: BacklogFetch) {}

  get lastApplied(): number {
    return this.lastSeq;
  }

  onEvent(fn: (e: WireEvent) => void): void {
    this.listeners.push(fn);
  }

  private apply(e: WireEvent): void {
    this.lastSeq = e.seq;
    for (const fn of this.listeners) fn(e);
  }

  /** Feed one event from the live stream; recovers on sequence gaps. */
  async push(raw: unknown): Promise<void> {
    if (!isWireEvent(raw)) return; // malformed frames are dropped
    const e = raw;
    if (e.seq <= this.lastSeq) return; // duplicate
    if (e.seq === this.lastSeq + 1) {
      this.apply(e);
      return;
    }
    // can't tell a benign input-occupied gap from a lost event; ask the server
    this.pending.set(e.seq, e);
    await this.recover();
  }

  /** Re-fetch everything after the last applied event and flush in order. */
  async recover(): Promise<void> {
    if (this.recovering) return;
    this.recovering = true;
    try {
      const missed = await this.backlog(this.lastSeq);
      for (const e of missed.slice().sort((a, b) => a.seq - b.seq)) {
        if (e.seq > this.lastSeq) this.apply(e);
      }
      // anything that arrived live during the fetch and is still ahead
      const rest = [...this.pending.values()].sort((a, b) => a.seq - b.seq);
      this.pending.clear();
      for (const e of rest) {
        if (e.seq > this.lastSeq) this.apply(e);
      }
    } finally {
      this.recovering = false;
    }
  }
}
