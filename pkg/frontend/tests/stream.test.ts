import { describe, expect, it } from "vitest";
import { EventStream } from "../src/stream.js";
import { gapFree, initialView, reduce } from "../src/transcript.js";
import type { WireEvent } from "../src/types.js";

function speech(seq: number, reply = `msg ${seq}`): WireEvent {
  return { seq, kind: "agentSpeech", payload: { reply } };
}

describe("event stream gap recovery", () => {
  it("applies in-order events directly", async () => {
    const seen: number[] = [];
    const s = new EventStream(async () => []);
    s.onEvent((e) => seen.push(e.seq));
    await s.push(speech(1));
    await s.push(speech(2));
    expect(seen).toEqual([1, 2]);
    expect(s.lastApplied).toBe(2);
  });

  it("drops duplicates and malformed frames", async () => {
    const seen: number[] = [];
    const s = new EventStream(async () => []);
    s.onEvent((e) => seen.push(e.seq));
    await s.push(speech(1));
    await s.push(speech(1));
    await s.push({ nonsense: true });
    await s.push("garbage");
    expect(seen).toEqual([1]);
  });

  it("a gap triggers an automatic backlog replay; transcript stays gap-free", async () => {
    const all = [1, 2, 3, 4, 5].map((n) => speech(n));
    const fetches: number[] = [];
    const s = new EventStream(async (since) => {
      fetches.push(since);
      return all.filter((e) => e.seq > since);
    });
    let view = initialView();
    s.onEvent((e) => {
      view = reduce(view, e);
    });
    await s.push(speech(1));
    // events 2-4 are lost; 5 arrives over the live stream
    await s.push(speech(5));
    expect(fetches).toEqual([1]);
    expect(view.transcript.map((t) => t.seq)).toEqual([1, 2, 3, 4, 5]);
    expect(gapFree(view.transcript)).toBe(true);
    expect(s.lastApplied).toBe(5);
  });

  it("gaps occupied by logged inputs do not block delivery", async () => {
    // the server's counter covers inputs too, so seq 2 may never exist
    // as an event; the backlog after seq 1 is just [3]
    const s = new EventStream(async (since) =>
      [speech(3)].filter((e) => e.seq > since),
    );
    const seen: number[] = [];
    s.onEvent((e) => seen.push(e.seq));
    await s.push(speech(1));
    await s.push(speech(3)); // apparent gap; server confirms nothing missing
    expect(seen).toEqual([1, 3]);
    expect(s.lastApplied).toBe(3);
  });
});
