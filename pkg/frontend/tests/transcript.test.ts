import { describe, expect, it } from "vitest";
import { gapFree, initialView, reduce } from "../src/transcript.js";
import type { WireEvent } from "../src/types.js";

const ev = (seq: number, kind: WireEvent["kind"], payload: WireEvent["payload"]): WireEvent => ({
  seq,
  kind,
  payload,
});

describe("transcript reducer", () => {
  it("accumulates agent speech in order", () => {
    let v = initialView();
    v = reduce(v, ev(1, "agentSpeech", { reply: "hello" }));
    v = reduce(v, ev(2, "agentSpeech", { reply: "there" }));
    expect(v.transcript.map((t) => t.text)).toEqual(["hello", "there"]);
    expect(gapFree(v.transcript)).toBe(true);
  });

  it("tracks the FSM state and focused object", () => {
    let v = initialView();
    v = reduce(v, ev(1, "stateChange", { to: "ObjectFocus", focus: "plate1" }));
    expect(v.fsmState).toBe("ObjectFocus");
    expect(v.focus).toBe("plate1");
  });

  it("shows a proposal card and clears it when the proposal phase ends", () => {
    let v = initialView();
    v = reduce(v, ev(1, "stateChange", { to: "ProposePose", focus: "plate1" }));
    v = reduce(v, ev(2, "proposal", { object: "plate1", pose: "beneath", index: 0 }));
    expect(v.proposal).toEqual({ object: "plate1", pose: "beneath", index: 0 });
    v = reduce(v, ev(3, "stateChange", { to: "AwaitGesture", focus: "plate1" }));
    expect(v.proposal).toBeNull();
  });

  it("renders errors into the transcript as system lines", () => {
    let v = initialView();
    v = reduce(v, ev(1, "error", { reply: "no such object" }));
    expect(v.transcript[0].speaker).toBe("system");
    expect(v.transcript[0].text).toBe("no such object");
  });

  it("does not mutate the previous view", () => {
    const v0 = initialView();
    const v1 = reduce(v0, ev(1, "agentSpeech", { reply: "x" }));
    expect(v0.transcript).toHaveLength(0);
    expect(v1.transcript).toHaveLength(1);
  });
});
