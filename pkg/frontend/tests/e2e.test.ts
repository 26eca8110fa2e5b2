/** End-to-end: the plate dialogue driven through the browser client
 * against a real server process.
 *
 * Requires the Python package installed (`voxground serve`); the whole
 * suite is skipped if the server cannot be started.
 */
import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { EventStream } from "../src/stream.js";
import { gapFree, initialView, reduce } from "../src/transcript.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
let server: ChildProcess | null = null;
let available = false;

async function waitForServer(): Promise<boolean> {
  for (let i = 0; i < 60; i++) {
    try {
      const r = await fetch(`${BASE}/api/scene`);
      if (r.ok) return true;
    } catch {
      /* not up yet */
    }
    await new Promise((res) => setTimeout(res, 500));
  }
  return false;
}

function unitDescriptor(dim = 32): number[] {
  // deterministic pseudo-random unit vector; any novel direction works
  const v = Array.from({ length: dim }, (_, i) => Math.sin(7919 * (i + 1)));
  const n = Math.hypot(...v);
  return v.map((x) => x / n);
}

beforeAll(async () => {
  server = spawn(
    "python3",
    ["-m", "voxground.cli", "serve", "--port", String(PORT), "--seed", "11"],
    { stdio: "ignore" },
  );
  available = await waitForServer();
}, 40000);

afterAll(() => {
  server?.kill();
});

describe("plate dialogue through the browser client", () => {
  it("reaches Bound and the learned side grasp rides on later commands", async () => {
    if (!available) return; // no server in this environment
    const api = new ApiClient(BASE);

    let view = initialView();
    const stream = new EventStream((since) => api.events(since));
    stream.onEvent((e) => {
      view = reduce(view, e);
    });

    expect((await api.point("plate1")).ok).toBe(true);
    expect((await api.gesture("claw down")).state).toBe("ProposePose");
    expect((await api.feedback("negative")).state).toBe("ProposePose");
    expect((await api.feedback("positive")).state).toBe("AwaitGesture");
    const bound = await api.gesture("flat hand", unitDescriptor());
    expect(bound.state).toBe("Bound");

    expect((await api.utterance("slide the plate to the block")).ok).toBe(true);

    // replay the whole backlog as if recovering from a dropped stream
    await stream.recover();
    expect(gapFree(view.transcript)).toBe(true);
    expect(view.transcript.length).toBeGreaterThan(0);

    const backlog = await api.events(0);
    const seqs = backlog.map((e) => e.seq);
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
    const grasp = backlog.find(
      (e) =>
        e.kind === "sceneDiff" &&
        (e.payload.diff as Record<string, unknown>)?.grasp === "plate1",
    );
    expect(grasp).toBeDefined();
    expect((grasp!.payload.diff as Record<string, unknown>).pose).toBe("side+X");

    const scene = await api.scene();
    expect(scene.state).toBe("Bound");
  }, 60000);
});
