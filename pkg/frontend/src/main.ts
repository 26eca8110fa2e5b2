/** Page wiring: canvas stage, dialogue panel, gesture palette, SSE. */
import { ApiClient, SchemaMismatch } from "./api.js";
import { hitTest, projectScene, type Projected } from "./iso.js";
import { EventStream } from "./stream.js";
import { gapFree, initialView, reduce, type ViewState } from "./transcript.js";
import { once } from "./debounce.js";
import type { SceneJSON } from "./types.js";

const GESTURES = ["claw down", "open palm", "thumbs up", "thumbs down", "grab"];

export function start(root: Document = document): void {
  const api = new ApiClient("");
  const canvas = root.getElementById("stage") as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const transcriptEl = root.getElementById("transcript")!;
  const proposalEl = root.getElementById("proposal")!;
  const bannerEl = root.getElementById("banner")!;
  const stateEl = root.getElementById("fsm")!;

  let view: ViewState = initialView();
  let scene: SceneJSON | null = null;
  let projected: Projected[] = [];

  const stream = new EventStream((since) => api.events(since));
  stream.onEvent((e) => {
    view = reduce(view, e);
    if (e.kind === "sceneDiff") void refreshScene();
    render();
  });

  async function refreshScene(): Promise<void> {
    try {
      const r = await api.scene();
      scene = r.scene;
      view = { ...view, fsmState: r.state, focus: r.focus, banner: null };
    } catch (err) {
      // schema mismatch: show the banner, keep the previous frame
      if (err instanceof SchemaMismatch) {
        view = { ...view, banner: err.message };
      }
    }
    render();
  }

  function render(): void {
    bannerEl.textContent = view.banner ?? "";
    bannerEl.style.display = view.banner ? "block" : "none";
    stateEl.textContent = view.fsmState;
    transcriptEl.innerHTML = view.transcript
      .map((t) => `<div class="${t.speaker}">${t.text}</div>`)
      .join("");
    proposalEl.textContent = view.proposal
      ? `Proposal: grasp ${view.proposal.object} (${view.proposal.pose})`
      : "";
    if (!scene) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    projected = projectScene(scene, [canvas.width / 2, canvas.height / 2]);
    for (const p of projected) {
      ctx.beginPath();
      for (const [i, [x, y]] of p.polygon.entries()) {
        if (i === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      }
      ctx.closePath();
      ctx.fillStyle = p.id === view.focus ? "#ffd54f" : "#90caf9";
      ctx.fill();
      ctx.strokeStyle = "#455a64";
      ctx.stroke();
      ctx.fillStyle = "#263238";
      ctx.fillText(p.id, p.screen[0] - 12, p.screen[1] + 14);
    }
    if (!gapFree(view.transcript)) {
      void stream.recover();
    }
  }

  canvas.addEventListener("click", (ev) => {
    const rect = canvas.getBoundingClientRect();
    const id = hitTest(projected, [ev.clientX - rect.left, ev.clientY - rect.top]);
    if (id) void api.point(id);
  });

  const yes = once(() => void api.feedback("positive"));
  const no = once(() => void api.feedback("negative"));
  root.getElementById("yes")!.addEventListener("click", () => yes());
  root.getElementById("no")!.addEventListener("click", () => no());
  root.getElementById("thumbs-up")!.addEventListener("click", () => yes());
  root.getElementById("thumbs-down")!.addEventListener("click", () => no());

  const palette = root.getElementById("palette")!;
  for (const g of GESTURES) {
    const b = root.createElement("button");
    b.textContent = g;
    b.addEventListener("click", () => void api.gesture(g));
    palette.appendChild(b);
  }
  root.getElementById("novel-gesture")!.addEventListener("click", () => {
    // synthetic unit descriptor standing in for a captured gesture
    const v = Array.from({ length: 32 }, () => Math.random() - 0.5);
    const n = Math.hypot(...v);
    void api.gesture(`novel-${Date.now()}`, v.map((x) => x / n));
  });

  const input = root.getElementById("utterance") as HTMLInputElement;
  root.getElementById("say")!.addEventListener("click", () => {
    if (input.value.trim()) {
      void api.utterance(input.value.trim());
      input.value = "";
    }
  });

  const source = new EventSource("/api/events?since=0&live=1");
  source.onmessage = (m) => void stream.push(JSON.parse(m.data));
  source.onerror = () => void stream.recover();

  void refreshScene();
}

if (typeof document !== "undefined" && document.getElementById("stage")) {
  start();
}
