/** Fold wire events into the dialogue transcript and proposal card. */
import type { WireEvent } from "./types.js";

export interface TranscriptEntry {
  seq: number;
  speaker: "agent" | "system";
  text: string;
}

export interface Proposal {
  object: string;
  pose: string;
  index: number;
}

export interface ViewState {
  transcript: TranscriptEntry[];
  proposal: Proposal | null;
  fsmState: string;
  focus: string | null;
  banner: string | null;
}

export function initialView(): ViewState {
  return {
    transcript: [],
    proposal: null,
    fsmState: "Idle",
    focus: null,
    banner: null,
  };
}

export function reduce(view: ViewState, e: WireEvent): ViewState {
  const next = { ...view, transcript: [...view.transcript] };
  switch (e.kind) {
    case "agentSpeech":
      next.transcript.push({
        seq: e.seq,
        speaker: "agent",
        text: String(e.payload.reply ?? ""),
      });
      break;
    case "proposal":
      next.proposal = {
        object: String(e.payload.object),
        pose: String(e.payload.pose),
        index: Number(e.payload.index),
      };
      break;
    case "stateChange":
      next.fsmState = String(e.payload.to);
      next.focus = (e.payload.focus as string | null) ?? null;
      if (next.fsmState !== "ProposePose") next.proposal = null;
      break;
    case "error":
      next.transcript.push({
        seq: e.seq,
        speaker: "system",
        text: String(e.payload.reply ?? "error"),
      });
      break;
    case "sceneDiff":
      break; // scene updates are handled by re-fetching /api/scene
  }
  return next;
}

/** True when the entries' sequence numbers are strictly increasing. */
export function gapFree(entries: TranscriptEntry[]): boolean {
  for (let i = 1; i < entries.length; i++) {
    if (entries[i].seq <= entries[i - 1].seq) return false;
  }
  return true;
}
