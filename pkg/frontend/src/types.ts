/** Wire types mirroring the service's documented JSON payloads. */

export interface SceneObject {
  id: string;
  voxeme: string;
  position: [number, number, number];
  rotationQuat: [number, number, number, number];
  extents: [number, number, number];
}

export interface SceneJSON {
  objects: SceneObject[];
  clock: number;
}

export interface SceneResponse {
  scene: SceneJSON;
  hash: string;
  focus: string | null;
  state: string;
}

export type EventKind =
  | "sceneDiff"
  | "agentSpeech"
  | "proposal"
  | "stateChange"
  | "error";

export interface WireEvent {
  seq: number;
  kind: EventKind;
  payload: Record<string, unknown>;
}

export interface CommandResult {
  reply: string;
  ok: boolean;
  state?: string;
}

export function isSceneJSON(x: unknown): x is SceneJSON {
  if (typeof x !== "object" || x === null) return false;
  const s = x as SceneJSON;
  if (!Array.isArray(s.objects)) return false;
  return s.objects.every(
    (o) =>
      typeof o === "object" &&
      o !== null &&
      typeof o.id === "string" &&
      Array.isArray(o.position) &&
      o.position.length === 3 &&
      Array.isArray(o.extents) &&
      o.extents.length === 3,
  );
}

export function isWireEvent(x: unknown): x is WireEvent {
  if (typeof x !== "object" || x === null) return false;
  const e = x as WireEvent;
  return (
    typeof e.seq === "number" &&
    typeof e.kind === "string" &&
    typeof e.payload === "object" &&
    e.payload !== null
  );
}
