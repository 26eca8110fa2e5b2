/** Thin typed client over the service's documented endpoints.
 *
 * Every user action in the UI funnels through exactly one of these calls.
 */
import type { CommandResult, SceneResponse, WireEvent } from "./types.js";
import { isSceneJSON } from "./types.js";

export class SchemaMismatch extends Error {}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  text(): Promise<string>;
}>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private async get(path: string): Promise<unknown> {
    const r = await this.fetchImpl(this.base + path);
    if (!r.ok) throw new SchemaMismatch(`GET ${path} -> ${r.status}`);
    return r.json();
  }

  private async post(path: string, body: unknown): Promise<unknown> {
    const r = await this.fetchImpl(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!r.ok) throw new SchemaMismatch(`POST ${path} -> ${r.status}`);
    return r.json();
  }

  async scene(): Promise<SceneResponse> {
    const body = (await this.get("/api/scene")) as SceneResponse;
    if (!isSceneJSON(body?.scene)) {
      throw new SchemaMismatch("scene payload malformed");
    }
    return body;
  }

  utterance(text: string): Promise<CommandResult> {
    return this.post("/api/utterance", { text }) as Promise<CommandReply>;
  }

  point(objectId: string): Promise<CommandResult> {
    return this.post("/api/point", { objectId }) as Promise<CommandReply>;
  }

  feedback(polarity: "positive" | "negative"): Promise<CommandResult> {
    return this.post("/api/feedback", { polarity }) as Promise<CommandReply>;
  }

  gesture(name: string, descriptor?: number[]): Promise<CommandResult> {
    return this.post("/api/gesture", { name, descriptor }) as Promise<CommandReply>;
  }

  async events(since: number): Promise<WireEvent[]> {
    // backlog fetch used for gap recovery; live updates come over SSE
    const r = await this.fetchImpl(`${this.base}/api/events?since=${since}`);
    if (!r.ok) throw new SchemaMismatch(`events -> ${r.status}`);
    return parseSSE(await r.text());
  }

  constraints(): Promise<unknown> {
    return this.get("/api/constraints");
  }

  voxemes(): Promise<unknown> {
    return this.get("/api/voxemes");
  }
}

type CommandReply = CommandResult;

/** Parse an SSE body into wire events (used for backlog/gap recovery). */
export function parseSSE(text: string): WireEvent[] {
  const out: WireEvent[] = [];
  for (const line of text.split("\n")) {
    if (line.startsWith("data: ")) {
      out.push(JSON.parse(line.slice(6)) as WireEvent);
    }
  }
  return out;
}
