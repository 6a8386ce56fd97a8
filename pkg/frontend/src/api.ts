/** Typed client for the interaction-graph HTTP API. */

import type { RleMask } from "./rle.js";

export interface Vocabulary {
  object_classes: string[];
  predicate_classes: string[];
}

export interface SessionInfo {
  session_id: string;
  frames: number;
  height: number;
  width: number;
  vocabulary: Vocabulary;
  prompt_count: number;
  busy: boolean;
}

export interface PromptJson {
  kind: "point" | "box" | "mask";
  frame: number;
  point?: [number, number];
  box?: [number, number, number, number];
  mask?: { height: number; width: number; runs: number[] };
}

export interface TubeJson {
  t_start: number;
  t_end: number;
  height: number;
  width: number;
  masks: number[][];
}

export interface TrackletJson {
  subject_class: number;
  object_class: number;
  predicate_class: number;
  confidence: number;
  subject_tube: TubeJson;
  object_tube: TubeJson;
}

export interface SceneGraphOutputJson {
  subject_prompt: PromptJson;
  subject_found: boolean;
  tracklets: TrackletJson[];
}

export interface OverlayEntry extends RleMask {
  prompt_index: number;
  tracklet_id: string;
  role: "subject" | "object";
  class_name: string;
  predicate_name: string | null;
  confidence: number;
  area: number;
  runs: number[];
}

export interface OverlaysResponse {
  frame: number;
  overlays: OverlayEntry[];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

async function expectJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = `${response.status}`;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // keep the status line
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  async createSyntheticSession(scene: Record<string, number>): Promise<SessionInfo> {
    const response = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ source: "synthetic", scene }),
    });
    return expectJson<SessionInfo>(response);
  }

  async sessionInfo(sessionId: string): Promise<SessionInfo> {
    return expectJson<SessionInfo>(await fetch(`${this.baseUrl}/sessions/${sessionId}`));
  }

  async submitPrompt(sessionId: string, prompt: PromptJson): Promise<SceneGraphOutputJson> {
    const response = await fetch(`${this.baseUrl}/sessions/${sessionId}/prompts`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(prompt),
    });
    return expectJson<SceneGraphOutputJson>(response);
  }

  frameUrl(sessionId: string, frame: number): string {
    return `${this.baseUrl}/sessions/${sessionId}/frames/${frame}`;
  }

  async overlays(sessionId: string, frame: number): Promise<OverlaysResponse> {
    return expectJson<OverlaysResponse>(
      await fetch(`${this.baseUrl}/sessions/${sessionId}/frames/${frame}/overlays`),
    );
  }

  async graph(sessionId: string): Promise<{ outputs: SceneGraphOutputJson[] }> {
    return expectJson(await fetch(`${this.baseUrl}/sessions/${sessionId}/graph`));
  }
}
