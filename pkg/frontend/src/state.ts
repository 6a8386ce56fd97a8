/** View state: one session per tab, one active tool, clamped frame index. */

import type { SceneGraphOutputJson, Vocabulary } from "./api.js";

export type Tool = "point" | "box";

export interface ViewState {
  sessionId: string | null;
  frames: number;
  height: number;
  width: number;
  vocabulary: Vocabulary | null;
  frame: number;
  playing: boolean;
  tool: Tool;
  busy: boolean;
  hiddenTracklets: Set<string>;
  outputs: SceneGraphOutputJson[];
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    frames: 0,
    height: 0,
    width: 0,
    vocabulary: null,
    frame: 0,
    playing: false,
    tool: "point",
    busy: false,
    hiddenTracklets: new Set(),
    outputs: [],
  };
}

export function clampFrame(state: ViewState, frame: number): number {
  if (state.frames <= 0) return 0;
  return Math.min(Math.max(Math.trunc(frame), 0), state.frames - 1);
}

export function toggleTracklet(state: ViewState, trackletId: string): void {
  if (state.hiddenTracklets.has(trackletId)) {
    state.hiddenTracklets.delete(trackletId);
  } else {
    state.hiddenTracklets.add(trackletId);
  }
}
