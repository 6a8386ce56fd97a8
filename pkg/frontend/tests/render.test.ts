import { describe, expect, it } from "vitest";

import type { OverlayEntry } from "../src/api.js";
import { maskArea } from "../src/rle.js";
import {
  compositeOverlays,
  OVERLAY_ALPHA,
  paintedPixelCount,
  ROLE_COLORS,
  scaleBuffer,
} from "../src/render.js";

function overlay(partial: Partial<OverlayEntry> & { runs: number[] }): OverlayEntry {
  return {
    prompt_index: 0,
    tracklet_id: "0:0",
    role: "object",
    class_name: "red_disc",
    predicate_name: "near",
    confidence: 0.9,
    height: 4,
    width: 4,
    area: maskArea({ height: 4, width: 4, runs: partial.runs }),
    ...partial,
  };
}

describe("compositeOverlays", () => {
  it("paints exactly the decoded foreground and matches the area field", () => {
    const entry = overlay({ runs: [5, 3, 8] });
    const buffer = compositeOverlays([entry], 4, 4, new Set());
    expect(paintedPixelCount(buffer)).toBe(entry.area);
    // pixel 5 is the first foreground cell
    expect(buffer[5 * 4 + 0]).toBe(ROLE_COLORS.object[0]);
    expect(buffer[5 * 4 + 3]).toBe(OVERLAY_ALPHA);
    expect(buffer[4 * 4 + 3]).toBe(0);
  });

  it("objects win overlapping pixels over subjects", () => {
    const subject = overlay({ runs: [0, 16], role: "subject", tracklet_id: "0:subject" });
    const object = overlay({ runs: [5, 1, 10] });
    const buffer = compositeOverlays([object, subject], 4, 4, new Set());
    expect(buffer[5 * 4 + 0]).toBe(ROLE_COLORS.object[0]);
    expect(buffer[0]).toBe(ROLE_COLORS.subject[0]);
  });

  it("hidden tracklets are skipped", () => {
    const entry = overlay({ runs: [5, 3, 8] });
    const buffer = compositeOverlays([entry], 4, 4, new Set(["0:0"]));
    expect(paintedPixelCount(buffer)).toBe(0);
  });
});

describe("scaleBuffer", () => {
  it("replicates pixels by the scale factor", () => {
    const entry = overlay({ runs: [0, 1, 15] });
    const buffer = compositeOverlays([entry], 4, 4, new Set());
    const scaled = scaleBuffer(buffer, 4, 4, 3);
    expect(paintedPixelCount(scaled)).toBe(9);
  });
});
