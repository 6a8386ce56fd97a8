import { describe, expect, it } from "vitest";

import fixture from "../../tests/fixtures/coord_mapping.json";
import { canvasToNormalized, dragToBox, normalizedToPixel } from "../src/coords.js";

interface FixtureCase {
  frame_width: number;
  frame_height: number;
  canvas_width: number;
  canvas_height: number;
  canvas_x: number;
  canvas_y: number;
  normalized_x: number;
  normalized_y: number;
  pixel_col: number;
  pixel_row: number;
}

const cases = (fixture as { cases: FixtureCase[] }).cases;

describe("shared coordinate fixture", () => {
  it("produces exactly the fixture's normalized coordinates", () => {
    for (const c of cases) {
      const { x, y } = canvasToNormalized(c.canvas_x, c.canvas_y, c.canvas_width, c.canvas_height);
      expect(x).toBe(c.normalized_x);
      expect(y).toBe(c.normalized_y);
    }
  });

  it("inverts to the server's pixel lookup", () => {
    for (const c of cases) {
      const { x, y } = canvasToNormalized(c.canvas_x, c.canvas_y, c.canvas_width, c.canvas_height);
      expect(normalizedToPixel(x, c.frame_width)).toBe(c.pixel_col);
      expect(normalizedToPixel(y, c.frame_height)).toBe(c.pixel_row);
    }
  });
});

describe("dragToBox", () => {
  it("orders corners and normalizes", () => {
    const box = dragToBox(48, 40, 8, 8, 64, 64);
    expect(box).not.toBeNull();
    expect(box!.x0).toBeLessThan(box!.x1);
    expect(box!.y0).toBeLessThan(box!.y1);
    expect(box!.x0).toBeCloseTo((8 + 0.5) / 64, 12);
    expect(box!.x1).toBeCloseTo((48 + 0.5) / 64, 12);
  });

  it("returns null for a degenerate drag", () => {
    expect(dragToBox(10, 10, 10, 10, 64, 64)).toBeNull();
  });
});
