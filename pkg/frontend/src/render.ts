/**
 * Pure overlay compositing: RLE masks -> an RGBA buffer for the overlay
 * layer. Kept DOM-free so tests can assert on pixels without a real canvas.
 *
 * Fixed hues keep roles readable everywhere: subjects render blue, objects
 * orange; predicates are the green text in the triplet panel.
 */

import type { OverlayEntry } from "./api.js";
import { decodeRle } from "./rle.js";

export const ROLE_COLORS: Record<"subject" | "object", [number, number, number]> = {
  subject: [64, 132, 244],
  object: [255, 140, 26],
};

export const PREDICATE_COLOR = "#1fa05a";

export const OVERLAY_ALPHA = 150;

export function emptyOverlayBuffer(width: number, height: number): Uint8ClampedArray {
  return new Uint8ClampedArray(width * height * 4);
}

/**
 * Paint every visible overlay into a fresh RGBA buffer at frame resolution.
 * Later entries win overlapping pixels; subjects are painted first so object
 * masks stay visible on top of their subject.
 */
export function compositeOverlays(
  overlays: OverlayEntry[],
  width: number,
  height: number,
  hidden: ReadonlySet<string>,
): Uint8ClampedArray {
  const buffer = emptyOverlayBuffer(width, height);
  const ordered = [...overlays].sort((a, b) =>
    a.role === b.role ? 0 : a.role === "subject" ? -1 : 1,
  );
  for (const overlay of ordered) {
    if (hidden.has(overlay.tracklet_id)) continue;
    const color = ROLE_COLORS[overlay.role];
    const bits = decodeRle(overlay);
    for (let i = 0; i < bits.length; i++) {
      if (!bits[i]) continue;
      const base = i * 4;
      buffer[base] = color[0];
      buffer[base + 1] = color[1];
      buffer[base + 2] = color[2];
      buffer[base + 3] = OVERLAY_ALPHA;
    }
  }
  return buffer;
}

export function paintedPixelCount(buffer: Uint8ClampedArray): number {
  let count = 0;
  for (let i = 3; i < buffer.length; i += 4) {
    if (buffer[i] > 0) count += 1;
  }
  return count;
}

/** Nearest-neighbor upscale so the overlay buffer matches the canvas size. */
export function scaleBuffer(
  buffer: Uint8ClampedArray,
  width: number,
  height: number,
  scale: number,
): Uint8ClampedArray {
  if (scale === 1) return buffer;
  const out = new Uint8ClampedArray(width * scale * height * scale * 4);
  const rowStride = width * scale * 4;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const src = (y * width + x) * 4;
      if (buffer[src + 3] === 0) continue;
      for (let dy = 0; dy < scale; dy++) {
        const rowBase = (y * scale + dy) * rowStride + x * scale * 4;
        for (let dx = 0; dx < scale; dx++) {
          const dst = rowBase + dx * 4;
          out[dst] = buffer[src];
          out[dst + 1] = buffer[src + 1];
          out[dst + 2] = buffer[src + 2];
          out[dst + 3] = buffer[src + 3];
        }
      }
    }
  }
  return out;
}
