/**
 * Canvas <-> normalized coordinate mapping.
 *
 * The server looks a normalized point up as pixel
 * (min(floor(x*width), width-1), min(floor(y*height), height-1)); sending the
 * *center* of the clicked canvas cell makes this mapping its exact inverse
 * whenever the canvas is an integer multiple of the frame size.
 */

export interface NormalizedPoint {
  x: number;
  y: number;
}

export function canvasToNormalized(
  px: number,
  py: number,
  canvasWidth: number,
  canvasHeight: number,
): NormalizedPoint {
  return {
    x: (Math.min(Math.max(px, 0), canvasWidth - 1) + 0.5) / canvasWidth,
    y: (Math.min(Math.max(py, 0), canvasHeight - 1) + 0.5) / canvasHeight,
  };
}

/** Mirrors the server-side pixel lookup exactly. */
export function normalizedToPixel(value: number, size: number): number {
  return Math.max(Math.min(Math.floor(value * size), size - 1), 0);
}

export interface NormalizedBox {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

/** Drag rectangle (any corner order) -> normalized box with min < max. */
export function dragToBox(
  startX: number,
  startY: number,
  endX: number,
  endY: number,
  canvasWidth: number,
  canvasHeight: number,
): NormalizedBox | null {
  const a = canvasToNormalized(Math.min(startX, endX), Math.min(startY, endY), canvasWidth, canvasHeight);
  const b = canvasToNormalized(Math.max(startX, endX), Math.max(startY, endY), canvasWidth, canvasHeight);
  if (a.x >= b.x || a.y >= b.y) return null; // degenerate drag, treat as no box
  return { x0: a.x, y0: a.y, x1: b.x, y1: b.y };
}
