/**
 * Run-length mask codec matching the server's interchange convention:
 * row-major runs, first run is background (possibly zero-length).
 */

export interface RleMask {
  height: number;
  width: number;
  runs: number[];
}

export function decodeRle(mask: RleMask): Uint8Array {
  const total = mask.height * mask.width;
  const out = new Uint8Array(total);
  let offset = 0;
  for (let i = 0; i < mask.runs.length; i++) {
    const run = mask.runs[i];
    if (run < 0) throw new Error(`negative run length ${run}`);
    const value = i % 2; // odd-indexed runs are foreground
    if (value === 1) out.fill(1, offset, offset + run);
    offset += run;
  }
  if (offset !== total) {
    throw new Error(`runs cover ${offset} cells, expected ${total}`);
  }
  return out;
}

export function maskArea(mask: RleMask): number {
  let area = 0;
  for (let i = 1; i < mask.runs.length; i += 2) area += mask.runs[i];
  return area;
}
