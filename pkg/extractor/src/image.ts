/** PNG decoding and token-grid feature pooling. */

import { readFileSync } from "node:fs";
import { PNG } from "pngjs";

export interface GridFeatures {
  gridH: number;
  gridW: number;
  /** Mean luminance per cell, in [0, 1], row-major. */
  luminance: Float64Array;
  /** Mean gradient magnitude per cell, roughly [0, 1], row-major. */
  edges: Float64Array;
}

export function decodePng(path: string): { height: number; width: number; rgb: Uint8Array } {
  const png = PNG.sync.read(readFileSync(path));
  const { height, width, data } = png;
  const rgb = new Uint8Array(height * width * 3);
  for (let i = 0; i < height * width; i++) {
    rgb[3 * i] = data[4 * i];
    rgb[3 * i + 1] = data[4 * i + 1];
    rgb[3 * i + 2] = data[4 * i + 2];
  }
  return { height, width, rgb };
}

export function encodePng(path: string, height: number, width: number, rgb: Uint8Array): Buffer {
  const png = new PNG({ height, width });
  for (let i = 0; i < height * width; i++) {
    png.data[4 * i] = rgb[3 * i];
    png.data[4 * i + 1] = rgb[3 * i + 1];
    png.data[4 * i + 2] = rgb[3 * i + 2];
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}

function luminanceAt(rgb: Uint8Array, idx: number): number {
  return (0.299 * rgb[3 * idx] + 0.587 * rgb[3 * idx + 1] + 0.114 * rgb[3 * idx + 2]) / 255;
}

/**
 * Pool pixel luminance and local gradient energy onto the token grid.
 * Cell (i, j) covers the pixel block [i*H/gh, (i+1)*H/gh) x [j*W/gw, (j+1)*W/gw).
 */
export function poolToGrid(
  height: number,
  width: number,
  rgb: Uint8Array,
  gridH: number,
  gridW: number,
): GridFeatures {
  const lum = new Float64Array(gridH * gridW);
  const edge = new Float64Array(gridH * gridW);
  const counts = new Float64Array(gridH * gridW);

  for (let y = 0; y < height; y++) {
    const gy = Math.min(gridH - 1, Math.floor((y * gridH) / height));
    for (let x = 0; x < width; x++) {
      const gx = Math.min(gridW - 1, Math.floor((x * gridW) / width));
      const cell = gy * gridW + gx;
      const here = luminanceAt(rgb, y * width + x);
      lum[cell] += here;
      const right = x + 1 < width ? luminanceAt(rgb, y * width + x + 1) : here;
      const down = y + 1 < height ? luminanceAt(rgb, (y + 1) * width + x) : here;
      edge[cell] += Math.abs(right - here) + Math.abs(down - here);
      counts[cell] += 1;
    }
  }
  for (let c = 0; c < gridH * gridW; c++) {
    if (counts[c] > 0) {
      lum[c] /= counts[c];
      edge[c] /= counts[c];
    }
  }
  return { gridH, gridW, luminance: lum, edges: edge };
}
