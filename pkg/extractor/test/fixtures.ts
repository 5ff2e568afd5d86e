import { writeFileSync } from "node:fs";

import { encodePng } from "../src/image.js";

/** Deterministic 96x96 test scene: gradient background, bright block, dark disc. */
export function writeTestScene(path: string, size = 96): void {
  const rgb = new Uint8Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const i = 3 * (y * size + x);
      rgb[i] = Math.round((255 * x) / (size - 1));
      rgb[i + 1] = Math.round((255 * y) / (size - 1));
      rgb[i + 2] = 96;
      const inBlock = x >= size * 0.6 && x < size * 0.85 && y >= size * 0.15 && y < size * 0.35;
      if (inBlock) {
        rgb[i] = 250;
        rgb[i + 1] = 250;
        rgb[i + 2] = 240;
      }
      const dx = x - size * 0.3;
      const dy = y - size * 0.7;
      if (dx * dx + dy * dy < (size * 0.12) ** 2) {
        rgb[i] = 20;
        rgb[i + 1] = 25;
        rgb[i + 2] = 30;
      }
    }
  }
  writeFileSync(path, encodePng(path, size, size, rgb));
}
