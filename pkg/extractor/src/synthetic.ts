/**
 * Deterministic stand-in attention source.
 *
 * The real adapter would hook a decoder layer of a multimodal LLM; that runs
 * nowhere near this sandbox, so this backend fabricates plausible
 * cross-attention from image content and the query text: each head mixes
 * pooled luminance, edge energy, and a query-anchored spatial bump, and each
 * output token perturbs the anchor and temperature. Everything derives from
 * integer hashes of (query, head, token), so identical inputs give identical
 * bytes on any platform.
 */

import type { GridFeatures } from "./image.js";

/** FNV-1a, 32-bit. */
export function hashString(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

/** splitmix32: uniform floats in [0, 1) from an integer state. */
export function rngFrom(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x9e3779b9) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad);
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97);
    z = z ^ (z >>> 15);
    return (z >>> 0) / 4294967296;
  };
}

export interface SyntheticConfig {
  query: string;
  heads: number;
  outTokens: number;
  /** Divide by a generic-caption pass to suppress static scene bias. */
  relative?: boolean;
}

/**
 * One record per head, each outTokens x (gridH * gridW), rows softmax-normalized.
 */
export function syntheticAttention(features: GridFeatures, config: SyntheticConfig): Float32Array[] {
  const base = rawHeads(features, config.query, config.heads, config.outTokens);
  if (!config.relative) {
    return base;
  }
  const caption = rawHeads(features, "describe the image briefly", config.heads, config.outTokens);
  const n = features.gridH * features.gridW;
  for (let h = 0; h < base.length; h++) {
    for (let m = 0; m < config.outTokens; m++) {
      let sum = 0;
      for (let t = 0; t < n; t++) {
        const idx = m * n + t;
        base[h][idx] = base[h][idx] / (caption[h][idx] + 1e-8);
        sum += base[h][idx];
      }
      for (let t = 0; t < n; t++) {
        base[h][m * n + t] /= sum;
      }
    }
  }
  return base;
}

function rawHeads(features: GridFeatures, query: string, heads: number, outTokens: number): Float32Array[] {
  const { gridH, gridW, luminance, edges } = features;
  const n = gridH * gridW;
  const querySeed = hashString(query);
  const records: Float32Array[] = [];

  for (let h = 0; h < heads; h++) {
    const headRng = rngFrom((querySeed ^ Math.imul(h + 1, 0x85ebca6b)) >>> 0);
    const wLum = 0.5 + 2.5 * headRng();
    const wEdge = 0.5 + 2.5 * headRng();
    const anchorY = headRng() * (gridH - 1);
    const anchorX = headRng() * (gridW - 1);
    const sigma = 0.15 * Math.min(gridH, gridW) * (0.5 + headRng());
    const wAnchor = 1.0 + 2.0 * headRng();

    const record = new Float32Array(outTokens * n);
    for (let m = 0; m < outTokens; m++) {
      const tokRng = rngFrom((querySeed ^ Math.imul(h + 1, 0x9e3779b1) ^ Math.imul(m + 1, 0xc2b2ae35)) >>> 0);
      const jitterY = (tokRng() - 0.5) * 2.0;
      const jitterX = (tokRng() - 0.5) * 2.0;
      const temperature = 0.7 + 0.6 * tokRng();

      const logits = new Float64Array(n);
      let maxLogit = -Infinity;
      for (let t = 0; t < n; t++) {
        const gy = Math.floor(t / gridW);
        const gx = t % gridW;
        const dy = gy - (anchorY + jitterY);
        const dx = gx - (anchorX + jitterX);
        const bump = Math.exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
        const logit = (wLum * luminance[t] + wEdge * edges[t] + wAnchor * bump) / temperature;
        logits[t] = logit;
        if (logit > maxLogit) maxLogit = logit;
      }
      let denom = 0;
      for (let t = 0; t < n; t++) {
        logits[t] = Math.exp(logits[t] - maxLogit);
        denom += logits[t];
      }
      for (let t = 0; t < n; t++) {
        record[m * n + t] = Math.fround(logits[t] / denom);
      }
    }
    records.push(record);
  }
  return records;
}
