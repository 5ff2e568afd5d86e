/**
 * Extraction pipeline: decode the image, pool features onto the model's token
 * grid, produce one attention record per head at the hooked layer, then
 * average over heads and output tokens into the final grid map.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";

import { writeAtw1, writeAtw1Stack, type Raster } from "./atw1.js";
import { decodePng, poolToGrid } from "./image.js";
import { getPreset, type ModelPreset } from "./presets.js";
import { syntheticAttention } from "./synthetic.js";

export interface ExtractOptions {
  imagePath: string;
  query: string;
  preset: string;
  outTokens?: number;
  layerId?: number;
  gridH?: number;
  gridW?: number;
  relative?: boolean;
  backend?: "synthetic";
}

export interface ExtractResult {
  preset: ModelPreset;
  layerId: number;
  outTokens: number;
  /** One record per head: outTokens x (gridH * gridW), float32. */
  headRecords: Float32Array[];
  /** Mean over heads and output tokens, reshaped to the grid. */
  mean: Raster;
  sidecar: {
    layers: number;
    heads: number;
    out_tokens: number;
    grid_h: number;
    grid_w: number;
    layer_ids: number[];
  };
}

export function meanOverHeadsAndTokens(
  headRecords: Float32Array[],
  outTokens: number,
  gridH: number,
  gridW: number,
): Raster {
  const n = gridH * gridW;
  const acc = new Float64Array(n);
  for (const record of headRecords) {
    for (let m = 0; m < outTokens; m++) {
      for (let t = 0; t < n; t++) {
        acc[t] += record[m * n + t];
      }
    }
  }
  const scale = 1 / (headRecords.length * outTokens);
  const data = new Float32Array(n);
  for (let t = 0; t < n; t++) {
    data[t] = Math.fround(acc[t] * scale);
  }
  return { height: gridH, width: gridW, data };
}

export function extract(options: ExtractOptions): ExtractResult {
  const preset = getPreset(options.preset);
  const layerId = options.layerId ?? preset.layerId;
  const gridH = options.gridH ?? preset.gridH;
  const gridW = options.gridW ?? preset.gridW;
  const outTokens = options.outTokens ?? 8;
  const backend = options.backend ?? "synthetic";
  if (backend !== "synthetic") {
    throw new Error(`backend ${JSON.stringify(backend)} is not available in this build`);
  }

  const { height, width, rgb } = decodePng(options.imagePath);
  const features = poolToGrid(height, width, rgb, gridH, gridW);
  const headRecords = syntheticAttention(features, {
    query: options.query,
    heads: preset.heads,
    outTokens,
    relative: options.relative,
  });

  return {
    preset,
    layerId,
    outTokens,
    headRecords,
    mean: meanOverHeadsAndTokens(headRecords, outTokens, gridH, gridW),
    sidecar: {
      layers: 1,
      heads: preset.heads,
      out_tokens: outTokens,
      grid_h: gridH,
      grid_w: gridW,
      layer_ids: [layerId],
    },
  };
}

export interface WritePaths {
  out: string;
  dumpRaw?: string;
  sidecar?: string;
}

export function writeArtifacts(result: ExtractResult, paths: WritePaths): void {
  mkdirSync(dirname(paths.out), { recursive: true });
  writeAtw1(paths.out, result.mean);
  if (paths.dumpRaw) {
    mkdirSync(dirname(paths.dumpRaw), { recursive: true });
    const { grid_h, grid_w, out_tokens } = result.sidecar;
    const rasters: Raster[] = result.headRecords.map((data) => ({
      height: out_tokens,
      width: grid_h * grid_w,
      data,
    }));
    writeAtw1Stack(paths.dumpRaw, rasters);
    const sidecarPath = paths.sidecar ?? paths.dumpRaw.replace(/\.atw1$/, ".json");
    writeFileSync(sidecarPath, JSON.stringify(result.sidecar, null, 2) + "\n");
  }
}
