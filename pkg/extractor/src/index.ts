export { encodeRecord, readAtw1, readAtw1Stack, writeAtw1, writeAtw1Stack } from "./atw1.js";
export type { Raster } from "./atw1.js";
export { decodePng, encodePng, poolToGrid } from "./image.js";
export type { GridFeatures } from "./image.js";
export { PRESETS, getPreset } from "./presets.js";
export type { ModelPreset } from "./presets.js";
export { hashString, rngFrom, syntheticAttention } from "./synthetic.js";
export { extract, meanOverHeadsAndTokens, writeArtifacts } from "./extract.js";
export type { ExtractOptions, ExtractResult } from "./extract.js";
