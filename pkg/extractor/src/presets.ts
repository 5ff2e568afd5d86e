/** Model presets: which decoder layer to hook and the token grid it produces. */

export interface ModelPreset {
  name: string;
  /** Layer id recorded in the sidecar; the aggregation side selects by it. */
  layerId: number;
  gridH: number;
  gridW: number;
  heads: number;
}

export const PRESETS: Record<string, ModelPreset> = {
  llava: { name: "llava", layerId: 20, gridH: 24, gridW: 24, heads: 32 },
  qwen: { name: "qwen", layerId: 16, gridH: 18, gridW: 18, heads: 28 },
};

export function getPreset(name: string): ModelPreset {
  const preset = PRESETS[name];
  if (!preset) {
    throw new Error(`unknown model preset ${JSON.stringify(name)}; have ${Object.keys(PRESETS).join(", ")}`);
  }
  return preset;
}
