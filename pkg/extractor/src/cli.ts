#!/usr/bin/env node
/**
 * extract --model-preset llava --image photo.png --query "what does the sign say" \
 *     --out photo.atw1 [--dump-raw photo.raw.atw1] [--sidecar photo.raw.json] \
 *     [--out-tokens 8] [--layer N] [--grid-h N --grid-w N] [--relative]
 */

import { extract, writeArtifacts } from "./extract.js";
import { PRESETS } from "./presets.js";

interface Args {
  [key: string]: string | boolean;
}

function parseArgs(argv: string[]): { command: string | undefined; flags: Args } {
  const flags: Args = {};
  let command: string | undefined;
  for (let i = 0; i < argv.length; i++) {
    const token = argv[i];
    if (!token.startsWith("--")) {
      if (command === undefined) command = token;
      else throw new Error(`unexpected positional argument ${JSON.stringify(token)}`);
      continue;
    }
    const name = token.slice(2);
    const next = argv[i + 1];
    if (next === undefined || next.startsWith("--")) {
      flags[name] = true;
    } else {
      flags[name] = next;
      i++;
    }
  }
  return { command, flags };
}

function requireString(flags: Args, name: string): string {
  const value = flags[name];
  if (typeof value !== "string" || !value) {
    throw new Error(`missing required flag --${name}`);
  }
  return value;
}

function optionalInt(flags: Args, name: string): number | undefined {
  const value = flags[name];
  if (value === undefined) return undefined;
  const parsed = Number.parseInt(String(value), 10);
  if (Number.isNaN(parsed)) throw new Error(`--${name} must be an integer`);
  return parsed;
}

function usage(): string {
  return [
    "usage: attwarp-extract extract --model-preset <name> --image <png> --query <text> --out <atw1>",
    "  optional: --dump-raw <atw1> --sidecar <json> --out-tokens N --layer N",
    "            --grid-h N --grid-w N --relative --backend synthetic",
    `  presets: ${Object.keys(PRESETS).join(", ")}`,
  ].join("\n");
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    console.error(usage());
    return 1;
  }
  if (parsed.command === undefined || parsed.flags["help"]) {
    console.error(usage());
    return parsed.flags["help"] ? 0 : 1;
  }
  if (parsed.command !== "extract") {
    console.error(`unknown command ${JSON.stringify(parsed.command)}`);
    console.error(usage());
    return 1;
  }

  try {
    const flags = parsed.flags;
    const result = extract({
      imagePath: requireString(flags, "image"),
      query: requireString(flags, "query"),
      preset: requireString(flags, "model-preset"),
      outTokens: optionalInt(flags, "out-tokens"),
      layerId: optionalInt(flags, "layer"),
      gridH: optionalInt(flags, "grid-h"),
      gridW: optionalInt(flags, "grid-w"),
      relative: flags["relative"] === true,
      backend: (flags["backend"] as "synthetic" | undefined) ?? "synthetic",
    });
    writeArtifacts(result, {
      out: requireString(flags, "out"),
      dumpRaw: typeof flags["dump-raw"] === "string" ? (flags["dump-raw"] as string) : undefined,
      sidecar: typeof flags["sidecar"] === "string" ? (flags["sidecar"] as string) : undefined,
    });
    return 0;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 1;
  }
}

const invokedDirectly = process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
