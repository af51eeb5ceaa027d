#!/usr/bin/env node
/** ssmz-export: init a tiny random checkpoint, or export one to .ssmz. */

import { writeFileSync } from "node:fs";

import { exportCheckpoint } from "./export.js";
import {
  initCheckpoint,
  loadCheckpoint,
  loadSampleInput,
  sampleInputFor,
  saveJson,
} from "./model.js";

const USAGE = `usage:
  ssmz-export init --out model.json --input-out sample.json
      [--seed 0] [--height 4] [--width 4] [--state-dim 4]
      [--channels 2] [--input-channels 3] [--layers 2] [--feedthrough]
  ssmz-export export --model model.json --input sample.json --out archive.ssmz
      [--layers layers.0,layers.1] [--manifest manifest.json]
`;

function parseFlags(argv: string[]): Map<string, string | boolean> {
  const flags = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new Error(`unexpected argument ${arg}`);
    const key = arg.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      flags.set(key, argv[++i]);
    } else {
      flags.set(key, true);
    }
  }
  return flags;
}

function need(flags: Map<string, string | boolean>, key: string): string {
  const value = flags.get(key);
  if (typeof value !== "string") throw new Error(`missing required --${key}`);
  return value;
}

function intFlag(
  flags: Map<string, string | boolean>,
  key: string,
  fallback: number,
  min = 1,
): number {
  const value = flags.get(key);
  if (value === undefined) return fallback;
  const parsed = Number(value);
  if (!Number.isInteger(parsed) || parsed < min) {
    throw new Error(`--${key} must be an integer >= ${min}, got ${value}`);
  }
  return parsed;
}

function cmdInit(argv: string[]): number {
  const flags = parseFlags(argv);
  const checkpoint = initCheckpoint({
    seed: intFlag(flags, "seed", 0, 0),
    height: intFlag(flags, "height", 4),
    width: intFlag(flags, "width", 4),
    stateDim: intFlag(flags, "state-dim", 4),
    channels: intFlag(flags, "channels", 2),
    inputChannels: intFlag(flags, "input-channels", 3),
    numLayers: intFlag(flags, "layers", 2),
    withFeedthrough: flags.get("feedthrough") === true,
  });
  saveJson(need(flags, "out"), checkpoint);
  const input = sampleInputFor(checkpoint, intFlag(flags, "input-seed", 1000, 0));
  saveJson(need(flags, "input-out"), input);
  console.error(`wrote ${need(flags, "out")} and ${need(flags, "input-out")}`);
  return 0;
}

function cmdExport(argv: string[]): number {
  const flags = parseFlags(argv);
  const checkpoint = loadCheckpoint(need(flags, "model"));
  const input = loadSampleInput(need(flags, "input"));
  const layersFlag = flags.get("layers");
  const layerNames =
    typeof layersFlag === "string" ? layersFlag.split(",").map((s) => s.trim()) : undefined;
  const { bytes, manifest } = exportCheckpoint(checkpoint, input, layerNames);
  writeFileSync(need(flags, "out"), bytes);
  const manifestPath = flags.get("manifest");
  if (typeof manifestPath === "string") saveJson(manifestPath, manifest);
  if (manifest.stabilityViolations.length > 0) {
    console.error(
      `warning: ${manifest.stabilityViolations.length} positions discretize to |a_bar| >= 1`,
    );
  }
  console.error(`wrote ${need(flags, "out")} (${bytes.length} bytes)`);
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "init") return cmdInit(rest);
    if (command === "export") return cmdExport(rest);
    process.stderr.write(USAGE);
    return 2;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

process.exit(main(process.argv.slice(2)));
