/** Tiny selective-SSM checkpoints: weights, random init, JSON persistence.
 *
 * The model is the minimal selective stack the exporter understands: per
 * layer, input features are projected to per-position timescales (delta),
 * input rows (b), output rows (c), and per-channel drive values, then
 * scanned in four directions with a shared continuous diagonal state
 * matrix A = -exp(aLog) (negative by construction, so the discretized
 * transition always contracts).
 */

import { readFileSync, writeFileSync } from "node:fs";

import { Prng } from "./prng.js";

export interface LayerWeights {
  name: string;
  /** channels x N; continuous diagonal is -exp(aLog) */
  aLog: number[][];
  /** channels x fanIn plus bias, feeding softplus for strictly positive delta */
  wDelta: number[][];
  bDelta: number[];
  /** channels x fanIn, per-channel scalar drive */
  wIn: number[][];
  /** N x fanIn selective input rows */
  wB: number[][];
  /** N x fanIn selective output rows */
  wC: number[][];
  /** channels, optional feedthrough */
  dFeed: number[] | null;
}

export interface Checkpoint {
  format: "selective-ssm-checkpoint";
  version: 1;
  modelId: string;
  inputGrid: [number, number];
  inputChannels: number;
  stateDim: number;
  channels: number;
  layers: LayerWeights[];
}

export interface SampleInput {
  height: number;
  width: number;
  channels: number;
  /** H*W*C, row-major cells, channel fastest */
  data: number[];
}

function matrix(rng: Prng, rows: number, cols: number, scale: number): number[][] {
  const out: number[][] = [];
  for (let r = 0; r < rows; r++) {
    const row: number[] = new Array(cols);
    for (let c = 0; c < cols; c++) row[c] = rng.normal() * scale;
    out.push(row);
  }
  return out;
}

export interface InitOptions {
  seed: number;
  height: number;
  width: number;
  stateDim: number;
  channels: number;
  inputChannels: number;
  numLayers: number;
  withFeedthrough?: boolean;
}

export function initCheckpoint(opts: InitOptions): Checkpoint {
  const rng = new Prng(opts.seed);
  const layers: LayerWeights[] = [];
  for (let i = 0; i < opts.numLayers; i++) {
    const fanIn = i === 0 ? opts.inputChannels : opts.channels;
    const scale = 1 / Math.sqrt(fanIn);
    const aLog = matrix(rng, opts.channels, opts.stateDim, 0.5);
    layers.push({
      name: `layers.${i}`,
      aLog,
      wDelta: matrix(rng, opts.channels, fanIn, scale),
      // softplus(-1 + small) keeps delta positive and moderate
      bDelta: new Array(opts.channels).fill(0).map(() => -1.0 + 0.2 * rng.normal()),
      wIn: matrix(rng, opts.channels, fanIn, scale),
      wB: matrix(rng, opts.stateDim, fanIn, scale),
      wC: matrix(rng, opts.stateDim, fanIn, scale),
      dFeed: opts.withFeedthrough
        ? new Array(opts.channels).fill(0).map(() => 0.1 * rng.normal())
        : null,
    });
  }
  return {
    format: "selective-ssm-checkpoint",
    version: 1,
    modelId: `tiny-vssm-seed${opts.seed}`,
    inputGrid: [opts.height, opts.width],
    inputChannels: opts.inputChannels,
    stateDim: opts.stateDim,
    channels: opts.channels,
    layers,
  };
}

export function sampleInputFor(checkpoint: Checkpoint, seed: number): SampleInput {
  const rng = new Prng(seed);
  const [height, width] = checkpoint.inputGrid;
  const size = height * width * checkpoint.inputChannels;
  const data: number[] = new Array(size);
  for (let i = 0; i < size; i++) data[i] = rng.normal();
  return { height, width, channels: checkpoint.inputChannels, data };
}

export function saveJson(path: string, value: unknown): void {
  writeFileSync(path, JSON.stringify(value, null, 2) + "\n", "utf-8");
}

export function loadCheckpoint(path: string): Checkpoint {
  const parsed = JSON.parse(readFileSync(path, "utf-8")) as Checkpoint;
  if (parsed.format !== "selective-ssm-checkpoint" || parsed.version !== 1) {
    throw new Error(`${path} is not a version-1 selective-ssm checkpoint`);
  }
  return parsed;
}

export function loadSampleInput(path: string): SampleInput {
  const parsed = JSON.parse(readFileSync(path, "utf-8")) as SampleInput;
  const expected = parsed.height * parsed.width * parsed.channels;
  if (!Array.isArray(parsed.data) || parsed.data.length !== expected) {
    throw new Error(
      `${path}: data length ${parsed.data?.length} does not match ` +
        `${parsed.height}x${parsed.width}x${parsed.channels}`,
    );
  }
  return parsed;
}
