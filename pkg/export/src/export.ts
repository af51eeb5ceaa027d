/** Assemble captured selectivity tensors into a schema-1 archive. */

import { Checkpoint, SampleInput } from "./model.js";
import { LayerCapture, runWithCapture } from "./forward.js";
import { DIRECTIONS } from "./scan.js";
import { Metadata, TensorSpec, writeArchive } from "./ssmz.js";

export const SOURCE_HOOK = "selectivity-projections:pre-scan";

export interface StabilityViolation {
  layer: string;
  direction: string;
  position: number;
  maxAbsABar: number;
}

export interface ExportManifest {
  sourceModel: string;
  sourceHook: string;
  layerHooks: string[];
  grid: [number, number][];
  channels: number;
  stateDim: number;
  schemaVersion: "1";
  /** discretized |a_bar| >= 1 occurrences, reported rather than clipped */
  stabilityViolations: StabilityViolation[];
}

export interface ExportResult {
  bytes: Uint8Array;
  manifest: ExportManifest;
}

function checkStability(
  capture: LayerCapture,
  channels: number,
  stateDim: number,
): StabilityViolation[] {
  const violations: StabilityViolation[] = [];
  for (const direction of DIRECTIONS) {
    const { delta } = capture.dirs[direction];
    const length = delta.length / channels;
    for (let k = 0; k < length; k++) {
      let worst = 0;
      for (let ch = 0; ch < channels; ch++) {
        const dt = delta[k * channels + ch];
        if (!(dt > 0)) {
          violations.push({
            layer: capture.name,
            direction,
            position: k,
            maxAbsABar: Number.NaN,
          });
          continue;
        }
        for (let n = 0; n < stateDim; n++) {
          worst = Math.max(worst, Math.exp(dt * capture.a[ch * stateDim + n]));
        }
      }
      if (worst >= 1) {
        violations.push({
          layer: capture.name,
          direction,
          position: k,
          maxAbsABar: worst,
        });
      }
    }
  }
  return violations;
}

export function exportCheckpoint(
  checkpoint: Checkpoint,
  input: SampleInput,
  layerNames?: string[],
): ExportResult {
  const { captures } = runWithCapture(checkpoint, input, layerNames);
  const channels = checkpoint.channels;
  const stateDim = checkpoint.stateDim;

  const tensors: Record<string, TensorSpec> = {};
  const grid: [number, number][] = [];
  const violations: StabilityViolation[] = [];
  captures.forEach((capture, index) => {
    const [height, width] = capture.grid;
    const length = height * width;
    grid.push([height, width]);
    tensors[`layers.${index}.a`] = { shape: [channels, stateDim], data: capture.a };
    if (capture.dFeed) {
      tensors[`layers.${index}.d_feed`] = { shape: [channels], data: capture.dFeed };
    }
    for (const direction of DIRECTIONS) {
      const cap = capture.dirs[direction];
      if (cap.delta.length !== length * channels) {
        throw new Error(
          `${capture.name}/${direction}: captured ${cap.delta.length / channels} ` +
            `positions, expected ${height}x${width}`,
        );
      }
      const prefix = `layers.${index}.dirs.${direction}`;
      tensors[`${prefix}.delta`] = { shape: [length, channels], data: cap.delta };
      tensors[`${prefix}.b`] = { shape: [length, stateDim], data: cap.b };
      tensors[`${prefix}.c`] = { shape: [length, stateDim], data: cap.c };
    }
    violations.push(...checkStability(capture, channels, stateDim));
  });

  const metadata: Metadata = {
    schema_version: "1",
    num_layers: captures.length,
    grid,
    state_dim: stateDim,
    channels,
    num_dirs: DIRECTIONS.length,
    source_model: checkpoint.modelId,
    source_hook: SOURCE_HOOK,
  };

  return {
    bytes: writeArchive(tensors, metadata),
    manifest: {
      sourceModel: checkpoint.modelId,
      sourceHook: SOURCE_HOOK,
      layerHooks: captures.map((c) => c.name),
      grid,
      channels,
      stateDim,
      schemaVersion: "1",
      stabilityViolations: violations,
    },
  };
}
