/** One forward pass with capture hooks on the selectivity projections.
 *
 * For every layer and scan direction the hook records the per-position
 * timescales (delta), input rows (b), and output rows (c) right after the
 * projections and before the scan kernel; the scan itself still runs so
 * deeper layers see input-dependent parameters.
 */

import { Checkpoint, LayerWeights, SampleInput } from "./model.js";
import { DIRECTIONS, Direction, sequenceOrder } from "./scan.js";

export interface DirectionCapture {
  /** L x channels */
  delta: Float64Array;
  /** L x N */
  b: Float64Array;
  /** L x N */
  c: Float64Array;
}

export interface LayerCapture {
  name: string;
  grid: [number, number];
  /** channels x N continuous diagonal */
  a: Float64Array;
  dFeed: Float64Array | null;
  dirs: Record<Direction, DirectionCapture>;
}

function softplus(x: number): number {
  return x > 0 ? x + Math.log1p(Math.exp(-x)) : Math.log1p(Math.exp(x));
}

function matVec(w: number[][], u: Float64Array): Float64Array {
  const out = new Float64Array(w.length);
  for (let r = 0; r < w.length; r++) {
    const row = w[r];
    let acc = 0;
    for (let c = 0; c < row.length; c++) acc += row[c] * u[c];
    out[r] = acc;
  }
  return out;
}

/** ZOH for one scalar diagonal entry; same small-|delta*a| limit as the consumer. */
function zohFactor(a: number, delta: number): number {
  const x = delta * a;
  return Math.abs(x) < 1e-8 ? delta : Math.expm1(x) / a;
}

interface ScanResult {
  capture: DirectionCapture;
  /** L x channels outputs in sequence order */
  outputs: Float64Array;
}

function scanDirection(
  layer: LayerWeights,
  features: Float64Array,
  fanIn: number,
  height: number,
  width: number,
  direction: Direction,
  channels: number,
  stateDim: number,
): ScanResult {
  const size = height * width;
  const order = sequenceOrder(direction, height, width);
  const delta = new Float64Array(size * channels);
  const bRows = new Float64Array(size * stateDim);
  const cRows = new Float64Array(size * stateDim);
  const drive = new Float64Array(size * channels);

  const u = new Float64Array(fanIn);
  for (let k = 0; k < size; k++) {
    const cell = order[k];
    for (let ch = 0; ch < fanIn; ch++) u[ch] = features[cell * fanIn + ch];
    const dRow = matVec(layer.wDelta, u);
    for (let d = 0; d < channels; d++) {
      delta[k * channels + d] = softplus(dRow[d] + layer.bDelta[d]);
    }
    const b = matVec(layer.wB, u);
    const c = matVec(layer.wC, u);
    bRows.set(b, k * stateDim);
    cRows.set(c, k * stateDim);
    drive.set(matVec(layer.wIn, u), k * channels);
  }

  // per-channel diagonal scan with the captured parameters
  const outputs = new Float64Array(size * channels);
  const state = new Float64Array(stateDim);
  for (let ch = 0; ch < channels; ch++) {
    state.fill(0);
    const aRow = layer.aLog[ch].map((v) => -Math.exp(v));
    for (let k = 0; k < size; k++) {
      const dt = delta[k * channels + ch];
      const v = drive[k * channels + ch];
      let y = 0;
      for (let n = 0; n < stateDim; n++) {
        const a = aRow[n];
        const aBar = Math.exp(dt * a);
        const bBar = zohFactor(a, dt) * bRows[k * stateDim + n];
        state[n] = aBar * state[n] + bBar * v;
        y += cRows[k * stateDim + n] * state[n];
      }
      if (layer.dFeed) y += layer.dFeed[ch] * v;
      outputs[k * channels + ch] = y;
    }
  }
  return { capture: { delta, b: bRows, c: cRows }, outputs };
}

export interface ForwardResult {
  captures: LayerCapture[];
  /** final H x W x channels feature map */
  features: Float64Array;
}

export function runWithCapture(
  checkpoint: Checkpoint,
  input: SampleInput,
  layerNames?: string[],
): ForwardResult {
  const [height, width] = checkpoint.inputGrid;
  if (
    input.height !== height ||
    input.width !== width ||
    input.channels !== checkpoint.inputChannels
  ) {
    throw new Error(
      `input shape ${input.height}x${input.width}x${input.channels} does not match ` +
        `the checkpoint's expected ${height}x${width}x${checkpoint.inputChannels} grid`,
    );
  }
  const available = checkpoint.layers.map((l) => l.name);
  const wanted = layerNames ?? available;
  for (const name of wanted) {
    if (!available.includes(name)) {
      throw new Error(
        `no layer hook named '${name}'; available: ${available.join(", ")}`,
      );
    }
  }

  const size = height * width;
  const channels = checkpoint.channels;
  const stateDim = checkpoint.stateDim;
  let features = Float64Array.from(input.data);
  let fanIn = checkpoint.inputChannels;
  const captures: LayerCapture[] = [];

  for (const layer of checkpoint.layers) {
    const dirs = {} as Record<Direction, DirectionCapture>;
    const merged = new Float64Array(size * channels);
    for (const direction of DIRECTIONS) {
      const order = sequenceOrder(direction, height, width);
      const { capture, outputs } = scanDirection(
        layer, features, fanIn, height, width, direction, channels, stateDim,
      );
      dirs[direction] = capture;
      for (let k = 0; k < size; k++) {
        const cell = order[k];
        for (let ch = 0; ch < channels; ch++) {
          merged[cell * channels + ch] += outputs[k * channels + ch] / 4;
        }
      }
    }
    if (wanted.includes(layer.name)) {
      const a = new Float64Array(channels * stateDim);
      for (let ch = 0; ch < channels; ch++) {
        for (let n = 0; n < stateDim; n++) {
          a[ch * stateDim + n] = -Math.exp(layer.aLog[ch][n]);
        }
      }
      captures.push({
        name: layer.name,
        grid: [height, width],
        a,
        dFeed: layer.dFeed ? Float64Array.from(layer.dFeed) : null,
        dirs,
      });
    }
    // bounded nonlinearity between layers, like the gated stacks this mimics
    features = merged.map((v) => Math.tanh(v));
    fanIn = channels;
  }
  return { captures, features };
}
