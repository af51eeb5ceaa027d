/** Canonical .ssmz (schema 1) serialization.
 *
 * Layout: 8-byte little-endian header length, minimal JSON header with
 * lexicographically sorted keys mapping tensor names to
 * {dtype: "F32", shape, data_offsets}, plus a "__metadata__" object, then
 * raw little-endian float32 data. Equal archives marshal to equal bytes.
 */

export interface TensorSpec {
  shape: number[];
  data: ArrayLike<number>;
}

export type Metadata = Record<string, unknown>;

/** JSON with recursively sorted object keys and no whitespace. */
export function canonicalJson(value: unknown): string {
  if (value === null || typeof value === "number" || typeof value === "boolean") {
    return JSON.stringify(value);
  }
  if (typeof value === "string") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v));
    return "{" + entries.join(",") + "}";
  }
  throw new Error(`cannot serialize value of type ${typeof value}`);
}

export function writeArchive(
  tensors: Record<string, TensorSpec>,
  metadata: Metadata,
): Uint8Array {
  const names = Object.keys(tensors).sort();
  if (names.length === 0) throw new Error("archive needs at least one tensor");

  const header: Record<string, unknown> = { __metadata__: metadata };
  let offset = 0;
  for (const name of names) {
    const { shape, data } = tensors[name];
    const count = shape.reduce((acc, v) => acc * v, 1);
    if (data.length !== count) {
      throw new Error(
        `tensor ${name}: ${data.length} values do not fill shape [${shape.join(", ")}]`,
      );
    }
    header[name] = {
      dtype: "F32",
      shape,
      data_offsets: [offset, offset + 4 * count],
    };
    offset += 4 * count;
  }

  const headerBytes = new TextEncoder().encode(canonicalJson(header));
  const total = 8 + headerBytes.length + offset;
  const out = new Uint8Array(total);
  const view = new DataView(out.buffer);
  view.setBigUint64(0, BigInt(headerBytes.length), true);
  out.set(headerBytes, 8);

  let cursor = 8 + headerBytes.length;
  for (const name of names) {
    const { data } = tensors[name];
    for (let i = 0; i < data.length; i++) {
      view.setFloat32(cursor, data[i], true);
      cursor += 4;
    }
  }
  return out;
}

export interface ParsedTensor {
  shape: number[];
  data: Float32Array;
}

export interface ParsedArchive {
  metadata: Metadata;
  tensors: Map<string, ParsedTensor>;
}

/** Strict reader used by the exporter's own tests. */
export function parseArchive(bytes: Uint8Array): ParsedArchive {
  if (bytes.length < 8) throw new Error("archive shorter than its length prefix");
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const headerLen = Number(view.getBigUint64(0, true));
  if (8 + headerLen > bytes.length) {
    throw new Error(`header length ${headerLen} exceeds file size ${bytes.length}`);
  }
  const header = JSON.parse(
    new TextDecoder().decode(bytes.subarray(8, 8 + headerLen)),
  ) as Record<string, unknown>;
  const metadata = header["__metadata__"];
  if (typeof metadata !== "object" || metadata === null) {
    throw new Error("header is missing the __metadata__ object");
  }
  delete header["__metadata__"];

  const dataLen = bytes.length - 8 - headerLen;
  const tensors = new Map<string, ParsedTensor>();
  const spans: Array<[number, number, string]> = [];
  for (const [name, entry] of Object.entries(header)) {
    const { dtype, shape, data_offsets } = entry as {
      dtype: string;
      shape: number[];
      data_offsets: [number, number];
    };
    if (dtype !== "F32") throw new Error(`tensor ${name}: unsupported dtype ${dtype}`);
    const count = shape.reduce((acc, v) => acc * v, 1);
    const [begin, end] = data_offsets;
    if (end - begin !== 4 * count || begin < 0 || end > dataLen) {
      throw new Error(`tensor ${name}: bad byte range [${begin}, ${end})`);
    }
    spans.push([begin, end, name]);
    const data = new Float32Array(count);
    const base = 8 + headerLen + begin;
    for (let i = 0; i < count; i++) data[i] = view.getFloat32(base + 4 * i, true);
    tensors.set(name, { shape, data });
  }
  spans.sort((a, b) => a[0] - b[0]);
  let cursor = 0;
  for (const [begin, end, name] of spans) {
    if (begin !== cursor) throw new Error(`tensor ${name}: overlap or gap at ${begin}`);
    cursor = end;
  }
  if (cursor !== dataLen) {
    throw new Error(`data section holds ${dataLen} bytes but tensors cover ${cursor}`);
  }
  return { metadata: metadata as Metadata, tensors };
}
