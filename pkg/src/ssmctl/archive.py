"""The ``.ssmz`` tensor archive: canonical bytes, schema checks, synthesis.

Layout (schema version "1"):

* 8-byte little-endian unsigned header length,
* a JSON header mapping tensor names to ``{dtype, shape, data_offsets}``
  plus a ``"__metadata__"`` object,
* a raw data section of little-endian IEEE-754 32-bit floats.

Tensor names follow ``layers.{i}.a`` (continuous diagonal state matrix,
channels x N, shared across positions and directions), optional
``layers.{i}.d_feed`` (channels,), and per direction ``d`` in
{fwd, bwd, tfwd, tbwd}: ``layers.{i}.dirs.{d}.delta`` (L x channels),
``layers.{i}.dirs.{d}.b`` and ``layers.{i}.dirs.{d}.c`` (both L x N).

Serialization is canonical: names sorted lexicographically, minimal JSON,
contiguous data offsets.  Equal archives produce identical bytes.  Stored
values are float32; everything is promoted to float64 on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .core import DiscretizedDiagonalStep, TimeVaryingDiagonalSystem, discretize_zoh_diagonal
from .errors import CorruptArchive, InvalidArchive, InvalidInput, ParseError, SchemaError
from .scan2d import ALL_DIRECTIONS, GridShape, ScanDirection, sequence_order

SCHEMA_VERSION = "1"
DTYPE_TAG = "F32"
DTYPE_WIDTH = 4
FILE_EXTENSION = ".ssmz"

METADATA_KEY = "__metadata__"
REQUIRED_METADATA = ("schema_version", "num_layers", "grid", "state_dim", "channels", "num_dirs")


@dataclass
class TensorArchive:
    """Named float32 tensors plus archive metadata."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def num_layers(self) -> int:
        return int(self.metadata["num_layers"])

    @property
    def state_dim(self) -> int:
        return int(self.metadata["state_dim"])

    @property
    def channels(self) -> int:
        return int(self.metadata["channels"])

    def grid(self, layer: int) -> GridShape:
        h, w = self.metadata["grid"][layer]
        return GridShape(int(h), int(w))


def _dir_key(direction: ScanDirection | str) -> str:
    return ScanDirection(direction).value


def _tensor_name(layer: int, part: str, direction: str | None = None) -> str:
    if direction is None:
        return f"layers.{layer}.{part}"
    return f"layers.{layer}.dirs.{direction}.{part}"


def _check_positive_int(meta: Mapping[str, Any], key: str, err) -> int:
    value = meta.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise err(f"metadata key {key!r} must be a positive integer, got {value!r}")
    return value


def _validate_metadata(meta: Mapping[str, Any], err) -> None:
    for key in REQUIRED_METADATA:
        if key not in meta:
            raise err(f"metadata is missing required key {key!r}")
    if meta["schema_version"] != SCHEMA_VERSION:
        raise err(f"unsupported schema_version {meta['schema_version']!r}")
    num_layers = _check_positive_int(meta, "num_layers", err)
    _check_positive_int(meta, "state_dim", err)
    _check_positive_int(meta, "channels", err)
    if meta["num_dirs"] != len(ALL_DIRECTIONS):
        raise err(f"num_dirs must be {len(ALL_DIRECTIONS)}, got {meta['num_dirs']!r}")
    grid = meta["grid"]
    if not isinstance(grid, list) or len(grid) != num_layers:
        raise err("metadata key 'grid' must list one [H, W] pair per layer")
    for entry in grid:
        if (
            not isinstance(entry, (list, tuple))
            or len(entry) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in entry)
        ):
            raise err(f"bad grid entry {entry!r}")


def _expected_shapes(meta: Mapping[str, Any]) -> tuple[dict[str, tuple[int, ...]], set[str]]:
    """Required tensor name -> shape map, plus the optional names."""
    n = int(meta["state_dim"])
    channels = int(meta["channels"])
    required: dict[str, tuple[int, ...]] = {}
    optional: set[str] = set()
    for layer in range(int(meta["num_layers"])):
        h, w = meta["grid"][layer]
        length = int(h) * int(w)
        required[_tensor_name(layer, "a")] = (channels, n)
        optional.add(_tensor_name(layer, "d_feed"))
        for direction in ALL_DIRECTIONS:
            key = direction.value
            required[_tensor_name(layer, "delta", key)] = (length, channels)
            required[_tensor_name(layer, "b", key)] = (length, n)
            required[_tensor_name(layer, "c", key)] = (length, n)
    return required, optional


def _validate_schema(names_to_shapes: Mapping[str, tuple[int, ...]], meta: Mapping[str, Any], err) -> None:
    _validate_metadata(meta, err)
    required, optional = _expected_shapes(meta)
    channels = int(meta["channels"])
    for name, shape in required.items():
        if name not in names_to_shapes:
            raise err(f"missing required tensor {name!r}")
        if tuple(names_to_shapes[name]) != shape:
            raise err(f"tensor {name!r} has shape {tuple(names_to_shapes[name])}, expected {shape}")
    for name in names_to_shapes:
        if name in required:
            continue
        if name in optional:
            if tuple(names_to_shapes[name]) != (channels,):
                raise err(f"tensor {name!r} has shape {tuple(names_to_shapes[name])}, expected {(channels,)}")
            continue
        raise err(f"unexpected tensor {name!r}")


def _validate_values(tensors: Mapping[str, np.ndarray], err) -> None:
    for name, arr in tensors.items():
        if not np.all(np.isfinite(arr)):
            raise err(f"tensor {name!r} contains non-finite values")
        if name.endswith(".delta") and not np.all(arr > 0.0):
            raise err(f"tensor {name!r} must be strictly positive")


def validate_archive(archive: TensorArchive, err=InvalidArchive) -> None:
    """Check metadata, tensor set, shapes, and value domains."""
    shapes = {name: tuple(arr.shape) for name, arr in archive.tensors.items()}
    if not shapes:
        raise err("archive declares no tensors")
    _validate_schema(shapes, archive.metadata, err)
    _validate_values(archive.tensors, err)


def write_archive(archive: TensorArchive) -> bytes:
    """Serialize to canonical bytes (sorted names, minimal header)."""
    validate_archive(archive, InvalidArchive)
    names = sorted(archive.tensors)
    header: dict[str, Any] = {METADATA_KEY: archive.metadata}
    blobs: list[bytes] = []
    offset = 0
    for name in names:
        arr = np.ascontiguousarray(archive.tensors[name], dtype="<f4")
        blob = arr.tobytes()
        header[name] = {
            "dtype": DTYPE_TAG,
            "shape": list(arr.shape),
            "data_offsets": [offset, offset + len(blob)],
        }
        blobs.append(blob)
        offset += len(blob)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return len(header_bytes).to_bytes(8, "little") + header_bytes + b"".join(blobs)


def read_archive(data: bytes) -> TensorArchive:
    """Parse and eagerly validate canonical archive bytes."""
    if len(data) < 8:
        raise ParseError("archive shorter than its 8-byte length prefix")
    header_len = int.from_bytes(data[:8], "little")
    if 8 + header_len > len(data):
        raise ParseError(f"header length {header_len} exceeds file size")
    try:
        header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"header is not valid JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise ParseError("header must be a JSON object")
    if METADATA_KEY not in header or not isinstance(header[METADATA_KEY], dict):
        raise SchemaError(f"header is missing the {METADATA_KEY!r} object")
    metadata = header.pop(METADATA_KEY)

    entries: dict[str, tuple[tuple[int, ...], int, int]] = {}
    for name, entry in header.items():
        if (
            not isinstance(entry, dict)
            or not isinstance(entry.get("shape"), list)
            or not isinstance(entry.get("data_offsets"), list)
            or len(entry["data_offsets"]) != 2
        ):
            raise ParseError(f"malformed tensor entry {name!r}")
        if entry.get("dtype") != DTYPE_TAG:
            raise SchemaError(f"tensor {name!r} has unsupported dtype {entry.get('dtype')!r}")
        shape = entry["shape"]
        if not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in shape):
            raise ParseError(f"tensor {name!r} has malformed shape {shape!r}")
        begin, end = entry["data_offsets"]
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in (begin, end)):
            raise ParseError(f"tensor {name!r} has malformed offsets")
        entries[name] = (tuple(shape), begin, end)
    if not entries:
        raise SchemaError("archive declares no tensors")

    data_len = len(data) - 8 - header_len
    spans = []
    for name, (shape, begin, end) in entries.items():
        expected = int(np.prod(shape, dtype=np.int64)) * DTYPE_WIDTH
        if begin < 0 or end < begin:
            raise CorruptArchive(f"tensor {name!r} has inverted byte range")
        if end - begin != expected:
            raise CorruptArchive(
                f"tensor {name!r} spans {end - begin} bytes, shape needs {expected}"
            )
        if end > data_len:
            raise CorruptArchive(f"tensor {name!r} extends past the data section")
        spans.append((begin, end, name))
    spans.sort()
    cursor = 0
    for begin, end, name in spans:
        if begin < cursor:
            raise CorruptArchive(f"tensor {name!r} overlaps the preceding range")
        if begin > cursor:
            raise CorruptArchive(f"gap before tensor {name!r} in data section")
        cursor = end
    if cursor != data_len:
        raise CorruptArchive(
            f"data section holds {data_len} bytes but tensors cover {cursor}"
        )

    _validate_schema({n: s for n, (s, _, _) in entries.items()}, metadata, SchemaError)

    tensors: dict[str, np.ndarray] = {}
    base = 8 + header_len
    for name, (shape, begin, end) in entries.items():
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=base + begin)
        tensors[name] = arr.reshape(shape).copy()
    _validate_values(tensors, SchemaError)
    return TensorArchive(tensors=tensors, metadata=metadata)


def save_archive(archive: TensorArchive, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_archive(archive))


def load_archive(path) -> TensorArchive:
    with open(path, "rb") as fh:
        return read_archive(fh.read())


# Depth concentration of the synthetic generator: the fraction of grid
# cells carrying amplified output rows shrinks by this factor per layer
# while the amplification grows by it, so deeper layers focus their
# observable energy on fewer cells (mimicking trained models).
SYNTH_FOCUS_FACTOR = 6.0


def synth_model(
    seed: int,
    height: int,
    width: int,
    state_dim: int,
    channels: int,
    num_layers: int,
) -> TensorArchive:
    """Deterministic pseudo-random model for tests and demos.

    Continuous diagonals are drawn negative so every discretized |a_bar|
    stays below 1; delta is uniform in [0.01, 0.2]; b and c start standard
    normal scaled by 1/sqrt(N).  Layer 0 keeps that base draw; each deeper
    layer concentrates large-|c| rows on a shrinking subset of grid cells.
    """
    if min(height, width, state_dim, channels, num_layers) < 1:
        raise InvalidInput("all synth dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    shape = GridShape(height, width)
    length = shape.size
    scale = 1.0 / np.sqrt(state_dim)

    tensors: dict[str, np.ndarray] = {}
    for layer in range(num_layers):
        a = -rng.uniform(1.0, 6.0, size=(channels, state_dim))
        tensors[_tensor_name(layer, "a")] = a.astype(np.float32)

        n_hot = max(1, round(length / SYNTH_FOCUS_FACTOR**layer))
        hot_cells = rng.choice(length, size=n_hot, replace=False)
        cell_gain = np.ones(length)
        cell_gain[hot_cells] = SYNTH_FOCUS_FACTOR**layer

        for direction in ALL_DIRECTIONS:
            order = sequence_order(direction, shape)
            delta = rng.uniform(0.01, 0.2, size=(length, channels))
            b = rng.standard_normal((length, state_dim)) * scale
            c = rng.standard_normal((length, state_dim)) * scale
            c = c * cell_gain[order][:, np.newaxis]
            key = direction.value
            tensors[_tensor_name(layer, "delta", key)] = delta.astype(np.float32)
            tensors[_tensor_name(layer, "b", key)] = b.astype(np.float32)
            tensors[_tensor_name(layer, "c", key)] = c.astype(np.float32)

    metadata = {
        "schema_version": SCHEMA_VERSION,
        "num_layers": int(num_layers),
        "grid": [[int(height), int(width)] for _ in range(num_layers)],
        "state_dim": int(state_dim),
        "channels": int(channels),
        "num_dirs": len(ALL_DIRECTIONS),
        "source_hook": f"synth:seed={int(seed)}",
    }
    return TensorArchive(tensors=tensors, metadata=metadata)


@dataclass(frozen=True)
class LayerParams:
    """One layer/direction's raw tensors, promoted to float64.

    delta is (L, channels) and strictly positive; a is the shared
    (channels, N) continuous diagonal; b and c are the (L, N) selective
    rows of the channel group; d_feed is an optional (channels,)
    feedthrough.
    """

    delta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d_feed: np.ndarray | None = None

    def __post_init__(self):
        length, channels = self.delta.shape
        n = self.a.shape[1]
        if self.a.shape[0] != channels:
            raise SchemaError("a tensor disagrees with delta on channel count")
        if self.b.shape != (length, n) or self.c.shape != (length, n):
            raise SchemaError("b/c tensors disagree with delta and a on shape")
        if self.d_feed is not None and self.d_feed.shape != (channels,):
            raise SchemaError("d_feed tensor must have one entry per channel")
        if not np.all(self.delta > 0.0):
            raise SchemaError("delta must be strictly positive")

    @property
    def length(self) -> int:
        return self.delta.shape[0]

    @property
    def channels(self) -> int:
        return self.delta.shape[1]


def layer_params(
    archive: TensorArchive, layer: int, direction: ScanDirection | str
) -> LayerParams:
    """Fetch one layer/direction's tensors out of a validated archive."""
    if not (0 <= int(layer) < archive.num_layers):
        raise SchemaError(f"layer {layer} not in archive (0..{archive.num_layers - 1})")
    key = _dir_key(direction)
    try:
        a = np.asarray(archive.tensors[_tensor_name(layer, "a")], dtype=np.float64)
        delta = np.asarray(archive.tensors[_tensor_name(layer, "delta", key)], dtype=np.float64)
        b = np.asarray(archive.tensors[_tensor_name(layer, "b", key)], dtype=np.float64)
        c = np.asarray(archive.tensors[_tensor_name(layer, "c", key)], dtype=np.float64)
    except KeyError as exc:
        raise SchemaError(f"archive is missing tensor {exc.args[0]!r}") from exc
    d_feed_name = _tensor_name(layer, "d_feed")
    d_feed = None
    if d_feed_name in archive.tensors:
        d_feed = np.asarray(archive.tensors[d_feed_name], dtype=np.float64)
    expected = archive.grid(layer).size
    if delta.shape[0] != expected:
        raise SchemaError(
            f"layer {layer} has {delta.shape[0]} positions, grid wants {expected}"
        )
    return LayerParams(delta=delta, a=a, b=b, c=c, d_feed=d_feed)


def load_layer_systems(
    archive: TensorArchive, layer: int, direction: ScanDirection | str
) -> list[TimeVaryingDiagonalSystem]:
    """Assemble one discretized per-channel system for a layer/direction.

    Applies the diagonal ZOH discretization position by position with that
    position's delta; channel d's continuous diagonal is row d of the
    layer's shared ``a`` tensor.
    """
    params = layer_params(archive, layer, direction)
    systems = []
    for ch in range(params.channels):
        d_mat = None if params.d_feed is None else np.array([[params.d_feed[ch]]])
        steps = []
        for k in range(params.length):
            a_bar, b_bar = discretize_zoh_diagonal(
                params.a[ch], params.b[k][:, np.newaxis], params.delta[k, ch]
            )
            steps.append(
                DiscretizedDiagonalStep(a_bar, b_bar, params.c[k][np.newaxis, :], d_mat)
            )
        systems.append(TimeVaryingDiagonalSystem(tuple(steps)))
    return systems


def layer_system_provider(archive: TensorArchive, layer: int):
    """Provider closure for :func:`ssmctl.scan2d.analyze_layer`."""

    def provider(direction: ScanDirection) -> list[TimeVaryingDiagonalSystem]:
        return load_layer_systems(archive, layer, direction)

    return provider
