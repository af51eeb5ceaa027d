"""Archive-to-heatmap orchestration and deterministic report emission.

Maps are written as full-precision CSV (one row per grid row), plain P2
PGM (16-bit, min-max normalized per map, with the normalization range
recorded in the report), or inline JSON values.  The JSON report carries
per-direction and aggregated score statistics plus the archive checksum;
identical flags and archive produce byte-identical outputs, so anything
volatile (wall-clock timings) stays out of the emitted files.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .archive import TensorArchive, layer_system_provider
from .errors import InvalidInput, InvalidParameter
from .influence import DEFAULT_GRAMIAN_EPSILON, Method, dominance_violations
from .scan2d import ALL_DIRECTIONS, LayerAnalysis, analyze_layer

PGM_MAXVAL = 65535

THREADS_ENV_VAR = "SSMCTL_THREADS"


def worker_count(n_tasks: int) -> int:
    """Parallelism cap: SSMCTL_THREADS when set, else a small default."""
    env = os.environ.get(THREADS_ENV_VAR)
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise InvalidParameter(f"{THREADS_ENV_VAR} must be an integer, got {env!r}")
        if value < 1:
            raise InvalidParameter(f"{THREADS_ENV_VAR} must be >= 1, got {value}")
        return value
    return max(1, min(4, n_tasks))


def score_entropy(values) -> float:
    """Natural-log entropy of scores normalized to a probability vector.

    An all-zero map has no distribution to speak of; its entropy is
    reported as 0.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    total = float(v.sum())
    if total <= 0.0:
        return 0.0
    p = v / total
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def map_stats(values: np.ndarray) -> dict[str, float]:
    return {
        "min": float(np.min(values)),
        "max": float(np.max(values)),
        "mean": float(np.mean(values)),
        "entropy": score_entropy(values),
    }


def map_to_csv_text(values: np.ndarray) -> str:
    """Row-major CSV at full precision (repr round-trips float64)."""
    lines = [",".join(repr(float(v)) for v in row) for row in np.asarray(values)]
    return "\n".join(lines) + "\n"


def read_map_csv(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(tok) for tok in line.split(",")])
    return np.array(rows, dtype=np.float64)


def map_to_pgm_text(values: np.ndarray) -> tuple[str, float, float]:
    """Plain P2 PGM, min-max normalized to 16 bits.

    Returns the text plus the (min, max) used, which the report records
    because the quantized image alone cannot recover raw scores.
    """
    values = np.asarray(values, dtype=np.float64)
    vmin = float(np.min(values))
    vmax = float(np.max(values))
    if vmax > vmin:
        quantized = np.rint((values - vmin) / (vmax - vmin) * PGM_MAXVAL).astype(np.int64)
    else:
        quantized = np.zeros(values.shape, dtype=np.int64)
    height, width = values.shape
    lines = [f"P2", f"{width} {height}", str(PGM_MAXVAL)]
    lines.extend(" ".join(str(int(q)) for q in row) for row in quantized)
    return "\n".join(lines) + "\n", vmin, vmax


@dataclass
class LayerResult:
    """One layer's analysis and, for the exact method, its dominance check."""

    layer_index: int
    analysis: LayerAnalysis
    dominance_ok: bool | None = None


def _analyze_one_layer(
    archive: TensorArchive, layer: int, method: Method, epsilon: float
) -> LayerResult:
    shape = archive.grid(layer)
    provider = layer_system_provider(archive, layer)
    try:
        analysis = analyze_layer(
            shape, provider, method, epsilon=epsilon, layer_index=layer
        )
    except Exception as exc:
        exc.args = (f"layer {layer}: {exc}",) + exc.args[1:]
        raise
    dominance = None
    if method is Method.JACOBIAN_EXACT:
        reference = analyze_layer(
            shape, provider, Method.JACOBIAN_PROPAGATOR, epsilon=epsilon, layer_index=layer
        )
        dominance = all(
            dominance_violations(
                analysis.per_direction[d].values, reference.per_direction[d].values
            )
            == 0
            for d in ALL_DIRECTIONS
        )
    return LayerResult(layer_index=layer, analysis=analysis, dominance_ok=dominance)


def select_layers(archive: TensorArchive, layer_spec: str | int) -> list[int]:
    if isinstance(layer_spec, str) and layer_spec == "all":
        return list(range(archive.num_layers))
    try:
        layer = int(layer_spec)
    except (TypeError, ValueError):
        raise InvalidInput(f"layer must be an index or 'all', got {layer_spec!r}")
    if not (0 <= layer < archive.num_layers):
        raise InvalidInput(
            f"layer {layer} out of range (archive has {archive.num_layers} layers)"
        )
    return [layer]


def analyze_archive(
    archive: TensorArchive,
    method: Method,
    layer_spec: str | int = "all",
    epsilon: float = DEFAULT_GRAMIAN_EPSILON,
) -> list[LayerResult]:
    """Run one influence method over the selected layers, maps per direction.

    Layers run concurrently under the SSMCTL_THREADS cap; results are
    assembled in layer order so downstream emission stays deterministic.
    """
    method = Method(method)
    layers = select_layers(archive, layer_spec)
    if len(layers) == 1:
        return [_analyze_one_layer(archive, layers[0], method, epsilon)]
    with ThreadPoolExecutor(max_workers=worker_count(len(layers))) as pool:
        futures = {
            layer: pool.submit(_analyze_one_layer, archive, layer, method, epsilon)
            for layer in layers
        }
        return [futures[layer].result() for layer in layers]


def _emit_map(
    values: np.ndarray, stem: str, fmt: str, output_dir: Path
) -> dict[str, Any]:
    entry: dict[str, Any] = map_stats(values)
    if fmt == "csv":
        name = f"{stem}.csv"
        (output_dir / name).write_text(map_to_csv_text(values), encoding="utf-8")
        entry["map"] = name
    elif fmt == "pgm":
        name = f"{stem}.pgm"
        text, vmin, vmax = map_to_pgm_text(values)
        (output_dir / name).write_text(text, encoding="utf-8")
        entry["map"] = name
        entry["pgm_range"] = [vmin, vmax]
    elif fmt == "json":
        entry["values"] = [[float(v) for v in row] for row in values]
    else:
        raise InvalidInput(f"unknown map format {fmt!r}")
    return entry


def emit_results(
    results: Sequence[LayerResult],
    archive_bytes: bytes,
    method: Method,
    epsilon: float,
    fmt: str,
    output_dir,
) -> dict[str, Any]:
    """Write map files and the JSON report; returns the report object."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    method = Method(method)

    layers_out = []
    for result in results:
        layer = result.layer_index
        per_direction = {}
        for direction in ALL_DIRECTIONS:
            imap = result.analysis.per_direction[direction]
            per_direction[direction.value] = _emit_map(
                imap.values, f"layer{layer}.{direction.value}", fmt, output_dir
            )
        aggregated = _emit_map(
            result.analysis.aggregated.values, f"layer{layer}.aggregated", fmt, output_dir
        )
        shape = result.analysis.aggregated.values.shape
        entry: dict[str, Any] = {
            "layer": layer,
            "grid": [int(shape[0]), int(shape[1])],
            "method": method.value,
            "epsilon": float(epsilon) if method is Method.GRAMIAN else 0.0,
            "directions": per_direction,
            "aggregated": aggregated,
        }
        if result.dominance_ok is not None:
            entry["dominance_ok"] = result.dominance_ok
        layers_out.append(entry)

    report = {
        "archive_sha256": hashlib.sha256(archive_bytes).hexdigest(),
        "format": fmt,
        "method": method.value,
        "epsilon": float(epsilon) if method is Method.GRAMIAN else 0.0,
        "schema_version": "1",
        "layers": layers_out,
    }
    report_path = output_dir / "report.json"
    report_path.write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return report
