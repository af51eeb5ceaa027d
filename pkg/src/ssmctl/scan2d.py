"""Four-direction 2D scan orderings and influence-map assembly.

A 2D patch grid is traversed as four 1D sequences: row-major (fwd), its
reverse (bwd), column-major (tfwd), and its reverse (tbwd).  Each ordering
is a bijection between grid cells and sequence positions, so per-position
scores map back onto the grid losslessly; the four directional maps are
then averaged into one heatmap per layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import TimeVaryingDiagonalSystem
from .errors import InvalidInput, InvalidParameter, ShapeError
from .influence import (
    DEFAULT_GRAMIAN_EPSILON,
    InfluenceScores,
    Method,
    influence_scores,
)


class ScanDirection(str, Enum):
    """One of four bijections between the grid and a 1D sequence."""

    FWD = "fwd"
    BWD = "bwd"
    TFWD = "tfwd"
    TBWD = "tbwd"


ALL_DIRECTIONS: tuple[ScanDirection, ...] = (
    ScanDirection.FWD,
    ScanDirection.BWD,
    ScanDirection.TFWD,
    ScanDirection.TBWD,
)


@dataclass(frozen=True)
class GridShape:
    """Patch grid dimensions; sequences flattened from it have length H*W."""

    height: int
    width: int

    def __post_init__(self):
        if int(self.height) < 1 or int(self.width) < 1:
            raise InvalidInput("grid dimensions must be >= 1")
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "width", int(self.width))

    @property
    def size(self) -> int:
        return self.height * self.width


def sequence_order(direction: ScanDirection, shape: GridShape) -> np.ndarray:
    """Row-major cell index visited at each sequence position.

    fwd walks rows left to right, tfwd walks columns top to bottom, and
    bwd / tbwd are their exact reverses.
    """
    direction = ScanDirection(direction)
    base = np.arange(shape.size)
    if direction is ScanDirection.FWD:
        order = base
    elif direction is ScanDirection.BWD:
        order = base[::-1]
    elif direction is ScanDirection.TFWD:
        order = base.reshape(shape.height, shape.width).T.ravel()
    else:
        order = base.reshape(shape.height, shape.width).T.ravel()[::-1]
    return order.copy()


@dataclass(frozen=True)
class InfluenceMap:
    """H x W grid of nonnegative scores with provenance."""

    values: np.ndarray
    layer_index: int = 0
    method: Method | None = None
    direction: ScanDirection | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"map values must be 2-dimensional, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidParameter("map contains non-finite values")
        if np.any(values < 0.0):
            raise InvalidParameter("map contains negative values")
        frozen = values.copy()
        frozen.setflags(write=False)
        object.__setattr__(self, "values", frozen)

    @property
    def shape(self) -> GridShape:
        return GridShape(*self.values.shape)


def flatten(grid, direction: ScanDirection) -> np.ndarray:
    """Read a (H, W) or (H, W, C) grid into sequence order."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim not in (2, 3):
        raise ShapeError(f"grid must be (H, W) or (H, W, C), got {grid.shape}")
    shape = GridShape(grid.shape[0], grid.shape[1])
    order = sequence_order(direction, shape)
    flat = grid.reshape(shape.size, -1)[order]
    return flat[:, 0] if grid.ndim == 2 else flat


def unflatten_scores(
    scores,
    direction: ScanDirection,
    shape: GridShape,
    layer_index: int = 0,
    method: Method | None = None,
) -> InfluenceMap:
    """Place per-position scores back onto the grid for one direction."""
    if isinstance(scores, InfluenceScores):
        method = scores.method if method is None else method
        scores = scores.scores
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ShapeError(f"scores must be a vector, got shape {scores.shape}")
    if scores.shape[0] != shape.size:
        raise ShapeError(
            f"got {scores.shape[0]} scores for a {shape.height}x{shape.width} grid"
        )
    order = sequence_order(direction, shape)
    values = np.empty(shape.size)
    values[order] = scores
    return InfluenceMap(
        values.reshape(shape.height, shape.width),
        layer_index=layer_index,
        method=method,
        direction=ScanDirection(direction),
    )


def aggregate_directions(maps: Sequence[InfluenceMap]) -> InfluenceMap:
    """Cellwise mean of exactly one map per scan direction."""
    maps = list(maps)
    if len(maps) != 4:
        raise InvalidInput(f"need exactly 4 maps, got {len(maps)}")
    seen = [m.direction for m in maps]
    if set(seen) != set(ALL_DIRECTIONS) or len(set(seen)) != 4:
        raise InvalidInput(f"need one map per direction, got {seen}")
    first = maps[0]
    for m in maps[1:]:
        if m.values.shape != first.values.shape:
            raise InvalidInput("maps disagree on grid shape")
        if m.layer_index != first.layer_index or m.method != first.method:
            raise InvalidInput("maps disagree on layer or method")
    values = np.mean(np.stack([m.values for m in maps]), axis=0)
    return InfluenceMap(
        values, layer_index=first.layer_index, method=first.method, direction=None
    )


@dataclass(frozen=True)
class LayerAnalysis:
    """Per-direction influence maps plus their aggregate for one layer."""

    per_direction: Mapping[ScanDirection, InfluenceMap]
    aggregated: InfluenceMap


SystemProvider = Callable[[ScanDirection], Sequence[TimeVaryingDiagonalSystem]]


def analyze_layer(
    shape: GridShape,
    provider: SystemProvider,
    method: Method,
    epsilon: float = DEFAULT_GRAMIAN_EPSILON,
    layer_index: int = 0,
    directions: Sequence[ScanDirection] | None = None,
) -> LayerAnalysis:
    """Score every direction of one layer and aggregate the maps.

    ``provider`` returns the per-channel systems (each of length H*W) for a
    direction.  ``directions`` is a test hook: restricting it to a subset
    aggregates only the maps that were computed.
    """
    dirs = tuple(ScanDirection(d) for d in (directions or ALL_DIRECTIONS))
    if len(set(dirs)) != len(dirs):
        raise InvalidInput(f"duplicate directions in {dirs}")
    maps: dict[ScanDirection, InfluenceMap] = {}
    for direction in dirs:
        systems = list(provider(direction))
        for s in systems:
            if s.length != shape.size:
                raise ShapeError(
                    f"{direction.value}: system length {s.length} does not match "
                    f"{shape.height}x{shape.width} grid"
                )
        try:
            scores = influence_scores(systems, method, epsilon)
        except Exception as exc:
            exc.args = (f"direction {direction.value}: {exc}",) + exc.args[1:]
            raise
        maps[direction] = unflatten_scores(
            scores, direction, shape, layer_index=layer_index, method=Method(method)
        )
    if len(dirs) == 4:
        aggregated = aggregate_directions([maps[d] for d in ALL_DIRECTIONS])
    else:
        values = np.mean(np.stack([maps[d].values for d in dirs]), axis=0)
        aggregated = InfluenceMap(
            values, layer_index=layer_index, method=Method(method), direction=None
        )
    return LayerAnalysis(per_direction=maps, aggregated=aggregated)
