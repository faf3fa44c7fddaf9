"""Velocity-vector-field reactive planner.

A linear-falloff repulsive field around obstacles plus a uniform forward
velocity field; the look-ahead point is found by a discrete 8-neighbor
descent along the combined field from the cell ahead of the vehicle.

Field vectors are stored as (fx, fy) in grid axes: fx points to the right
(increasing column), fy points forward (decreasing row).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from udl.grid import (
    ANCHOR_COL,
    ANCHOR_ROW,
    GRID_N,
    LookAheadAction,
    OccupancyGrid,
)
from udl.vehicle import (
    VehicleParams,
    pure_pursuit_steering,
    velocity_from_steering,
)

REPULSIVE_RANGE = 2.3  # meters
MAX_DESCENT_STEPS = 24

# descent neighbor order: forward first, then clockwise toward the right,
# so alignment ties resolve forward-then-rightward
_NEIGHBORS = (
    (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)
)


class NoMotionError(RuntimeError):
    """The descent cannot start (cell ahead of the vehicle is occupied)."""


@dataclass
class FieldMap:
    """A 25x25 direction field plus the mixing weights used to build it."""

    vectors: np.ndarray  # (25, 25, 2) of (fx, fy)
    repulsive_weight: float = 1.0
    attractive_weight: float = 0.0
    velocity_weight: float = 0.5
    repulsive_range: float = REPULSIVE_RANGE


def repulsive_field(grid: OccupancyGrid,
                    repulsive_range: float = REPULSIVE_RANGE) -> FieldMap:
    """Sum of away-from-obstacle unit vectors with linear falloff.

    Contributions vanish beyond ``repulsive_range``; occupied cells carry a
    zero vector.
    """
    frame = grid.frame
    fwd, rgt = frame.cell_centers_meters()
    vectors = np.zeros((GRID_N, GRID_N, 2))
    occ = np.argwhere(grid.cells == 1)
    if len(occ):
        of = fwd[occ[:, 0], occ[:, 1]]
        orr = rgt[occ[:, 0], occ[:, 1]]
        df = fwd[:, :, None] - of[None, None, :]
        dr = rgt[:, :, None] - orr[None, None, :]
        d = np.hypot(df, dr)
        w = np.maximum(0.0, 1.0 - d / repulsive_range)
        with np.errstate(invalid="ignore", divide="ignore"):
            ur = np.where(d > 0, dr / d, 0.0)
            uf = np.where(d > 0, df / d, 0.0)
        vectors[:, :, 0] = (ur * w).sum(axis=2)
        vectors[:, :, 1] = (uf * w).sum(axis=2)
        vectors[grid.cells == 1] = 0.0
    return FieldMap(vectors, velocity_weight=0.0, repulsive_range=repulsive_range)


def velocity_field(weight: float = 0.5) -> FieldMap:
    """Uniform forward flow, pre-scaled by its mixing weight."""
    vectors = np.zeros((GRID_N, GRID_N, 2))
    vectors[:, :, 1] = weight
    return FieldMap(vectors, repulsive_weight=0.0, velocity_weight=weight)


def combined_field(grid: OccupancyGrid,
                   repulsive_range: float = REPULSIVE_RANGE,
                   velocity_weight: float = 0.5) -> FieldMap:
    rep = repulsive_field(grid, repulsive_range)
    vel = velocity_field(velocity_weight)
    return FieldMap(rep.vectors + vel.vectors,
                    velocity_weight=velocity_weight,
                    repulsive_range=repulsive_range)


def descend_to_lookahead(field: FieldMap, grid: OccupancyGrid) -> LookAheadAction:
    """Walk the grid along the field from one cell ahead of the anchor.

    Each step moves to the 8-neighbor best aligned with the local field
    vector; the walk stops at a fixed point (no positively aligned
    neighbor), an occupied or already-visited cell, or after
    MAX_DESCENT_STEPS moves.
    """
    r, c = ANCHOR_ROW - 1, ANCHOR_COL
    if grid.cells[r, c]:
        raise NoMotionError("cell ahead of the vehicle is occupied")
    frame = grid.frame
    visited = {(r, c)}
    for _ in range(MAX_DESCENT_STEPS):
        fx, fy = field.vectors[r, c]
        best = None
        for dr, dc in _NEIGHBORS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < GRID_N and 0 <= nc < GRID_N):
                continue
            norm = (dr * dr + dc * dc) ** 0.5
            align = (dc * fx + (-dr) * fy) / norm
            if best is None or align > best[0] + 1e-12:
                best = (align, nr, nc)
        if best is None or best[0] <= 0.0:
            break
        nr, nc = best[1], best[2]
        if grid.cells[nr, nc] or (nr, nc) in visited:
            break
        r, c = nr, nc
        visited.add((r, c))
    ax, ay = frame.cell_to_normalized(r, c)
    return LookAheadAction(ax, ay)


def vvf_command(
    grid: OccupancyGrid, params: VehicleParams = VehicleParams()
) -> tuple[float, float]:
    """Steering and velocity from the descended look-ahead point."""
    action = descend_to_lookahead(combined_field(grid), grid)
    frame = grid.frame
    f_a, r_a = frame.normalized_to_meters(action.ax, action.ay)
    delta = pure_pursuit_steering(
        None, (f_a + params.anchor_offset, r_a), params
    )
    return delta, velocity_from_steering(delta, params)


def field_to_json(field: FieldMap) -> str:
    """625 [fx, fy] pairs in row-major order."""
    flat = field.vectors.reshape(-1, 2)
    return json.dumps([[float(a), float(b)] for a, b in flat])
