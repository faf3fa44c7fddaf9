"""Scripted look-ahead expert.

Selects a look-ahead point on the noise-free grid by three rules: the point
must be drivable and reachable, it must keep clear of obstacles (checked on
a short rollout when something is ahead), and otherwise it should be as far
from the vehicle as possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from udl.grid import (
    ANCHOR_COL,
    ANCHOR_ROW,
    GRID_N,
    LookAheadAction,
    OccupancyGrid,
    reachable_mask,
)
from udl.vehicle import VehicleParams, VehicleState, batch_rollout

ROLLOUT_TICK_STRIDE = 1


class NoActionError(RuntimeError):
    """No drivable, reachable, sufficiently clear candidate cell exists."""


@dataclass(frozen=True)
class ExpertConfig:
    rollout_horizon: float = 3.0
    clearance_floor: float = 0.6
    front_corridor_depth: float = 8.0
    front_corridor_halfwidth: float = 1.2
    look_ahead_cap: float = 6.4

    def __post_init__(self) -> None:
        if min(self.rollout_horizon, self.clearance_floor,
               self.front_corridor_depth, self.front_corridor_halfwidth,
               self.look_ahead_cap) <= 0:
            raise ValueError("expert config values must be > 0")


def clearance_map(grid: OccupancyGrid) -> np.ndarray:
    """Distance (meters) from each cell center to the nearest occupied cell."""
    if not grid.cells.any():
        return np.full((GRID_N, GRID_N), np.inf)
    d = ndimage.distance_transform_edt(grid.cells == 0)
    return d * grid.frame.cell_size


def obstacle_ahead(grid: OccupancyGrid, config: ExpertConfig) -> bool:
    """True iff an occupied cell sits in the forward corridor."""
    return front_obstacle_distance(grid, config) is not None


def front_obstacle_distance(
    grid: OccupancyGrid, config: ExpertConfig
) -> Optional[float]:
    """Forward distance (meters) to the nearest occupied cell in the
    forward corridor, or None when the corridor is clear."""
    fwd, rgt = grid.frame.cell_centers_meters()
    corridor = (
        (fwd > 0)
        & (fwd <= config.front_corridor_depth)
        & (np.abs(rgt) <= config.front_corridor_halfwidth)
    )
    occupied = corridor & (grid.cells == 1)
    if not occupied.any():
        return None
    return float(fwd[occupied].min())


def _rollout_clearances(
    targets_fr: np.ndarray,
    grid: OccupancyGrid,
    state: VehicleState,
    config: ExpertConfig,
    params: VehicleParams,
) -> np.ndarray:
    """Minimum clearance along a pure-pursuit rollout toward each target.

    Clearance is looked up on the grid's distance map at the front-bumper
    positions; leaving the grid window counts as zero clearance.
    """
    dist = clearance_map(grid)
    cs = grid.frame.cell_size
    states = batch_rollout(targets_fr, config.rollout_horizon, params)
    xs = states[::ROLLOUT_TICK_STRIDE, :, 0]
    ys = states[::ROLLOUT_TICK_STRIDE, :, 1]
    th = states[::ROLLOUT_TICK_STRIDE, :, 2]
    f = xs + params.anchor_offset * np.cos(th)
    r = ys + params.anchor_offset * np.sin(th)
    rows = ANCHOR_ROW - np.round(f / cs).astype(np.int64)
    cols = ANCHOR_COL + np.round(r / cs).astype(np.int64)
    inside = (rows >= 0) & (rows < GRID_N) & (cols >= 0) & (cols < GRID_N)
    clear = np.where(
        inside,
        dist[np.clip(rows, 0, GRID_N - 1), np.clip(cols, 0, GRID_N - 1)],
        0.0,
    )
    return clear.min(axis=0)


def select_expert_action(
    grid: OccupancyGrid,
    state: VehicleState,
    config: ExpertConfig = ExpertConfig(),
    params: VehicleParams = VehicleParams(),
) -> LookAheadAction:
    """Pick the expert look-ahead cell by exhaustive candidate scan.

    Candidates are reachable drivable cells at least ``clearance_floor``
    from any obstacle.  With an obstacle ahead, candidates are ranked by
    (minimum rollout clearance, distance from the vehicle); otherwise by
    distance alone.  Ties prefer farther-forward rows, then columns closer
    to center, then the smaller column.  Deterministic.
    """
    frame = grid.frame
    reach = reachable_mask(grid)
    clear = clearance_map(grid)
    candidates = (reach == 1) & (clear >= config.clearance_floor)
    candidates[ANCHOR_ROW, ANCHOR_COL] = False  # zero-distance target is degenerate
    cand_idx = np.argwhere(candidates)
    if len(cand_idx) == 0:
        raise NoActionError("no reachable cell satisfies the clearance floor")

    fwd, rgt = frame.cell_centers_meters()
    rows, cols = cand_idx[:, 0], cand_idx[:, 1]
    # quantize to cell resolution: a row of far cells ties, and the a_x-near-
    # center tie-break then lands on the corridor centerline instead of
    # flip-flopping between the window's corner cells.  The cap bounds the
    # preference: everything beyond it ties, so the target does not teleport
    # between distant branches as the reachable frontier shifts tick to tick.
    dist_from_anchor = np.minimum(
        np.round(np.hypot(fwd[rows, cols], rgt[rows, cols]) / frame.cell_size),
        np.round(config.look_ahead_cap / frame.cell_size),
    )

    if obstacle_ahead(grid, config):
        targets = np.stack([fwd[rows, cols], rgt[rows, cols]], axis=1)
        rollout_clear = _rollout_clearances(targets, grid, state, config, params)
        # avoidance is a feasibility question: ranking by raw clearance
        # rewards standstill targets (they keep the current clearance
        # forever) and the expert creeps.  Saturate the clearance key at
        # the floor so any collision-free rollout ties and distance decides.
        viable = (rollout_clear >= config.clearance_floor).astype(np.float64)
        primary = np.stack([viable, dist_from_anchor], axis=1)
    else:
        primary = np.stack(
            [np.zeros_like(dist_from_anchor), dist_from_anchor], axis=1
        )

    # lexicographic max on (primary..., larger a_y, |a_x - 0.5| small, small col);
    # np.lexsort sorts ascending by the LAST key first
    col_off = np.abs(cols - ANCHOR_COL)
    order = np.lexsort(
        (cols, col_off, rows, -primary[:, 1], -primary[:, 0])
    )
    r, c = cand_idx[order[0]]
    ax, ay = frame.cell_to_normalized(int(r), int(c))
    return LookAheadAction(ax, ay)
