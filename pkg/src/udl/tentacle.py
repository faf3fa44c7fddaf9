"""Candidate-path reactive planner.

81 constant-curvature arcs, dense near straight (power-law spacing), scored
by a distance-weighted clearance term plus a forwarding (least-curvature)
term.  Paths whose first 2 m corridor is blocked are inadmissible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from udl.grid import GridFrame, OccupancyGrid
from udl.vehicle import VehicleParams, velocity_from_steering

N_PATHS = 81
STRAIGHT_INDEX = 40
ARC_LENGTH = 8.0
ARC_STEP = 0.25
CURVATURE_EXPONENT = 1.8
BLOCK_DEPTH = 2.0  # arc length of the inadmissibility corridor, meters


class NoPathError(RuntimeError):
    """Every candidate path is inadmissible."""


@dataclass(frozen=True)
class TentacleWeights:
    clearance: float = 1.0
    flatness: float = 0.0
    trajectory: float = 0.0
    forwarding: float = 0.3
    detection_range: float = 0.35

    def __post_init__(self) -> None:
        if min(self.clearance, self.flatness, self.trajectory, self.forwarding) < 0:
            raise ValueError("weights must be >= 0")


DEFAULT_WEIGHTS = TentacleWeights()


@dataclass
class CandidatePath:
    """A constant-curvature arc; positive curvature bends right."""

    curvature: float
    arc_points: np.ndarray  # (K, 2) of (forward, right), every ARC_STEP meters
    arc_lengths: np.ndarray  # (K,)
    index: int


def _arc_points(curvature: float, lengths: np.ndarray) -> np.ndarray:
    if abs(curvature) < 1e-12:
        return np.stack([lengths, np.zeros_like(lengths)], axis=1)
    f = np.sin(curvature * lengths) / curvature
    r = (1.0 - np.cos(curvature * lengths)) / curvature
    return np.stack([f, r], axis=1)


def max_curvature(params: VehicleParams) -> float:
    return math.tan(params.max_wheel_angle) / params.wheelbase


def build_tentacle_set(params: VehicleParams) -> list[CandidatePath]:
    """The 81 candidate arcs; index 40 is straight, curvatures mirror about it."""
    kappa_max = max_curvature(params)
    lengths = np.arange(1, int(ARC_LENGTH / ARC_STEP) + 1) * ARC_STEP
    paths = []
    for k in range(N_PATHS):
        off = k - STRAIGHT_INDEX
        kappa = math.copysign(
            kappa_max * (abs(off) / STRAIGHT_INDEX) ** CURVATURE_EXPONENT, off
        ) if off else 0.0
        paths.append(CandidatePath(kappa, _arc_points(kappa, lengths), lengths, k))
    return paths


def clearance_cost(
    path: CandidatePath, grid: OccupancyGrid, detection_range: float
) -> float:
    """Weighted fraction of occupied cells near the path; inf if blocked early.

    Cells within ``detection_range`` of any arc point contribute, weighted by
    1 / (1 + arc distance of the nearest point).
    """
    if not (detection_range > 0):
        raise ValueError("detection_range must be > 0")
    frame = grid.frame
    fwd, rgt = frame.cell_centers_meters()
    centers = np.stack([fwd.ravel(), rgt.ravel()], axis=1)  # (625, 2)
    d = np.linalg.norm(centers[:, None, :] - path.arc_points[None, :, :], axis=2)
    occ = grid.cells.ravel().astype(bool)

    near = path.arc_lengths <= BLOCK_DEPTH
    if (occ & (d[:, near].min(axis=1) <= detection_range)).any():
        return math.inf

    dmin = d.min(axis=1)
    in_range = dmin <= detection_range
    if not in_range.any():
        return 0.0
    s_near = path.arc_lengths[d.argmin(axis=1)]
    w = 1.0 / (1.0 + s_near)
    total = float(w[in_range].sum())
    occupied = float(w[in_range & occ].sum())
    return occupied / total


def forwarding_cost(path: CandidatePath, params: VehicleParams) -> float:
    """Normalized curvature magnitude in [0, 1]."""
    return abs(path.curvature) / max_curvature(params)


class _PreparedSet:
    """Per-(params, extent) precomputation so per-tick scoring is array math."""

    def __init__(self, paths: list[CandidatePath], params: VehicleParams,
                 frame: GridFrame, detection_range: float) -> None:
        self.paths = paths
        fwd, rgt = frame.cell_centers_meters()
        centers = np.stack([fwd.ravel(), rgt.ravel()], axis=1)
        n_cells = centers.shape[0]
        self.weights = np.zeros((N_PATHS, n_cells))
        self.in_range = np.zeros((N_PATHS, n_cells), dtype=bool)
        self.blocked = np.zeros((N_PATHS, n_cells), dtype=bool)
        self.forwarding = np.array(
            [forwarding_cost(p, params) for p in paths]
        )
        for k, path in enumerate(paths):
            d = np.linalg.norm(
                centers[:, None, :] - path.arc_points[None, :, :], axis=2
            )
            near = path.arc_lengths <= BLOCK_DEPTH
            self.blocked[k] = d[:, near].min(axis=1) <= detection_range
            dmin = d.min(axis=1)
            self.in_range[k] = dmin <= detection_range
            s_near = path.arc_lengths[d.argmin(axis=1)]
            self.weights[k] = np.where(self.in_range[k], 1.0 / (1.0 + s_near), 0.0)
        self.weight_totals = self.weights.sum(axis=1)


_prepared_cache: dict[tuple, _PreparedSet] = {}


def _prepared(params: VehicleParams, extent: float,
              detection_range: float) -> _PreparedSet:
    key = (params.wheelbase, params.max_wheel_angle, extent, detection_range)
    if key not in _prepared_cache:
        _prepared_cache[key] = _PreparedSet(
            build_tentacle_set(params), params, GridFrame(extent), detection_range
        )
    return _prepared_cache[key]


def tentacle_command(
    grid: OccupancyGrid,
    weights: TentacleWeights = DEFAULT_WEIGHTS,
    params: VehicleParams = VehicleParams(),
) -> tuple[float, float]:
    """Pick the least-cost admissible arc; returns (steering, velocity).

    Ties break toward smaller curvature magnitude, then the lower index.
    Raises NoPathError when every arc is inadmissible.
    """
    prep = _prepared(params, grid.extent, weights.detection_range)
    occ = grid.cells.ravel().astype(bool)

    admissible = ~(prep.blocked & occ[None, :]).any(axis=1)
    if not admissible.any():
        raise NoPathError("all candidate paths are blocked")

    occupied_w = (prep.weights * occ[None, :]).sum(axis=1)
    clearance = np.where(
        prep.weight_totals > 0, occupied_w / np.maximum(prep.weight_totals, 1e-300), 0.0
    )
    cost = weights.clearance * clearance + weights.forwarding * prep.forwarding

    best = None
    for k in range(N_PATHS):
        if not admissible[k]:
            continue
        key = (cost[k], abs(prep.paths[k].curvature), k)
        if best is None or key < best[0]:
            best = (key, k)
    selected = prep.paths[best[1]]
    delta = math.atan(params.wheelbase * selected.curvature)
    return delta, velocity_from_steering(delta, params)
