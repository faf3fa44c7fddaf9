"""Sensor-grid extraction, noise injection, and grid-level metrics.

The sensor grid is a 25x25 binary window ahead of the vehicle: row 0 is the
farthest row, row 24 is at the vehicle, column 0 is leftmost.  The front
bumper center sits in the anchor cell (row 24, col 12).  Normalized actions
(a_x, a_y) in [0, 1]^2 map onto the grid with a_x = 0 at the left edge and
a_y = 0 at the vehicle row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from udl.geometry import Pose2D
from udl.world import WorldMap

GRID_N = 25
ANCHOR_ROW = 24
ANCHOR_COL = 12


@dataclass
class OccupancyGrid:
    """25x25 binary window; 0 = drivable, 1 = occupied.

    ``extent`` is the physical side length of the window in meters.
    Treated as immutable after construction.
    """

    cells: np.ndarray
    extent: float

    def __post_init__(self) -> None:
        self.cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if self.cells.shape != (GRID_N, GRID_N):
            raise ValueError(f"grid must be {GRID_N}x{GRID_N}, got {self.cells.shape}")
        if not np.isin(self.cells, (0, 1)).all():
            raise ValueError("grid cells must be 0 or 1")

    @property
    def frame(self) -> "GridFrame":
        return GridFrame(self.extent)


@dataclass(frozen=True)
class LookAheadAction:
    """Normalized look-ahead waypoint; both components in [0, 1]."""

    ax: float
    ay: float


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters of the three seeded sensor-noise generators."""

    boundary_flip_prob: float = 0.0
    shadow_blob_count: int = 0
    shadow_blob_radius: int = 0
    false_drivable_segments: int = 0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.boundary_flip_prob <= 1.0):
            raise ValueError("boundary_flip_prob must be in [0, 1]")
        if min(self.shadow_blob_count, self.shadow_blob_radius,
               self.false_drivable_segments) < 0:
            raise ValueError("noise counts must be >= 0")


#: Severity calibrated so corpus-mean pixel accuracy vs the clean grid lands
#: in the high-90s band of a camera segmentation front end (see tests).
DEFAULT_NOISE = NoiseSpec(
    boundary_flip_prob=0.02,
    shadow_blob_count=1,
    shadow_blob_radius=1,
    false_drivable_segments=1,
    rng_seed=0,
)


@dataclass(frozen=True)
class GridFrame:
    """Mapping between grid cells, normalized actions, and vehicle meters.

    Vehicle-frame coordinates are (forward, right) measured from the anchor
    cell center.
    """

    extent: float

    @property
    def cell_size(self) -> float:
        return self.extent / GRID_N

    def cell_to_normalized(self, row: int, col: int) -> tuple[float, float]:
        return col / (GRID_N - 1), (ANCHOR_ROW - row) / (GRID_N - 1)

    def normalized_to_cell(self, ax: float, ay: float) -> tuple[int, int]:
        col = int(round(ax * (GRID_N - 1)))
        row = ANCHOR_ROW - int(round(ay * (GRID_N - 1)))
        return min(max(row, 0), GRID_N - 1), min(max(col, 0), GRID_N - 1)

    def cell_to_meters(self, row: int, col: int) -> tuple[float, float]:
        cs = self.cell_size
        return (ANCHOR_ROW - row) * cs, (col - ANCHOR_COL) * cs

    def normalized_to_meters(self, ax: float, ay: float) -> tuple[float, float]:
        cs = self.cell_size
        return ay * (GRID_N - 1) * cs, (ax * (GRID_N - 1) - ANCHOR_COL) * cs

    def meters_to_cell(self, forward: float, right: float) -> tuple[int, int]:
        cs = self.cell_size
        row = ANCHOR_ROW - int(round(forward / cs))
        col = ANCHOR_COL + int(round(right / cs))
        return row, col

    def cell_centers_meters(self) -> tuple[np.ndarray, np.ndarray]:
        """(forward, right) coordinates of all cell centers, shape (25, 25)."""
        cs = self.cell_size
        rows = np.arange(GRID_N)
        cols = np.arange(GRID_N)
        fwd = (ANCHOR_ROW - rows)[:, None] * cs * np.ones((1, GRID_N))
        rgt = np.ones((GRID_N, 1)) * (cols - ANCHOR_COL)[None, :] * cs
        return fwd, rgt


def _subsample_offsets(cell_size: float, subsamples: int) -> np.ndarray:
    """1-D subsample offsets; refinement levels nest so occupancy can only grow."""
    base = np.array([-0.25, 0.25]) * cell_size
    if subsamples == 2:
        return base
    if subsamples == 4:
        extra = np.array([-0.375, -0.125, 0.125, 0.375]) * cell_size
        return np.concatenate([base, extra])
    raise ValueError("subsamples must be 2 or 4")


def extract_sensor_grid(
    world: WorldMap, anchor: Pose2D, extent: float, subsamples: int = 2
) -> OccupancyGrid:
    """Rasterize the extent x extent window ahead of ``anchor``.

    ``anchor`` is the front-bumper pose; it lands in cell (24, 12).  A cell
    is occupied if ANY of its subsample points maps to an occupied world
    cell or falls outside world bounds.
    """
    if not (extent > 0):
        raise ValueError("extent must be > 0")
    frame = GridFrame(extent)
    fwd, rgt = frame.cell_centers_meters()
    offs = _subsample_offsets(frame.cell_size, subsamples)
    df, dr = np.meshgrid(offs, offs, indexing="ij")
    df, dr = df.ravel(), dr.ravel()

    f_pts = fwd[:, :, None] + df[None, None, :]
    r_pts = rgt[:, :, None] + dr[None, None, :]
    c, s = np.cos(anchor.theta), np.sin(anchor.theta)
    wx = anchor.x + f_pts * c + r_pts * s
    wy = anchor.y + f_pts * s - r_pts * c

    i = np.floor(wx / world.cell_size).astype(np.int64)
    j = np.floor(wy / world.cell_size).astype(np.int64)
    outside = (i < 0) | (i >= world.width_cells) | (j < 0) | (j >= world.height_cells)
    i_c = np.clip(i, 0, world.width_cells - 1)
    j_c = np.clip(j, 0, world.height_cells - 1)
    occ = world.cells[j_c, i_c].astype(bool) | outside
    return OccupancyGrid(occ.any(axis=2).astype(np.uint8), extent)


def pixel_accuracy(a: OccupancyGrid, b: OccupancyGrid) -> float:
    """Percentage of matching cells between two same-shaped grids."""
    if a.cells.shape != b.cells.shape:
        raise ValueError("grids must have the same shape")
    return 100.0 * float(np.count_nonzero(a.cells == b.cells)) / a.cells.size


def reachable_mask(grid: OccupancyGrid) -> np.ndarray:
    """4-connected drivable cells reachable from the vehicle anchor."""
    drivable = grid.cells == 0
    if not drivable[ANCHOR_ROW, ANCHOR_COL]:
        return np.zeros_like(grid.cells)
    structure = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    labels, _ = ndimage.label(drivable, structure=structure)
    return (labels == labels[ANCHOR_ROW, ANCHOR_COL]).astype(np.uint8)


def _boundary_mask(cells: np.ndarray) -> np.ndarray:
    """Cells having at least one 4-neighbor with the opposite value."""
    diff = np.zeros(cells.shape, dtype=bool)
    diff[:-1, :] |= cells[:-1, :] != cells[1:, :]
    diff[1:, :] |= cells[1:, :] != cells[:-1, :]
    diff[:, :-1] |= cells[:, :-1] != cells[:, 1:]
    diff[:, 1:] |= cells[:, 1:] != cells[:, :-1]
    return diff


def apply_noise(grid: OccupancyGrid, spec: NoiseSpec) -> OccupancyGrid:
    """Inject boundary-flip, shadow-blob, and false-drivable noise.

    Deterministic under ``spec.rng_seed``; a zero spec is the identity.
    """
    cells = grid.cells.copy()
    rng = np.random.default_rng(spec.rng_seed)

    if spec.boundary_flip_prob > 0.0:
        boundary = _boundary_mask(cells)
        flips = boundary & (rng.random(cells.shape) < spec.boundary_flip_prob)
        cells[flips] ^= 1

    radius = spec.shadow_blob_radius
    for _ in range(spec.shadow_blob_count):
        drivable = np.argwhere(cells == 0)
        if len(drivable) == 0:
            break
        cr, cc = drivable[int(rng.integers(len(drivable)))]
        rr, cc2 = np.ogrid[:GRID_N, :GRID_N]
        blob = (rr - cr) ** 2 + (cc2 - cc) ** 2 <= radius**2
        cells[blob & (cells == 0)] = 1

    for _ in range(spec.false_drivable_segments):
        occ_boundary = np.argwhere((cells == 1) & _boundary_mask(cells))
        if len(occ_boundary) == 0:
            break
        r, c = occ_boundary[int(rng.integers(len(occ_boundary)))]
        cells[r, c] = 0
        for _ in range(2):  # extend the carved segment a couple of cells
            nbrs = [
                (r + dr, c + dc)
                for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
                if 0 <= r + dr < GRID_N and 0 <= c + dc < GRID_N
                and cells[r + dr, c + dc] == 1
            ]
            if not nbrs:
                break
            r, c = nbrs[int(rng.integers(len(nbrs)))]
            cells[r, c] = 0

    return OccupancyGrid(cells, grid.extent)
