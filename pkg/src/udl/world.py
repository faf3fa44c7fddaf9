"""World maps and the UDLW v1 text format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from udl.geometry import Pose2D


class WorldParseError(ValueError):
    """Raised on a malformed world file; carries the offending line number."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class WorldMap:
    """A binary drivability map with a start pose and a reference path.

    ``cells`` has shape (height, width); row 0 sits at world y = 0 and row
    index grows with y (the text format lists rows top-down, the parser
    flips them).  0 = drivable, 1 = occupied.
    """

    width_cells: int
    height_cells: int
    cell_size: float
    cells: np.ndarray
    start: Pose2D
    reference_path: tuple[tuple[float, float], ...]
    _path_s: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        pts = np.asarray(self.reference_path, dtype=float)
        seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
        self._path_s = np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def path_length(self) -> float:
        return float(self._path_s[-1])

    def in_bounds(self, x: float, y: float) -> bool:
        return (
            0.0 <= x < self.width_cells * self.cell_size
            and 0.0 <= y < self.height_cells * self.cell_size
        )

    def occupied_at(self, x: float, y: float) -> bool:
        """Occupancy at a world point; anything out of bounds is occupied."""
        if not self.in_bounds(x, y):
            return True
        i = int(x / self.cell_size)
        j = int(y / self.cell_size)
        return bool(self.cells[j, i])

    def nearest_path_point(self, x: float, y: float) -> tuple[int, float]:
        """Index of the closest reference-path vertex and its arc length."""
        pts = np.asarray(self.reference_path)
        d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
        k = int(np.argmin(d2))
        return k, float(self._path_s[k])

    def path_point_at(self, s: float) -> tuple[int, float]:
        """Index of the first path vertex at arc length >= s (clamped)."""
        k = int(np.searchsorted(self._path_s, s))
        k = min(k, len(self.reference_path) - 1)
        return k, float(self._path_s[k])

    def path_tangent(self, k: int) -> float:
        """Heading of the reference path at vertex k."""
        pts = self.reference_path
        a = pts[max(k - 1, 0)]
        b = pts[min(k + 1, len(pts) - 1)]
        return math.atan2(b[1] - a[1], b[0] - a[0])


def load_world(text: str) -> WorldMap:
    """Parse UDLW v1 text into a validated WorldMap."""
    lines = text.split("\n")

    def need(idx: int) -> str:
        if idx >= len(lines):
            raise WorldParseError(idx + 1, "unexpected end of file")
        return lines[idx]

    if need(0).strip() != "UDLW v1":
        raise WorldParseError(1, f"bad magic {lines[0]!r}, expected 'UDLW v1'")

    head = need(1).strip()
    if not head.startswith("cells:"):
        raise WorldParseError(2, "expected 'cells: <W> <H>'")
    try:
        w, h = (int(tok) for tok in head[len("cells:"):].split())
    except ValueError as exc:
        raise WorldParseError(2, f"bad cell counts: {exc}") from None
    if w <= 0 or h <= 0:
        raise WorldParseError(2, "cell counts must be positive")

    size_line = need(2).strip()
    if not size_line.startswith("cell_size:"):
        raise WorldParseError(3, "expected 'cell_size: <meters>'")
    try:
        cell_size = float(size_line[len("cell_size:"):])
    except ValueError:
        raise WorldParseError(3, "bad cell_size") from None
    if not (cell_size > 0):
        raise WorldParseError(3, "cell_size must be > 0")

    cells = np.zeros((h, w), dtype=np.uint8)
    for k in range(h):
        row = need(3 + k)
        if len(row) != w:
            raise WorldParseError(4 + k, f"row has {len(row)} chars, expected {w}")
        for i, ch in enumerate(row):
            if ch == "#":
                cells[h - 1 - k, i] = 1
            elif ch != ".":
                raise WorldParseError(4 + k, f"invalid symbol {ch!r} at column {i + 1}")

    start_idx = 3 + h
    start_line = need(start_idx).strip()
    if not start_line.startswith("start:"):
        raise WorldParseError(start_idx + 1, "expected 'start: <x> <y> <theta_rad>'")
    try:
        sx, sy, sth = (float(tok) for tok in start_line[len("start:"):].split())
    except ValueError:
        raise WorldParseError(start_idx + 1, "bad start pose") from None

    ref_idx = start_idx + 1
    ref_line = need(ref_idx).strip()
    if not ref_line.startswith("ref:"):
        raise WorldParseError(ref_idx + 1, "expected 'ref: <N>'")
    try:
        n_ref = int(ref_line[len("ref:"):])
    except ValueError:
        raise WorldParseError(ref_idx + 1, "bad reference point count") from None
    if n_ref < 2:
        raise WorldParseError(ref_idx + 1, "reference path needs >= 2 points")

    ref: list[tuple[float, float]] = []
    for k in range(n_ref):
        pt_line = need(ref_idx + 1 + k).strip()
        try:
            px, py = (float(tok) for tok in pt_line.split())
        except ValueError:
            raise WorldParseError(ref_idx + 2 + k, "bad reference point") from None
        ref.append((px, py))

    world = WorldMap(w, h, cell_size, cells, Pose2D(sx, sy, sth), tuple(ref))
    if world.occupied_at(sx, sy):
        raise WorldParseError(start_idx + 1, "start pose is not on drivable space")
    for k, (px, py) in enumerate(ref):
        if world.occupied_at(px, py):
            raise WorldParseError(
                ref_idx + 2 + k, f"reference point {k} is not on drivable space"
            )
    return world


def dump_world(world: WorldMap) -> str:
    """Render a WorldMap back to UDLW v1 text (LF endings, bit-exact floats)."""
    out = ["UDLW v1", f"cells: {world.width_cells} {world.height_cells}",
           f"cell_size: {world.cell_size!r}"]
    for k in range(world.height_cells):
        row = world.cells[world.height_cells - 1 - k]
        out.append("".join("#" if c else "." for c in row))
    s = world.start
    out.append(f"start: {s.x!r} {s.y!r} {s.theta!r}")
    out.append(f"ref: {len(world.reference_path)}")
    for px, py in world.reference_path:
        out.append(f"{px!r} {py!r}")
    return "\n".join(out) + "\n"
