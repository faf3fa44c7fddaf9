"""Training samples and the line-delimited dataset format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from udl.grid import GRID_N


@dataclass
class Sample:
    """One (state, expert action, discrepancy) triple.

    ``tau`` is the gate discrepancy recorded at collection time; 0 for
    behavior-cloning samples.
    """

    grid: np.ndarray  # (25, 25) uint8
    ax: float
    ay: float
    tau: float = 0.0
    src: str = "bc"

    def __post_init__(self) -> None:
        self.grid = np.ascontiguousarray(self.grid, dtype=np.uint8).reshape(
            GRID_N, GRID_N
        )
        if not (0.0 <= self.ax <= 1.0 and 0.0 <= self.ay <= 1.0):
            raise ValueError("action components must be in [0, 1]")
        if self.tau < 0.0:
            raise ValueError("tau must be >= 0")


@dataclass
class Dataset:
    """Append-only sample collection aggregated across training rounds."""

    samples: list[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def append(self, sample: Sample) -> None:
        self.samples.append(sample)

    def extend(self, other: "Dataset") -> None:
        self.samples.extend(other.samples)

    def to_arrays(self, dtype=np.float32):
        """(grids (N,1,25,25), actions (N,2), taus (N,)) ready for training."""
        x = np.stack([s.grid for s in self.samples]).astype(dtype)
        x = x[:, None, :, :]
        a = np.array([[s.ax, s.ay] for s in self.samples], dtype=dtype)
        t = np.array([s.tau for s in self.samples], dtype=dtype)
        return x, a, t


def sample_to_json(sample: Sample) -> str:
    return json.dumps(
        {
            "grid": [int(v) for v in sample.grid.ravel()],
            "ax": sample.ax,
            "ay": sample.ay,
            "tau": sample.tau,
            "src": sample.src,
        },
        separators=(",", ":"),
    )


def sample_from_json(line: str) -> Sample:
    obj = json.loads(line)
    grid = np.array(obj["grid"], dtype=np.uint8).reshape(GRID_N, GRID_N)
    return Sample(grid, obj["ax"], obj["ay"], obj["tau"], obj["src"])


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sample in dataset.samples:
            fh.write(sample_to_json(sample) + "\n")


def load_dataset(path) -> Dataset:
    ds = Dataset()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                ds.append(sample_from_json(line))
    return ds
