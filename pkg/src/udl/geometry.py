"""World- and vehicle-frame geometry.

Conventions used throughout the package:

* World frame: x to the right, y up, heading ``theta`` counter-clockwise
  from +x and normalized to (-pi, pi].
* Vehicle frame: first axis forward, second axis to the vehicle's RIGHT.
  A positive steering angle turns the vehicle to the right, so the heading
  integrates as ``theta_dot = -v * tan(delta) / L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose2D:
    """A world-frame pose; heading is normalized on construction."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def to_world(self, forward: float, right: float) -> tuple[float, float]:
        """Map (forward, right) offsets in this pose's frame to world xy."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.x + forward * c + right * s, self.y + forward * s - right * c

    def to_local(self, wx: float, wy: float) -> tuple[float, float]:
        """Map a world point to (forward, right) offsets in this frame."""
        dx, dy = wx - self.x, wy - self.y
        c, s = math.cos(self.theta), math.sin(self.theta)
        return dx * c + dy * s, dx * s - dy * c

    def advanced(self, dist: float) -> "Pose2D":
        """The pose shifted ``dist`` meters along its heading."""
        wx, wy = self.to_world(dist, 0.0)
        return Pose2D(wx, wy, self.theta)
