"""Kinematic bicycle model, pure-pursuit steering, and velocity laws.

The vehicle reference point is the rear axle; the sensor grid is anchored
at the front-bumper center, ``wheelbase + front_overhang`` ahead of it.
Positive steering turns the vehicle to the right (see udl.geometry).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from udl.geometry import Pose2D, normalize_angle
from udl.grid import ANCHOR_COL, ANCHOR_ROW, GRID_N, GridFrame, LookAheadAction

VELOCITY_DISTANCE_GAIN = 2.24  # v = a_y / 2.24, longitudinal distance in meters
SUBSTEP = 0.01  # integrator sub-step, seconds
PASS_DISTANCE = 0.2  # rollout stops once the target is this close, meters


class DegenerateTargetError(ValueError):
    """Pure-pursuit target coincides with the rear axle."""


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.8
    front_overhang: float = 1.0
    body_length: float = 4.9
    body_width: float = 1.9
    max_wheel_angle: float = math.radians(35.0)
    v_min: float = 0.5
    v_max: float = 2.2
    control_period: float = 0.05

    def __post_init__(self) -> None:
        if min(self.wheelbase, self.front_overhang, self.body_length,
               self.body_width, self.control_period) <= 0:
            raise ValueError("all lengths and periods must be > 0")
        if not (0 < self.max_wheel_angle < math.pi / 2):
            raise ValueError("max_wheel_angle must be in (0, pi/2)")
        if not (self.v_min < self.v_max):
            raise ValueError("v_min must be < v_max")

    @property
    def anchor_offset(self) -> float:
        """Rear axle to front-bumper distance."""
        return self.wheelbase + self.front_overhang


@dataclass
class VehicleState:
    pose: Pose2D
    v: float = 0.0
    delta: float = 0.0

    def anchor(self, params: VehicleParams) -> Pose2D:
        return self.pose.advanced(params.anchor_offset)


@dataclass
class Rollout:
    poses: list[Pose2D]
    horizon: float


def pure_pursuit_steering(
    state: VehicleState | None, target: tuple[float, float], params: VehicleParams
) -> float:
    """Steering angle toward a (forward, right) target about the rear axle.

    delta = atan(2 L sin(theta_l) / L_f), clamped to the wheel-angle limit.
    The target is already expressed relative to the rear axle, so ``state``
    is accepted only for call-site symmetry and may be None.
    """
    f, r = target
    lf = math.hypot(f, r)
    if lf < 1e-6:
        raise DegenerateTargetError("look-ahead target coincides with the rear axle")
    theta_l = math.atan2(r, f)
    delta = math.atan(2.0 * params.wheelbase * math.sin(theta_l) / lf)
    return min(max(delta, -params.max_wheel_angle), params.max_wheel_angle)


def velocity_from_longitudinal(a_y_m: float, params: VehicleParams) -> float:
    """Speed proportional to the longitudinal look-ahead distance, clamped."""
    if a_y_m < 0:
        raise ValueError("longitudinal distance must be >= 0")
    return min(max(a_y_m / VELOCITY_DISTANCE_GAIN, params.v_min), params.v_max)


def velocity_from_steering(delta: float, params: VehicleParams) -> float:
    """Speed inversely proportional to |steering|: v_max at 0, v_min at the limit."""
    frac = min(abs(delta) / params.max_wheel_angle, 1.0)
    return params.v_max - (params.v_max - params.v_min) * frac


def step_kinematics(
    state: VehicleState, delta_cmd: float, v_cmd: float, dt: float,
    params: VehicleParams,
) -> VehicleState:
    """Advance the bicycle model by dt with semi-implicit Euler sub-steps."""
    if not (dt > 0):
        raise ValueError("dt must be > 0")
    delta = min(max(delta_cmd, -params.max_wheel_angle), params.max_wheel_angle)
    if v_cmd <= 0.0:
        v = 0.0
    else:
        v = min(max(v_cmd, params.v_min), params.v_max)
    if v == 0.0:
        return VehicleState(state.pose, 0.0, delta)

    n = max(1, int(round(dt / SUBSTEP)))
    h = dt / n
    x, y, th = state.pose.x, state.pose.y, state.pose.theta
    yaw_rate = -v * math.tan(delta) / params.wheelbase
    for _ in range(n):
        th = th + yaw_rate * h
        x += v * math.cos(th) * h
        y += v * math.sin(th) * h
    return VehicleState(Pose2D(x, y, normalize_angle(th)), v, delta)


def rollout_to_point(
    state: VehicleState,
    action: LookAheadAction,
    horizon: float,
    params: VehicleParams,
    frame: GridFrame,
) -> Rollout:
    """Drive toward a fixed look-ahead point with pure pursuit.

    The action is interpreted in the grid frame of the *initial* state's
    anchor; the target point stays fixed in the world while the vehicle
    moves.  Stops early once the rear axle passes within PASS_DISTANCE.
    """
    if not (horizon > 0):
        raise ValueError("horizon must be > 0")
    f_a, r_a = frame.normalized_to_meters(action.ax, action.ay)
    anchor = state.anchor(params)
    tx, ty = anchor.to_world(f_a, r_a)

    poses = [state.pose]
    cur = state
    ticks = int(round(horizon / params.control_period))
    for _ in range(ticks):
        f_rel, r_rel = cur.pose.to_local(tx, ty)
        if math.hypot(f_rel, r_rel) < PASS_DISTANCE:
            break
        delta = pure_pursuit_steering(cur, (f_rel, r_rel), params)
        v = velocity_from_longitudinal(
            max(f_rel - params.anchor_offset, 0.0), params
        )
        cur = step_kinematics(cur, delta, v, params.control_period, params)
        poses.append(cur.pose)
    return Rollout(poses, horizon)


def batch_rollout(
    targets_fr: np.ndarray,
    horizon: float,
    params: VehicleParams,
    start_forward: float = 0.0,
) -> np.ndarray:
    """Vectorized rollouts toward N fixed (forward, right) targets.

    Targets are given in the frame of the start anchor; the rear axle starts
    ``anchor_offset`` behind it (shifted by ``start_forward``).  Returns
    rear-axle states (x, y, heading), shape (ticks + 1, N, 3), in the same
    frame.  The math mirrors rollout_to_point tick for tick.
    """
    n = len(targets_fr)
    tx = np.asarray(targets_fr, dtype=float)[:, 0]
    ty = np.asarray(targets_fr, dtype=float)[:, 1]
    x = np.full(n, start_forward - params.anchor_offset)
    y = np.zeros(n)
    th = np.zeros(n)
    done = np.zeros(n, dtype=bool)

    ticks = int(round(horizon / params.control_period))
    out = np.empty((ticks + 1, n, 3))
    out[0, :, 0], out[0, :, 1], out[0, :, 2] = x, y, th
    substeps = max(1, int(round(params.control_period / SUBSTEP)))
    h = params.control_period / substeps

    for t in range(ticks):
        dx, dy = tx - x, ty - y
        c, s = np.cos(th), np.sin(th)
        # grid frame: +x forward at heading 0, +y right; heading positive = right
        f_rel = dx * c + dy * s
        r_rel = -dx * s + dy * c
        lf = np.hypot(f_rel, r_rel)
        done |= lf < PASS_DISTANCE

        theta_l = np.arctan2(r_rel, f_rel)
        delta = np.arctan(2.0 * params.wheelbase * np.sin(theta_l) / np.maximum(lf, 1e-9))
        delta = np.clip(delta, -params.max_wheel_angle, params.max_wheel_angle)
        v = np.clip(
            np.maximum(f_rel - params.anchor_offset, 0.0) / VELOCITY_DISTANCE_GAIN,
            params.v_min, params.v_max,
        )
        v = np.where(done, 0.0, v)

        yaw_rate = v * np.tan(delta) / params.wheelbase
        for _ in range(substeps):
            th = th + yaw_rate * h
            x += v * np.cos(th) * h
            y += v * np.sin(th) * h
        out[t + 1, :, 0], out[t + 1, :, 1], out[t + 1, :, 2] = x, y, th
    return out


def footprint_cells(
    pose: Pose2D, params: VehicleParams, frame: GridFrame
) -> set[tuple[int, int]]:
    """Grid cells touched by the body rectangle for a grid-frame rear-axle pose.

    ``pose`` lives in grid-frame meters: x forward from the anchor, y right,
    theta positive turning right.  A cell counts as touched when its center
    or any corner falls inside the rectangle.
    """
    cs = frame.cell_size
    half_l = params.body_length / 2.0
    half_w = params.body_width / 2.0
    # body center: bumper is anchor_offset ahead of the rear axle
    center_ahead = params.anchor_offset - half_l

    rows = np.arange(GRID_N)
    cols = np.arange(GRID_N)
    cf = (ANCHOR_ROW - rows)[:, None] * cs + np.zeros((1, GRID_N))
    cr = np.zeros((GRID_N, 1)) + (cols - ANCHOR_COL)[None, :] * cs
    offsets = np.array(
        [[0.0, 0.0], [-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]]
    ) * cs
    pts_f = cf[:, :, None] + offsets[None, None, :, 0]
    pts_r = cr[:, :, None] + offsets[None, None, :, 1]

    # into the body frame (u along the body axis, w across)
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    dxf = pts_f - pose.x
    dxr = pts_r - pose.y
    u = dxf * c + dxr * s - center_ahead
    w = -dxf * s + dxr * c
    inside = (np.abs(u) <= half_l + 1e-9) & (np.abs(w) <= half_w + 1e-9)
    hit = inside.any(axis=2)
    return {(int(r), int(c2)) for r, c2 in np.argwhere(hit)}
