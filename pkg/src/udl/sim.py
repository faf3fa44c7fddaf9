"""Closed-loop episode execution, near-collision bookkeeping, and metrics."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from udl.geometry import Pose2D
from udl.grid import (
    GridFrame,
    LookAheadAction,
    NoiseSpec,
    OccupancyGrid,
    apply_noise,
    extract_sensor_grid,
)
from udl.vehicle import (
    VehicleParams,
    VehicleState,
    pure_pursuit_steering,
    step_kinematics,
    velocity_from_longitudinal,
)
from udl.world import WorldMap

SENSOR_EXTENT = 20.0  # policy-facing grid window, meters
PHYSICS_EXTENT = 5.0  # fine ground-truth grid for collision/safety checks
NEAR_COLLISION_DISTANCE = 0.5  # meters
HEADING_CONE_HALF_ANGLE = math.radians(30.0)
SAFE_BAND_RANGE = 1.0  # meters ahead of the bumper segment
FINISH_DISTANCE = 2.0  # arc-length margin from the reference-path end
FINISH_LATERAL = 4.0  # max offset from the path when crossing the finish
OSCILLATION_DEADBAND = math.radians(1.0)
RESUME_MIN_ADVANCE = 2.0  # meters pushed forward when a resume point repeats
STOP_DWELL_TICKS = 20  # one second spent stationary after each stop event


@dataclass
class CollisionEvent:
    tick: int
    pose: Pose2D
    obstacle_distance: float

    def __post_init__(self) -> None:
        if self.obstacle_distance > NEAR_COLLISION_DISTANCE:
            raise ValueError("collision events require distance <= 0.5 m")


@dataclass
class EpisodeConfig:
    world: WorldMap
    noise: NoiseSpec
    policy: str  # tentacle | vvf | network | oracle
    max_ticks: int = 2000
    rng_seed: int = 0
    extent: float = SENSOR_EXTENT

    def __post_init__(self) -> None:
        if self.max_ticks <= 0:
            raise ValueError("max_ticks must be > 0")


@dataclass
class TickRecord:
    tick: int
    pose: Pose2D
    v: float
    delta: float
    action: Optional[LookAheadAction]
    gate: Optional[dict]
    collision: bool


@dataclass
class EpisodeTrace:
    records: list[TickRecord] = field(default_factory=list)
    collisions: list[CollisionEvent] = field(default_factory=list)
    finished: bool = False
    distance_driven: float = 0.0
    safe_ratios: list[float] = field(default_factory=list)


@dataclass
class Metrics:
    collision_rate: float
    safe_ratio: float
    mean_speed: float
    steering_sign_changes_per_meter: float


def near_collision_check(
    state: VehicleState, grid: OccupancyGrid, params: VehicleParams
) -> Optional[float]:
    """Distance to the nearest occupied cell ahead, if within 0.5 m.

    Only cells inside a +/-30 degree cone about the heading count; the grid
    is the clean (ground-truth) one and is anchored at the front bumper.
    """
    if state.v <= 0.0:
        return None
    fwd, rgt = grid.frame.cell_centers_meters()
    occ = grid.cells == 1
    if not occ.any():
        return None
    f = fwd[occ]
    r = rgt[occ]
    dist = np.hypot(f, r)
    in_cone = (f > 0) & (np.abs(np.arctan2(r, f)) <= HEADING_CONE_HALF_ANGLE)
    hits = dist[in_cone & (dist <= NEAR_COLLISION_DISTANCE)]
    if hits.size == 0:
        return None
    return float(hits.min())


def collision_rate(cnt_col: int, len_path: float) -> float:
    """Near-collision stops per 100 m of reference path."""
    if not (len_path > 0):
        raise ValueError("len_path must be > 0")
    return 100.0 * cnt_col / len_path


def safe_ratio(
    state: VehicleState, grid: OccupancyGrid, params: VehicleParams
) -> Optional[float]:
    """Fraction of drivable cells in the 1 m band ahead of the bumper segment.

    None when the band contains no cell centers (absent sample).
    """
    fwd, rgt = grid.frame.cell_centers_meters()
    half_w = params.body_width / 2.0
    lateral_excess = np.maximum(np.abs(rgt) - half_w, 0.0)
    d = np.hypot(fwd, lateral_excess)
    band = (fwd > 0) & (d <= SAFE_BAND_RANGE)
    n_ran = int(band.sum())
    if n_ran == 0:
        return None
    n_dri = int((band & (grid.cells == 0)).sum())
    return n_dri / n_ran


def oscillation_index(trace: EpisodeTrace) -> float:
    """Steering sign changes (1 degree dead-band) per meter driven."""
    if not (trace.distance_driven > 0):
        raise ValueError("trace has no distance driven")
    changes = 0
    last_sign = 0
    for rec in trace.records:
        if abs(rec.delta) < OSCILLATION_DEADBAND:
            continue
        sign = 1 if rec.delta > 0 else -1
        if last_sign != 0 and sign != last_sign:
            changes += 1
        last_sign = sign
    return changes / trace.distance_driven


def _tick_noise(noise: NoiseSpec, episode_seed: int, tick: int) -> NoiseSpec:
    """Per-tick reseeding so noise varies over time but replays exactly."""
    seed = int(
        np.random.SeedSequence(
            entropy=(episode_seed & 0xFFFFFFFF, noise.rng_seed & 0xFFFFFFFF, tick)
        ).generate_state(1)[0]
    )
    return dataclasses.replace(noise, rng_seed=seed)


class EpisodeEngine:
    """Steps one episode tick at a time.

    Shared by the batch runner, the training sampler, and the labeling
    service.  Callers obtain the tick's sensor view, decide on an action or
    a raw command, and hand it back via one of the apply_* methods.
    """

    def __init__(
        self,
        world: WorldMap,
        noise: NoiseSpec,
        rng_seed: int,
        params: VehicleParams = VehicleParams(),
        max_ticks: int = 2000,
        extent: float = SENSOR_EXTENT,
    ) -> None:
        self.world = world
        self.noise = noise
        self.rng_seed = rng_seed
        self.params = params
        self.max_ticks = max_ticks
        self.extent = extent
        self.frame = GridFrame(extent)
        self.state = VehicleState(world.start, 0.0, 0.0)
        self.tick = 0
        self.trace = EpisodeTrace()
        self._last_resume_s: Optional[float] = None
        self._sensed_tick = -1
        self._sensed: tuple[OccupancyGrid, OccupancyGrid, OccupancyGrid] | None = None

    @property
    def done(self) -> bool:
        return self.trace.finished or self.tick >= self.max_ticks

    def anchor(self) -> Pose2D:
        return self.state.anchor(self.params)

    def sense(self) -> tuple[OccupancyGrid, OccupancyGrid, OccupancyGrid]:
        """(clean, noisy, fine-physics) grids for the current tick, cached."""
        if self._sensed_tick != self.tick:
            anchor = self.anchor()
            clean = extract_sensor_grid(self.world, anchor, self.extent)
            noisy = apply_noise(clean, _tick_noise(self.noise, self.rng_seed, self.tick))
            fine = extract_sensor_grid(self.world, anchor, PHYSICS_EXTENT)
            self._sensed = (clean, noisy, fine)
            self._sensed_tick = self.tick
        return self._sensed

    def action_to_command(self, action: LookAheadAction) -> tuple[float, float]:
        """Pure pursuit plus the longitudinal velocity law for a waypoint."""
        f_a, r_a = self.frame.normalized_to_meters(action.ax, action.ay)
        delta = pure_pursuit_steering(
            self.state, (f_a + self.params.anchor_offset, r_a), self.params
        )
        v = velocity_from_longitudinal(max(f_a, 0.0), self.params)
        return delta, v

    def apply_action(self, action: LookAheadAction, gate: Optional[dict] = None) -> None:
        delta, v = self.action_to_command(action)
        self._advance(delta, v, action, gate)

    def apply_command(self, delta: float, v: float) -> None:
        self._advance(delta, v, None, None)

    def record_stop_event(self) -> None:
        """A policy failure: counted like a near-collision stop, then resume."""
        event = CollisionEvent(self.tick, self.state.pose, 0.0)
        self.trace.collisions.append(event)
        self.trace.records.append(
            TickRecord(self.tick, self.state.pose, 0.0, self.state.delta, None, None, True)
        )
        self.tick += 1
        self._dwell_stopped()
        self._resume()

    def _advance(
        self, delta: float, v: float,
        action: Optional[LookAheadAction], gate: Optional[dict],
    ) -> None:
        _, _, fine = self.sense()
        ratio = safe_ratio(self.state, fine, self.params)
        if ratio is not None:
            self.trace.safe_ratios.append(ratio)

        new_state = step_kinematics(self.state, delta, v, self.params.control_period, self.params)
        self.trace.distance_driven += new_state.v * self.params.control_period
        self.state = new_state

        anchor = self.anchor()
        fine_after = extract_sensor_grid(self.world, anchor, PHYSICS_EXTENT)
        hit = near_collision_check(self.state, fine_after, self.params)
        collided = hit is not None
        if collided:
            self.trace.collisions.append(CollisionEvent(self.tick, self.state.pose, hit))
            self.state = VehicleState(self.state.pose, 0.0, self.state.delta)

        self.trace.records.append(
            TickRecord(self.tick, self.state.pose, self.state.v, self.state.delta,
                       action, gate, collided)
        )
        self.tick += 1
        if collided:
            self._dwell_stopped()
            self._resume()

        # Finished once the projection onto the reference path reaches its
        # final stretch. A plain endpoint disc would let a vehicle tracking
        # the corridor off-center drive straight past the finish.
        px, py = self.state.pose.x, self.state.pose.y
        k, s = self.world.nearest_path_point(px, py)
        qx, qy = self.world.reference_path[k]
        if (s >= self.world.path_length - FINISH_DISTANCE
                and math.hypot(px - qx, py - qy) <= FINISH_LATERAL):
            self.trace.finished = True

    def _dwell_stopped(self) -> None:
        """Hold the vehicle at the stop pose for a fixed emergency-stop time.

        Without this a stop event would teleport straight past the hazard,
        and a crash-prone policy would score better safe ratios and speeds
        than one that negotiates the same spot cleanly.  Dwell ticks are
        sampled as safe ratio 0: the stop happened because driving was
        unsafe or impossible there, and the band count at the stop pose
        (often fully drivable when a planner deadlocks in open space)
        would misreport the event as safe.
        """
        self.state = VehicleState(self.state.pose, 0.0, self.state.delta)
        for _ in range(STOP_DWELL_TICKS):
            if self.tick >= self.max_ticks:
                break
            self.trace.safe_ratios.append(0.0)
            self.trace.records.append(
                TickRecord(self.tick, self.state.pose, 0.0, self.state.delta,
                           None, None, False)
            )
            self.tick += 1

    def _resume(self) -> None:
        """Teleport to the closest reference-path point, tangent heading.

        If the closest point is where the vehicle already resumed, push
        forward along the path so a deadlocked policy cannot pin the
        episode to one spot; the dwell has already charged the stop to the
        episode's safety metrics.
        """
        k, s = self.world.nearest_path_point(self.state.pose.x, self.state.pose.y)
        if self._last_resume_s is not None and s <= self._last_resume_s + 0.5:
            k, s = self.world.path_point_at(self._last_resume_s + RESUME_MIN_ADVANCE)
        self._last_resume_s = s
        px, py = self.world.reference_path[k]
        heading = self.world.path_tangent(k)
        self.state = VehicleState(Pose2D(px, py, heading), 0.0, 0.0)
        self._sensed_tick = -1


PolicyFn = Callable[[EpisodeEngine], None]


def run_episode(
    config: EpisodeConfig,
    policy_fn: Optional[PolicyFn] = None,
    params: VehicleParams = VehicleParams(),
    network_params=None,
) -> EpisodeTrace:
    """Run one closed-loop episode; fully deterministic under the seed.

    Built-in policies: tentacle, vvf, network (requires ``network_params``),
    and oracle.  A custom ``policy_fn`` overrides the identifier.
    """
    from udl import expert as expert_mod
    from udl import net as net_mod
    from udl import tentacle as tentacle_mod
    from udl import vvf as vvf_mod

    engine = EpisodeEngine(
        config.world, config.noise, config.rng_seed, params,
        config.max_ticks, config.extent,
    )

    def step_tentacle(eng: EpisodeEngine) -> None:
        _, noisy, _ = eng.sense()
        try:
            delta, v = tentacle_mod.tentacle_command(noisy, params=params)
        except tentacle_mod.NoPathError:
            eng.record_stop_event()
            return
        eng.apply_command(delta, v)

    def step_vvf(eng: EpisodeEngine) -> None:
        _, noisy, _ = eng.sense()
        try:
            delta, v = vvf_mod.vvf_command(noisy, params=params)
        except vvf_mod.NoMotionError:
            eng.record_stop_event()
            return
        eng.apply_command(delta, v)

    def step_network(eng: EpisodeEngine) -> None:
        _, noisy, _ = eng.sense()
        out = net_mod.forward(network_params, noisy)
        eng.apply_action(LookAheadAction(out.mean[0], out.mean[1]))

    def step_oracle(eng: EpisodeEngine) -> None:
        clean, _, _ = eng.sense()
        try:
            action = expert_mod.select_expert_action(clean, eng.state, params=params)
        except expert_mod.NoActionError:
            eng.record_stop_event()
            return
        eng.apply_action(action)

    steppers = {
        "tentacle": step_tentacle,
        "vvf": step_vvf,
        "network": step_network,
        "oracle": step_oracle,
    }
    if policy_fn is None:
        if config.policy not in steppers:
            raise ValueError(f"unknown policy {config.policy!r}")
        if config.policy == "network" and network_params is None:
            raise ValueError("network policy requires network_params")
        policy_fn = steppers[config.policy]

    while not engine.done:
        policy_fn(engine)
    return engine.trace


def metrics_from_trace(trace: EpisodeTrace, len_path: float) -> Metrics:
    speeds = [r.v for r in trace.records] or [0.0]
    osc = oscillation_index(trace) if trace.distance_driven > 0 else 0.0
    ratios = [r for r in trace.safe_ratios]
    return Metrics(
        collision_rate=collision_rate(len(trace.collisions), len_path),
        safe_ratio=float(np.mean(ratios)) if ratios else 1.0,
        mean_speed=float(np.mean(speeds)),
        steering_sign_changes_per_meter=osc,
    )


def trace_to_jsonl(trace: EpisodeTrace) -> str:
    """One JSON document per tick: {tick, pose, v, delta, action, gate, collision}."""
    lines = []
    for rec in trace.records:
        obj = {
            "tick": rec.tick,
            "pose": [rec.pose.x, rec.pose.y, rec.pose.theta],
            "v": rec.v,
            "delta": rec.delta,
            "action": [rec.action.ax, rec.action.ay] if rec.action else None,
            "gate": rec.gate,
            "collision": rec.collision,
        }
        lines.append(json.dumps(obj, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")
