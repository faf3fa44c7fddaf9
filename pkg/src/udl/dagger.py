"""Gated dataset aggregation: the training loop and its per-tick gate.

Each sampling tick queries the network and the expert at once.  The gate
hands control to the expert when the network disagrees with it or is unsure
of itself, and every expert-driven tick is appended to the dataset together
with the discrepancy measured at that moment.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from udl.data import Dataset, Sample
from udl.expert import ExpertConfig, NoActionError, select_expert_action
from udl.grid import LookAheadAction, NoiseSpec, OccupancyGrid
from udl.net import NetOutput, NetworkParams, TrainConfig, forward, train
from udl.sim import EpisodeEngine
from udl.vehicle import VehicleParams
from udl.world import WorldMap


@dataclass(frozen=True)
class EpisodeSpec:
    """One sampling episode: a world, its sensor noise, and the run seed."""

    world: WorldMap
    noise: NoiseSpec
    rng_seed: int = 0
    max_ticks: int = 2000


@dataclass(frozen=True)
class DaggerConfig:
    tau: float = 0.07
    chi: float = 0.1
    eta: float = 0.9
    max_iterations: int = 8
    gate_semantics: str = "prose"  # or "literal-pseudocode"
    warm_start: bool = True

    def __post_init__(self) -> None:
        if self.tau <= 0 or self.chi <= 0:
            raise ValueError("tau and chi must be > 0")
        if not (0.0 < self.eta <= 1.0):
            raise ValueError("eta must be in (0, 1]")
        if self.gate_semantics not in ("prose", "literal-pseudocode"):
            raise ValueError(f"unknown gate semantics {self.gate_semantics!r}")


@dataclass
class GateDecision:
    net_action: NetOutput
    expert_action: LookAheadAction
    tau_hat: float
    chi_hat: tuple[float, float]
    executed: str  # network | expert
    appended: bool

    def __post_init__(self) -> None:
        if self.appended != (self.executed == "expert"):
            raise ValueError("appended must track expert execution exactly")


@dataclass
class IterationStats:
    iteration: int
    n_net: int
    n_tot: int
    new_samples: int

    @property
    def eta_hat(self) -> float:
        return self.n_net / self.n_tot if self.n_tot else 0.0


def gate(
    net: NetOutput, expert_action: LookAheadAction, config: DaggerConfig
) -> GateDecision:
    """Decide who drives this tick.

    Prose semantics (default): the expert takes over when the discrepancy
    or either predicted variance reaches its threshold.  The literal
    variant keeps the network in control when ANY of the three quantities
    is under threshold.
    """
    tau_hat = float(
        np.hypot(net.mean[0] - expert_action.ax, net.mean[1] - expert_action.ay)
    )
    chi_x, chi_y = net.variance
    if config.gate_semantics == "prose":
        use_expert = tau_hat >= config.tau or max(chi_x, chi_y) >= config.chi
    else:
        use_expert = not (
            tau_hat < config.tau or chi_x < config.chi or chi_y < config.chi
        )
    executed = "expert" if use_expert else "network"
    return GateDecision(net, expert_action, tau_hat, (chi_x, chi_y), executed, use_expert)


# a stand-in policy for tests: anything mapping a noisy grid to a NetOutput
PolicyLike = Callable[[OccupancyGrid], NetOutput]


def _as_policy(policy) -> PolicyLike:
    if isinstance(policy, NetworkParams):
        return lambda grid: forward(policy, grid)
    if callable(policy):
        return policy
    raise TypeError("policy must be NetworkParams or a callable")


def data_sampling_run(
    policy,
    episodes: Sequence[EpisodeSpec],
    config: DaggerConfig = DaggerConfig(),
    params: VehicleParams = VehicleParams(),
    expert_config: ExpertConfig = ExpertConfig(),
    src: str = "dagger",
    on_tick: Optional[Callable[[EpisodeEngine, GateDecision], None]] = None,
) -> tuple[Dataset, float, IterationStats]:
    """Run the configured episodes under the gate; collect expert labels.

    The expert sees the clean grid, the network the noisy one, mirroring
    deployment.  Episodes where the expert has no admissible action end
    early with a recorded stop event.  Fully deterministic.
    """
    policy_fn = _as_policy(policy)
    d_i = Dataset()
    n_net = 0
    n_tot = 0

    for spec in episodes:
        engine = EpisodeEngine(
            spec.world, spec.noise, spec.rng_seed, params, spec.max_ticks
        )
        while not engine.done:
            clean, noisy, _ = engine.sense()
            try:
                expert_action = select_expert_action(
                    clean, engine.state, expert_config, params
                )
            except NoActionError:
                engine.record_stop_event()
                continue
            net_out = policy_fn(noisy)
            decision = gate(net_out, expert_action, config)
            n_tot += 1
            if decision.executed == "network":
                n_net += 1
                applied = LookAheadAction(net_out.mean[0], net_out.mean[1])
            else:
                applied = expert_action
                d_i.append(
                    Sample(
                        noisy.cells,
                        expert_action.ax,
                        expert_action.ay,
                        decision.tau_hat,
                        src,
                    )
                )
            if on_tick is not None:
                on_tick(engine, decision)
            engine.apply_action(
                applied,
                gate={
                    "tau_hat": decision.tau_hat,
                    "chi_hat": list(decision.chi_hat),
                    "executed": decision.executed,
                },
            )

    eta_hat = n_net / n_tot if n_tot else 0.0
    stats = IterationStats(0, n_net, n_tot, len(d_i))
    return d_i, eta_hat, stats


def dagger_loop(
    bc_policy: NetworkParams,
    bc_dataset: Dataset,
    episodes: Sequence[EpisodeSpec],
    config: DaggerConfig = DaggerConfig(),
    train_config: TrainConfig = TrainConfig(),
    params: VehicleParams = VehicleParams(),
    expert_config: ExpertConfig = ExpertConfig(),
) -> tuple[NetworkParams, list[IterationStats], Dataset]:
    """Iterate sampling and retraining until the network mostly drives.

    The dataset only ever grows; each iteration retrains on the full
    aggregate (warm-started from the current weights by default) and the
    loop exits once eta_hat exceeds ``config.eta`` or the iteration budget
    runs out.
    """
    policy = bc_policy
    dataset = Dataset(list(bc_dataset.samples))
    stats_log: list[IterationStats] = []

    for i in range(1, config.max_iterations + 1):
        iter_episodes = [
            replace(spec, rng_seed=spec.rng_seed + 10_000 * i) for spec in episodes
        ]
        d_i, eta_hat, stats = data_sampling_run(
            policy, iter_episodes, config, params, expert_config, src=f"dagger-{i}"
        )
        stats = IterationStats(i, stats.n_net, stats.n_tot, stats.new_samples)
        stats_log.append(stats)
        dataset.extend(d_i)
        try:
            policy, _ = train(
                dataset,
                train_config,
                init=policy if config.warm_start else None,
            )
        except Exception as exc:
            raise RuntimeError(f"retraining failed at iteration {i}: {exc}") from exc
        if eta_hat > config.eta:
            break
    return policy, stats_log, dataset


def stats_to_json(stats: Sequence[IterationStats]) -> list[dict]:
    return [
        {
            "iteration": s.iteration,
            "n_net": s.n_net,
            "n_tot": s.n_tot,
            "eta_hat": s.eta_hat,
            "new_samples": s.new_samples,
        }
        for s in stats
    ]
