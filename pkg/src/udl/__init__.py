"""Desk-scale 2D driving laboratory.

A deterministic grid-world testbed for look-ahead-point driving policies:
occupancy-grid sensing with injected noise, pure-pursuit vehicle control,
tentacle and vector-field reactive baselines, a scripted look-ahead expert,
a small convolutional policy with a Gaussian head, and a gated dataset
aggregation training loop, plus the experiment harness and the labeling
session service used by the browser labeler.
"""

from udl.dagger import DaggerConfig, EpisodeSpec, dagger_loop, data_sampling_run, gate
from udl.data import Dataset, Sample, load_dataset, save_dataset
from udl.experiment import ExperimentConfig, run_experiment
from udl.expert import ExpertConfig, NoActionError, select_expert_action
from udl.geometry import Pose2D, normalize_angle
from udl.grid import (
    DEFAULT_NOISE,
    GridFrame,
    LookAheadAction,
    NoiseSpec,
    OccupancyGrid,
    apply_noise,
    extract_sensor_grid,
    pixel_accuracy,
    reachable_mask,
)
from udl.net import (
    NetOutput,
    NetworkParams,
    TrainConfig,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    train,
)
from udl.sim import EpisodeConfig, run_episode
from udl.tentacle import tentacle_command
from udl.vehicle import VehicleParams, VehicleState, pure_pursuit_steering
from udl.vvf import vvf_command
from udl.world import WorldMap, WorldParseError, dump_world, load_world
from udl.worlds import TEMPLATES, generate_world

__all__ = [
    "DEFAULT_NOISE",
    "DaggerConfig",
    "Dataset",
    "EpisodeConfig",
    "EpisodeSpec",
    "ExperimentConfig",
    "ExpertConfig",
    "GridFrame",
    "LookAheadAction",
    "NetOutput",
    "NetworkParams",
    "NoActionError",
    "NoiseSpec",
    "OccupancyGrid",
    "Pose2D",
    "Sample",
    "TEMPLATES",
    "TrainConfig",
    "VehicleParams",
    "VehicleState",
    "WorldMap",
    "WorldParseError",
    "apply_noise",
    "dagger_loop",
    "data_sampling_run",
    "dump_world",
    "extract_sensor_grid",
    "forward",
    "gate",
    "generate_world",
    "init_params",
    "load_checkpoint",
    "load_dataset",
    "load_world",
    "normalize_angle",
    "pixel_accuracy",
    "pure_pursuit_steering",
    "reachable_mask",
    "run_episode",
    "run_experiment",
    "save_checkpoint",
    "save_dataset",
    "select_expert_action",
    "tentacle_command",
    "train",
    "vvf_command",
]
