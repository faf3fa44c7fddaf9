"""Command line entry points for the driving laboratory."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from udl.dagger import DaggerConfig, EpisodeSpec, dagger_loop, stats_to_json
from udl.data import Dataset, Sample, load_dataset, save_dataset
from udl.experiment import ExperimentConfig, run_experiment
from udl.expert import NoActionError, select_expert_action
from udl.grid import DEFAULT_NOISE, NoiseSpec
from udl.net import TrainConfig, load_checkpoint, save_checkpoint, train
from udl.sim import EpisodeConfig, EpisodeEngine, metrics_from_trace, run_episode, trace_to_jsonl
from udl.worlds import TEMPLATES, generate_world
from udl.world import dump_world, load_world


def _noise_from_args(args) -> NoiseSpec:
    if args.no_noise:
        return NoiseSpec()
    return dataclasses.replace(DEFAULT_NOISE, rng_seed=args.seed)


def _load_world_file(path: str):
    return load_world(Path(path).read_text(encoding="utf-8"))


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True, help="RNG seed (required)")


def cmd_gen_world(args) -> int:
    world = generate_world(args.seed, args.template, width=args.width,
                           length=args.length, obstacles=args.obstacles)
    text = dump_world(world)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_run_episode(args) -> int:
    world = _load_world_file(args.world)
    network = None
    if args.policy == "network":
        if not args.checkpoint:
            print("error: network policy requires --checkpoint", file=sys.stderr)
            return 2
        network = load_checkpoint(Path(args.checkpoint).read_bytes())
    trace = run_episode(
        EpisodeConfig(world, _noise_from_args(args), args.policy,
                      max_ticks=args.max_ticks, rng_seed=args.seed),
        network_params=network,
    )
    if args.trace:
        Path(args.trace).write_text(trace_to_jsonl(trace), encoding="utf-8")
    m = metrics_from_trace(trace, world.path_length)
    print(f"finished={trace.finished} collisions={len(trace.collisions)} "
          f"collision_rate={m.collision_rate:.3f} safe_ratio={m.safe_ratio:.3f} "
          f"mean_speed={m.mean_speed:.3f}")
    return 0


def cmd_collect_bc(args) -> int:
    world = _load_world_file(args.world)
    noise = _noise_from_args(args)
    dataset = Dataset()
    engine = EpisodeEngine(world, noise, args.seed, max_ticks=args.max_ticks)
    while not engine.done:
        clean, noisy, _ = engine.sense()
        try:
            action = select_expert_action(clean, engine.state)
        except NoActionError:
            engine.record_stop_event()
            continue
        dataset.append(Sample(noisy.cells, action.ax, action.ay, 0.0, "bc"))
        engine.apply_action(action)
    save_dataset(dataset, args.out)
    print(f"collected {len(dataset)} samples -> {args.out}")
    return 0


def cmd_train(args) -> int:
    dataset = load_dataset(args.dataset)
    config = TrainConfig(learning_rate=args.lr, alpha=args.alpha,
                         batch_size=args.batch_size, epochs=args.epochs,
                         rng_seed=args.seed)
    init = load_checkpoint(Path(args.init).read_bytes()) if args.init else None
    params, losses = train(dataset, config, init=init)
    Path(args.out).write_bytes(save_checkpoint(params, seed=args.seed,
                                               epoch=len(losses)))
    print(f"trained {len(losses)} epochs, final loss {losses[-1]:.5f} -> {args.out}")
    return 0


def cmd_dagger(args) -> int:
    import json

    bc_dataset = load_dataset(args.dataset)
    bc_policy = load_checkpoint(Path(args.init).read_bytes())
    worlds = [_load_world_file(p) for p in args.world]
    noise = _noise_from_args(args)
    episodes = [
        EpisodeSpec(w, noise, rng_seed=args.seed + i, max_ticks=args.max_ticks)
        for i, w in enumerate(worlds)
    ]
    config = DaggerConfig(tau=args.tau, chi=args.chi, eta=args.eta,
                          max_iterations=args.max_iterations,
                          gate_semantics=args.gate_semantics)
    train_config = TrainConfig(learning_rate=args.lr, alpha=args.alpha,
                               batch_size=args.batch_size, epochs=args.epochs,
                               rng_seed=args.seed)
    policy, stats, dataset = dagger_loop(bc_policy, bc_dataset, episodes,
                                         config, train_config)
    Path(args.out).write_bytes(save_checkpoint(policy, seed=args.seed))
    if args.dataset_out:
        save_dataset(dataset, args.dataset_out)
    for row in stats_to_json(stats):
        print(json.dumps(row, separators=(",", ":")))
    return 0


def cmd_eval(args) -> int:
    worlds = tuple((Path(p).stem, _load_world_file(p)) for p in args.world)
    network = load_checkpoint(Path(args.checkpoint).read_bytes()) if args.checkpoint else None
    config = ExperimentConfig(worlds=worlds, policies=tuple(args.policy),
                              noise=_noise_from_args(args), trials=args.trials,
                              base_seed=args.seed, max_ticks=args.max_ticks)
    report = run_experiment(config, network_params=network)
    if args.out:
        Path(args.out).write_text(report.to_jsonl(), encoding="utf-8")
    print(report.to_table(), end="")
    return 0


def cmd_serve_labeler(args) -> int:
    from udl.labeler import LabelingSession, SessionConfig, serve_labeling_session

    world = _load_world_file(args.world)
    network = load_checkpoint(Path(args.checkpoint).read_bytes()) if args.checkpoint else None
    session = LabelingSession(
        world, _noise_from_args(args), args.seed,
        SessionConfig(mode=args.mode, always_ask=args.always_ask,
                      max_ticks=args.max_ticks),
        network_params=network,
        dataset_path=args.dataset_out,
    )
    serve_labeling_session(session, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="udl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate a world file from a template")
    _add_seed(p)
    p.add_argument("--template", choices=TEMPLATES, required=True)
    p.add_argument("--width", type=float)
    p.add_argument("--length", type=float)
    p.add_argument("--obstacles", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("run-episode", help="run one policy episode on a world")
    _add_seed(p)
    p.add_argument("--world", required=True)
    p.add_argument("--policy", choices=("tentacle", "vvf", "network", "oracle"),
                   required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--trace", help="write the per-tick trace JSONL here")
    p.add_argument("--max-ticks", type=int, default=2000)
    p.add_argument("--no-noise", action="store_true")
    p.set_defaults(func=cmd_run_episode)

    p = sub.add_parser("collect-bc", help="collect oracle behavior-cloning data")
    _add_seed(p)
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-ticks", type=int, default=2000)
    p.add_argument("--no-noise", action="store_true")
    p.set_defaults(func=cmd_collect_bc)

    p = sub.add_parser("train", help="train the policy network on a dataset")
    _add_seed(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--init", help="warm-start checkpoint")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--epochs", type=int, default=5000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dagger", help="run the gated aggregation loop")
    _add_seed(p)
    p.add_argument("--dataset", required=True, help="behavior-cloning dataset")
    p.add_argument("--init", required=True, help="behavior-cloned checkpoint")
    p.add_argument("--world", action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-out")
    p.add_argument("--tau", type=float, default=0.07)
    p.add_argument("--chi", type=float, default=0.1)
    p.add_argument("--eta", type=float, default=0.9)
    p.add_argument("--max-iterations", type=int, default=8)
    p.add_argument("--gate-semantics", choices=("prose", "literal-pseudocode"),
                   default="prose")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--epochs", type=int, default=5000)
    p.add_argument("--max-ticks", type=int, default=2000)
    p.add_argument("--no-noise", action="store_true")
    p.set_defaults(func=cmd_dagger)

    p = sub.add_parser("eval", help="compare policies across worlds and trials")
    _add_seed(p)
    p.add_argument("--world", action="append", required=True)
    p.add_argument("--policy", action="append", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--out", help="write the JSONL report here")
    p.add_argument("--max-ticks", type=int, default=2000)
    p.add_argument("--no-noise", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve-labeler", help="serve a labeling session over TCP")
    _add_seed(p)
    p.add_argument("--world", required=True)
    p.add_argument("--mode", choices=("bc", "dagger"), default="bc")
    p.add_argument("--checkpoint")
    p.add_argument("--always-ask", action="store_true")
    p.add_argument("--dataset-out")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--max-ticks", type=int, default=2000)
    p.add_argument("--no-noise", action="store_true")
    p.set_defaults(func=cmd_serve_labeler)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
