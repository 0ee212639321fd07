"""Command line front end: train, evaluate, validate-channel, sweep.

Exit codes: 0 on success, 1 for configuration errors, 2 for numerical or
training failures. Flags override the corresponding config keys.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from . import channel as channel_mod
from .errors import ConfigurationError, NumericalFailureError, TrainingFailureError
from .harness import ExperimentConfig, run_monte_carlo

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        config = ExperimentConfig.from_json_file(args.config)
    else:
        config = ExperimentConfig()
    if getattr(args, "mode", None):
        config.mode = args.mode
    if getattr(args, "seed", None) is not None:
        config.master_seed = args.seed
    if getattr(args, "episodes", None) is not None:
        config.episodes = args.episodes
    if getattr(args, "out", None):
        config.output_dir = args.out
    if getattr(args, "steps", None) is not None:
        config.rl.total_steps = args.steps
    return config.validate()


def cmd_train(args) -> int:
    config = _load_config(args)
    out = Path(config.output_dir or "train_out")

    def progress(row):
        if args.verbose:
            print(f"iter {row['iteration']:4d} steps {row['steps']:8d} "
                  f"return {row['mean_return']:8.2f} len {row['mean_length']:6.1f} "
                  f"goal {row['goal_rate']:.2f}")

    policy, curve = agent_mod.train(config, config.rl, config.master_seed,
                                    out_dir=out, progress=progress)
    final = curve[-1] if curve else {}
    print(f"trained mode={config.mode} seed={config.master_seed} "
          f"steps={final.get('steps', 0)} "
          f"goal_rate={final.get('goal_rate', float('nan'))} "
          f"checkpoint={out / 'policy.json'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    policy = None
    if args.policy:
        policy = agent_mod.PolicyNetwork.load(args.policy)
    report = run_monte_carlo(config, policy=policy)
    agg = report["aggregate"]
    line = {
        "mode": config.mode,
        "episodes": agg.get("episodes", 0),
        "goal_rate": agg.get("goal_rate"),
        "median_qis": agg.get("qis", {}).get("median"),
        "mean_power_w": agg.get("total_power_w", {}).get("mean"),
        "mean_mrmse": agg.get("mrmse", {}).get("mean"),
    }
    print(json.dumps(line))
    if report["failures"]:
        print(f"episode failures: {report['failures']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_validate_channel(args) -> int:
    params = channel_mod.ChannelParams.from_config(
        rician_factor_db=args.rician_db,
        noise_power_dbm=args.noise_dbm,
        bandwidth_hz=args.bandwidth_hz,
        outage_epsilon=args.epsilon,
        latency_max_s=args.latency_s,
        packet_bits=args.packet_bits,
        system_gain=args.system_gain,
        path_loss_exponent=args.alpha)
    power = channel_mod.required_power(args.distance_m, params)
    rng = np.random.default_rng(args.seed)
    outage = channel_mod.outage_probability_mc(power, args.distance_m, params,
                                               args.trials, rng)
    print("rician_db,epsilon,bandwidth_hz,packet_bits,latency_s,distance_m,"
          "alpha,trials,required_power_w,empirical_outage")
    print(f"{args.rician_db!r},{args.epsilon!r},{args.bandwidth_hz!r},"
          f"{args.packet_bits!r},{args.latency_s!r},{args.distance_m!r},"
          f"{args.alpha!r},{args.trials},{power!r},{outage!r}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_config(args)
    out = Path(config.output_dir or "sweep_out")
    out.mkdir(parents=True, exist_ok=True)
    kappas = args.kappa or [config.rl.reward_weight]
    capacities = args.capacity or [config.capacity]
    epsilons = args.epsilon or [config.channel.outage_epsilon]
    rows = []
    for kappa in kappas:
        for capacity in capacities:
            for eps in epsilons:
                point = ExperimentConfig.from_dict(config.to_dict())
                point.rl.reward_weight = kappa
                point.capacity = capacity
                point.channel.outage_epsilon = eps
                point.output_dir = None
                point.validate()
                if args.train_steps:
                    point.rl.total_steps = args.train_steps
                    policy, _ = agent_mod.train(point, point.rl,
                                                point.master_seed)
                else:
                    policy = None
                report = run_monte_carlo(point, policy=policy)
                agg = report["aggregate"]
                rows.append({
                    "kappa": kappa, "capacity": capacity, "epsilon": eps,
                    "goal_rate": agg.get("goal_rate"),
                    "median_qis": agg.get("qis", {}).get("median"),
                    "mean_power_w": agg.get("total_power_w", {}).get("mean"),
                    "mean_mrmse": agg.get("mrmse", {}).get("mean"),
                })
                print(json.dumps(rows[-1]))
    import csv

    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twinloop",
        description="Digital-twin control loop simulator and benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a policy for one mode")
    train.add_argument("--config", help="experiment config JSON")
    train.add_argument("--mode", help="scheduling mode")
    train.add_argument("--seed", type=int)
    train.add_argument("--steps", type=int, help="total training steps")
    train.add_argument("--out", help="output directory")
    train.add_argument("--verbose", action="store_true")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="run seeded evaluation episodes")
    ev.add_argument("--config", help="experiment config JSON")
    ev.add_argument("--mode", help="scheduling mode")
    ev.add_argument("--policy", help="policy checkpoint (JSON); fresh policy if omitted")
    ev.add_argument("--seed", type=int)
    ev.add_argument("--episodes", type=int)
    ev.add_argument("--out", help="output directory")
    ev.set_defaults(func=cmd_evaluate)

    vc = sub.add_parser("validate-channel",
                        help="required power and Monte Carlo outage as CSV")
    vc.add_argument("--rician-db", type=float, default=15.0)
    vc.add_argument("--epsilon", type=float, default=1e-2)
    vc.add_argument("--bandwidth-hz", type=float, default=5e6)
    vc.add_argument("--packet-bits", type=float, default=1024.0)
    vc.add_argument("--latency-s", type=float, default=5e-3)
    vc.add_argument("--distance-m", type=float, default=20.0)
    vc.add_argument("--alpha", type=float, default=2.0)
    vc.add_argument("--noise-dbm", type=float, default=-11.5)
    vc.add_argument("--system-gain", type=float, default=1.0)
    vc.add_argument("--trials", type=int, default=1_000_000)
    vc.add_argument("--seed", type=int, default=0)
    vc.set_defaults(func=cmd_validate_channel)

    sw = sub.add_parser("sweep", help="grid over kappa, capacity, epsilon")
    sw.add_argument("--config", help="experiment config JSON")
    sw.add_argument("--mode", help="scheduling mode")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--episodes", type=int)
    sw.add_argument("--out", help="output directory")
    sw.add_argument("--kappa", type=float, nargs="*")
    sw.add_argument("--capacity", type=int, nargs="*")
    sw.add_argument("--epsilon", type=float, nargs="*")
    sw.add_argument("--train-steps", type=int,
                    help="train a policy per grid point with this many steps")
    sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailureError, TrainingFailureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
