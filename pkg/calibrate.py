"""Scratch calibration for the acceptance training configuration (not shipped)."""

import json
import sys
import time

import numpy as np

from twinloop import ExperimentConfig, run_monte_carlo
from twinloop.agent import train


def acceptance_config(mode, seed, total_steps):
    config = ExperimentConfig()
    config.mode = mode
    config.master_seed = seed
    config.episodes = 100
    config.capacity = 10
    config.variance_caps = (0.01, 0.001)
    config.plant.process_noise_std = (0.09, 1e-3)
    config.plant.episode_cap = 999
    config.fleet.count = 10
    config.fleet.seed = 7
    config.traditional_count = 2
    config.rl.cost_mode = "paper_eq24"
    config.rl.eta_max = 600.0
    config.rl.total_steps = total_steps
    return config.validate()


def main():
    mode_list = sys.argv[1].split(",") if len(sys.argv) > 1 else [
        "perfect", "reverb", "traditional", "cost_greedy", "error_greedy"]
    seeds = [int(s) for s in sys.argv[2].split(",")] if len(sys.argv) > 2 else [101]
    steps = int(sys.argv[3]) if len(sys.argv) > 3 else 100_000
    summary = {}
    for mode in mode_list:
        per_mode = {"qis": [], "power": [], "mrmse": [], "goal": [],
                    "sat": [], "sel": [], "eta": []}
        for seed in seeds:
            config = acceptance_config(mode, seed, steps)
            t0 = time.time()
            policy, curve = train(config, config.rl, seed)
            t_train = time.time() - t0
            t0 = time.time()
            report = run_monte_carlo(config, policy=policy)
            t_eval = time.time() - t0
            agg = report["aggregate"]
            per_mode["qis"] += [m.qis for m in report["episodes"]]
            per_mode["power"] += [m.total_power_w for m in report["episodes"]]
            per_mode["mrmse"] += [m.mrmse for m in report["episodes"]]
            per_mode["goal"] += [m.reached_goal for m in report["episodes"]]
            per_mode["sat"] += [m.satisfaction_rate for m in report["episodes"]]
            per_mode["sel"] += [m.mean_selected for m in report["episodes"]]
            last = curve[-1] if curve else {}
            print(f"[{mode} seed={seed}] train {t_train:.0f}s eval {t_eval:.0f}s "
                  f"goal={agg['goal_rate']:.2f} medqis={agg['qis']['median']:.0f} "
                  f"power={agg['total_power_w']['mean']:.3f} "
                  f"mrmse={agg['mrmse']['mean']:.4f} "
                  f"sel={agg['mean_selected']['mean']:.2f} "
                  f"sat={agg['satisfaction_rate']['mean']:.2f} "
                  f"train_goal={last.get('goal_rate')} logstd={last.get('logstd_mean')}",
                  flush=True)
        summary[mode] = {
            "goal_rate": float(np.mean(per_mode["goal"])),
            "median_qis": float(np.median(per_mode["qis"])),
            "mean_power": float(np.mean(per_mode["power"])),
            "mean_mrmse": float(np.mean(per_mode["mrmse"])),
            "mean_sel": float(np.mean(per_mode["sel"])),
            "mean_sat": float(np.mean(per_mode["sat"])),
        }
        print(json.dumps({mode: summary[mode]}), flush=True)

    print("\n==== summary ====")
    print(json.dumps(summary, indent=2))
    if "perfect" in summary and "reverb" in summary:
        print("b) reverb/perfect median qis:",
              summary["reverb"]["median_qis"] / summary["perfect"]["median_qis"])
    if "traditional" in summary and "reverb" in summary:
        print("c) traditional/reverb median qis:",
              summary["traditional"]["median_qis"] / summary["reverb"]["median_qis"])
    if "error_greedy" in summary and "reverb" in summary:
        print("d) reverb/error power:",
              summary["reverb"]["mean_power"] / summary["error_greedy"]["mean_power"])
    if "cost_greedy" in summary and "reverb" in summary:
        print("e) reverb/cost mrmse:",
              summary["reverb"]["mean_mrmse"] / summary["cost_greedy"]["mean_mrmse"])


if __name__ == "__main__":
    main()
