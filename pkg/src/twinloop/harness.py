"""Experiment orchestration: seeded Monte Carlo runs, metrics, persistence.

A single JSON config describes the whole experiment (plant, fleet, channel,
caps, mode, RL hyperparameters, seeds); every run echoes it into
summary.json so results can be replayed exactly. Per-episode seeds derive
from the master seed by episode index, so repeated runs are byte-identical
and different modes see common random numbers.

The episode error metric (reported as ``mrmse``) is the per-episode mean
over query intervals of the Euclidean distance between the true state and
the fused belief mean, averaged over episodes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sensing
from .agent import PolicyNetwork, PpoHyperparams, _hyper_to_dict
from .baselines import SchedulingMode
from .channel import ChannelParams
from .dynamics import PLANT_REGISTRY
from .errors import ConfigurationError
from .loop import TwinLoop

MRMSE_DEFINITION = ("per-episode mean over query intervals of "
                    "||true_state - belief_mean||_2, averaged over episodes")


@dataclass
class FleetConfig:
    count: int = 10
    max_distance_m: float = 20.0
    min_distance_m: float = 1.0
    position_noise_levels: tuple = (1e-3, 1e-1)
    velocity_noise_levels: tuple = (1e-4, 1e-2)
    seed: int = 7
    agents: list = None   # explicit [{id, feature, variance, distance}] wins


@dataclass
class PlantConfig:
    name: str = "mountain_car"
    process_noise_std: tuple = (1e-4, 1e-5)
    episode_cap: int = 999


@dataclass
class ChannelConfig:
    rician_factor_db: float = 15.0
    noise_power_dbm: float = -11.5
    bandwidth_hz: float = 5e6
    outage_epsilon: float = 1e-5
    latency_max_s: float = 5e-3
    packet_bits: float = 1024.0
    system_gain: float = 1.0
    path_loss_exponent: float = 2.0


@dataclass
class ExperimentConfig:
    mode: str = "reverb"
    master_seed: int = 0
    episodes: int = 100
    output_dir: str = None
    capacity: int = 10
    variance_caps: tuple = (0.01, 0.001)
    traditional_count: int = 2
    accuracy_weight: float = 0.5   # mixing weight of the per-QI diagnostic
    deterministic_eval: bool = True
    plant: PlantConfig = field(default_factory=PlantConfig)
    fleet: FleetConfig = field(default_factory=FleetConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    rl: PpoHyperparams = field(default_factory=PpoHyperparams)

    # -- validation / builders ----------------------------------------------

    def validate(self) -> "ExperimentConfig":
        try:
            SchedulingMode(self.mode)
        except ValueError:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.episodes < 1:
            raise ConfigurationError("episodes must be >= 1")
        if self.capacity < 0:
            raise ConfigurationError("capacity must be >= 0")
        if not 0.0 <= self.accuracy_weight <= 1.0:
            raise ConfigurationError("accuracy_weight must lie in [0, 1]")
        if any(c <= 0 for c in self.variance_caps):
            raise ConfigurationError("variance caps must be positive")
        if self.plant.name not in PLANT_REGISTRY:
            raise ConfigurationError(f"unknown plant {self.plant.name!r}")
        if self.fleet.agents is None and self.fleet.count < 2:
            raise ConfigurationError("fleet must cover position and velocity")
        try:
            self.build_channel()
        except Exception as exc:
            raise ConfigurationError(f"invalid channel parameters: {exc}")
        return self

    def build_plant(self):
        return PLANT_REGISTRY[self.plant.name](
            process_noise_std=tuple(self.plant.process_noise_std),
            episode_cap=self.plant.episode_cap)

    def build_fleet(self):
        f = self.fleet
        if f.agents is not None:
            payload = json.dumps({"state_dim": 2, "agents": f.agents})
            return sensing.fleet_from_json(payload)
        rng = np.random.default_rng(np.random.SeedSequence(f.seed))
        return sensing.place_agents(
            f.count, f.max_distance_m, f.position_noise_levels,
            f.velocity_noise_levels, rng, state_dim=2,
            min_distance_m=f.min_distance_m)

    def build_channel(self) -> ChannelParams:
        c = self.channel
        return ChannelParams.from_config(
            rician_factor_db=c.rician_factor_db,
            noise_power_dbm=c.noise_power_dbm,
            bandwidth_hz=c.bandwidth_hz,
            outage_epsilon=c.outage_epsilon,
            latency_max_s=c.latency_max_s,
            packet_bits=c.packet_bits,
            system_gain=c.system_gain,
            path_loss_exponent=c.path_loss_exponent)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["rl"] = _hyper_to_dict(self.rl)
        return json.loads(json.dumps(d))   # canonical JSON types (tuples -> lists)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for key, sub in (("plant", PlantConfig), ("fleet", FleetConfig),
                         ("channel", ChannelConfig), ("rl", PpoHyperparams)):
            if key in data and isinstance(data[key], dict):
                try:
                    data[key] = sub(**data[key])
                except TypeError as exc:
                    raise ConfigurationError(f"bad {key} section: {exc}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(str(exc))

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config is not valid JSON: {exc}")
        return cls.from_dict(data).validate()


@dataclass
class EpisodeMetrics:
    episode: int
    qis: int
    reached_goal: bool
    total_power_w: float
    mrmse: float
    mean_selected: float
    satisfaction_rate: float
    total_base_reward: float
    trace: list = field(default_factory=list, repr=False)


def episode_seed(master_seed: int, episode_index: int) -> np.random.SeedSequence:
    # namespace (2, .): training uses (1, .)
    return np.random.SeedSequence(master_seed, spawn_key=(2, episode_index))


def run_episode(policy: PolicyNetwork, config: ExperimentConfig,
                episode_index: int, env: TwinLoop = None,
                rng=None) -> EpisodeMetrics:
    """Roll one evaluation episode; numerical failures propagate."""
    if env is None:
        env = TwinLoop.from_config(config, record_trace=True)
    seed = episode_seed(config.master_seed, episode_index)
    obs = env.reset(seed)
    action_rng = rng if rng is not None else np.random.default_rng(seed.spawn(1)[0])
    total_base = 0.0
    qis = 0
    reached = False
    while True:
        action, _, _, _ = policy.act(obs, action_rng,
                                     deterministic=config.deterministic_eval,
                                     update_stats=False)
        step = env.step(action)
        total_base += step.base_reward
        qis += 1
        if step.terminated or step.truncated:
            reached = step.terminated
            break
        obs = step.policy_input
    return EpisodeMetrics(
        episode=episode_index,
        qis=qis,
        reached_goal=reached,
        total_power_w=env.episode_power,
        mrmse=float(np.mean(env.error_norms)),
        mean_selected=float(np.mean(env.selected_counts)),
        satisfaction_rate=float(np.mean(env.satisfied_flags)),
        total_base_reward=total_base,
        trace=list(env.trace),
    )


def _episode_worker(args):
    config_dict, policy_state, index = args
    config = ExperimentConfig.from_dict(config_dict)
    policy = PolicyNetwork.from_state(policy_state)
    return run_episode(policy, config, index)


def run_monte_carlo(config: ExperimentConfig, policy: PolicyNetwork = None,
                    workers: int = None) -> dict:
    """Run the configured number of seeded episodes and aggregate metrics.

    Episodes are independent; with TWINLOOP_WORKERS > 1 they run in a process
    pool, results ordered by episode index either way. Failed episodes are
    reported by index instead of aborting the whole run.
    """
    config.validate()
    if policy is None:
        policy = fresh_policy(config)
    if workers is None:
        workers = int(os.environ.get("TWINLOOP_WORKERS", "1"))
    indices = list(range(config.episodes))
    results = {}
    failures = {}
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        payload = policy.state_dict()
        args = [(config.to_dict(), payload, i) for i in indices]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, outcome in zip(indices, pool.map(_episode_worker, args)):
                results[i] = outcome
    else:
        env = TwinLoop.from_config(config, record_trace=True)
        for i in indices:
            try:
                results[i] = run_episode(policy, config, i, env=env)
            except Exception as exc:   # record, keep going
                failures[i] = f"{type(exc).__name__}: {exc}"
    metrics = [results[i] for i in indices if i in results]
    report = {
        "aggregate": aggregate_metrics(metrics),
        "failures": failures,
        "config": config.to_dict(),
        "mrmse_definition": MRMSE_DEFINITION,
    }
    if config.output_dir:
        export_traces(metrics, config.output_dir, report)
    report["episodes"] = metrics
    return report


def fresh_policy(config: ExperimentConfig) -> PolicyNetwork:
    """Untrained policy drawn from the master seed (for baseline/no-training runs)."""
    rng = np.random.default_rng(np.random.SeedSequence(config.master_seed,
                                                       spawn_key=(0,)))
    plant = config.build_plant()
    return PolicyNetwork(2 * plant.dim, plant.control_dim + plant.dim,
                         config.rl, rng)




def aggregate_metrics(metrics) -> dict:
    fieldnames = ("qis", "total_power_w", "power_per_qi_w", "mrmse",
                  "mean_selected", "satisfaction_rate", "total_base_reward")
    out = {"episodes": len(metrics)}
    if metrics:
        out["goal_rate"] = float(np.mean([m.reached_goal for m in metrics]))
    for name in fieldnames:
        if name == "power_per_qi_w":
            values = np.array([m.total_power_w / m.qis for m in metrics],
                              dtype=float)
        else:
            values = np.array([getattr(m, name) for m in metrics], dtype=float)
        if values.size == 0:
            continue
        out[name] = {
            "mean": float(values.mean()),
            "std": float(values.std()),
            "median": float(np.median(values)),
            "p10": float(np.percentile(values, 10)),
            "p90": float(np.percentile(values, 90)),
            "min": float(values.min()),
            "max": float(values.max()),
        }
    return out


EPISODE_COLUMNS = ("episode", "qis", "reached_goal", "total_power_w", "mrmse",
                   "mean_selected", "satisfaction_rate", "total_base_reward")
TRACE_COLUMNS = ("qi", "true_pos", "true_vel", "belief_pos", "belief_vel",
                 "std_pos", "std_vel", "prior_ratio_pos", "prior_ratio_vel",
                 "n_selected", "selected_ids", "iterations", "power_w",
                 "eta_pos", "eta_vel", "control", "base_reward", "satisfied",
                 "weighted_objective")


def _fmt(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


def export_traces(metrics, out_dir, report=None):
    """Write episodes.csv, one trace_<i>.csv per episode, and summary.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "episodes.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(EPISODE_COLUMNS)
            for m in metrics:
                writer.writerow([_fmt(getattr(m, c)) for c in EPISODE_COLUMNS])
        for m in metrics:
            with open(out / f"trace_{m.episode}.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(TRACE_COLUMNS)
                for row in m.trace:
                    writer.writerow([_fmt(row[c]) for c in TRACE_COLUMNS])
        if report is not None:
            summary = {k: v for k, v in report.items() if k != "episodes"}
            with open(out / "summary.json", "w") as fh:
                json.dump(summary, fh, indent=2, sort_keys=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot write outputs under {out}: {exc}")
    return out
