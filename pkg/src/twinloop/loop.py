"""The per-interval digital twin control loop shared by training and evaluation.

One query interval runs: blind prediction -> policy action on the prior
belief -> agent scheduling under the effective variance caps -> uplink power
for the selected agents -> observation fusion -> plant step -> reward. The
environment surface mirrors the usual gym step/reset contract so the trainer
and the evaluation harness drive the same code.

Episode randomness is split into independent substreams (initial state and
process noise / observation noise / benchmark agent picks), so two modes run
with the same episode seed share plant noise draws: paired comparisons use
common random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel as channel_mod
from . import estimator, scheduler, sensing
from .agent import CostMode, base_reward, decode_action, shape_reward
from .baselines import SchedulingMode, baseline_schedule
from .errors import ConfigurationError
from .estimator import Belief


@dataclass
class StepResult:
    policy_input: np.ndarray
    base_reward: float
    shaped_reward: float
    terminated: bool
    truncated: bool
    info: dict


class TwinLoop:
    """Episode driver binding plant, fleet, filter, scheduler and channel."""

    def __init__(self, plant, fleet, channel_params, variance_caps,
                 mode=SchedulingMode.REVERB, capacity=10,
                 kappa=5e-6, eta_max=1000.0, cost_mode=CostMode.PENALTY,
                 traditional_count=2, termination_bonus=100.0,
                 initial_velocity_variance=1e-4, accuracy_weight=0.5,
                 record_trace=False):
        self.plant = plant
        self.fleet = list(fleet)
        if not sensing.covers_all_features(self.fleet, plant.dim):
            raise ConfigurationError("fleet does not cover every state feature")
        self.channel_params = channel_params
        self.variance_caps = np.asarray(variance_caps, dtype=float)
        self.mode = SchedulingMode(mode)
        self.capacity = int(capacity)
        self.kappa = float(kappa)
        self.eta_max = float(eta_max)
        self.cost_mode = CostMode(cost_mode)
        self.traditional_count = int(traditional_count)
        self.termination_bonus = float(termination_bonus)
        self.initial_velocity_variance = float(initial_velocity_variance)
        self.accuracy_weight = float(accuracy_weight)
        self.record_trace = record_trace

        self.control_dim = plant.control_dim
        self.obs_dim = 2 * plant.dim
        self.action_dim = plant.control_dim + plant.dim
        # distances are fixed, so each agent's uplink power is a constant
        self.power_by_id = {
            a.agent_id: channel_mod.required_power(a.distance_m, channel_params)
            for a in self.fleet}

        self._true_state = None
        self._prior = None
        self._qi = 0

    @classmethod
    def from_config(cls, config, record_trace=False) -> "TwinLoop":
        return cls(plant=config.build_plant(),
                   fleet=config.build_fleet(),
                   channel_params=config.build_channel(),
                   variance_caps=config.variance_caps,
                   mode=config.mode,
                   capacity=config.capacity,
                   kappa=config.rl.reward_weight,
                   eta_max=config.rl.eta_max,
                   cost_mode=config.rl.cost_mode,
                   traditional_count=config.traditional_count,
                   termination_bonus=config.rl.termination_bonus,
                   accuracy_weight=config.accuracy_weight,
                   record_trace=record_trace)

    # -- episode control ----------------------------------------------------

    def reset(self, seed) -> np.ndarray:
        """Start a new episode; returns the first policy input."""
        ss = seed if isinstance(seed, np.random.SeedSequence) \
            else np.random.SeedSequence(seed)
        plant_ss, obs_ss, pick_ss = ss.spawn(3)
        self._plant_rng = np.random.default_rng(plant_ss)
        self._obs_rng = np.random.default_rng(obs_ss)
        self._pick_rng = np.random.default_rng(pick_ss)
        self._true_state = self.plant.initial_state(self._plant_rng)
        self._prior = self._initial_belief()
        self._qi = 1
        self._last_control = np.zeros(self.control_dim)
        self.trace = []
        self.episode_power = 0.0
        self.error_norms = []
        self.selected_counts = []
        self.satisfied_flags = []
        return self._policy_input(self._prior)

    def step(self, raw_action) -> StepResult:
        """Run one query interval with the raw policy output."""
        action = decode_action(raw_action, self.eta_max, self.control_dim)
        control = float(action.control[0])

        if self.mode is SchedulingMode.REVERB:
            thresholds = scheduler.QosThresholds(self.variance_caps,
                                                 action.accuracy)
            decision = scheduler.schedule(self._prior, thresholds, self.fleet,
                                          self.capacity,
                                          observe_fn=self._observe_fn())
        else:
            thresholds = scheduler.QosThresholds(self.variance_caps)
            decision = baseline_schedule(
                self.mode, self._prior, self.fleet, self.capacity,
                self._pick_rng, observe_fn=self._observe_fn(),
                thresholds=thresholds, true_state=self._true_state,
                traditional_count=self.traditional_count)

        power = sum(self.power_by_id[i] for i in decision.selected_ids)
        posterior = decision.posterior
        error = self._true_state - posterior.mean

        next_state = self.plant.step(self._true_state, control, self._plant_rng)
        reached_goal = self.plant.is_goal(next_state)
        reward = base_reward(control, reached_goal, self.termination_bonus)
        if self.mode is SchedulingMode.REVERB:
            shaped = shape_reward(reward, action.accuracy, self.kappa,
                                  self.cost_mode)
        else:
            shaped = reward

        self.episode_power += power
        self.error_norms.append(float(np.linalg.norm(error)))
        self.selected_counts.append(len(decision.selected_ids))
        self.satisfied_flags.append(bool(np.all(decision.satisfied)))
        info = {"qi": self._qi, "power": power,
                "selected_ids": decision.selected_ids,
                "reached_goal": reached_goal}
        if self.record_trace:
            objective = scheduler.weighted_objective(
                decision, thresholds, self.accuracy_weight,
                [self.power_by_id[i] for i in decision.selected_ids])
            self.trace.append({
                "qi": self._qi,
                "true_pos": float(self._true_state[0]),
                "true_vel": float(self._true_state[1]),
                "belief_pos": float(posterior.mean[0]),
                "belief_vel": float(posterior.mean[1]),
                "std_pos": float(posterior.std[0]),
                "std_vel": float(posterior.std[1]),
                "prior_ratio_pos": float(decision.ratios_prior[0]),
                "prior_ratio_vel": float(decision.ratios_prior[1]),
                "n_selected": len(decision.selected_ids),
                "selected_ids": ";".join(str(i) for i in decision.selected_ids),
                "iterations": decision.iterations,
                "power_w": power,
                "eta_pos": float(action.accuracy[0]),
                "eta_vel": float(action.accuracy[1]),
                "control": control,
                "base_reward": reward,
                "satisfied": int(np.all(decision.satisfied)),
                "weighted_objective": objective,
            })

        terminated = reached_goal
        truncated = (not terminated) and self._qi >= self.plant.episode_cap
        self._true_state = next_state
        self._last_control = action.control
        self._prior = estimator.predict(posterior, action.control, self.plant)
        self._qi += 1
        return StepResult(self._policy_input(self._prior), reward, shaped,
                          terminated, truncated, info)

    # -- helpers -------------------------------------------------------------

    def _observe_fn(self):
        state = self._true_state
        qi = self._qi
        rng = self._obs_rng
        return lambda agent: sensing.observe(agent, state, rng, qi=qi).values

    def _policy_input(self, belief: Belief) -> np.ndarray:
        return np.concatenate([belief.mean, belief.std])

    def _initial_belief(self) -> Belief:
        if hasattr(self.plant, "params"):   # mountain-car style plant
            return estimator.moment_matched_initial_belief(
                self.plant.params.initial_position_range,
                self.initial_velocity_variance, qi=1)
        return Belief(self.plant.initial_mean.copy(),
                      self.plant.initial_cov.copy(), qi=1)
