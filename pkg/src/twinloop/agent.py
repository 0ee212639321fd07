"""Uncertainty-aware control agent: augmented actions, shaped reward, PPO.

The policy maps the twin's belief summary (mean and per-feature standard
deviation) to a raw action vector in [-1, 1]^(Z+K): the first Z entries are
plant controls, the remaining K are requested accuracies squashed onto
[0, eta_max]. Actor and critic are small tanh networks written directly on
numpy with hand-derived gradients, so every gradient can be checked against
finite differences; optimization is the clipped-surrogate objective with
generalized advantage estimation and Adam.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np

from .errors import InvalidInputError, TrainingFailureError

LOG_2PI = math.log(2.0 * math.pi)


class CostMode(str, Enum):
    """How requested accuracy enters the shaped reward.

    PENALTY charges kappa * mean(eta) (cost non-increasing in accuracy is
    impossible to reward, so higher requests cost reward); PAPER_EQ24 adds
    kappa * sum(eta) / 2 as a bonus instead, reproducing the published
    formula literally.
    """

    PENALTY = "penalty"
    PAPER_EQ24 = "paper_eq24"


@dataclass(frozen=True)
class AugmentedAction:
    """Physical control plus requested per-feature accuracies."""

    control: np.ndarray   # (Z,) in [-1, 1]
    accuracy: np.ndarray  # (K,) in [0, eta_max]

    def __post_init__(self):
        object.__setattr__(self, "control", np.atleast_1d(np.asarray(self.control, dtype=float)))
        object.__setattr__(self, "accuracy", np.atleast_1d(np.asarray(self.accuracy, dtype=float)))


@dataclass
class PpoHyperparams:
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    epochs: int = 10
    batch_size: int = 2048
    minibatch_size: int = 64
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    hidden_sizes: tuple = (64, 64)
    total_steps: int = 150_000
    reward_weight: float = 5e-6       # kappa
    eta_max: float = 1000.0
    cost_mode: CostMode = CostMode.PENALTY
    initial_logstd: float = 0.0
    min_logstd: float = -4.0
    normalize_observations: bool = True
    normalize_advantages: bool = True
    termination_bonus: float = 100.0

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise InvalidInputError("discount must lie in (0, 1)")
        if self.clip_ratio <= 0:
            raise InvalidInputError("clip_ratio must be positive")
        if isinstance(self.cost_mode, str):
            self.cost_mode = CostMode(self.cost_mode)
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)


def base_reward(control: float, reached_goal: bool,
                termination_bonus: float = 100.0) -> float:
    """Quadratic effort cost plus the goal bonus: -0.1 a^2 (+ bonus)."""
    r = -0.1 * float(control) ** 2
    if reached_goal:
        r += termination_bonus
    return r


def shape_reward(reward: float, accuracy, kappa: float,
                 cost_mode: CostMode = CostMode.PENALTY) -> float:
    """Fold the accuracy request into the reward according to ``cost_mode``."""
    if kappa < 0:
        raise InvalidInputError("kappa must be nonnegative")
    eta = np.asarray(accuracy, dtype=float)
    mode = CostMode(cost_mode)
    if mode is CostMode.PENALTY:
        return float(reward - kappa * eta.mean())
    return float(reward + kappa * 0.5 * eta.sum())


def decode_action(raw, eta_max: float, control_dim: int = 1) -> AugmentedAction:
    """Map a raw policy output in [-1, 1]^(Z+K) onto controls and accuracies.

    Out-of-range raw entries (including +-inf) are clamped before mapping.
    """
    raw = np.atleast_1d(np.asarray(raw, dtype=float))
    control = np.clip(raw[:control_dim], -1.0, 1.0)
    eta = np.clip(eta_max * (raw[control_dim:] + 1.0) / 2.0, 0.0, eta_max)
    return AugmentedAction(control, eta)


class RunningNormalizer:
    """Streaming mean/variance used to whiten policy inputs."""

    def __init__(self, dim: int, clip: float = 10.0):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.clip = clip

    def normalize(self, x, update: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.count > 1:
            out = (x - self.mean) / np.sqrt(self.var + 1e-8)
        else:
            out = x.copy()
        if update:
            self._update(x)
        return np.clip(out, -self.clip, self.clip)

    def _update(self, x):
        # Welford update, one sample at a time
        self.count += 1.0
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        if self.count > 1:
            self.var = self.var * (self.count - 2) / (self.count - 1) \
                + delta * (x - self.mean) / (self.count - 1)

    def state(self) -> dict:
        return {"mean": self.mean.tolist(), "var": self.var.tolist(),
                "count": self.count}

    @classmethod
    def from_state(cls, state, clip: float = 10.0) -> "RunningNormalizer":
        norm = cls(len(state["mean"]), clip)
        norm.mean = np.asarray(state["mean"], dtype=float)
        norm.var = np.asarray(state["var"], dtype=float)
        norm.count = float(state["count"])
        return norm


def _orthogonal(rows, cols, gain, rng):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    # contiguous layout so reloaded checkpoints take identical BLAS paths
    return np.ascontiguousarray(gain * q[:rows, :cols])


class Mlp:
    """Feed-forward net with tanh hidden layers and a linear output."""

    def __init__(self, sizes, rng, final_gain: float = 0.01):
        self.sizes = tuple(sizes)
        self.weights = []
        self.biases = []
        for i in range(len(sizes) - 1):
            last = i == len(sizes) - 2
            gain = final_gain if last else math.sqrt(2.0)
            self.weights.append(_orthogonal(sizes[i], sizes[i + 1], gain, rng))
            self.biases.append(np.zeros(sizes[i + 1]))

    def forward(self, x):
        """Returns the output (N, out) and the activation cache for backward."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise InvalidInputError(
                f"input width {x.shape[1]} != expected {self.sizes[0]}")
        cache = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == len(self.weights) - 1 else np.tanh(z)
            cache.append(h)
        return h, cache

    def backward(self, cache, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. parameters and input."""
        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        g = np.atleast_2d(grad_out)
        for i in reversed(range(len(self.weights))):
            if i != len(self.weights) - 1:
                g = g * (1.0 - cache[i + 1] ** 2)   # tanh'
            grad_w[i] = cache[i].T @ g
            grad_b[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grad_w, grad_b, g

    def parameters(self):
        return self.weights + self.biases

    def set_parameters(self, params):
        n = len(self.weights)
        self.weights = [np.asarray(p, dtype=float) for p in params[:n]]
        self.biases = [np.asarray(p, dtype=float) for p in params[n:]]


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def _clip_global_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        grads = [g * scale for g in grads]
    return grads, total


class PolicyNetwork:
    """Actor-critic pair with a state-independent learnable log-std."""

    def __init__(self, obs_dim: int, action_dim: int, hyper: PpoHyperparams, rng):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.hyper = hyper
        hidden = list(hyper.hidden_sizes)
        self.actor = Mlp([obs_dim] + hidden + [action_dim], rng, final_gain=0.01)
        self.critic = Mlp([obs_dim] + hidden + [1], rng, final_gain=1.0)
        self.logstd = np.full(action_dim, float(hyper.initial_logstd))
        self.normalizer = RunningNormalizer(obs_dim)
        self._actor_opt = Adam(self.actor.parameters() + [self.logstd], hyper.actor_lr)
        self._critic_opt = Adam(self.critic.parameters(), hyper.critic_lr)

    # -- forward passes ----------------------------------------------------

    def forward(self, policy_input):
        """Distribution mean/std and value for one raw (unnormalized) input."""
        x = self.normalizer.normalize(policy_input, update=False)
        head, _ = self.actor.forward(x[None, :])
        value, _ = self.critic.forward(x[None, :])
        mean = np.tanh(head[0])
        std = np.exp(self.logstd)
        return mean, std, float(value[0, 0])

    def act(self, policy_input, rng, deterministic: bool = False,
            update_stats: bool = False):
        """Sample (or take the mean of) the action distribution.

        Returns (raw_action, logprob, value, normalized_obs).
        """
        x = self.normalizer.normalize(policy_input, update=update_stats)
        head, _ = self.actor.forward(x[None, :])
        mean = np.tanh(head[0])
        std = np.exp(self.logstd)
        if deterministic:
            action = mean.copy()
        else:
            action = mean + std * rng.standard_normal(self.action_dim)
        logp = gaussian_logprob(action[None, :], mean[None, :], self.logstd)[0]
        value, _ = self.critic.forward(x[None, :])
        return action, float(logp), float(value[0, 0]), x

    def value(self, policy_input) -> float:
        x = self.normalizer.normalize(policy_input, update=False)
        v, _ = self.critic.forward(x[None, :])
        return float(v[0, 0])

    def entropy(self) -> float:
        return float(np.sum(self.logstd + 0.5 * (1.0 + LOG_2PI)))

    # -- persistence ---------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "format": "twinloop-policy-v1",
            "obs_dim": self.obs_dim,
            "action_dim": self.action_dim,
            "hyper": _hyper_to_dict(self.hyper),
            "actor": _mlp_state(self.actor),
            "critic": _mlp_state(self.critic),
            "logstd": self.logstd.tolist(),
            "normalizer": self.normalizer.state(),
        }

    @classmethod
    def from_state(cls, payload: dict) -> "PolicyNetwork":
        if payload.get("format") != "twinloop-policy-v1":
            raise InvalidInputError("unrecognized checkpoint format")
        hyper = PpoHyperparams(**payload["hyper"])
        policy = cls(payload["obs_dim"], payload["action_dim"], hyper,
                     np.random.default_rng(0))
        _mlp_load(policy.actor, payload["actor"])
        _mlp_load(policy.critic, payload["critic"])
        policy.logstd = np.asarray(payload["logstd"], dtype=float)
        policy.normalizer = RunningNormalizer.from_state(payload["normalizer"])
        policy._actor_opt = Adam(policy.actor.parameters() + [policy.logstd],
                                 hyper.actor_lr)
        policy._critic_opt = Adam(policy.critic.parameters(), hyper.critic_lr)
        return policy

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.state_dict(), fh)

    @classmethod
    def load(cls, path) -> "PolicyNetwork":
        with open(path) as fh:
            return cls.from_state(json.load(fh))


def policy_forward(policy_input, policy: PolicyNetwork):
    """(action mean, action std, value estimate) for one belief summary."""
    return policy.forward(policy_input)


def gaussian_logprob(actions, means, logstd):
    """Row-wise diagonal Gaussian log density."""
    std = np.exp(logstd)
    z = (actions - means) / std
    return -0.5 * np.sum(z * z, axis=1) - np.sum(logstd) \
        - 0.5 * actions.shape[1] * LOG_2PI


def compute_gae(rewards, values, boundary, bootstrap, discount, lam):
    """Generalized advantage estimation over a flat step array.

    ``boundary[t]`` marks the last step of an episode segment; ``bootstrap[t]``
    is the value used beyond a boundary step (0 for terminal states, the
    critic's estimate of the next input for truncations and batch cuts).
    Returns (advantages, value_targets).
    """
    n = len(rewards)
    adv = np.zeros(n)
    gae = 0.0
    for t in range(n - 1, -1, -1):
        if boundary[t]:
            next_value = bootstrap[t]
            gae = 0.0
        else:
            next_value = values[t + 1]
        delta = rewards[t] + discount * next_value - values[t]
        gae = delta + discount * lam * gae
        adv[t] = gae
    return adv, adv + values[:n]


def ppo_loss_and_grads(policy: PolicyNetwork, minibatch: dict,
                       hyper: PpoHyperparams):
    """Clipped-surrogate + value + entropy losses with analytic gradients.

    ``minibatch`` holds normalized observations, raw actions, collection-time
    log-probs, advantages, and value targets. Returns (diagnostics, actor
    grads aligned with actor.parameters() + [logstd], critic grads).
    """
    obs = minibatch["obs"]
    actions = minibatch["actions"]
    logp_old = minibatch["logp"]
    adv = minibatch["advantages"]
    targets = minibatch["value_targets"]
    n = obs.shape[0]

    # overflow from poisoned batches surfaces as TrainingFailureError instead
    with np.errstate(over="ignore", invalid="ignore"):
        head, actor_cache = policy.actor.forward(obs)
        mean = np.tanh(head)
        std = np.exp(policy.logstd)
        logp = gaussian_logprob(actions, mean, policy.logstd)
        ratio = np.exp(logp - logp_old)
        clipped = np.clip(ratio, 1.0 - hyper.clip_ratio, 1.0 + hyper.clip_ratio)
        surr1 = ratio * adv
        surr2 = clipped * adv
        policy_loss = -np.mean(np.minimum(surr1, surr2))
        entropy = np.sum(policy.logstd + 0.5 * (1.0 + LOG_2PI))

        # surrogate gradient flows only where the unclipped branch is active
        active = (surr1 <= surr2).astype(float)
        dlogp = -(active * ratio * adv) / n           # d policy_loss / d logp
        z = (actions - mean) / std
        dmean = dlogp[:, None] * z / std              # d logp / d mean = z / std
        dhead = dmean * (1.0 - mean ** 2)
        grad_w, grad_b, _ = policy.actor.backward(actor_cache, dhead)
        dlogstd = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0) \
            - hyper.entropy_coef * np.ones_like(policy.logstd)
        actor_grads = grad_w + grad_b + [dlogstd]

        values, critic_cache = policy.critic.forward(obs)
        values = values[:, 0]
        verr = values - targets
        value_loss = 0.5 * float(np.mean(verr ** 2))
        dv = (hyper.value_coef * verr / n)[:, None]
        cw, cb, _ = policy.critic.backward(critic_cache, dv)
        critic_grads = cw + cb

        diags = {
            "policy_loss": float(policy_loss),
            "value_loss": value_loss,
            "entropy": float(entropy),
            "approx_kl": float(np.mean(logp_old - logp)),
            "clip_fraction": float(np.mean((np.abs(ratio - 1.0)
                                            > hyper.clip_ratio))),
            "total_loss": float(policy_loss + hyper.value_coef * value_loss
                                - hyper.entropy_coef * entropy),
        }
    return diags, actor_grads, critic_grads


def ppo_update(batch: dict, policy: PolicyNetwork, hyper: PpoHyperparams,
               rng) -> dict:
    """Run the clipped-surrogate epochs over ``batch``; mutates the policy.

    Returns averaged loss diagnostics. Raises TrainingFailureError with a
    diagnostic dump if any loss turns non-finite.
    """
    n = batch["obs"].shape[0]
    adv = batch["advantages"]
    if hyper.normalize_advantages and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    data = dict(batch, advantages=adv)
    order = np.arange(n)
    totals = {}
    count = 0
    for _ in range(hyper.epochs):
        rng.shuffle(order)
        for start in range(0, n, hyper.minibatch_size):
            idx = order[start:start + hyper.minibatch_size]
            mb = {k: v[idx] for k, v in data.items()}
            diags, actor_grads, critic_grads = ppo_loss_and_grads(policy, mb, hyper)
            if not all(np.isfinite(v) for v in diags.values()):
                raise TrainingFailureError("non-finite PPO loss", diagnostics=diags)
            actor_grads, _ = _clip_global_norm(actor_grads, hyper.max_grad_norm)
            critic_grads, _ = _clip_global_norm(critic_grads, hyper.max_grad_norm)
            policy._actor_opt.step(policy.actor.parameters() + [policy.logstd],
                                   actor_grads)
            policy._critic_opt.step(policy.critic.parameters(), critic_grads)
            np.clip(policy.logstd, hyper.min_logstd, None, out=policy.logstd)
            for k, v in diags.items():
                totals[k] = totals.get(k, 0.0) + v
            count += 1
    return {k: v / count for k, v in totals.items()}


def train(config, hyper: PpoHyperparams, seed: int, out_dir=None,
          progress=None):
    """Collect-and-update loop over the full twin control loop.

    Returns (policy, training curve). Deterministic for a fixed seed. With
    ``total_steps`` = 0 the initial policy is returned untouched.
    """
    from .loop import TwinLoop  # deferred: loop depends on this module

    env = TwinLoop.from_config(config)
    root = np.random.SeedSequence(seed)
    init_rng, action_rng, shuffle_rng = [
        np.random.default_rng(s) for s in root.spawn(3)]
    policy = PolicyNetwork(env.obs_dim, env.action_dim, hyper, init_rng)

    curve = []
    iterations = hyper.total_steps // hyper.batch_size
    episode_counter = 0
    obs = env.reset(seed=_episode_seed(seed, episode_counter))
    ep_return = 0.0
    ep_len = 0
    finished_returns, finished_lengths, finished_goals = [], [], []

    for it in range(iterations):
        n = hyper.batch_size
        obs_buf = np.zeros((n, env.obs_dim))
        act_buf = np.zeros((n, env.action_dim))
        logp_buf = np.zeros(n)
        rew_buf = np.zeros(n)
        val_buf = np.zeros(n)
        boundary = np.zeros(n, dtype=bool)
        bootstrap = np.zeros(n)

        for t in range(n):
            action, logp, value, norm_obs = policy.act(
                obs, action_rng, deterministic=False,
                update_stats=hyper.normalize_observations)
            step = env.step(action)
            obs_buf[t] = norm_obs
            act_buf[t] = action
            logp_buf[t] = logp
            val_buf[t] = value
            rew_buf[t] = step.shaped_reward
            ep_return += step.base_reward
            ep_len += 1
            if step.terminated or step.truncated:
                boundary[t] = True
                bootstrap[t] = 0.0 if step.terminated else policy.value(step.policy_input)
                finished_returns.append(ep_return)
                finished_lengths.append(ep_len)
                finished_goals.append(step.terminated)
                ep_return, ep_len = 0.0, 0
                episode_counter += 1
                obs = env.reset(seed=_episode_seed(seed, episode_counter))
            else:
                obs = step.policy_input
                if t == n - 1:  # batch cut inside an episode
                    boundary[t] = True
                    bootstrap[t] = policy.value(obs)

        adv, targets = compute_gae(rew_buf, val_buf, boundary, bootstrap,
                                   hyper.discount, hyper.gae_lambda)
        batch = {"obs": obs_buf, "actions": act_buf, "logp": logp_buf,
                 "advantages": adv, "value_targets": targets}
        diags = ppo_update(batch, policy, hyper, shuffle_rng)

        window = slice(-20, None)
        row = {
            "iteration": it + 1,
            "steps": (it + 1) * hyper.batch_size,
            "episodes": episode_counter,
            "mean_return": float(np.mean(finished_returns[window])) if finished_returns else float("nan"),
            "mean_length": float(np.mean(finished_lengths[window])) if finished_lengths else float("nan"),
            "goal_rate": float(np.mean(finished_goals[window])) if finished_goals else float("nan"),
            "logstd_mean": float(np.mean(policy.logstd)),
        }
        row.update(diags)
        curve.append(row)
        if progress is not None:
            progress(row)

    if out_dir is not None:
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        policy.save(out / "policy.json")
        _write_curve(curve, out / "training_curve.csv")
    return policy, curve


def _episode_seed(master_seed: int, episode_index: int) -> np.random.SeedSequence:
    # namespace (1, .) reserves (2, .) for evaluation episodes in the harness
    return np.random.SeedSequence(master_seed, spawn_key=(1, episode_index))


def _write_curve(curve, path):
    import csv

    if not curve:
        with open(path, "w", newline="") as fh:
            fh.write("")
        return
    keys = list(curve[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for row in curve:
            writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k]
                             for k in keys])


def _mlp_state(mlp: Mlp) -> dict:
    return {"sizes": list(mlp.sizes),
            "weights": [w.tolist() for w in mlp.weights],
            "biases": [b.tolist() for b in mlp.biases]}


def _mlp_load(mlp: Mlp, state: dict):
    mlp.weights = [np.asarray(w, dtype=float) for w in state["weights"]]
    mlp.biases = [np.asarray(b, dtype=float) for b in state["biases"]]
    mlp.sizes = tuple(state["sizes"])


def _hyper_to_dict(hyper: PpoHyperparams) -> dict:
    d = asdict(hyper)
    d["cost_mode"] = CostMode(hyper.cost_mode).value
    d["hidden_sizes"] = list(hyper.hidden_sizes)
    return d
