"""Sensing agent fleet: placement, linear noisy observations, coverage queries.

Each generated agent measures one scalar state feature through a one-row
observation matrix; its noise variance is drawn log-uniformly between the
bounds of the supplied level list and its distance to the access point
uniformly on (min_distance, max_distance]. Fleets serialize to plain JSON so
an experiment can be replayed exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidInputError

DEFAULT_MIN_DISTANCE_M = 1.0


@dataclass(frozen=True)
class SensingAgentSpec:
    """One sensor: observation map, noise covariance, uplink distance."""

    agent_id: int
    observation_matrix: np.ndarray  # (D, K)
    noise_cov: np.ndarray           # (D, D), positive definite
    distance_m: float

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.observation_matrix, dtype=float))
        c = np.atleast_2d(np.asarray(self.noise_cov, dtype=float))
        object.__setattr__(self, "observation_matrix", h)
        object.__setattr__(self, "noise_cov", c)
        if c.shape[0] != c.shape[1] or c.shape[0] != h.shape[0]:
            raise InvalidInputError("noise covariance shape does not match observation rows")
        if not np.allclose(c, c.T, atol=1e-12):
            raise InvalidInputError("noise covariance must be symmetric")
        if np.linalg.eigvalsh(c).min() <= 0:
            raise InvalidInputError("noise covariance must be positive definite")
        if np.any(np.all(h == 0, axis=1)):
            raise InvalidInputError("observation matrix has an all-zero row")
        if not self.distance_m > 0:
            raise InvalidInputError("distance must be positive")
        object.__setattr__(self, "_noise_scale", np.linalg.cholesky(c))

    @property
    def measured_features(self) -> tuple:
        """Indices of state features this agent's observation depends on."""
        return tuple(np.nonzero(np.any(self.observation_matrix != 0, axis=0))[0])

    @property
    def error_size(self) -> float:
        """Scalar summary of the measurement error (trace of the covariance)."""
        return float(np.trace(self.noise_cov))


@dataclass(frozen=True)
class Observation:
    agent_id: int
    values: np.ndarray
    qi: int = 0

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("observation values must be finite")


def observe(agent: SensingAgentSpec, true_state, rng, qi: int = 0,
            noiseless: bool = False) -> Observation:
    """Draw o = H s + w with w ~ N(0, C_w); ``noiseless`` skips w (test only)."""
    state = np.asarray(true_state, dtype=float)
    if state.shape[0] != agent.observation_matrix.shape[1]:
        raise InvalidInputError(
            f"state dim {state.shape[0]} incompatible with observation matrix "
            f"{agent.observation_matrix.shape}")
    values = agent.observation_matrix @ state
    if not noiseless:
        values = values + agent._noise_scale @ rng.standard_normal(values.shape[0])
    return Observation(agent.agent_id, values, qi)


def place_agents(count: int, max_distance_m: float, position_noise_levels,
                 velocity_noise_levels, rng, state_dim: int = 2,
                 min_distance_m: float = DEFAULT_MIN_DISTANCE_M):
    """Generate a fleet of single-feature agents covering all state features.

    Features are assigned round-robin (agent i measures feature i mod K), so
    any fleet with count >= state_dim covers every feature. Noise variances
    are drawn log-uniformly between min and max of the level list for the
    assigned feature.
    """
    if count < state_dim:
        raise ConfigurationError(
            f"{count} agents cannot cover {state_dim} features")
    if max_distance_m <= min_distance_m:
        raise ConfigurationError("max_distance_m must exceed min_distance_m")
    level_lists = [position_noise_levels, velocity_noise_levels]
    level_lists += [velocity_noise_levels] * (state_dim - 2)
    for k, levels in enumerate(level_lists[:state_dim]):
        if levels is None or len(levels) == 0 or min(levels) <= 0:
            raise ConfigurationError(f"no valid noise levels for feature {k}")
    fleet = []
    for i in range(count):
        feature = i % state_dim
        levels = level_lists[feature]
        lo, hi = min(levels), max(levels)
        variance = lo if lo == hi else float(
            np.exp(rng.uniform(np.log(lo), np.log(hi))))
        # distance uniform on (min, max]
        distance = max_distance_m - (max_distance_m - min_distance_m) * rng.uniform()
        h = np.zeros((1, state_dim))
        h[0, feature] = 1.0
        fleet.append(SensingAgentSpec(
            agent_id=i + 1, observation_matrix=h,
            noise_cov=np.array([[variance]]), distance_m=float(distance)))
    return fleet


def agents_measuring(fleet, feature: int):
    """Agents whose observation matrix has a nonzero entry in ``feature``'s column."""
    return [a for a in fleet if np.any(a.observation_matrix[:, feature] != 0)]


def covers_all_features(fleet, state_dim: int) -> bool:
    seen = set()
    for agent in fleet:
        seen.update(agent.measured_features)
    return seen >= set(range(state_dim))


def fleet_to_json(fleet, state_dim: int = 2) -> str:
    """Serialize a single-feature fleet to JSON (id, feature, variance, distance)."""
    records = []
    for agent in fleet:
        features = agent.measured_features
        if len(features) != 1 or agent.observation_matrix.shape != (1, state_dim):
            raise InvalidInputError(
                "only single-feature fleets are serializable")
        records.append({
            "id": agent.agent_id,
            "feature": int(features[0]),
            "variance": float(agent.noise_cov[0, 0]),
            "distance": agent.distance_m,
        })
    return json.dumps({"state_dim": state_dim, "agents": records}, indent=2)


def fleet_from_json(text: str):
    data = json.loads(text)
    state_dim = int(data["state_dim"])
    fleet = []
    for rec in data["agents"]:
        h = np.zeros((1, state_dim))
        h[0, int(rec["feature"])] = 1.0
        fleet.append(SensingAgentSpec(
            agent_id=int(rec["id"]), observation_matrix=h,
            noise_cov=np.array([[float(rec["variance"])]]),
            distance_m=float(rec["distance"])))
    return fleet
