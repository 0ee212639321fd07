"""Benchmark scheduling modes sharing the plant, fleet, estimator and channel.

PERFECT short-circuits estimation entirely (the twin is handed the true
state, zero covariance, zero uplink power). COST_GREEDY and ERROR_GREEDY
always query exactly min(C, M) agents, sorted by distance or by measurement
error, and fuse them through the filter. TRADITIONAL queries a fixed number
of randomly drawn agents (one per feature by default) and substitutes their
raw readings into the belief without any filtering.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from . import estimator, scheduler
from .errors import InvalidInputError
from .estimator import Belief
from .scheduler import ScheduleDecision


class SchedulingMode(str, Enum):
    REVERB = "reverb"
    PERFECT = "perfect"
    TRADITIONAL = "traditional"
    COST_GREEDY = "cost_greedy"
    ERROR_GREEDY = "error_greedy"


def baseline_schedule(mode: SchedulingMode, prior: Belief, fleet, capacity: int,
                      rng, observe_fn=None, thresholds=None, true_state=None,
                      traditional_count: int = 2) -> ScheduleDecision:
    """Per-interval decision for the non-adaptive benchmark modes."""
    mode = SchedulingMode(mode)
    if mode is SchedulingMode.REVERB:
        raise InvalidInputError("the adaptive mode is served by scheduler.schedule")

    caps = thresholds.effective_caps if thresholds is not None else None
    ratios = (np.diag(prior.cov) / caps) if caps is not None else None

    if mode is SchedulingMode.PERFECT:
        if true_state is None:
            raise InvalidInputError("PERFECT mode needs the true state")
        posterior = Belief(np.asarray(true_state, dtype=float),
                           np.zeros_like(prior.cov), prior.qi)
        return _decision((), posterior, caps, 0, ratios)

    if mode in (SchedulingMode.COST_GREEDY, SchedulingMode.ERROR_GREEDY):
        if mode is SchedulingMode.COST_GREEDY:
            key = lambda a: (a.distance_m, a.agent_id)
        else:
            key = lambda a: (a.error_size, a.agent_id)
        chosen = sorted(fleet, key=key)[:min(capacity, len(fleet))]
        if not chosen:
            return _decision((), prior.copy(), caps, 0, ratios)
        stacked = estimator.stack(chosen)
        if observe_fn is not None:
            values = np.concatenate([np.atleast_1d(observe_fn(a)) for a in chosen])
            posterior = estimator.update(prior, stacked, values)
        else:
            cov, _ = estimator.posterior_cov(prior.cov, stacked)
            posterior = Belief(prior.mean.copy(), cov, prior.qi)
        return _decision(tuple(a.agent_id for a in chosen), posterior, caps,
                         len(chosen), ratios)

    # TRADITIONAL: raw readings substituted into the belief, no filter
    # update. With one pick per interval the agent is uniform over the whole
    # fleet; with more picks they cover the features round-robin so the
    # policy sees a full noisy state.
    dim = prior.mean.shape[0]
    count = min(traditional_count, len(fleet))
    chosen = []
    pool = list(fleet)
    for i in range(count):
        if count < dim:
            options = pool
        else:
            feature = i % dim
            options = [a for a in pool
                       if np.any(a.observation_matrix[:, feature] != 0)]
            if not options:
                options = pool
        if not options:
            break
        pick = options[int(rng.integers(len(options)))]
        chosen.append(pick)
        pool.remove(pick)
    mean = prior.mean.copy()
    cov = prior.cov.copy()
    for agent in chosen:
        if observe_fn is None:
            continue
        values = np.atleast_1d(observe_fn(agent))
        for row, value in zip(agent.observation_matrix, values):
            k = int(np.nonzero(row)[0][0])
            mean[k] = value / row[k]
            cov[k, :] = 0.0
            cov[:, k] = 0.0
            cov[k, k] = agent.noise_cov[0, 0] / row[k] ** 2
    posterior = Belief(mean, cov, prior.qi)
    return _decision(tuple(a.agent_id for a in chosen), posterior, caps,
                     len(chosen), ratios)


def _decision(ids, posterior, caps, iterations, ratios):
    if caps is not None:
        satisfied = np.diag(posterior.cov) <= caps
    else:
        satisfied = np.ones(posterior.mean.shape[0], dtype=bool)
    return ScheduleDecision(selected_ids=ids, posterior=posterior,
                            satisfied=satisfied, iterations=iterations,
                            ratios_prior=ratios)
