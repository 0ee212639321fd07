"""Greedy value-of-information agent selection under per-feature variance caps.

Each query interval the twin must bring every feature's posterior variance
under the tighter of the twin's own cap and the accuracy the control agent
requested (effective cap = min(cap, 1/eta)). Starting from the blind prior,
the selector repeatedly picks the violated feature with the largest
variance-to-cap ratio among features still measurable by an available agent,
schedules the cheapest-error agent measuring it, and recomputes the joint
posterior covariance — observation values are not needed for that, so the
actual measurements are requested once, for the final selection. The loop
stops when every cap holds, the uplink capacity is exhausted, or no violated
feature has an agent left.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import estimator
from .errors import InvalidInputError
from .estimator import Belief


def effective_thresholds(variance_caps, accuracy_request) -> np.ndarray:
    """Elementwise min(cap_k, 1/eta_k), with 1/0 treated as +inf."""
    caps = np.asarray(variance_caps, dtype=float)
    eta = np.asarray(accuracy_request, dtype=float)
    if caps.shape != eta.shape:
        raise InvalidInputError("caps and accuracy request differ in length")
    if np.any(caps <= 0):
        raise InvalidInputError("variance caps must be positive")
    if np.any(eta < 0):
        raise InvalidInputError("accuracy requests must be nonnegative")
    with np.errstate(divide="ignore"):
        requested = np.where(eta > 0, 1.0 / np.where(eta > 0, eta, 1.0), np.inf)
    return np.minimum(caps, requested)


@dataclass(frozen=True)
class QosThresholds:
    """Per-feature variance caps combined with the requested accuracy vector."""

    variance_caps: np.ndarray
    accuracy_request: np.ndarray = None

    def __post_init__(self):
        caps = np.asarray(self.variance_caps, dtype=float)
        eta = (np.zeros_like(caps) if self.accuracy_request is None
               else np.asarray(self.accuracy_request, dtype=float))
        object.__setattr__(self, "variance_caps", caps)
        object.__setattr__(self, "accuracy_request", eta)
        object.__setattr__(self, "effective_caps", effective_thresholds(caps, eta))

    @property
    def dim(self) -> int:
        return self.variance_caps.shape[0]


@dataclass
class ScheduleDecision:
    """Outcome of one query interval's agent selection."""

    selected_ids: tuple
    posterior: Belief
    satisfied: np.ndarray
    iterations: int
    ratios_prior: np.ndarray = None  # prior diag / effective caps, for tracing


def schedule(prior: Belief, thresholds: QosThresholds, fleet, capacity: int,
             observe_fn=None) -> ScheduleDecision:
    """Select at most ``capacity`` agents so the posterior meets the caps.

    ``observe_fn(agent)`` supplies the measurement vector of a scheduled
    agent; when omitted the decision carries the covariance-only posterior
    with the prior mean (enough for selection analysis and tests).
    """
    caps = thresholds.effective_caps
    if caps.shape[0] != prior.mean.shape[0]:
        raise InvalidInputError("threshold dimension does not match belief")
    if fleet and fleet[0].observation_matrix.shape[1] != prior.mean.shape[0]:
        raise InvalidInputError("fleet observation matrices do not match belief")
    if capacity < 0:
        raise InvalidInputError("capacity must be nonnegative")

    prior_diag = np.diag(prior.cov)
    ratios_prior = prior_diag / caps
    cov = prior.cov
    available = list(fleet)
    chosen = []
    iterations = 0

    while len(chosen) < capacity:
        diag = np.diag(cov)
        violated = np.nonzero(diag > caps)[0]
        if violated.size == 0:
            break
        # candidate features: violated AND measurable by an available agent
        candidates = [k for k in violated
                      if any(np.any(a.observation_matrix[:, k] != 0) for a in available)]
        if not candidates:
            break
        # largest ratio wins; ties break on the lowest feature index
        ratios = diag[candidates] / caps[candidates]
        best = int(np.argmax(ratios))
        k_star = candidates[best]
        pool = [a for a in available if np.any(a.observation_matrix[:, k_star] != 0)]
        # cheapest measurement error, ties on lowest agent id
        agent = min(pool, key=lambda a: (a.error_size, a.agent_id))
        chosen.append(agent)
        available.remove(agent)
        iterations += 1
        cov, _ = estimator.posterior_cov(prior.cov, estimator.stack(chosen))

    if chosen:
        stacked = estimator.stack(chosen)
        if observe_fn is not None:
            values = np.concatenate(
                [np.atleast_1d(observe_fn(a)) for a in chosen])
            posterior = estimator.update(prior, stacked, values)
        else:
            cov, _ = estimator.posterior_cov(prior.cov, stacked)
            posterior = Belief(prior.mean.copy(), cov, prior.qi)
    else:
        posterior = prior.copy()

    satisfied = np.diag(posterior.cov) <= caps
    return ScheduleDecision(
        selected_ids=tuple(a.agent_id for a in chosen),
        posterior=posterior,
        satisfied=satisfied,
        iterations=iterations,
        ratios_prior=ratios_prior,
    )


def weighted_objective(decision: ScheduleDecision, thresholds: QosThresholds,
                       accuracy_weight: float, powers) -> float:
    """Diagnostic mixing residual threshold violations with spent power.

    (1 - w) * sum_k max(post_k/cap_k - 1, 0) + w * sum(powers); logged per
    query interval, never optimized directly.
    """
    if not 0.0 <= accuracy_weight <= 1.0:
        raise InvalidInputError("accuracy_weight must lie in [0, 1]")
    ratios = np.diag(decision.posterior.cov) / thresholds.effective_caps
    hinge = np.clip(ratios - 1.0, 0.0, None).sum()
    return float((1.0 - accuracy_weight) * hinge
                 + accuracy_weight * float(np.sum(powers)))
