"""Extended Kalman filter over the twin's belief.

``predict`` propagates the belief blindly through the plant model (the mean
through the full nonlinear map, the covariance through its Jacobian plus the
process noise). ``stack`` combines several agents' observation models into one
joint model, and ``update`` fuses the stacked observation vector. The
covariance update uses the Joseph form, which keeps the result symmetric
positive semidefinite under roundoff; it agrees with the plain (I - K H) P
form in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalFailureError

CONDITION_LIMIT = 1e12


@dataclass
class Belief:
    """Gaussian belief N(mean, cov) about the plant state at query interval qi."""

    mean: np.ndarray
    cov: np.ndarray
    qi: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = symmetrize(np.asarray(self.cov, dtype=float))

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def copy(self) -> "Belief":
        return Belief(self.mean.copy(), self.cov.copy(), self.qi)


@dataclass(frozen=True)
class StackedObservationModel:
    """Joint observation model of an ordered agent selection."""

    matrix: np.ndarray        # rows stacked in selection order
    noise_cov: np.ndarray     # block-diagonal, same order
    agent_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "matrix", np.atleast_2d(np.asarray(self.matrix, dtype=float)))
        object.__setattr__(self, "noise_cov", np.atleast_2d(np.asarray(self.noise_cov, dtype=float)))


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return 0.5 * (matrix + matrix.T)


def predict(belief: Belief, control, model) -> Belief:
    """Blind prediction: mean through f + B a, covariance through P Psi P^T + C_u.

    The mean update is deterministic; process noise enters only through the
    covariance inflation.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        jac = model.jacobian(belief.mean)
        mean = model.f(belief.mean) + model.control_matrix @ np.atleast_1d(control)
        cov = jac @ belief.cov @ jac.T + model.process_cov
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise NumericalFailureError("non-finite belief prediction",
                                        qi=belief.qi + 1)
        return Belief(mean, symmetrize(cov), belief.qi + 1)


def stack(selected) -> StackedObservationModel:
    """Stack the selected agents' observation rows / noise blocks in order."""
    selected = list(selected)
    if not selected:
        raise InvalidInputError("cannot stack an empty selection")
    ids = [a.agent_id for a in selected]
    if len(set(ids)) != len(ids):
        raise InvalidInputError(f"duplicate agent ids in selection: {ids}")
    rows = [np.atleast_2d(a.observation_matrix) for a in selected]
    blocks = [np.atleast_2d(a.noise_cov) for a in selected]
    matrix = np.vstack(rows)
    total = sum(b.shape[0] for b in blocks)
    noise = np.zeros((total, total))
    at = 0
    for b in blocks:
        d = b.shape[0]
        noise[at:at + d, at:at + d] = b
        at += d
    return StackedObservationModel(matrix, noise, tuple(ids))


def innovation_cov(prior_cov, stacked: StackedObservationModel) -> np.ndarray:
    h = stacked.matrix
    return stacked.noise_cov + h @ prior_cov @ h.T


def posterior_cov(prior_cov, stacked: StackedObservationModel):
    """Joseph-form posterior covariance and the Kalman gain (no observation values)."""
    h = stacked.matrix
    s = innovation_cov(prior_cov, stacked)
    if not np.all(np.isfinite(s)) or np.linalg.cond(s) > CONDITION_LIMIT:
        raise NumericalFailureError("ill-conditioned innovation covariance")
    gain = np.linalg.solve(s.T, (prior_cov @ h.T).T).T
    ikh = np.eye(prior_cov.shape[0]) - gain @ h
    cov = ikh @ prior_cov @ ikh.T + gain @ stacked.noise_cov @ gain.T
    return symmetrize(cov), gain


def update(prior: Belief, stacked: StackedObservationModel, values) -> Belief:
    """Fuse the stacked observation vector into the prior belief."""
    values = np.atleast_1d(np.asarray(values, dtype=float))
    h = stacked.matrix
    if h.shape[1] != prior.mean.shape[0]:
        raise InvalidInputError("observation matrix does not match state dimension")
    if values.shape[0] != h.shape[0]:
        raise InvalidInputError(
            f"observation vector length {values.shape[0]} != stacked rows {h.shape[0]}")
    cov, gain = posterior_cov(prior.cov, stacked)
    mean = prior.mean + gain @ (values - h @ prior.mean)
    if not np.all(np.isfinite(mean)):
        raise NumericalFailureError("non-finite posterior mean", qi=prior.qi)
    return Belief(mean, cov, prior.qi)


def moment_matched_initial_belief(position_range, velocity_variance=1e-4, qi=0) -> Belief:
    """Belief matching a uniform initial position and zero initial velocity."""
    lo, hi = position_range
    mean = np.array([0.5 * (lo + hi), 0.0])
    cov = np.diag([(hi - lo) ** 2 / 12.0, velocity_variance])
    return Belief(mean, cov, qi)
