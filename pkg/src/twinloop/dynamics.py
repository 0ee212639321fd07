"""Plant models driven at discrete query intervals.

Two plants are registered: the continuous-force mountain car (the nonlinear
benchmark the control loop is evaluated on) and a 2-state linear system used
by the estimator oracle tests. Both expose the same surface: ``step`` advances
the true state with process noise, ``f``/``control_matrix``/``jacobian``
describe the noiseless state-update map the estimator linearizes, ``is_goal``
tests termination.

The mountain-car update follows the reference environment semantics: the
velocity is updated (force, gravity, noise) and clamped first, then the
position is advanced with the *new* velocity and clamped. Written as a full
next-state map this is

    vel' = vel + force_gain*a - gravity*cos(3*pos)
    pos' = pos + vel'

so the control enters both components and the Jacobian picks up the gravity
slope in both rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class MountainCarParams:
    """Constants of the hill-climb plant (reference-environment values)."""

    gravity: float = 0.0025
    force_gain: float = 0.0015
    goal_position: float = 0.45
    position_bounds: tuple = (-1.2, 0.6)
    velocity_bounds: tuple = (-0.07, 0.07)
    initial_position_range: tuple = (-0.6, -0.4)
    episode_cap: int = 999

    def __post_init__(self):
        if self.gravity <= 0 or self.force_gain <= 0:
            raise InvalidInputError("gravity and force_gain must be positive")


class MountainCar:
    """Nonlinear plant: 2-dimensional state (position, velocity), scalar force."""

    dim = 2
    control_dim = 1

    def __init__(self, params: MountainCarParams = MountainCarParams(),
                 process_cov=None):
        self.params = params
        if process_cov is None:
            process_cov = np.diag([1e-4 ** 2, 1e-5 ** 2])
        process_cov = np.asarray(process_cov, dtype=float)
        _check_psd(process_cov, "process_cov")
        self.process_cov = process_cov
        self._noise_scale = _noise_factor(process_cov)
        # Control matrix of the composed next-state map: the force moves the
        # velocity, and the new velocity immediately moves the position.
        g = params.force_gain
        self.control_matrix = np.array([[g], [g]])

    def f(self, state) -> np.ndarray:
        """Noiseless zero-control next-state map, without clamping."""
        pos, vel = state
        new_vel = vel - self.params.gravity * np.cos(3.0 * pos)
        return np.array([pos + new_vel, new_vel])

    def jacobian(self, state) -> np.ndarray:
        """d f / d state. Matches central finite differences of ``f``."""
        state = np.asarray(state, dtype=float)
        if not np.all(np.isfinite(state)):
            raise InvalidInputError("non-finite state")
        slope = 3.0 * self.params.gravity * np.sin(3.0 * state[0])
        return np.array([[1.0 + slope, 1.0],
                         [slope, 1.0]])

    def step(self, state, control: float, rng) -> np.ndarray:
        """Advance the true plant one query interval.

        Process noise is drawn from ``process_cov`` and added inside the
        update (velocity component before the velocity clamp, position
        component before the position clamp), so the clamp invariants hold
        unconditionally.
        """
        state = np.asarray(state, dtype=float)
        if state.shape != (2,) or not np.all(np.isfinite(state)):
            raise InvalidInputError(f"invalid state {state!r}")
        if not np.isfinite(control):
            raise InvalidInputError(f"invalid control {control!r}")
        control = float(np.clip(control, -1.0, 1.0))
        p = self.params
        if self._noise_scale is None:
            u = np.zeros(2)
        else:
            u = self._noise_scale @ rng.standard_normal(2)
        vel = state[1] + p.force_gain * control - p.gravity * np.cos(3.0 * state[0]) + u[1]
        vel = float(np.clip(vel, *p.velocity_bounds))
        pos = state[0] + vel + u[0]
        pos = float(np.clip(pos, *p.position_bounds))
        return np.array([pos, vel])

    def is_goal(self, state) -> bool:
        return bool(state[0] >= self.params.goal_position)

    def initial_state(self, rng) -> np.ndarray:
        lo, hi = self.params.initial_position_range
        return np.array([rng.uniform(lo, hi), 0.0])

    @property
    def episode_cap(self) -> int:
        return self.params.episode_cap


class LinearPlant:
    """Linear test system s' = A s + B a + u. Never reaches a goal."""

    def __init__(self, transition, control_matrix, process_cov, episode_cap=999,
                 initial_mean=None, initial_cov=None):
        self.transition = np.asarray(transition, dtype=float)
        self.control_matrix = np.asarray(control_matrix, dtype=float)
        process_cov = np.asarray(process_cov, dtype=float)
        _check_psd(process_cov, "process_cov")
        self.process_cov = process_cov
        self._noise_scale = _noise_factor(process_cov)
        self.dim = self.transition.shape[0]
        self.control_dim = self.control_matrix.shape[1]
        self.episode_cap = episode_cap
        self.initial_mean = (np.zeros(self.dim) if initial_mean is None
                             else np.asarray(initial_mean, dtype=float))
        self.initial_cov = (np.eye(self.dim) if initial_cov is None
                            else np.asarray(initial_cov, dtype=float))

    def f(self, state) -> np.ndarray:
        return self.transition @ np.asarray(state, dtype=float)

    def jacobian(self, state) -> np.ndarray:
        return self.transition.copy()

    def step(self, state, control, rng) -> np.ndarray:
        state = np.asarray(state, dtype=float)
        if not np.all(np.isfinite(state)):
            raise InvalidInputError(f"invalid state {state!r}")
        u = (self._noise_scale @ rng.standard_normal(self.dim)
             if self._noise_scale is not None else np.zeros(self.dim))
        return self.f(state) + self.control_matrix @ np.atleast_1d(control) + u

    def is_goal(self, state) -> bool:
        return False

    def initial_state(self, rng) -> np.ndarray:
        if (self.initial_cov == 0).all():
            return self.initial_mean.copy()
        return rng.multivariate_normal(self.initial_mean, self.initial_cov)


def build_mountain_car(process_noise_std=(1e-4, 1e-5), **kwargs) -> MountainCar:
    sp, sv = process_noise_std
    return MountainCar(MountainCarParams(**kwargs),
                       process_cov=np.diag([sp ** 2, sv ** 2]))


def build_linear_2d(process_noise_std=(1e-2, 1e-3), **kwargs) -> LinearPlant:
    sp, sv = process_noise_std
    return LinearPlant(transition=[[1.0, 1.0], [0.0, 1.0]],
                       control_matrix=[[0.0], [1.0]],
                       process_cov=np.diag([sp ** 2, sv ** 2]),
                       **kwargs)


PLANT_REGISTRY = {
    "mountain_car": build_mountain_car,
    "linear_2d": build_linear_2d,
}


def _check_psd(matrix, name):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidInputError(f"{name} must be square")
    if not np.allclose(matrix, matrix.T, atol=1e-12):
        raise InvalidInputError(f"{name} must be symmetric")
    eigvals = np.linalg.eigvalsh(matrix)
    if eigvals.min() < -1e-12:
        raise InvalidInputError(f"{name} must be positive semidefinite")


def _noise_factor(cov):
    """Square-root factor used to draw process noise, or None when cov is zero."""
    if (cov == 0).all():
        return None
    # eigh-based root tolerates semidefinite covariances (Cholesky does not)
    vals, vecs = np.linalg.eigh(cov)
    return vecs @ np.diag(np.sqrt(np.clip(vals, 0.0, None)))
