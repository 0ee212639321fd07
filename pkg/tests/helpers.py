"""Shared test oracles: batch Bayesian least squares, Marcum Q, finite differences."""

import numpy as np
from scipy import stats

from twinloop import Belief, SensingAgentSpec


def batch_linear_gaussian_posterior(transition, control_matrix, process_cov,
                                    initial_mean, initial_cov, controls,
                                    observations):
    """Exact filtered marginals of a linear-Gaussian chain, by brute force.

    ``observations[t]`` is a list of (H, R, o) triples received at step t+1
    (1-based chain positions; the initial state is position 0). For each t,
    the posterior over the whole chain s_0..s_t given data up to t is formed
    in information (precision) space and the marginal of s_t extracted.
    Returns a list of (mean_t, cov_t), one entry per step 1..T.
    """
    a = np.asarray(transition, dtype=float)
    b = np.asarray(control_matrix, dtype=float)
    q_inv = np.linalg.inv(np.asarray(process_cov, dtype=float))
    p0_inv = np.linalg.inv(np.asarray(initial_cov, dtype=float))
    k = a.shape[0]
    results = []
    t_total = len(observations)
    for t in range(1, t_total + 1):
        dim = k * (t + 1)
        lam = np.zeros((dim, dim))
        eta = np.zeros(dim)
        lam[:k, :k] += p0_inv
        eta[:k] += p0_inv @ np.asarray(initial_mean, dtype=float)
        for i in range(1, t + 1):
            sl_prev = slice((i - 1) * k, i * k)
            sl_cur = slice(i * k, (i + 1) * k)
            drive = b @ np.atleast_1d(controls[i - 1])
            lam[sl_prev, sl_prev] += a.T @ q_inv @ a
            lam[sl_prev, sl_cur] += -a.T @ q_inv
            lam[sl_cur, sl_prev] += -q_inv @ a
            lam[sl_cur, sl_cur] += q_inv
            eta[sl_prev] += -a.T @ q_inv @ drive
            eta[sl_cur] += q_inv @ drive
            for h, r, o in observations[i - 1]:
                h = np.atleast_2d(h)
                r_inv = np.linalg.inv(np.atleast_2d(r))
                lam[sl_cur, sl_cur] += h.T @ r_inv @ h
                eta[sl_cur] += h.T @ r_inv @ np.atleast_1d(o)
        cov_full = np.linalg.inv(lam)
        mean_full = cov_full @ eta
        sl = slice(t * k, (t + 1) * k)
        results.append((mean_full[sl], cov_full[sl, sl]))
    return results


def marcum_q1(a, b):
    """First-order Marcum Q via the noncentral chi-square tail."""
    return stats.ncx2.sf(b * b, 2, a * a)


def invert_marcum_tail(rician_factor, epsilon, hi=None):
    """y solving 1 - Q1(sqrt(2G), y) = epsilon, by bisection."""
    a = np.sqrt(2.0 * rician_factor)
    lo, hi = 0.0, hi or (a + 10.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 1.0 - marcum_q1(a, mid) < epsilon:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def finite_difference_gradient(fn, arrays, step=1e-5):
    """Central finite differences of scalar fn() w.r.t. each array, in place."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + step
            hi = fn()
            arr[idx] = orig - step
            lo = fn()
            arr[idx] = orig
            g[idx] = (hi - lo) / (2.0 * step)
            it.iternext()
        grads.append(g)
    return grads


def relative_gradient_error(analytic, numeric):
    """Norm-based relative disagreement between two gradient collections."""
    a = np.concatenate([np.ravel(g) for g in analytic])
    n = np.concatenate([np.ravel(g) for g in numeric])
    denom = max(np.linalg.norm(n), np.linalg.norm(a), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def scalar_agent(agent_id, feature, variance, distance=5.0, dim=2):
    h = np.zeros((1, dim))
    h[0, feature] = 1.0
    return SensingAgentSpec(agent_id=agent_id, observation_matrix=h,
                            noise_cov=np.array([[variance]]),
                            distance_m=distance)


def diag_belief(*variances, mean=None, qi=0):
    k = len(variances)
    return Belief(np.zeros(k) if mean is None else np.asarray(mean, float),
                  np.diag(variances), qi)
