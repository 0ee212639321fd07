"""Rician uplink budget: minimum power meeting a latency-outage target.

A scheduled agent must push a fixed-size packet through a Rician fading link
within the latency budget except with probability at most epsilon. For a
strong line-of-sight link the required transmit power has a closed form built
on an approximate inversion of the first-order Marcum Q tail; a Monte Carlo
validator draws fading gains and measures the empirical outage so the
approximation can be checked end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, WeakLineOfSightError


@dataclass(frozen=True)
class ChannelParams:
    """Uplink constants (linear units; see ``from_config`` for dB helpers)."""

    system_gain: float = 1.0            # lumped antenna/frequency constant
    path_loss_exponent: float = 2.0
    bandwidth_hz: float = 5e6
    noise_density_w_per_hz: float = 10 ** (-11.5 / 10) * 1e-3 / 5e6
    rician_factor: float = 10 ** 1.5    # linear (15 dB)
    outage_epsilon: float = 1e-5
    latency_max_s: float = 5e-3
    packet_bits: float = 1024.0

    def __post_init__(self):
        for name in ("system_gain", "path_loss_exponent", "bandwidth_hz",
                     "noise_density_w_per_hz", "rician_factor",
                     "latency_max_s", "packet_bits"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not 0.0 < self.outage_epsilon < 0.5:
            raise InvalidInputError("outage_epsilon must lie in (0, 0.5)")
        if math.sqrt(2.0 * self.rician_factor) <= inverse_gaussian_q(self.outage_epsilon):
            raise WeakLineOfSightError(
                "sqrt(2G) must exceed Qinv(epsilon) for the strong-LoS power formula")

    @property
    def noise_power_w(self) -> float:
        """Total noise power over the allocated band (W * N0)."""
        return self.bandwidth_hz * self.noise_density_w_per_hz

    @classmethod
    def from_config(cls, rician_factor_db=15.0, noise_power_dbm=-11.5,
                    bandwidth_hz=5e6, **kwargs) -> "ChannelParams":
        """Build from dB-style config fields; noise_power_dbm is the total
        noise power over the band, converted to a density."""
        n0 = 10 ** (noise_power_dbm / 10) * 1e-3 / bandwidth_hz
        return cls(rician_factor=10 ** (rician_factor_db / 10),
                   noise_density_w_per_hz=n0, bandwidth_hz=bandwidth_hz,
                   **kwargs)


# Acklam's rational approximation of the standard normal quantile, refined by
# one Newton step on the tail equation; abs error well under 1e-10.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def _acklam_ppf(p: float) -> float:
    plow, phigh = 0.02425, 1 - 0.02425
    if p < plow:
        q = math.sqrt(-2 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
               ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    if p > phigh:
        return -_acklam_ppf(1 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
           (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)


def gaussian_q(z: float) -> float:
    """Standard normal tail probability P[Z > z]."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def inverse_gaussian_q(epsilon: float) -> float:
    """z such that the standard normal tail at z equals ``epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError("epsilon must lie in (0, 1)")
    z = -_acklam_ppf(epsilon)
    # Newton refinement on Q(z) - eps; Q'(z) = -pdf(z)
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    if pdf > 0:
        z = z + (gaussian_q(z) - epsilon) / pdf
    return z


def y_q(rician_factor: float, epsilon: float) -> float:
    """Closed-form approximation of the Marcum-Q tail threshold.

    Valid only in the strong line-of-sight regime sqrt(2G) > Qinv(epsilon)
    with Qinv(epsilon) != 0; outside it the log argument is non-positive or
    the correction term divides by zero.
    """
    q = inverse_gaussian_q(epsilon)
    if q == 0.0:
        raise WeakLineOfSightError("epsilon = 0.5 makes the correction term singular")
    s = math.sqrt(2.0 * rician_factor)
    if s <= q:
        raise WeakLineOfSightError(
            f"sqrt(2G)={s:.4f} <= Qinv(eps)={q:.4f}: weak-LoS regime unsupported")
    return s + math.log(s / (s - q)) / (2.0 * q) - q


def required_power(distance_m: float, params: ChannelParams) -> float:
    """Minimum transmit power (W) meeting the latency-outage constraint.

    Grows with the path-loss distance term d^alpha and with the rate demand
    2^(D / (tau_max W)) - 1.
    """
    if not distance_m > 0:
        raise InvalidInputError("distance must be positive")
    y = y_q(params.rician_factor, params.outage_epsilon)
    rate_demand = 2.0 ** (params.packet_bits
                          / (params.latency_max_s * params.bandwidth_hz)) - 1.0
    return (2.0 * params.noise_power_w * (1.0 + params.rician_factor) * rate_demand
            * distance_m ** params.path_loss_exponent
            / (y * y * params.system_gain))


def sample_rician_gain(rician_factor: float, rng, size=None):
    """Unit-mean Rician power gain |h|^2.

    h has a deterministic line-of-sight part sqrt(G/(G+1)) plus a circular
    complex Gaussian with total variance 1/(G+1); at G=0 this is a Rayleigh
    (exponential power) channel.
    """
    if rician_factor < 0:
        raise InvalidInputError("rician factor must be nonnegative")
    g = rician_factor
    los = math.sqrt(g / (g + 1.0))
    scatter_std = math.sqrt(1.0 / (2.0 * (g + 1.0)))
    shape = () if size is None else (size,)
    re = los + scatter_std * rng.standard_normal(shape)
    im = scatter_std * rng.standard_normal(shape)
    gain = re * re + im * im
    return float(gain) if size is None else gain


def snr(power_w: float, distance_m: float, gain, params: ChannelParams):
    """Instantaneous SNR: Gamma p G / (d^alpha W N0)."""
    return (params.system_gain * power_w * gain
            / (distance_m ** params.path_loss_exponent * params.noise_power_w))


def rate_bps(power_w: float, distance_m: float, gain, params: ChannelParams):
    """Shannon rate of the link under the drawn fading gain."""
    return params.bandwidth_hz * np.log2(1.0 + snr(power_w, distance_m, gain, params))


def outage_probability_mc(power_w: float, distance_m: float,
                          params: ChannelParams, n_trials: int, rng,
                          chunk: int = 1_000_000) -> float:
    """Fraction of fading draws whose rate misses D / tau_max."""
    if n_trials < 1:
        raise InvalidInputError("n_trials must be at least 1")
    if power_w <= 0:
        return 1.0
    demand = params.packet_bits / params.latency_max_s
    # rate < demand  <=>  gain < gain_threshold
    threshold_snr = 2.0 ** (demand / params.bandwidth_hz) - 1.0
    gain_threshold = (threshold_snr * distance_m ** params.path_loss_exponent
                      * params.noise_power_w / (params.system_gain * power_w))
    failures = 0
    remaining = n_trials
    while remaining > 0:
        n = min(chunk, remaining)
        gains = sample_rician_gain(params.rician_factor, rng, size=n)
        failures += int(np.count_nonzero(gains < gain_threshold))
        remaining -= n
    return failures / n_trials
