"""Link budget tests: tail inversion, power law, fading statistics, outage."""

import math

import numpy as np
import pytest
from scipy import special, stats

from twinloop import (ChannelParams, InvalidInputError, WeakLineOfSightError,
                      inverse_gaussian_q, outage_probability_mc,
                      required_power, sample_rician_gain, y_q)
from twinloop.channel import rate_bps, snr

G_15DB = 10 ** 1.5


def table_params(epsilon=1e-5, alpha=2.0):
    return ChannelParams.from_config(rician_factor_db=15.0,
                                     noise_power_dbm=-11.5,
                                     bandwidth_hz=5e6,
                                     outage_epsilon=epsilon,
                                     latency_max_s=5e-3,
                                     packet_bits=1024.0,
                                     system_gain=1.0,
                                     path_loss_exponent=alpha)


class TestInverseGaussianQ:
    def test_median(self):
        assert inverse_gaussian_q(0.5) == pytest.approx(0.0, abs=1e-12)

    def test_two_sigma_point(self):
        assert inverse_gaussian_q(0.0227501) == pytest.approx(2.0, abs=5e-6)

    def test_deep_tail(self):
        assert inverse_gaussian_q(1e-5) == pytest.approx(4.26489, abs=1e-5)

    def test_matches_high_precision_erfc_inversion(self):
        # oracle: z = sqrt(2) * erfcinv(2 eps)
        for eps in (0.4, 0.1, 0.01, 1e-3, 1e-6, 1e-9, 0.9, 0.999):
            oracle = math.sqrt(2.0) * float(special.erfcinv(2.0 * eps))
            assert abs(inverse_gaussian_q(eps) - oracle) <= 1e-10 * max(1, abs(oracle))

    def test_rejects_out_of_range(self):
        for eps in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(InvalidInputError):
                inverse_gaussian_q(eps)


class TestYq:
    def test_strong_los_value(self):
        # sqrt(2G)=7.9527, Qinv=4.26489 -> 3.7779
        assert y_q(G_15DB, 1e-5) == pytest.approx(3.778, abs=2e-3)

    def test_median_epsilon_rejected(self):
        with pytest.raises(WeakLineOfSightError):
            y_q(G_15DB, 0.5)

    def test_weak_los_rejected(self):
        # sqrt(2G) <= Qinv(eps): G = 1 (0 dB) against eps = 1e-5
        with pytest.raises(WeakLineOfSightError):
            y_q(1.0, 1e-5)


class TestRequiredPower:
    def test_reference_distance_power(self):
        # independent evaluation: 2*WN0*(1+G)*(2^0.04096-1)*400 / y^2
        p = required_power(20.0, table_params())
        assert p == pytest.approx(3.7279732302281303e-3, rel=1e-9)
        assert p == pytest.approx(3.7e-3, rel=2e-2)

    def test_distance_power_law(self):
        params = table_params()
        assert required_power(10.0, params) * 4 == pytest.approx(
            required_power(20.0, params), rel=1e-12)

    def test_vanishing_packet_size(self):
        small = ChannelParams.from_config(packet_bits=1e-9)
        assert required_power(20.0, small) < 1e-12

    def test_monotonicity_grid(self):
        base = dict(rician_factor_db=15.0, noise_power_dbm=-11.5,
                    bandwidth_hz=5e6, outage_epsilon=1e-3,
                    latency_max_s=5e-3, packet_bits=1024.0)
        p0 = required_power(10.0, ChannelParams.from_config(**base))
        for d in (11.0, 15.0, 20.0):
            assert required_power(d, ChannelParams.from_config(**base)) > p0
        for bits in (2048.0, 4096.0):
            cfg = dict(base, packet_bits=bits)
            assert required_power(10.0, ChannelParams.from_config(**cfg)) > p0
        for tau in (2.5e-3, 1e-3):
            cfg = dict(base, latency_max_s=tau)
            assert required_power(10.0, ChannelParams.from_config(**cfg)) > p0
        for w in (2.5e6, 1e6):
            # halving bandwidth raises the rate demand exponent faster than
            # the noise power drops over this grid
            cfg = dict(base, bandwidth_hz=w)
            n0 = 10 ** (-11.5 / 10) * 1e-3 / 5e6
            params = ChannelParams(system_gain=1.0, path_loss_exponent=2.0,
                                   bandwidth_hz=w, noise_density_w_per_hz=n0,
                                   rician_factor=G_15DB, outage_epsilon=1e-3,
                                   latency_max_s=5e-3, packet_bits=1024.0)
            assert required_power(10.0, params) > p0

    def test_invalid_distance(self):
        with pytest.raises(InvalidInputError):
            required_power(0.0, table_params())


class TestRicianGain:
    def test_pure_los_limit(self):
        gains = sample_rician_gain(1e12, np.random.default_rng(0), size=1000)
        np.testing.assert_allclose(gains, 1.0, atol=1e-4)

    def test_rayleigh_special_case(self):
        rng = np.random.default_rng(1)
        gains = sample_rician_gain(0.0, rng, size=200_000)
        # exponential(1): mean 1, P[g < x] = 1 - exp(-x)
        assert gains.mean() == pytest.approx(1.0, rel=0.02)
        for x in (0.5, 1.0, 2.0):
            assert np.mean(gains < x) == pytest.approx(1 - math.exp(-x), abs=0.01)

    def test_unit_mean_at_strong_los(self):
        rng = np.random.default_rng(2)
        n = 1_000_000
        gains = sample_rician_gain(G_15DB, rng, size=n)
        se = gains.std() / math.sqrt(n)
        assert abs(gains.mean() - 1.0) <= 3 * se
        assert gains.mean() == pytest.approx(1.0, rel=0.005)

    def test_negative_factor_rejected(self):
        with pytest.raises(InvalidInputError):
            sample_rician_gain(-1.0, np.random.default_rng(0))


class TestOutage:
    def test_zero_power_always_fails(self):
        params = table_params(epsilon=1e-2)
        assert outage_probability_mc(0.0, 20.0, params, 10, np.random.default_rng(0)) == 1.0

    def test_power_margin_suppresses_outage(self):
        params = table_params(epsilon=1e-2)
        p = 10.0 * required_power(20.0, params)
        outage = outage_probability_mc(p, 20.0, params, 100_000,
                                       np.random.default_rng(3))
        assert outage <= 1e-2

    def test_design_point_outage_near_target(self):
        # fast version of the acceptance check (1e5 draws)
        params = table_params(epsilon=1e-2)
        p = required_power(20.0, params)
        outage = outage_probability_mc(p, 20.0, params, 100_000,
                                       np.random.default_rng(4))
        assert 0.2 * 1e-2 <= outage <= 1.5 * 1e-2

    def test_shannon_rate_consistency(self):
        params = table_params()
        gain = 0.7
        power = 2e-3
        expected_snr = 1.0 * power * gain / (20.0 ** 2 * params.noise_power_w)
        assert snr(power, 20.0, gain, params) == pytest.approx(expected_snr, rel=1e-12)
        assert rate_bps(power, 20.0, gain, params) == pytest.approx(
            5e6 * math.log2(1 + expected_snr), rel=1e-12)

    def test_trial_count_validated(self):
        with pytest.raises(InvalidInputError):
            outage_probability_mc(1e-3, 20.0, table_params(), 0,
                                  np.random.default_rng(0))


class TestChannelParamsValidation:
    def test_weak_los_configuration_rejected(self):
        with pytest.raises(WeakLineOfSightError):
            ChannelParams.from_config(rician_factor_db=0.0, outage_epsilon=1e-5)

    def test_epsilon_range(self):
        with pytest.raises(InvalidInputError):
            ChannelParams.from_config(outage_epsilon=0.7)

    def test_noise_power_conversion(self):
        params = table_params()
        assert params.noise_power_w == pytest.approx(10 ** (-1.15) * 1e-3, rel=1e-12)
