"""Selection algorithm tests: thresholds, greedy loop, diagnostics."""

import itertools

import numpy as np
import pytest

from twinloop import (Belief, InvalidInputError, QosThresholds,
                      effective_thresholds, schedule, weighted_objective)
from twinloop.estimator import posterior_cov, stack
from tests.helpers import diag_belief, scalar_agent


class TestEffectiveThresholds:
    def test_zero_request_keeps_twin_caps(self):
        np.testing.assert_allclose(
            effective_thresholds([0.01, 0.001], [0.0, 0.0]), [0.01, 0.001])

    def test_tight_request_overrides_cap(self):
        np.testing.assert_allclose(
            effective_thresholds([0.01, 0.001], [1000.0, 0.0]),
            [0.001, 0.001])

    def test_loose_request_is_ignored(self):
        np.testing.assert_allclose(
            effective_thresholds([0.01, 0.001], [10.0, 10.0]), [0.01, 0.001])

    def test_invalid_inputs(self):
        with pytest.raises(InvalidInputError):
            effective_thresholds([0.01], [0.0, 0.0])
        with pytest.raises(InvalidInputError):
            effective_thresholds([-0.01, 0.001], [0.0, 0.0])
        with pytest.raises(InvalidInputError):
            effective_thresholds([0.01, 0.001], [-1.0, 0.0])


def basic_thresholds(eta=(0.0, 0.0)):
    return QosThresholds(np.array([0.01, 0.001]), np.array(eta))


class TestScheduleBranches:
    def test_empty_set_when_prior_satisfies(self):
        prior = diag_belief(0.005, 0.0005)
        fleet = [scalar_agent(1, 0, 0.01), scalar_agent(2, 1, 0.001)]
        decision = schedule(prior, basic_thresholds(), fleet, capacity=10)
        assert decision.selected_ids == ()
        assert decision.iterations == 0
        np.testing.assert_allclose(decision.posterior.cov, prior.cov)
        assert decision.satisfied.all()

    def test_single_position_agent_run(self):
        prior = diag_belief(0.02, 0.0005)
        fleet = [scalar_agent(1, 0, 0.01), scalar_agent(2, 1, 0.001)]
        decision = schedule(prior, basic_thresholds(), fleet, capacity=10)
        assert decision.selected_ids == (1,)
        assert decision.iterations == 1
        assert decision.posterior.cov[0, 0] == pytest.approx(
            0.02 * 0.01 / 0.03, rel=1e-12)
        assert decision.satisfied.all()

    def test_zero_capacity_with_violation(self):
        prior = diag_belief(0.02, 0.0005)
        fleet = [scalar_agent(1, 0, 0.01)]
        decision = schedule(prior, basic_thresholds(), fleet, capacity=0)
        assert decision.selected_ids == ()
        assert not decision.satisfied[0]
        assert decision.satisfied[1]

    def test_unreachable_feature_stops_cleanly(self):
        # velocity violated but only position agents available
        prior = diag_belief(0.005, 0.01)
        fleet = [scalar_agent(1, 0, 0.01), scalar_agent(2, 0, 0.02)]
        decision = schedule(prior, basic_thresholds(), fleet, capacity=10)
        assert decision.selected_ids == ()
        assert not decision.satisfied[1]

    def test_min_error_agent_selected_for_target_feature(self):
        prior = diag_belief(0.05, 0.0005)
        fleet = [scalar_agent(1, 0, 0.03), scalar_agent(2, 0, 0.004),
                 scalar_agent(3, 0, 0.01)]
        decision = schedule(prior, basic_thresholds(), fleet, capacity=1)
        assert decision.selected_ids == (2,)

    def test_observe_fn_supplies_posterior_mean(self):
        prior = diag_belief(0.02, 0.0005, mean=[0.0, 0.0])
        agent = scalar_agent(1, 0, 0.01)
        decision = schedule(prior, basic_thresholds(), [agent], capacity=10,
                            observe_fn=lambda a: np.array([0.3]))
        gain = 0.02 / 0.03
        assert decision.posterior.mean[0] == pytest.approx(gain * 0.3, rel=1e-12)

    def test_dimension_mismatch_rejected(self):
        prior = diag_belief(0.02, 0.0005)
        with pytest.raises(InvalidInputError):
            schedule(prior, QosThresholds(np.array([0.01])), [], capacity=1)


class TestScheduleProperties:
    def _random_instance(self, rng):
        cov = np.diag(10.0 ** rng.uniform(-4, -1, size=2))
        prior = Belief(rng.normal(size=2), cov)
        caps = 10.0 ** rng.uniform(-4, -1.5, size=2)
        eta = np.where(rng.random(2) < 0.5, 0.0, 10.0 ** rng.uniform(0, 3, size=2))
        m = int(rng.integers(2, 9))
        fleet = [scalar_agent(i + 1, (i % 2 if m > 1 else 0),
                              float(10 ** rng.uniform(-4, -1)),
                              distance=float(rng.uniform(1, 20)))
                 for i in range(m)]
        capacity = int(rng.integers(0, m + 2))
        return prior, QosThresholds(caps, eta), fleet, capacity

    def test_randomized_invariants(self):
        rng = np.random.default_rng(123)
        for _ in range(1000):
            prior, thresholds, fleet, capacity = self._random_instance(rng)
            decision = schedule(prior, thresholds, fleet, capacity)
            # capacity and termination
            assert len(decision.selected_ids) <= capacity
            assert decision.iterations <= capacity
            # no re-selection
            assert len(set(decision.selected_ids)) == len(decision.selected_ids)
            # empty-set branch is exact
            pre_ok = np.all(np.diag(prior.cov) <= thresholds.effective_caps)
            if pre_ok:
                assert decision.selected_ids == ()
            elif capacity > 0 and any(
                    np.diag(prior.cov)[k] > thresholds.effective_caps[k]
                    and any(np.any(a.observation_matrix[:, k] != 0) for a in fleet)
                    for k in range(2)):
                assert len(decision.selected_ids) >= 1
            # posterior diagonal never above prior diagonal
            assert np.all(np.diag(decision.posterior.cov)
                          <= np.diag(prior.cov) * (1 + 1e-10) + 1e-15)

    def test_monotone_progress_on_selected_feature(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            prior, thresholds, fleet, capacity = self._random_instance(rng)
            if capacity == 0:
                continue
            running_cov = prior.cov
            chosen = []
            decision = schedule(prior, thresholds, fleet, capacity)
            for agent_id in decision.selected_ids:
                agent = next(a for a in fleet if a.agent_id == agent_id)
                feature = agent.measured_features[0]
                before = running_cov[feature, feature]
                chosen.append(agent)
                running_cov, _ = posterior_cov(prior.cov, stack(chosen))
                assert running_cov[feature, feature] < before

    def test_greedy_meets_thresholds_when_bruteforce_can(self):
        rng = np.random.default_rng(42)
        for _ in range(300):
            cov = np.diag(10.0 ** rng.uniform(-3.5, -1, size=2))
            prior = Belief(np.zeros(2), cov)
            caps = 10.0 ** rng.uniform(-4, -1.5, size=2)
            thresholds = QosThresholds(caps)
            m = int(rng.integers(2, 7))
            fleet = [scalar_agent(i + 1, i % 2, float(10 ** rng.uniform(-4, -1)))
                     for i in range(m)]
            capacity = int(rng.integers(1, 4))

            def feasible(subset):
                if not subset:
                    return bool(np.all(np.diag(prior.cov) <= caps))
                post, _ = posterior_cov(prior.cov, stack(list(subset)))
                return bool(np.all(np.diag(post) <= caps))

            brute_can = any(
                feasible(combo)
                for r in range(0, capacity + 1)
                for combo in itertools.combinations(fleet, r))
            decision = schedule(prior, thresholds, fleet, capacity)
            if brute_can:
                assert decision.satisfied.all(), (
                    prior.cov, caps, [(a.agent_id, a.noise_cov[0, 0]) for a in fleet],
                    capacity, decision)


class TestWeightedObjective:
    def test_pure_power_when_thresholds_met(self):
        prior = diag_belief(0.005, 0.0005)
        decision = schedule(prior, basic_thresholds(), [], capacity=0)
        value = weighted_objective(decision, basic_thresholds(), 1.0,
                                   [0.001, 0.002])
        assert value == pytest.approx(0.003)

    def test_pure_hinge_for_empty_schedule(self):
        prior = diag_belief(0.02, 0.0005)   # ratio 2 on position
        decision = schedule(prior, basic_thresholds(), [], capacity=0)
        value = weighted_objective(decision, basic_thresholds(), 0.0, [])
        assert value == pytest.approx(1.0)

    def test_mixed_weight(self):
        prior = diag_belief(0.02, 0.0005)
        decision = schedule(prior, basic_thresholds(), [], capacity=0)
        value = weighted_objective(decision, basic_thresholds(), 0.5, [0.004])
        assert value == pytest.approx(0.502)

    def test_weight_range_enforced(self):
        prior = diag_belief(0.005, 0.0005)
        decision = schedule(prior, basic_thresholds(), [], capacity=0)
        with pytest.raises(InvalidInputError):
            weighted_objective(decision, basic_thresholds(), 1.5, [])
