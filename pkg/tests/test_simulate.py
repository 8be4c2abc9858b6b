import numpy as np
import pytest
import scipy.stats

from mmhp import (ModelParams, residuals, simulate_mmhp_continuous,
                  simulate_mmhp_delta, stationary_distribution)


def paper_like_params(delta=0.1):
    return ModelParams(mu=[1.0, 1.0], alpha=[1.0, 4.0], beta=[2.0, 10.0],
                       Q=[[-1.0, 1.0], [1.0, -1.0]], xi0=[0.5, 0.5], delta=delta)


class TestDeltaSimulator:
    def test_poisson_count_concentration(self):
        p = ModelParams(mu=[2.0], alpha=[0.0], beta=[1.0], Q=[[0.0]], xi0=[1.0],
                        delta=0.5)
        sim = simulate_mmhp_delta(p, horizon=1e4, seed=0)
        expected = 2.0 * 1e4
        assert abs(sim.events.K - expected) < 3 * np.sqrt(expected)

    def test_frozen_chain_single_hidden_entry(self):
        p = ModelParams(mu=[1.0, 3.0], alpha=[0.0, 0.0], beta=[1.0, 1.0],
                        Q=np.zeros((2, 2)), xi0=[1.0, 0.0], delta=0.5)
        sim = simulate_mmhp_delta(p, n_events=200, seed=1)
        assert sim.hidden_times.shape == (1,)
        assert sim.hidden_states[0] == 0

    def test_occupancy_near_stationary(self):
        p = paper_like_params()
        sim = simulate_mmhp_delta(p, horizon=1e4, seed=2)
        pi = stationary_distribution(p.Q)
        assert np.allclose(sim.occupancy(), pi, atol=0.05)

    def test_deterministic_given_seed(self):
        p = paper_like_params()
        a = simulate_mmhp_delta(p, n_events=500, seed=33)
        b = simulate_mmhp_delta(p, n_events=500, seed=33)
        assert np.array_equal(a.events.times, b.events.times)
        assert np.array_equal(a.hidden_times, b.hidden_times)
        assert np.array_equal(a.hidden_states, b.hidden_states)
        c = simulate_mmhp_delta(p, n_events=500, seed=34)
        assert not np.array_equal(a.events.times, c.events.times)

    def test_stop_by_count_sets_horizon_to_last_event(self):
        p = paper_like_params()
        sim = simulate_mmhp_delta(p, n_events=50, seed=3)
        assert sim.events.K == 50
        assert sim.events.horizon == sim.events.times[-1]
        assert np.all(sim.hidden_times <= sim.events.horizon)

    def test_stop_by_horizon(self):
        p = paper_like_params()
        sim = simulate_mmhp_delta(p, horizon=100.0, seed=4)
        assert sim.events.horizon == 100.0
        assert sim.events.times[-1] <= 100.0

    def test_residuals_at_truth_calibrated(self):
        # time-rescaled durations against the generating parameters are Exp(1)
        p = ModelParams(mu=[1.3], alpha=[1.0], beta=[2.5], Q=[[0.0]], xi0=[1.0],
                        delta=0.1)
        passed = 0
        for seed in range(30):
            sim = simulate_mmhp_delta(p, n_events=2000, seed=500 + seed)
            rep = residuals(p, sim.events)
            passed += rep.ks_pvalue > 0.01
        assert passed >= 28

    def test_state_at(self):
        p = paper_like_params()
        sim = simulate_mmhp_delta(p, n_events=100, seed=5)
        mid = 0.5 * (sim.hidden_times[0] + sim.hidden_times[1])
        assert sim.state_at(mid) == sim.hidden_states[0]

    def test_stop_argument_validation(self):
        p = paper_like_params()
        with pytest.raises(ValueError):
            simulate_mmhp_delta(p, n_events=10, horizon=5.0)
        with pytest.raises(ValueError):
            simulate_mmhp_delta(p)


class TestContinuousSimulator:
    def test_mmpp_case_matches_delta_simulator_in_law(self):
        p = ModelParams(mu=[0.8, 2.5], alpha=[0.0, 0.0], beta=[1.0, 1.0],
                        Q=[[-0.4, 0.4], [0.5, -0.5]], xi0=[0.5, 0.5], delta=0.3)
        a = simulate_mmhp_delta(p, n_events=3000, seed=6)
        b = simulate_mmhp_continuous(p, n_events=3000, seed=7)
        stat, pvalue = scipy.stats.ks_2samp(np.diff(a.events.times),
                                            np.diff(b.events.times))
        assert pvalue > 0.01

    def test_single_state_hawkes_mean_intensity(self):
        # stationary rate mu / (1 - alpha/beta) = 2 for these parameters
        p = ModelParams(mu=[1.0], alpha=[1.0], beta=[2.0], Q=[[0.0]], xi0=[1.0],
                        delta=0.1)
        sim = simulate_mmhp_continuous(p, horizon=1e4, seed=8)
        assert abs(sim.events.K / 1e4 - 2.0) < 0.2

    def test_deterministic_given_seed(self):
        p = paper_like_params()
        a = simulate_mmhp_continuous(p, n_events=400, seed=9)
        b = simulate_mmhp_continuous(p, n_events=400, seed=9)
        assert np.array_equal(a.events.times, b.events.times)

    def test_occupancy_near_stationary(self):
        p = paper_like_params()
        sim = simulate_mmhp_continuous(p, horizon=5e3, seed=10)
        pi = stationary_distribution(p.Q)
        assert np.allclose(sim.occupancy(), pi, atol=0.06)
