import numpy as np
import pytest

from mmhp import (EventSequence, IntervalGrid, ModelParams, NumericalError,
                  PiecewiseIntensity, grid_decompose, intensity_at_grid,
                  stationary_distribution)
from mmhp.model import exp_decay_accumulator

from _oracles import naive_intensity, random_events, random_params


def two_state_params(delta=0.1):
    return ModelParams(mu=[1.0, 1.0], alpha=[1.0, 4.0], beta=[2.0, 10.0],
                       Q=[[-1.0, 1.0], [1.0, -1.0]], xi0=[0.5, 0.5], delta=delta)


class TestModelParams:
    def test_valid(self):
        p = two_state_params()
        assert p.M == 2
        assert np.allclose(p.exit_rates, [1.0, 1.0])
        assert not p.is_mmpp()

    @pytest.mark.parametrize("field,value", [
        ("mu", [0.0, 1.0]),
        ("alpha", [-0.1, 1.0]),
        ("beta", [1.0, 0.0]),
        ("Q", [[-1.0, 0.5], [1.0, -1.0]]),
        ("Q", [[-1.0, 1.0], [-0.5, 0.5]]),
        ("xi0", [0.7, 0.7]),
        ("delta", 0.0),
    ])
    def test_invalid(self, field, value):
        kwargs = dict(mu=[1.0, 1.0], alpha=[1.0, 4.0], beta=[2.0, 10.0],
                      Q=[[-1.0, 1.0], [1.0, -1.0]], xi0=[0.5, 0.5], delta=0.1)
        kwargs[field] = value
        with pytest.raises(ValueError):
            ModelParams(**kwargs)

    def test_state_bound(self):
        M = 11
        with pytest.raises(ValueError):
            ModelParams(mu=np.ones(M), alpha=np.zeros(M), beta=np.ones(M),
                        Q=np.zeros((M, M)), xi0=np.full(M, 1 / M), delta=0.1)


class TestEventSequence:
    def test_durations(self):
        ev = EventSequence([0.5, 1.25, 2.0])
        assert np.allclose(ev.durations, [0.5, 0.75, 0.75])
        assert ev.horizon == 2.0

    def test_rejects_non_increasing(self):
        with pytest.raises(ValueError):
            EventSequence([1.0, 1.0, 2.0])
        with pytest.raises(ValueError):
            EventSequence([-1.0, 2.0])
        with pytest.raises(ValueError):
            EventSequence([1.0, 2.0], horizon=1.5)


class TestGridDecompose:
    def test_plain(self):
        g = grid_decompose(EventSequence([0.25]), 0.1)
        assert g.ell[0] == 2 and np.isclose(g.res[0], 0.05)

    def test_short_interval(self):
        g = grid_decompose(EventSequence([0.05]), 0.1)
        assert g.ell[0] == 0 and np.isclose(g.res[0], 0.05)

    def test_exact_multiple_folds_into_residual(self):
        g = grid_decompose(EventSequence([0.2]), 0.1)
        assert g.ell[0] == 1 and np.isclose(g.res[0], 0.1)

    def test_tie_convention_is_observationally_equivalent(self):
        # the folded residual uses the same frozen intensity as the step it
        # replaces, so the interval transition matrix is unchanged
        from mmhp.matexp import expm
        p = two_state_params()
        ev = EventSequence([0.35, 0.55])  # second interval is exactly 2 delta
        lam = PiecewiseIntensity(p, ev)
        A0 = p.Q - np.diag(lam.at(1, 0))
        A1 = p.Q - np.diag(lam.at(1, 1))
        folded = expm(A0, 0.1) @ expm(A1, 0.1)          # ell=1 + residual delta
        with_empty_tail = expm(A0, 0.1) @ expm(A1, 0.1) @ expm(
            p.Q - np.diag(lam.at(1, 1)), 0.0)           # ell=2 + zero residual
        assert np.allclose(folded, with_empty_tail, atol=1e-15)

    def test_reassembly(self):
        rng = np.random.default_rng(0)
        ev = random_events(rng, 300)
        g = grid_decompose(ev, 0.07)
        assert abs((g.ell * 0.07 + g.res).sum() - ev.times[-1]) < 1e-9
        assert np.all(g.res > 0) and np.all(g.res <= 0.07 * (1 + 1e-9))

    def test_flat_bookkeeping(self):
        ev = EventSequence([0.25, 0.3, 0.9])
        g = grid_decompose(ev, 0.1)
        assert g.n_segments == g.ell.sum()
        assert np.all(g.seg_interval == np.repeat(np.arange(3), g.ell))
        for j in range(g.max_ell):
            assert sorted(g.active(j)) == sorted(np.where(g.ell > j)[0])


class TestIntensity:
    def test_single_event_history(self):
        # mu=1, alpha=1, beta=2: one grid step after the anchoring event
        p = ModelParams(mu=[1.0], alpha=[1.0], beta=[2.0], Q=[[0.0]], xi0=[1.0],
                        delta=0.1)
        ev = EventSequence([1.0, 3.0])
        lam = PiecewiseIntensity(p, ev)
        assert np.isclose(lam.at(1, 1)[0], 1.0 + np.exp(-0.2), atol=1e-12)

    def test_mmpp_flat(self):
        p = ModelParams(mu=[0.7, 1.3], alpha=[0.0, 0.0], beta=[1.0, 1.0],
                        Q=[[-1.0, 1.0], [1.0, -1.0]], xi0=[0.5, 0.5], delta=0.1)
        ev = EventSequence([0.4, 0.9, 2.2])
        lam = PiecewiseIntensity(p, ev)
        for n in range(3):
            for k in range(int(lam.grid.ell[n]) + 1):
                assert np.allclose(lam.at(n, k), [0.7, 1.3])

    def test_no_history_baseline(self):
        p = two_state_params()
        ev = EventSequence([5.0])
        assert np.allclose(intensity_at_grid(p, ev, 0, 0), p.mu)

    def test_recursive_matches_naive_double_sum(self):
        rng = np.random.default_rng(1)
        p = random_params(rng, 3)
        ev = random_events(rng, 400)
        lam = PiecewiseIntensity(p, ev)
        for n in (0, 1, 57, 200, 399):
            for k in (0, int(lam.grid.ell[n])):
                mine = lam.at(n, k)
                ref = naive_intensity(p, ev, n, k)
                assert np.allclose(mine, ref, rtol=1e-10)

    def test_index_errors(self):
        p = two_state_params()
        ev = EventSequence([0.25])
        lam = PiecewiseIntensity(p, ev)
        with pytest.raises(IndexError):
            lam.at(1, 0)
        with pytest.raises(IndexError):
            lam.at(0, 5)

    def test_piecewise_integral_matches_sampling(self):
        rng = np.random.default_rng(2)
        p = random_params(rng, 2)
        ev = random_events(rng, 40)
        lam = PiecewiseIntensity(p, ev)
        lam_seg, lam_res = lam.segment_values()
        g = lam.grid
        integral = (lam_seg.sum(axis=0) * g.delta
                    + (lam_res * g.res[:, None]).sum(axis=0))
        # left-continuous step reconstruction sampled on a fine midpoint grid
        ref = np.zeros(p.M)
        for n in range(ev.K):
            left = ev.anchor(n)
            for k in range(int(g.ell[n]) + 1):
                length = g.delta if k < g.ell[n] else float(g.res[n])
                mids = left + np.linspace(length / 10, length, 5) - length / 20
                vals = np.stack([lam.value_at(float(t)) for t in mids])
                assert np.allclose(vals, vals[0])
                ref += lam.at(n, k) * length
                left += length
        assert np.allclose(integral, ref, rtol=1e-10)

    def test_segment_values_match_pointwise(self):
        rng = np.random.default_rng(3)
        p = random_params(rng, 2)
        ev = random_events(rng, 60)
        lam = PiecewiseIntensity(p, ev)
        lam_seg, lam_res = lam.segment_values()
        g = lam.grid
        for s in (0, 5, g.n_segments - 1):
            n, k = int(g.seg_interval[s]), int(g.seg_k[s])
            assert np.allclose(lam_seg[s], lam.at(n, k), rtol=1e-12)
        for n in (0, ev.K - 1):
            assert np.allclose(lam_res[n], lam.at_event(n), rtol=1e-12)


class TestDecayAccumulator:
    @pytest.mark.parametrize("beta", [0.05, 1.0, 17.0, 300.0, 1e6])
    def test_matches_direct_sum(self, beta):
        rng = np.random.default_rng(4)
        times = np.sort(rng.uniform(0.0, 40.0, 150))
        S = exp_decay_accumulator(times, beta)
        assert S[0] == 0.0
        for n in (1, 2, 77, 149):
            ref = np.sum(np.exp(-beta * (times[n - 1] - times[:n])))
            assert np.isclose(S[n], ref, rtol=1e-10, atol=1e-300)


class TestStationaryDistribution:
    def test_symmetric_two_state(self):
        assert np.allclose(stationary_distribution([[-1.0, 1.0], [1.0, -1.0]]),
                           [0.5, 0.5])

    def test_asymmetric_two_state(self):
        assert np.allclose(stationary_distribution([[-2.0, 2.0], [1.0, -1.0]]),
                           [1 / 3, 2 / 3])

    def test_single_state(self):
        assert np.allclose(stationary_distribution([[0.0]]), [1.0])

    def test_balance_and_normalization(self):
        rng = np.random.default_rng(5)
        p = random_params(rng, 4)
        pi = stationary_distribution(p.Q)
        assert np.allclose(pi @ p.Q, 0.0, atol=1e-12)
        assert np.isclose(pi.sum(), 1.0)
        assert np.all(pi > 0)

    def test_reducible_rejected(self):
        with pytest.raises(NumericalError):
            stationary_distribution(np.zeros((2, 2)))
        with pytest.raises(NumericalError):
            stationary_distribution([[0.0, 0.0], [1.0, -1.0]])
