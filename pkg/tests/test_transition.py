import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from mmhp import EventSequence, ModelParams, TransitionBundle
from mmhp.matexp import ode_oracle_G, ode_oracle_H
from mmhp.transition import backward_G, density_f, forward_H, intra_R

from _oracles import random_events, random_params


@pytest.fixture
def two_state():
    p = ModelParams(mu=[1.0, 1.0], alpha=[1.0, 4.0], beta=[2.0, 10.0],
                    Q=[[-1.0, 1.0], [1.0, -1.0]], xi0=[0.5, 0.5], delta=0.1)
    ev = EventSequence([0.25, 0.3, 0.95, 1.0])
    return p, ev, TransitionBundle(p, ev)


class TestForwardH:
    def test_identity_at_zero(self, two_state):
        _, _, b = two_state
        assert np.allclose(b.H(0, 0.0), np.eye(2))

    def test_single_state_poisson_survival(self):
        p = ModelParams(mu=[2.0], alpha=[0.0], beta=[1.0], Q=[[0.0]], xi0=[1.0],
                        delta=0.3)
        ev = EventSequence([1.1])
        b = TransitionBundle(p, ev)
        for u in (0.0, 0.2, 0.7, 1.1):
            assert np.isclose(b.H(0, u)[0, 0], np.exp(-2.0 * u), rtol=1e-12)

    def test_matches_rk4(self, two_state):
        p, ev, b = two_state
        for n in range(ev.K):
            ref = ode_oracle_H(p, ev, n, substeps=1000)
            assert np.abs(b.H(n, float(b.grid.x[n])) - ref).max() < 1e-8

    def test_u_out_of_range(self, two_state):
        _, _, b = two_state
        with pytest.raises(ValueError):
            b.H(0, 0.3)
        with pytest.raises(ValueError):
            b.H(0, -0.01)


class TestBackwardG:
    def test_identity_at_zero(self, two_state):
        _, _, b = two_state
        assert np.allclose(b.G(0, 0.0), np.eye(2))

    def test_scalar_flat_case_equals_H(self):
        # with a single state H and G integrate the same hazard, but over
        # opposite ends of the interval; they coincide pointwise only when the
        # intensity is flat (alpha = 0) or at u = x_n
        p = ModelParams(mu=[1.3], alpha=[0.0], beta=[3.0], Q=[[0.0]], xi0=[1.0],
                        delta=0.1)
        ev = EventSequence([0.33, 0.65])
        b = TransitionBundle(p, ev)
        for n in range(2):
            for u in (0.05, 0.17, float(b.grid.x[n])):
                assert np.isclose(b.H(n, u)[0, 0], b.G(n, u)[0, 0], rtol=1e-12)

    def test_scalar_full_interval_equals_H(self):
        p = ModelParams(mu=[1.0], alpha=[2.0], beta=[3.0], Q=[[0.0]], xi0=[1.0],
                        delta=0.1)
        ev = EventSequence([0.33, 0.65])
        b = TransitionBundle(p, ev)
        for n in range(2):
            x_n = float(b.grid.x[n])
            assert np.isclose(b.H(n, x_n)[0, 0], b.G(n, x_n)[0, 0], rtol=1e-12)

    def test_matches_rk4(self, two_state):
        p, ev, b = two_state
        for n in range(ev.K):
            ref = ode_oracle_G(p, ev, n, substeps=1000)
            assert np.abs(b.G(n, float(b.grid.x[n])) - ref).max() < 1e-8

    def test_factorization_identity(self, two_state):
        # H(x_n) = H(t - t_{n-1}) G(t_n - t) at interior points
        p, ev, b = two_state
        rng = np.random.default_rng(0)
        for n in range(ev.K):
            x_n = float(b.grid.x[n])
            full = b.H(n, x_n)
            for u in rng.uniform(0.0, x_n, 20):
                prod = b.H(n, float(u)) @ b.G(n, x_n - float(u))
                assert np.abs(prod - full).max() < 1e-10


class TestDensity:
    def test_single_state_exponential(self):
        p = ModelParams(mu=[1.7], alpha=[0.0], beta=[1.0], Q=[[0.0]], xi0=[1.0],
                        delta=0.5)
        ev = EventSequence([0.8])
        f = density_f(p, ev, 0)
        assert np.isclose(f[0, 0], 1.7 * np.exp(-1.7 * 0.8), rtol=1e-12)

    def test_decoupled_diagonal(self):
        p = ModelParams(mu=[0.9, 2.1], alpha=[0.0, 0.0], beta=[1.0, 1.0],
                        Q=np.zeros((2, 2)), xi0=[1.0, 0.0], delta=0.2)
        ev = EventSequence([0.6])
        f = density_f(p, ev, 0)
        expected = np.diag([0.9 * np.exp(-0.9 * 0.6), 2.1 * np.exp(-2.1 * 0.6)])
        assert np.allclose(f, expected, rtol=1e-12)

    def test_rows_integrate_to_one(self):
        # total duration density mass per starting state is 1 (MMPP instance)
        p = ModelParams(mu=[0.8, 1.6], alpha=[0.0, 0.0], beta=[1.0, 1.0],
                        Q=[[-0.5, 0.5], [0.7, -0.7]], xi0=[0.5, 0.5], delta=0.5)
        A = p.Q - np.diag(p.mu)
        lam = np.diag(p.mu)

        def rows(x):
            return (scipy.linalg.expm(A * x) @ lam).sum(axis=1)

        val0, _ = scipy.integrate.quad(lambda x: rows(x)[0], 0, 60, limit=200)
        val1, _ = scipy.integrate.quad(lambda x: rows(x)[1], 0, 60, limit=200)
        assert np.isclose(val0, 1.0, atol=1e-6)
        assert np.isclose(val1, 1.0, atol=1e-6)


class TestIntraR:
    def test_identity_when_equal(self, two_state):
        _, _, b = two_state
        assert np.allclose(b.intra_R(2, 0.31, 0.31), np.eye(2))

    def test_from_zero_equals_H(self, two_state):
        _, ev, b = two_state
        for n in range(ev.K):
            for v in (0.03, float(b.grid.x[n]) / 2, float(b.grid.x[n])):
                assert np.allclose(b.intra_R(n, 0.0, v), b.H(n, v), atol=1e-13)

    def test_matches_inversion_formula(self, two_state):
        p, ev, b = two_state
        rng = np.random.default_rng(1)
        for n in range(ev.K):
            x_n = float(b.grid.x[n])
            u, v = np.sort(rng.uniform(0.0, x_n, 2))
            ref = np.linalg.solve(b.H(n, float(u)), b.H(n, float(v)))
            assert np.abs(b.intra_R(n, float(u), float(v)) - ref).max() < 1e-8

    def test_chapman_kolmogorov(self, two_state):
        _, ev, b = two_state
        rng = np.random.default_rng(2)
        for n in range(ev.K):
            x_n = float(b.grid.x[n])
            u, v, w = np.sort(rng.uniform(0.0, x_n, 3))
            lhs = b.intra_R(n, float(u), float(w))
            rhs = b.intra_R(n, float(u), float(v)) @ b.intra_R(n, float(v), float(w))
            assert np.abs(lhs - rhs).max() < 1e-10


class TestBundleProperties:
    def test_substochastic_everywhere(self):
        rng = np.random.default_rng(3)
        for M in (1, 2, 3):
            p = random_params(rng, M)
            ev = random_events(rng, 30)
            b = TransitionBundle(p, ev)
            for mats in (b.H_full, b.E_res):
                assert np.all(mats >= -1e-15)
                assert np.all(mats.sum(axis=-1) <= 1 + 1e-12)

    def test_module_level_wrappers(self, two_state):
        p, ev, b = two_state
        assert np.allclose(forward_H(p, ev, 1, 0.02), b.H(1, 0.02))
        assert np.allclose(backward_G(p, ev, 1, 0.02), b.G(1, 0.02))
        assert np.allclose(intra_R(p, ev, 2, 0.1, 0.4), b.intra_R(2, 0.1, 0.4))

    def test_oracle_agreement_random_instances(self):
        rng = np.random.default_rng(4)
        for _ in range(12):
            M = int(rng.integers(1, 4))
            p = random_params(rng, M)
            ev = random_events(rng, 8, mean_gap=float(rng.uniform(0.05, 2.0)))
            b = TransitionBundle(p, ev)
            n = int(rng.integers(0, ev.K))
            assert np.abs(b.H(n, float(b.grid.x[n]))
                          - ode_oracle_H(p, ev, n)).max() < 1e-8
            assert np.abs(b.G(n, float(b.grid.x[n]))
                          - ode_oracle_G(p, ev, n)).max() < 1e-8
