import math

import numpy as np
import pytest

from condmon import oselm
from condmon.oselm import ConvergenceMonitor, OnlineElm, Phase, PhaseError


def batch_ridge_oracle(H, y, C):
    """Independent dense solve via the augmented least-squares system."""
    lh = H.shape[1]
    A = np.vstack([H, np.eye(lh) / np.sqrt(C)])
    b = np.concatenate([y, np.zeros(lh)])
    beta, *_ = np.linalg.lstsq(A, b, rcond=None)
    return beta


def run_sequence(model, X, y):
    model.init_batch(X[:10], y[:10])
    for i in range(10, len(X)):
        model.sequential_update(X[i], y[i])
    return model


class TestInit:
    def test_deterministic(self):
        a = OnlineElm(5, 10, seed=3)
        b = OnlineElm(5, 10, seed=3)
        np.testing.assert_array_equal(a.Wstar, b.Wstar)
        np.testing.assert_array_equal(a.bstar, b.bstar)

    def test_production_dims(self):
        m = OnlineElm(5, 10)
        assert m.Wstar.shape == (10, 5)
        assert m.bstar.shape == (10,)
        assert m.phase is Phase.COLLECTING

    def test_weight_ranges(self):
        m = OnlineElm(50, 200, seed=0)
        assert m.Wstar.min() >= -1.0 and m.Wstar.max() <= 1.0
        assert m.bstar.min() >= 0.0 and m.bstar.max() <= 1.0

    def test_invalid_c_rejected(self):
        with pytest.raises(ValueError, match="C"):
            OnlineElm(5, 10, C=0.0)
        with pytest.raises(ValueError, match="C"):
            OnlineElm(5, 10, C=-3.0)


class TestHidden:
    def test_zero_weights_give_half(self):
        m = OnlineElm(4, 6, seed=0)
        m.Wstar[:] = 0.0
        m.bstar[:] = 0.0
        np.testing.assert_allclose(m.hidden(np.ones(4)), 0.5)

    def test_saturation(self):
        m = OnlineElm(1, 1, seed=0)
        m.Wstar[:] = 1.0
        m.bstar[:] = 0.0
        assert m.hidden(np.array([25.0]))[0] == pytest.approx(1.0, abs=1e-9)

    def test_matches_elementwise_oracle(self):
        m = OnlineElm(3, 5, seed=7)
        x = np.array([0.3, -1.2, 2.0])
        expect = [1.0 / (1.0 + math.exp(-(sum(m.Wstar[j, k] * x[k] for k in range(3)) + m.bstar[j])))
                  for j in range(5)]
        np.testing.assert_allclose(m.hidden(x), expect, rtol=1e-12)

    def test_open_unit_interval(self):
        m = OnlineElm(4, 8, seed=1)
        h = m.hidden(np.random.default_rng(2).normal(size=4))
        assert ((h > 0) & (h < 1)).all()


class TestInitBatch:
    def test_identical_samples_large_c(self):
        C = 1e4
        m = OnlineElm(3, 6, C=C, seed=4)
        x = np.array([0.5, -0.2, 1.0])
        X = np.tile(x, (10, 1))
        m.init_batch(X)
        _, dev = m.predict(x)
        H = m.hidden_matrix(X)
        bound = 1.0 / (C * np.sum(H * H) + 1.0)
        assert dev <= bound * (1 + 1e-9)

    def test_matches_dense_ridge_oracle(self):
        rng = np.random.default_rng(5)
        for C in (1.0, 100.0):
            m = OnlineElm(4, 7, C=C, seed=int(rng.integers(1000)))
            X = rng.normal(size=(10, 4))
            y = rng.normal(size=10)
            m.init_batch(X, y)
            expect = batch_ridge_oracle(m.hidden_matrix(X), y, C)
            np.testing.assert_allclose(m.beta, expect, rtol=1e-8)

    def test_equivalent_to_dual_form(self):
        # push-through identity: H'(I/C + HH')^-1 y == (I/C + H'H)^-1 H'y
        rng = np.random.default_rng(6)
        m = OnlineElm(5, 10, C=100.0, seed=9)
        X = rng.normal(size=(10, 5))
        m.init_batch(X)
        H = m.hidden_matrix(X)
        dual = H.T @ np.linalg.solve(np.eye(10) / 100.0 + H @ H.T, np.ones(10))
        np.testing.assert_allclose(m.beta, dual, rtol=1e-10)

    def test_norm_shrinks_with_stronger_regularization(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(10, 4))
        norms = []
        for C in (1e-3, 1e-1, 1e1, 1e3):
            m = OnlineElm(4, 6, C=C, seed=11)
            m.init_batch(X)
            norms.append(np.linalg.norm(m.beta))
        assert norms == sorted(norms)

    def test_wrong_batch_size(self):
        m = OnlineElm(4, 6, seed=0)
        with pytest.raises(ValueError, match="init batch"):
            m.init_batch(np.zeros((9, 4)))

    def test_wrong_phase(self):
        m = OnlineElm(4, 6, seed=0)
        m.init_batch(np.random.default_rng(0).normal(size=(10, 4)))
        with pytest.raises(PhaseError):
            m.init_batch(np.zeros((10, 4)))


class TestSequentialUpdate:
    def test_zero_innovation_leaves_beta(self):
        rng = np.random.default_rng(8)
        m = OnlineElm(3, 5, seed=12)
        m.init_batch(rng.normal(size=(10, 3)))
        x = rng.normal(size=3)
        y_hat, _ = m.predict(x)
        before = m.beta.copy()
        delta = m.sequential_update(x, target=y_hat)
        np.testing.assert_allclose(m.beta, before, atol=1e-12)
        assert delta == pytest.approx(0.0, abs=1e-9)

    def test_matches_batch_solution(self):
        rng = np.random.default_rng(9)
        m = OnlineElm(4, 8, C=100.0, seed=13)
        X = rng.normal(size=(60, 4))
        y = rng.normal(size=60)
        run_sequence(m, X, y)
        H = m.hidden_matrix(X)
        expect = np.linalg.solve(np.eye(8) / 100.0 + H.T @ H, H.T @ y)
        rel = np.linalg.norm(m.beta - expect) / np.linalg.norm(expect)
        assert rel < 1e-8

    def test_scalar_hand_tracked_recurrence(self):
        # Lh = 1: everything is scalar; track the recurrence with plain floats.
        m = OnlineElm(1, 1, C=2.0, seed=14)
        X = np.linspace(-1, 1, 13)[:, None]
        y = np.linspace(0.5, 1.5, 13)
        h = [1.0 / (1.0 + math.exp(-(m.Wstar[0, 0] * x + m.bstar[0]))) for x in X[:, 0]]
        M = 1.0 / 2.0 + sum(v * v for v in h[:10])
        beta = sum(v * t for v, t in zip(h[:10], y[:10])) / M
        m.init_batch(X[:10], y[:10])
        assert m.beta[0] == pytest.approx(beta, rel=1e-12)
        for i in range(10, 13):
            M += h[i] * h[i]
            beta += (h[i] / M) * (y[i] - h[i] * beta)
            m.sequential_update(X[i], y[i])
            assert m.beta[0] == pytest.approx(beta, rel=1e-10)

    def test_delta_infinite_on_zero_model(self):
        m = OnlineElm(2, 3, seed=15)
        m.init_batch(np.random.default_rng(1).normal(size=(10, 2)), np.zeros(10))
        assert np.allclose(m.beta, 0.0)
        delta = m.sequential_update(np.ones(2), target=1.0)
        assert math.isinf(delta)

    def test_m_stays_symmetric_positive_definite(self):
        rng = np.random.default_rng(10)
        m = OnlineElm(3, 6, seed=16)
        m.init_batch(rng.normal(size=(10, 3)))
        for _ in range(40):
            m.sequential_update(rng.normal(size=3))
            assert np.abs(m.M - m.M.T).max() < 1e-10
            np.linalg.cholesky(m.M)  # raises if not positive definite

    def test_random_layer_frozen(self):
        rng = np.random.default_rng(11)
        m = OnlineElm(3, 6, seed=17)
        w0, b0 = m.Wstar.tobytes(), m.bstar.tobytes()
        m.init_batch(rng.normal(size=(10, 3)))
        for _ in range(25):
            m.sequential_update(rng.normal(size=3))
        assert m.Wstar.tobytes() == w0
        assert m.bstar.tobytes() == b0

    def test_rls_equals_batch_property_sweep(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            n_in = int(rng.integers(2, 9))
            lh = int(rng.integers(4, 17))
            C = float(rng.choice([1.0, 100.0, 1e4]))
            n = int(rng.integers(10, 201))
            X = rng.normal(size=(n, n_in))
            y = np.ones(n) if rng.random() < 0.5 else rng.normal(size=n)
            m = OnlineElm(n_in, lh, C=C, seed=int(rng.integers(10_000)))
            run_sequence(m, X, y)
            H = m.hidden_matrix(X)
            expect = np.linalg.solve(np.eye(lh) / C + H.T @ H, H.T @ y)
            rel = np.linalg.norm(m.beta - expect) / max(np.linalg.norm(expect), 1e-30)
            assert rel < 1e-8


class TestPhases:
    def test_update_rejected_before_init(self):
        m = OnlineElm(2, 4, seed=18)
        with pytest.raises(PhaseError):
            m.sequential_update(np.ones(2))

    def test_update_rejected_after_convergence(self):
        rng = np.random.default_rng(13)
        m = OnlineElm(2, 4, seed=19)
        x = rng.normal(size=2)
        m.init_batch(np.tile(x, (10, 1)))
        while m.phase is Phase.TRAINING:
            delta = m.sequential_update(x)
            m.observe(delta)
        assert m.phase is Phase.INFERENCE
        with pytest.raises(PhaseError):
            m.sequential_update(x)
        with pytest.raises(PhaseError):
            m.observe(0.0)

    def test_predict_requires_beta(self):
        m = OnlineElm(2, 4, seed=20)
        with pytest.raises(PhaseError):
            m.predict(np.ones(2))

    def test_predict_with_zero_beta(self):
        m = OnlineElm(2, 4, seed=21)
        m.init_batch(np.random.default_rng(2).normal(size=(10, 2)))
        m.beta = np.zeros(4)
        y, dev = m.predict(np.ones(2))
        assert y == 0.0 and dev == 1.0


class TestConvergenceMonitor:
    def test_ten_consecutive_fire(self):
        mon = ConvergenceMonitor()
        for i in range(1, 11):
            fired = mon.observe(0.05, sample_index=10 + i)
        assert fired
        assert mon.converged_at == 20

    def test_excursion_resets(self):
        mon = ConvergenceMonitor()
        for i in range(9):
            mon.observe(0.05, sample_index=11 + i)
        mon.observe(0.5, sample_index=20)
        assert mon.consecutive == 0
        assert mon.converged_at is None

    def test_boundary_is_strict(self):
        mon = ConvergenceMonitor()
        mon.observe(0.1, sample_index=11)  # delta == Tc does not count
        assert mon.consecutive == 0


class TestSerialization:
    def test_round_trip_preserves_behavior(self, tmp_path):
        rng = np.random.default_rng(14)
        m = OnlineElm(3, 6, C=50.0, seed=22)
        m.init_batch(rng.normal(size=(10, 3)))
        for _ in range(5):
            d = m.sequential_update(rng.normal(size=3))
            m.observe(d)
        path = tmp_path / "elm.model"
        m.save(path)
        again = OnlineElm.load(path)
        x = rng.normal(size=3)
        assert again.predict(x) == m.predict(x)
        assert again.phase == m.phase
        assert again.samples_seen == m.samples_seen
        # continuing both models stays identical
        x2 = rng.normal(size=3)
        assert again.sequential_update(x2) == m.sequential_update(x2)
        np.testing.assert_array_equal(again.beta, m.beta)

    def test_save_is_deterministic(self, tmp_path):
        m = OnlineElm(3, 6, seed=23)
        m.init_batch(np.random.default_rng(3).normal(size=(10, 3)))
        m.save(tmp_path / "a")
        m.save(tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
