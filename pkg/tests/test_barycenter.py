import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from bwb.barycenter import SampleSet, SolverConfig, barycenter, mean_map_check, objective, residual
from bwb.errors import ConfigError, DomainError, ShapeError, WeightError
from bwb.linalg import bw_distance

from conftest import random_pd, random_sym


def _sqrtm(M):
    return np.real(scipy.linalg.sqrtm(M))


def _gradient_oracle(S, w, steps=20000, tol=1e-13):
    """Projected gradient descent on sum_i w_i d_B^2(Q, S_i).

    The gradient is I - sum_i w_i T_Q^{S_i}, with T written through Q's own
    square root (a different factorization from the package).
    """
    w = np.asarray(w, float) / np.sum(w)
    d = S.shape[-1]
    Q = np.einsum("n,nij->ij", w, S)
    lr = 0.5 * np.min(np.linalg.eigvalsh(Q))
    for _ in range(steps):
        rQ = _sqrtm(Q)
        irQ = np.linalg.inv(rQ)
        T = sum(wi * irQ @ _sqrtm(rQ @ Si @ rQ) @ irQ for wi, Si in zip(w, S))
        g = np.eye(d) - (T + T.T) / 2
        if np.linalg.norm(g) < tol:
            break
        Q = Q - lr * g
        q, V = np.linalg.eigh((Q + Q.T) / 2)
        Q = (V * np.clip(q, 1e-9, None)) @ V.T
    return Q


def _data(rng, n=6, d=3, floor=0.3):
    return np.stack([random_pd(rng, d, floor) for _ in range(n)])


class TestSampleSet:
    def test_defaults(self, rng):
        ds = SampleSet(_data(rng))
        assert ds.n == 6 and ds.d == 3
        assert np.allclose(ds.normalized_weights, 1 / 6)

    def test_zero_weights(self, rng):
        with pytest.raises(WeightError):
            SampleSet(_data(rng, 2), np.zeros(2))

    def test_negative_weights(self, rng):
        with pytest.raises(WeightError):
            SampleSet(_data(rng, 2), np.array([1.0, -1.0]))

    def test_no_pd_with_positive_weight(self, rng):
        S = np.stack([np.diag([1.0, 0.0]), np.eye(2)])
        with pytest.raises(DomainError):
            SampleSet(S, np.array([1.0, 0.0]))
        assert SampleSet(S, np.array([0.0, 1.0])).n == 2

    def test_indefinite(self):
        with pytest.raises(DomainError):
            SampleSet(np.stack([np.diag([1.0, -1.0])]))

    def test_shape(self, rng):
        with pytest.raises(ShapeError):
            SampleSet(_data(rng, 3), np.ones(2))


class TestSolverConfig:
    def test_invalid(self):
        with pytest.raises(ConfigError):
            SolverConfig(tol=0.0)
        with pytest.raises(ConfigError):
            SolverConfig(max_iter=0)


class TestBarycenter:
    def test_singleton(self, rng):
        S = random_pd(rng, 4)
        res = barycenter(SampleSet(S[None]))
        assert np.allclose(res.Q, S, atol=1e-14)
        assert res.iterations == 1 and res.converged

    def test_scalar(self):
        res = barycenter(SampleSet(np.array([[[1.0]], [[9.0]]])))
        assert res.Q[0, 0] == pytest.approx(4.0, abs=1e-12)

    def test_gradient_oracle(self, rng):
        S = _data(rng, n=5, d=3)
        res = barycenter(SampleSet(S))
        assert res.residual <= 1e-10
        Q_ref = _gradient_oracle(S, np.ones(5))
        assert bw_distance(res.Q, Q_ref) <= 1e-6

    def test_weighted_gradient_oracle(self, rng):
        S = _data(rng, n=4, d=3)
        w = np.array([0.5, 2.0, 1.0, 0.0])
        res = barycenter(SampleSet(S, w))
        assert bw_distance(res.Q, _gradient_oracle(S[:3], w[:3])) <= 1e-6

    def test_commuting_closed_form(self, rng):
        diags = rng.uniform(0.1, 5.0, (7, 4))
        w = rng.uniform(0.1, 2.0, 7)
        res = barycenter(SampleSet(np.stack([np.diag(x) for x in diags]), w))
        want = np.diag((w / w.sum() @ np.sqrt(diags)) ** 2)
        assert np.allclose(res.Q, want, atol=1e-9)

    def test_rotated_commuting(self, rng):
        V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        diags = rng.uniform(0.5, 3.0, (4, 3))
        S = np.stack([(V * x) @ V.T for x in diags])
        res = barycenter(SampleSet(S))
        want = (V * np.mean(np.sqrt(diags), axis=0) ** 2) @ V.T
        assert np.allclose(res.Q, want, atol=1e-9)

    def test_certificate_and_monotone(self, rng):
        data = SampleSet(_data(rng, n=30, d=5, floor=0.05))
        res = barycenter(data, SolverConfig(record_history=True))
        assert res.converged and res.residual <= 1e-10
        assert residual(res.Q, data) <= 1e-10
        assert mean_map_check(res.Q, data) <= 10 * 1e-10 * np.trace(res.Q)
        steps = np.diff(res.objective_history)
        assert np.all(steps <= 1e-12)
        assert res.objective_history[-1] == pytest.approx(objective(res.Q, data), rel=1e-12)

    def test_not_converged(self, rng):
        res = barycenter(SampleSet(_data(rng)), SolverConfig(max_iter=1))
        assert not res.converged and res.iterations == 1 and res.residual > 1e-10

    def test_warm_start(self, rng):
        data = SampleSet(_data(rng))
        cold = barycenter(data)
        warm = barycenter(data, SolverConfig(init=cold.Q))
        assert warm.iterations == 1
        assert np.allclose(warm.Q, cold.Q)

    def test_init_shape(self, rng):
        with pytest.raises(ShapeError):
            barycenter(SampleSet(_data(rng)), SolverConfig(init=np.eye(2)))

    def test_zero_weights_skipped(self, rng):
        S = _data(rng, 5)
        w = np.array([1.0, 0.0, 2.0, 0.0, 1.0])
        full = barycenter(SampleSet(S, w)).Q
        sub = barycenter(SampleSet(S[w > 0], w[w > 0])).Q
        assert np.array_equal(full, sub)

    def test_psd_members(self, rng):
        S = _data(rng, 4)
        S[1] = np.diag([1.0, 0.0, 0.0])
        res = barycenter(SampleSet(S))
        assert res.converged and np.linalg.eigvalsh(res.Q)[0] > 0

    @settings(max_examples=20, deadline=None)
    @given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
    def test_weight_scaling(self, c, seed):
        rng = np.random.default_rng(seed)
        S = _data(rng, 5)
        w = rng.uniform(0.1, 2.0, 5)
        a = barycenter(SampleSet(S, w)).Q
        b = barycenter(SampleSet(S, c * w)).Q
        assert np.allclose(a, b, rtol=0, atol=1e-12 * np.abs(a).max())

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation(self, seed):
        rng = np.random.default_rng(seed)
        S = _data(rng, 6)
        w = rng.uniform(0.1, 2.0, 6)
        perm = rng.permutation(6)
        a = barycenter(SampleSet(S, w)).Q
        b = barycenter(SampleSet(S[perm], w[perm])).Q
        assert np.allclose(a, b, rtol=0, atol=1e-12 * np.abs(a).max())


class TestResidual:
    def test_singleton(self, rng):
        S = random_pd(rng, 3)
        assert residual(S, SampleSet(S[None])) <= 1e-15

    def test_scalar(self):
        assert residual(np.array([[4.0]]), SampleSet(np.array([[[1.0]], [[9.0]]]))) == pytest.approx(0, abs=1e-15)

    def test_continuity(self, rng):
        data = SampleSet(_data(rng))
        Q = barycenter(data).Q
        X = random_sym(rng, 3)
        r = [residual(Q + eps * X, data) for eps in (1e-1, 1e-2, 1e-3, 1e-4)]
        assert all(v > 0 for v in r)
        assert all(a > b for a, b in zip(r, r[1:]))

    def test_dim_mismatch(self, rng):
        with pytest.raises(ShapeError):
            residual(np.eye(2), SampleSet(_data(rng)))


class TestMeanMap:
    def test_at_barycenter(self, rng):
        data = SampleSet(_data(rng, 20, 4))
        assert mean_map_check(barycenter(data).Q, data) <= 1e-8

    def test_singleton(self, rng):
        S = random_pd(rng, 3)
        assert mean_map_check(S, SampleSet(S[None])) <= 1e-10

    def test_euclidean_mean_is_off(self):
        S = np.stack([np.diag([1.0, 4.0]), np.array([[2.0, 1.0], [1.0, 2.0]])])
        assert mean_map_check(S.mean(axis=0), SampleSet(S)) > 1e-3
