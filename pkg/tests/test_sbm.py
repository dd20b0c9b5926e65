import hashlib
import json

import numpy as np
import pytest

from bwb.errors import ChecksumError, ConfigError, DatasetIOError, ManifestError, ParseError
from bwb.rng import stream
from bwb.sbm import (
    PAPER6,
    SbmConfig,
    WeightedGraph,
    generate_sbm,
    invert_laplacian,
    laplacian,
    load_dataset,
    paper6_config,
    sample_matrices,
    save_dataset,
)

from conftest import random_pd


def _two_block(p, mu=((1.0, 1.0), (1.0, 1.0)), d=6):
    return SbmConfig(d=d, p=p, weight_means=mu, block_sizes=(d // 2, d - d // 2))


class TestConfig:
    def test_invalid(self):
        with pytest.raises(ConfigError):
            SbmConfig(d=4, p=((1.2, 0.0), (0.0, 1.0)), weight_means=((1, 1), (1, 1)))
        with pytest.raises(ConfigError):
            SbmConfig(d=4, p=((0.5, 0.1), (0.2, 0.5)), weight_means=((1, 1), (1, 1)))
        with pytest.raises(ConfigError):
            SbmConfig(d=4, p=((0.5, 0.1), (0.1, 0.5)), weight_means=((0, 1), (1, 1)))
        with pytest.raises(ConfigError):
            SbmConfig(d=4, p=((0.5, 0.1), (0.1, 0.5)), weight_means=((1, 1), (1, 1)),
                      block_sizes=(1, 2))

    def test_round_trip(self):
        assert SbmConfig.from_dict(json.loads(json.dumps(PAPER6.to_dict()))) == PAPER6

    def test_jitter_non_positive(self):
        cfg = SbmConfig(d=4, p=((0.5, 0.1), (0.1, 0.5)), weight_means=((1, 1), (1, 1)),
                        base_size=2, size_jitter=3, seed=0)
        with pytest.raises(ConfigError):
            for s in range(50):
                generate_sbm(cfg.with_seed(s))


class TestGenerate:
    def test_complete(self):
        G = generate_sbm(_two_block(((1.0, 1.0), (1.0, 1.0))))
        off = ~np.eye(6, dtype=bool)
        assert np.all(G.adjacency[off] >= 0) and np.all(np.diag(G.adjacency) == 0)

    def test_empty(self):
        assert np.all(generate_sbm(_two_block(((0.0, 0.0), (0.0, 0.0)))).adjacency == 0)

    def test_deterministic(self):
        a = generate_sbm(PAPER6.with_seed(4)).adjacency
        b = generate_sbm(PAPER6.with_seed(4)).adjacency
        assert np.array_equal(a, b)
        assert not np.array_equal(a, generate_sbm(PAPER6.with_seed(5)).adjacency)

    def test_block_sizes(self):
        sizes = {int(np.sum(generate_sbm(PAPER6, stream(0, i)).labels == 0)) for i in range(300)}
        assert sizes == {8, 9, 10, 11, 12}

    def test_edge_frequencies(self):
        counts = np.zeros((2, 2))
        pairs = np.zeros((2, 2))
        cfg = paper6_config()
        for i in range(2000):
            rng = stream(9, i)
            G = generate_sbm(cfg, rng)
            lab = G.labels
            iu = np.triu_indices(cfg.d, 1)
            present = G.edges[iu]
            a, b = lab[iu[0]], lab[iu[1]]
            for x in (0, 1):
                for y in (0, 1):
                    sel = (np.minimum(a, b) == x) & (np.maximum(a, b) == y)
                    counts[x, y] += present[sel].sum()
                    pairs[x, y] += sel.sum()
        p = np.array(cfg.p)
        for x, y in ((0, 0), (1, 1), (0, 1)):
            sigma = np.sqrt(p[x, y] * (1 - p[x, y]) / pairs[x, y])
            assert abs(counts[x, y] / pairs[x, y] - p[x, y]) <= 5 * sigma


class TestGraph:
    def test_rejects_self_loops(self):
        with pytest.raises(ConfigError):
            WeightedGraph(np.eye(2))

    def test_zero_weight_edges(self):
        G = generate_sbm(_two_block(((1.0, 1.0), (1.0, 1.0)), mu=((1e-3, 1e-3), (1e-3, 1e-3))))
        off = ~np.eye(6, dtype=bool)
        assert np.all(G.edges[off]) and np.sum(G.adjacency > 0) < np.sum(G.edges)

    def test_rejects_asymmetric(self):
        with pytest.raises(ConfigError):
            WeightedGraph(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestLaplacian:
    def test_empty(self):
        assert np.array_equal(laplacian(WeightedGraph(np.zeros((3, 3)))), np.zeros((3, 3)))

    def test_k2(self):
        L = laplacian(WeightedGraph(np.array([[0.0, 1.0], [1.0, 0.0]])))
        assert np.array_equal(L, [[1.0, -1.0], [-1.0, 1.0]])

    def test_random(self):
        for i in range(20):
            L = laplacian(generate_sbm(PAPER6, stream(1, i)))
            assert np.linalg.eigvalsh(L)[0] >= -1e-10
            assert np.max(np.abs(L.sum(axis=1))) <= 1e-12
            assert np.array_equal(L @ np.ones(PAPER6.d), np.zeros(PAPER6.d))


class TestInvert:
    def test_zero(self):
        assert np.allclose(invert_laplacian(np.zeros((3, 3)), 1.0), np.eye(3))

    def test_k2(self):
        S = invert_laplacian(np.array([[1.0, -1.0], [-1.0, 1.0]]), 1.0)
        assert np.allclose(S, np.array([[2.0, 1.0], [1.0, 2.0]]) / 3)

    def test_round_trip(self):
        L = laplacian(generate_sbm(PAPER6))
        for r in (0.5, 1.0, 3.0):
            S = invert_laplacian(L, r)
            assert np.allclose((L + r * np.eye(PAPER6.d)) @ S, np.eye(PAPER6.d), atol=1e-10)

    def test_bad_r(self):
        with pytest.raises(ConfigError):
            invert_laplacian(np.zeros((2, 2)), 0.0)

    def test_spectrum(self):
        S = sample_matrices(PAPER6, 50, r=2.0)
        w = np.linalg.eigvalsh(S)
        assert np.all(w > 0) and np.all(w <= 0.5 + 1e-12)


class TestSample:
    def test_deterministic(self):
        assert np.array_equal(sample_matrices(PAPER6, 5, key=(3,)), sample_matrices(PAPER6, 5, key=(3,)))

    def test_prefix_stable(self):
        assert np.array_equal(sample_matrices(PAPER6, 3), sample_matrices(PAPER6, 6)[:3])

    def test_n_zero(self):
        with pytest.raises(ConfigError):
            sample_matrices(PAPER6, 0)


class TestPersistence:
    def test_round_trip(self, tmp_path, rng):
        S = np.stack([random_pd(rng, 4) for _ in range(5)])
        man = save_dataset(S, tmp_path / "ds", seed=3, config={"a": 1})
        assert man.n == 5 and len(man.sha256) == 5
        assert np.array_equal(load_dataset(tmp_path / "ds" / "manifest.json").matrices, S)
        assert np.array_equal(load_dataset(tmp_path / "ds").matrices, S)

    def test_checksums_stable(self, tmp_path, rng):
        S = np.stack([random_pd(rng, 3) for _ in range(3)])
        a = save_dataset(S, tmp_path / "a")
        b = save_dataset(S, tmp_path / "b")
        assert a.sha256 == b.sha256
        assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()

    def test_truncated(self, tmp_path, rng):
        save_dataset(np.stack([random_pd(rng, 3)] * 2), tmp_path)
        f = tmp_path / "S_00001.csv"
        f.write_bytes(f.read_bytes()[:-10])
        with pytest.raises(ChecksumError):
            load_dataset(tmp_path)

    def test_unparseable(self, tmp_path, rng):
        man = save_dataset(np.stack([random_pd(rng, 3)]), tmp_path)
        f = tmp_path / "S_00000.csv"
        f.write_text("1,2\n3\n")
        body = json.loads(man.path.read_text())
        body["sha256"][0] = hashlib.sha256(f.read_bytes()).hexdigest()
        man.path.write_text(json.dumps(body))
        with pytest.raises(ParseError):
            load_dataset(tmp_path)

    def test_n_mismatch(self, tmp_path, rng):
        man = save_dataset(np.stack([random_pd(rng, 3)] * 2), tmp_path)
        body = json.loads(man.path.read_text())
        body["n"] = 3
        man.path.write_text(json.dumps(body))
        with pytest.raises(ManifestError):
            load_dataset(tmp_path)

    def test_missing(self, tmp_path):
        with pytest.raises(DatasetIOError):
            load_dataset(tmp_path / "nope.json")
