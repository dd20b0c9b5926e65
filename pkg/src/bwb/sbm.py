"""Weighted stochastic block model graphs, Laplacians and dataset files.

Matrices are stored one per CSV file (rows, 17 significant digits) next to a
JSON manifest ``{d, n, seed, config, files, sha256}``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .barycenter import SampleSet
from .errors import ChecksumError, ConfigError, ManifestError, ParseError, ShapeError
from .rng import stream

__all__ = [
    "SbmConfig",
    "WeightedGraph",
    "DatasetManifest",
    "PAPER6",
    "paper6_config",
    "generate_sbm",
    "laplacian",
    "invert_laplacian",
    "sample_matrices",
    "save_matrix",
    "load_matrix",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class SbmConfig:
    """Block model parameters.

    Either ``block_sizes`` is given explicitly (summing to ``d``), or it is
    ``None`` and every block but the last gets ``base_size + U{-jitter..jitter}``
    nodes with the last block taking the remainder.
    """

    d: int
    p: tuple[tuple[float, ...], ...]
    weight_means: tuple[tuple[float, ...], ...]
    block_sizes: tuple[int, ...] | None = None
    base_size: int | None = None
    size_jitter: int = 0
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        mu = np.asarray(self.weight_means, dtype=float)
        k = p.shape[0]
        if p.ndim != 2 or p.shape != (k, k) or mu.shape != (k, k):
            raise ConfigError("p and weight_means must be square with one row per block")
        if np.any((p < 0) | (p > 1)):
            raise ConfigError("edge probabilities must lie in [0, 1]")
        if np.any(mu <= 0):
            raise ConfigError("Poisson weight means must be positive")
        if not (np.array_equal(p, p.T) and np.array_equal(mu, mu.T)):
            raise ConfigError("p and weight_means must be symmetric across block pairs")
        if self.d < 1:
            raise ConfigError("d must be positive")
        if self.size_jitter < 0:
            raise ConfigError("size_jitter must be non-negative")
        if self.block_sizes is not None:
            if len(self.block_sizes) != k or sum(self.block_sizes) != self.d:
                raise ConfigError(f"block_sizes {self.block_sizes} do not split d={self.d} into {k} blocks")
            if min(self.block_sizes) <= 0:
                raise ConfigError("block sizes must be positive")

    @property
    def n_blocks(self) -> int:
        return len(self.p)

    def with_seed(self, seed: int) -> "SbmConfig":
        return SbmConfig(**{**asdict(self), "seed": seed})

    def to_dict(self) -> dict:
        out = asdict(self)
        out["p"] = [list(r) for r in self.p]
        out["weight_means"] = [list(r) for r in self.weight_means]
        if self.block_sizes is not None:
            out["block_sizes"] = list(self.block_sizes)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SbmConfig":
        data = dict(data)
        data["p"] = tuple(tuple(r) for r in data["p"])
        data["weight_means"] = tuple(tuple(r) for r in data["weight_means"])
        if data.get("block_sizes") is not None:
            data["block_sizes"] = tuple(data["block_sizes"])
        return cls(**data)


PAPER6_P = ((0.8, 0.2), (0.2, 0.5))
PAPER6_MEANS = ((12.0, 2.0), (2.0, 7.0))
PAPER6_R = 1.0


def paper6_config(d: int = 20, size_jitter: int = 2, seed: int = 0) -> SbmConfig:
    """Two communities, p = 0.8/0.5/0.2, Poisson means 12/7/2, first block d/2 +- jitter."""
    return SbmConfig(d=d, p=PAPER6_P, weight_means=PAPER6_MEANS, base_size=d // 2,
                     size_jitter=size_jitter, seed=seed)


PAPER6 = paper6_config()


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Undirected weighted graph.

    ``edges`` marks drawn edges, which may carry weight 0; it defaults to the
    support of ``adjacency``.
    """

    adjacency: np.ndarray
    labels: np.ndarray = field(default=None)
    edges: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ShapeError(f"adjacency must be square, got {A.shape}")
        if not np.array_equal(A, A.T):
            raise ConfigError("adjacency must be symmetric")
        if np.any(np.diag(A) != 0):
            raise ConfigError("self loops are not allowed")
        if np.any(A < 0):
            raise ConfigError("edge weights must be non-negative")
        if self.edges is None:
            object.__setattr__(self, "edges", A > 0)
        elif np.any(~self.edges & (A > 0)):
            raise ConfigError("positive weight outside the edge set")

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]


def block_sizes(cfg: SbmConfig, rng: np.random.Generator) -> list[int]:
    if cfg.block_sizes is not None:
        return list(cfg.block_sizes)
    k = cfg.n_blocks
    base = cfg.base_size if cfg.base_size is not None else cfg.d // k
    j = cfg.size_jitter
    sizes = [base + int(rng.integers(-j, j + 1)) for _ in range(k - 1)]
    sizes.append(cfg.d - sum(sizes))
    if min(sizes) <= 0:
        raise ConfigError(f"non-positive block size after jitter: {sizes}")
    return sizes


@lru_cache(maxsize=256)
def _pair_layout(d: int, sizes: tuple[int, ...], p, mu):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    rows, cols = np.triu_indices(d, k=1)
    pp = np.asarray(p)[labels[rows], labels[cols]]
    mm = np.asarray(mu)[labels[rows], labels[cols]]
    for a in (labels, rows, cols, pp, mm):
        a.setflags(write=False)
    return labels, rows, cols, pp, mm


def _draw_graph(cfg: SbmConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sizes = tuple(block_sizes(cfg, rng))
    labels, rows, cols, p, mu = _pair_layout(cfg.d, sizes, cfg.p, cfg.weight_means)
    present = rng.random(rows.size) < p
    weights = np.where(present, rng.poisson(mu), 0).astype(float)
    A = np.zeros((cfg.d, cfg.d))
    A[rows, cols] = weights
    A[cols, rows] = weights
    return A, labels, present


def generate_sbm(cfg: SbmConfig, rng: np.random.Generator | None = None) -> WeightedGraph:
    """Draw one weighted SBM graph.

    Each unordered pair ``{i, j}`` is an edge with probability
    ``p[block(i), block(j)]``; edges carry ``Poisson(weight_means[...])``
    weights (a zero draw is kept as a zero-weight edge).  Nodes are labelled
    contiguously by block.  Uses ``cfg.seed`` unless ``rng`` is given.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    A, labels, present = _draw_graph(cfg, rng)
    rows, cols = np.triu_indices(cfg.d, k=1)
    E = np.zeros((cfg.d, cfg.d), dtype=bool)
    E[rows, cols] = present
    E[cols, rows] = present
    return WeightedGraph(A, labels, E)


def laplacian(G: WeightedGraph) -> np.ndarray:
    """``D - A``; rows sum to zero exactly for integer weights."""
    A = G.adjacency
    return np.diag(A.sum(axis=1)) - A


def invert_laplacian(L, r: float = 1.0) -> np.ndarray:
    """Regularized inverse ``(L + r I)^{-1}``; eigenvalues lie in ``(0, 1/r]``."""
    if not r > 0:
        raise ConfigError("regularization r must be positive")
    L = np.asarray(L, dtype=float)
    w, V = np.linalg.eigh(L)
    # L is PSD with a zero eigenvalue; clamping keeps the top of the spectrum at 1/r
    w = 1.0 / (np.maximum(w, 0.0) + r)
    out = (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def sample_matrices(cfg: SbmConfig, n: int, r: float = PAPER6_R, key: tuple[int, ...] = ()) -> np.ndarray:
    """``n`` inverted Laplacians; graph ``i`` uses the stream ``(cfg.seed, *key, i)``."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    L = np.empty((n, cfg.d, cfg.d))
    for i in range(n):
        # same draws as generate_sbm, without re-validating each graph
        A = _draw_graph(cfg, stream(cfg.seed, *key, i))[0]
        L[i] = -A
        L[i].flat[:: cfg.d + 1] = A.sum(axis=1)
    return invert_laplacian(L, r)


# ---------------------------------------------------------------------------
# Persistence


@dataclass(frozen=True)
class DatasetManifest:
    path: Path
    d: int
    n: int
    seed: int | None
    config: dict
    files: list[str]
    sha256: list[str]

    def to_json(self) -> str:
        body = {"d": self.d, "n": self.n, "seed": self.seed, "config": self.config,
                "files": self.files, "sha256": self.sha256}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def _format_matrix(M: np.ndarray) -> str:
    return "".join(",".join(f"{x:.17g}" for x in row) + "\n" for row in M)


def save_matrix(M, path) -> str:
    """Write ``M`` as CSV; returns the SHA-256 of the bytes written."""
    data = _format_matrix(np.asarray(M, dtype=float)).encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def _parse_matrix(raw: bytes, where: str) -> np.ndarray:
    try:
        rows = [[float(x) for x in line.split(",")] for line in raw.decode().splitlines() if line.strip()]
        M = np.array(rows, dtype=float)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ParseError(f"{where}: {exc}") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ParseError(f"{where}: not a square matrix")
    return M


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc.strerror}") from None
    return _parse_matrix(raw, str(path))


def save_dataset(matrices, dir_path, seed: int | None = None, config: dict | None = None) -> DatasetManifest:
    """Write each matrix to ``dir_path/S_#####.csv`` plus ``manifest.json``."""
    S = np.asarray(matrices, dtype=float)
    if S.ndim != 3 or S.shape[1] != S.shape[2]:
        raise ShapeError(f"expected an (n, d, d) stack, got {S.shape}")
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    files, sums = [], []
    for i, M in enumerate(S):
        name = f"S_{i:05d}.csv"
        sums.append(save_matrix(M, out / name))
        files.append(name)
    manifest = DatasetManifest(out / "manifest.json", S.shape[1], S.shape[0], seed,
                               config or {}, files, sums)
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest


def read_manifest(manifest_path) -> DatasetManifest:
    path = Path(manifest_path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        body = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from None
    try:
        m = DatasetManifest(path, int(body["d"]), int(body["n"]), body.get("seed"),
                            body.get("config", {}), list(body["files"]), list(body["sha256"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"malformed manifest {path}: {exc}") from None
    if m.n != len(m.files) or m.n != len(m.sha256):
        raise ManifestError(f"manifest declares n={m.n} but lists {len(m.files)} files")
    return m


def load_dataset(manifest_path) -> SampleSet:
    """Load and verify a dataset written by :func:`save_dataset`."""
    m = read_manifest(manifest_path)
    base = m.path.parent
    out = np.empty((m.n, m.d, m.d))
    for i, (name, digest) in enumerate(zip(m.files, m.sha256)):
        fp = base / name
        try:
            raw = fp.read_bytes()
        except OSError as exc:
            raise ManifestError(f"cannot read {fp}: {exc.strerror}") from None
        if hashlib.sha256(raw).hexdigest() != digest:
            raise ChecksumError(f"checksum mismatch for {fp}")
        M = _parse_matrix(raw, str(fp))
        if M.shape != (m.d, m.d):
            raise ParseError(f"{fp}: shape {M.shape}, manifest says d={m.d}")
        out[i] = M
    return SampleSet(out)
