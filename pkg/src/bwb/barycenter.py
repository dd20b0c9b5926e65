"""Weighted Bures-Wasserstein barycenters by fixed-point iteration."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, DomainError, ShapeError, WeightError
from .linalg import EPS_SYM, _as_sym, _from_eig, _symmetrize, ot_map

__all__ = [
    "SampleSet",
    "SolverConfig",
    "BarycenterResult",
    "barycenter",
    "residual",
    "mean_map_check",
    "objective",
]


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Ordered stack of PSD matrices with non-negative weights.

    ``matrices`` has shape ``(n, d, d)``; ``weights`` defaults to all ones.
    """

    matrices: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        S = _as_sym(self.matrices, "matrices")
        if S.ndim == 2:
            S = S[None]
        if S.ndim != 3 or S.shape[0] == 0:
            raise ShapeError(f"expected a non-empty (n, d, d) stack, got {S.shape}")
        S = _symmetrize(S)
        S.setflags(write=False)
        w = np.ones(S.shape[0]) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (S.shape[0],):
            raise ShapeError(f"{w.shape[0] if w.ndim else w.size} weights for {S.shape[0]} matrices")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise WeightError("weights must be finite and non-negative")
        if w.sum() <= 0:
            raise WeightError("weights sum to zero")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "matrices", S)
        object.__setattr__(self, "weights", w)
        if np.any(self.eigenvalues[:, 0] < -EPS_SYM * np.abs(self.eigenvalues).max(axis=1)):
            raise DomainError("every matrix must be positive semi-definite")
        if not np.any(self.pd_mask & (w > 0)):
            raise DomainError("no positively weighted matrix is positive definite")

    @classmethod
    def _trusted(cls, parent: "SampleSet", weights: np.ndarray) -> "SampleSet":
        # Reweighting keeps the matrices, so cached spectra carry over.
        obj = object.__new__(cls)
        w = np.asarray(weights, dtype=float).copy()
        w.setflags(write=False)
        object.__setattr__(obj, "matrices", parent.matrices)
        object.__setattr__(obj, "weights", w)
        obj.__dict__["eigenvalues"] = parent.eigenvalues
        return obj

    def reweighted(self, weights) -> "SampleSet":
        """Same matrices, new weights (validated)."""
        w = np.asarray(weights, dtype=float)
        if w.shape != self.weights.shape:
            raise ShapeError(f"{w.size} weights for {self.n} matrices")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise WeightError("weights must be finite and non-negative")
        if w.sum() <= 0:
            raise WeightError("weights sum to zero")
        out = SampleSet._trusted(self, w)
        if not np.any(out.pd_mask & (w > 0)):
            raise DomainError("no positively weighted matrix is positive definite")
        return out

    @property
    def n(self) -> int:
        return self.matrices.shape[0]

    @property
    def d(self) -> int:
        return self.matrices.shape[-1]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrices)

    @property
    def pd_mask(self) -> np.ndarray:
        ev = self.eigenvalues
        return ev[:, 0] > EPS_SYM * np.abs(ev).max(axis=1)

    @property
    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 500
    tol: float = 1e-10
    init: np.ndarray | None = None
    eig_floor: float = 1e-12
    record_history: bool = False

    def __post_init__(self):
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        if self.eig_floor < 0:
            raise ConfigError("eig_floor must be non-negative")


@dataclass(frozen=True)
class BarycenterResult:
    Q: np.ndarray
    iterations: int
    residual: float
    converged: bool
    objective_history: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)


def _active(data: SampleSet) -> tuple[np.ndarray, np.ndarray]:
    # Zero-weight items are never factored.
    keep = data.weights > 0
    w = data.weights[keep]
    return data.matrices[keep], w / w.sum()


def _root_pair(Q: np.ndarray, floor: float) -> tuple[np.ndarray, np.ndarray]:
    q, V = np.linalg.eigh(Q)
    q = np.maximum(q, floor * max(np.sum(q), 0.0))
    return _from_eig(np.sqrt(q), V), _from_eig(1.0 / np.sqrt(q), V)


def _mean_root(rQ: np.ndarray, S: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, float]:
    """``R = sum_i w_i (Q^{1/2} S_i Q^{1/2})^{1/2}`` and ``tr R``.

    Summation runs in index order so results are bit-reproducible.
    """
    lam, U = np.linalg.eigh(_symmetrize(rQ @ S @ rQ))
    root = np.sqrt(np.clip(lam, 0.0, None))
    R = np.einsum("n,nij->ij", w, (U * root[:, None, :]) @ np.swapaxes(U, -1, -2))
    return _symmetrize(R), float(w @ root.sum(axis=1))


def _residual_from(Q: np.ndarray, R: np.ndarray) -> float:
    return float(np.linalg.norm(Q - R) / np.trace(Q))


def residual(Q, data: SampleSet) -> float:
    """Relative fixed-point residual ``||Q - R(Q)||_F / tr Q``."""
    Qa = _as_sym(Q, "Q")
    S, w = _active(data)
    if Qa.shape[-1] != data.d:
        raise ShapeError(f"Q has dim {Qa.shape[-1]}, data has dim {data.d}")
    rQ, _ = _root_pair(Qa, 0.0)
    R, _ = _mean_root(rQ, S, w)
    return _residual_from(Qa, R)


def objective(Q, data: SampleSet) -> float:
    """Weighted Frechet functional ``sum_i w~_i d_B^2(Q, S_i)``."""
    Qa = _as_sym(Q, "Q")
    S, w = _active(data)
    rQ, _ = _root_pair(Qa, 0.0)
    _, cross = _mean_root(rQ, S, w)
    return float(np.trace(Qa) + w @ np.trace(S, axis1=1, axis2=2) - 2.0 * cross)


def mean_map_check(Q, data: SampleSet) -> float:
    """``||sum_i w~_i T_Q^{S_i} - I||_F``; zero exactly at the barycenter."""
    Qa = _as_sym(Q, "Q")
    S, w = _active(data)
    T = ot_map(Qa, S)
    return float(np.linalg.norm(np.einsum("n,nij->ij", w, T) - np.eye(data.d)))


def barycenter(data: SampleSet, cfg: SolverConfig | None = None) -> BarycenterResult:
    r"""Weighted Bures-Wasserstein barycenter.

    Iterates

    .. math::

        Q_{k+1} = Q_k^{-1/2} \Big(\sum_i \tilde w_i
                  (Q_k^{1/2} S_i Q_k^{1/2})^{1/2}\Big)^2 Q_k^{-1/2}

    from the Euclidean mean (or ``cfg.init``) until the relative residual drops
    to ``cfg.tol``.  Failing to converge within ``cfg.max_iter`` is reported
    through ``converged=False``, not raised.
    """
    cfg = cfg or SolverConfig()
    S, w = _active(data)
    tr_S = float(w @ np.trace(S, axis1=1, axis2=2))
    if cfg.init is None:
        Q = _symmetrize(np.einsum("n,nij->ij", w, S))
    else:
        Q = _as_sym(cfg.init, "init")
        if Q.shape != (data.d, data.d):
            raise ShapeError(f"init has shape {Q.shape}, expected {(data.d, data.d)}")
        Q = _symmetrize(Q.copy())

    obj_hist: list[float] = []
    res_hist: list[float] = []
    res = np.inf
    for k in range(1, cfg.max_iter + 1):
        rQ, irQ = _root_pair(Q, cfg.eig_floor)
        R, cross = _mean_root(rQ, S, w)
        res = _residual_from(Q, R)
        if cfg.record_history:
            obj_hist.append(float(np.trace(Q) + tr_S - 2.0 * cross))
            res_hist.append(res)
        if res <= cfg.tol:
            return BarycenterResult(Q, k, res, True, obj_hist, res_hist)
        if k == cfg.max_iter:
            break
        Q = _symmetrize(irQ @ R @ R @ irQ)
    return BarycenterResult(Q, cfg.max_iter, res, False, obj_hist, res_hist)
