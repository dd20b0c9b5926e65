"""Operator-level diagnostics around a barycenter.

Centred transport maps, their covariance ``Sigma``, the gluing operator ``F``
(minus the mean map differential), the sandwich covariance
``Xi = F^{-1} Sigma F^{-1}`` and Monte-Carlo draws of the limiting Gaussian
norms ``||Z||_F`` and ``||A Z||_F``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barycenter import SampleSet
from .errors import ConfigError, DomainError, ShapeError
from .linalg import (
    SymOperator,
    _as_sym,
    _congruence_coords,
    _differential_factors,
    _require_pd,
    a_operator,
    condition_number,
    ot_map,
    vec,
)
from .rng import stream

__all__ = [
    "DiagnosticBundle",
    "DiscrepancyScalars",
    "centred_maps",
    "sigma_op",
    "f_op",
    "xi_op",
    "discrepancy",
    "diagnostic_bundle",
    "sample_gaussian_stat",
]

GAUSS_CHUNK = 8192


def centred_maps(Q, data: SampleSet) -> np.ndarray:
    """``T_Q^{S_i} - I`` for every sample, shape ``(n, d, d)``."""
    Qa = _as_sym(Q, "Q")
    return ot_map(Qa, data.matrices) - np.eye(data.d)


def sigma_op(Q, data: SampleSet) -> SymOperator:
    """Weighted second moment ``sum_i w~_i vec(T_i) vec(T_i)^T`` of the centred maps.

    With unit weights this is the plain ``1/n`` average.
    """
    V = vec(centred_maps(Q, data))
    w = data.normalized_weights
    return SymOperator((V * w[:, None]).T @ V)


def f_op(Q, data: SampleSet, multipliers=None, chunk: int = 64) -> SymOperator:
    """Gluing operator ``-(1/n) sum_i m_i dT_Q^{S_i}``.

    Every ``S_i`` with a non-zero multiplier must be PD; offenders are listed
    in the raised :class:`DomainError`.
    """
    Qa = _as_sym(Q, "Q")
    _require_pd(Qa, "Q")
    n, d = data.n, data.d
    m = np.ones(n) if multipliers is None else np.asarray(multipliers, dtype=float)
    if m.shape != (n,):
        raise ShapeError(f"{m.size} multipliers for {n} matrices")
    used = np.flatnonzero(m != 0)
    bad = [int(i) for i in used if not data.pd_mask[i]]
    if bad:
        raise DomainError(f"singular S_i at indices {bad}")
    mdim = d * (d + 1) // 2
    acc = np.zeros((mdim, mdim))
    for start in range(0, used.size, chunk):
        idx = used[start:start + chunk]
        W, G = _differential_factors(Qa, data.matrices[idx])
        K = _congruence_coords(W)
        KG = K * (m[idx, None, None] * G.reshape(idx.size, 1, d * d))
        acc += np.einsum("nad,nbd->ab", KG, K)
    return SymOperator(acc / n)


def xi_op(sigma: SymOperator, F: SymOperator) -> SymOperator:
    """Sandwich covariance ``F^{-1} Sigma F^{-1}``."""
    if sigma.m != F.m:
        raise ShapeError("Sigma and F act on different spaces")
    return F.inv().sandwich(sigma)


@dataclass(frozen=True)
class DiscrepancyScalars:
    q: float
    f: float
    eta: float


def discrepancy(Q_ref, Q, F_ref: SymOperator, F: SymOperator) -> DiscrepancyScalars:
    """Relative deviations of ``Q`` from ``Q_ref`` and ``F`` from ``F_ref``.

    ``q = ||Q_ref^{-1/2} Q Q_ref^{-1/2} - I||``,
    ``f = ||F_ref^{-1/2} F F_ref^{-1/2} - Id||`` (operator norms) and
    ``eta = 2 sqrt(kappa(F_ref)) (q + f)``.
    """
    Qr = _as_sym(Q_ref, "Q_ref")
    Qa = _as_sym(Q, "Q")
    w, V = np.linalg.eigh(Qr)
    if w[0] <= 0:
        raise DomainError("Q_ref must be positive definite")
    irQ = (V / np.sqrt(w)) @ V.T
    q = float(np.max(np.abs(np.linalg.eigvalsh(irQ @ Qa @ irQ - np.eye(Qr.shape[0])))))
    iF = F_ref.inv_sqrt()
    f = iF.sandwich(F).matrix - np.eye(F.m)
    f = float(np.max(np.abs(np.linalg.eigvalsh(f))))
    eta = 2.0 * np.sqrt(condition_number(F_ref)) * (q + f)
    return DiscrepancyScalars(q, f, eta)


@dataclass(frozen=True)
class DiagnosticBundle:
    base_point: np.ndarray
    Sigma: SymOperator
    F: SymOperator
    Xi: SymOperator
    A: SymOperator


def diagnostic_bundle(Q, data: SampleSet, multipliers=None) -> DiagnosticBundle:
    """``Sigma``, ``F``, ``Xi`` and ``A`` evaluated at base point ``Q``."""
    Qa = _as_sym(Q, "Q")
    sigma = sigma_op(Qa, data)
    F = f_op(Qa, data, multipliers)
    return DiagnosticBundle(Qa, sigma, F, xi_op(sigma, F), a_operator(Qa))


def sample_gaussian_stat(Xi: SymOperator, A: SymOperator | None = None, n_draws: int = 100_000,
                         seed: int = 0) -> np.ndarray:
    """Norms of ``Z ~ N(0, Xi)``, or of ``A Z`` when ``A`` is given.

    ``Z`` is ``Xi^{1/2} g`` with ``g`` standard normal coordinates.  Draws come
    in fixed-size chunks, chunk ``j`` from stream ``(seed, j)``, so the output
    does not depend on how chunks are scheduled.
    """
    if n_draws < 1:
        raise ConfigError("n_draws must be at least 1")
    L = Xi.sqrt().matrix
    if A is not None:
        if A.m != Xi.m:
            raise ShapeError("A and Xi act on different spaces")
        L = A.matrix @ L
    out = np.empty(n_draws)
    for j, start in enumerate(range(0, n_draws, GAUSS_CHUNK)):
        size = min(GAUSS_CHUNK, n_draws - start)
        g = stream(seed, j).standard_normal((size, Xi.m))
        out[start:start + size] = np.linalg.norm(g @ L.T, axis=1)
    return out
