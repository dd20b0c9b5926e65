r"""Matrix calculus for the Bures-Wasserstein geometry.

Everything here is built on one primitive, the symmetric eigendecomposition
(``numpy.linalg.eigh``).  Functions accept plain ``ndarray`` inputs or
:class:`SymMatrix` wrappers and return ``ndarray`` results.  Most of them
broadcast over leading stack axes, so ``S`` of shape ``(n, d, d)`` is fine.

Linear operators on the space :math:`\mathcal{H}(d)` of real symmetric
matrices are represented by :class:`SymOperator`, an ``m x m`` matrix in the
orthonormal basis

.. math::

    \{E_{kk}\}_{k} \cup \{(E_{kl} + E_{lk}) / \sqrt{2}\}_{k < l},
    \qquad m = d(d + 1) / 2,

so that :func:`vec` is an isometry between the Frobenius norm and the
Euclidean norm and operator norms are plain matrix norms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np

from .errors import DomainError, RankError, ShapeError

EPS_SYM = 1e-10
RANK_TOL = 1e-12

__all__ = [
    "EPS_SYM",
    "RANK_TOL",
    "Definiteness",
    "SymMatrix",
    "SymOperator",
    "SpectrumDiag",
    "vec",
    "unvec",
    "sym_basis",
    "definiteness",
    "sqrt_psd",
    "pinv_sqrt",
    "bw_distance",
    "ot_map",
    "ot_map_differential",
    "a_operator",
    "spectrum_diag",
    "condition_number",
]


# ---------------------------------------------------------------------------
# Symmetric matrices


class Definiteness(enum.Enum):
    PD = "PD"
    PSD = "PSD"
    INDEFINITE = "Indefinite"


def _classify(w: np.ndarray) -> Definiteness:
    scale = np.max(np.abs(w)) if w.size else 0.0
    lo = w.min() if w.size else 0.0
    if lo > EPS_SYM * scale:
        return Definiteness.PD
    if lo >= -EPS_SYM * scale:
        return Definiteness.PSD
    return Definiteness.INDEFINITE


def _check_square(M: np.ndarray, name: str = "matrix") -> None:
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ShapeError(f"{name} must be square, got shape {M.shape}")


def _symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _as_sym(M, name: str = "matrix") -> np.ndarray:
    """Return a float array view of ``M`` after checking shape and symmetry."""
    A = np.asarray(M, dtype=float)
    _check_square(A, name)
    scale = np.max(np.abs(A)) if A.size else 0.0
    if np.max(np.abs(A - np.swapaxes(A, -1, -2)), initial=0.0) > EPS_SYM * max(scale, 1e-300):
        raise DomainError(f"{name} is not symmetric")
    return A


def definiteness(M) -> Definiteness:
    """Classify a single symmetric matrix as PD, PSD or indefinite."""
    A = _as_sym(M)
    return _classify(np.linalg.eigvalsh(A))


class SymMatrix:
    """Immutable real symmetric matrix.

    Storage is exactly symmetric: the input is symmetrized after an asymmetry
    check at relative tolerance ``EPS_SYM``.  The wrapper behaves like an
    array (``np.asarray(S)`` works), so it can be passed to every function in
    this package.
    """

    def __init__(self, entries):
        A = _as_sym(entries)
        if A.ndim != 2:
            raise ShapeError(f"SymMatrix needs a single d x d array, got {A.shape}")
        A = _symmetrize(A)
        A.setflags(write=False)
        self._entries = A

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._entries)

    @cached_property
    def definiteness(self) -> Definiteness:
        return _classify(self.eigenvalues)

    @property
    def is_psd(self) -> bool:
        return self.definiteness is not Definiteness.INDEFINITE

    @property
    def is_pd(self) -> bool:
        return self.definiteness is Definiteness.PD

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._entries
        return self._entries.astype(dtype)

    def __repr__(self) -> str:
        return f"SymMatrix(dim={self.dim}, {self.definiteness.value})"


# ---------------------------------------------------------------------------
# Vectorization of H(d)


@lru_cache(maxsize=None)
def _basis_layout(d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rows, cols = np.triu_indices(d)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    for a in (rows, cols, scale):
        a.setflags(write=False)
    return rows, cols, scale


def vec(X) -> np.ndarray:
    """Coordinates of symmetric ``X`` in the orthonormal basis of H(d).

    Broadcasts over leading axes; the last axis of the result has length
    ``d(d+1)/2``.
    """
    A = np.asarray(X, dtype=float)
    _check_square(A)
    rows, cols, scale = _basis_layout(A.shape[-1])
    return A[..., rows, cols] * scale


def unvec(v, d: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=float)
    rows, cols, scale = _basis_layout(d)
    if v.shape[-1] != rows.size:
        raise ShapeError(f"expected last axis {rows.size} for d={d}, got {v.shape[-1]}")
    X = np.zeros(v.shape[:-1] + (d, d))
    vals = v / scale
    X[..., rows, cols] = vals
    X[..., cols, rows] = vals
    return X


@lru_cache(maxsize=None)
def sym_basis(d: int) -> np.ndarray:
    """The ``m`` orthonormal basis matrices of H(d), shape ``(m, d, d)``."""
    rows, _, _ = _basis_layout(d)
    B = unvec(np.eye(rows.size), d)
    B.setflags(write=False)
    return B


def _dim_from_m(m: int) -> int:
    d = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if d * (d + 1) // 2 != m:
        raise ShapeError(f"{m} is not a triangular number")
    return d


def _congruence_coords(W: np.ndarray) -> np.ndarray:
    """Matrix ``K`` with ``K[..., b, :] = flatten(W^T B_b W)`` for basis ``B_b``.

    For an operator of the form ``X -> W[(W^T X W) * G]W^T`` the ``m x m``
    representation is ``K diag(flatten G) K^T``.
    """
    d = W.shape[-1]
    B = sym_basis(d)
    K = np.einsum("...ia,bij,...jc->...bac", W, B, W, optimize=True)
    return K.reshape(W.shape[:-2] + (B.shape[0], d * d))


# ---------------------------------------------------------------------------
# Operators


@dataclass(frozen=True, eq=False)
class SymOperator:
    """Self-adjoint linear operator on H(d) stored in the orthonormal basis."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ShapeError(f"operator matrix must be square, got {M.shape}")
        _dim_from_m(M.shape[0])
        scale = np.max(np.abs(M)) if M.size else 0.0
        if np.max(np.abs(M - M.T), initial=0.0) > 1e-8 * max(scale, 1e-300):
            raise DomainError("operator is not self-adjoint")
        M = _symmetrize(M)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def from_map(cls, fn: Callable[[np.ndarray], np.ndarray], d: int) -> "SymOperator":
        """Represent a linear map on symmetric matrices; ``fn`` must accept a stack."""
        return cls(vec(fn(sym_basis(d))).T)

    @classmethod
    def identity(cls, d: int) -> "SymOperator":
        return cls(np.eye(d * (d + 1) // 2))

    @classmethod
    def zeros(cls, d: int) -> "SymOperator":
        m = d * (d + 1) // 2
        return cls(np.zeros((m, m)))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim_base(self) -> int:
        return _dim_from_m(self.m)

    def apply(self, X) -> np.ndarray:
        """Apply to a symmetric matrix (or a stack of them)."""
        return unvec(vec(X) @ self.matrix.T, self.dim_base)

    def __call__(self, X) -> np.ndarray:
        return self.apply(X)

    def __add__(self, other: "SymOperator") -> "SymOperator":
        return SymOperator(self.matrix + other.matrix)

    def __sub__(self, other: "SymOperator") -> "SymOperator":
        return SymOperator(self.matrix - other.matrix)

    def __mul__(self, c: float) -> "SymOperator":
        return SymOperator(c * self.matrix)

    __rmul__ = __mul__

    def __neg__(self) -> "SymOperator":
        return SymOperator(-self.matrix)

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linalg.eigh(self.matrix)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eigh[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def norm(self) -> float:
        """Operator norm (largest absolute eigenvalue)."""
        return float(np.max(np.abs(self.eigenvalues)))

    def nuclear_norm(self) -> float:
        return float(np.sum(np.abs(self.eigenvalues)))

    def _spectral(self, f) -> "SymOperator":
        w, V = self.eigh
        return SymOperator((V * f(w)) @ V.T)

    def sqrt(self) -> "SymOperator":
        """PSD square root; small negative eigenvalues are clamped to zero."""
        w = self.eigenvalues
        if w.min() < -EPS_SYM * max(np.abs(w).max(), 1e-300):
            raise DomainError("operator is not positive semi-definite")
        return self._spectral(lambda x: np.sqrt(np.clip(x, 0.0, None)))

    def inv(self) -> "SymOperator":
        w = self.eigenvalues
        if np.min(np.abs(w)) <= EPS_SYM * np.abs(w).max():
            raise DomainError("operator is singular")
        return self._spectral(lambda x: 1.0 / x)

    def inv_sqrt(self) -> "SymOperator":
        w = self.eigenvalues
        if w.min() <= EPS_SYM * np.abs(w).max():
            raise DomainError("operator is not positive definite")
        return self._spectral(lambda x: 1.0 / np.sqrt(x))

    def compose(self, other: "SymOperator") -> np.ndarray:
        """Matrix of ``self o other``; not self-adjoint in general, so returned raw."""
        return self.matrix @ other.matrix

    def sandwich(self, middle: "SymOperator") -> "SymOperator":
        """``self o middle o self``, self-adjoint whenever both factors are."""
        return SymOperator(self.matrix @ middle.matrix @ self.matrix)

    def __repr__(self) -> str:
        return f"SymOperator(d={self.dim_base}, m={self.m})"


# ---------------------------------------------------------------------------
# Spectral functions


def _eigh_checked(M: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh(M)
    scale = np.max(np.abs(w), axis=-1, keepdims=True)
    if np.any(w < -EPS_SYM * scale):
        raise DomainError(f"{name} is indefinite")
    return w, V


def _from_eig(w: np.ndarray, V: np.ndarray) -> np.ndarray:
    return _symmetrize((V * w[..., None, :]) @ np.swapaxes(V, -1, -2))


def sqrt_psd(M) -> np.ndarray:
    """Square root of a PSD matrix via eigendecomposition.

    Eigenvalues in ``[-EPS_SYM*||M||, 0)`` are treated as round-off and
    clamped to zero; anything more negative raises :class:`DomainError`.
    """
    A = _as_sym(M)
    w, V = _eigh_checked(A, "matrix")
    return _from_eig(np.sqrt(np.clip(w, 0.0, None)), V)


def pinv_sqrt(M, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Pseudo-inverse square root ``((M^{1/2})^+)``.

    Eigenvalues above ``rank_tol * lambda_max`` are mapped to ``lambda^{-1/2}``,
    the rest to 0.  The zero matrix maps to zero.
    """
    A = _as_sym(M)
    w, V = _eigh_checked(A, "matrix")
    lmax = w[..., -1:]
    keep = (w > rank_tol * lmax) & (lmax > 0)
    inv = np.where(keep, 1.0 / np.sqrt(np.where(keep, w, 1.0)), 0.0)
    return _from_eig(inv, V)


def _check_pair(Q: np.ndarray, S: np.ndarray) -> None:
    if Q.shape[-1] != S.shape[-1]:
        raise ShapeError(f"dimension mismatch: {Q.shape} vs {S.shape}")


def bw_distance(Q, S):
    r"""Bures-Wasserstein distance

    .. math::

        d_B(Q, S) = \sqrt{\operatorname{tr} Q + \operatorname{tr} S
                    - 2 \operatorname{tr} (S^{1/2} Q S^{1/2})^{1/2}}

    Broadcasts over leading axes. Returns a float for single matrices.
    """
    Qa, Sa = _as_sym(Q, "Q"), _as_sym(S, "S")
    _check_pair(Qa, Sa)
    rS = sqrt_psd(Sa)
    mid = np.linalg.eigvalsh(_symmetrize(rS @ Qa @ rS))
    cross = np.sum(np.sqrt(np.clip(mid, 0.0, None)), axis=-1)
    d2 = np.trace(Qa, axis1=-2, axis2=-1) + np.trace(Sa, axis1=-2, axis2=-1) - 2.0 * cross
    out = np.sqrt(np.maximum(d2, 0.0))
    # sqrt amplifies trace round-off to ~1e-8; identical inputs are exactly 0
    out = np.where(np.all(Qa == Sa, axis=(-2, -1)), 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def _require_pd(M: np.ndarray, name: str) -> None:
    w = np.linalg.eigvalsh(M)
    if np.any(w[..., 0] <= EPS_SYM * np.max(np.abs(w), axis=-1)):
        raise DomainError(f"{name} must be positive definite")


def ot_map(Q, S) -> np.ndarray:
    r"""Optimal push-forward from ``Q`` to ``S``.

    ``T = S^{1/2} (S^{1/2} Q S^{1/2})^{-1/2} S^{1/2}`` with the pseudo-inverse
    convention for the middle factor, so ``T Q T = S`` for PD ``Q``.
    """
    Qa, Sa = _as_sym(Q, "Q"), _as_sym(S, "S")
    _check_pair(Qa, Sa)
    _require_pd(Qa, "Q")
    rS = sqrt_psd(Sa)
    return _symmetrize(rS @ pinv_sqrt(_symmetrize(rS @ Qa @ rS)) @ rS)


def _differential_factors(Q: np.ndarray, S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factors ``(W, G)`` with ``dT_Q^S(X) = -W [(W^T X W) * G] W^T``.

    With ``C = (Q^{1/2} S Q^{1/2})^{1/2} = U diag(c) U^T`` one has
    ``T Q = P diag(c) P^{-1}`` for ``P = Q^{-1/2} U``.  Differentiating
    ``T Q T = S`` gives the Sylvester equation ``(TQ) Y + Y (QT) = -T X T``,
    which is diagonal in that eigenbasis: ``W = P`` and
    ``G_ij = c_i c_j / (c_i + c_j)``.  ``S`` may be a stack.
    """
    wq, Vq = np.linalg.eigh(Q)
    rQ = _from_eig(np.sqrt(wq), Vq)
    irQ = _from_eig(1.0 / np.sqrt(wq), Vq)
    c2, U = np.linalg.eigh(_symmetrize(rQ @ S @ rQ))
    c = np.sqrt(np.clip(c2, 0.0, None))
    W = irQ @ U
    G = c[..., :, None] * c[..., None, :] / (c[..., :, None] + c[..., None, :])
    return W, G


def ot_map_differential(Q, S) -> SymOperator:
    """Frechet differential of ``Q -> T_Q^S`` as an operator on H(d).

    Self-adjoint and negative definite for PD ``Q`` and ``S``.
    """
    Qa, Sa = _as_sym(Q, "Q"), _as_sym(S, "S")
    if Qa.ndim != 2 or Sa.ndim != 2:
        raise ShapeError("ot_map_differential takes single matrices")
    _check_pair(Qa, Sa)
    _require_pd(Qa, "Q")
    _require_pd(Sa, "S")
    W, G = _differential_factors(Qa, Sa)
    K = _congruence_coords(W)
    return SymOperator(-(K * G.reshape(-1)) @ K.T)


def a_operator(Q) -> SymOperator:
    r"""The operator :math:`\mathbb{A}_Q = (-\tfrac12 dT_Q^Q)^{1/2}`.

    In the eigenbasis of ``Q`` it scales entry ``(i, j)`` by
    ``1 / sqrt(2 (q_i + q_j))``.
    """
    Qa = _as_sym(Q, "Q")
    if Qa.ndim != 2:
        raise ShapeError("a_operator takes a single matrix")
    q, V = np.linalg.eigh(Qa)
    if q[0] <= EPS_SYM * np.abs(q).max():
        raise DomainError("Q must be positive definite")
    h = 1.0 / np.sqrt(2.0 * (q[:, None] + q[None, :]))
    K = _congruence_coords(V)
    return SymOperator((K * h.reshape(-1)) @ K.T)


@dataclass(frozen=True)
class SpectrumDiag:
    eigenvalues: np.ndarray
    lambda1_sq: float
    lambda2_sq: float
    varkappa: float
    gamma: float
    trace: float


def spectrum_diag(psi: SymOperator | np.ndarray) -> SpectrumDiag:
    """Anti-concentration functionals of a PSD operator.

    ``Lambda_r^2`` sums the squared eigenvalues from rank ``r`` on (eigenvalues
    sorted non-increasingly), ``varkappa = (Lambda_1 Lambda_2)^{-1/2}`` and
    ``gamma = varkappa * tr``.  Also accepts a bare symmetric matrix of any size.
    """
    w = psi.eigenvalues if isinstance(psi, SymOperator) else np.linalg.eigvalsh(_as_sym(psi))
    lam = np.sort(w)[::-1]
    l1 = float(np.sum(lam**2))
    l2 = float(np.sum(lam[1:] ** 2))
    if l1 == 0.0 or np.sqrt(l2) <= EPS_SYM * np.sqrt(l1):
        raise RankError("operator rank <= 1: varkappa undefined")
    varkappa = (l1 * l2) ** -0.25
    tr = float(np.sum(lam))
    return SpectrumDiag(lam, l1, l2, varkappa, varkappa * tr, tr)


def condition_number(X) -> float:
    """``lambda_max / lambda_min`` of a symmetric PD matrix or operator."""
    if isinstance(X, SymOperator):
        w = X.eigenvalues
    else:
        w = np.linalg.eigvalsh(_as_sym(X))
    if w[0] <= EPS_SYM * np.abs(w).max():
        raise DomainError("condition number needs a positive definite input")
    return float(w[-1] / w[0])
