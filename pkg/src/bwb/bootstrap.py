"""Multiplier bootstrap for barycenters and empirical-CDF tooling."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .barycenter import SampleSet, SolverConfig, barycenter
from .errors import ConfigError, DegenerateResampleError, DomainError, ParseError, ShapeError
from .linalg import _as_sym, bw_distance, unvec, vec
from .rng import stream

__all__ = [
    "WeightScheme",
    "StatKind",
    "EmpiricalCdf",
    "BootstrapReport",
    "Bands",
    "draw_weights",
    "statistic",
    "run_bootstrap",
    "ks_distance",
    "mean_cdf",
    "confidence_bands",
    "quantile",
    "resolve_threads",
]


# ---------------------------------------------------------------------------
# Weights


@dataclass(frozen=True)
class WeightScheme:
    """Multiplier law with unit mean and unit variance.

    ``kind`` is one of ``exp1`` (Exponential(1)), ``po1`` (Poisson(1)),
    ``bern2`` (2 * Bernoulli(1/2)) or ``provided`` with explicit ``values``.
    """

    kind: str
    values: tuple[float, ...] | None = None

    BUILTIN = ("exp1", "po1", "bern2")

    def __post_init__(self):
        if self.kind not in self.BUILTIN + ("provided",):
            raise ConfigError(f"unknown weight scheme {self.kind!r}")
        if self.kind == "provided":
            if self.values is None:
                raise ConfigError("provided scheme needs values")
            if any(v < 0 for v in self.values):
                raise ConfigError("provided weights must be non-negative")

    @classmethod
    def provided(cls, values) -> "WeightScheme":
        return cls("provided", tuple(float(v) for v in values))

    @classmethod
    def parse(cls, name: str, n: int | None = None) -> "WeightScheme":
        """CLI names: ``exp1``, ``po1``, ``bern2`` and ``ones`` (all weights 1)."""
        name = name.lower()
        if name == "ones":
            if n is None:
                raise ConfigError("scheme 'ones' needs the sample size")
            return cls.provided(np.ones(n))
        return cls(name)

    @property
    def label(self) -> str:
        return self.kind


def draw_weights(scheme: WeightScheme, n: int, rng: np.random.Generator | int) -> np.ndarray:
    """``n`` i.i.d. multipliers; ``rng`` may be a Generator or an integer seed."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    if scheme.kind == "provided":
        if len(scheme.values) != n:
            raise ShapeError(f"provided scheme has {len(scheme.values)} weights, need {n}")
        return np.array(scheme.values, dtype=float)
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if scheme.kind == "exp1":
        return rng.exponential(1.0, n)
    if scheme.kind == "po1":
        return rng.poisson(1.0, n).astype(float)
    return 2.0 * rng.integers(0, 2, n).astype(float)


# ---------------------------------------------------------------------------
# Empirical CDFs


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Right-continuous step function ``F(x) = #{points <= x} / n``."""

    points: np.ndarray

    def __post_init__(self):
        p = np.sort(np.asarray(self.points, dtype=float).ravel())
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @property
    def n(self) -> int:
        return self.points.size

    def __call__(self, x) -> np.ndarray | float:
        if self.n == 0:
            raise DomainError("empty CDF")
        out = np.searchsorted(self.points, x, side="right") / self.n
        return float(out) if np.ndim(out) == 0 else out


def ks_distance(F: EmpiricalCdf, G: EmpiricalCdf) -> float:
    """Exact ``sup_x |F(x) - G(x)|`` over the merged jump points."""
    if F.n == 0 or G.n == 0:
        raise DomainError("KS distance of an empty CDF")
    x = np.union1d(F.points, G.points)
    return float(np.max(np.abs(F(x) - G(x))))


def mean_cdf(cdfs: Sequence[EmpiricalCdf]) -> EmpiricalCdf:
    """Pointwise average of equal-size empirical CDFs (the pooled sample)."""
    if not cdfs:
        raise DomainError("no CDFs to average")
    sizes = {c.n for c in cdfs}
    if len(sizes) != 1:
        raise ShapeError(f"CDFs of unequal sizes {sorted(sizes)} cannot be pooled")
    return EmpiricalCdf(np.concatenate([c.points for c in cdfs]))


def quantile(cdf: EmpiricalCdf, level: float) -> float:
    """Order statistic of rank ``ceil(level * n)`` (1-based)."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"quantile level {level} outside (0, 1)")
    if cdf.n == 0:
        raise DomainError("quantile of an empty CDF")
    # round() absorbs representation error, e.g. 0.95 * 1000
    k = max(1, math.ceil(round(level * cdf.n, 9)))
    return float(cdf.points[k - 1])


@dataclass(frozen=True)
class Bands:
    x: np.ndarray
    lo: np.ndarray
    mean: np.ndarray
    hi: np.ndarray
    q05: np.ndarray
    q95: np.ndarray

    def contains(self, values, band: str = "minmax") -> np.ndarray:
        lo, hi = (self.lo, self.hi) if band == "minmax" else (self.q05, self.q95)
        values = np.asarray(values)
        return (values >= lo) & (values <= hi)

    def write_csv(self, path) -> None:
        _write_rows(path, ["x", "lo", "mean", "hi"],
                    zip(self.x, self.lo, self.mean, self.hi))


def confidence_bands(cdfs: Sequence[EmpiricalCdf], grid) -> Bands:
    """Pointwise min / mean / max and 5% / 95% quantiles of CDFs on ``grid``."""
    if len(cdfs) < 2:
        raise DomainError("confidence bands need at least two CDFs")
    x = np.asarray(grid, dtype=float)
    if np.any(np.diff(x) < 0):
        raise ConfigError("grid must be sorted")
    vals = np.stack([c(x) for c in cdfs])
    return Bands(x, vals.min(axis=0), vals.mean(axis=0), vals.max(axis=0),
                 np.quantile(vals, 0.05, axis=0), np.quantile(vals, 0.95, axis=0))


# ---------------------------------------------------------------------------
# Bootstrap


class StatKind(str, Enum):
    FROBENIUS = "fro"
    BURES_WASSERSTEIN = "bw"

    @classmethod
    def parse(cls, name: str) -> "StatKind":
        aliases = {"fro": cls.FROBENIUS, "frobenius": cls.FROBENIUS,
                   "bw": cls.BURES_WASSERSTEIN, "bures-wasserstein": cls.BURES_WASSERSTEIN}
        try:
            return aliases[name.lower()]
        except KeyError:
            raise ConfigError(f"unknown statistic {name!r}") from None


def statistic(kind: StatKind, A, B) -> float:
    """``||A - B||_F`` or ``d_B(A, B)``."""
    if StatKind(kind) is StatKind.FROBENIUS:
        return float(np.linalg.norm(np.asarray(A) - np.asarray(B)))
    return bw_distance(A, B)


@dataclass(frozen=True)
class BootstrapReport:
    stat_kind: StatKind
    n: int
    B: int
    scheme: str
    seed: int
    scale: float
    replicates: np.ndarray
    rejected_draws: int
    quantiles: dict[float, float] = field(default_factory=dict)
    iterations: np.ndarray | None = None

    @property
    def cdf(self) -> EmpiricalCdf:
        return EmpiricalCdf(self.replicates)

    def to_dict(self) -> dict:
        return {
            "stat_kind": StatKind(self.stat_kind).value,
            "n": self.n,
            "B": self.B,
            "scheme": self.scheme,
            "seed": self.seed,
            "scale": self.scale,
            "replicates": [float(x) for x in self.replicates],
            "quantiles": {repr(float(k)): v for k, v in sorted(self.quantiles.items())},
            "rejected_draws": self.rejected_draws,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_json(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, body: dict) -> "BootstrapReport":
        return cls(StatKind(body["stat_kind"]), int(body["n"]), int(body["B"]), body["scheme"],
                   int(body["seed"]), float(body.get("scale", math.sqrt(body["n"]))),
                   np.asarray(body["replicates"], dtype=float), int(body["rejected_draws"]),
                   {float(k): float(v) for k, v in body.get("quantiles", {}).items()})

    @classmethod
    def read_json(cls, path) -> "BootstrapReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def write_cdf_csv(self, path) -> None:
        c = self.cdf
        y = c(c.points)
        _write_rows(path, ["x", "lo", "mean", "hi"], zip(c.points, y, y, y))


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else ``$BWB_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("BWB_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ConfigError("threads must be at least 1")
    return threads


class _LinearStart:
    """First-order prediction of ``Q_u`` from the fixed-point equation at ``Q_n``.

    Solves ``F (Q_u - Q_n) = sum_i u~_i (T_i - I)`` with the maps and the
    gluing operator frozen at ``Q_n``.  The barycenter iteration then only
    removes the second-order remainder.
    """

    def __init__(self, data: SampleSet, Q_n: np.ndarray):
        from .estimators import centred_maps, f_op

        F = f_op(Q_n, data, multipliers=data.n * data.normalized_weights)
        self.Q_n = Q_n
        self.V = vec(centred_maps(Q_n, data))
        self.F_inv = F.inv().matrix

    def __call__(self, u: np.ndarray) -> np.ndarray:
        Q = self.Q_n + unvec(self.F_inv @ (u @ self.V / u.sum()), self.Q_n.shape[0])
        # a large draw can push the prediction out of the cone; fall back to Q_n
        return Q if np.linalg.eigvalsh(Q)[0] > 0 else self.Q_n


def _one_replicate(data: SampleSet, Q_n: np.ndarray, scheme: WeightScheme, kind: StatKind,
                   cfg: SolverConfig, seed: int, b: int, budget: int,
                   predict: _LinearStart | None = None) -> tuple[float, int, int]:
    rng = stream(seed, b)
    pd = data.pd_mask
    rejected = 0
    while True:
        u = draw_weights(scheme, data.n, rng)
        if np.any(pd & (u > 0)):
            break
        rejected += 1
        if rejected >= budget or scheme.kind == "provided":
            raise DegenerateResampleError(
                f"replicate {b}: no weight draw with a positively weighted PD matrix "
                f"after {rejected} attempts")
    if predict is not None:
        cfg = SolverConfig(max_iter=cfg.max_iter, tol=cfg.tol, init=predict(u), eig_floor=cfg.eig_floor)
    res = barycenter(SampleSet._trusted(data, u), cfg)
    return statistic(kind, res.Q, Q_n), rejected, res.iterations


def run_bootstrap(data: SampleSet, Q_n, B: int, scheme: WeightScheme, stat_kind=StatKind.BURES_WASSERSTEIN,
                  cfg: SolverConfig | None = None, seed: int = 0,
                  levels: Sequence[float] = (0.9, 0.95, 0.99), threads: int | None = None,
                  start: str = "base") -> BootstrapReport:
    """Multiplier bootstrap of ``sqrt(n) rho(Q_u, Q_n)``.

    Replicate ``b`` draws its weights from stream ``(seed, b)``; a draw in
    which no positively weighted matrix is PD (this includes all-zero draws)
    is rejected and redrawn.  At most ``10 B`` draws are spent in total.

    Each ``Q_u`` is warm-started at ``Q_n`` (``start="base"``) or at its
    linearized prediction around ``Q_n`` (``start="linear"``), which saves
    one to two iterations per replicate.  Both starts reach the same fixed
    point; the prediction needs every positively weighted ``S_i`` to be PD
    and falls back to ``Q_n`` otherwise.
    """
    if B < 1:
        raise ConfigError("B must be at least 1")
    kind = StatKind(stat_kind)
    Q_n = _as_sym(Q_n, "Q_n")
    base = cfg or SolverConfig()
    cfg = SolverConfig(max_iter=base.max_iter, tol=base.tol, init=Q_n, eig_floor=base.eig_floor)
    budget = 10 * B
    threads = resolve_threads(threads)
    if start not in ("base", "linear"):
        raise ConfigError(f"unknown start {start!r}; expected 'base' or 'linear'")
    predict = None
    if start == "linear":
        try:
            predict = _LinearStart(data, Q_n)
        except DomainError:
            predict = None

    def job(b: int):
        return _one_replicate(data, Q_n, scheme, kind, cfg, seed, b, budget, predict)

    if threads == 1:
        results = [job(b) for b in range(B)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, range(B)))
    rejected = sum(r[1] for r in results)
    if rejected + B > budget:
        raise DegenerateResampleError(f"{rejected + B} draws needed, budget is {budget}")
    scale = math.sqrt(data.n)
    reps = scale * np.array([r[0] for r in results])
    cdf = EmpiricalCdf(reps)
    qs = {float(lv): quantile(cdf, lv) for lv in levels}
    return BootstrapReport(kind, data.n, B, scheme.label, seed, scale, reps, rejected, qs,
                           np.array([r[2] for r in results]))


# ---------------------------------------------------------------------------
# CSV helpers


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{float(v):.17g}" for v in row])


def read_cdf_csv(path) -> EmpiricalCdf:
    """Read the ``x`` column of a CDF table written by this package."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        return EmpiricalCdf([float(r["x"]) for r in rows])
    except (OSError, KeyError, ValueError) as exc:
        raise ParseError(f"cannot read CDF table {path}: {exc}") from None
