"""Ground-truth harness for the synthetic SBM experiment.

Random streams are laid out so that every piece can be recomputed on its own:

* ``(seed, 0, i)``       graph ``i`` of the large sample behind the ``Q_*`` stand-in;
* ``(seed, 1, n, j, i)`` graph ``i`` of the ``j``-th independent dataset of size ``n``;
* ``(seed, 2, n, j, b)`` bootstrap weights for replicate ``b`` on that dataset.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .barycenter import BarycenterResult, SampleSet, SolverConfig, barycenter
from .bootstrap import BootstrapReport, EmpiricalCdf, StatKind, WeightScheme, run_bootstrap, statistic
from .errors import ConfigError
from .sbm import PAPER6_R, SbmConfig, paper6_config, sample_matrices

log = logging.getLogger(__name__)

__all__ = [
    "desk_config",
    "draw_dataset",
    "reference_barycenter",
    "true_distribution",
    "bootstrap_seed",
    "bootstrap_on_dataset",
    "TruthRun",
]


def desk_config(d: int = 8, seed: int = 0) -> SbmConfig:
    """Two equal fixed-size blocks with the reference two-community probabilities and weight means."""
    return SbmConfig(d=d, p=paper6_config().p, weight_means=paper6_config().weight_means,
                     block_sizes=(d // 2, d - d // 2), seed=seed)


def draw_dataset(cfg: SbmConfig, n: int, rep: int, r: float = PAPER6_R) -> SampleSet:
    """The ``rep``-th independent dataset of size ``n``."""
    return SampleSet(sample_matrices(cfg, n, r, key=(1, n, rep)))


def reference_barycenter(cfg: SbmConfig, n_truth: int, r: float = PAPER6_R,
                         solver: SolverConfig | None = None) -> BarycenterResult:
    """Barycenter of ``n_truth`` fresh matrices, standing in for ``Q_*``."""
    if n_truth < 1:
        raise ConfigError("n_truth must be at least 1")
    res = barycenter(SampleSet(sample_matrices(cfg, n_truth, r, key=(0,))), solver)
    if not res.converged:
        log.warning("reference barycenter stopped at residual %.3g", res.residual)
    return res


@dataclass(frozen=True)
class TruthRun:
    n: int
    stat_kind: StatKind
    values: np.ndarray
    fits: list[BarycenterResult]

    @property
    def cdf(self) -> EmpiricalCdf:
        return EmpiricalCdf(self.values)


def true_distribution(cfg: SbmConfig, n: int, n_reps: int, Q_star, stat_kind=StatKind.BURES_WASSERSTEIN,
                      r: float = PAPER6_R, solver: SolverConfig | None = None,
                      n_truth: int | None = None) -> TruthRun:
    """``sqrt(n) rho(Q_n, Q_*)`` over ``n_reps`` independent datasets of size ``n``."""
    if n_reps < 1 or n < 1:
        raise ConfigError("n and n_reps must be at least 1")
    if n_truth is not None and n_truth < n:
        warnings.warn(f"n_truth={n_truth} < n={n}: the Q_* stand-in is noisier than Q_n",
                      stacklevel=2)
    kind = StatKind(stat_kind)
    vals, fits = np.empty(n_reps), []
    for j in range(n_reps):
        fit = barycenter(draw_dataset(cfg, n, j, r), solver)
        vals[j] = np.sqrt(n) * statistic(kind, fit.Q, Q_star)
        fits.append(fit)
    return TruthRun(n, kind, vals, fits)


def bootstrap_seed(cfg: SbmConfig, n: int, rep: int) -> int:
    """Master seed of the bootstrap run on dataset ``rep`` of size ``n``."""
    return int(np.random.SeedSequence(cfg.seed, spawn_key=(2, n, rep)).generate_state(1)[0])


def bootstrap_on_dataset(cfg: SbmConfig, n: int, rep: int, B: int, scheme: WeightScheme,
                         stat_kind=StatKind.BURES_WASSERSTEIN, r: float = PAPER6_R,
                         solver: SolverConfig | None = None, data: SampleSet | None = None,
                         Q_n=None, threads: int | None = None) -> BootstrapReport:
    """Bootstrap report for dataset ``rep`` of size ``n``.

    ``data`` and ``Q_n`` are drawn and fitted when not supplied; pass them to
    reuse the fits of :func:`true_distribution`.
    """
    if data is None:
        data = draw_dataset(cfg, n, rep, r)
    if Q_n is None:
        Q_n = barycenter(data, solver).Q
    return run_bootstrap(data, Q_n, B, scheme, stat_kind, solver, bootstrap_seed(cfg, n, rep),
                         threads=threads)
