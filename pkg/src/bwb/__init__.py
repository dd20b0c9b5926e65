"""Bures-Wasserstein barycenters, their multiplier bootstrap and diagnostics.

The subpackages build on each other:

* :mod:`bwb.linalg`      square roots, distance, transport maps, differentials;
* :mod:`bwb.barycenter`  weighted barycenter by fixed-point iteration;
* :mod:`bwb.estimators`  covariance, gluing and sandwich operators;
* :mod:`bwb.bootstrap`   weight schemes, replicates, empirical CDFs;
* :mod:`bwb.sbm`         weighted stochastic block model data and persistence;
* :mod:`bwb.experiment`  ground-truth harness for synthetic studies.
"""

from .barycenter import BarycenterResult, SampleSet, SolverConfig, barycenter, mean_map_check, residual
from .bootstrap import (
    BootstrapReport,
    EmpiricalCdf,
    StatKind,
    WeightScheme,
    confidence_bands,
    draw_weights,
    ks_distance,
    quantile,
    run_bootstrap,
)
from .errors import (
    BWError,
    ChecksumError,
    ConfigError,
    DatasetIOError,
    DegenerateResampleError,
    DomainError,
    ManifestError,
    ParseError,
    RankError,
    ShapeError,
    WeightError,
)
from .estimators import (
    centred_maps,
    diagnostic_bundle,
    discrepancy,
    f_op,
    sample_gaussian_stat,
    sigma_op,
    xi_op,
)
from .linalg import (
    SymMatrix,
    SymOperator,
    a_operator,
    bw_distance,
    condition_number,
    ot_map,
    ot_map_differential,
    pinv_sqrt,
    spectrum_diag,
    sqrt_psd,
)

__version__ = "0.1.0"
