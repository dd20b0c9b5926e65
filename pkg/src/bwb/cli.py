"""Command-line front end: ``bwb {gen,barycenter,bootstrap,truth,diag,compare}``.

Every command is a pure function of its inputs, flags and ``--seed``; JSON
outputs carry no timestamps, so reruns are byte-identical.  Errors raised by
the package exit with status 2 and a one-line message on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .barycenter import SolverConfig, barycenter, mean_map_check, objective
from .bootstrap import (
    BootstrapReport,
    EmpiricalCdf,
    StatKind,
    WeightScheme,
    _write_rows,
    confidence_bands,
    ks_distance,
    mean_cdf,
    read_cdf_csv,
    run_bootstrap,
)
from .errors import BWError, ConfigError, RankError
from .estimators import diagnostic_bundle, discrepancy, f_op, sample_gaussian_stat
from .experiment import desk_config, reference_barycenter, true_distribution
from .linalg import condition_number, spectrum_diag
from .sbm import (
    PAPER6_R,
    SbmConfig,
    load_dataset,
    load_matrix,
    paper6_config,
    sample_matrices,
    save_dataset,
    save_matrix,
)

log = logging.getLogger("bwb")

PRESETS = ("paper6", "desk")


# ---------------------------------------------------------------------------
# Shared option groups


def _add_sbm(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data model")
    g.add_argument("--preset", choices=PRESETS, default="paper6",
                   help="paper6: d=20, blocks 10+-2; desk: d=8, blocks 4+4")
    g.add_argument("--d", type=int, help="override the node count")
    g.add_argument("--jitter", type=int, help="override the block-size jitter (paper6 only)")
    g.add_argument("--r", type=float, default=PAPER6_R, help="Laplacian regularization")


def _add_solver(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--tol", type=float, default=SolverConfig.tol)
    g.add_argument("--max-iter", type=int, default=SolverConfig.max_iter)


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True, help="master seed")


def _sbm_config(args) -> SbmConfig:
    if args.preset == "desk":
        if args.jitter:
            raise ConfigError("the desk preset has fixed block sizes")
        return desk_config(d=args.d or 8, seed=args.seed)
    kw = {"seed": args.seed}
    if args.d is not None:
        kw["d"] = args.d
    if args.jitter is not None:
        kw["size_jitter"] = args.jitter
    return paper6_config(**kw)


def _solver(args) -> SolverConfig:
    return SolverConfig(max_iter=args.max_iter, tol=args.tol)


def _write_json(path, body: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")


def _write_cdf(path, values) -> None:
    c = EmpiricalCdf(values)
    y = c(c.points)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _write_rows(path, ["x", "lo", "mean", "hi"], zip(c.points, y, y, y))


def _read_cdf(path) -> EmpiricalCdf:
    """A CDF from a bootstrap report (``.json``) or a CDF table (``.csv``)."""
    if Path(path).suffix == ".json":
        return BootstrapReport.read_json(path).cdf
    return read_cdf_csv(path)


def _fit_or_load(args, data):
    if getattr(args, "barycenter", None):
        return load_matrix(args.barycenter)
    res = barycenter(data, _solver(args))
    if not res.converged:
        log.warning("barycenter stopped at residual %.3g", res.residual)
    return res.Q


# ---------------------------------------------------------------------------
# Commands


def cmd_gen(args) -> int:
    cfg = _sbm_config(args)
    if args.n < 1:
        raise ConfigError("n must be at least 1")
    S = sample_matrices(cfg, args.n, args.r)
    man = save_dataset(S, args.out, seed=args.seed, config={"sbm": cfg.to_dict(), "r": args.r})
    print(f"d={man.d} n={man.n} seed={args.seed} -> {man.path}")
    return 0


def cmd_barycenter(args) -> int:
    data = load_dataset(args.data)
    res = barycenter(data, _solver(args))
    save_matrix(res.Q, args.out)
    body = {
        "n": data.n,
        "d": data.d,
        "iterations": res.iterations,
        "residual": res.residual,
        "converged": res.converged,
        "mean_map_check": mean_map_check(res.Q, data),
        "objective": objective(res.Q, data),
    }
    if args.log:
        _write_json(args.log, body)
    print(json.dumps(body, sort_keys=True))
    return 0 if res.converged else 1


def cmd_bootstrap(args) -> int:
    data = load_dataset(args.data)
    Q_n = _fit_or_load(args, data)
    scheme = WeightScheme.parse(args.scheme, data.n)
    rep = run_bootstrap(data, Q_n, args.B, scheme, StatKind.parse(args.stat), _solver(args),
                        args.seed, threads=args.threads, start=args.start)
    rep.write_json(args.out)
    if args.cdf:
        rep.write_cdf_csv(args.cdf)
    print(f"B={rep.B} scheme={rep.scheme} rejected={rep.rejected_draws} "
          f"q95={rep.quantiles.get(0.95, float('nan')):.6g} -> {args.out}")
    return 0


def cmd_truth(args) -> int:
    cfg = _sbm_config(args)
    if args.n < 1 or args.n_reps < 1 or args.n_truth < 1:
        raise ConfigError("n, n_reps and n_truth must be at least 1")
    if args.n_truth < args.n:
        warnings.warn(f"n_truth={args.n_truth} < n={args.n}: the Q_* stand-in is noisier than Q_n",
                      stacklevel=1)
    solver = _solver(args)
    ref = reference_barycenter(cfg, args.n_truth, args.r, solver)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        run = true_distribution(cfg, args.n, args.n_reps, ref.Q, StatKind.parse(args.stat),
                                args.r, solver)
    _write_cdf(args.out, run.values)
    if args.q_star:
        save_matrix(ref.Q, args.q_star)
    print(f"n={args.n} n_reps={args.n_reps} n_truth={args.n_truth} -> {args.out}")
    return 0


def _spectral_summary(op) -> dict:
    try:
        sd = spectrum_diag(op)
    except RankError:
        return {"lambda1_sq": None, "lambda2_sq": None, "varkappa": None, "gamma": None}
    return {"lambda1_sq": sd.lambda1_sq, "lambda2_sq": sd.lambda2_sq,
            "varkappa": sd.varkappa, "gamma": sd.gamma}


def cmd_diag(args) -> int:
    data = load_dataset(args.data)
    Q_n = _fit_or_load(args, data)
    b = diagnostic_bundle(Q_n, data)
    fw = b.F.eigenvalues
    body = {
        "n": data.n,
        "d": data.d,
        "trace_sigma": b.Sigma.trace,
        "F_lambda_min": float(fw[0]),
        "F_lambda_max": float(fw[-1]),
        "F_condition": condition_number(b.F),
        "Q_condition": condition_number(Q_n),
        "xi": _spectral_summary(b.Xi),
        "xi_trace": b.Xi.trace,
    }
    if args.reference:
        Q_ref = load_matrix(args.reference)
        ref_data = load_dataset(args.reference_data) if args.reference_data else data
        F_ref = f_op(Q_ref, ref_data)
        disc = discrepancy(Q_ref, Q_n, F_ref, b.F)
        body["discrepancy"] = {"q": disc.q, "f": disc.f, "eta": disc.eta}
    if args.gauss_draws:
        kind = StatKind.parse(args.stat)
        A = b.A if kind is StatKind.BURES_WASSERSTEIN else None
        draws = sample_gaussian_stat(b.Xi, A, args.gauss_draws, args.seed)
        body["gaussian"] = {"stat_kind": kind.value, "n_draws": args.gauss_draws, "seed": args.seed}
        if args.gauss_out:
            _write_cdf(args.gauss_out, draws)
        if args.bootstrap:
            body["gaussian"]["ks_vs_bootstrap"] = ks_distance(EmpiricalCdf(draws),
                                                              _read_cdf(args.bootstrap))
    if args.out:
        _write_json(args.out, body)
    print(json.dumps(body, sort_keys=True))
    return 0


def _parse_grid(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None


def cmd_compare(args) -> int:
    truth = _read_cdf(args.truth)
    boots = [_read_cdf(p) for p in args.bootstrap]
    gauss = _read_cdf(args.gaussian) if args.gaussian else None
    if args.grid:
        grid = _parse_grid(args.grid)
        if np.any(np.diff(grid) < 0):
            raise ConfigError("grid must be sorted")
    else:
        pts = np.concatenate([truth.points] + [c.points for c in boots])
        grid = np.linspace(0.0, float(pts.max()), args.grid_size)
    pooled = mean_cdf(boots) if len({c.n for c in boots}) == 1 else None
    summary = {
        "n_bootstrap": len(boots),
        "ks_each": [ks_distance(c, truth) for c in boots],
    }
    if pooled is not None:
        summary["ks_mean_bootstrap"] = ks_distance(pooled, truth)
    if gauss is not None:
        summary["ks_gaussian"] = ks_distance(gauss, truth)
    cols = {"x": grid, "truth": truth(grid)}
    if pooled is not None:
        cols["bootstrap_mean"] = pooled(grid)
    if len(boots) >= 2:
        bands = confidence_bands(boots, grid)
        cols.update(lo=bands.lo, hi=bands.hi, q05=bands.q05, q95=bands.q95)
        summary["band_coverage"] = float(np.mean(bands.contains(truth(grid))))
        if args.bands:
            bands.write_csv(args.bands)
    if gauss is not None:
        cols["gaussian"] = gauss(grid)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    _write_rows(args.out, list(cols), zip(*cols.values()))
    if args.summary:
        _write_json(args.summary, summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bwb", description="Bures-Wasserstein barycenters and bootstrap")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an SBM dataset")
    _add_sbm(g)
    _add_seed(g)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("barycenter", help="fit the barycenter of a dataset")
    b.add_argument("--data", required=True, help="manifest file or dataset directory")
    b.add_argument("--out", required=True, help="CSV for the barycenter")
    b.add_argument("--log", help="JSON convergence log")
    _add_solver(b)
    b.set_defaults(func=cmd_barycenter)

    s = sub.add_parser("bootstrap", help="multiplier bootstrap around the barycenter")
    s.add_argument("--data", required=True)
    s.add_argument("--barycenter", help="precomputed barycenter CSV (fitted if absent)")
    s.add_argument("--B", type=int, default=100)
    s.add_argument("--scheme", default="bern2", help="exp1, po1, bern2 or ones")
    s.add_argument("--stat", default="bw", help="bw or fro")
    s.add_argument("--threads", type=int, help="worker cap (default $BWB_THREADS or 1)")
    s.add_argument("--start", choices=("base", "linear"), default="base",
                   help="replicate start: Q_n or its linearized prediction")
    s.add_argument("--out", required=True, help="report JSON")
    s.add_argument("--cdf", help="CDF table CSV")
    _add_seed(s)
    _add_solver(s)
    s.set_defaults(func=cmd_bootstrap)

    t = sub.add_parser("truth", help="Monte-Carlo sampling distribution of sqrt(n) rho(Q_n, Q_*)")
    _add_sbm(t)
    _add_seed(t)
    _add_solver(t)
    t.add_argument("--n", type=int, required=True)
    t.add_argument("--n-reps", type=int, default=500)
    t.add_argument("--n-truth", type=int, default=20000)
    t.add_argument("--stat", default="bw")
    t.add_argument("--out", required=True, help="CDF table CSV")
    t.add_argument("--q-star", help="also write the Q_* stand-in as CSV")
    t.add_argument("--threads", type=int, help="accepted for symmetry; the harness is sequential")
    t.set_defaults(func=cmd_truth)

    d = sub.add_parser("diag", help="operator diagnostics and Gaussian approximation")
    d.add_argument("--data", required=True)
    d.add_argument("--barycenter")
    d.add_argument("--reference", help="reference barycenter CSV for q/f/eta")
    d.add_argument("--reference-data", help="dataset defining F_ref (default: --data)")
    d.add_argument("--gauss-draws", type=int, default=100_000)
    d.add_argument("--gauss-out", help="CDF table CSV of the Gaussian draws")
    d.add_argument("--bootstrap", help="bootstrap report or CDF to compare the draws with")
    d.add_argument("--stat", default="bw", help="bw draws ||A Z||_F, fro draws ||Z||_F")
    d.add_argument("--out", help="diagnostics JSON")
    _add_seed(d)
    _add_solver(d)
    d.set_defaults(func=cmd_diag)

    c = sub.add_parser("compare", help="merge truth, bootstrap and Gaussian CDFs")
    c.add_argument("--truth", required=True)
    c.add_argument("--bootstrap", required=True, nargs="+")
    c.add_argument("--gaussian")
    c.add_argument("--grid", help="comma-separated sorted evaluation points")
    c.add_argument("--grid-size", type=int, default=200)
    c.add_argument("--out", required=True, help="comparison CSV")
    c.add_argument("--bands", help="band CSV (x,lo,mean,hi)")
    c.add_argument("--summary", help="KS summary JSON")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except BWError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
