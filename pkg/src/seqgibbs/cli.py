"""Command-line front end.

Every command resolves its settings from built-in defaults, then an
optional JSON ``--config`` file, then explicit flags (flags win). The
resolved settings are echoed in the report, and feeding the echo back
through ``--config`` reproduces the numeric payload byte for byte.
"""

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibrationConfig, calibrate_sequential, default_threads
from .data import load_matrix_csv, write_matrix_csv
from .errors import DataError, NumericalError, SeqGibbsError
from .geometry import procrustes_align
from .gibbs import equal_tailed_interval
from .sampling import RngStream

SCHEMA_VERSION = 1
EXIT_DATA = 3
EXIT_NUMERICAL = 4
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}

log = logging.getLogger("seqgibbs")

# settings shared by every command and their defaults
COMMON = {"seed": None, "output": "seqgibbs_output", "threads": None, "alpha": 0.05}
CALIBRATION = {"bootstrap": 2000, "posterior_draws": 4000, "max_iters": 50,
               "rel_tol": 0.01, "eta_rel_tol": 0.01, "step_schedule": "constant", "eta0": 1.0}
COMMANDS = {
    "meanvar-coverage": dict(CALIBRATION, generator="gaussian", n=1000, replicates=500,
                             method="sequential_gibbs", burn_in=2000, mh_samples=10000),
    "pca-coverage": dict(CALIBRATION, generator="mvn_diag", n=100, p=25, components=5,
                         replicates=200, align="procrustes"),
    "pca-fit": dict(CALIBRATION, input=None, components=5, response=None, scale=False,
                    subsample=None, align="procrustes"),
    "pcr-fit": dict(CALIBRATION, input=None, components=5, response=None, scale=True,
                    subsample=None, prior_scale=1.0, ig_shape=1.0, ig_rate=1.0),
    "calibrate": dict(CALIBRATION, input=None, components=5, response=None, scale=False,
                      subsample=None, align="procrustes"),
    "bingham-sample": {"input": None, "draws": 10000},
}
SEED_REQUIRED = {"meanvar-coverage", "pca-coverage"}
POSITIVE = {"n", "p", "replicates", "components", "bootstrap", "posterior_draws", "draws",
            "max_iters", "burn_in", "mh_samples", "threads"}


class UsageError(Exception):
    """Bad combination of settings; reported with exit status 2."""


def _add_common(sp):
    sp.add_argument("--config", metavar="PATH", help="JSON file with settings; flags override it")
    sp.add_argument("--seed", type=int, metavar="U64")
    sp.add_argument("--output", metavar="DIR")
    sp.add_argument("--threads", type=int, metavar="N")
    sp.add_argument("--alpha", type=float, metavar="F")


def _add_calibration(sp):
    sp.add_argument("--bootstrap", type=int, metavar="B")
    sp.add_argument("--posterior-draws", type=int, metavar="M")
    sp.add_argument("--max-iters", type=int)
    sp.add_argument("--rel-tol", type=float)
    sp.add_argument("--eta-rel-tol", type=float)
    sp.add_argument("--step-schedule", choices=["constant", "1/t", "1/t^2"])
    sp.add_argument("--eta0", type=float)


def _add_matrix_input(sp, scale_default):
    sp.add_argument("--input", metavar="CSV")
    sp.add_argument("--components", type=int, metavar="J")
    sp.add_argument("--response", metavar="COLUMN",
                    help="column name (or 1-based index) of the response; excluded from X")
    flag = "--no-scale" if scale_default else "--scale"
    sp.add_argument(flag, dest="scale", action="store_const", const=not scale_default)
    sp.add_argument("--subsample", metavar="k-means:K",
                    help="keep one row per k-means cluster of the response")


def _add_align(sp):
    sp.add_argument("--align", choices=["procrustes", "sign"],
                    help="compare whole frames after rotation, or single eigenvectors up to sign")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="seqgibbs",
        description="Sequential Gibbs posteriors with bootstrap-matched precision.",
        argument_default=None,
    )
    parser.add_argument("--version", action="version", version=f"seqgibbs {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    sp = sub.add_parser("meanvar-coverage", help="coverage of mean/variance intervals")
    _add_common(sp)
    _add_calibration(sp)
    sp.add_argument("--generator", choices=["gaussian", "t5", "skew_normal", "gumbel"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--replicates", type=int, metavar="R")
    sp.add_argument("--method", choices=["sequential_gibbs", "joint_gibbs"])
    sp.add_argument("--burn-in", type=int)
    sp.add_argument("--mh-samples", type=int)

    sp = sub.add_parser("pca-coverage", help="eigenvector coverage, sequential Gibbs vs bootstrap")
    _add_common(sp)
    _add_calibration(sp)
    sp.add_argument("--generator", choices=["mvn_diag", "mvt5_diag"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--components", type=int, metavar="J")
    sp.add_argument("--replicates", type=int, metavar="R")
    _add_align(sp)

    for name, helptext, scale_default in [
        ("pca-fit", "calibrate and sample principal components of a CSV matrix", False),
        ("calibrate", "calibrate the component precisions only", False),
        ("pcr-fit", "principal component regression with sampled components", True),
    ]:
        sp = sub.add_parser(name, help=helptext)
        _add_common(sp)
        _add_calibration(sp)
        _add_matrix_input(sp, scale_default)
        if name != "pcr-fit":
            _add_align(sp)
        if name == "pcr-fit":
            sp.add_argument("--prior-scale", type=float)
            sp.add_argument("--ig-shape", type=float)
            sp.add_argument("--ig-rate", type=float)

    sp = sub.add_parser("bingham-sample", help="draw from a Bingham distribution")
    _add_common(sp)
    sp.add_argument("--input", metavar="CSV", help="square concentration matrix")
    sp.add_argument("--draws", type=int)
    return parser


def resolve_config(command, args):
    """Defaults, then the JSON config file, then explicit flags."""
    allowed = dict(COMMON, **COMMANDS[command])
    cfg = dict(allowed)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(allowed))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(loaded)
    for key in allowed:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["threads"] is None:
        cfg["threads"] = default_threads()
    if command in SEED_REQUIRED and cfg["seed"] is None:
        raise UsageError(f"{command} requires --seed")
    if cfg["seed"] is None:
        cfg["seed"] = 0
    for key in POSITIVE & set(cfg):
        if cfg[key] is not None and (not isinstance(cfg[key], int) or cfg[key] < 1):
            raise UsageError(f"{key} must be a positive integer")
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    if "input" in allowed and not cfg["input"]:
        raise UsageError(f"{command} requires --input")
    if command == "pcr-fit" and cfg["response"] is None:
        raise UsageError("pcr-fit requires --response")
    return cfg


def _calibration_config(cfg):
    return CalibrationConfig(
        alpha=cfg["alpha"], B=cfg["bootstrap"], M=cfg["posterior_draws"], eta0=cfg["eta0"],
        step_schedule=cfg["step_schedule"], max_iters=cfg["max_iters"],
        rel_tol=cfg["rel_tol"], eta_rel_tol=cfg["eta_rel_tol"],
    )


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def _trace_summary(tr):
    if tr is None:
        return None
    return {
        "iterations": [[int(t), float(e), float(r), float(d)] for t, e, r, d in tr.iterations],
        "termination_reason": tr.termination_reason,
        "hit_bound": bool(tr.hit_bound),
        "target": float(tr.target),
    }


# -- data preparation ---------------------------------------------------------

def _column_index(names, spec):
    if spec in names:
        return names.index(spec)
    try:
        k = int(spec)
    except (TypeError, ValueError):
        raise DataError(f"response column {spec!r} not found") from None
    if not 1 <= k <= len(names):
        raise DataError(f"response column index {k} out of range 1..{len(names)}")
    return k - 1


def kmeans_subsample(y, K, seed):
    """Row indices, one per k-means cluster of `y`, nearest to its centroid.

    Uses k-means++ seeding from `seed` and at most 100 Lloyd iterations.
    """
    from scipy.cluster.vq import kmeans2

    y = np.asarray(y, dtype=float).reshape(-1, 1)
    if not 1 <= K <= y.shape[0]:
        raise DataError(f"k-means needs 1 <= K <= n, got K={K}")
    centroids, labels = kmeans2(y, K, iter=100, minit="++", seed=np.random.default_rng(seed))
    keep = []
    for k in range(K):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            keep.append(int(idx[np.argmin(np.abs(y[idx, 0] - centroids[k, 0]))]))
    return np.array(sorted(keep))


def _prepare_matrix(cfg, need_response=False):
    X, names = load_matrix_csv(cfg["input"])
    y = None
    if cfg["response"] is not None:
        k = _column_index(names, cfg["response"])
        y = X[:, k]
        X = np.delete(X, k, axis=1)
        names = names[:k] + names[k + 1:]
    elif need_response:
        raise DataError("a response column is required")
    rows = np.arange(X.shape[0])
    if cfg["subsample"]:
        method, _, K = str(cfg["subsample"]).partition(":")
        if method != "k-means" or not K.isdigit():
            raise DataError("subsample must look like k-means:K")
        if y is None:
            raise DataError("k-means subsampling clusters the response; pass --response")
        rows = kmeans_subsample(y, int(K), cfg["seed"])
        X, y = X[rows], y[rows]
    return X, y, names, rows


def _standardize(X, scale):
    from .pca import empirical_covariance

    _, stats = empirical_covariance(X, center=True, scale=scale)
    return (X - stats["mean"]) / stats["sd"]


# -- commands -----------------------------------------------------------------

def cmd_meanvar_coverage(cfg, out):
    from .experiments import JointMeanVarExperiment, meanvar_sequential_coverage

    if cfg["method"] == "sequential_gibbs":
        report, outcomes = meanvar_sequential_coverage(
            cfg["generator"], cfg["n"], cfg["replicates"], cfg["seed"],
            _calibration_config(cfg), cfg["threads"])
        etas = np.array([o.extra["etas"] for o in outcomes])
        return {
            "coverage": report.as_dict(),
            "etas_median": _floats(np.median(etas, axis=0)),
        }
    ex = JointMeanVarExperiment(cfg["generator"], cfg["n"], cfg["replicates"], cfg["seed"],
                                alpha=cfg["alpha"], burn_in=cfg["burn_in"],
                                n_samples=cfg["mh_samples"], threads=cfg["threads"])
    tuned = ex.tune()
    return {
        "coverage": tuned.report.as_dict(),
        "eta": tuned.eta,
        "grid_evaluations": [[k, v[0], v[1]] for k, v in sorted(tuned.evaluations.items())],
    }


def cmd_pca_coverage(cfg, out):
    from .experiments import pca_coverage

    reports, outcomes = pca_coverage(cfg["generator"], cfg["n"], cfg["p"], cfg["components"],
                                     cfg["replicates"], cfg["seed"], _calibration_config(cfg),
                                     cfg["threads"], align=cfg["align"])
    J = cfg["components"]
    radii = np.array([o.radii for o in outcomes])
    write_matrix_csv(out / "radii.csv", radii,
                     [f"credible_v{j + 1}" for j in range(J)] + [f"bootstrap_v{j + 1}" for j in range(J)])
    return {
        "coverage": {k: v.as_dict() for k, v in reports.items()},
        "bound_hits": np.sum([o.extra["hit_bound"] for o in outcomes], axis=0).tolist(),
        "files": ["radii.csv"],
    }


def _calibrate_matrix(cfg, X):
    from .pca import PCATarget

    J = cfg["components"]
    # pcr-fit keeps per-component signs so coefficients stay attached to components
    target = PCATarget(J, center=True, scale=False, align=cfg.get("align", "sign"))
    res = calibrate_sequential(target, X, _calibration_config(cfg), RngStream(cfg["seed"], (1,)))
    return target, res


def _calibration_payload(res):
    return {
        "etas": _floats(res.etas),
        "bootstrap_radii": _floats(res.bootstrap_radii),
        "credible_radii": _floats(res.credible_radii),
        "traces": [_trace_summary(t) for t in res.traces],
    }


def cmd_calibrate(cfg, out):
    X, _, names, rows = _prepare_matrix(cfg)
    X = _standardize(X, cfg["scale"])
    _, res = _calibrate_matrix(cfg, X)
    return dict(_calibration_payload(res), n=int(X.shape[0]), p=int(X.shape[1]),
                rows=rows.tolist())


def _aligned_draws(V, reference, align="sign"):
    if align == "procrustes":
        return procrustes_align(V, reference)
    signs = np.where(np.einsum("mpj,pj->mj", V, reference) < 0, -1.0, 1.0)
    return V * signs[:, None, :]


def cmd_pca_fit(cfg, out):
    from .pca import SequentialBinghamPosterior, empirical_covariance, fit_components, sample_components

    X, _, names, rows = _prepare_matrix(cfg)
    X = _standardize(X, cfg["scale"])
    J = cfg["components"]
    sigma, _ = empirical_covariance(X)
    V_hat, values = fit_components(sigma, J)
    _, res = _calibrate_matrix(cfg, X)
    post = SequentialBinghamPosterior(sigma, X.shape[0], res.etas)
    V = sample_components(post, RngStream(cfg["seed"], (2,)), size=cfg["posterior_draws"])
    V = _aligned_draws(V, V_hat, cfg["align"])
    scores = X @ V_hat
    lo, hi = equal_tailed_interval(X @ V, cfg["alpha"], axis=0)
    p = X.shape[1]
    write_matrix_csv(out / "components.csv", V_hat, [f"v{j + 1}" for j in range(J)])
    write_matrix_csv(out / "samples.csv", V.reshape(V.shape[0], -1),
                     [f"v{j + 1}_{names[i]}" for i in range(p) for j in range(J)])
    write_matrix_csv(out / "scores.csv", np.hstack([scores, lo, hi]),
                     [f"score{j + 1}" for j in range(J)] + [f"lower{j + 1}" for j in range(J)]
                     + [f"upper{j + 1}" for j in range(J)])
    return dict(
        _calibration_payload(res),
        eigenvalues=_floats(values),
        components=_floats(V_hat),
        variables=names,
        n=int(X.shape[0]), p=int(p), rows=rows.tolist(),
        files=["components.csv", "samples.csv", "scores.csv"],
    )


def cmd_pcr_fit(cfg, out):
    from .pca import (
        SequentialBinghamPosterior,
        empirical_covariance,
        fit_components,
        pcr_condition,
        pcr_joint_sample,
    )
    from scipy import stats

    X, y, names, rows = _prepare_matrix(cfg, need_response=True)
    X = _standardize(X, cfg["scale"])
    y = y - y.mean()
    J = cfg["components"]
    sigma, _ = empirical_covariance(X)
    V_hat, values = fit_components(sigma, J)
    _, res = _calibrate_matrix(cfg, X)
    post = SequentialBinghamPosterior(sigma, X.shape[0], res.etas)
    priors = dict(prior_scale=cfg["prior_scale"], ig_shape=cfg["ig_shape"], ig_rate=cfg["ig_rate"])
    V, beta, sigma2 = pcr_joint_sample(X, y, post, cfg["posterior_draws"],
                                       RngStream(cfg["seed"], (2,)), reference=V_hat, **priors)
    lo, hi = equal_tailed_interval(beta, cfg["alpha"], axis=0)
    fixed = pcr_condition(X, y, V_hat, **priors)
    loc, scale, df = fixed.coefficient_marginals()
    q = stats.t.ppf(1 - cfg["alpha"] / 2, df)
    intervals = np.column_stack([np.median(beta, axis=0), lo, hi, loc, loc - q * scale,
                                 loc + q * scale])
    write_matrix_csv(out / "coefficient_intervals.csv", intervals,
                     ["median", "lower", "upper", "fixed_mean", "fixed_lower", "fixed_upper"])
    write_matrix_csv(out / "samples.csv", np.column_stack([beta, sigma2]),
                     [f"beta{j + 1}" for j in range(J)] + ["sigma2"])
    return dict(
        _calibration_payload(res),
        eigenvalues=_floats(values),
        coefficient_intervals=_floats(intervals),
        sigma2_interval=_floats(equal_tailed_interval(sigma2, cfg["alpha"])),
        n=int(X.shape[0]), p=int(X.shape[1]), rows=rows.tolist(),
        files=["coefficient_intervals.csv", "samples.csv"],
    )


def cmd_bingham_sample(cfg, out):
    from .sampling import BinghamParams, sample_bingham

    A, _ = load_matrix_csv(cfg["input"])
    draws, rate = sample_bingham(BinghamParams(A), RngStream(cfg["seed"]), size=cfg["draws"],
                                 return_stats=True)
    write_matrix_csv(out / "samples.csv", draws)
    return {
        "second_moment": _floats(draws.T @ draws / draws.shape[0]),
        "acceptance_rate": float(rate),
        "files": ["samples.csv"],
    }


HANDLERS = {
    "meanvar-coverage": cmd_meanvar_coverage,
    "pca-coverage": cmd_pca_coverage,
    "pca-fit": cmd_pca_fit,
    "pcr-fit": cmd_pcr_fit,
    "calibrate": cmd_calibrate,
    "bingham-sample": cmd_bingham_sample,
}


def payload_bytes(payload):
    """Canonical serialization used for determinism comparisons."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=True).encode()


def _setup_logging():
    level = LOG_LEVELS.get(os.environ.get("SEQGIBBS_LOG", "warn").lower(), logging.WARNING)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("seqgibbs %(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def run_command(argv=None):
    """Parse `argv`, run the command and return the exit status."""
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args.command, args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"seqgibbs: error: {exc}", file=sys.stderr)
        return 2
    out = Path(cfg["output"])
    start = time.perf_counter()
    try:
        out.mkdir(parents=True, exist_ok=True)
        payload = HANDLERS[args.command](cfg, out)
    except NumericalError as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    except (SeqGibbsError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "config": cfg,
        "payload": payload,
        "meta": {"wall_clock_seconds": time.perf_counter() - start, "version": __version__},
    }
    path = out / "report.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %s", path)
    print(path)
    return 0


def main():
    sys.exit(run_command())
