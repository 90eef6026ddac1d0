"""Coverage simulations: mean/variance intervals and principal-component balls.

Each experiment is a set of replicates; replicate ``r`` draws its data and
its posterior randomness from streams derived from ``(master_seed, r)``, so
reports do not depend on the number of worker processes.
"""

from dataclasses import dataclass, field

import numpy as np

from .calibration import (
    CalibrationConfig,
    CoverageReport,
    MeanVarTarget,
    ReplicateOutcome,
    calibrate_sequential,
    map_replicates,
    replicate_data,
    replicate_stream,
    run_replicates,
)
from .data import GeneratorSpec
from .gibbs import default_joint_config, equal_tailed_interval, meanvar_joint_mh_batch
from .pca import PCATarget

MEANVAR_NAMES = ("mu", "sigma2")


@dataclass(frozen=True)
class SequentialMeanVarMethod:
    """Calibrate both stages, then check the credible intervals around ``(xbar, s^2)``."""

    config: CalibrationConfig = CalibrationConfig()

    def __call__(self, x, truth, stream):
        res = calibrate_sequential(MeanVarTarget(), x, self.config, stream)
        r = res.credible_radii
        hits = (
            abs(truth["mean"] - res.centers[0]) <= r[0],
            abs(truth["variance"] - res.centers[1]) <= r[1],
        )
        return ReplicateOutcome(hits, tuple(float(v) for v in r),
                                {"etas": res.etas, "bootstrap_radii": tuple(res.bootstrap_radii)})


def meanvar_sequential_coverage(generator, n, R, master_seed, config=CalibrationConfig(),
                                threads=1):
    """Coverage of the calibrated sequential mean/variance posterior.

    Returns
    -------
    report : CoverageReport
        Parameters ``mu`` and ``sigma2``.
    outcomes : list of ReplicateOutcome
    """
    spec = GeneratorSpec(generator, n)
    outcomes = run_replicates(spec, SequentialMeanVarMethod(config), R, master_seed, threads)
    report = CoverageReport.from_hits(
        MEANVAR_NAMES, [o.hits for o in outcomes], [o.radii for o in outcomes],
        {"generator": generator, "n": n, "p": 1, "seed": master_seed,
         "method": "sequential_gibbs", "alpha": config.alpha},
    )
    return report, outcomes


# -- joint Gibbs posterior ----------------------------------------------------

def eta_grid(lo=1e-3, hi=1e3, per_decade=40):
    """Log-spaced grid including both ends."""
    k = int(round(np.log10(hi / lo) * per_decade))
    return np.logspace(np.log10(lo), np.log10(hi), k + 1)


def _joint_chunk(args):
    X, eta, rows, master_seed, alpha, burn_in, n_samples = args
    n = X.shape[1]
    cfg = default_joint_config(n, eta, burn_in=burn_in, n_samples=n_samples)
    streams = [replicate_stream(master_seed, r) for r in rows]
    res = meanvar_joint_mh_batch(X, eta, cfg, streams)
    lo, hi = equal_tailed_interval(res.chain, alpha, axis=1)
    return lo, hi, res.acceptance_rate


@dataclass
class JointTuning:
    """Grid search for the joint posterior's single precision."""

    eta: float
    report: CoverageReport
    evaluations: dict = field(default_factory=dict)


class JointMeanVarExperiment:
    """Joint Gibbs posterior of ``(mu, sigma^2)`` across replicates.

    Datasets are those of :func:`meanvar_sequential_coverage` with the same
    master seed. At every ``eta`` each replicate's chain reuses its own
    stream, so coverage curves across ``eta`` use common random numbers.
    """

    def __init__(self, generator, n, R, master_seed, alpha=0.05, burn_in=2000,
                 n_samples=10000, threads=1):
        self.spec = GeneratorSpec(generator, n)
        self.R = int(R)
        self.master_seed = master_seed
        self.alpha = alpha
        self.burn_in = burn_in
        self.n_samples = n_samples
        self.threads = int(threads or 1)
        data = [replicate_data(self.spec, master_seed, r) for r in range(self.R)]
        self.X = np.stack([d[0] for d in data])
        self.truth = data[0][1]
        self._cache = {}

    def intervals(self, eta):
        """Equal-tailed intervals, shape ``(R, 2)`` each, and acceptance rates."""
        key = float(eta)
        if key not in self._cache:
            chunks = np.array_split(np.arange(self.R), max(1, min(self.threads, self.R)))
            args = [(self.X[c], key, c.tolist(), self.master_seed, self.alpha,
                     self.burn_in, self.n_samples) for c in chunks if c.size]
            parts = map_replicates(_joint_chunk, args, self.threads)
            lo = np.concatenate([p[0] for p in parts])
            hi = np.concatenate([p[1] for p in parts])
            acc = np.concatenate([p[2] for p in parts])
            self._cache[key] = (lo, hi, acc)
        return self._cache[key]

    def coverage(self, eta):
        lo, hi, _ = self.intervals(eta)
        t = np.array([self.truth["mean"], self.truth["variance"]])
        hits = (lo <= t) & (t <= hi)
        return hits, 0.5 * (hi - lo)

    def report(self, eta):
        hits, half = self.coverage(eta)
        return CoverageReport.from_hits(
            MEANVAR_NAMES, hits, half,
            {"generator": self.spec.name, "n": self.spec.n, "p": 1, "seed": self.master_seed,
             "method": "joint_gibbs", "eta": float(eta), "alpha": self.alpha},
        )

    def tune(self, grid=None, target=None):
        """Bisect the grid for the ``eta`` whose ``sigma^2`` coverage is nearest `target`.

        Coverage of ``sigma^2`` decreases in ``eta``, so bisection finds the
        adjacent grid pair that straddles `target`; of the two, the one with
        coverage closer to `target` wins (ties go to the higher coverage).
        """
        grid = eta_grid() if grid is None else np.asarray(grid, dtype=float)
        target = 1 - self.alpha if target is None else target
        evals = {}

        def cov(i):
            if i not in evals:
                hits, _ = self.coverage(grid[i])
                evals[i] = (float(grid[i]), float(hits[:, 0].mean()), float(hits[:, 1].mean()))
            return evals[i][2]

        lo, hi = 0, len(grid) - 1
        if cov(lo) < target:
            best = lo
        elif cov(hi) >= target:
            best = hi
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if cov(mid) >= target:
                    lo = mid
                else:
                    hi = mid
            best = lo if abs(cov(lo) - target) <= abs(cov(hi) - target) else hi
        eta = float(grid[best])
        return JointTuning(eta, self.report(eta), {float(v[0]): v[1:] for v in evals.values()})


# -- principal components -----------------------------------------------------

@dataclass(frozen=True)
class PcaCoverageMethod:
    """Calibrate the sequential Bingham posterior and score both ball types.

    Hits are ordered as the J sequential-Gibbs balls (radius ``r_g``)
    followed by the J bootstrap balls (radius ``r_b``), all centered at the
    sample eigenvectors. With ``align="procrustes"`` the true frame is
    rotated onto the sample frame before measuring, exactly as the
    bootstrap and posterior frames are.
    """

    J: int = 5
    config: CalibrationConfig = CalibrationConfig()
    align: str = "procrustes"

    def __call__(self, X, truth, stream):
        target = PCATarget(self.J, align=self.align)
        res = calibrate_sequential(target, X, self.config, stream)
        E = truth["eigenvectors"]
        d = np.array([float(target.distance(j, target.point(E, j), res.centers[j]))
                      for j in range(self.J)])
        rg, rb = res.credible_radii, res.bootstrap_radii
        hits = tuple(bool(v) for v in np.concatenate([d <= rg, d <= rb]))
        return ReplicateOutcome(
            hits, tuple(float(v) for v in np.concatenate([rg, rb])),
            {"etas": res.etas, "hit_bound": tuple(res.hit_bound), "distance": tuple(d),
             "trace_radii": tuple(float(t.radii[-1]) for t in res.traces)},
        )


def pca_coverage(generator, n, p, J, R, master_seed, config=CalibrationConfig(), threads=1,
                 align="procrustes"):
    """Eigenvector coverage for the sequential Gibbs posterior and the bootstrap.

    Returns
    -------
    reports : dict
        ``{"sequential_gibbs": CoverageReport, "bootstrap": CoverageReport}``.
    outcomes : list of ReplicateOutcome
    """
    spec = GeneratorSpec(generator, n, p)
    outcomes = run_replicates(spec, PcaCoverageMethod(J, config, align), R, master_seed, threads)
    hits = np.array([o.hits for o in outcomes])
    radii = np.array([o.radii for o in outcomes])
    names = [f"v{j + 1}" for j in range(J)]
    meta = {"generator": generator, "n": n, "p": p, "seed": master_seed, "alpha": config.alpha,
            "align": align}
    reports = {
        "sequential_gibbs": CoverageReport.from_hits(
            names, hits[:, :J], radii[:, :J], dict(meta, method="sequential_gibbs")),
        "bootstrap": CoverageReport.from_hits(
            names, hits[:, J:], radii[:, J:], dict(meta, method="bootstrap")),
    }
    return reports, outcomes
