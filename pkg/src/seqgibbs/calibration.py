"""Bootstrap-matching calibration of the precision hyperparameters.

The precision ``eta`` is tuned so that the ``(1 - alpha)`` credible ball of
the posterior, centered at the point estimate, has the same radius as the
``(1 - alpha)`` bootstrap confidence ball. The radius of the credible ball
is decreasing in ``eta``, so a multiplicative Robbins-Monro recursion
``eta <- eta * exp((r_g - r_b) / (r_b * eps_t))`` finds the match.
"""

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, NumericalError, SeqGibbsError
from .sampling import RngStream, as_generator

log = logging.getLogger(__name__)

ETA_MIN = 1e-8
ETA_MAX = 1e8
SCHEDULES = ("constant", "1/t", "1/t^2")

# substream keys
_BOOT, _SA, _INIT, _DATA, _METHOD, _PILOT, _FINAL = 1, 2, 3, 4, 5, 6, 7


@dataclass(frozen=True)
class CalibrationConfig:
    """Settings for bootstrap radii and the stochastic approximation.

    ``step_schedule`` sets the divisor ``eps_t`` in the update: ``constant``
    uses ``eps_t = 1``, ``1/t`` uses ``eps_t = t`` and ``1/t^2`` uses
    ``eps_t = t^2`` (so the effective gain ``1/eps_t`` decays as named).
    """

    alpha: float = 0.05
    B: int = 2000
    M: int = 4000
    eta0: float = 1.0
    step_schedule: str = "constant"
    max_iters: int = 50
    rel_tol: float = 0.01
    eta_rel_tol: float = 0.01
    warm_start: bool = True
    pilot_draws: int = 500

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise DataError("alpha must lie in (0, 1)")
        for name in ("B", "M", "max_iters"):
            if int(getattr(self, name)) < 1:
                raise DataError(f"{name} must be >= 1")
        if int(self.pilot_draws) < 0:
            raise DataError("pilot_draws must be >= 0")
        if not self.eta0 > 0:
            raise DataError("eta0 must be positive")
        if not (self.rel_tol > 0 and self.eta_rel_tol > 0):
            raise DataError("tolerances must be positive")
        if self.step_schedule not in SCHEDULES:
            raise DataError(f"step_schedule must be one of {SCHEDULES}")

    def step_divisor(self, t):
        if self.step_schedule == "constant":
            return 1.0
        if self.step_schedule == "1/t":
            return float(t)
        return float(t) ** 2


@dataclass
class CalibrationTrace:
    """Iterates ``(t, eta_t, r_g(eta_t), delta_t)`` and why the loop stopped.

    `hit_bound` is set when the recursion was clipped to ``[1e-8, 1e8]``.
    """

    iterations: list = field(default_factory=list)
    termination_reason: str = "max_iters"
    target: float = float("nan")
    hit_bound: bool = False

    @property
    def etas(self):
        return np.array([it[1] for it in self.iterations])

    @property
    def radii(self):
        return np.array([it[2] for it in self.iterations])

    @property
    def relative_errors(self):
        return np.array([it[3] for it in self.iterations])


def quantile_radius(distances, level):
    """Order statistic ``d_(ceil(level * N))`` of the distances.

    ``level <= 0`` returns the minimum. This is the type-1 (inverse empirical
    CDF) quantile, and ``r = d_(k)`` is the smallest radius whose empirical
    coverage ``(1/N) #{d_b <= r}`` reaches `level`.
    """
    d = np.sort(np.asarray(distances, dtype=float).ravel())
    if d.size == 0:
        raise DataError("no distances")
    if np.any(np.isnan(d)):
        raise NumericalError("distances contain NaN")
    k = math.ceil(level * d.size - 1e-12)
    return float(d[min(max(k, 1), d.size) - 1])


def _resample_rows(X, gen):
    n = X.shape[0]
    return X[gen.integers(0, n, size=n)]


def bootstrap_distances(estimator, X, B, metric, rng, resampler=None):
    """Distances between the full-data estimate and ``B`` bootstrap estimates.

    Parameters
    ----------
    estimator : callable
        ``X -> estimate``. When it returns a list (one entry per stage),
        `metric` is applied stage by stage and the result has one row per
        stage; the same replicates serve every stage.
    metric : callable or list of callables
        ``metric(full, replicate) -> distance``. Alignment (sign flips or
        Procrustes rotation) belongs inside the metric.
    resampler : callable, optional
        ``(X, gen) -> X_b``; defaults to resampling rows with replacement.

    Returns
    -------
    ndarray, shape (B,) or (J, B)
    """
    X = np.asarray(X)
    gen = as_generator(rng)
    resampler = resampler or _resample_rows
    full = estimator(X)
    staged = isinstance(full, (list, tuple))
    stages = list(full) if staged else [full]
    metrics = metric if isinstance(metric, (list, tuple)) else [metric] * len(stages)
    if len(metrics) != len(stages):
        raise DataError("need one metric per stage")
    out = np.empty((len(stages), int(B)))
    for b in range(int(B)):
        Xb = resampler(X, gen)
        try:
            est = estimator(Xb)
        except SeqGibbsError as exc:
            raise type(exc)(f"estimator failed on bootstrap replicate {b}: {exc}") from exc
        est = list(est) if staged else [est]
        for j, (f, e, m) in enumerate(zip(stages, est, metrics)):
            out[j, b] = m(f, e)
    return out if staged else out[0]


def bootstrap_radius(estimator, X, B, alpha, metric, rng, resampler=None):
    """Radius of the ``(1 - alpha)`` bootstrap confidence ball.

    Returns
    -------
    radius : float or ndarray (J,)
    distances : ndarray, shape (B,) or (J, B)
    """
    if not 0 < alpha < 1:
        raise DataError("alpha must lie in (0, 1)")
    d = bootstrap_distances(estimator, X, B, metric, rng, resampler)
    if d.ndim == 1:
        return quantile_radius(d, 1 - alpha), d
    return np.array([quantile_radius(row, 1 - alpha) for row in d]), d


def credible_radius(sampler, eta, M, center, alpha, metric, rng):
    """``(1 - alpha)`` quantile of ``metric(draw, center)`` over `M` posterior draws.

    Parameters
    ----------
    sampler : callable
        ``(eta, M, gen) -> draws`` with draws along the first axis.
    metric : callable
        Vectorized ``(draws, center) -> distances``.
    """
    if not eta > 0:
        raise DataError("eta must be positive")
    draws = sampler(eta, int(M), as_generator(rng))
    d = np.asarray(metric(draws, center), dtype=float)
    return quantile_radius(d, 1 - alpha)


def _child(rng, key):
    if isinstance(rng, RngStream):
        return rng.child(key)
    # plain generators: derive a child from fresh integers of the parent
    return np.random.default_rng(as_generator(rng).integers(0, 2**63))


def stochastic_approximation(radius_fn, target, config, rng, eta0=None):
    """Tune ``eta`` so that ``radius_fn(eta)`` matches `target`.

    ``delta_t = (r_g(eta_t) - target) / target`` and
    ``eta_{t+1} = eta_t * exp(delta_t / eps_t)``. Stops when
    ``|delta_t| < rel_tol`` (returning ``eta_t``), when the relative change
    of ``eta`` falls below ``eta_rel_tol`` (returning ``eta_{t+1}``), or
    after ``max_iters`` iterations. ``eta`` is kept inside ``[1e-8, 1e8]``.

    Parameters
    ----------
    radius_fn : callable
        ``(eta, rng) -> radius``; iteration ``t`` receives its own substream.

    Returns
    -------
    eta : float
    trace : CalibrationTrace
    """
    if not target > 0:
        raise DataError("target radius must be positive")
    eta = float(config.eta0 if eta0 is None else eta0)
    eta = min(max(eta, ETA_MIN), ETA_MAX)
    trace = CalibrationTrace(target=float(target))
    for t in range(1, config.max_iters + 1):
        r = float(radius_fn(eta, _child(rng, t)))
        if not (np.isfinite(r) and r > 0):
            raise NumericalError(f"radius function returned {r} at eta={eta:.6g} (iteration {t})")
        delta = (r - target) / target
        trace.iterations.append((t, eta, r, delta))
        if abs(delta) < config.rel_tol:
            trace.termination_reason = "radius_tol"
            return eta, trace
        new = eta * math.exp(delta / config.step_divisor(t))
        if new <= ETA_MIN or new >= ETA_MAX:
            trace.hit_bound = True
            new = min(max(new, ETA_MIN), ETA_MAX)
        change = abs(new - eta) / eta
        eta = new
        if change < config.eta_rel_tol:
            trace.termination_reason = "eta_tol"
            return eta, trace
    trace.termination_reason = "max_iters"
    return eta, trace


def pilot_search(radius_fn, target, eta0, rng, factor=4.0, max_expand=40, refine=4):
    """Cheap starting point for :func:`stochastic_approximation`.

    Steps ``eta`` geometrically from `eta0` until ``radius_fn`` brackets
    `target`, bisects the bracket in ``log eta`` a few times, and returns
    the log-log interpolation between the bracket ends. ``radius_fn`` is
    meant to use few posterior draws; its noise only affects the start.
    When no bracket exists inside ``[1e-8, 1e8]`` the nearest bound is
    returned, and the stochastic approximation then reports the bound hit.
    """
    calls = iter(range(1, 10**6))
    clip = lambda e: min(max(e, ETA_MIN), ETA_MAX)
    eta = clip(float(eta0))
    r = radius_fn(eta, _child(rng, next(calls)))
    # radius decreases in eta: above target means eta is too small
    up = r > target
    lo, r_lo, hi, r_hi = (eta, r, None, None) if up else (None, None, eta, r)
    for _ in range(max_expand):
        eta = clip(eta * factor if up else eta / factor)
        r = radius_fn(eta, _child(rng, next(calls)))
        if (r <= target) == up:
            # confirm a sign change with a second draw before trusting it
            r2 = radius_fn(eta, _child(rng, next(calls)))
            if (r2 <= target) == up:
                r = 0.5 * (r + r2)
                if up:
                    hi, r_hi = eta, r
                else:
                    lo, r_lo = eta, r
                break
        if up:
            lo, r_lo = eta, r
        else:
            hi, r_hi = eta, r
        if eta in (ETA_MIN, ETA_MAX):
            return eta
    else:
        return eta
    for _ in range(refine):
        mid = math.sqrt(lo * hi)
        r = radius_fn(mid, _child(rng, next(calls)))
        if r > target:
            lo, r_lo = mid, r
        else:
            hi, r_hi = mid, r
    if r_lo > r_hi > 0:
        w = math.log(r_lo / target) / math.log(r_lo / r_hi)
        return clip(math.exp(math.log(lo) + w * math.log(hi / lo)))
    return math.sqrt(lo * hi)


@dataclass
class SequentialCalibration:
    """Calibrated precisions with their traces and the bootstrap radii they match.

    `credible_radii` are recomputed from one fresh joint draw of all stages
    at the calibrated precisions (``None`` if the target cannot sample
    jointly).
    """

    etas: tuple
    traces: list
    bootstrap_radii: np.ndarray
    centers: list
    credible_radii: Optional[np.ndarray] = None

    @property
    def hit_bound(self):
        return [bool(t.hit_bound) if t is not None else False for t in self.traces]


def calibrate_sequential(target, X, config, rng, frozen=()):
    """Calibrate every stage of a sequential posterior in order.

    Parameters
    ----------
    target : object
        Provides ``n_stages``, ``estimate(X)`` (list of stage estimates),
        ``distance(j, draws, center)`` and ``sample_stage(X, etas, size, gen)``
        returning draws of stage ``len(etas) - 1`` with the earlier stages
        drawn at ``etas[:-1]``. An optional ``initial_eta(X, j, radius, etas, gen)``
        supplies a warm start, and an optional ``sample_all(X, etas, size, gen)``
        (list of per-stage draws) enables the final credible radii.
    frozen : sequence of float
        Already-calibrated leading precisions, kept unchanged.

    Returns
    -------
    SequentialCalibration
    """
    rng = rng if isinstance(rng, RngStream) else RngStream(int(as_generator(rng).integers(2**63)))
    J = target.n_stages
    metrics = [lambda f, e, j=j: target.distance(j, e, f) for j in range(J)]
    radii, _ = bootstrap_radius(target.estimate, X, config.B, config.alpha, metrics,
                                rng.child(_BOOT))
    radii = np.atleast_1d(radii)
    centers = target.estimate(X)
    etas = [float(e) for e in frozen]
    traces = [None] * len(etas)
    for j in range(len(etas), J):
        if not radii[j] > 0:
            raise NumericalError(f"bootstrap radius of stage {j + 1} is zero")

        def radius_fn(eta, stream, j=j, M=config.M):
            draws = target.sample_stage(X, etas + [eta], M, stream.generator)
            d = target.distance(j, draws, centers[j])
            return quantile_radius(d, 1 - config.alpha)

        start = config.eta0
        if config.warm_start:
            if hasattr(target, "initial_eta"):
                start = target.initial_eta(X, j, radii[j], etas, rng.child(_INIT, j).generator)
            elif etas:
                start = etas[-1]
        if config.pilot_draws:
            pilot = lambda eta, stream, j=j: radius_fn(eta, stream, j, config.pilot_draws)
            start = pilot_search(pilot, radii[j], start, rng.child(_PILOT, j))
        eta, trace = stochastic_approximation(radius_fn, radii[j], config,
                                              rng.child(_SA, j), eta0=start)
        log.debug("stage %d: eta=%.6g after %d iterations (%s)", j + 1, eta,
                  len(trace.iterations), trace.termination_reason)
        etas.append(eta)
        traces.append(trace)
    final = None
    if hasattr(target, "sample_all"):
        draws = target.sample_all(X, etas, config.M, rng.child(_FINAL).generator)
        final = np.array([
            quantile_radius(target.distance(j, draws[j], centers[j]), 1 - config.alpha)
            for j in range(J)
        ])
    return SequentialCalibration(tuple(etas), traces, radii, centers, final)


# -- coverage experiments -----------------------------------------------------

@dataclass
class CoverageReport:
    """Per-parameter coverage with Monte Carlo standard errors."""

    names: list
    coverage: np.ndarray
    standard_error: np.ndarray
    mean_radius: np.ndarray
    replicates: int
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_hits(cls, names, hits, radii, metadata=None):
        hits = np.asarray(hits, dtype=bool)
        R = hits.shape[0]
        c = hits.mean(axis=0)
        return cls(list(names), c, np.sqrt(c * (1 - c) / R),
                   np.asarray(radii, dtype=float).mean(axis=0), R, dict(metadata or {}))

    def as_dict(self):
        return {
            "names": list(self.names),
            "coverage": [float(v) for v in self.coverage],
            "standard_error": [float(v) for v in self.standard_error],
            "mean_radius": [float(v) for v in self.mean_radius],
            "replicates": int(self.replicates),
            "metadata": dict(self.metadata),
        }


@dataclass(frozen=True)
class ReplicateOutcome:
    """Coverage indicators and radii of one replicate, one entry per parameter."""

    hits: tuple
    radii: tuple
    extra: dict = field(default_factory=dict)


def _run_replicate(args):
    generator, method, master_seed, r = args
    stream = RngStream(master_seed, (r,))
    try:
        X, truth = generator(stream.child(_DATA).generator)
        return method(X, truth, stream.child(_METHOD))
    except SeqGibbsError as exc:
        raise type(exc)(
            f"replicate {r} (master_seed={master_seed}, stream=({r},)) failed: {exc}"
        ) from exc


def default_threads():
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def map_replicates(fn, args, threads=1):
    """Apply `fn` to each item, in processes when ``threads > 1``; order is kept."""
    threads = int(threads or 1)
    if threads <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, args, chunksize=max(1, len(args) // (4 * threads))))


def run_replicates(generator, method, R, master_seed, threads=1):
    """Per-replicate outcomes of `method` on data from `generator`.

    Replicate ``r`` draws its data from ``RngStream(master_seed, (r,)).child(4)``
    and hands ``RngStream(master_seed, (r,)).child(5)`` to the method, so
    the outcomes do not depend on `threads`.
    """
    if R < 1:
        raise DataError("R must be >= 1")
    args = [(generator, method, master_seed, r) for r in range(int(R))]
    return map_replicates(_run_replicate, args, threads)


def replicate_data(generator, master_seed, r):
    """The dataset and truth that replicate `r` of an experiment sees."""
    stream = RngStream(master_seed, (r,))
    return generator(stream.child(_DATA).generator)


def replicate_stream(master_seed, r):
    """The method stream that replicate `r` of an experiment receives."""
    return RngStream(master_seed, (r,)).child(_METHOD)


def coverage_experiment(generator, method, R, master_seed, names, threads=1,
                        metadata=None):
    """Monte Carlo coverage of a ball-forming method.

    Parameters
    ----------
    generator : callable
        ``gen -> (X, truth)``; must be picklable when ``threads > 1``.
    method : callable
        ``(X, truth, stream) -> ReplicateOutcome``.
    R : int
        Replicate count; see :func:`run_replicates` for the streams.

    Returns
    -------
    CoverageReport
    """
    outcomes = run_replicates(generator, method, R, master_seed, threads)
    meta = dict(metadata or {})
    meta.setdefault("master_seed", master_seed)
    return CoverageReport.from_hits(
        names, [o.hits for o in outcomes], [o.radii for o in outcomes], meta
    )


# -- mean / variance calibration target ---------------------------------------

class MeanVarTarget:
    """Sequential mean/variance posterior for :func:`calibrate_sequential`.

    Stage estimates are ``xbar`` and ``mean((x - xbar)^2)``; distances are
    absolute differences, so the balls are intervals.
    """

    n_stages = 2

    def estimate(self, X):
        x = np.asarray(X, dtype=float).ravel()
        return [float(x.mean()), float(np.mean((x - x.mean()) ** 2))]

    def distance(self, j, draws, center):
        return np.abs(np.asarray(draws, dtype=float) - center)

    def sample_stage(self, X, etas, size, gen):
        from .gibbs import meanvar_sequential_sample

        x = np.asarray(X, dtype=float).ravel()
        eta_var = etas[1] if len(etas) > 1 else 1.0
        draws = meanvar_sequential_sample(x, etas[0], eta_var, size, gen)
        return draws[:, len(etas) - 1]

    def sample_all(self, X, etas, size, gen):
        from .gibbs import meanvar_sequential_sample

        draws = meanvar_sequential_sample(np.asarray(X, dtype=float).ravel(), etas[0],
                                          etas[1], size, gen)
        return [draws[:, 0], draws[:, 1]]

    def initial_eta(self, X, j, radius, etas, gen):
        # Gaussian width 1.96 / sqrt(n eta) matched to the bootstrap radius
        n = np.asarray(X).size
        return float((1.959963984540054 / radius) ** 2 / n)
