"""Sequential Gibbs posteriors and the mean/variance example.

A sequential Gibbs posterior is built from an ordered list of losses
``l_1, ..., l_J`` with one precision ``eta_j`` each. Its joint law is the
product of conditionals

    pi(theta_j | x, theta_{<j})  propto  exp{-eta_j n l_j(theta_j | x, theta_{<j})} pi_j(theta_j),

so when every conditional can be sampled exactly, a joint draw is obtained
by sampling the stages in order.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DataError, UnsupportedModelError
from .sampling import (
    MhConfig,
    adaptive_mh,
    as_generator,
    sample_truncated_normal_positive,
)


class LossEvaluator:
    """A loss ``l_j(theta | data, prefix)``.

    Subclasses implement :meth:`__call__` and, when the minimizer is
    available in closed form, :meth:`minimize`.
    """

    def __call__(self, theta, data, prefix=()):
        raise NotImplementedError

    def minimize(self, data, prefix=()):
        raise NotImplementedError(f"{type(self).__name__} has no minimizer")


@dataclass(frozen=True)
class SequentialModel:
    """Losses, per-stage precisions and exact conditional samplers.

    ``conditional_samplers[j](data, prefix, eta, gen)`` returns one draw of
    stage ``j`` given the realized earlier stages; ``None`` marks a stage
    without an exact sampler.
    """

    losses: Sequence[LossEvaluator]
    etas: Sequence[float]
    conditional_samplers: Sequence[Optional[Callable]] = field(default=())

    def __post_init__(self):
        if len(self.losses) < 1:
            raise DataError("a sequential model needs at least one loss")
        if len(self.etas) != len(self.losses):
            raise DataError("need one precision per loss")
        if any(not (e > 0) for e in self.etas):
            raise DataError("precisions must be positive")
        samplers = tuple(self.conditional_samplers) or (None,) * len(self.losses)
        if len(samplers) != len(self.losses):
            raise DataError("need one conditional sampler slot per loss")
        object.__setattr__(self, "conditional_samplers", samplers)
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))

    @property
    def J(self):
        return len(self.losses)

    def with_etas(self, etas):
        return SequentialModel(self.losses, etas, self.conditional_samplers)


def sequential_sample(model, data, n_draws, rng):
    """Draw from the sequential Gibbs posterior stage by stage.

    Returns
    -------
    ndarray, shape (n_draws, J) for scalar stages, otherwise
    ``(n_draws, total_dim)`` with stage values concatenated in order.
    """
    missing = [j + 1 for j, s in enumerate(model.conditional_samplers) if s is None]
    if missing:
        raise UnsupportedModelError(
            f"stages {missing} have no exact conditional sampler; "
            "MCMC within the sequence would target a reweighted posterior"
        )
    gen = as_generator(rng)
    rows = []
    for _ in range(int(n_draws)):
        prefix = []
        for sampler, eta in zip(model.conditional_samplers, model.etas):
            prefix.append(sampler(data, tuple(prefix), eta, gen))
        rows.append(np.concatenate([np.atleast_1d(np.asarray(t, dtype=float)) for t in prefix]))
    if not rows:
        return np.zeros((0, model.J))
    return np.vstack(rows)


# -- mean / variance instance -------------------------------------------------

def _check_data(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 2:
        raise DataError("data must be a 1-D array with at least two points")
    if not np.all(np.isfinite(x)):
        raise DataError("data contains non-finite values")
    return x


class MeanLoss(LossEvaluator):
    """``(1/2n) sum (x_i - mu)^2``."""

    def __call__(self, theta, data, prefix=()):
        return 0.5 * np.mean((np.asarray(data) - theta) ** 2)

    def minimize(self, data, prefix=()):
        return float(np.mean(data))


class VarianceLoss(LossEvaluator):
    """``(1/2n) sum {s2 - (x_i - mu)^2}^2`` given ``mu = prefix[0]``."""

    def __call__(self, theta, data, prefix=()):
        mu = prefix[0]
        return 0.5 * np.mean((theta - (np.asarray(data) - mu) ** 2) ** 2)

    def minimize(self, data, prefix=()):
        mu = prefix[0]
        return float(np.mean((np.asarray(data) - mu) ** 2))


def _mean_conditional(data, prefix, eta, gen):
    n = len(data)
    return np.mean(data) + gen.standard_normal() / np.sqrt(n * eta)


def _variance_conditional(data, prefix, eta, gen):
    n = len(data)
    center = np.mean((np.asarray(data) - prefix[0]) ** 2)
    return sample_truncated_normal_positive(center, 1.0 / np.sqrt(n * eta), gen)


def meanvar_model(eta_mu, eta_var):
    """The two-stage mean/variance model as a :class:`SequentialModel`."""
    return SequentialModel(
        losses=(MeanLoss(), VarianceLoss()),
        etas=(eta_mu, eta_var),
        conditional_samplers=(_mean_conditional, _variance_conditional),
    )


def meanvar_sequential_sample(data, eta_mu, eta_var, n_draws, rng):
    """Exact draws of ``(mu, sigma^2)``.

    ``mu ~ N(xbar, 1/(n eta_mu))`` and then
    ``sigma^2 | mu ~ N_(0,inf)(mean((x - mu)^2), 1/(n eta_var))``.

    Returns
    -------
    ndarray, shape (n_draws, 2)
    """
    x = _check_data(data)
    if eta_mu <= 0 or eta_var <= 0:
        raise DataError("precisions must be positive")
    gen = as_generator(rng)
    n = x.shape[0]
    m = int(n_draws)
    mu = x.mean() + gen.standard_normal(m) / np.sqrt(n * eta_mu)
    # mean((x - mu)^2) = S2 + (xbar - mu)^2 with S2 the plug-in variance
    centered = x - x.mean()
    s2 = np.mean(centered**2)
    center = s2 + (x.mean() - mu) ** 2
    var = sample_truncated_normal_positive(center, np.full(m, 1.0 / np.sqrt(n * eta_var)), gen)
    return np.column_stack([mu, np.atleast_1d(var)])


class _JointLogDensity:
    """Vectorized log density of the summed-loss Gibbs posterior.

    ``-(eta/2) sum_i [(x_i - mu)^2 + {s2 - (x_i - mu)^2}^2]`` evaluated from
    centered power sums, so each call is O(1) in the sample size.
    """

    def __init__(self, datasets, eta):
        X = np.atleast_2d(np.asarray(datasets, dtype=float))
        self.n = X.shape[1]
        self.center = X.mean(axis=1)
        Y = X - self.center[:, None]
        self.m2 = np.mean(Y**2, axis=1)
        self.m3 = np.mean(Y**3, axis=1)
        self.m4 = np.mean(Y**4, axis=1)
        self.eta = float(eta)

    def __call__(self, theta):
        theta = np.atleast_2d(theta)
        d = theta[:, 0] - self.center
        s2 = theta[:, 1]
        e2 = self.m2 + d**2
        e4 = self.m4 - 4 * d * self.m3 + 6 * d**2 * self.m2 + d**4
        q = (e4 - e2**2) + (e2 - s2) ** 2
        out = -0.5 * self.eta * self.n * (e2 + q)
        return np.where(s2 > 0, out, -np.inf)


def meanvar_joint_log_density(data, eta):
    """Log density (up to a constant) of the joint Gibbs posterior for one dataset."""
    x = _check_data(data)
    f = _JointLogDensity(x[None], eta)
    return lambda theta: float(f(np.asarray(theta)[None])[0])


def default_joint_config(n, eta, burn_in=2000, n_samples=10000):
    """MH settings scaled to the posterior width ``1/sqrt(n eta)``."""
    return MhConfig(initial_step=1.5 / np.sqrt(n * eta), burn_in=burn_in, n_samples=n_samples)


def meanvar_joint_mh(data, eta, config, rng):
    """Adaptive MH for ``(mu, sigma^2)`` under the single summed loss.

    ``mu`` gets a Gaussian proposal and ``sigma^2`` a positive-truncated
    Gaussian proposal, both with the adaptive scalar step.

    Returns
    -------
    MhResult
        ``chain`` has columns ``(mu, sigma^2)``.
    """
    x = _check_data(data)
    if eta <= 0:
        raise DataError("eta must be positive")
    f = _JointLogDensity(x[None], eta)
    init = np.array([x.mean(), max(np.mean((x - x.mean()) ** 2), 1e-12)])
    return adaptive_mh(
        lambda t: float(f(t[None])[0]), init, config, rng, positive=[False, True]
    )


def meanvar_joint_mh_batch(datasets, eta, config, rngs):
    """Run :func:`meanvar_joint_mh` on many datasets in lockstep.

    Chain ``r`` uses only ``rngs[r]``, so each chain is identical to what a
    stand-alone run with that stream would produce.
    """
    X = np.asarray(datasets, dtype=float)
    f = _JointLogDensity(X, eta)
    init = np.column_stack([f.center, np.maximum(f.m2, 1e-12)])
    return adaptive_mh(f, init, config, rngs, positive=[False, True])


def equal_tailed_interval(draws, alpha=0.05, axis=0):
    """Equal-tailed credible interval from sample quantiles (type-1 convention)."""
    draws = np.asarray(draws, dtype=float)
    lo = np.quantile(draws, alpha / 2, axis=axis, method="inverted_cdf")
    hi = np.quantile(draws, 1 - alpha / 2, axis=axis, method="inverted_cdf")
    return lo, hi


# -- Gaussian-limit diagnostic ------------------------------------------------

@dataclass
class BvmReport:
    """Empirical covariance of centered, sqrt(n)-scaled draws against a target."""

    empirical_cov: np.ndarray
    target_cov: np.ndarray
    max_relative_error: float
    relative_errors: np.ndarray
    n: int
    draws: int

    @property
    def diagonal_relative_errors(self):
        return np.abs(np.diag(self.empirical_cov) - np.diag(self.target_cov)) / np.abs(
            np.diag(self.target_cov)
        )


def bvm_diagnostic(samples, minimizer, n, target_cov, floor=1e-6):
    """Compare ``cov(sqrt(n) (samples - minimizer))`` with `target_cov`.

    Parameters
    ----------
    samples : array_like, shape (draws, d)
        Chart-mapped posterior draws.
    minimizer : array_like, shape (d,) or (draws, d)
        Chart-mapped loss minimizer; a per-draw array is used for later
        stages of a sequential posterior, whose minimizer depends on the
        earlier draws.
    n : int
        Sample size of the data behind the posterior.
    target_cov : array_like, shape (d, d)
    floor : float
        Entries with ``|target| <= floor`` are compared in absolute terms.
    """
    S = np.asarray(samples, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    c = np.asarray(minimizer, dtype=float)
    if c.shape[-1] != S.shape[-1]:
        raise DataError("samples and minimizer dimensions differ")
    if S.shape[0] < 2:
        raise DataError("need at least two samples")
    if n < 1:
        raise DataError("n must be positive")
    T = np.atleast_2d(np.asarray(target_cov, dtype=float))
    tau = np.sqrt(n) * (S - c)
    emp = np.atleast_2d(np.cov(tau, rowvar=False))
    emp = 0.5 * (emp + emp.T)
    if emp.shape != T.shape:
        raise DataError(f"target covariance has shape {T.shape}, expected {emp.shape}")
    big = np.abs(T) > floor
    err = np.where(big, np.abs(emp - T) / np.where(big, np.abs(T), 1.0), np.abs(emp - T))
    return BvmReport(emp, T, float(np.max(err)), err, int(n), S.shape[0])
