"""Seedable random variate generation.

Bingham draws use the angular-central-Gaussian envelope of Kent, Ganeiber
and Mardia (2013): the density ``exp(w^T A w)`` is rewritten as
``exp(-w^T B w)`` with ``B = lambda_max(A) I - A`` (PSD, smallest eigenvalue
zero), and proposals ``z / |z|`` with ``z ~ N(0, Omega^{-1})``,
``Omega = I + 2 B / b`` are accepted with the exact envelope ratio.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtri_exp

from .errors import DataError, NumericalError

DEFAULT_MAX_ATTEMPTS = 10**7
SYM_TOL = 1e-10


class RngStream:
    """Independent, reproducible random stream keyed by ``(seed, stream_id)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys,
    so any path of integer keys gives a statistically independent generator
    without coordination between workers. A stream is single-owner: do not
    share one between threads.

    Parameters
    ----------
    seed : int
        Experiment-level seed (64-bit unsigned).
    stream_id : int or tuple of int
        Position of this stream in the derivation tree.
    """

    def __init__(self, seed, stream_id=()):
        if isinstance(stream_id, (int, np.integer)):
            stream_id = (int(stream_id),)
        self.seed = int(seed)
        self.stream_id = tuple(int(s) for s in stream_id)
        if self.seed < 0 or any(s < 0 for s in self.stream_id):
            raise DataError("seed and stream ids must be non-negative")
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream_id)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys):
        """A fresh stream one or more levels below this one."""
        return RngStream(self.seed, self.stream_id + tuple(int(k) for k in keys))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def as_generator(rng):
    """Accept an :class:`RngStream`, a numpy ``Generator`` or an int seed."""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngStream(int(rng)).generator
    raise DataError(f"cannot use {type(rng).__name__} as a random stream")


@dataclass(frozen=True)
class BinghamParams:
    """Concentration matrix ``A`` of the density ``exp(w^T A w)`` on a sphere."""

    A: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
            raise DataError(f"concentration must be a square matrix of size >= 2, got {A.shape}")
        if np.max(np.abs(A - A.T)) >= SYM_TOL * max(1.0, np.max(np.abs(A))):
            raise DataError("concentration matrix is not symmetric")
        object.__setattr__(self, "A", (A + A.T) / 2)

    @property
    def dim(self):
        return self.A.shape[0]


def _acg_b(lam, tol=1e-12):
    """Solve ``sum_i 1 / (b + 2 lam_i) = 1`` for ``b`` in ``(0, q]`` by bisection.

    `lam` has shape ``(K, q)`` with nonnegative rows whose minimum is zero.
    """
    q = lam.shape[-1]
    lo = np.zeros(lam.shape[:-1])
    hi = np.full(lam.shape[:-1], float(q))
    while True:
        mid = 0.5 * (lo + hi)
        f = np.sum(1.0 / (mid[..., None] + 2.0 * lam), axis=-1) - 1.0
        lo = np.where(f > 0, mid, lo)
        hi = np.where(f > 0, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(hi, 1.0)):
            return 0.5 * (lo + hi)


class _Envelope:
    """Precomputed ACG envelopes for a stack of canonical matrices ``B``."""

    def __init__(self, A):
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        lam = np.linalg.eigvalsh(A)
        q = A.shape[-1]
        top = lam[..., -1]
        self.B = top[..., None, None] * np.eye(q) - A
        lam_t = np.clip(top[..., None] - lam, 0.0, None)
        self.b = _acg_b(lam_t)
        omega = np.eye(q) + (2.0 / self.b)[..., None, None] * self.B
        L = np.linalg.cholesky(omega)
        # z = L^{-T} eps has covariance Omega^{-1}
        self.LinvT = np.swapaxes(np.linalg.inv(L), -1, -2)
        self.q = q
        self.log_bound = -(q - self.b) / 2 + (q / 2) * np.log(q / self.b)


def _bingham_rejection(env, which, gen, max_attempts):
    """One exact draw per entry of `which` (indices into the envelope stack)."""
    m = which.shape[0]
    q = env.q
    out = np.empty((m, q))
    attempts = np.zeros(m, dtype=np.int64)
    pending = np.arange(m)
    total = 0
    while pending.size:
        k = which[pending]
        eps = gen.standard_normal((pending.size, q))
        z = np.einsum("nij,nj->ni", env.LinvT[k], eps)
        x = z / np.linalg.norm(z, axis=1, keepdims=True)
        s = np.einsum("ni,nij,nj->n", x, env.B[k], x)
        s = np.maximum(s, 0.0)
        b = env.b[k]
        log_ratio = -s + (q / 2) * np.log1p(2 * s / b) - env.log_bound[k]
        u = gen.random(pending.size)
        ok = np.log1p(-u) < log_ratio  # 1 - u lies in (0, 1]
        attempts[pending] += 1
        total += pending.size
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
        if pending.size and np.max(attempts[pending]) >= max_attempts:
            raise NumericalError(
                f"Bingham rejection sampler exceeded {max_attempts} attempts; "
                "concentration is pathological"
            )
    return out, total


def sample_bingham(params, rng, size=None, max_attempts=DEFAULT_MAX_ATTEMPTS, return_stats=False):
    """Exact draws from the Bingham density ``exp(w^T A w)`` on ``S^{p-1}``.

    Draws are not sign-canonicalized; the density is antipodally symmetric
    and callers that need a hemisphere flip do it themselves.

    Parameters
    ----------
    params : BinghamParams or array_like
        Concentration matrix.
    rng : RngStream or numpy.random.Generator
    size : int, optional
        Number of draws; ``None`` returns a single vector.
    max_attempts : int
        Per-draw cap on rejected proposals.
    return_stats : bool
        Also return the empirical acceptance rate.

    Returns
    -------
    ndarray, shape (p,) or (size, p)
    """
    if not isinstance(params, BinghamParams):
        params = BinghamParams(params)
    gen = as_generator(rng)
    m = 1 if size is None else int(size)
    env = _Envelope(params.A[None])
    draws, total = _bingham_rejection(env, np.zeros(m, dtype=np.intp), gen, max_attempts)
    out = draws[0] if size is None else draws
    if return_stats:
        return out, (m / total if total else 1.0)
    return out


def sample_bingham_batch(A, rng, max_attempts=DEFAULT_MAX_ATTEMPTS, return_stats=False):
    """One Bingham draw for each matrix in a stack ``A`` of shape ``(K, q, q)``.

    Symmetry is enforced by averaging with the transpose rather than checked,
    since the stack is usually built internally (e.g. ``N^T S N``).
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 3 or A.shape[1] != A.shape[2] or A.shape[1] < 2:
        raise DataError(f"expected a stack of square matrices, got shape {A.shape}")
    gen = as_generator(rng)
    env = _Envelope(A)
    draws, total = _bingham_rejection(env, np.arange(A.shape[0]), gen, max_attempts)
    if return_stats:
        return draws, (A.shape[0] / total if total else 1.0)
    return draws


def sample_acg(omega_inverse, rng, size=None):
    """Angular central Gaussian: ``z / |z|`` with ``z ~ N(0, Omega^{-1})``.

    `omega_inverse` is the precision matrix ``Omega`` of the underlying
    Gaussian (the conventional ACG parameter).
    """
    omega = np.asarray(omega_inverse, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise DataError("ACG parameter must be a square matrix")
    try:
        L = np.linalg.cholesky(0.5 * (omega + omega.T))
    except np.linalg.LinAlgError:
        raise DataError("ACG parameter is not positive definite") from None
    gen = as_generator(rng)
    m = 1 if size is None else int(size)
    eps = gen.standard_normal((m, omega.shape[0]))
    # solve L^T z = eps  =>  cov(z) = Omega^{-1}
    z = np.linalg.solve(L.T, eps.T).T
    x = z / np.linalg.norm(z, axis=1, keepdims=True)
    return x[0] if size is None else x


def truncated_normal_positive_from_uniform(mean, sd, u):
    """Inverse-CDF transform of ``u in (0, 1]`` to ``N(mean, sd^2)`` restricted to ``(0, inf)``.

    Works through the upper tail, ``Z = -Phi^{-1}(u Phi(-a))`` with
    ``a = -mean / sd``, evaluated in log space so that it stays finite when
    the truncation point is deep in the tail.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    a = -mean / sd
    z = -ndtri_exp(np.log(u) + log_ndtr(-a))
    x = mean + sd * z
    # guards the u -> 1 rounding edge where z collapses onto a
    return np.maximum(x, np.nextafter(0.0, 1.0))


def sample_truncated_normal_positive(mean, sd, rng, size=None):
    """Exact draws from ``N(mean, sd^2)`` conditioned on ``(0, inf)``."""
    if np.any(np.asarray(sd) <= 0):
        raise DataError("sd must be positive")
    gen = as_generator(rng)
    shape = np.broadcast(np.asarray(mean), np.asarray(sd)).shape if size is None else size
    u = 1.0 - gen.random(shape)
    x = truncated_normal_positive_from_uniform(mean, sd, u)
    return float(x) if np.ndim(x) == 0 else x


def log_truncated_normal_mass(mean, sd):
    """``log P(N(mean, sd^2) > 0)``, used for MH Hastings corrections."""
    return log_ndtr(np.asarray(mean) / np.asarray(sd))


def sample_multivariate_normal(mean, cov, rng, size=None):
    """Gaussian draws through a Cholesky factor of `cov`."""
    mean = np.asarray(mean, dtype=float)
    L = np.linalg.cholesky(np.asarray(cov, dtype=float))
    gen = as_generator(rng)
    m = 1 if size is None else int(size)
    x = mean + gen.standard_normal((m, mean.shape[0])) @ L.T
    return x[0] if size is None else x


@dataclass(frozen=True)
class MhConfig:
    """Settings for :func:`adaptive_mh`.

    During burn-in the scalar step is multiplied (divided) by `adapt_factor`
    whenever the acceptance rate of the last `adapt_every` iterations is above
    (below) `target_window`; after burn-in the step is frozen.
    """

    initial_step: float = 0.1
    target_window: tuple = (0.25, 0.50)
    adapt_every: int = 100
    burn_in: int = 2000
    n_samples: int = 5000
    thin: int = 1
    adapt_factor: float = 1.25
    block: int = 1024

    def __post_init__(self):
        lo, hi = self.target_window
        if not 0 < lo < hi < 1:
            raise DataError("target_window must satisfy 0 < low < high < 1")
        if self.initial_step <= 0:
            raise DataError("initial_step must be positive")
        if self.adapt_every < 1 or self.thin < 1 or self.burn_in < 0 or self.n_samples < 0:
            raise DataError("counts must be nonnegative (adapt_every, thin >= 1)")
        if self.adapt_factor <= 1:
            raise DataError("adapt_factor must exceed 1")


@dataclass
class MhResult:
    """Output of :func:`adaptive_mh`.

    `chain` has shape ``(n_samples, d)`` for one chain or
    ``(chains, n_samples, d)`` when several chains run together.
    `window_rates` holds the acceptance rate of each adaptation window
    (burn-in and after); `acceptance_rate` is the post-burn-in rate.
    """

    chain: np.ndarray
    window_rates: np.ndarray
    acceptance_rate: np.ndarray
    step: np.ndarray
    final_window_rate: np.ndarray = field(default=None)


def adaptive_mh(log_density, initial, config, rng, positive=None):
    """Random-walk Metropolis-Hastings with acceptance-window step adaptation.

    Proposals are Gaussian with a scalar step per chain. Coordinates flagged
    in `positive` are proposed from a normal truncated to ``(0, inf)`` and the
    Hastings ratio includes the truncation masses.

    Several independent chains may run in lockstep: pass `initial` with shape
    ``(chains, d)``, a `log_density` that maps ``(chains, d)`` to
    ``(chains,)``, and a sequence of streams, one per chain. Each chain
    consumes only its own stream, so results do not depend on how chains are
    grouped.

    Parameters
    ----------
    log_density : callable
        Unnormalized log target. For a single chain it receives a 1-D point
        and returns a float.
    initial : array_like, shape (d,) or (chains, d)
    config : MhConfig
    rng : RngStream or sequence of RngStream
    positive : array_like of bool, shape (d,), optional

    Returns
    -------
    MhResult
    """
    x0 = np.asarray(initial, dtype=float)
    single = x0.ndim == 1
    X = x0[None] if single else x0.copy()
    C, d = X.shape
    if not np.all(np.isfinite(X)):
        raise DataError("initial state is not finite")
    gens = [as_generator(rng)] if single else [as_generator(r) for r in rng]
    if len(gens) != C:
        raise DataError(f"need one stream per chain ({C}), got {len(gens)}")

    def logp(Y):
        if single:
            return np.array([float(log_density(Y[0]))])
        return np.asarray(log_density(Y), dtype=float)

    pos = np.zeros(d, dtype=bool) if positive is None else np.asarray(positive, dtype=bool)
    lp = logp(X)
    if np.any(np.isnan(lp)) or np.any(~np.isfinite(lp)):
        raise DataError("log density is not finite at the initial state")

    step = np.full(C, float(config.initial_step))
    total = config.burn_in + config.n_samples * config.thin
    lo, hi = config.target_window
    keep = np.empty((C, config.n_samples, d))
    window_acc = np.zeros(C)
    post_acc = np.zeros(C)
    rates = []
    kept = 0
    for start in range(0, total, config.block):
        nb = min(config.block, total - start)
        # per-chain blocks keep every chain on its own stream
        eps = np.stack([g.standard_normal((nb, d)) for g in gens], axis=1)
        uprop = np.stack([1.0 - g.random((nb, d)) for g in gens], axis=1)
        uacc = np.stack([1.0 - g.random(nb) for g in gens], axis=1)
        for i in range(nb):
            t = start + i
            prop = X + step[:, None] * eps[i]
            log_q = np.zeros(C)
            if pos.any():
                sd = step[:, None] * np.ones((1, int(pos.sum())))
                cur = X[:, pos]
                new = truncated_normal_positive_from_uniform(cur, sd, uprop[i][:, pos])
                prop[:, pos] = new
                # q(x|x') / q(x'|x) for truncated normals: ratio of truncation masses
                log_q = np.sum(
                    log_truncated_normal_mass(cur, sd) - log_truncated_normal_mass(new, sd), axis=1
                )
            lp_new = logp(prop)
            if np.any(np.isnan(lp_new)):
                raise NumericalError("log density returned NaN")
            acc = np.log(uacc[i]) < (lp_new - lp + log_q)
            X = np.where(acc[:, None], prop, X)
            lp = np.where(acc, lp_new, lp)
            window_acc += acc
            if t >= config.burn_in:
                post_acc += acc
                if (t - config.burn_in) % config.thin == config.thin - 1:
                    keep[:, kept] = X
                    kept += 1
            if (t + 1) % config.adapt_every == 0:
                rate = window_acc / config.adapt_every
                rates.append(rate)
                window_acc[:] = 0
                if t < config.burn_in:
                    step = np.where(rate < lo, step / config.adapt_factor, step)
                    step = np.where(rate > hi, step * config.adapt_factor, step)
    n_post = total - config.burn_in
    acc_rate = post_acc / n_post if n_post else np.full(C, np.nan)
    rates = np.array(rates).T if rates else np.zeros((C, 0))
    final = rates[:, -1] if rates.shape[1] else np.full(C, np.nan)
    if single:
        return MhResult(keep[0], rates[0], float(acc_rate[0]), float(step[0]), float(final[0]))
    return MhResult(keep, rates, acc_rate, step, final)
