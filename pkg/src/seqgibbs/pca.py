"""Sequential Bingham posterior for principal components and PC regression.

Stage ``j`` of the posterior is a Bingham distribution on ``S^{p-j}`` with
concentration ``n eta_j N_{<j}^T S N_{<j}``, where ``S`` is the empirical
covariance and ``N_{<j}`` spans the orthogonal complement of the components
drawn so far. Draws are mapped back with ``v_j = N_{<j} w_j``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, EigengapError, NumericalError
from .geometry import (
    chart_forward,
    fix_column_signs,
    geodesic_distance,
    null_space_basis,
    procrustes_align,
)
from .gibbs import bvm_diagnostic
from .sampling import (
    DEFAULT_MAX_ATTEMPTS,
    as_generator,
    sample_bingham,
    sample_bingham_batch,
)

PROP1_GAP_TOL = 1e-6


@dataclass(frozen=True)
class EigenSystem:
    """Descending eigenvalues and sign-fixed eigenvectors of a symmetric matrix."""

    values: np.ndarray
    vectors: np.ndarray


def eigensystem(sigma):
    """Deterministic eigendecomposition: values descending, each eigenvector's
    largest-magnitude entry positive."""
    S = np.asarray(sigma, dtype=float)
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    return EigenSystem(w[::-1].copy(), fix_column_signs(V[:, ::-1]))


def empirical_covariance(X, center=True, scale=False):
    """``X^T X / n`` after optional column centering and scaling.

    Returns
    -------
    sigma : ndarray, shape (p, p)
    stats : dict
        Column ``mean`` and ``sd`` (population convention) that were removed;
        zeros/ones when the corresponding flag is off.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DataError("X must be an n x p matrix with n >= 2")
    n, p = X.shape
    mean = X.mean(axis=0) if center else np.zeros(p)
    Z = X - mean
    if scale:
        sd = np.sqrt(np.mean((X - X.mean(axis=0)) ** 2, axis=0))
        if np.any(sd <= 0):
            raise DataError(f"columns {np.flatnonzero(sd <= 0).tolist()} have zero variance")
        Z = Z / sd
    else:
        sd = np.ones(p)
    sigma = Z.T @ Z / n
    return 0.5 * (sigma + sigma.T), {"mean": mean, "sd": sd}


def _leading_eigvec(M):
    w, U = np.linalg.eigh(0.5 * (M + np.swapaxes(M, -1, -2)))
    u = U[..., :, -1]
    return w, u


def fit_components(sigma_hat, J, gap_tol=1e-10):
    """Top-``J`` components by solving the sequential sphere problems.

    At stage ``j`` the leading eigenvector ``w_j`` of ``N^T S N`` is mapped
    back to ``v_j = N w_j`` with ``N`` the null-space basis of the earlier
    components. Each ``w_j`` is oriented with ``w_j[0] >= 0``.

    Returns
    -------
    V : ndarray, shape (p, J)
    values : ndarray, shape (J,)
        ``v_j^T S v_j``, the top eigenvalues.
    """
    S = np.asarray(sigma_hat, dtype=float)
    p = S.shape[0]
    if not 1 <= J < p:
        raise DataError(f"need 1 <= J < p, got J={J}, p={p}")
    top = np.linalg.eigvalsh(0.5 * (S + S.T))[::-1]
    gaps = top[:J] - top[1 : J + 1]
    if np.any(gaps <= gap_tol * max(abs(top[0]), np.finfo(float).tiny)):
        bad = int(np.flatnonzero(gaps <= gap_tol * abs(top[0]))[0]) + 1
        raise EigengapError(f"eigengap after component {bad} is below tolerance")
    V = np.zeros((p, 0))
    for _ in range(J):
        N = null_space_basis(V, check=False)
        _, w = _leading_eigvec(N.T @ S @ N)
        if w[0] < 0:
            w = -w
        V = np.column_stack([V, N @ w])
    values = np.einsum("ij,ik,kj->j", V, S, V)
    return V, values


@dataclass(frozen=True)
class SequentialBinghamPosterior:
    """Empirical covariance, sample size and per-component precisions."""

    sigma_hat: np.ndarray
    n: int
    etas: tuple

    def __post_init__(self):
        S = np.asarray(self.sigma_hat, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DataError("sigma_hat must be square")
        scale = max(1.0, float(np.max(np.abs(S))))
        if np.max(np.abs(S - S.T)) > 1e-8 * scale:
            raise DataError("sigma_hat is not symmetric")
        S = 0.5 * (S + S.T)
        if np.linalg.eigvalsh(S)[0] < -1e-8 * scale:
            raise DataError("sigma_hat is not positive semidefinite")
        etas = tuple(float(e) for e in np.atleast_1d(self.etas))
        if not etas or any(e <= 0 for e in etas):
            raise DataError("precisions must be positive")
        if len(etas) >= S.shape[0]:
            raise DataError("need J < p")
        if self.n < 1:
            raise DataError("n must be positive")
        object.__setattr__(self, "sigma_hat", S)
        object.__setattr__(self, "etas", etas)
        object.__setattr__(self, "n", int(self.n))

    @property
    def J(self):
        return len(self.etas)

    @property
    def p(self):
        return self.sigma_hat.shape[0]

    @classmethod
    def from_data(cls, X, etas, center=True, scale=False):
        sigma, _ = empirical_covariance(X, center=center, scale=scale)
        return cls(sigma, np.asarray(X).shape[0], tuple(np.atleast_1d(etas)))


@dataclass
class StageDraws:
    """Per-stage internals of a batch of sequential Bingham draws."""

    w: list
    N: list
    V: np.ndarray


def embed_stage(N, w):
    """Flip each sphere draw into the hemisphere ``w[0] >= 0`` and map it to
    ``v = N w``. The Bingham density is antipodally symmetric, so the flip
    does not change the distribution and ``w`` and ``-w`` give the same ``v``.

    Parameters
    ----------
    N : ndarray, shape (m, p, q)
    w : ndarray, shape (m, q)
    """
    w = np.where(w[:, :1] < 0, -w, w)
    return w, np.einsum("nij,nj->ni", N, w)


def _sample_frames(sigma_hat, n, etas, size, gen, keep_stages=False,
                   max_attempts=DEFAULT_MAX_ATTEMPTS):
    p = sigma_hat.shape[0]
    V = np.zeros((size, p, 0))
    ws, Ns = [], []
    for j, eta in enumerate(etas):
        scale = n * eta
        if j == 0:
            # first stage has the same concentration for every draw
            w = sample_bingham(scale * sigma_hat, gen, size=size, max_attempts=max_attempts)
            N = np.broadcast_to(np.eye(p), (size, p, p))
        else:
            N = null_space_basis(V, check=False)
            A = scale * (np.swapaxes(N, -1, -2) @ sigma_hat @ N)
            w = sample_bingham_batch(A, gen, max_attempts=max_attempts)
        w, v = embed_stage(N, w)
        V = np.concatenate([V, v[:, :, None]], axis=2)
        if keep_stages:
            ws.append(w)
            Ns.append(N)
    return StageDraws(ws, Ns, V)


def sample_components(posterior, rng, size=None, max_attempts=DEFAULT_MAX_ATTEMPTS):
    """Exact draws of the component frame ``[v_1, ..., v_J]``.

    Parameters
    ----------
    posterior : SequentialBinghamPosterior
    rng : RngStream or numpy.random.Generator
    size : int, optional
        Number of frames; ``None`` returns one ``(p, J)`` frame.

    Returns
    -------
    ndarray, shape (p, J) or (size, p, J)
    """
    gen = as_generator(rng)
    m = 1 if size is None else int(size)
    draws = _sample_frames(posterior.sigma_hat, posterior.n, posterior.etas, m, gen,
                           max_attempts=max_attempts)
    return draws.V[0] if size is None else draws.V


def sample_component_stages(posterior, rng, size):
    """Like :func:`sample_components` but also returns each stage's sphere
    coordinates ``w_j`` and null-space bases ``N_{<j}``."""
    return _sample_frames(posterior.sigma_hat, posterior.n, posterior.etas, int(size),
                          as_generator(rng), keep_stages=True)


def prop1_limit_covariance(lambdas, j, eta_j):
    """Limiting covariance of the chart coordinates of stage ``j`` (1-based).

    ``(2 eta_j)^{-1} diag{1/(lambda_j - lambda_{j+1}), ..., 1/(lambda_j - lambda_p)}``.
    """
    lam = np.asarray(lambdas, dtype=float)
    if not 1 <= j < lam.shape[0]:
        raise DataError(f"stage index {j} out of range for {lam.shape[0]} eigenvalues")
    if eta_j <= 0:
        raise DataError("eta must be positive")
    gaps = lam[j - 1] - lam[j:]
    if np.any(np.diff(lam) >= 0) or np.any(gaps <= 0):
        raise EigengapError("eigenvalues must be strictly decreasing")
    if np.any(gaps < PROP1_GAP_TOL * abs(lam[0])):
        raise EigengapError("eigengap too small for a Gaussian limit")
    return np.diag(1.0 / (2.0 * eta_j * gaps))


def prop1_diagnostic(posterior, lambdas, n_draws, rng):
    """Check the Gaussian limit of every stage against the inverse-eigengap target.

    Each stage's draw ``w_j`` and the stage minimizer (leading eigenvector of
    that draw's ``N_{<j}^T S N_{<j}``, oriented into the chart) are mapped
    through the hemisphere chart, centered and scaled by ``sqrt(n)``.

    Returns
    -------
    reports : list of BvmReport
    cross_corr : ndarray
        Correlation matrix of all stages' scaled chart coordinates stacked
        side by side.
    blocks : list of slice
        Column range of each stage inside `cross_corr`.
    """
    draws = sample_component_stages(posterior, rng, n_draws)
    reports, taus, blocks = [], [], []
    start = 0
    S = posterior.sigma_hat
    for j, (w, N) in enumerate(zip(draws.w, draws.N), start=1):
        A = np.swapaxes(N, -1, -2) @ S @ N
        _, u = _leading_eigvec(A)
        u = np.where(u[:, :1] < 0, -u, u)
        coords, center = chart_forward(w), chart_forward(u)
        target = prop1_limit_covariance(lambdas, j, posterior.etas[j - 1])
        reports.append(bvm_diagnostic(coords, center, posterior.n, target))
        taus.append(np.sqrt(posterior.n) * (coords - center))
        blocks.append(slice(start, start + coords.shape[1]))
        start += coords.shape[1]
    cross = np.corrcoef(np.hstack(taus), rowvar=False)
    return reports, cross, blocks


def posterior_scores(X, V):
    """Scores ``X V`` for one frame ``(p, J)`` or a stack ``(draws, p, J)``."""
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if X.shape[-1] != V.shape[-2]:
        raise DataError(f"X has {X.shape[-1]} columns but V has {V.shape[-2]} rows")
    return X @ V


# -- principal component regression ------------------------------------------

@dataclass(frozen=True)
class PcrPosterior:
    """Normal-inverse-gamma posterior of ``(beta, sigma^2)`` given components ``V``.

    ``beta | sigma^2 ~ N(beta_mean, sigma^2 P^{-1})`` with ``P = L L^T``
    (`beta_precision_chol` holds ``L``) and ``1/sigma^2 ~ Gamma(ig_shape, ig_rate)``.
    """

    V: np.ndarray
    beta_mean: np.ndarray
    beta_precision_chol: np.ndarray
    ig_shape: float
    ig_rate: float

    def coefficient_marginals(self):
        """Location, scale and degrees of freedom of the Student-t marginals of beta."""
        L = self.beta_precision_chol
        cov = np.linalg.inv(L @ L.T)
        df = 2 * self.ig_shape
        scale = np.sqrt(self.ig_rate / self.ig_shape * np.diag(cov))
        return self.beta_mean, scale, df


def pcr_condition(X, Y, V, prior_scale=1.0, ig_shape=1.0, ig_rate=1.0):
    """Conjugate update for ``Y = X V beta + e`` with ``e ~ N(0, sigma^2 I)``.

    Prior: ``beta | sigma^2 ~ N(0, sigma^2 prior_scale^2 I)``,
    ``1/sigma^2 ~ Gamma(ig_shape, ig_rate)``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if X.shape[0] != Y.shape[0] or X.shape[1] != V.shape[0]:
        raise DataError("shape mismatch between X, Y and V")
    if prior_scale <= 0 or ig_shape <= 0 or ig_rate <= 0:
        raise DataError("prior parameters must be positive")
    Z = X @ V
    P = Z.T @ Z + np.eye(V.shape[1]) / prior_scale**2
    try:
        L = np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise NumericalError("posterior precision is not positive definite") from None
    mean = np.linalg.solve(P, Z.T @ Y)
    shape = ig_shape + Y.shape[0] / 2
    rate = ig_rate + 0.5 * (Y @ Y - mean @ P @ mean)
    if not rate > 0:
        raise NumericalError("non-positive inverse-gamma rate")
    return PcrPosterior(V, mean, L, float(shape), float(rate))


def sample_pcr_coefficients(post, rng, size):
    """Exact draws of ``(beta, sigma^2)`` from a :class:`PcrPosterior`."""
    gen = as_generator(rng)
    prec = gen.gamma(post.ig_shape, 1.0 / post.ig_rate, size=size)
    sigma2 = 1.0 / prec
    eps = gen.standard_normal((size, post.beta_mean.shape[0]))
    # L^T u = eps  =>  cov(u) = P^{-1}
    u = np.linalg.solve(post.beta_precision_chol.T, eps.T).T
    beta = post.beta_mean + np.sqrt(sigma2)[:, None] * u
    return beta, sigma2


def pcr_joint_sample(X, Y, posterior, n_draws, rng, prior_scale=1.0, ig_shape=1.0,
                     ig_rate=1.0, reference=None):
    """Draws of ``(V, beta, sigma^2)``: components from the sequential Bingham
    posterior, then the exact normal-inverse-gamma conditional given ``V``.

    Parameters
    ----------
    reference : array_like, shape (p, J), optional
        When given, each sampled component is sign-flipped to have a
        nonnegative inner product with the matching reference column, so
        that coefficient draws are comparable across draws.

    Returns
    -------
    V : ndarray, shape (n_draws, p, J)
    beta : ndarray, shape (n_draws, J)
    sigma2 : ndarray, shape (n_draws,)
    """
    gen = as_generator(rng)
    Vs = sample_components(posterior, gen, size=n_draws)
    if reference is not None:
        R = np.asarray(reference, dtype=float)
        signs = np.where(np.einsum("mpj,pj->mj", Vs, R) < 0, -1.0, 1.0)
        Vs = Vs * signs[:, None, :]
    beta = np.empty((n_draws, posterior.J))
    sigma2 = np.empty(n_draws)
    for i in range(n_draws):
        post = pcr_condition(X, Y, Vs[i], prior_scale, ig_shape, ig_rate)
        b, s = sample_pcr_coefficients(post, gen, 1)
        beta[i], sigma2[i] = b[0], s[0]
    return Vs, beta, sigma2


# -- calibration target -------------------------------------------------------

class PCATarget:
    """Adapter exposing the sequential Bingham posterior to the calibration driver.

    Stage estimates are the top eigenvectors of the centered (optionally
    scaled) empirical covariance.

    Parameters
    ----------
    align : {"sign", "procrustes"}
        ``sign`` compares single eigenvectors with the antipodal geodesic
        distance. ``procrustes`` treats the top-`J` frame as one object:
        every stage estimate is the whole frame, and a frame is rotated onto
        the reference frame before the distance of column ``j`` is taken.
        While stage ``j`` is tuned, the later (not yet calibrated) stages
        are drawn at the candidate precision of stage ``j``, because their
        columns enter the rotation.
    """

    ALIGNMENTS = ("sign", "procrustes")

    def __init__(self, J, center=True, scale=False, align="sign"):
        if align not in self.ALIGNMENTS:
            raise DataError(f"align must be one of {self.ALIGNMENTS}")
        self.n_stages = int(J)
        self.center = center
        self.scale = scale
        self.align = align

    @property
    def joint(self):
        return self.align == "procrustes"

    def covariance(self, X):
        return empirical_covariance(X, center=self.center, scale=self.scale)[0]

    def estimate(self, X):
        V = eigensystem(self.covariance(X)).vectors[:, :self.n_stages]
        if self.joint:
            return [V] * self.n_stages
        return [V[:, j] for j in range(self.n_stages)]

    def point(self, frame, j):
        """Stage-``j`` point of a ``p x J`` frame in the format of :meth:`estimate`."""
        frame = np.asarray(frame, dtype=float)[..., :self.n_stages]
        return frame if self.joint else frame[..., j]

    def distance(self, j, draws, center):
        if self.joint:
            aligned = procrustes_align(draws, center)
            return geodesic_distance(aligned[..., j], center[:, j], antipodal=True)
        return geodesic_distance(draws, center, antipodal=True)

    def _frames(self, X, etas, size, gen):
        S = self.covariance(X)
        return _sample_frames(S, np.asarray(X).shape[0], tuple(etas), int(size),
                              as_generator(gen)).V

    def sample_stage(self, X, etas, size, rng):
        """Draws of stage ``len(etas)`` with earlier stages at ``etas[:-1]``."""
        etas = list(etas)
        if self.joint:
            etas += [etas[-1]] * (self.n_stages - len(etas))
            return self._frames(X, etas, size, rng)
        return self._frames(X, etas, size, rng)[:, :, -1]

    def sample_all(self, X, etas, size, gen):
        V = self._frames(X, etas, size, gen)
        return [V] * V.shape[2] if self.joint else [V[:, :, j] for j in range(V.shape[2])]

    def initial_eta(self, X, j, radius, etas, rng):
        """Gaussian-limit guess for stage ``j`` (0-based) from the eigengaps of ``S``.

        Ignores the uncertainty inherited from earlier stages, so it tends to
        overshoot slightly; the stochastic approximation corrects it.
        """
        S = self.covariance(X)
        lam = np.linalg.eigvalsh(S)[::-1]
        gaps = lam[j] - lam[j + 1:]
        if np.any(gaps <= 0) or radius <= 0:
            return 1.0
        gen = as_generator(rng)
        z = gen.standard_normal((4000, gaps.shape[0]))
        r2 = np.sum(z**2 / (2.0 * gaps), axis=1)
        q = np.quantile(r2, 0.95, method="inverted_cdf")
        n = np.asarray(X).shape[0]
        return float(q / (n * radius**2))
