"""Sphere and Stiefel-manifold primitives.

Unit vectors and orthonormal frames are plain numpy arrays: a unit vector is
a 1-D array with unit norm, a frame is a ``(p, k)`` array with orthonormal
columns. Most functions also accept a leading batch axis so that thousands
of posterior draws can be processed without a Python loop.
"""

import numpy as np

from .errors import DataError, NumericalError

UNIT_TOL = 1e-10
FRAME_TOL = 1e-8


def check_unit_vector(u, tol=UNIT_TOL):
    """Return `u` as a float array after checking ``||u|| = 1`` and ``p >= 2``."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] < 2:
        raise DataError(f"unit vector must be 1-D with length >= 2, got shape {u.shape}")
    if abs(np.linalg.norm(u) - 1.0) > tol:
        raise DataError(f"vector is not unit norm (norm={np.linalg.norm(u):.3e})")
    return u


def check_frame(V, tol=FRAME_TOL):
    """Return `V` as a ``(..., p, k)`` float array after checking ``V^T V = I``."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if V.ndim < 2:
        raise DataError("frame must be at least 2-D")
    p, k = V.shape[-2:]
    if k > p:
        raise DataError(f"frame has more columns ({k}) than rows ({p})")
    if k == 0:
        return V
    gram = np.swapaxes(V, -1, -2) @ V
    err = np.max(np.abs(gram - np.eye(k)))
    if err > tol:
        raise DataError(f"frame columns are not orthonormal (max |V^T V - I| = {err:.3e})")
    return V


def geodesic_distance(u, v, antipodal=False):
    """Great-circle distance between unit vectors.

    Parameters
    ----------
    u, v : array_like, shape (..., p)
        Unit vectors; leading axes broadcast.
    antipodal : bool
        Treat ``w`` and ``-w`` as the same point, so the distance is
        ``arccos |u.v|`` and lies in ``[0, pi/2]``.

    Returns
    -------
    float or ndarray
        Distance in radians.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[-1] != v.shape[-1]:
        raise DataError(f"dimension mismatch: {u.shape[-1]} vs {v.shape[-1]}")
    dot = np.sum(u * v, axis=-1)
    if antipodal:
        dot = np.abs(dot)
    d = np.arccos(np.clip(dot, -1.0, 1.0))
    return float(d) if np.ndim(d) == 0 else d


def chart_forward(w):
    """Hemisphere chart: drop the first coordinate of a unit vector with ``w[0] > 0``.

    Accepts a batch ``(..., p)``; returns ``(..., p - 1)``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape[-1] < 2:
        raise DataError("chart needs p >= 2")
    if np.any(w[..., 0] <= 0):
        raise DataError("point lies outside the chart (first coordinate must be > 0)")
    return w[..., 1:].copy()


def chart_inverse(u):
    """Inverse hemisphere chart: ``u -> (sqrt(1 - |u|^2), u)``."""
    u = np.asarray(u, dtype=float)
    sq = np.sum(u * u, axis=-1)
    if np.any(sq >= 1.0):
        raise DataError("chart coordinates must satisfy ||u|| < 1")
    head = np.sqrt(1.0 - sq)[..., None]
    return np.concatenate([head, u], axis=-1)


def fix_column_signs(M):
    """Flip columns so the largest-magnitude entry of each is positive.

    Ties go to the lowest row index. Works on batches ``(..., p, k)``.
    """
    M = np.array(M, dtype=float, copy=True)
    if M.shape[-1] == 0:
        return M
    idx = np.argmax(np.abs(M), axis=-2)
    lead = np.take_along_axis(M, idx[..., None, :], axis=-2)
    signs = np.where(lead < 0, -1.0, 1.0)
    return M * signs


def null_space_basis(V, check=True):
    """Orthonormal basis of the orthogonal complement of ``span(V)``.

    The frame is completed to a full basis with a Householder QR and the
    trailing ``p - j`` columns are kept, then signs are fixed so that the
    result is deterministic.

    Parameters
    ----------
    V : array_like, shape (..., p, j)
        Orthonormal frame, ``0 <= j < p``. A 1-D vector is treated as ``j = 1``.
    check : bool
        Validate orthonormality of the input.

    Returns
    -------
    ndarray, shape (..., p, p - j)
    """
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    p, j = V.shape[-2:]
    if j >= p:
        raise DataError(f"null space is empty: frame has {j} columns in dimension {p}")
    if check:
        check_frame(V)
    if j == 0:
        return np.broadcast_to(np.eye(p), V.shape[:-2] + (p, p)).copy()
    Q, _ = np.linalg.qr(V, mode="complete")
    return fix_column_signs(Q[..., j:])


def procrustes_align(sample, reference, rcond=1e-12):
    """Right-rotate `sample` to best match `reference` in Frobenius norm.

    Solves ``min_R ||sample @ R - reference||_F`` over orthogonal ``k x k``
    matrices via the SVD of ``sample^T reference``. `sample` may carry
    leading batch axes; `reference` broadcasts against it.

    Returns
    -------
    ndarray, shape (..., p, k)
        ``sample @ R``.
    """
    S = np.asarray(sample, dtype=float)
    T = np.asarray(reference, dtype=float)
    squeeze = S.ndim == 1
    if squeeze:
        S = S[:, None]
        T = T.reshape(-1, 1)
    if S.shape[-2:] != T.shape[-2:]:
        raise DataError(f"shape mismatch: {S.shape} vs {T.shape}")
    U, s, Wt = np.linalg.svd(np.swapaxes(S, -1, -2) @ T)
    if np.any(s[..., -1] <= rcond * np.maximum(s[..., 0], 1.0)):
        raise NumericalError("degenerate alignment: cross-product matrix is rank deficient")
    out = S @ (U @ Wt)
    return out[:, 0] if squeeze else out


def sequential_embed(ws):
    """Map sphere coordinates ``w_1 in S^{p-1}, ..., w_J in S^{p-J}`` to a frame.

    ``v_1 = w_1`` and ``v_j = N_{<j} w_j`` where ``N_{<j}`` is the null-space
    basis of ``[v_1, ..., v_{j-1}]``. Each ``w_j`` may carry a leading batch
    axis (all with the same batch shape).

    Returns
    -------
    ndarray, shape (..., p, J)
    """
    ws = [np.asarray(w, dtype=float) for w in ws]
    if not ws:
        raise DataError("need at least one sphere coordinate")
    p = ws[0].shape[-1]
    for j, w in enumerate(ws):
        if w.shape[-1] != p - j:
            raise DataError(f"stage {j + 1} has dimension {w.shape[-1]}, expected {p - j}")
    batch = ws[0].shape[:-1]
    V = np.zeros(batch + (p, 0))
    for w in ws:
        N = null_space_basis(V, check=False)
        v = np.einsum("...ij,...j->...i", N, w)
        V = np.concatenate([V, v[..., None]], axis=-1)
    return V
