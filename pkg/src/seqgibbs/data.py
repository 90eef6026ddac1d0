"""CSV matrices and the synthetic generators used by the coverage experiments."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError

GENERATORS = ("gaussian", "t5", "skew_normal", "gumbel", "mvn_diag", "mvt5_diag")
EULER_GAMMA = 0.5772156649015329


def load_matrix_csv(path, has_header=None):
    """Read a rectangular numeric CSV.

    Parameters
    ----------
    path : str or path-like
    has_header : bool, optional
        ``None`` detects a header: the first row is one if any cell fails
        to parse as a number.

    Returns
    -------
    X : ndarray, shape (n, p)
    names : list of str
        Header names, or ``x1, ..., xp`` when there is no header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: file is empty")
    if has_header is None:
        has_header = not all(_is_number(c) for c in rows[0])
    names = [c.strip() for c in rows[0]] if has_header else None
    body = rows[1:] if has_header else rows
    if not body:
        raise DataError(f"{path}: no data rows")
    p = len(names) if names else len(body[0])
    first = 2 if has_header else 1
    X = np.empty((len(body), p))
    for i, row in enumerate(body):
        if len(row) != p:
            raise DataError(f"{path}: row {i + first} has {len(row)} fields, expected {p}")
        for k, cell in enumerate(row):
            try:
                X[i, k] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {i + first}, column {k + 1}"
                ) from None
    if names is None:
        names = [f"x{k + 1}" for k in range(p)]
    return X, names


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_matrix_csv(path, X, names=None):
    """Write a matrix with shortest round-trip decimals (``repr`` of each float)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if names is not None:
            if len(names) != X.shape[1]:
                raise DataError("one name per column required")
            w.writerow(names)
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def table2_spectrum(p):
    """Eigenvalues ``(10, 9, 8, 7, 6)`` followed by ``p - 5`` linearly spaced
    values proportional to ``(p - 5, ..., 1)``, scaled so the tail carries
    10% of the total variance."""
    if p < 6:
        raise DataError(f"the spectrum needs p >= 6, got {p}")
    head = np.array([10.0, 9.0, 8.0, 7.0, 6.0])
    tail = np.arange(p - 5, 0, -1, dtype=float)
    tail *= head.sum() / 9.0 / tail.sum()
    return np.concatenate([head, tail])


@dataclass(frozen=True)
class GeneratorSpec:
    """A named data generator; calling it with a numpy Generator returns ``(X, truth)``.

    1-D generators return ``X`` of shape ``(n,)`` and truth ``{"mean", "variance"}``.
    The diagonal multivariate ones return ``(n, p)`` rows with covariance
    ``diag(table2_spectrum(p))`` and truth ``{"eigenvalues", "eigenvectors"}``.
    """

    name: str
    n: int
    p: int = 1

    def __post_init__(self):
        if self.name not in GENERATORS:
            raise DataError(f"unknown generator {self.name!r}; choose from {GENERATORS}")
        if self.n < 2:
            raise DataError("n must be >= 2")
        if self.name.endswith("_diag"):
            table2_spectrum(self.p)

    @property
    def multivariate(self):
        return self.name.endswith("_diag")

    def truth(self):
        if self.multivariate:
            return {"eigenvalues": table2_spectrum(self.p), "eigenvectors": np.eye(self.p)}
        return {
            "gaussian": {"mean": 0.0, "variance": 1.0},
            "t5": {"mean": 0.0, "variance": 5.0 / 3.0},
            "skew_normal": {"mean": 1.0 / math.sqrt(math.pi), "variance": 1.0 - 1.0 / math.pi},
            "gumbel": {"mean": EULER_GAMMA, "variance": math.pi**2 / 6.0},
        }[self.name]

    def __call__(self, gen):
        return generate_synthetic(self, gen), self.truth()


def generate_synthetic(spec, rng):
    """Draw one dataset from `spec` (a :class:`GeneratorSpec`)."""
    from .sampling import as_generator

    gen = as_generator(rng)
    n = spec.n
    if spec.name == "gaussian":
        return gen.standard_normal(n)
    if spec.name == "t5":
        return gen.standard_t(5, size=n)
    if spec.name == "skew_normal":
        # skew-normal with shape 1: delta |Z0| + sqrt(1 - delta^2) Z1, delta = 1/sqrt(2)
        z = gen.standard_normal((2, n))
        return (np.abs(z[0]) + z[1]) / math.sqrt(2.0)
    if spec.name == "gumbel":
        return gen.gumbel(0.0, 1.0, size=n)
    root = np.sqrt(table2_spectrum(spec.p))
    Z = gen.standard_normal((n, spec.p))
    if spec.name == "mvn_diag":
        return Z * root
    # multivariate t5 has covariance 5/3 times its scale matrix
    w = gen.chisquare(5, size=n)
    return Z * root * np.sqrt(3.0 / w)[:, None]
