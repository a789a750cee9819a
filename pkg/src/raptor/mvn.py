"""Multivariate Gaussian primitives on SPD covariances.

Everything downstream (mixture fitting, proposals, targets) evaluates and
samples Gaussians through the two types defined here.  A covariance is
factored once at construction; log-densities reuse the factor through its
cached triangular inverse (no general matrix inverse is ever formed) and
draws reuse it directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dtrtri

from .errors import DimensionMismatch, NotPositiveDefinite

LOG_2PI = np.log(2.0 * np.pi)

# A factorization counts as failed when a diagonal factor entry falls at or
# below this value; upstream adaptation is expected to regularize, this
# module only rejects.
PIVOT_TOL = 1e-12

SYMMETRY_TOL = 1e-10


def chol(m: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor of an SPD matrix.

    Parameters
    ----------
    m : (d, d) array
        Symmetric matrix (only the lower triangle is referenced).

    Returns
    -------
    (d, d) array
        Lower-triangular ``L`` with ``L @ L.T == m`` and strictly positive
        diagonal.

    Raises
    ------
    NotPositiveDefinite
        If any pivot is <= ``PIVOT_TOL``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None
    if np.min(np.diagonal(lower)) <= PIVOT_TOL:
        raise NotPositiveDefinite(
            f"pivot below tolerance {PIVOT_TOL:g}; covariance is numerically singular"
        )
    return lower


class CovMatrix:
    """SPD covariance with cached Cholesky factor, inverse factor and
    log-determinant."""

    __slots__ = ("entries", "chol", "log_det", "_norm", "_inv_chol")

    def __init__(self, entries: np.ndarray):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"covariance must be square, got shape {a.shape}")
        if np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
            raise ValueError("covariance is not symmetric within 1e-10")
        self.entries = a
        self.chol = chol(a)
        self._finish()

    def _finish(self):
        self.log_det = 2.0 * float(np.sum(np.log(np.diagonal(self.chol))))
        self._norm = -0.5 * (self.entries.shape[0] * LOG_2PI + self.log_det)
        self._inv_chol = None

    @classmethod
    def _from_factor(cls, entries: np.ndarray, lower: np.ndarray) -> "CovMatrix":
        # internal fast path: trusted entries/factor pair, no re-validation
        self = object.__new__(cls)
        self.entries = entries
        self.chol = lower
        self._finish()
        return self

    @classmethod
    def identity(cls, dim: int) -> "CovMatrix":
        eye = np.eye(dim)
        return cls._from_factor(eye, eye.copy())

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def inv_chol(self) -> np.ndarray:
        """Inverse of the lower factor, computed once on first use."""
        if self._inv_chol is None:
            inv, info = dtrtri(self.chol, lower=1)
            if info != 0:  # pragma: no cover - diag already checked positive
                raise NotPositiveDefinite("triangular inversion failed")
            self._inv_chol = inv
        return self._inv_chol

    def scaled(self, c: float) -> "CovMatrix":
        """Covariance ``c * entries`` without re-factorizing (c > 0)."""
        if c <= 0:
            raise ValueError("scale factor must be positive")
        rc = np.sqrt(c)
        out = CovMatrix._from_factor(c * self.entries, rc * self.chol)
        if self._inv_chol is not None:
            out._inv_chol = self._inv_chol / rc
        return out

    def maha(self, diffs: np.ndarray):
        """Squared Mahalanobis norm of one or many centered vectors.

        ``diffs`` has shape (d,) or (n, d); returns a scalar or (n,).
        """
        if diffs.ndim == 1:
            v = self.inv_chol @ diffs
            return float(v @ v)
        v = diffs @ self.inv_chol.T
        return np.einsum("ij,ij->i", v, v)

    def logpdf_centered(self, diffs: np.ndarray):
        """log N(diff; 0, entries) for one (d,) or many (n, d) vectors."""
        diffs = np.asarray(diffs, dtype=float)
        if diffs.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"vector dimension {diffs.shape[-1]} != covariance dimension {self.dim}"
            )
        return self._norm - 0.5 * self.maha(diffs)

    def __repr__(self):  # pragma: no cover
        return f"CovMatrix(dim={self.dim})"


@dataclass(frozen=True)
class GaussianParams:
    """Mean vector plus SPD covariance."""

    mean: np.ndarray
    cov: CovMatrix

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        object.__setattr__(self, "mean", mean)
        if mean.ndim != 1 or mean.shape[0] != self.cov.dim:
            raise DimensionMismatch(
                f"mean dimension {mean.shape} != covariance dimension {self.cov.dim}"
            )

    @property
    def dim(self) -> int:
        return self.cov.dim


def mvn_logpdf(x: np.ndarray, p: GaussianParams):
    """Gaussian log-density at ``x`` (a (d,) point or an (n, d) batch)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.dim:
        raise DimensionMismatch(f"x has dimension {x.shape[-1]}, params have {p.dim}")
    return p.cov.logpdf_centered(x - p.mean)


def mvn_sample(p: GaussianParams, rng: np.random.Generator, size: int | None = None):
    """Draw from N(mean, cov) as ``mean + L z``; deterministic given the rng state.

    Returns a (d,) vector, or an (size, d) array when ``size`` is given.
    """
    if size is None:
        z = rng.standard_normal(p.dim)
        return p.mean + p.cov.chol @ z
    z = rng.standard_normal((size, p.dim))
    return p.mean + z @ p.cov.chol.T
