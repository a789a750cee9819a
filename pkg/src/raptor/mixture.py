"""Online EM for a K-component Gaussian mixture, and the region machinery
derived from the fit.

The estimator follows the stochastic-approximation form of the EM recursion:
the per-component sufficient statistics

    theta0[k]  responsibility mass        (scalar)
    theta1[k]  responsibility-weighted x  (d,)
    theta2[k]  responsibility-weighted xx'  (d, d)

are relaxed toward each new observation's contribution with a diminishing
step weight (1/n by default), and the mixture parameters are read off by the
usual M-step

    beta[k] = theta0[k],  mu[k] = theta1[k]/theta0[k],
    Sigma[k] = theta2[k]/theta0[k] - mu[k] mu[k]'.

Regions are the sets where one component's density (weights excluded)
dominates the others; the partition adapts as the fit does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZero, BadGrid, DimensionMismatch
from .mvn import CovMatrix, NotPositiveDefinite

WEIGHT_FLOOR = 1e-4
RIDGE = 1e-6


def _spd_repair(sym: np.ndarray) -> CovMatrix:
    """Ridge a symmetric matrix until it factors; escalate if needed."""
    d = sym.shape[0]
    ridge = RIDGE * np.trace(sym) / d
    if not ridge > 0.0:
        ridge = 1e-12
    eye = np.eye(d)
    for _ in range(60):
        a = sym + ridge * eye
        try:
            lower = np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            ridge *= 10.0
            continue
        if np.min(np.diagonal(lower)) <= 1e-12:
            ridge *= 10.0
            continue
        return CovMatrix._from_factor(a, lower)
    raise NotPositiveDefinite("covariance could not be regularized")  # pragma: no cover


class MixtureState:
    """Weights, means and covariances of the current fit.

    Treated as immutable; ``em_update`` returns a fresh state.  Whole-space
    moments are derived from the components and cached on first use.
    """

    __slots__ = ("weights", "means", "covs", "_whole", "_log_w")

    def __init__(self, weights, means, covs):
        weights = np.asarray(weights, dtype=float)
        means = np.asarray(means, dtype=float)
        covs = tuple(covs)
        if weights.ndim != 1 or means.ndim != 2 or len(covs) != weights.shape[0]:
            raise DimensionMismatch("weights (K,), means (K, d), covs length K required")
        if means.shape[0] != weights.shape[0]:
            raise DimensionMismatch("means and weights disagree on K")
        d = covs[0].dim
        if any(c.dim != d for c in covs) or means.shape[1] != d:
            raise DimensionMismatch("all components must share one dimension")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if np.any(weights < 0.0):
            raise ValueError("mixture weights must be nonnegative")
        self.weights = weights
        self.means = means
        self.covs = covs
        self._whole = None
        self._log_w = None

    @classmethod
    def _trusted(cls, weights, means, covs) -> "MixtureState":
        # fast path for the M-step: inputs already validated by construction
        self = object.__new__(cls)
        self.weights = weights
        self.means = means
        self.covs = covs
        self._whole = None
        self._log_w = None
        return self

    @property
    def log_weights(self) -> np.ndarray:
        if self._log_w is None:
            with np.errstate(divide="ignore"):
                self._log_w = np.log(self.weights)
        return self._log_w

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_logpdfs(self, x: np.ndarray) -> np.ndarray:
        """log N(x; mu_k, Sigma_k) for every k; (K,) for a point, (n, K) batched."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.array(
                [c.logpdf_centered(x - mu) for mu, c in zip(self.means, self.covs)]
            )
        out = np.empty((x.shape[0], self.K))
        for k, (mu, c) in enumerate(zip(self.means, self.covs)):
            out[:, k] = c.logpdf_centered(x - mu)
        return out

    def logpdf(self, x: np.ndarray):
        """Log-density of the mixture itself."""
        comp = self.component_logpdfs(x) + self.log_weights
        m = np.max(comp, axis=-1)
        return m + np.log(np.sum(np.exp(comp - m[..., None]), axis=-1))

    @property
    def whole_mean(self) -> np.ndarray:
        return self._whole_moments()[0]

    @property
    def whole_cov(self) -> CovMatrix:
        return self._whole_moments()[1]

    def _whole_moments(self):
        if self._whole is None:
            mu_w = self.weights @ self.means
            second = np.zeros((self.dim, self.dim))
            for b, mu, c in zip(self.weights, self.means, self.covs):
                second += b * (c.entries + np.outer(mu, mu))
            sig = second - np.outer(mu_w, mu_w)
            sig = 0.5 * (sig + sig.T)
            try:
                cov = CovMatrix(sig)
            except NotPositiveDefinite:
                cov = _spd_repair(sig)
            self._whole = (mu_w, cov)
        return self._whole


def whole_moments(m: MixtureState):
    """Marginal mean and covariance of the mixture as plain arrays."""
    mu_w, cov = m._whole_moments()
    return mu_w, cov.entries


@dataclass(frozen=True)
class SuffStats:
    """Running sufficient statistics of the online EM, one slice per component."""

    theta0: np.ndarray  # (K,)
    theta1: np.ndarray  # (K, d)
    theta2: np.ndarray  # (K, d, d)
    n: int

    @classmethod
    def from_mixture(cls, m: MixtureState, n0: int = 0) -> "SuffStats":
        """Statistics that reproduce ``m`` exactly, carrying ``n0`` pseudo-counts.

        With n0 > 0 the initial fit decays at the 1/n rate instead of being
        overwritten by the first observation.
        """
        b = m.weights
        theta1 = b[:, None] * m.means
        theta2 = np.stack(
            [bk * (c.entries + np.outer(mu, mu))
             for bk, mu, c in zip(b, m.means, m.covs)]
        )
        return cls(b.copy(), theta1, theta2, int(n0))


def responsibilities(x: np.ndarray, m: MixtureState) -> np.ndarray:
    """Posterior component-membership probabilities of ``x`` under ``m``."""
    logs = m.component_logpdfs(x) + m.log_weights
    shift = np.max(logs, axis=-1)
    if np.any(np.isneginf(shift)):
        raise AllZero("every component log-density underflowed")
    w = np.exp(logs - shift[..., None])
    return w / np.sum(w, axis=-1, keepdims=True)


def _mixture_from_stats(theta0, theta1, theta2) -> MixtureState:
    # M-step with the numerical guards: weight floor then renormalize,
    # symmetrize, and a trace-scaled ridge before factorization
    beta = np.maximum(theta0, WEIGHT_FLOOR)
    beta = beta / beta.sum()
    means = theta1 / np.maximum(theta0, 1e-300)[:, None]
    covs = []
    for k in range(theta0.shape[0]):
        sig = theta2[k] / max(theta0[k], 1e-300) - np.outer(means[k], means[k])
        covs.append(_spd_repair(0.5 * (sig + sig.T)))
    return MixtureState._trusted(beta, means, tuple(covs))


def em_update(s: SuffStats, x: np.ndarray, m: MixtureState, gamma: float):
    """One stochastic-approximation EM step on a single observation.

    Relaxes the sufficient statistics toward the observation's expected
    complete-data statistic with weight ``gamma`` and re-runs the M-step.
    Returns the new ``(SuffStats, MixtureState)`` pair; ``gamma == 0`` is a
    no-op.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    if gamma == 0.0:
        return s, m
    x = np.asarray(x, dtype=float)
    nu = responsibilities(x, m)
    keep = 1.0 - gamma
    theta0 = keep * s.theta0 + gamma * nu
    theta1 = keep * s.theta1 + gamma * nu[:, None] * x
    theta2 = keep * s.theta2 + gamma * nu[:, None, None] * np.outer(x, x)
    return SuffStats(theta0, theta1, theta2, s.n + 1), _mixture_from_stats(
        theta0, theta1, theta2
    )


def region_assign(x: np.ndarray, m: MixtureState) -> int:
    """1-based label of the component whose density dominates at ``x``.

    Mixture weights are deliberately left out, so the partition reflects
    component shape, not mass; ties go to the lowest index.
    """
    return int(np.argmax(m.component_logpdfs(np.asarray(x, dtype=float)))) + 1


def region_assign_batch(X: np.ndarray, m: MixtureState) -> np.ndarray:
    """Labels for an (n, d) batch; same convention as ``region_assign``."""
    return np.argmax(m.component_logpdfs(np.asarray(X, dtype=float)), axis=1) + 1


def region_slice_raster(m: MixtureState, fixed_coords: dict, bounds, res: int = 300):
    """Label grid of a two-dimensional slice through the partition.

    ``fixed_coords`` maps coordinate index -> fixed value; the two remaining
    coordinates are gridded over ``bounds = (xmin, xmax, ymin, ymax)`` at
    ``res`` points per axis.  Returns an (res, res) integer array whose rows
    follow the first free coordinate, so ``grid[ix, iy]`` is the label at
    ``(x_free1[ix], x_free2[iy])``.
    """
    free = [j for j in range(m.dim) if j not in fixed_coords]
    if len(fixed_coords) >= m.dim or any(j < 0 or j >= m.dim for j in fixed_coords):
        raise BadGrid("fixed coordinates must form a proper subset of 0..dim-1")
    if len(free) != 2:
        raise BadGrid(f"a raster needs exactly two free coordinates, got {len(free)}")
    xmin, xmax, ymin, ymax = (float(v) for v in bounds)
    if not (xmin < xmax and ymin < ymax):
        raise BadGrid("empty raster bounds")
    if res < 2:
        raise BadGrid("resolution must be at least 2")

    xs = np.linspace(xmin, xmax, res)
    ys = np.linspace(ymin, ymax, res)
    pts = np.empty((res * res, m.dim))
    for j, v in fixed_coords.items():
        pts[:, j] = v
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts[:, free[0]] = gx.ravel()
    pts[:, free[1]] = gy.ravel()
    return region_assign_batch(pts, m).reshape(res, res)


def save_raster(path, grid: np.ndarray, bounds) -> None:
    """Write a label grid as plain text: a bounds/resolution header line,
    then one space-separated row of labels per line."""
    res = grid.shape[0]
    xmin, xmax, ymin, ymax = bounds
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{xmin:.17g} {xmax:.17g} {ymin:.17g} {ymax:.17g} {res}\n")
        for row in grid:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")


def batch_em(X: np.ndarray, init: MixtureState, tol: float = 1e-8,
             max_iter: int = 500) -> MixtureState:
    """Classical EM on a fixed sample, started from ``init``.

    Iterates to a mean log-likelihood change below ``tol`` or ``max_iter``
    sweeps.  Shares the M-step guards (weight floor, ridge) with the online
    estimator.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != init.dim:
        raise DimensionMismatch("X must be (n, d) with d matching the initial state")
    n = X.shape[0]
    state = init
    prev = -np.inf
    for _ in range(max_iter):
        comp = state.component_logpdfs(X) + state.log_weights
        shift = comp.max(axis=1)
        w = np.exp(comp - shift[:, None])
        tot = w.sum(axis=1)
        ll = float(np.mean(np.log(tot) + shift))
        r = w / tot[:, None]

        mass = r.sum(axis=0)
        theta0 = mass / n
        theta1 = (r.T @ X) / n
        theta2 = np.einsum("nk,ni,nj->kij", r, X, X) / n
        state = _mixture_from_stats(theta0, theta1, theta2)
        if abs(ll - prev) <= tol * (1.0 + abs(ll)):
            break
        prev = ll
    return state
