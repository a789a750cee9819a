"""Random-walk Metropolis engine and the three adaptive proposal policies.

All three policies propose Gaussian steps centered at the current point:

* ``AMPolicy``     one covariance, the running covariance of all past states;
* ``RaptPolicy``   a fixed half-space splits the space in two, each side keeps
                   its own running covariance, plus a whole-space kernel;
* ``RaptorPolicy`` the partition comes from a Gaussian-mixture fit updated
                   online, regional covariances are the component covariances
                   and the whole-space kernel uses the mixture's marginal
                   covariance.

The regional kernels are state-dependent (the active region moves with the
current point), so the acceptance ratio always carries the full Hastings
correction; for a single global kernel the correction cancels exactly.

Policies are only mutated through ``absorb`` / the ``*_update`` helpers, never
inside a Metropolis step, so a sweep over parallel chains sees one frozen
snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, TargetError
from .mixture import MixtureState, SuffStats, em_update, region_assign_batch
from .mvn import CovMatrix

# 2.38^2, the optimal random-walk scaling numerator; eps_d = EPS_NUMERATOR / d
EPS_NUMERATOR = 2.38 ** 2


def eps_for_dim(dim: int) -> float:
    return EPS_NUMERATOR / dim


@dataclass(slots=True, frozen=True)
class ChainState:
    """Position, cached target log-density, and step/accept counters."""

    x: np.ndarray
    logpi: float
    step_count: int = 0
    accept_count: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.step_count if self.step_count else 0.0


def make_chain(x0: np.ndarray, target) -> ChainState:
    x0 = np.asarray(x0, dtype=float)
    logpi = float(target.log_density(x0))
    if not np.isfinite(logpi):
        raise ValueError("chain must start at a point of positive target density")
    return ChainState(x0, logpi)


class RunningMoments:
    """Recursive mean and scatter matrix sum((x - mean)(x - mean)')."""

    __slots__ = ("n", "mean", "scatter")

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.scatter = np.zeros((dim, dim))

    def push(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.n
        self.scatter = self.scatter + np.outer(delta, x - self.mean)

    def cov(self) -> np.ndarray:
        """Sample covariance; only defined once two observations arrived."""
        if self.n < 2:
            raise ValueError("covariance undefined for fewer than two observations")
        return self.scatter / (self.n - 1)

    def copy(self) -> "RunningMoments":
        out = RunningMoments(self.mean.shape[0])
        out.n = self.n
        out.mean = self.mean.copy()
        out.scatter = self.scatter.copy()
        return out


def am_update(moments: RunningMoments, x: np.ndarray) -> RunningMoments:
    """Rank-1 update of the running moments; returns a new accumulator."""
    out = moments.copy()
    out.push(np.asarray(x, dtype=float))
    return out


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

class AMPolicy:
    """One global proposal covariance: eps * (running covariance + ridge I).

    Keeps the caller-supplied covariance until two observations arrived.
    """

    def __init__(self, init_cov: CovMatrix, eps: float | None = None,
                 ridge: float = 1e-6):
        self.dim = init_cov.dim
        self.eps = eps_for_dim(self.dim) if eps is None else float(eps)
        self.ridge = ridge
        self.init_cov = init_cov
        self.moments = RunningMoments(self.dim)
        self._prop = init_cov.scaled(self.eps)

    def refresh(self) -> None:
        if self.moments.n >= 2:
            c = self.moments.cov() + self.ridge * np.eye(self.dim)
            self._prop = CovMatrix(self.eps * c)
        else:
            self._prop = self.init_cov.scaled(self.eps)

    def absorb(self, states: np.ndarray) -> None:
        for x in states:
            self.moments.push(x)
        self.refresh()

    def labels(self, X: np.ndarray):
        return None

    def propose_all(self, X: np.ndarray, rngs, labels=None) -> np.ndarray:
        L = self._prop.chol
        Y = np.empty_like(X)
        for i, rng in enumerate(rngs):
            Y[i] = X[i] + L @ rng.standard_normal(self.dim)
        return Y

    def log_q_all(self, X_from: np.ndarray, Y_to: np.ndarray, labels=None) -> np.ndarray:
        return np.atleast_1d(self._prop.logpdf_centered(Y_to - X_from))

    def proposal_cov(self) -> np.ndarray:
        return self._prop.entries


class RaptPolicy:
    """Fixed-boundary regional proposals: side of ``a . x <= b`` picks the
    local covariance, and an always-available whole-space kernel carries
    weight ``alpha``.
    """

    def __init__(self, a: np.ndarray, b: float, init_local, init_whole: CovMatrix,
                 alpha: float, eps: float | None = None, ridge: float = 1e-6):
        a = np.asarray(a, dtype=float)
        self.dim = a.shape[0]
        if any(c.dim != self.dim for c in init_local) or init_whole.dim != self.dim:
            raise DimensionMismatch("boundary and covariances disagree on dimension")
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie strictly inside (0, 1)")
        self.a = a
        self.b = float(b)
        self.alpha = float(alpha)
        self._log_a = np.log(self.alpha)
        self._log_1ma = np.log1p(-self.alpha)
        self.eps = eps_for_dim(self.dim) if eps is None else float(eps)
        self.ridge = ridge
        self.init_local = tuple(init_local)
        self.init_whole = init_whole
        self.local_moments = (RunningMoments(self.dim), RunningMoments(self.dim))
        self.whole_moments = RunningMoments(self.dim)
        self._loc = [c.scaled(self.eps) for c in self.init_local]
        self._whole = init_whole.scaled(self.eps)

    def side(self, x: np.ndarray) -> int:
        """0 for the region with a . x <= b, else 1."""
        return 0 if float(self.a @ x) <= self.b else 1

    def sides(self, X: np.ndarray) -> np.ndarray:
        return (X @ self.a > self.b).astype(np.intp)

    labels = sides

    def refresh(self) -> None:
        eye = self.ridge * np.eye(self.dim)
        for r in range(2):
            m = self.local_moments[r]
            if m.n >= 2:
                self._loc[r] = CovMatrix(self.eps * (m.cov() + eye))
            else:
                self._loc[r] = self.init_local[r].scaled(self.eps)
        if self.whole_moments.n >= 2:
            self._whole = CovMatrix(self.eps * (self.whole_moments.cov() + eye))
        else:
            self._whole = self.init_whole.scaled(self.eps)

    def absorb(self, states: np.ndarray) -> None:
        for x in states:
            rapt_update(self, x)
        self.refresh()

    def propose_all(self, X: np.ndarray, rngs, labels=None) -> np.ndarray:
        sides = self.sides(X) if labels is None else labels
        Y = np.empty_like(X)
        for i, rng in enumerate(rngs):
            use_whole = rng.random() < self.alpha
            L = self._whole.chol if use_whole else self._loc[sides[i]].chol
            Y[i] = X[i] + L @ rng.standard_normal(self.dim)
        return Y

    def log_q_all(self, X_from: np.ndarray, Y_to: np.ndarray, labels=None) -> np.ndarray:
        sides = self.sides(X_from) if labels is None else labels
        diffs = Y_to - X_from
        loc = np.empty(X_from.shape[0])
        for r in range(2):
            mask = sides == r
            if np.any(mask):
                loc[mask] = self._loc[r].logpdf_centered(diffs[mask])
        whole = self._whole.logpdf_centered(diffs)
        return np.logaddexp(self._log_1ma + loc, self._log_a + whole)


def rapt_update(policy: RaptPolicy, x: np.ndarray) -> RaptPolicy:
    """Feed one state to the side containing it and to the whole-space
    accumulator.  Mutates and returns ``policy``; proposal covariances only
    change at the next ``refresh``/``absorb``.
    """
    x = np.asarray(x, dtype=float)
    policy.local_moments[policy.side(x)].push(x)
    policy.whole_moments.push(x)
    return policy


class RaptorPolicy:
    """Mixture-driven regional proposals.

    The current point's region (the mixture component whose density dominates
    there) selects the local covariance; the mixture's marginal covariance
    drives the whole-space kernel.  ``absorb`` advances the online EM one
    observation at a time with 1/n weights and then re-caches the scaled
    proposal factors.
    """

    def __init__(self, mixture: MixtureState, alpha: float,
                 eps: float | None = None, n0: int = 0,
                 stats: SuffStats | None = None):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie strictly inside (0, 1)")
        self.dim = mixture.dim
        self.alpha = float(alpha)
        self._log_a = np.log(self.alpha)
        self._log_1ma = np.log1p(-self.alpha)
        self.eps = eps_for_dim(self.dim) if eps is None else float(eps)
        self.mixture = mixture
        self.stats = SuffStats.from_mixture(mixture, n0) if stats is None else stats
        self._loc = None
        self._whole = None
        self.refresh()

    def refresh(self) -> None:
        self._loc = [c.scaled(self.eps) for c in self.mixture.covs]
        self._whole = self.mixture.whole_cov.scaled(self.eps)

    def absorb(self, states: np.ndarray) -> None:
        for x in states:
            gamma = 1.0 / (self.stats.n + 1)
            self.stats, self.mixture = em_update(self.stats, x, self.mixture, gamma)
        self.refresh()

    def labels(self, X: np.ndarray) -> np.ndarray:
        return region_assign_batch(X, self.mixture) - 1

    def propose_all(self, X: np.ndarray, rngs, labels: np.ndarray | None = None):
        if labels is None:
            labels = self.labels(X)
        Y = np.empty_like(X)
        for i, rng in enumerate(rngs):
            use_whole = rng.random() < self.alpha
            L = self._whole.chol if use_whole else self._loc[labels[i]].chol
            Y[i] = X[i] + L @ rng.standard_normal(self.dim)
        return Y

    def log_q_all(self, X_from: np.ndarray, Y_to: np.ndarray,
                  labels: np.ndarray | None = None) -> np.ndarray:
        if labels is None:
            labels = self.labels(X_from)
        diffs = Y_to - X_from
        loc = np.empty(X_from.shape[0])
        for k in range(self.mixture.K):
            mask = labels == k
            if np.any(mask):
                loc[mask] = self._loc[k].logpdf_centered(diffs[mask])
        whole = self._whole.logpdf_centered(diffs)
        return np.logaddexp(self._log_1ma + loc, self._log_a + whole)


def raptor_propose(x: np.ndarray, policy: RaptorPolicy, rng: np.random.Generator):
    """One regional proposal draw from the current point."""
    return policy.propose_all(np.asarray(x, dtype=float)[None, :], [rng])[0]


def proposal_logdensity(x_from: np.ndarray, y_to: np.ndarray, policy) -> float:
    """Log proposal density q(x -> y) under the policy's current snapshot."""
    x_from = np.asarray(x_from, dtype=float)[None, :]
    y_to = np.asarray(y_to, dtype=float)[None, :]
    return float(policy.log_q_all(x_from, y_to)[0])


# ---------------------------------------------------------------------------
# Metropolis-Hastings kernel
# ---------------------------------------------------------------------------

def advance_chains(chains, policy, target, rngs):
    """One MH step for every chain against a frozen policy snapshot.

    Each chain consumes only its own rng (proposal draws first, then the
    accept coin), so results are independent of batching.  Returns the list
    of new ``ChainState``.
    """
    X = np.stack([c.x for c in chains])
    logpi_x = np.array([c.logpi for c in chains])
    labels_x = policy.labels(X)
    Y = policy.propose_all(X, rngs, labels_x)
    logpi_y = np.atleast_1d(np.asarray(target.log_density(Y), dtype=float))
    if np.any(np.isnan(logpi_y)):
        raise TargetError("target log-density returned NaN at a proposed point")
    log_fwd = policy.log_q_all(X, Y, labels_x)
    log_bwd = policy.log_q_all(Y, X)
    log_ratio = logpi_y - logpi_x + log_bwd - log_fwd

    out = []
    for i, (c, rng) in enumerate(zip(chains, rngs)):
        if np.log(rng.random()) < log_ratio[i]:
            out.append(ChainState(Y[i], float(logpi_y[i]),
                                  c.step_count + 1, c.accept_count + 1))
        else:
            out.append(replace(c, step_count=c.step_count + 1))
    return out


def mh_step(chain: ChainState, policy, target, rng: np.random.Generator) -> ChainState:
    """Single-chain Metropolis-Hastings step; adaptation state is untouched."""
    return advance_chains([chain], policy, target, [rng])[0]
