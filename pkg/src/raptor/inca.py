"""Inter-chain adaptation: M parallel chains, one shared adaptation state.

Each sweep advances every chain one Metropolis step against a frozen policy
snapshot, then feeds the M new states to the shared estimator in the pooled
interleaving order (chain 1..M within the sweep), each observation carrying
its own diminishing step weight.  Chains never share an RNG stream, so a
sweep is reproducible regardless of how the per-chain work is scheduled.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .samplers import advance_chains, make_chain


def pool_index(k: int, M: int):
    """Map the 1-based pooled index ``k`` to its (chain, time) pair.

    Inverse of ``(i, j) -> k = M (j - 1) + i``: time ``j = floor((k+M-1)/M)``
    and chain ``i = k - M (j - 1)``.
    """
    if k < 1:
        raise DomainError("pooled index k must be >= 1")
    if M < 1:
        raise DomainError("chain count M must be >= 1")
    j = (k + M - 1) // M
    i = k - M * (j - 1)
    return i, j


def spawn_rngs(seed, M: int):
    """Independent per-chain generators from one seed or SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(M)]


class ChainPool:
    """M chains sharing one target, one policy and one adaptation state."""

    def __init__(self, starts, policy, target, rngs, adapt: bool = True):
        starts = np.atleast_2d(np.asarray(starts, dtype=float))
        if len(rngs) != starts.shape[0]:
            raise ValueError("need exactly one rng per chain")
        self.chains = [make_chain(x0, target) for x0 in starts]
        self.policy = policy
        self.rngs = list(rngs)
        self.adapt = adapt
        self.sweep_count = 0

    @property
    def M(self) -> int:
        return len(self.chains)

    def states(self) -> np.ndarray:
        return np.stack([c.x for c in self.chains])


def sweep(pool: ChainPool, target) -> ChainPool:
    """Advance every chain one step, then absorb the new states (pooled order)."""
    pool.chains = advance_chains(pool.chains, pool.policy, target, pool.rngs)
    if pool.adapt:
        pool.policy.absorb(pool.states())
    pool.sweep_count += 1
    return pool


def run_sweeps(pool: ChainPool, target, n_sweeps: int, record: bool = True):
    """Run ``n_sweeps`` sweeps; optionally return the (n_sweeps, M, d) state
    history (one snapshot per sweep, after the move)."""
    if not record:
        for _ in range(n_sweeps):
            sweep(pool, target)
        return None
    d = pool.chains[0].x.shape[0]
    out = np.empty((n_sweeps, pool.M, d))
    for t in range(n_sweeps):
        sweep(pool, target)
        out[t] = pool.states()
    return out
