"""Benchmark target distributions.

Each target exposes an (unnormalized where noted) log-density that accepts a
single point ``(d,)`` or a batch ``(n, d)``, and, where available, an i.i.d.
oracle sampler and a CDF evaluator used by the ECDF-distance diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln, ndtr

from .errors import DimensionMismatch, DomainError, InvalidData


@dataclass(frozen=True)
class TargetModel:
    """A target distribution as the samplers see it."""

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    iid_sampler: Optional[Callable] = None
    cdf: Optional[Callable[[np.ndarray], np.ndarray]] = None
    true_mean: Optional[np.ndarray] = None
    name: str = ""


def _log_sigmoid(t):
    # log(1/(1+e^-t)), stable for every finite t
    return -np.logaddexp(0.0, -t)


# ---------------------------------------------------------------------------
# Two-component Gaussian mixture target
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussMixSpec:
    """xi * N(-d 1, I) + (1 - xi) * N(+d 1, S I) in ``dim`` dimensions."""

    xi: float
    d_sep: float
    S: float
    dim: int = 5

    def __post_init__(self):
        if not 0.0 < self.xi < 1.0:
            raise DomainError("xi must lie strictly inside (0, 1)")
        if self.S <= 0.0:
            raise DomainError("variance ratio S must be positive")
        if self.dim < 1:
            raise DimensionMismatch("dim must be >= 1")


def gaussmix_logpdf(x: np.ndarray, spec: GaussMixSpec):
    """Exact (normalized) log-density of the two-component mixture."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise DimensionMismatch(f"x has dimension {x.shape[-1]}, spec has {spec.dim}")
    dim, d, S = spec.dim, spec.d_sep, spec.S
    base = -0.5 * dim * np.log(2.0 * np.pi)
    l1 = base - 0.5 * np.sum((x + d) ** 2, axis=-1)
    l2 = base - 0.5 * dim * np.log(S) - 0.5 * np.sum((x - d) ** 2, axis=-1) / S
    return np.logaddexp(np.log(spec.xi) + l1, np.log1p(-spec.xi) + l2)


def gaussmix_iid_sample(spec: GaussMixSpec, rng: np.random.Generator, size: int | None = None):
    """Component pick by a Bernoulli(xi) coin, then a diagonal Gaussian draw."""
    n = 1 if size is None else size
    pick_second = rng.random(n) >= spec.xi
    z = rng.standard_normal((n, spec.dim))
    out = np.where(pick_second[:, None],
                   spec.d_sep + np.sqrt(spec.S) * z,
                   -spec.d_sep + z)
    return out[0] if size is None else out

def gaussmix_cdf(z: np.ndarray, spec: GaussMixSpec):
    """Joint CDF, a product of coordinate CDFs within each diagonal component."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != spec.dim:
        raise DimensionMismatch(f"z has dimension {z.shape[-1]}, spec has {spec.dim}")
    f1 = np.prod(ndtr(z + spec.d_sep), axis=-1)
    f2 = np.prod(ndtr((z - spec.d_sep) / np.sqrt(spec.S)), axis=-1)
    return spec.xi * f1 + (1.0 - spec.xi) * f2


def gaussmix_true_mean(spec: GaussMixSpec) -> np.ndarray:
    m = spec.xi * (-spec.d_sep) + (1.0 - spec.xi) * spec.d_sep
    return np.full(spec.dim, m)


def gaussmix_target(spec: GaussMixSpec) -> TargetModel:
    return TargetModel(
        dim=spec.dim,
        log_density=lambda x: gaussmix_logpdf(x, spec),
        iid_sampler=lambda rng, size=None: gaussmix_iid_sample(spec, rng, size),
        cdf=lambda z: gaussmix_cdf(z, spec),
        true_mean=gaussmix_true_mean(spec),
        name=f"gaussmix(xi={spec.xi},d={spec.d_sep},S={spec.S},dim={spec.dim})",
    )


# ---------------------------------------------------------------------------
# Curved ("banana") target
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BananaSpec:
    """Curvature ``B`` applied to coordinate 2; coordinate 1 has variance 100."""

    B: float
    dim: int = 5

    def __post_init__(self):
        if self.B < 0.0:
            raise DomainError("bananicity B must be nonnegative")
        if self.dim < 2:
            raise DimensionMismatch("banana target needs dim >= 2")


def banana_logpdf(x: np.ndarray, spec: BananaSpec):
    """Unnormalized log-density of the curved target."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise DimensionMismatch(f"x has dimension {x.shape[-1]}, spec has {spec.dim}")
    x1 = x[..., 0]
    x2 = x[..., 1]
    out = -x1 ** 2 / 200.0 - 0.5 * (x2 + spec.B * x1 ** 2 - 100.0 * spec.B) ** 2
    if spec.dim > 2:
        out = out - 0.5 * np.sum(x[..., 2:] ** 2, axis=-1)
    return out


def banana_iid_sample(spec: BananaSpec, rng: np.random.Generator, size: int | None = None):
    """Exact draws via the volume-preserving shear of independent Gaussians.

    z1 ~ N(0, 100), z_j ~ N(0, 1); x1 = z1, x2 = z2 - B z1^2 + 100 B and the
    remaining coordinates pass through.
    """
    n = 1 if size is None else size
    z = rng.standard_normal((n, spec.dim))
    z[:, 0] *= 10.0
    x = z
    x[:, 1] = z[:, 1] - spec.B * z[:, 0] ** 2 + 100.0 * spec.B
    return x[0] if size is None else x


def banana_target(spec: BananaSpec) -> TargetModel:
    return TargetModel(
        dim=spec.dim,
        log_density=lambda x: banana_logpdf(x, spec),
        iid_sampler=lambda rng, size=None: banana_iid_sample(spec, rng, size),
        cdf=None,
        true_mean=np.zeros(spec.dim),
        name=f"banana(B={spec.B},dim={spec.dim})",
    )


# ---------------------------------------------------------------------------
# Loss-of-heterozygosity binomial / beta-binomial mixture posterior
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LOHSpec:
    """Frequency records (x_i, N_i) and the half-width of the flat prior on gamma."""

    records: tuple
    gamma_bound: float = 30.0

    def __post_init__(self):
        recs = tuple((int(x), int(n)) for x, n in self.records)
        if not recs:
            raise InvalidData("LOH data must contain at least one record")
        for x, n in recs:
            if not 0 <= x <= n:
                raise InvalidData(f"record (x={x}, N={n}) violates 0 <= x <= N")
        object.__setattr__(self, "records", recs)

    @property
    def x(self) -> np.ndarray:
        return np.array([r[0] for r in self.records])

    @property
    def n(self) -> np.ndarray:
        return np.array([r[1] for r in self.records])


def betabinom_logpmf(x, N: int, pi2: float, gamma: float):
    """Beta-binomial log-pmf under the overdispersion map a = pi2 e^-gamma,
    b = (1 - pi2) e^-gamma.

    The map keeps the mean at N * pi2 for every gamma and recovers the
    binomial as gamma -> -inf.  Evaluated with running log products rather
    than gamma-function differences so that extreme gamma stays accurate.
    """
    x = np.asarray(x)
    if np.any(x < 0) or np.any(x > N):
        raise DomainError("x must satisfy 0 <= x <= N")
    if not 0.0 < pi2 < 1.0:
        raise DomainError("pi2 must lie strictly inside (0, 1)")
    xi = x.astype(int)

    log_choose = gammaln(N + 1) - gammaln(xi + 1) - gammaln(N - xi + 1)

    # e^-gamma overflow/underflow: both limits have exact closed forms
    if gamma < -700.0:
        lp = log_choose + xi * np.log(pi2) + (N - xi) * np.log1p(-pi2)
        return lp if lp.shape else float(lp)
    if gamma > 700.0:
        lp = np.where(xi == 0, np.log1p(-pi2), np.where(xi == N, np.log(pi2), -np.inf))
        return lp if lp.shape else float(lp)

    c = np.exp(-gamma)
    a = pi2 * c
    b = (1.0 - pi2) * c
    i = np.arange(N)
    # cums_*[m] = sum_{i<m} log(. + i)
    cums_a = np.concatenate(([0.0], np.cumsum(np.log(a + i))))
    cums_b = np.concatenate(([0.0], np.cumsum(np.log(b + i))))
    cums_ab = np.concatenate(([0.0], np.cumsum(np.log(a + b + i))))
    lp = log_choose + cums_a[xi] + cums_b[N - xi] - cums_ab[N]
    return lp if lp.shape else float(lp)


def _binom_logpmf_from_logits(x, N, log_p, log_q):
    # log C(N, x) + x log p + (N - x) log(1 - p), with both logs supplied
    log_choose = gammaln(N + 1) - gammaln(x + 1) - gammaln(N - x + 1)
    return log_choose + x * log_p + (N - x) * log_q


def loh_log_posterior(v: np.ndarray, spec: LOHSpec):
    """Log-posterior in the transformed coordinates (logit eta, logit pi1,
    logit pi2, gamma), up to a constant.

    Includes the logistic Jacobian for the three transformed coordinates and
    returns -inf outside the flat prior's gamma range.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 4:
        raise DimensionMismatch(f"expected 4 coordinates, got {v.shape[-1]}")
    single = v.ndim == 1
    V = v[None, :] if single else v

    xr = spec.x
    nr = spec.n
    t_eta, t_p1, t_p2, gam = V[:, 0], V[:, 1], V[:, 2], V[:, 3]

    log_eta = _log_sigmoid(t_eta)
    log_1meta = _log_sigmoid(-t_eta)
    log_p1 = _log_sigmoid(t_p1)
    log_q1 = _log_sigmoid(-t_p1)
    log_p2 = _log_sigmoid(t_p2)
    log_q2 = _log_sigmoid(-t_p2)

    # binomial branch, all records at once: (n_points, n_records)
    lbin = _binom_logpmf_from_logits(
        xr[None, :], nr[None, :], log_p1[:, None], log_q1[:, None]
    )

    # beta-binomial branch via running log products in a = pi2 e^-gamma,
    # b = (1 - pi2) e^-gamma; stable over the whole prior range of gamma
    c = np.exp(-gam)
    a = np.exp(log_p2) * c
    b = np.exp(log_q2) * c
    max_n = int(nr.max())
    i = np.arange(max_n)[None, :]
    zeros = np.zeros((V.shape[0], 1))
    cums_a = np.concatenate([zeros, np.cumsum(np.log(a[:, None] + i), axis=1)], axis=1)
    cums_b = np.concatenate([zeros, np.cumsum(np.log(b[:, None] + i), axis=1)], axis=1)
    cums_ab = np.concatenate([zeros, np.cumsum(np.log((a + b)[:, None] + i), axis=1)], axis=1)
    log_choose = gammaln(nr + 1) - gammaln(xr + 1) - gammaln(nr - xr + 1)
    lbb = log_choose[None, :] + cums_a[:, xr] + cums_b[:, nr - xr] - cums_ab[:, nr]

    loglik = np.sum(
        np.logaddexp(log_eta[:, None] + lbin, log_1meta[:, None] + lbb), axis=1
    )

    jac = (log_eta + log_1meta
           + log_p1 + log_q1
           + log_p2 + log_q2)

    out = loglik + jac
    out = np.where(np.abs(gam) <= spec.gamma_bound, out, -np.inf)
    return float(out[0]) if single else out


def loh_target(spec: LOHSpec) -> TargetModel:
    return TargetModel(
        dim=4,
        log_density=lambda v: loh_log_posterior(v, spec),
        iid_sampler=None,
        cdf=None,
        true_mean=None,
        name=f"loh({len(spec.records)} records)",
    )


def loh_from_original(eta: float, pi1: float, pi2: float, gamma: float) -> np.ndarray:
    """Map original-scale parameters to the sampled coordinates."""
    logit = lambda u: np.log(u) - np.log1p(-u)
    return np.array([logit(eta), logit(pi1), logit(pi2), gamma])


def loh_to_original(v: np.ndarray) -> np.ndarray:
    """Inverse map; accepts a (4,) point or an (n, 4) batch."""
    v = np.asarray(v, dtype=float)
    out = v.copy()
    out[..., :3] = 1.0 / (1.0 + np.exp(-v[..., :3]))
    return out


# ---------------------------------------------------------------------------
# LOH data files
# ---------------------------------------------------------------------------

def load_loh_records(path) -> LOHSpec:
    """Read an ``x,n`` CSV (one integer pair per line after the header)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "x,n":
            raise InvalidData(f"expected header 'x,n', got {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            sx, sn = line.split(",")
            rows.append((int(sx), int(sn)))
    return LOHSpec(tuple(rows))


def synthetic_loh_spec() -> LOHSpec:
    """The bundled 40-record synthetic stand-in dataset."""
    ref = resources.files("raptor").joinpath("data/loh_synthetic.csv")
    with resources.as_file(ref) as path:
        return load_loh_records(path)


def make_synthetic_loh(seed: int = 20090908, n_records: int = 40,
                       eta: float = 0.840, pi1: float = 0.276,
                       pi2: float = 0.690, gamma: float = 10.336) -> LOHSpec:
    """Generate a synthetic dataset from the binomial / beta-binomial mixture.

    Used once (seeded) to produce the bundled CSV; kept so the file can be
    regenerated and its provenance tested.
    """
    rng = np.random.default_rng(seed)
    recs = []
    c = np.exp(-gamma)
    a, b = pi2 * c, (1.0 - pi2) * c
    for _ in range(n_records):
        n = int(rng.integers(20, 101))
        if rng.random() < eta:
            x = int(rng.binomial(n, pi1))
        else:
            x = int(rng.binomial(n, rng.beta(a, b)))
        recs.append((x, n))
    return LOHSpec(tuple(recs))


def write_loh_csv(spec: LOHSpec, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,n\n")
        for x, n in spec.records:
            fh.write(f"{x},{n}\n")
