"""Experiment runner: scenario presets, replication management, seeding and
file outputs.

A run is one (scenario, algorithm) pair executed for B independent
replicates, each replicate being a pool of M chains with shared adaptation.
Outputs land in the configured directory:

* ``summary.csv``        one row per replicate: seed, config hash, sample
                         count, acceptance rate, per-coordinate mean /
                         squared error / error, and the ECDF-distance value;
* ``aggregate.csv``      replicate averages, including the summed-coordinate
                         MSE used for cross-algorithm comparisons;
* ``mixture_final.txt``  (mixture policies) K, weights, means and row-major
                         covariances of replicate 0's final fit;
* ``raster_*.txt``       (mixture policies) region label grids through
                         replicate 0's final partition;
* ``trace_<c>.csv``      optional per-chain traces of coordinate c;
* ``config.txt``         resolved configuration and hash.

Reruns with the same configuration and seed are byte-identical.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import engine
from . import targets as tg
from .diagnostics import RunSummary, ecdf_eval_many
from .errors import ConfigError
from .inca import ChainPool, run_sweeps, spawn_rngs
from .mixture import (MixtureState, _spd_repair, batch_em, region_assign_batch,
                      region_slice_raster, save_raster)
from .mvn import CovMatrix
from .samplers import AMPolicy, RaptPolicy, RaptorPolicy, eps_for_dim

ALGORITHMS = ("am", "rapt", "rapt2", "raptor")
SCENARIOS = ("gaussmix", "banana", "loh")
PRESET_NAMES = ("gaussmix-d3s1", "gaussmix-d0s4", "banana5", "loh")

# distinct sub-seed channels so replicate streams never collide with the
# shared preliminary / oracle streams
_CH_REPLICATE = 1
_CH_PRELIM = 2
_CH_ORACLE = 3
_CH_REFERENCE = 4


@dataclass
class ScenarioConfig:
    """Everything a run needs; presets fill in the per-paper-study values."""

    scenario: str
    algorithm: str = "raptor"
    chains: int = 10
    iterations: int = 10_000
    burn_in: int = 5_000
    replications: int = 20
    alpha: float = 0.2
    K: int = 2
    seed: int = 1
    out_dir: str = "runs/out"
    # gaussmix target
    xi: float = 0.5
    d_sep: float = 3.0
    S: float = 1.0
    dim: int = 5
    # banana target
    B: float = 0.1
    # loh target ('' means the bundled synthetic stand-in)
    data_path: str = ""
    # adaptation details
    em_prior_n0: int = 100
    prelim_iterations: int = 4000
    # diagnostics
    compute_dn: bool = True
    dn_oracle: int = 10_000
    dn_checkpoints: tuple = ()
    reference_draws: int = 1_000_000
    # outputs
    write_files: bool = True
    raster_res: int = 300
    trace_coords: tuple = ()
    workers: int = 1
    label: str = ""
    # compiled inner loop (falls back to the reference engine when the
    # policy/target pair has no kernel)
    fast: bool = True


def validate(cfg: ScenarioConfig) -> None:
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"scenario: unknown value {cfg.scenario!r}")
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm: unknown value {cfg.algorithm!r}")
    if cfg.chains < 1:
        raise ConfigError("chains: must be >= 1")
    if cfg.iterations < 1:
        raise ConfigError("iterations: must be >= 1")
    if not 0 <= cfg.burn_in < cfg.iterations:
        raise ConfigError("burn_in: must satisfy 0 <= burn_in < iterations")
    if cfg.replications < 1:
        raise ConfigError("replications: must be >= 1")
    if not 0.0 < cfg.alpha < 1.0:
        raise ConfigError("alpha: must lie strictly inside (0, 1)")
    if cfg.K < 1:
        raise ConfigError("K: must be >= 1")
    if cfg.scenario == "banana" and cfg.prelim_iterations < 1:
        raise ConfigError("prelim_iterations: must be >= 1")


def config_hash(cfg: ScenarioConfig) -> str:
    skip = {"out_dir", "workers", "write_files", "trace_coords"}
    items = [
        f"{k}={v!r}" for k, v in sorted(dataclasses.asdict(cfg).items())
        if k not in skip
    ]
    return hashlib.sha1("\n".join(items).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def preset(name: str, full_scale: bool = False) -> ScenarioConfig:
    """Named scenario presets; desk scale keeps one tenth of the replications
    (and, for the posterior study, of the chain length)."""
    if name == "gaussmix-d3s1":
        cfg = ScenarioConfig(
            scenario="gaussmix", xi=0.5, d_sep=3.0, S=1.0, dim=5,
            chains=10, iterations=10_000, burn_in=5_000,
            replications=200 if full_scale else 20,
            alpha=0.2, K=2, em_prior_n0=100, label=name,
        )
    elif name == "gaussmix-d0s4":
        cfg = ScenarioConfig(
            scenario="gaussmix", xi=0.5, d_sep=0.0, S=4.0, dim=5,
            chains=10, iterations=10_000, burn_in=5_000,
            replications=200 if full_scale else 20,
            alpha=0.2, K=2, em_prior_n0=100, label=name,
        )
    elif name == "banana5":
        cfg = ScenarioConfig(
            scenario="banana", B=0.1, dim=5,
            chains=10, iterations=10_000, burn_in=4_000,
            replications=500 if full_scale else 50,
            alpha=0.2, K=2, prelim_iterations=4_000, em_prior_n0=4_000,
            compute_dn=False, label=name,
        )
    elif name == "loh":
        cfg = ScenarioConfig(
            scenario="loh",
            chains=10,
            iterations=200_000 if full_scale else 20_000,
            burn_in=10_000 if full_scale else 2_000,
            replications=1, alpha=0.7, K=2, em_prior_n0=50,
            compute_dn=False, label=name,
        )
    else:
        raise ConfigError(f"unknown preset {name!r}")
    return cfg


_BOOLS = {"true": True, "false": False, "1": True, "0": False,
          "yes": True, "no": False}


def load_config_file(path) -> ScenarioConfig:
    """Plain-text ``key=value`` configuration; unknown keys are errors."""
    fields = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in fields:
                raise ConfigError(f"{path}:{lineno}: unknown field {key!r}")
            values[key] = _coerce(fields[key].type, key, val, f"{path}:{lineno}")
    if "scenario" not in values:
        raise ConfigError(f"{path}: missing required field 'scenario'")
    return ScenarioConfig(**values)


def _coerce(ftype: str, key: str, val: str, where: str):
    try:
        if ftype == "int":
            return int(val)
        if ftype == "float":
            return float(val)
        if ftype == "bool":
            return _BOOLS[val.lower()]
        if ftype == "tuple":
            return tuple(int(s) for s in val.split(",") if s.strip())
        return val
    except (ValueError, KeyError):
        raise ConfigError(f"{where}: field {key!r} got malformed value {val!r}") from None


# ---------------------------------------------------------------------------
# Target and policy construction
# ---------------------------------------------------------------------------

def make_target(cfg: ScenarioConfig):
    if cfg.scenario == "gaussmix":
        return tg.gaussmix_target(tg.GaussMixSpec(cfg.xi, cfg.d_sep, cfg.S, cfg.dim))
    if cfg.scenario == "banana":
        return tg.banana_target(tg.BananaSpec(cfg.B, cfg.dim))
    spec = tg.load_loh_records(cfg.data_path) if cfg.data_path else tg.synthetic_loh_spec()
    return tg.loh_target(spec)


def _target_pack(cfg: ScenarioConfig):
    if cfg.scenario == "gaussmix":
        return engine.pack_target("gaussmix", xi=cfg.xi, d_sep=cfg.d_sep,
                                  S=cfg.S, dim=cfg.dim)
    if cfg.scenario == "banana":
        return engine.pack_target("banana", B=cfg.B)
    spec = tg.load_loh_records(cfg.data_path) if cfg.data_path else tg.synthetic_loh_spec()
    return engine.pack_target("loh", spec=spec)


def _gaussmix_init(cfg: ScenarioConfig):
    """Starting parameter values for the two-mode study: means at 1.5x truth,
    halved component covariances, and a whole-space covariance of 5x the
    second component's."""
    d = cfg.dim
    mu_true = np.stack([-cfg.d_sep * np.ones(d), cfg.d_sep * np.ones(d)])
    cov_true = [np.eye(d), cfg.S * np.eye(d)]
    mu0 = 1.5 * mu_true
    sig0 = [CovMatrix(0.5 * c) for c in cov_true]
    sig0w = CovMatrix(5.0 * cov_true[1])
    return mu0, sig0, sig0w


def _match_components_to_sides(fit: MixtureState, a, b):
    """Order mixture components so component r initializes boundary side r."""
    sides = [0 if float(a @ mu) <= b else 1 for mu in fit.means]
    if sorted(sides) == [0, 1]:
        order = [sides.index(0), sides.index(1)]
        return [fit.covs[order[0]], fit.covs[order[1]]]
    return [fit.whole_cov, fit.whole_cov]


def _rapt_boundary(cfg: ScenarioConfig):
    d = dimension_of(cfg)
    a = np.zeros(d)
    if cfg.scenario == "gaussmix":
        a[0] = a[1] = 1.0
        b = 0.0 if cfg.algorithm == "rapt" else 2.0
    elif cfg.scenario == "banana":
        if cfg.algorithm == "rapt":
            a[0], b = 1.0, 0.0
        else:
            a[1], b = 1.0, -1.0
    else:  # loh: split on the logit-pi1 coordinate
        a[1], b = 1.0, 0.0
    return a, b


def dimension_of(cfg: ScenarioConfig) -> int:
    return 4 if cfg.scenario == "loh" else cfg.dim


def _loh_start_box(rng_seed: int, n: int) -> np.ndarray:
    """Quasi-random start points covering [0.1, 0.9]^3 x [-20, 20], mapped to
    the sampled (logit, logit, logit, identity) coordinates."""
    sampler = qmc.Halton(d=4, scramble=True, seed=rng_seed)
    u = sampler.random(n)
    lo = np.array([0.1, 0.1, 0.1, -20.0])
    hi = np.array([0.9, 0.9, 0.9, 20.0])
    pts = qmc.scale(u, lo, hi)
    out = pts.copy()
    out[:, :3] = np.log(pts[:, :3]) - np.log1p(-pts[:, :3])
    return out


def make_starts(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.scenario == "gaussmix":
        mu0, sig0, _ = _gaussmix_init(cfg)
        comp = (rng.random(cfg.chains) >= 0.5).astype(int)
        z = rng.standard_normal((cfg.chains, cfg.dim))
        out = np.empty((cfg.chains, cfg.dim))
        for i in range(cfg.chains):
            out[i] = mu0[comp[i]] + sig0[comp[i]].chol @ z[i]
        return out
    if cfg.scenario == "banana":
        return rng.uniform(-2.0, 2.0, size=(cfg.chains, cfg.dim))
    return _loh_start_box(int(rng.integers(2 ** 31)), cfg.chains)


def build_policy(cfg: ScenarioConfig, prelim=None):
    """Fresh policy for one replicate, initialized from the scenario preset
    (or, for the curved target, from the shared preliminary stage)."""
    d = dimension_of(cfg)
    if cfg.scenario == "gaussmix":
        mu0, sig0, sig0w = _gaussmix_init(cfg)
        if cfg.algorithm == "am":
            return AMPolicy(sig0w)
        if cfg.algorithm in ("rapt", "rapt2"):
            a, b = _rapt_boundary(cfg)
            return RaptPolicy(a, b, sig0, sig0w, cfg.alpha)
        mix = MixtureState([0.5, 0.5], mu0, sig0)
        return RaptorPolicy(mix, cfg.alpha, n0=cfg.em_prior_n0)

    if cfg.scenario == "banana":
        cov_est, fit = prelim
        whole = CovMatrix(cov_est)
        if cfg.algorithm == "am":
            return AMPolicy(whole)
        if cfg.algorithm in ("rapt", "rapt2"):
            a, b = _rapt_boundary(cfg)
            return RaptPolicy(a, b, _match_components_to_sides(fit, a, b),
                              whole, cfg.alpha)
        return RaptorPolicy(fit, cfg.alpha, n0=cfg.em_prior_n0)

    # loh: seed the fit from the quasi-random start distribution
    anchor = _loh_start_box(20214, cfg.K + 1)[1:]
    spread = _loh_start_box(20215, 64)
    base = _spd_repair(np.cov(spread, rowvar=False))
    if cfg.algorithm == "am":
        return AMPolicy(base)
    if cfg.algorithm in ("rapt", "rapt2"):
        a, b = _rapt_boundary(cfg)
        return RaptPolicy(a, b, [base, base], base, cfg.alpha)
    mix = MixtureState(np.full(cfg.K, 1.0 / cfg.K), anchor[: cfg.K],
                       [base] * cfg.K)
    return RaptorPolicy(mix, cfg.alpha, n0=cfg.em_prior_n0)


# ---------------------------------------------------------------------------
# Preliminary stage (curved-target warm start)
# ---------------------------------------------------------------------------

def preliminary_stage(target, iterations: int, rng, K: int = 2,
                      start: np.ndarray | None = None):
    """Plain Gaussian random-walk run followed by a classical EM fit.

    ``start`` may be a single point or an (M, d) block of start points; with
    several chains their histories are pooled before fitting.  Returns the
    sample covariance estimate and a K-component batch-EM fit, both used as
    warm starts for every replicate.  EM is restarted from a quantile split
    along each coordinate and the highest-likelihood fit wins (the split
    direction is not known a priori).
    """
    if iterations <= 0:
        raise ConfigError("prelim_iterations: must be >= 1")
    d = target.dim
    starts = np.zeros((1, d)) if start is None else np.atleast_2d(np.asarray(start, float))
    if isinstance(rng, (list, tuple)):
        rngs = list(rng)
    elif isinstance(rng, np.random.Generator):
        if starts.shape[0] != 1:
            raise ValueError("a single generator only drives a single chain")
        rngs = [rng]
    else:
        rngs = spawn_rngs(rng, starts.shape[0])
    policy = AMPolicy(CovMatrix.identity(d))
    pool = ChainPool(starts, policy, target, rngs, adapt=False)
    hist = run_sweeps(pool, target, iterations)
    samples = hist.reshape(-1, d)
    cov_est = np.cov(samples, rowvar=False)

    best, best_ll = None, -np.inf
    for j in range(d):
        fit = batch_em(samples, _split_init(samples, K, j))
        ll = float(np.mean(fit.logpdf(samples)))
        if ll > best_ll:
            best, best_ll = fit, ll
    return cov_est, best


def _split_init(samples: np.ndarray, K: int, coord: int) -> MixtureState:
    """Deterministic EM seed: quantile-split along one coordinate."""
    order = np.argsort(samples[:, coord], kind="stable")
    groups = np.array_split(order, K)
    means = np.stack([samples[g].mean(axis=0) for g in groups])
    covs = [_spd_repair(np.cov(samples[g], rowvar=False)) for g in groups]
    return MixtureState(np.full(K, 1.0 / K), means, covs)


# ---------------------------------------------------------------------------
# Replicates
# ---------------------------------------------------------------------------

def _run_replicate(cfg: ScenarioConfig, rep: int, prelim, oracle_pack):
    ss = np.random.SeedSequence((cfg.seed, _CH_REPLICATE, rep))
    kids = ss.spawn(2)
    start_rng = np.random.Generator(np.random.PCG64(kids[0]))
    chain_rngs = spawn_rngs(kids[1], cfg.chains)

    target = make_target(cfg)
    policy = build_policy(cfg, prelim)
    starts = make_starts(cfg, start_rng)

    if cfg.fast and engine.supports(policy, cfg.scenario):
        pack = _target_pack(cfg)
        pool = engine.FastPool(starts, policy, target, pack, chain_rngs)
        hist_burn = pool.run(cfg.burn_in) if cfg.burn_in else None
        accepts0, steps0 = int(pool.acc.sum()), cfg.burn_in * cfg.chains
        hist = pool.run(cfg.iterations - cfg.burn_in)
        accepts1, steps1 = int(pool.acc.sum()), cfg.iterations * cfg.chains
    else:
        pool = ChainPool(starts, policy, target, chain_rngs)
        hist_burn = run_sweeps(pool, target, cfg.burn_in) if cfg.burn_in else None
        accepts0 = sum(c.accept_count for c in pool.chains)
        steps0 = sum(c.step_count for c in pool.chains)
        hist = run_sweeps(pool, target, cfg.iterations - cfg.burn_in)
        accepts1 = sum(c.accept_count for c in pool.chains)
        steps1 = sum(c.step_count for c in pool.chains)

    post = hist.reshape(-1, hist.shape[2])  # pooled interleaving order
    ar = (accepts1 - accepts0) / (steps1 - steps0)
    means = post.mean(axis=0)
    if target.true_mean is not None:
        dev = means - target.true_mean
        sq, bias = dev ** 2, dev
    else:
        sq = bias = np.full(post.shape[1], np.nan)

    dn = np.nan
    dn_checks = {}
    if oracle_pack is not None:
        oracle_pts, f_vals = oracle_pack
        fn = ecdf_eval_many(post, oracle_pts)
        dn = float(np.mean((fn - f_vals) ** 2))
        for ncheck in cfg.dn_checkpoints:
            ncheck = min(int(ncheck), post.shape[0])
            fn_c = ecdf_eval_many(post[:ncheck], oracle_pts)
            dn_checks[ncheck] = float(np.mean((fn_c - f_vals) ** 2))

    summary = RunSummary(
        seed=cfg.seed, n=post.shape[0], acceptance_rate=float(ar),
        coord_means=means, mse=sq, bias=bias, dn_hat=dn,
    )
    extras = {"dn_checkpoints": dn_checks}
    if isinstance(policy, RaptorPolicy):
        mix = policy.mixture
        extras["mixture"] = {
            "weights": mix.weights,
            "means": mix.means,
            "covs": np.stack([c.entries for c in mix.covs]),
        }
        if cfg.scenario == "loh":
            extras["loh"] = _loh_region_report(hist, post, mix)
    if rep == 0 and cfg.trace_coords:
        full = np.concatenate([hist_burn, hist]) if hist_burn is not None else hist
        extras["traces"] = {c: full[:, :, c - 1].copy() for c in cfg.trace_coords}
    return summary, extras


def _loh_region_report(hist: np.ndarray, post: np.ndarray, mix: MixtureState):
    """Mode-traversal flags and region-specific parameter means (original
    scales), regions ordered so region 1 has the lower pi1 mean.  A region
    that captured no samples reports NaNs."""
    labels = region_assign_batch(post, mix)
    orig = tg.loh_to_original(post)
    means = []
    for k in range(1, mix.K + 1):
        sel = orig[labels == k]
        means.append(sel.mean(axis=0) if sel.size else np.full(4, np.nan))
    order = sorted(range(mix.K), key=lambda i: (np.isnan(means[i][1]), means[i][1]))
    region_means = {f"region{r + 1}": means[k] for r, k in enumerate(order)}
    per_chain_flips = []
    for m in range(hist.shape[1]):
        lab_m = region_assign_batch(hist[:, m, :], mix)
        per_chain_flips.append(bool(np.any(lab_m != lab_m[0])))
    return {
        "region_means": region_means,
        "whole_means": orig.mean(axis=0),
        "region_gamma": {name: float(v[3]) for name, v in region_means.items()},
        "chain_flips": per_chain_flips,
    }


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

def run_experiment(cfg: ScenarioConfig):
    """Run all replicates of one (scenario, algorithm) pair.

    Returns ``(summaries, extras, aggregate)`` and, unless ``write_files`` is
    off, writes the output files described in the module docstring.
    """
    validate(cfg)
    target = make_target(cfg)

    prelim = None
    if cfg.scenario == "banana":
        pss = np.random.SeedSequence((cfg.seed, _CH_PRELIM))
        skid, ckid = pss.spawn(2)
        prng = np.random.Generator(np.random.PCG64(skid))
        starts = prng.uniform(-2.0, 2.0, size=(cfg.chains, target.dim))
        prelim = preliminary_stage(target, cfg.prelim_iterations,
                                   spawn_rngs(ckid, cfg.chains),
                                   K=cfg.K, start=starts)

    oracle_pack = None
    if cfg.compute_dn and cfg.dn_oracle > 0 and target.iid_sampler is not None:
        orng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((cfg.seed, _CH_ORACLE))))
        oracle_pts = target.iid_sampler(orng, size=cfg.dn_oracle)
        if target.cdf is not None:
            f_vals = np.asarray(target.cdf(oracle_pts), dtype=float)
        else:
            # no closed-form CDF: estimate F itself from one large seeded
            # reference sample (one Monte-Carlo level below the D_n average)
            rrng = np.random.Generator(
                np.random.PCG64(np.random.SeedSequence((cfg.seed, _CH_REFERENCE))))
            reference = target.iid_sampler(rrng, size=cfg.reference_draws)
            f_vals = ecdf_eval_many(reference, oracle_pts, chunk=64)
            del reference
        oracle_pack = (oracle_pts, f_vals)

    reps = range(cfg.replications)
    if cfg.workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            results = list(ex.map(_run_replicate, [cfg] * cfg.replications, reps,
                                  [prelim] * cfg.replications,
                                  [oracle_pack] * cfg.replications))
    else:
        results = [_run_replicate(cfg, r, prelim, oracle_pack) for r in reps]

    summaries = [r[0] for r in results]
    extras = [r[1] for r in results]
    aggregate = _aggregate(cfg, summaries, extras)
    if cfg.write_files:
        _write_outputs(cfg, target, summaries, extras, aggregate)
    return summaries, extras, aggregate


def _aggregate(cfg: ScenarioConfig, summaries, extras):
    mse = np.mean([s.mse for s in summaries], axis=0)
    bias = np.mean([s.bias for s in summaries], axis=0)
    agg = {
        "scenario": cfg.label or cfg.scenario,
        "algorithm": cfg.algorithm,
        "replications": len(summaries),
        "ar_mean": float(np.mean([s.acceptance_rate for s in summaries])),
        "mse": mse,
        "mse_sum": float(np.sum(mse)),
        "bias": bias,
        "dn_mean": float(np.mean([s.dn_hat for s in summaries])),
    }
    checks = {}
    for e in extras:
        for nval, v in e.get("dn_checkpoints", {}).items():
            checks.setdefault(nval, []).append(v)
    agg["dn_checkpoints"] = {n: float(np.mean(v)) for n, v in checks.items()}
    return agg


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float) and np.isnan(v):
        return "nan"
    return repr(float(v))


def _write_outputs(cfg, target, summaries, extras, aggregate):
    os.makedirs(cfg.out_dir, exist_ok=True)
    d = dimension_of(cfg)
    h = config_hash(cfg)

    cols = (["scenario", "algorithm", "replicate", "seed", "config_hash", "n", "ar"]
            + [f"mean_{j}" for j in range(1, d + 1)]
            + [f"mse_{j}" for j in range(1, d + 1)]
            + [f"bias_{j}" for j in range(1, d + 1)]
            + ["dn_hat"])
    with open(os.path.join(cfg.out_dir, "summary.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for rep, s in enumerate(summaries):
            row = [cfg.label or cfg.scenario, cfg.algorithm, str(rep),
                   str(s.seed), h, str(s.n), _fmt(s.acceptance_rate)]
            row += [_fmt(v) for v in s.coord_means]
            row += [_fmt(v) for v in s.mse]
            row += [_fmt(v) for v in s.bias]
            row += [_fmt(s.dn_hat)]
            fh.write(",".join(row) + "\n")

    agg_cols = (["scenario", "algorithm", "replications", "ar_mean", "mse_sum"]
                + [f"mse_{j}" for j in range(1, d + 1)]
                + [f"bias_{j}" for j in range(1, d + 1)]
                + ["dn_mean"])
    with open(os.path.join(cfg.out_dir, "aggregate.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(agg_cols) + "\n")
        row = [aggregate["scenario"], cfg.algorithm, str(aggregate["replications"]),
               _fmt(aggregate["ar_mean"]), _fmt(aggregate["mse_sum"])]
        row += [_fmt(v) for v in aggregate["mse"]]
        row += [_fmt(v) for v in aggregate["bias"]]
        row += [_fmt(aggregate["dn_mean"])]
        fh.write(",".join(row) + "\n")

    with open(os.path.join(cfg.out_dir, "config.txt"), "w",
              encoding="utf-8", newline="\n") as fh:
        for k, v in sorted(dataclasses.asdict(cfg).items()):
            fh.write(f"{k}={v}\n")
        fh.write(f"config_hash={h}\n")

    if extras and "mixture" in extras[0]:
        mix = extras[0]["mixture"]
        _write_mixture(os.path.join(cfg.out_dir, "mixture_final.txt"), mix)
        _write_rasters(cfg, mix)

    if extras and "loh" in extras[0]:
        _write_loh_regions(os.path.join(cfg.out_dir, "loh_regions.txt"),
                           extras[0]["loh"])

    if extras and "traces" in extras[0]:
        for c, arr in extras[0]["traces"].items():
            path = os.path.join(cfg.out_dir, f"trace_{c}.csv")
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                m = arr.shape[1]
                fh.write("sweep," + ",".join(f"chain_{i}" for i in range(1, m + 1)) + "\n")
                for t in range(arr.shape[0]):
                    fh.write(str(t + 1) + "," + ",".join(_fmt(v) for v in arr[t]) + "\n")


def _write_mixture(path, mix) -> None:
    w, mu, covs = mix["weights"], mix["means"], mix["covs"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"K {len(w)} dim {mu.shape[1]}\n")
        fh.write("weights " + " ".join(_fmt(v) for v in w) + "\n")
        for k in range(len(w)):
            fh.write(f"mean_{k + 1} " + " ".join(_fmt(v) for v in mu[k]) + "\n")
            fh.write(f"cov_{k + 1} " + " ".join(_fmt(v) for v in covs[k].ravel()) + "\n")


def _write_rasters(cfg, mix) -> None:
    state = MixtureState(mix["weights"], mix["means"],
                         [_spd_repair(c) for c in mix["covs"]])
    mu_w = state.whole_mean
    sd = np.sqrt(np.diagonal(state.whole_cov.entries))
    if cfg.scenario == "loh":
        slices = {
            "raster_region1.txt": state.means[0],
            "raster_region2.txt": state.means[1],
            "raster_whole.txt": mu_w,
        }
        free = (1, 2)
        for fname, anchor in slices.items():
            fixed = {j: float(anchor[j]) for j in range(4) if j not in free}
            bounds = (mu_w[free[0]] - 3 * sd[free[0]], mu_w[free[0]] + 3 * sd[free[0]],
                      mu_w[free[1]] - 3 * sd[free[1]], mu_w[free[1]] + 3 * sd[free[1]])
            grid = region_slice_raster(state, fixed, bounds, cfg.raster_res)
            save_raster(os.path.join(cfg.out_dir, fname), grid, bounds)
        return
    fixed = {j: float(mu_w[j]) for j in range(state.dim) if j >= 2}
    bounds = (mu_w[0] - 3 * sd[0], mu_w[0] + 3 * sd[0],
              mu_w[1] - 3 * sd[1], mu_w[1] + 3 * sd[1])
    grid = region_slice_raster(state, fixed, bounds, cfg.raster_res)
    save_raster(os.path.join(cfg.out_dir, "raster_x1x2.txt"), grid, bounds)


def _write_loh_regions(path, report) -> None:
    names = ("eta", "pi1", "pi2", "gamma")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# region 1 = lower pi1 mean; values on original scales\n")
        fh.write("param " + " ".join(report["region_means"]) + " whole\n")
        for j, name in enumerate(names):
            vals = [report["region_means"][r][j] for r in report["region_means"]]
            vals.append(report["whole_means"][j])
            fh.write(name + " " + " ".join(_fmt(v) for v in vals) + "\n")
