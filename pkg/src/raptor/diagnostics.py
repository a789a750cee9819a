"""Comparison metrics: acceptance rate, MSE/bias of the sample mean, and the
target-weighted squared ECDF distance with its Monte-Carlo approximation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, EmptySample, MissingCDF


@dataclass
class RunSummary:
    """Per-replicate reproduction surface.

    ``mse``/``bias`` hold this replicate's squared deviation and deviation of
    the sample mean from the scenario truth; averaging them across replicates
    gives the reported MSE and bias.
    """

    seed: int
    n: int
    acceptance_rate: float
    coord_means: np.ndarray
    mse: np.ndarray
    bias: np.ndarray
    dn_hat: float


def ecdf_eval(samples: np.ndarray, z: np.ndarray) -> float:
    """Fraction of samples componentwise <= z (inclusive)."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EmptySample("ECDF needs at least one sample")
    z = np.asarray(z, dtype=float)
    if samples.shape[1] != z.shape[0]:
        raise DimensionMismatch("sample and query dimensions differ")
    return float(np.mean(np.all(samples <= z, axis=1)))


def ecdf_eval_many(samples: np.ndarray, Z: np.ndarray, chunk: int = 256) -> np.ndarray:
    """ECDF at many query points, chunked to bound memory."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EmptySample("ECDF needs at least one sample")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if samples.shape[1] != Z.shape[1]:
        raise DimensionMismatch("sample and query dimensions differ")
    n, d = samples.shape
    out = np.empty(Z.shape[0])
    for lo in range(0, Z.shape[0], chunk):
        zc = Z[lo:lo + chunk]
        mask = np.ones((zc.shape[0], n), dtype=bool)
        for j in range(d):
            mask &= samples[:, j][None, :] <= zc[:, j][:, None]
        out[lo:lo + chunk] = mask.mean(axis=1)
    return out


def dn_hat(samples: np.ndarray, oracle_draws: np.ndarray, cdf) -> float:
    """Monte-Carlo estimate of the target-weighted squared ECDF distance.

    Averages |F_n(y_j) - F(y_j)|^2 over i.i.d. target draws y_j, with F_n the
    chain ECDF and F the target CDF evaluator.
    """
    if cdf is None:
        raise MissingCDF("target provides no CDF evaluator")
    oracle_draws = np.atleast_2d(np.asarray(oracle_draws, dtype=float))
    if oracle_draws.size == 0:
        raise EmptySample("need at least one oracle draw")
    fn = ecdf_eval_many(samples, oracle_draws)
    f = np.asarray(cdf(oracle_draws), dtype=float)
    return float(np.mean((fn - f) ** 2))


def dn_bar(replicate_values) -> float:
    """Average over independent replicate values."""
    vals = np.asarray(replicate_values, dtype=float)
    if vals.size == 0:
        raise EmptySample("need at least one replicate value")
    return float(np.mean(vals))


def mse_bias(replicate_means: np.ndarray, truth: np.ndarray):
    """Per-coordinate MSE and bias of replicate sample means around truth."""
    m = np.atleast_2d(np.asarray(replicate_means, dtype=float))
    truth = np.asarray(truth, dtype=float)
    if m.shape[1] != truth.shape[0]:
        raise DimensionMismatch("replicate means and truth dimensions differ")
    dev = m - truth
    return np.mean(dev ** 2, axis=0), np.mean(dev, axis=0)


def empirical_cdf(draws: np.ndarray, chunk: int = 256):
    """A CDF evaluator backed by a (large) i.i.d. reference sample.

    Stand-in for targets without a closed-form CDF: F(z) is estimated by the
    reference ECDF, one Monte-Carlo level below the usual approximation.
    """
    draws = np.asarray(draws, dtype=float)

    def cdf(Z):
        return ecdf_eval_many(draws, Z, chunk=chunk)

    return cdf
