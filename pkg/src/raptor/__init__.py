"""Regional adaptive random-walk Metropolis with a mixture-learned partition.

The sampler family implemented here:

* ``am``      -- adaptive Metropolis: one global proposal covariance tracking
                 the running covariance of all past states.
* ``rapt``    -- regional adaptation with a fixed half-space boundary; one
                 proposal covariance per region plus a whole-space kernel.
* ``raptor``  -- the partition itself is learned on the fly by an online EM
                 fit of a K-component Gaussian mixture to the chain output,
                 and the regional covariances are read off the fit.

``inca`` pools several parallel chains into one interleaved stream feeding
the shared adaptation state; ``diagnostics`` and ``harness`` reproduce the
benchmark summaries (acceptance rate, MSE, bias, ECDF distance).
"""

from . import diagnostics, harness, inca, mixture, mvn, samplers, targets
from .mvn import CovMatrix, GaussianParams, chol, mvn_logpdf, mvn_sample

__all__ = [
    "CovMatrix",
    "GaussianParams",
    "chol",
    "mvn_logpdf",
    "mvn_sample",
    "mvn",
    "targets",
    "mixture",
    "samplers",
    "inca",
    "diagnostics",
    "harness",
]

__version__ = "0.1.0"
