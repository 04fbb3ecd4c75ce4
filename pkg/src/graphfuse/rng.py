"""Seedable random streams and the scalar samplers used by the Gibbs steps.

Streams are Philox (counter-based) generators keyed by ``(seed, stream_id)``,
so chains and replications get independent, reproducible streams regardless
of scheduling.
"""
from __future__ import annotations

import logging

import numpy as np

from .errors import ParameterError

logger = logging.getLogger(__name__)


def make_stream(seed: int | None = None, stream_id: int = 0) -> np.random.Generator:
    """Return an independent generator for ``(seed, stream_id)``.

    With ``seed=None`` a seed is drawn from OS entropy and logged for replay.
    """
    if seed is None:
        seed = int(np.random.SeedSequence().entropy % (1 << 64))
        logger.info("no seed given; using seed %d", seed)
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


def _check_positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")
    return arr


def sample_std_normal(rng: np.random.Generator, size=None):
    return rng.standard_normal(size)


def sample_gamma(shape, rate, rng: np.random.Generator, size=None):
    """Gamma variate with density proportional to x^(shape-1) exp(-rate x)."""
    shape = _check_positive("shape", shape)
    rate = _check_positive("rate", rate)
    # numpy's Marsaglia-Tsang sampler boosts shape < 1, so it is exact for all shape > 0
    return rng.standard_gamma(shape, size) / rate


def sample_inverse_gamma(shape, scale, rng: np.random.Generator, size=None):
    """Reciprocal of a Gamma(shape, rate=scale) variate."""
    shape = _check_positive("shape", shape)
    scale = _check_positive("scale", scale)
    return scale / rng.standard_gamma(shape, size)


def sample_inverse_gaussian(mu, lam, rng: np.random.Generator, size=None):
    """Inverse-Gaussian(mu, lam) variates: mean mu, variance mu^3 / lam.

    Transformation with multiple roots: one chi-square(1) variate gives the
    smaller root, a uniform picks between it and ``mu^2 / root``.
    """
    mu = _check_positive("mu", mu)
    lam = _check_positive("lam", lam)
    if size is None:
        size = np.broadcast(mu, lam).shape
    nu = rng.standard_normal(size)
    u = rng.random(size)
    a = mu * nu * nu / (2.0 * lam)
    # mu + mu*a - mu*sqrt(a^2 + 2a), rewritten to avoid cancellation for large a
    x = mu / (1.0 + a + np.sqrt(a * (a + 2.0)))
    return np.where(u * (mu + x) <= mu, x, mu * mu / x)
