"""Monte Carlo estimates, the two-sample Kolmogorov-Smirnov test and
reference samplers for the hitting-time laws used as oracles.

The reference samplers draw from :func:`numpy.random.default_rng` and share
no code with the path engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, kolmogorov, log_ndtr, ndtr

from .errors import SampleError

KS_MIN_SIZE = 10


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with standard error ``sd / sqrt(n)``."""

    mean: float
    stderr: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise SampleError("an estimate needs at least two samples")
        if not self.stderr >= 0:
            raise SampleError("stderr must be nonnegative")

    @classmethod
    def from_samples(cls, values) -> "MCEstimate":
        v = np.asarray(values, dtype=float).ravel()
        if v.size < 2:
            raise SampleError("an estimate needs at least two samples")
        return cls(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), int(v.size))

    def combined_stderr(self, other: "MCEstimate") -> float:
        """Standard error of the difference of two independent estimates."""
        return math.hypot(self.stderr, other.stderr)

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "n": self.n}


@dataclass(frozen=True)
class KSResult:
    """Two-sample Kolmogorov-Smirnov statistic ``D`` and asymptotic p-value."""

    statistic: float
    p_value: float
    n1: int
    n2: int

    @property
    def effective_size(self) -> float:
        return self.n1 * self.n2 / (self.n1 + self.n2)

    def to_dict(self) -> dict:
        return {"D": self.statistic, "p_value": self.p_value, "n1": self.n1, "n2": self.n2}


def ks_distance(a, b) -> float:
    """Exact sup distance between the empirical CDFs of ``a`` and ``b``."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a, b) -> KSResult:
    """Two-sample KS test with the asymptotic Kolmogorov p-value.

    The p-value is ``Q(sqrt(n1 n2 / (n1 + n2)) D)`` with ``Q`` the Kolmogorov
    survival function.

    Raises
    ------
    SampleError
        If either sample has fewer than 10 points or contains NaN.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size < KS_MIN_SIZE or b.size < KS_MIN_SIZE:
        raise SampleError(f"KS needs at least {KS_MIN_SIZE} points per sample, "
                          f"got {a.size} and {b.size}")
    if np.isnan(a).any() or np.isnan(b).any():
        raise SampleError("samples contain NaN")
    d = ks_distance(a, b)
    ne = a.size * b.size / (a.size + b.size)
    p = float(np.clip(kolmogorov(math.sqrt(ne) * d), 0.0, 1.0))
    return KSResult(d, p, int(a.size), int(b.size))


# -- reference samplers ------------------------------------------------------

def levy_hitting_time(n: int, rng: np.random.Generator, x: float = 1.0) -> np.ndarray:
    """First hitting time of 0 by Brownian motion from ``x``, drawn as ``x^2 / Z^2``."""
    z = rng.standard_normal(n)
    return x * x / (z * z)


def levy_cdf(t, x: float = 1.0):
    """``P(H_0 <= t) = erfc(x / sqrt(2 t))`` for Brownian motion from ``x``."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(t > 0, erfc(x / np.sqrt(2 * np.where(t > 0, t, 1.0))), 0.0)


def inverse_gaussian(n: int, mean: float, shape: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse Gaussian draws by the transform-with-rejection construction.

    One normal gives the smaller root ``x`` of the quadratic linking the
    chi-square variable to the sample; one uniform selects ``x`` with
    probability ``mean / (mean + x)`` and ``mean^2 / x`` otherwise.
    """
    if mean <= 0 or shape <= 0:
        raise SampleError("inverse Gaussian needs positive mean and shape")
    nu = rng.standard_normal(n)
    y = nu * nu
    my = mean * y
    x = mean + mean * my / (2 * shape) - mean / (2 * shape) * np.sqrt(4 * shape * my + my * my)
    u = rng.random(n)
    return np.where(u <= mean / (mean + x), x, mean * mean / x)


def inverse_gaussian_cdf(t, mean: float, shape: float):
    """Closed-form CDF of the inverse Gaussian law."""
    t = np.asarray(t, dtype=float)
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    r = np.sqrt(shape / ts)
    c = ndtr(r * (ts / mean - 1)) + np.exp(2 * shape / mean + log_ndtr(-r * (ts / mean + 1)))
    return np.where(pos, np.clip(c, 0.0, 1.0), 0.0)
