"""Compiled inner loop of the path engine.

The kernel fuses noise generation (the same counter hash and inverse
normal CDF as :mod:`diffinv.rng`), the Euler update and boundary handling,
so one step costs a single pass over the alive paths.
"""

from __future__ import annotations

import numpy as np
from numba import njit, vectorize

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0 ** -53

LOWER, UPPER, ALIVE = 0, 1, 2


@njit(cache=True, inline="always")
def _uniform(key, step):
    z = key + _GOLDEN * np.uint64(step + 1)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    z = z ^ (z >> np.uint64(31))
    return (np.float64(z >> np.uint64(11)) + 0.5) * _TO_UNIT


# Wichura's AS 241 (PPND16) rational approximations, relative error ~1e-16
_A = (3.387132872796366608, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
      5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
      2.8729085735721942674e4, 5.2264952788528545610e3)
_C = (1.42343711074968357734, 4.63033784615654529590, 5.76949722146069140550,
      3.64784832476320460504, 1.27045825245236838258, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187, 1.67638483018380384940,
      6.89767334985100004550e-1, 1.48103976427480074590e-1,
      1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720, 5.46378491116411436990, 1.78482653991729133580,
      2.96560571828504891230e-1, 2.65321895265761230930e-2,
      1.24266094738807843860e-3, 2.71155556874348757815e-5,
      2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
      1.48753612908506148525e-2, 7.86869131145613259100e-4,
      1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


@njit(cache=True, inline="always")
def _poly(c, x):
    return ((((((c[7] * x + c[6]) * x + c[5]) * x + c[4]) * x + c[3]) * x
             + c[2]) * x + c[1]) * x + c[0]


@njit(cache=True)
def inverse_normal_cdf(p):
    """Standard normal quantile for ``p`` in ``(0, 1)``."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r -= 1.6
        v = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        v = _poly(_E, r) / _poly(_F, r)
    return -v if q < 0.0 else v


@vectorize(["float64(float64)"], cache=True)
def ndtri(p):
    """Elementwise :func:`inverse_normal_cdf`."""
    return inverse_normal_cdf(p)


@njit(cache=True)
def em_step(xa, b, sg, keys, bkeys, step, dt, lo, hi,
            absorb_lo, absorb_hi, reflect_lo, reflect_hi, bridge,
            x_end, frac_out, code_out):
    """One Euler step for every alive path.

    Writes the end state, the fraction of the step survived (1 when the
    path is still alive) and the exit code.  Returns the index of the first
    path with a non-finite state, or -1.
    """
    sqdt = np.sqrt(dt)
    n = xa.shape[0]
    for i in range(n):
        x0 = xa[i]
        z = inverse_normal_cdf(_uniform(keys[i], step))
        xn = x0 + b[i] * dt + sg[i] * sqdt * z
        if not np.isfinite(xn):
            return i
        frac = 2.0
        code = ALIVE
        if absorb_lo and xn <= lo:
            frac = (x0 - lo) / (x0 - xn)
            code = LOWER
        if absorb_hi and xn >= hi:
            f = (hi - x0) / (xn - x0)
            if f < frac:
                frac = f
                code = UPPER
        if bridge and code == ALIVE:
            var = sg[i] * sg[i] * dt
            p_lo = 0.0
            p_hi = 0.0
            if absorb_lo:
                p_lo = np.exp(-2.0 * (x0 - lo) * (xn - lo) / var)
            if absorb_hi:
                p_hi = np.exp(-2.0 * (hi - x0) * (hi - xn) / var)
            p = 1.0 - (1.0 - p_lo) * (1.0 - p_hi)
            if p > 0.0 and _uniform(bkeys[i], step) < p:
                frac = 0.5
                code = UPPER if p_hi > p_lo else LOWER
        if code == ALIVE:
            if reflect_lo and xn <= lo:
                xn = 2.0 * lo - xn
            if reflect_hi and xn >= hi:
                xn = 2.0 * hi - xn
            x_end[i] = xn
            frac_out[i] = 1.0
        else:
            x_end[i] = lo if code == LOWER else hi
            frac_out[i] = max(frac, 1e-12)
        code_out[i] = code
    return -1
