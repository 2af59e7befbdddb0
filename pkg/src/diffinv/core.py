"""Regular linear diffusions: scale function, speed density, boundary types.

A diffusion is described by its coefficients on an open interval ``E = (l, r)``::

    dX = sigma(X) dW + b(X) dt,   t < zeta.

The scale function is pinned at a user anchor ``c`` so that ``s(c) = 0`` and
``s'(c) = 1``; closed forms may be supplied instead of quadrature, and may be
kept un-normalized when the caller wants a specific reference scale.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from ._panels import PanelScale
from .errors import (
    BoundaryError,
    CoefficientError,
    DomainError,
    QuadratureFailure,
    RangeError,
)

Func = Callable[[np.ndarray], np.ndarray]

QUAD_EPSREL = 1e-10
QUAD_EPSABS = 1e-12
TOL_ROOT = 1e-10
DIVERGENCE_CAP = 1e12

INF = math.inf


def _parse_bound(token) -> float:
    if isinstance(token, str):
        t = token.strip().lower()
        if t in ("inf", "+inf", "infinity", "+infinity"):
            return INF
        if t in ("-inf", "-infinity"):
            return -INF
        return float(t)
    return float(token)


@dataclass(frozen=True)
class Interval:
    """Open interval ``(lower, upper)``; either end may be infinite."""

    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi) or not lo < hi:
            raise DomainError(f"invalid interval ({self.lower}, {self.upper})")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def parse(cls, bounds: Sequence) -> "Interval":
        """Build from ``[l, r]`` where ends may be the strings ``"-inf"``/``"inf"``."""
        if len(bounds) != 2:
            raise DomainError("domain must have exactly two bounds")
        return cls(_parse_bound(bounds[0]), _parse_bound(bounds[1]))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (x > self.lower) & (x < self.upper)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lower) and math.isfinite(self.upper)

    def to_tokens(self) -> list:
        def tok(v):
            if math.isinf(v):
                return "inf" if v > 0 else "-inf"
            return v

        return [tok(self.lower), tok(self.upper)]

    def __str__(self):
        return f"({self.lower:g}, {self.upper:g})"


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients of ``dX = sigma(X) dW + drift(X) dt`` on ``domain``.

    ``sigma`` and ``drift`` must accept and return numpy arrays.  When both
    are constant the Euler step used by the path engine is the exact Gaussian
    transition.  ``absorbing`` optionally fixes which finite endpoints kill the
    process; by default a finite endpoint kills iff its scale limit is finite.
    """

    domain: Interval
    sigma: Func
    drift: Func
    name: str = "custom"
    absorbing: Optional[tuple] = None
    params: dict = field(default_factory=dict)

    def sigma2(self, x):
        s = np.asarray(self.sigma(x), dtype=float)
        return s * s

    def generator(self, x, f_prime, f_second):
        """``(sigma^2/2) f'' + b f'`` from supplied derivative values."""
        return 0.5 * self.sigma2(x) * f_second + self.drift(x) * f_prime


class BoundaryType(enum.Enum):
    TYPE1 = 1  # s(l), s(r) finite
    TYPE2 = 2  # only s(l) finite
    TYPE3 = 3  # only s(r) finite
    TYPE4 = 4  # recurrent

    @classmethod
    def from_limits(cls, s_at_l: float, s_at_r: float) -> "BoundaryType":
        fl, fr = math.isfinite(s_at_l), math.isfinite(s_at_r)
        if fl and fr:
            return cls.TYPE1
        if fl:
            return cls.TYPE2
        if fr:
            return cls.TYPE3
        return cls.TYPE4

    @property
    def label(self) -> str:
        return f"Type{self.value}"


@dataclass(frozen=True)
class ClosedFormScale:
    """A caller-supplied scale function and optional helpers.

    ``gap_lower(x) = s(x) - s(l)`` and ``gap_upper(x) = s(r) - s(x)`` (with
    their inverses) let inversions stay accurate where ``s`` saturates near a
    finite limit; they default to plain subtraction.
    """

    value: Func
    derivative: Func
    second_derivative: Optional[Func] = None
    inverse: Optional[Func] = None
    lower_limit: Optional[float] = None
    upper_limit: Optional[float] = None
    gap_lower: Optional[Func] = None
    gap_upper: Optional[Func] = None
    from_gap_lower: Optional[Func] = None
    from_gap_upper: Optional[Func] = None


def _quad(f, a: float, b: float) -> float:
    if a == b:
        return 0.0
    res = integrate.quad(f, a, b, epsrel=QUAD_EPSREL, epsabs=QUAD_EPSABS,
                         limit=200, full_output=1)
    val, err = res[0], res[1]
    if not math.isfinite(val):
        raise QuadratureFailure(f"non-finite integral on [{a}, {b}]")
    if len(res) > 3 and err > 1e-6 * max(1.0, abs(val)):
        raise QuadratureFailure(f"quadrature on [{a}, {b}] did not converge: {res[3]}")
    return val


def _elementwise(fn):
    def wrapped(x):
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            return fn(float(arr))
        out = np.empty(arr.shape)
        for idx, v in np.ndenumerate(arr):
            out[idx] = fn(float(v))
        return out

    return wrapped


def _cut_points(c: float, end: float, max_k: int = 200):
    """Doubling sequence of cut points from ``c`` toward ``end``."""
    pts = [c]
    if math.isinf(end):
        w = max(1.0, abs(c))
        sign = 1.0 if end > 0 else -1.0
        for k in range(1, max_k + 1):
            pts.append(c + sign * w * (2.0 ** k - 1.0))
    else:
        for k in range(1, max_k + 1):
            p = end + (c - end) * 2.0 ** (-k)
            if p == end or p == pts[-1]:
                break
            pts.append(p)
    return pts


def _detect_limit(increment, c: float, end: float, cap: float = DIVERGENCE_CAP) -> float:
    """Limit of ``s(x) - s(c)`` as ``x -> end`` from increments over doubling cuts.

    Declared infinite once the partial sum exceeds ``cap`` or the increments
    stop shrinking; otherwise the geometric tail is extrapolated.
    """
    pts = _cut_points(c, end)
    total = 0.0
    incs = []
    for k in range(1, len(pts)):
        inc = increment(pts[k - 1], pts[k])
        total += inc
        if not math.isfinite(total) or abs(total) > cap:
            return math.copysign(INF, total if total != 0 else inc)
        incs.append(abs(inc))
        if k >= 3 and abs(inc) <= 1e-15 * max(1.0, abs(total)):
            return total
        if k >= 12:
            last = incs[-5:]
            if all(b >= (1 - 1e-3) * a for a, b in zip(last, last[1:]) if a > 0):
                return math.copysign(INF, total)
    if len(incs) >= 2 and incs[-2] > 0:
        r = incs[-1] / incs[-2]
        if r < 1:
            sign = 1.0 if end > c else -1.0
            return total + sign * incs[-1] * r / (1 - r)
    return math.copysign(INF, total)


@dataclass(frozen=True)
class ScaleObject:
    """Scale function of a diffusion with its boundary limits and type."""

    domain: Interval
    anchor: float
    s_at_l: float
    s_at_r: float
    boundary_type: BoundaryType
    _value: Func = field(repr=False)
    _derivative: Func = field(repr=False)
    _second: Func = field(repr=False)
    _inverse: Optional[Func] = field(default=None, repr=False)
    _gap_lower: Optional[Func] = field(default=None, repr=False)
    _gap_upper: Optional[Func] = field(default=None, repr=False)
    _from_gap_lower: Optional[Func] = field(default=None, repr=False)
    _from_gap_upper: Optional[Func] = field(default=None, repr=False)
    source: str = "quadrature"

    def s(self, x):
        return self._value(x)

    def s_prime(self, x):
        return self._derivative(x)

    def s_double_prime(self, x):
        return self._second(x)

    def inverse(self, y):
        return scale_inverse(self, y)

    def gap_lower(self, x):
        """``s(x) - s(l)``."""
        if not math.isfinite(self.s_at_l):
            raise BoundaryError("s(l) is infinite")
        if self._gap_lower is not None:
            return self._gap_lower(x)
        return self.s(x) - self.s_at_l

    def gap_upper(self, x):
        """``s(r) - s(x)``."""
        if not math.isfinite(self.s_at_r):
            raise BoundaryError("s(r) is infinite")
        if self._gap_upper is not None:
            return self._gap_upper(x)
        return self.s_at_r - self.s(x)

    def from_gap_lower(self, g):
        if not math.isfinite(self.s_at_l):
            raise BoundaryError("s(l) is infinite")
        if self._from_gap_lower is not None:
            g = np.asarray(g, dtype=float)
            if np.any(g <= 0) or np.any(g >= self.s_at_r - self.s_at_l):
                raise RangeError("gap outside the range of s")
            return self._from_gap_lower(g)
        return scale_inverse(self, self.s_at_l + np.asarray(g, dtype=float))

    def from_gap_upper(self, g):
        if not math.isfinite(self.s_at_r):
            raise BoundaryError("s(r) is infinite")
        if self._from_gap_upper is not None:
            g = np.asarray(g, dtype=float)
            if np.any(g <= 0) or np.any(g >= self.s_at_r - self.s_at_l):
                raise RangeError("gap outside the range of s")
            return self._from_gap_upper(g)
        return scale_inverse(self, self.s_at_r - np.asarray(g, dtype=float))

    def level(self, z: float) -> float:
        """``s`` at an interior point or at an endpoint with a finite limit."""
        if z == self.domain.lower:
            if not math.isfinite(self.s_at_l):
                raise BoundaryError(f"s(l) is infinite at l={z}")
            return self.s_at_l
        if z == self.domain.upper:
            if not math.isfinite(self.s_at_r):
                raise BoundaryError(f"s(r) is infinite at r={z}")
            return self.s_at_r
        if not self.domain.contains(z):
            raise DomainError(f"{z} is outside {self.domain}")
        return float(self.s(z))


@dataclass(frozen=True)
class SpeedDensity:
    """Density ``m'(x) = 2 / (sigma^2(x) s'(x))`` of the speed measure."""

    m_prime: Func

    def __call__(self, x):
        return self.m_prime(x)


def _check_sigma(spec: DiffusionSpec, x: float) -> float:
    sig = float(spec.sigma(x))
    if sig == 0.0 or not math.isfinite(sig):
        raise CoefficientError(f"sigma({x}) = {sig}")
    return sig


def build_scale(spec: DiffusionSpec, anchor: float,
                closed_form: Optional[ClosedFormScale] = None,
                normalize: bool = True,
                cap: float = DIVERGENCE_CAP) -> ScaleObject:
    """Scale function ``s(x) = int_c^x exp(-2 int_c^z b/sigma^2) dz``.

    With ``normalize`` (the default) the result satisfies ``s(anchor) = 0``
    and ``s'(anchor) = 1``.  A closed form skips the quadrature; passing
    ``normalize=False`` keeps it exactly as given (a reference scale).

    Raises
    ------
    DomainError
        If ``anchor`` is not in the domain.
    QuadratureFailure
        If the scale integrals fail to converge on a compact subinterval.
    """
    dom = spec.domain
    c = float(anchor)
    if not dom.contains(c):
        raise DomainError(f"anchor {c} is outside {dom}")

    def coef_second(x, sp):
        x = np.asarray(x, dtype=float)
        return -2.0 * spec.drift(x) / spec.sigma2(x) * sp

    if closed_form is None:
        def ratio(z):
            z = np.asarray(z, dtype=float)
            sig = np.asarray(spec.sigma(z), dtype=float)
            if np.any(sig == 0):
                raise CoefficientError("sigma vanishes inside the domain")
            return np.asarray(spec.drift(z), dtype=float) / (sig * sig)

        table = PanelScale(ratio, c, _cut_points(c, dom.upper), _cut_points(c, dom.lower))

        def checked(fn):
            def wrapped(x):
                if np.any(~dom.contains(x)):
                    raise DomainError(f"points outside {dom}")
                return fn(x)
            return wrapped

        deriv = checked(table.s_prime)
        s_l = _detect_limit(table.increment, c, dom.lower, cap)
        s_r = _detect_limit(table.increment, c, dom.upper, cap)
        return ScaleObject(
            domain=dom, anchor=c, s_at_l=s_l, s_at_r=s_r,
            boundary_type=BoundaryType.from_limits(s_l, s_r),
            _value=checked(table.s), _derivative=deriv,
            _second=lambda x: coef_second(x, deriv(x)), _inverse=table.inverse,
            source="quadrature",
        )

    cf = closed_form
    raw_l = cf.lower_limit
    raw_r = cf.upper_limit
    if raw_l is None:
        raw_l = float(cf.value(c)) + _detect_limit(
            lambda a, b: float(cf.value(b)) - float(cf.value(a)), c, dom.lower, cap)
    if raw_r is None:
        raw_r = float(cf.value(c)) + _detect_limit(
            lambda a, b: float(cf.value(b)) - float(cf.value(a)), c, dom.upper, cap)
    raw_second = cf.second_derivative or (lambda x: coef_second(x, cf.derivative(x)))

    if not normalize:
        shift, unit = 0.0, 1.0
    else:
        shift, unit = float(cf.value(c)), float(cf.derivative(c))
        if not unit > 0:
            raise DomainError("closed-form scale must have positive derivative at the anchor")

    def value(x):
        return (cf.value(np.asarray(x, dtype=float)) - shift) / unit

    def deriv(x):
        return cf.derivative(np.asarray(x, dtype=float)) / unit

    def second(x):
        return raw_second(np.asarray(x, dtype=float)) / unit

    inverse = None
    if cf.inverse is not None:
        def inverse(y):
            return cf.inverse(shift + unit * np.asarray(y, dtype=float))

    def scaled(fn):
        if fn is None:
            return None
        return lambda x: fn(np.asarray(x, dtype=float)) / unit

    def unscaled_arg(fn):
        if fn is None:
            return None
        return lambda g: fn(unit * np.asarray(g, dtype=float))

    s_l = (raw_l - shift) / unit
    s_r = (raw_r - shift) / unit
    return ScaleObject(
        domain=dom, anchor=c, s_at_l=s_l, s_at_r=s_r,
        boundary_type=BoundaryType.from_limits(s_l, s_r),
        _value=value, _derivative=deriv, _second=second, _inverse=inverse,
        _gap_lower=scaled(cf.gap_lower), _gap_upper=scaled(cf.gap_upper),
        _from_gap_lower=unscaled_arg(cf.from_gap_lower),
        _from_gap_upper=unscaled_arg(cf.from_gap_upper),
        source="closed_form" if normalize else "reference",
    )


def _bracket(scale: ScaleObject, y: float):
    dom = scale.domain
    c = scale.anchor
    sc = float(scale.s(c))
    if y == sc:
        return c, c
    if y > sc:
        lo, hi = c, None
        step = 1.0
        for _ in range(2000):
            cand = (lo + dom.upper) / 2 if math.isfinite(dom.upper) else lo + step
            if cand == lo or cand >= dom.upper:
                break
            if float(scale.s(cand)) >= y:
                hi = cand
                break
            lo, step = cand, step * 2
        if hi is None:
            raise RangeError(f"could not bracket s^-1({y})")
        return lo, hi
    hi, lo = c, None
    step = 1.0
    for _ in range(2000):
        cand = (hi + dom.lower) / 2 if math.isfinite(dom.lower) else hi - step
        if cand == hi or cand <= dom.lower:
            break
        if float(scale.s(cand)) <= y:
            lo = cand
            break
        hi, step = cand, step * 2
    if lo is None:
        raise RangeError(f"could not bracket s^-1({y})")
    return lo, hi


def _invert_scalar(scale: ScaleObject, y: float) -> float:
    lo, hi = _bracket(scale, y)
    if lo == hi:
        return lo
    return optimize.brentq(lambda x: float(scale.s(x)) - y, lo, hi,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def scale_inverse(scale: ScaleObject, y):
    """Return ``x`` with ``s(x) = y``.

    Uses the closed-form inverse when one was supplied, else bracketed
    root finding expanding from the anchor.

    Raises
    ------
    RangeError
        If ``y`` is not strictly between ``s(l+)`` and ``s(r-)``.
    """
    arr = np.asarray(y, dtype=float)
    if np.any(~((arr > scale.s_at_l) & (arr < scale.s_at_r))):
        raise RangeError(f"value outside ({scale.s_at_l}, {scale.s_at_r})")
    if scale._inverse is not None:
        return scale._inverse(arr)
    if arr.ndim == 0:
        return _invert_scalar(scale, float(arr))
    out = np.empty(arr.shape)
    for idx, v in np.ndenumerate(arr):
        out[idx] = _invert_scalar(scale, float(v))
    return out


def speed_density(spec: DiffusionSpec, scale: ScaleObject) -> SpeedDensity:
    def m_prime(x):
        x = np.asarray(x, dtype=float)
        return 2.0 / (spec.sigma2(x) * scale.s_prime(x))

    return SpeedDensity(m_prime)


def hitting_probability(scale: ScaleObject, alpha: float, x: float, beta: float) -> float:
    """``P_x(H_alpha < H_beta) = (s(x) - s(beta)) / (s(alpha) - s(beta))``.

    ``x`` must lie strictly between ``alpha`` and ``beta`` (either order).
    Endpoints of the domain are accepted when their scale limit is finite.
    """
    if not (min(alpha, beta) < x < max(alpha, beta)):
        raise DomainError(f"x={x} is not strictly between {alpha} and {beta}")
    sa, sb = scale.level(alpha), scale.level(beta)
    sx = scale.level(x)
    return (sx - sb) / (sa - sb)


def _interval_levels(scale: ScaleObject, J: Interval):
    if J.lower < scale.domain.lower or J.upper > scale.domain.upper:
        raise DomainError(f"{J} is not inside {scale.domain}")
    return scale.level(J.lower), scale.level(J.upper)


def green_kernel(scale: ScaleObject, J: Interval, x, y):
    """Green kernel of the process killed on exiting ``J``, relative to ``m(dy)``.

    ``G_J(x, y) = (s(x^y) - s(a)) (s(b) - s(xvy)) / (s(b) - s(a))`` with the
    normalization constant fixed to 1.
    """
    sa, sb = _interval_levels(scale, J)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(~J.contains(x)) or np.any(~J.contains(y)):
        raise DomainError(f"points must lie in {J}")
    lo = scale.s(np.minimum(x, y))
    hi = scale.s(np.maximum(x, y))
    return (lo - sa) * (sb - hi) / (sb - sa)


def expected_exit_time(scale: ScaleObject, speed: SpeedDensity, J: Interval, x: float) -> float:
    """``E_x[H_a ^ H_b] = int_J G_J(x, y) m(dy)``."""
    sa, sb = _interval_levels(scale, J)
    if not J.contains(x):
        raise DomainError(f"{x} is not in {J}")
    sx = float(scale.s(x))

    def left(y):
        return (float(scale.s(y)) - sa) * (sb - sx) / (sb - sa) * float(speed(y))

    def right(y):
        return (sx - sa) * (sb - float(scale.s(y))) / (sb - sa) * float(speed(y))

    return _quad(left, J.lower, x) + _quad(right, x, J.upper)
