"""s-inversions of the state space and their harmonic functions.

An s-inversion with fixed point ``x0`` is a decreasing involution ``I`` of
``E`` such that ``s o I o s^-1`` is a real Moebius involution.  Which
Moebius map arises depends only on the boundary type of ``s`` and on where
``x0`` sits relative to the arithmetic/geometric means of ``s(l), s(r)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import BoundaryType, DomainError, ScaleObject, scale_inverse
from .errors import BoundaryTypeError, DegenerateSystem, NoSolution

REFLECTION_TOL = 1e-12


class MobiusKind(enum.Enum):
    REFLECTION = "Reflection"
    PURE_INVERSION = "PureInversion"
    GENERAL = "General"


@dataclass(frozen=True)
class MobiusInvolution:
    """Moebius involution in s-coordinates.

    * ``Reflection``: ``y -> center - y`` with ``center = 2 s(x0)``.
    * ``PureInversion``: ``y -> center / y`` with ``center = s(x0)^2``.
    * ``General``: ``y -> (y + alpha_m) / (beta_m y - 1)``.
    """

    kind: MobiusKind
    alpha_m: float = math.nan
    beta_m: float = math.nan
    center: float = math.nan

    def __post_init__(self):
        if self.kind is MobiusKind.GENERAL:
            det = self.alpha_m * self.beta_m + 1.0
            if not (math.isfinite(det) and det > 0):
                raise DegenerateSystem(
                    f"alpha_m*beta_m + 1 = {det} is not positive")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind is MobiusKind.REFLECTION:
            return self.center - y
        if self.kind is MobiusKind.PURE_INVERSION:
            return self.center / y
        return (y + self.alpha_m) / (self.beta_m * y - 1.0)

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind is MobiusKind.REFLECTION:
            return -np.ones_like(y)
        if self.kind is MobiusKind.PURE_INVERSION:
            return -self.center / (y * y)
        d = self.beta_m * y - 1.0
        return -(1.0 + self.alpha_m * self.beta_m) / (d * d)

    def image_gaps(self, y, gap_lower, gap_upper, s_l: float, s_r: float):
        """``(w - s_l, s_r - w)`` for ``w`` the image of ``y``, without cancellation.

        Valid when the map swaps the finite levels ``s_l`` and ``s_r``; each
        image gap is a multiple of an input gap.
        """
        y = np.asarray(y, dtype=float)
        if self.kind is MobiusKind.REFLECTION:
            return np.asarray(gap_upper, dtype=float), np.asarray(gap_lower, dtype=float)
        if self.kind is MobiusKind.PURE_INVERSION:
            return s_l * gap_upper / y, s_r * gap_lower / y
        det = 1.0 + self.alpha_m * self.beta_m
        d = self.beta_m * y - 1.0
        return (gap_upper * det / (d * (self.beta_m * s_r - 1.0)),
                gap_lower * det / (d * (self.beta_m * s_l - 1.0)))

    @property
    def pole(self) -> float:
        if self.kind is MobiusKind.GENERAL:
            return 1.0 / self.beta_m if self.beta_m != 0 else math.inf
        if self.kind is MobiusKind.PURE_INVERSION:
            return 0.0
        return math.inf


class HarmonicMode(enum.Enum):
    CONSTANT = "constant"
    GENERAL = "general"  # (b s - 1) / (b s0 - 1)
    PURE = "pure"  # s / s0
    LOWER_GAP = "lower_gap"  # (s - s(l)) / (s0 - s(l))
    UPPER_GAP = "upper_gap"  # (s(r) - s) / (s(r) - s0)


@dataclass(frozen=True)
class HarmonicFunction:
    """Positive harmonic function ``h = N(x) / N(x0)`` with ``N`` affine in ``s``."""

    scale: ScaleObject
    mode: HarmonicMode
    norm: float = 1.0
    b: float = math.nan

    def _num(self, x):
        sc = self.scale
        if self.mode is HarmonicMode.CONSTANT:
            return np.ones_like(np.asarray(x, dtype=float))
        if self.mode is HarmonicMode.GENERAL:
            return self.b * sc.s(x) - 1.0
        if self.mode is HarmonicMode.PURE:
            return sc.s(x)
        if self.mode is HarmonicMode.LOWER_GAP:
            return sc.gap_lower(x)
        return sc.gap_upper(x)

    @property
    def slope(self) -> float:
        """``dh/ds``: h is ``slope * s + const``."""
        if self.mode is HarmonicMode.CONSTANT:
            return 0.0
        if self.mode is HarmonicMode.GENERAL:
            return self.b / self.norm
        if self.mode is HarmonicMode.UPPER_GAP:
            return -1.0 / self.norm
        return 1.0 / self.norm

    @property
    def is_constant(self) -> bool:
        return self.mode is HarmonicMode.CONSTANT

    def value(self, x):
        return self._num(x) / self.norm

    def derivative(self, x):
        return self.slope * self.scale.s_prime(x)

    def second_derivative(self, x):
        return self.slope * self.scale.s_double_prime(x)

    def log_derivative(self, x):
        """``h'/h``, evaluated without cancellation."""
        x = np.asarray(x, dtype=float)
        if self.mode is HarmonicMode.CONSTANT:
            return np.zeros_like(x)
        sp = self.scale.s_prime(x)
        if self.mode is HarmonicMode.GENERAL:
            return self.b * sp / self._num(x)
        if self.mode is HarmonicMode.UPPER_GAP:
            return -sp / self._num(x)
        return sp / self._num(x)

    def inverse(self, v):
        if self.mode is HarmonicMode.CONSTANT:
            raise NoSolution("constant h has no inverse")
        t = np.asarray(v, dtype=float) * self.norm
        sc = self.scale
        if self.mode is HarmonicMode.GENERAL:
            return scale_inverse(sc, (t + 1.0) / self.b)
        if self.mode is HarmonicMode.PURE:
            return scale_inverse(sc, t)
        if self.mode is HarmonicMode.LOWER_GAP:
            return sc.from_gap_lower(t)
        return sc.from_gap_upper(t)

    def _limit(self, lower: bool) -> float:
        sc = self.scale
        sl, sr = sc.s_at_l, sc.s_at_r
        if self.mode is HarmonicMode.CONSTANT:
            return 1.0
        if self.mode is HarmonicMode.GENERAL:
            return (self.b * (sl if lower else sr) - 1.0) / self.norm
        if self.mode is HarmonicMode.PURE:
            return (sl if lower else sr) / self.norm
        if self.mode is HarmonicMode.LOWER_GAP:
            return 0.0 if lower else (sr - sl) / self.norm
        return (sr - sl) / self.norm if lower else 0.0

    @property
    def at_l(self) -> float:
        return self._limit(True)

    @property
    def at_r(self) -> float:
        return self._limit(False)


@dataclass(frozen=True)
class Inversion:
    """The s-inversion of ``E`` with fixed point ``x0`` and its harmonic ``h``."""

    base_scale: ScaleObject
    x0: float
    mobius: MobiusInvolution
    h: HarmonicFunction

    @property
    def boundary_type(self) -> BoundaryType:
        return self.base_scale.boundary_type

    @property
    def h_at_l(self) -> float:
        return self.h.at_l

    @property
    def h_at_r(self) -> float:
        return self.h.at_r

    def harmonic_h(self, x):
        return self.h.value(x)

    def harmonic_h_prime(self, x):
        return self.h.derivative(x)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~self.base_scale.domain.contains(x)):
            raise DomainError(f"points outside {self.base_scale.domain}")
        return x

    def _gap_constant(self) -> float:
        sc = self.base_scale
        g = sc.gap_lower(self.x0) if self.boundary_type is BoundaryType.TYPE2 \
            else sc.gap_upper(self.x0)
        return float(g) ** 2

    def apply(self, x):
        """``I(x)``."""
        return self.apply_with_derivative(x, derivative=False)[0]

    def apply_derivative(self, x):
        """``I'(x) = w'(s(x)) s'(x) / s'(I(x))`` from the Moebius form."""
        return self.apply_with_derivative(x)[1]

    def apply_with_derivative(self, x, derivative: bool = True):
        x = self._check(x)
        sc = self.base_scale
        bt = self.boundary_type
        if bt is BoundaryType.TYPE2 or bt is BoundaryType.TYPE3:
            # distance-to-boundary form keeps precision where s saturates
            k = self._gap_constant()
            if bt is BoundaryType.TYPE2:
                g = sc.gap_lower(x)
                ix = sc.from_gap_lower(k / g)
            else:
                g = sc.gap_upper(x)
                ix = sc.from_gap_upper(k / g)
            if not derivative:
                return ix, None
            return ix, -k / (g * g) * sc.s_prime(x) / sc.s_prime(ix)
        y = sc.s(x)
        if bt is BoundaryType.TYPE1:
            # both image gaps come from input gaps so saturated ends keep precision
            lo, up = self.mobius.image_gaps(y, sc.gap_lower(x), sc.gap_upper(x),
                                            sc.s_at_l, sc.s_at_r)
            lo, up = np.atleast_1d(lo), np.atleast_1d(up)
            near_r = up < lo
            ix = np.empty(lo.shape)
            if near_r.any():
                ix[near_r] = sc.from_gap_upper(up[near_r])
            if (~near_r).any():
                ix[~near_r] = sc.from_gap_lower(lo[~near_r])
            ix = ix.reshape(np.shape(x))
        else:
            ix = scale_inverse(sc, self.mobius(y))
        if not derivative:
            return ix, None
        return ix, self.mobius.derivative(y) * sc.s_prime(x) / sc.s_prime(ix)

    def clock_rate(self, spec, x):
        """Integrand ``I'(x)^2 sigma^2(x) / sigma^2(I(x))`` of the random clock."""
        ix, d = self.apply_with_derivative(x)
        return d * d * spec.sigma2(x) / spec.sigma2(ix)

    def to_dict(self) -> dict:
        def num(v):
            return None if (v is None or math.isnan(v)) else float(v)

        return {
            "type": self.boundary_type.label,
            "x0": float(self.x0),
            "kind": self.mobius.kind.value,
            "alpha_m": num(self.mobius.alpha_m),
            "beta_m": num(self.mobius.beta_m),
            "center": num(self.mobius.center),
            "scale_ref": {
                "source": self.base_scale.source,
                "anchor": float(self.base_scale.anchor),
                "s_at_l": _jsonable(self.base_scale.s_at_l),
                "s_at_r": _jsonable(self.base_scale.s_at_r),
            },
            "h_mode": self.h.mode.value,
        }


def _jsonable(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def _is_reflection(s0, sl, sr) -> bool:
    return abs(2 * s0 - sl - sr) < REFLECTION_TOL * max(1.0, abs(sl), abs(sr))


def build_inversion(scale: ScaleObject, x0: float) -> Inversion:
    """Construct the s-inversion with fixed point ``x0``.

    Type 1 uses the reflection when ``2 s(x0) = s(l) + s(r)``, the pure
    inversion ``s(x0)^2 / s`` when ``s(x0)^2 = s(l) s(r)``, and otherwise
    ``(s + a) / (b s - 1)`` with ``a, b`` solving the two-point system.
    Types 2 and 3 use the one-sided limit formulas; Type 4 the reflection.
    """
    if not scale.domain.contains(x0):
        raise DomainError(f"x0={x0} is outside {scale.domain}")
    x0 = float(x0)
    s0 = float(scale.s(x0))
    sl, sr = scale.s_at_l, scale.s_at_r
    bt = scale.boundary_type

    def reflection():
        return Inversion(scale, x0, MobiusInvolution(MobiusKind.REFLECTION, center=2 * s0),
                         HarmonicFunction(scale, HarmonicMode.CONSTANT))

    if bt is BoundaryType.TYPE4:
        return reflection()

    if bt is BoundaryType.TYPE1:
        if _is_reflection(s0, sl, sr):
            return reflection()
        den = s0 * s0 - sl * sr
        if abs(den) <= REFLECTION_TOL * max(1.0, s0 * s0, abs(sl * sr)):
            mob = MobiusInvolution(MobiusKind.PURE_INVERSION, center=s0 * s0)
            return Inversion(scale, x0, mob, HarmonicFunction(scale, HarmonicMode.PURE, norm=s0))
        a = (2 * sl * sr - s0 * (sl + sr)) / den * s0
        b = (2 * s0 - (sl + sr)) / den
        if not (math.isfinite(a) and math.isfinite(b)):
            raise DegenerateSystem("Moebius constants are not finite")
        mob = MobiusInvolution(MobiusKind.GENERAL, alpha_m=a, beta_m=b)
        h = HarmonicFunction(scale, HarmonicMode.GENERAL, norm=b * s0 - 1.0, b=b)
        return Inversion(scale, x0, mob, h)

    if bt is BoundaryType.TYPE2:
        edge = sl
        h = HarmonicFunction(scale, HarmonicMode.LOWER_GAP, norm=float(scale.gap_lower(x0)))
    else:
        edge = sr
        h = HarmonicFunction(scale, HarmonicMode.UPPER_GAP, norm=float(scale.gap_upper(x0)))
    if abs(edge) <= REFLECTION_TOL * max(1.0, abs(s0)):
        mob = MobiusInvolution(MobiusKind.PURE_INVERSION, center=s0 * s0)
    else:
        mob = MobiusInvolution(MobiusKind.GENERAL,
                               alpha_m=(s0 * s0 - 2 * s0 * edge) / edge, beta_m=1.0 / edge)
    return Inversion(scale, x0, mob, h)


def affine_harmonic(scale: ScaleObject, slope: float = 1.0, offset: float = 0.0) -> HarmonicFunction:
    """``h = slope * s + offset`` as a :class:`HarmonicFunction` (``slope != 0``)."""
    if slope == 0:
        raise NoSolution("h must not be constant")
    # slope*s + offset == (b s - 1)/norm with b = -slope/offset, norm = -1/offset
    if offset == 0:
        return HarmonicFunction(scale, HarmonicMode.PURE, norm=1.0 / slope)
    return HarmonicFunction(scale, HarmonicMode.GENERAL, norm=-1.0 / offset, b=-slope / offset)


def h_geometric_mean(scale: ScaleObject, h: HarmonicFunction | None = None) -> float:
    """The unique ``x0`` with ``h(x0)^2 = h(l) h(r)``; ``h`` defaults to ``s``.

    Raises
    ------
    NoSolution
        If ``h(l) h(r) <= 0`` or either limit is infinite.
    """
    if h is None:
        h = affine_harmonic(scale)
    hl, hr = h.at_l, h.at_r
    prod = hl * hr
    if not (math.isfinite(hl) and math.isfinite(hr)) or not prod > 0:
        raise NoSolution(f"h(l) h(r) = {prod}; geometric mean undefined")
    target = math.copysign(math.sqrt(prod), hl)
    return float(h.inverse(target))


def h_arithmetic_mean(scale: ScaleObject) -> float:
    """The unique ``x1`` with ``2 s(x1) = s(l) + s(r)`` (Type 1 only)."""
    if scale.boundary_type is not BoundaryType.TYPE1:
        raise BoundaryTypeError("arithmetic mean requires finite s(l) and s(r)")
    return float(scale_inverse(scale, 0.5 * (scale.s_at_l + scale.s_at_r)))
