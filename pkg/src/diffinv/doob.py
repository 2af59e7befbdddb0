"""Doob h-transform duals, boundary conditioning and a numeric generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    BoundaryType,
    DiffusionSpec,
    ScaleObject,
    SpeedDensity,
    hitting_probability,
    speed_density,
)
from .errors import BoundaryTypeError, DegenerateSystem, DomainError
from .inversion import HarmonicFunction, HarmonicMode, Inversion

SPLIT_CHECK_TOL = 1e-9


def absorbing_ends(domain, scale: ScaleObject) -> tuple:
    """Finite endpoints whose scale limit is finite, i.e. reachable ones."""
    return (
        math.isfinite(domain.lower) and math.isfinite(scale.s_at_l),
        math.isfinite(domain.upper) and math.isfinite(scale.s_at_r),
    )


def _transformed_scale(h: HarmonicFunction) -> ScaleObject:
    """Scale ``-sgn(h') / h`` of the h-transform (increasing for either sign)."""
    base = h.scale
    sgn = 1.0 if h.slope > 0 else -1.0
    hl, hr = h.at_l, h.at_r

    def lim(v):
        if v == 0:
            return -sgn * math.inf
        if math.isinf(v):
            return 0.0
        return -sgn / v

    s_l, s_r = lim(hl), lim(hr)

    def value(x):
        return -sgn / h.value(x)

    def deriv(x):
        hv = h.value(x)
        return sgn * h.derivative(x) / (hv * hv)

    def second(x):
        hv = h.value(x)
        hp = h.derivative(x)
        return sgn * (h.second_derivative(x) / (hv * hv) - 2.0 * hp * hp / (hv ** 3))

    def inverse(y):
        return h.inverse(-sgn / np.asarray(y, dtype=float))

    gap_lower = from_gap_lower = gap_upper = from_gap_upper = None
    # where the dual limit is 0 the gap is exactly 1/h, which stays accurate
    if s_l == 0.0:
        gap_lower = lambda x: 1.0 / h.value(x)  # noqa: E731
        from_gap_lower = lambda g: h.inverse(1.0 / np.asarray(g, dtype=float))  # noqa: E731
    if s_r == 0.0:
        gap_upper = lambda x: 1.0 / h.value(x)  # noqa: E731
        from_gap_upper = lambda g: h.inverse(1.0 / np.asarray(g, dtype=float))  # noqa: E731

    anchor = base.anchor
    return ScaleObject(
        domain=base.domain, anchor=anchor, s_at_l=s_l, s_at_r=s_r,
        boundary_type=BoundaryType.from_limits(s_l, s_r),
        _value=value, _derivative=deriv, _second=second, _inverse=inverse,
        _gap_lower=gap_lower, _gap_upper=gap_upper,
        _from_gap_lower=from_gap_lower, _from_gap_upper=from_gap_upper,
        source="h_transform",
    )


def h_transform(spec: DiffusionSpec, h: HarmonicFunction, name: str | None = None):
    """Coefficients and scale of the h-transform of ``spec``.

    Returns ``(DiffusionSpec, ScaleObject)``; the drift is
    ``b + sigma^2 h'/h`` and killing follows the transformed scale limits.
    """
    if h.is_constant:
        return spec, h.scale
    scale = _transformed_scale(h)

    def drift(x):
        x = np.asarray(x, dtype=float)
        return spec.drift(x) + spec.sigma2(x) * h.log_derivative(x)

    out = DiffusionSpec(
        domain=spec.domain, sigma=spec.sigma, drift=drift,
        name=name or f"{spec.name}^h",
        absorbing=absorbing_ends(spec.domain, scale),
        params=dict(spec.params),
    )
    return out, scale


@dataclass(frozen=True)
class DualSpec:
    """The dual diffusion ``X*``: Doob h-transform of ``base`` by the inversion's h."""

    base: DiffusionSpec
    inversion: Inversion
    dual_drift: Callable
    dual_scale: ScaleObject
    dual_speed: SpeedDensity
    spec: DiffusionSpec

    @property
    def h(self) -> HarmonicFunction:
        return self.inversion.h

    @property
    def self_dual(self) -> bool:
        return self.h.is_constant

    def as_diffusion(self) -> DiffusionSpec:
        return self.spec

    def to_dict(self) -> dict:
        return {
            "base": {"name": self.base.name, "params": dict(self.base.params),
                     "domain": self.base.domain.to_tokens()},
            "inversion": self.inversion.to_dict(),
            "dual_type": self.dual_scale.boundary_type.label,
            "self_dual": self.self_dual,
        }


def make_dual(spec: DiffusionSpec, inv: Inversion) -> DualSpec:
    """Dual ``X*`` with ``sigma* = sigma`` and ``b* = b + sigma^2 h'/h``.

    When ``h`` is constant (a reflection) the dual is the base process.
    """
    base_scale = inv.base_scale
    h = inv.h
    if h.is_constant:
        dual_spec = DiffusionSpec(
            domain=spec.domain, sigma=spec.sigma, drift=spec.drift,
            name=f"{spec.name}*", absorbing=spec.absorbing or absorbing_ends(spec.domain, base_scale),
            params=dict(spec.params),
        )
        return DualSpec(spec, inv, spec.drift, base_scale,
                        speed_density(spec, base_scale), dual_spec)
    dual_spec, dual_scale = h_transform(spec, h, name=f"{spec.name}*")
    base_speed = speed_density(spec, base_scale)

    def dual_speed(x):
        hv = h.value(x)
        return hv * hv * base_speed(x)

    return DualSpec(spec, inv, dual_spec.drift, dual_scale, SpeedDensity(dual_speed), dual_spec)


def path_weight(inv: Inversion, x_start, x_end):
    """Radon-Nikodym weight ``h(x_end) / h(x_start)`` of the dual law."""
    return inv.harmonic_h(x_end) / inv.harmonic_h(x_start)


@dataclass(frozen=True)
class ConditioningSplit:
    """``h = q* h_r + p* h_l`` with ``h_r`` vanishing at ``l`` and ``h_l`` at ``r``.

    ``p``, ``q`` are the base probabilities ``P_x0(H_l < H_r)`` and
    ``P_x0(H_r < H_l)``; the dual hits ``l`` first with probability
    ``p* = q`` (and ``r`` with ``q* = p``).
    """

    p_star: float
    q_star: float
    h_l: HarmonicFunction
    h_r: HarmonicFunction
    p: float = math.nan
    q: float = math.nan


def conditioning_split(scale: ScaleObject, inv: Inversion) -> ConditioningSplit:
    """Decompose the inversion's ``h`` into boundary-conditioning harmonics.

    Raises
    ------
    BoundaryTypeError
        For Type 4, where no boundary is ever reached.
    DegenerateSystem
        If the weights disagree with the base hitting probabilities.
    """
    bt = scale.boundary_type
    x0 = inv.x0
    if bt is BoundaryType.TYPE4:
        raise BoundaryTypeError("no boundary conditioning for a recurrent diffusion")
    lower = HarmonicFunction(scale, HarmonicMode.LOWER_GAP, norm=float(scale.gap_lower(x0))) \
        if math.isfinite(scale.s_at_l) else None
    upper = HarmonicFunction(scale, HarmonicMode.UPPER_GAP, norm=float(scale.gap_upper(x0))) \
        if math.isfinite(scale.s_at_r) else None
    one = HarmonicFunction(scale, HarmonicMode.CONSTANT)
    if bt is BoundaryType.TYPE2:
        return ConditioningSplit(0.0, 1.0, h_l=one, h_r=lower, p=1.0, q=0.0)
    if bt is BoundaryType.TYPE3:
        return ConditioningSplit(1.0, 0.0, h_l=upper, h_r=one, p=0.0, q=1.0)

    dom = scale.domain
    p = hitting_probability(scale, dom.lower, x0, dom.upper)
    if inv.h.is_constant:
        p_star = q_star = 0.5
    else:
        hl, hr, h0 = inv.h_at_l, inv.h_at_r, 1.0
        q_star = (h0 - hl) / (hr - hl) * hr
        p_star = (hr - h0) / (hr - hl) * hl
    if abs(q_star - p) > SPLIT_CHECK_TOL or abs(p_star - (1.0 - p)) > SPLIT_CHECK_TOL:
        raise DegenerateSystem(
            f"split weights (p*={p_star}, q*={q_star}) disagree with p={p}")
    return ConditioningSplit(p_star, q_star, h_l=upper, h_r=lower, p=p, q=1.0 - p)


def _stencil(f, x, h):
    fp = f(x + h)
    fm = f(x - h)
    f0 = f(x)
    return (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)


def apply_generator(spec: DiffusionSpec, f: Callable, x: float, fd_step: float = 1e-4) -> float:
    """Central-difference estimate of ``(sigma^2/2) f'' + b f'`` at ``x``.

    If the stencil ``x +- fd_step`` leaves ``E``, the estimate is built from
    steps ``fd_step/2`` and ``fd_step/4`` combined by Richardson extrapolation.

    Raises
    ------
    DomainError
        If ``x`` is outside ``E`` or even the reduced stencil exits ``E``.
    """
    dom = spec.domain
    x = float(x)
    if not dom.contains(x):
        raise DomainError(f"{x} is outside {dom}")

    def inside(h):
        return bool(dom.contains(x - h)) and bool(dom.contains(x + h))

    if inside(fd_step):
        d1, d2 = _stencil(f, x, fd_step)
    elif inside(fd_step / 2):
        a1, a2 = _stencil(f, x, fd_step / 2)
        b1, b2 = _stencil(f, x, fd_step / 4)
        d1 = (4 * b1 - a1) / 3
        d2 = (4 * b2 - a2) / 3
    else:
        raise DomainError(f"finite-difference stencil at {x} exits {dom}")
    return float(spec.generator(x, d1, d2))


@dataclass(frozen=True)
class GeneratorIdentity:
    """The three sides of the generator identity at one point ``x``.

    ``time_changed`` is ``sigma^2(x) / (I'(I(x))^2 sigma^2(I(x))) L(f o I)(I(x))``,
    ``h_transformed`` is ``L(h f)(x) / h(x)`` and ``dual`` is ``L* f(x)``.
    """

    x: float
    time_changed: float
    h_transformed: float
    dual: float

    @property
    def relative_error(self) -> float:
        """Largest gap to ``dual``, relative to ``1 + |dual|``."""
        gap = max(abs(self.time_changed - self.dual), abs(self.h_transformed - self.dual))
        return gap / (1.0 + abs(self.dual))


def generator_identity(spec: DiffusionSpec, inv: Inversion, f: Callable, x: float,
                       fd_step: float = 1e-4) -> GeneratorIdentity:
    """Evaluate the time-change, h-transform and dual generators on ``f`` at ``x``.

    Every side is a finite-difference estimate from :func:`apply_generator`.
    """
    x = float(x)
    ix = float(inv.apply(x))
    d_at_ix = float(inv.apply_derivative(ix))
    ratio = float(spec.sigma2(x)) / float(spec.sigma2(ix))
    lhs = ratio / d_at_ix ** 2 * apply_generator(spec, lambda y: f(inv.apply(y)), ix, fd_step)
    h = inv.h
    mid = apply_generator(spec, lambda y: h.value(y) * f(y), x, fd_step) / float(h.value(x))
    rhs = apply_generator(make_dual(spec, inv).as_diffusion(), f, x, fd_step)
    return GeneratorIdentity(x, float(lhs), float(mid), float(rhs))
