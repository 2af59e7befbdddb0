"""Built-in diffusion families with exact scale functions and inversions.

Entries
-------
brownian
    Standard Brownian motion on ``(l, r)``, killed on exit.
brownian_drift
    ``B_t + mu t`` on ``(l, r)``, killed on exit.
bessel
    Bessel process of dimension ``delta`` on ``(0, inf)``; ``sign=-1`` gives
    the mirrored process on ``(-inf, 0)``.
hyperbolic_bessel3
    Generator ``f''/2 + mu coth(mu x) f'`` on ``(0, inf)``.

Every entry carries the reference scale used in closed-form identities
(kept un-normalized), and optional helpers for the distance to a finite
scale limit so that inversions stay accurate where ``s`` saturates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .core import ClosedFormScale, DiffusionSpec, Interval, build_scale
from .errors import ParamError, UnknownEntry
from .inversion import build_inversion

NAMES = ("brownian", "brownian_drift", "bessel", "hyperbolic_bessel3")


def _arr(x):
    return np.asarray(x, dtype=float)


def _const(v):
    return lambda x: np.full_like(_arr(x), float(v))


@dataclass(frozen=True)
class CatalogEntry:
    """A named diffusion with its exact reference scale and inversion."""

    name: str
    params: dict
    spec: DiffusionSpec
    exact_scale: Optional[ClosedFormScale] = None
    exact_inversion: Optional[Callable[[float], Callable]] = None
    notes: tuple = ()
    default_x0: Optional[float] = None

    def scale(self, anchor: Optional[float] = None, reference: bool = True):
        """Scale object from the closed form.

        With ``reference`` the closed form is kept as stated; otherwise it is
        pinned at ``anchor`` like a quadrature-built scale.
        """
        if anchor is None:
            anchor = self.default_x0 if self.default_x0 is not None else _interior(self.spec.domain)
        return build_scale(self.spec, anchor, closed_form=self.exact_scale,
                           normalize=not reference)

    def numeric_scale(self, anchor: float):
        """Scale built by quadrature, ignoring the closed form."""
        return build_scale(self.spec, anchor)

    def inversion(self, x0: Optional[float] = None):
        x0 = self.default_x0 if x0 is None else x0
        if x0 is None:
            raise ParamError(f"{self.name} has no default x0; pass one")
        return build_inversion(self.scale(x0), x0)


def _interior(dom: Interval) -> float:
    lo, hi = dom.lower, dom.upper
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    if math.isfinite(lo):
        return lo + 1.0
    if math.isfinite(hi):
        return hi - 1.0
    return 0.0


def _domain(params: dict, default=(0.0, math.inf)) -> Interval:
    bounds = params.get("domain", default)
    try:
        return Interval.parse(bounds)
    except Exception as exc:  # DomainError or parse failures
        raise ParamError(f"bad domain {bounds!r}: {exc}") from exc


def _real(params: dict, key: str, default=None) -> float:
    v = params.get(key, default)
    if v is None:
        raise ParamError(f"missing parameter {key!r}")
    try:
        v = float(v)
    except (TypeError, ValueError) as exc:
        raise ParamError(f"parameter {key!r} must be a real number") from exc
    if not math.isfinite(v):
        raise ParamError(f"parameter {key!r} must be finite")
    return v


def _check_keys(params: dict, allowed):
    extra = set(params) - set(allowed)
    if extra:
        raise ParamError(f"unknown parameters {sorted(extra)}")


# -- Brownian motion ---------------------------------------------------------

def _brownian(params: dict) -> CatalogEntry:
    _check_keys(params, ("domain",))
    dom = _domain(params, (0.0, 1.0))
    l, r = dom.lower, dom.upper
    cf = ClosedFormScale(
        value=lambda x: _arr(x) * 1.0,
        derivative=lambda x: np.ones_like(_arr(x)),
        second_derivative=lambda x: np.zeros_like(_arr(x)),
        inverse=lambda y: _arr(y) * 1.0,
        lower_limit=l, upper_limit=r,
    )
    spec = DiffusionSpec(dom, _const(1.0), _const(0.0), name="brownian",
                         absorbing=(math.isfinite(l), math.isfinite(r)),
                         params={"domain": dom.to_tokens()})

    def exact(x0: float):
        if math.isfinite(l) and math.isfinite(r):
            if abs(2 * x0 - (l + r)) < 1e-12 * max(1.0, abs(l), abs(r)):
                return lambda x: 2 * x0 - _arr(x)
            den = x0 * x0 - l * r
            if abs(den) <= 1e-12 * max(1.0, x0 * x0, abs(l * r)):
                return lambda x: x0 * x0 / _arr(x)
            a = (2 * l * r - x0 * (l + r)) / den * x0
            b = (2 * x0 - (l + r)) / den
            return lambda x: (_arr(x) + a) / (b * _arr(x) - 1)
        if math.isfinite(l):
            return lambda x: l + (x0 - l) ** 2 / (_arr(x) - l)
        if math.isfinite(r):
            return lambda x: r - (r - x0) ** 2 / (r - _arr(x))
        return lambda x: 2 * x0 - _arr(x)

    default = _interior(dom)
    return CatalogEntry("brownian", {"domain": dom.to_tokens()}, spec, cf, exact,
                        notes=("Brownian motion killed upon exiting the interval",),
                        default_x0=default)


# -- Brownian motion with drift ---------------------------------------------

def _drift_scale(mu: float, l: float, r: float) -> ClosedFormScale:
    two_mu = 2.0 * mu

    def value(x):
        return -np.exp(-two_mu * _arr(x)) / two_mu

    def limit(z):
        if math.isinf(z):
            # e^{-2 mu z} -> 0 or inf
            return 0.0 if (z > 0) == (mu > 0) else -math.inf if mu > 0 else math.inf
        return float(-math.exp(-two_mu * z) / two_mu)

    s_l, s_r = limit(l), limit(r)
    gap_lower = from_gap_lower = gap_upper = from_gap_upper = None
    if math.isfinite(s_l):
        if math.isfinite(l):
            el = math.exp(-two_mu * l)
            gap_lower = lambda x: -el * np.expm1(-two_mu * (_arr(x) - l)) / two_mu  # noqa: E731
            from_gap_lower = lambda g: l + np.log1p(-two_mu * _arr(g) / el) / (-two_mu)  # noqa: E731
        else:
            gap_lower = value
            from_gap_lower = lambda g: -np.log(-two_mu * _arr(g)) / two_mu  # noqa: E731
    if math.isfinite(s_r):
        if math.isfinite(r):
            er = math.exp(-two_mu * r)
            gap_upper = lambda x: er * np.expm1(two_mu * (r - _arr(x))) / two_mu  # noqa: E731
            from_gap_upper = lambda g: r - np.log1p(two_mu * _arr(g) / er) / two_mu  # noqa: E731
        else:
            gap_upper = lambda x: np.exp(-two_mu * _arr(x)) / two_mu  # noqa: E731
            from_gap_upper = lambda g: -np.log(two_mu * _arr(g)) / two_mu  # noqa: E731
    return ClosedFormScale(
        value=value,
        derivative=lambda x: np.exp(-two_mu * _arr(x)),
        second_derivative=lambda x: -two_mu * np.exp(-two_mu * _arr(x)),
        inverse=lambda y: -np.log(-two_mu * _arr(y)) / two_mu,
        lower_limit=s_l, upper_limit=s_r,
        gap_lower=gap_lower, gap_upper=gap_upper,
        from_gap_lower=from_gap_lower, from_gap_upper=from_gap_upper,
    )


def _brownian_drift(params: dict) -> CatalogEntry:
    _check_keys(params, ("mu", "domain"))
    mu = _real(params, "mu", -1.0)
    if mu == 0:
        raise ParamError("mu must be nonzero; use 'brownian' for mu = 0")
    dom = _domain(params, (0.0, math.inf))
    l, r = dom.lower, dom.upper
    spec = DiffusionSpec(dom, _const(1.0), _const(mu), name="brownian_drift",
                         absorbing=(math.isfinite(l), math.isfinite(r)),
                         params={"mu": mu, "domain": dom.to_tokens()})
    am = abs(mu)

    def exact(x0: float):
        if math.isinf(l) and math.isinf(r):
            return lambda x: 2 * x0 - _arr(x)
        if l != 0.0 or not math.isinf(r):
            return None
        if mu < 0:
            c = (1.0 - math.exp(-2 * mu * x0)) ** 2

            def inv(x):
                e = np.expm1(-2 * mu * _arr(x))
                return np.log1p(c / e) / (2 * am)
            return inv
        if abs(x0 - math.log(2.0) / (2 * mu)) < 1e-12 * max(1.0, x0):
            return lambda x: -np.log(-np.expm1(-2 * mu * _arr(x))) / (2 * mu)
        k = math.exp(4 * mu * x0) - 2 * math.exp(2 * mu * x0)

        def inv(x):
            e = np.exp(-2 * mu * _arr(x))
            return np.log((1 + e * k) / (-np.expm1(-2 * mu * _arr(x)))) / (2 * mu)
        return inv

    default = math.log(1 + math.sqrt(2.0)) / (2 * am) if (l == 0.0 and math.isinf(r)) \
        else _interior(dom)
    return CatalogEntry("brownian_drift", {"mu": mu, "domain": dom.to_tokens()}, spec,
                        _drift_scale(mu, l, r), exact,
                        notes=("Brownian motion with drift mu killed on exit",
                               "reference scale -exp(-2 mu x)/(2 mu)"),
                        default_x0=default)


# -- Bessel processes --------------------------------------------------------

def _bessel_scale(nu: float, sign: float) -> ClosedFormScale:
    """Reference scale of the Bessel process; mirrored by ``s(-y)`` for sign -1."""
    if nu > 0:
        base = dict(
            value=lambda x: -x ** (-2 * nu), d1=lambda x: 2 * nu * x ** (-2 * nu - 1),
            d2=lambda x: -2 * nu * (2 * nu + 1) * x ** (-2 * nu - 2),
            inv=lambda y: (-y) ** (-1 / (2 * nu)), lo=-math.inf, hi=0.0,
        )
    elif nu == 0:
        base = dict(
            value=lambda x: 2 * np.log(x), d1=lambda x: 2 / x, d2=lambda x: -2 / (x * x),
            inv=lambda y: np.exp(y / 2), lo=-math.inf, hi=math.inf,
        )
    else:
        base = dict(
            value=lambda x: x ** (-2 * nu), d1=lambda x: -2 * nu * x ** (-2 * nu - 1),
            d2=lambda x: -2 * nu * (-2 * nu - 1) * x ** (-2 * nu - 2),
            inv=lambda y: y ** (-1 / (2 * nu)), lo=0.0, hi=math.inf,
        )
    # distance to the finite limit is x^{-2 nu} in both transient cases
    power = (lambda x: x ** (-2 * nu)) if nu != 0 else None
    power_inv = (lambda g: g ** (-1 / (2 * nu))) if nu != 0 else None
    f, d1, d2, inv = base["value"], base["d1"], base["d2"], base["inv"]
    if sign > 0:
        return ClosedFormScale(
            value=lambda x: f(_arr(x)), derivative=lambda x: d1(_arr(x)),
            second_derivative=lambda x: d2(_arr(x)), inverse=lambda y: inv(_arr(y)),
            lower_limit=base["lo"], upper_limit=base["hi"],
            gap_lower=(lambda x: power(_arr(x))) if nu < 0 else None,
            from_gap_lower=(lambda g: power_inv(_arr(g))) if nu < 0 else None,
            gap_upper=(lambda x: power(_arr(x))) if nu > 0 else None,
            from_gap_upper=(lambda g: power_inv(_arr(g))) if nu > 0 else None,
        )
    # mirrored: s_neg(y) = -s(-y); limits swap and change sign
    lo, hi = -base["hi"], -base["lo"]
    return ClosedFormScale(
        value=lambda y: -f(-_arr(y)), derivative=lambda y: d1(-_arr(y)),
        second_derivative=lambda y: -d2(-_arr(y)), inverse=lambda z: -inv(-_arr(z)),
        lower_limit=lo, upper_limit=hi,
        gap_lower=(lambda y: power(-_arr(y))) if nu > 0 else None,
        from_gap_lower=(lambda g: -power_inv(_arr(g))) if nu > 0 else None,
        gap_upper=(lambda y: power(-_arr(y))) if nu < 0 else None,
        from_gap_upper=(lambda g: -power_inv(_arr(g))) if nu < 0 else None,
    )


def _bessel(params: dict) -> CatalogEntry:
    _check_keys(params, ("delta", "killed", "sign"))
    delta = _real(params, "delta", 3.0)
    sign = _real(params, "sign", 1.0)
    if sign not in (1.0, -1.0):
        raise ParamError("sign must be +1 or -1")
    killed = params.get("killed")
    if killed is None:
        killed = delta < 2
    if not isinstance(killed, bool):
        raise ParamError("killed must be a boolean")
    if delta < 2 and not killed:
        raise ParamError("delta < 2 reaches 0; only the process killed at 0 is supported")
    if delta >= 2 and killed:
        raise ParamError("0 is polar for delta >= 2; killed must be false")
    nu = delta / 2 - 1
    dom = Interval(0.0, math.inf) if sign > 0 else Interval(-math.inf, 0.0)
    k = (delta - 1) / 2
    near_zero = (True, False) if sign > 0 else (False, True)
    absorbing = near_zero if killed else (False, False)
    clean = {"delta": delta, "killed": killed, "sign": int(sign)}
    spec = DiffusionSpec(dom, _const(1.0), lambda x: k / _arr(x),
                         name="bessel", absorbing=absorbing, params=clean)
    return CatalogEntry(
        "bessel", clean, spec, _bessel_scale(nu, sign),
        lambda x0: (lambda x: x0 * x0 / _arr(x)),
        notes=("Bessel process of dimension delta; index nu = delta/2 - 1",),
        default_x0=sign * 1.0,
    )


# -- hyperbolic Bessel process of dimension 3 --------------------------------

def _hyperbolic_bessel3(params: dict) -> CatalogEntry:
    _check_keys(params, ("mu",))
    mu = _real(params, "mu", 1.0)
    if mu <= 0:
        raise ParamError("mu must be positive")
    dom = Interval(0.0, math.inf)

    def coth(x):
        return 1.0 / np.tanh(x)

    cf = ClosedFormScale(
        value=lambda x: -coth(mu * _arr(x)) / mu,
        derivative=lambda x: 1.0 / np.sinh(mu * _arr(x)) ** 2,
        second_derivative=lambda x: -2 * mu * coth(mu * _arr(x)) / np.sinh(mu * _arr(x)) ** 2,
        # s = -coth(mu x)/mu  <=>  x = arccoth(-mu s)/mu
        inverse=lambda y: 0.5 * np.log1p(2.0 / (-mu * _arr(y) - 1.0)) / mu,
        lower_limit=-math.inf, upper_limit=-1.0 / mu,
        gap_upper=lambda x: 2.0 / np.expm1(2 * mu * _arr(x)) / mu,
        from_gap_upper=lambda g: np.log1p(2.0 / (mu * _arr(g))) / (2 * mu),
    )
    spec = DiffusionSpec(dom, _const(1.0), lambda x: mu * coth(mu * _arr(x)),
                         name="hyperbolic_bessel3", absorbing=(False, False),
                         params={"mu": mu})

    def exact(x0: float):
        kk = (1.0 / math.tanh(mu * x0) - 1.0) ** 2  # (coth(mu x0) - 1)^2
        return lambda x: np.log1p(4.0 / (kk * np.expm1(2 * mu * _arr(x)))) / (2 * mu)

    return CatalogEntry("hyperbolic_bessel3", {"mu": mu}, spec, cf, exact,
                        notes=("Brownian motion with drift -mu conditioned to avoid zero",),
                        default_x0=math.log(1 + math.sqrt(2.0)) / (2 * mu))


_BUILDERS = {
    "brownian": _brownian,
    "brownian_drift": _brownian_drift,
    "bessel": _bessel,
    "hyperbolic_bessel3": _hyperbolic_bessel3,
}


def get(name: str, params: Optional[dict] = None) -> CatalogEntry:
    """Look up and construct a catalog entry.

    Raises
    ------
    UnknownEntry
        If ``name`` is not a catalog family.
    ParamError
        If the parameters are invalid.
    """
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownEntry(f"unknown catalog entry {name!r}; known: {', '.join(NAMES)}") from None
    return builder(dict(params or {}))


@dataclass(frozen=True)
class ExpectedDual:
    """Closed-form description of the dual process stated for a catalog entry.

    The dual is ``offset + orientation * R`` where ``R`` belongs to ``family``;
    ``drift`` gives the resulting coefficient directly on the base domain.
    """

    family: str
    params: dict
    drift: Callable
    offset: float = 0.0
    orientation: float = 1.0
    note: str = ""
    extra: dict = field(default_factory=dict)

    def spec(self, domain: Interval, absorbing: Optional[tuple] = None) -> DiffusionSpec:
        return DiffusionSpec(domain, _const(1.0), self.drift, name=f"expected:{self.family}",
                             absorbing=absorbing, params=dict(self.params))


def _bessel3_about(c: float, orientation: float, note: str) -> ExpectedDual:
    # c + o R with R Bessel(3): drift o / (o (x - c)) = 1 / (x - c)
    return ExpectedDual("bessel", {"delta": 3.0, "sign": int(orientation)},
                        lambda x: 1.0 / (_arr(x) - c), offset=c, orientation=orientation,
                        note=note)


def expected_duality(name: str, params: Optional[dict] = None,
                     x0: Optional[float] = None) -> ExpectedDual:
    """The dual family stated in closed form for a catalog entry at ``x0``.

    Raises
    ------
    UnknownEntry
        If ``name`` is not a catalog family.
    """
    entry = get(name, params)
    x0 = entry.default_x0 if x0 is None else float(x0)
    dom = entry.spec.domain
    l, r = dom.lower, dom.upper

    if name == "brownian":
        if math.isinf(l) and math.isinf(r):
            return ExpectedDual("brownian", {}, _const(0.0), note="reflection; self-dual")
        if math.isinf(r):
            return _bessel3_about(l, 1.0, "l + R with R a Bessel(3) process")
        if math.isinf(l):
            return _bessel3_about(r, -1.0, "r - R with R a Bessel(3) process")
        if abs(2 * x0 - (l + r)) < 1e-12 * max(1.0, abs(l), abs(r)):
            return ExpectedDual("brownian", {"domain": dom.to_tokens()}, _const(0.0),
                                note="midpoint; self-dual")
        den = x0 * x0 - l * r
        if abs(den) <= 1e-12 * max(1.0, x0 * x0, abs(l * r)):
            o = 1.0 if l > 0 else -1.0
            return _bessel3_about(0.0, o, "(negative) Bessel(3) killed on exiting E")
        b = (2 * x0 - (l + r)) / den
        o = 1.0 if x0 < 0.5 * (l + r) else -1.0
        return _bessel3_about(1.0 / b, o, "1/b +- R with R a Bessel(3) process")

    if name == "brownian_drift":
        mu = entry.params["mu"]
        sc = entry.scale(x0)
        sl, sr, s0 = sc.s_at_l, sc.s_at_r, float(sc.s(x0))
        fl, fr = math.isfinite(sl), math.isfinite(sr)
        # h is proportional to 1 + k exp(-2 mu x), or to exp(-2 mu x) alone
        if fl and fr:
            if abs(2 * s0 - sl - sr) < 1e-12 * max(1.0, abs(sl), abs(sr)):
                return ExpectedDual("brownian_drift", {"mu": mu}, _const(mu),
                                    note="s-reflection; self-dual")
            den = s0 * s0 - sl * sr
            if abs(den) <= 1e-12 * max(1.0, s0 * s0, abs(sl * sr)):
                k = math.inf
            else:
                k = (2 * s0 - (sl + sr)) / den / (2 * mu)
        elif fl:
            k = math.inf if sl == 0 else -1.0 / (-2 * mu * sl)
        elif fr:
            k = math.inf if sr == 0 else -1.0 / (-2 * mu * sr)
        else:
            return ExpectedDual("brownian_drift", {"mu": mu}, _const(mu), note="self-dual")
        if math.isinf(k):
            return ExpectedDual("brownian_drift", {"mu": -mu}, _const(-mu),
                                note="Brownian motion with drift -mu")

        def drift(x, k=k):
            e = k * np.exp(-2 * mu * _arr(x))
            return mu * (1 - e) / (1 + e)

        if l == 0.0 and math.isinf(r) and mu < 0:
            return ExpectedDual("hyperbolic_bessel3", {"mu": -mu}, drift,
                                note="conditioned to avoid zero", extra={"k": k})
        if l == 0.0 and math.isinf(r) and abs(k - 1.0) < 1e-9:
            return ExpectedDual("drift_tanh", {"mu": mu}, lambda x: mu * np.tanh(mu * _arr(x)),
                                note="generator f''/2 + mu tanh(mu x) f'", extra={"k": k})
        return ExpectedDual("brownian_drift_h", {"mu": mu, "k": k}, drift,
                            note="h proportional to 1 + k exp(-2 mu x)")

    if name == "bessel":
        delta = entry.params["delta"]
        d2 = 4.0 - delta
        return ExpectedDual("bessel", {"delta": d2, "killed": d2 < 2, "sign": entry.params["sign"]},
                            lambda x: (d2 - 1) / (2 * _arr(x)),
                            note="Bessel process of dimension 4 - delta")

    mu = entry.params["mu"]
    return ExpectedDual("brownian_drift", {"mu": -mu, "domain": [0.0, "inf"]}, _const(-mu),
                        note="Brownian motion with drift -mu killed at 0")


def schema() -> dict:
    """Parameter schema of the catalog (JSON Schema)."""
    with resources.files(__package__).joinpath("catalog_schema.json").open() as fh:
        return json.load(fh)
