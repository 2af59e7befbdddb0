"""Experiment configuration records and their resolution into objects.

A config is a JSON object::

    {
      "diffusion": {"kind": "bessel", "params": {"delta": 3}},
      "x0": 1.0, "dt": 1e-4, "n_paths": 10000, "max_time": 20.0, "seed": 1,
      "probes": [0.3, 1.0], "checks": ["theorem1"],
      "output": {"dir": "out"}
    }

``diffusion.kind`` is a catalog name or ``"custom"``; custom diffusions give
``domain``, ``sigma`` and ``drift`` as expression strings (see
:mod:`diffinv.expr`), with ``params`` available as named constants, and
optionally ``closed_form_scale`` with ``s`` and ``s_prime``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np

from . import catalog, expr
from .core import ClosedFormScale, DiffusionSpec, Interval, build_scale
from .errors import ConfigError, DiffinvError, ExpressionError, ParamError, UnknownEntry
from .inversion import build_inversion

CHECKS = ("hitting_symmetry", "theorem1", "lifetime_laws", "conditioning",
          "clock_duality", "calibration")

_TOP_KEYS = {"diffusion", "x0", "dt", "n_paths", "max_time", "seed", "probes", "checks",
             "output", "thresholds", "boundary_eps", "x_points", "max_doublings",
             "dt_halving", "t_probe", "bridge", "dts", "grid"}


@dataclass(frozen=True)
class OutputConfig:
    dir: Optional[str] = None
    paths_csv: Optional[str] = None
    paths_bin: Optional[str] = None
    samples_csv: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment record; see the module docstring for the layout."""

    diffusion: dict
    x0: Optional[float] = None
    dt: float = 1e-3
    n_paths: int = 1000
    max_time: float = 10.0
    seed: int = 0
    probes: tuple = ()
    checks: tuple = ()
    output: OutputConfig = field(default_factory=OutputConfig)
    thresholds: dict = field(default_factory=dict)
    boundary_eps: float = 1e-5
    x_points: tuple = ()
    max_doublings: int = 3
    dt_halving: bool = True
    t_probe: Optional[float] = None
    bridge: bool = False
    dts: tuple = (1e-3, 5e-4, 2.5e-4)
    grid: int = 21

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        """Validate and build a config.

        Raises
        ------
        ConfigError
            On unknown keys, schema violations or out-of-range values.
        """
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(d) - _TOP_KEYS
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if "diffusion" not in d:
            raise ConfigError("config needs a 'diffusion' record")
        diff = d["diffusion"]
        if isinstance(diff, str):
            diff = {"kind": diff}
        try:
            jsonschema.validate(diff, catalog.schema())
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "diffusion"
            raise ConfigError(f"diffusion record invalid at {path}: {exc.message}") from None

        def num(key, default, positive=True, integer=False):
            v = d.get(key, default)
            if v is None:
                return None
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{key} must be a number")
            if integer and int(v) != v:
                raise ConfigError(f"{key} must be an integer")
            if not math.isfinite(v) or (positive and not v > 0):
                raise ConfigError(f"{key} must be positive and finite, got {v}")
            return int(v) if integer else float(v)

        def floats(key, default=()):
            v = d.get(key, default)
            if not isinstance(v, (list, tuple)):
                raise ConfigError(f"{key} must be a list of numbers")
            try:
                out = tuple(float(p) for p in v)
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a list of numbers") from None
            if any(not math.isfinite(p) for p in out):
                raise ConfigError(f"{key} must be finite")
            return out

        checks = d.get("checks", [])
        if not isinstance(checks, list) or any(c not in CHECKS for c in checks):
            raise ConfigError(f"checks must be a list drawn from {list(CHECKS)}")
        probes = floats("probes")
        if any(p <= 0 for p in probes):
            raise ConfigError("probes must be positive")
        out = d.get("output", {}) or {}
        if not isinstance(out, dict) or set(out) - set(OutputConfig.__dataclass_fields__):
            raise ConfigError("output must be an object with keys "
                              f"{sorted(OutputConfig.__dataclass_fields__)}")
        th = d.get("thresholds", {}) or {}
        if not isinstance(th, dict):
            raise ConfigError("thresholds must be an object")
        seed = d.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        for key in ("dt_halving", "bridge"):
            if key in d and not isinstance(d[key], bool):
                raise ConfigError(f"{key} must be a boolean")
        x0 = d.get("x0")
        if x0 is not None and (isinstance(x0, bool) or not isinstance(x0, (int, float))):
            raise ConfigError("x0 must be a number")
        dts = floats("dts", (1e-3, 5e-4, 2.5e-4))
        if len(dts) < 2 or any(v <= 0 for v in dts):
            raise ConfigError("dts needs at least two positive steps")
        return cls(
            diffusion=diff, x0=None if x0 is None else float(x0),
            dt=num("dt", 1e-3), n_paths=num("n_paths", 1000, integer=True),
            max_time=num("max_time", 10.0), seed=int(seed), probes=probes,
            checks=tuple(checks), output=OutputConfig(**out), thresholds=dict(th),
            boundary_eps=num("boundary_eps", 1e-5), x_points=floats("x_points"),
            max_doublings=num("max_doublings", 3, positive=False, integer=True),
            dt_halving=d.get("dt_halving", True), t_probe=num("t_probe", None),
            bridge=d.get("bridge", False), dts=dts, grid=num("grid", 21, integer=True),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON at line {exc.lineno} column {exc.colno}: "
                              f"{exc.msg}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_json(text)


@dataclass(frozen=True)
class ResolvedDiffusion:
    """A diffusion spec with its scale and, when applicable, catalog entry."""

    spec: DiffusionSpec
    entry: Optional[catalog.CatalogEntry]
    closed_form: Optional[ClosedFormScale]
    default_x0: Optional[float]

    def scale(self, anchor: Optional[float] = None):
        """Reference scale for catalog entries; built from the record otherwise."""
        if self.entry is not None:
            return self.entry.scale(anchor)
        anchor = self.default_x0 if anchor is None else anchor
        if self.closed_form is not None:
            return build_scale(self.spec, anchor, closed_form=self.closed_form, normalize=False)
        return build_scale(self.spec, anchor)

    def inversion(self, x0: Optional[float] = None):
        x0 = self.default_x0 if x0 is None else float(x0)
        if x0 is None:
            raise ConfigError("x0 is required for this diffusion")
        return build_inversion(self.scale(x0), x0)


def resolve_diffusion(record: dict) -> ResolvedDiffusion:
    """Turn a diffusion record into a spec.

    Raises
    ------
    ConfigError
        For invalid records, including bad expressions and parameters.
    """
    kind = record.get("kind")
    params = dict(record.get("params") or {})
    if kind != "custom":
        if "domain" in record and kind in ("brownian", "brownian_drift"):
            params.setdefault("domain", record["domain"])
        elif "domain" in record:
            raise ConfigError(f"{kind} has a fixed domain")
        try:
            entry = catalog.get(kind, params)
        except (ParamError, UnknownEntry) as exc:
            raise ConfigError(str(exc)) from None
        return ResolvedDiffusion(entry.spec, entry, entry.exact_scale, entry.default_x0)
    try:
        dom = Interval.parse(record["domain"])
    except DiffinvError as exc:
        raise ConfigError(f"bad domain: {exc}") from None
    consts = {}
    for k, v in params.items():
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"custom parameter {k!r} must be a number")
        consts[k] = float(v)
    try:
        sigma = expr.parse(record["sigma"], consts)
        drift = expr.parse(record["drift"], consts)
        cf = None
        if "closed_form_scale" in record:
            rec = record["closed_form_scale"]
            s = expr.parse(rec["s"], consts)
            sp = expr.parse(rec["s_prime"], consts)
            cf = ClosedFormScale(value=s, derivative=sp)
    except ExpressionError as exc:
        raise ConfigError(str(exc)) from None
    spec = DiffusionSpec(dom, sigma, drift, name="custom",
                         params={"sigma": str(sigma), "drift": str(drift), **consts})
    default = _interior(dom)
    return ResolvedDiffusion(spec, None, cf, default)


def _interior(dom: Interval) -> float:
    lo, hi = dom.lower, dom.upper
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    if math.isfinite(lo):
        return lo + 1.0
    if math.isfinite(hi):
        return hi - 1.0
    return 0.0


def check_coefficients(res: ResolvedDiffusion, n: int = 64) -> None:
    """Probe the coefficients on interior points.

    Raises
    ------
    ConfigError
        If ``sigma`` vanishes or a coefficient is not finite somewhere on
        the probe grid.
    """
    dom = res.spec.domain
    lo = dom.lower if math.isfinite(dom.lower) else -50.0
    hi = dom.upper if math.isfinite(dom.upper) else 50.0
    if math.isfinite(dom.lower) and not math.isfinite(dom.upper):
        hi = lo + 50.0
    if math.isfinite(dom.upper) and not math.isfinite(dom.lower):
        lo = hi - 50.0
    xs = np.linspace(lo, hi, n + 2)[1:-1]
    sig = np.asarray(res.spec.sigma(xs), dtype=float)
    b = np.asarray(res.spec.drift(xs), dtype=float)
    if not (np.all(np.isfinite(sig)) and np.all(np.isfinite(b))):
        raise ConfigError("coefficients are not finite on the domain interior")
    if np.any(sig == 0):
        raise ConfigError("sigma vanishes inside the domain")
