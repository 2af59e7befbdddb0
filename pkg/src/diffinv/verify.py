"""Experiment drivers that test the inversion identities by simulation.

Each driver returns a :class:`VerificationReport` whose verdict is a pure
function of the samples and of the thresholds in :class:`Thresholds`.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import catalog
from .core import BoundaryType, DiffusionSpec, Interval, hitting_probability
from .doob import conditioning_split, h_transform, make_dual
from .errors import ConfigError, InsufficientSurvivors, RejectionStarvation
from .inversion import Inversion
from .paths import (
    CENSORED,
    LOWER,
    UPPER,
    SimulationJob,
    clock_duality_deviation,
    run_batch,
    simulate_clocked,
    truncation_check,
)
from .stats import (
    MCEstimate,
    inverse_gaussian,
    ks_two_sample,
    levy_hitting_time,
)


class Verdict(enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Thresholds:
    """Decision thresholds shared by all checks."""

    alpha: float = 0.01
    stderr_k: float = 3.0
    gap_k: float = 5.0
    min_survivors: int = 100
    min_acceptance: float = 0.01
    calibration_passes: int = 98
    slope_range: tuple = (0.7, 1.3)

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "Thresholds":
        if not d:
            return cls()
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown thresholds {sorted(extra)}")
        vals = dict(d)
        if "slope_range" in vals:
            vals["slope_range"] = tuple(vals["slope_range"])
        return cls(**vals)


@dataclass
class ReportRow:
    """One line of a report: a KS comparison or an estimate comparison."""

    identity: str
    verdict: Verdict
    D: Optional[float] = None
    p_value: Optional[float] = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"identity": self.identity, "D": self.D, "p_value": self.p_value,
                "verdict": self.verdict.value, "detail": self.detail}


@dataclass
class VerificationReport:
    """Outcome of one identity check."""

    identity_name: str
    samples_meta: dict
    rows: list
    verdict: Verdict
    samples: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"identity": self.identity_name, "verdict": self.verdict.value,
                "samples_meta": self.samples_meta,
                "rows": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    def csv_rows(self) -> list:
        return [(r.identity, _fmt(r.D), _fmt(r.p_value), r.verdict.value) for r in self.rows]

    def to_csv(self) -> str:
        return rows_to_csv(self.csv_rows())

    def to_table(self) -> str:
        return render_table(self.csv_rows(), title=f"{self.identity_name}: {self.verdict.value}")

    def samples_csv(self) -> str:
        """Raw samples in long form ``(sample, value)``."""
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["sample", "value"])
        for name in sorted(self.samples):
            for v in np.asarray(self.samples[name], dtype=float):
                w.writerow([name, repr(float(v))])
        return out.getvalue()


CSV_HEADER = ("identity", "D", "p_value", "verdict")


def _fmt(v) -> str:
    if v is None:
        return ""
    return f"{v:.6g}"


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, enum.Enum):
        return v.value
    raise TypeError(f"not serializable: {type(v)}")


def rows_to_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(rows)
    return out.getvalue()


def render_table(rows, title: str = "") -> str:
    """Plain-text table with the report CSV columns."""
    body = [CSV_HEADER] + [tuple(r) for r in rows]
    widths = [max(len(str(r[i])) for r in body) for i in range(len(CSV_HEADER))]
    lines = [title] if title else []
    for k, r in enumerate(body):
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _combine(verdicts: Sequence[Verdict]) -> Verdict:
    if any(v is Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if any(v is Verdict.INCONCLUSIVE for v in verdicts):
        return Verdict.INCONCLUSIVE
    return Verdict.PASS


def _ks_row(identity: str, a, b, level: float, detail: Optional[dict] = None) -> ReportRow:
    res = ks_two_sample(a, b)
    v = Verdict.PASS if res.p_value > level else Verdict.FAIL
    d = {"n1": res.n1, "n2": res.n2, "level": level}
    d.update(detail or {})
    return ReportRow(identity, v, res.statistic, res.p_value, d)


def _with_dt_halving(run, dt: float) -> tuple:
    """Run at ``dt``; a Pass must survive ``dt/2`` or it becomes Inconclusive."""
    first = run(dt)
    if first.verdict is not Verdict.PASS:
        return first, None
    second = run(dt / 2)
    if second.verdict is not Verdict.PASS:
        first.verdict = Verdict.INCONCLUSIVE
    return first, second


# -- hitting symmetry --------------------------------------------------------

def check_hitting_symmetry(spec: DiffusionSpec, inv: Inversion, n_paths: int, dt: float,
                           x_points: Sequence[float] = (), seed: int = 0,
                           displacement: float = 0.2, max_time: float = 1e3,
                           workers: int = 1, thresholds: Thresholds = Thresholds()
                           ) -> VerificationReport:
    """Exit-order symmetry between ``X`` and ``X*`` started at ``x0``.

    For every pair ``(a, I(a))`` with ``a`` in ``x_points``, and for the
    domain ends when they are attainable, the base probability of reaching
    ``a`` before ``I(a)`` is estimated together with the dual probability of
    reaching ``I(a)`` before ``a``; both runs kill on the pair and use the
    Brownian-bridge crossing correction.  The closed forms must agree at
    ``x0`` and differ at ``x0 +- displacement``.
    """
    x0 = inv.x0
    th = thresholds
    base_scale = inv.base_scale
    dual = make_dual(spec, inv)
    dual_scale = dual.dual_scale
    dom = spec.domain
    pairs = []
    if math.isfinite(base_scale.s_at_l) and math.isfinite(base_scale.s_at_r):
        pairs.append((dom.lower, dom.upper))
    for a in x_points:
        ia = float(inv.apply(a))
        if not min(a, ia) < x0 < max(a, ia):
            raise ConfigError(f"x0 is not between {a} and I({a}) = {ia}")
        pairs.append((float(a), ia))
    if not pairs:
        raise ConfigError("no attainable pair: give x_points inside the domain")

    rows = []
    meta = {"x0": x0, "n_paths": n_paths, "dt": dt, "seed": seed, "bridge": True,
            "pairs": [list(p) for p in pairs]}
    for k, (a, b) in enumerate(pairs):
        lo, hi = min(a, b), max(a, b)
        kill = Interval(lo, hi)
        base_first_lower = a == lo
        job = SimulationJob(spec, x0, dt, max_time, seed + 2 * k, bridge=True,
                            kill_interval=kill, scale=base_scale)
        r = run_batch(job, n_paths, workers=workers)
        djob = SimulationJob(dual.spec, x0, dt, max_time, seed + 2 * k + 1, bridge=True,
                             kill_interval=kill, scale=dual_scale)
        rd = run_batch(djob, n_paths, workers=workers)
        hit_a = r.exit_side == (LOWER if base_first_lower else UPPER)
        hit_b_dual = rd.exit_side == (UPPER if base_first_lower else LOWER)
        est = MCEstimate.from_samples(hit_a.astype(float))
        dest = MCEstimate.from_samples(hit_b_dual.astype(float))
        se = est.combined_stderr(dest)
        diff = est.mean - dest.mean
        exact = hitting_probability(base_scale, a, x0, b)
        exact_dual = hitting_probability(dual_scale, b, x0, a)
        ok = abs(diff) < th.stderr_k * se if se > 0 else diff == 0
        rows.append(ReportRow(
            f"hitting_symmetry:({a:.6g},{b:.6g})", Verdict.PASS if ok else Verdict.FAIL,
            detail={"base": est.to_dict(), "dual": dest.to_dict(), "difference": diff,
                    "combined_stderr": se, "closed_form_base": exact,
                    "closed_form_dual": exact_dual,
                    "censored": int(np.sum(r.exit_side == CENSORED)
                                    + np.sum(rd.exit_side == CENSORED))}))

    # "only if": closed forms at displaced starts, using the full domain when
    # attainable and the first pair otherwise
    a, b = pairs[0]
    for y in (x0 - displacement, x0 + displacement):
        if not min(a, b) < y < max(a, b):
            continue
        pb = hitting_probability(base_scale, a, y, b)
        pd = hitting_probability(dual_scale, b, y, a)
        se = math.sqrt((pb * (1 - pb) + pd * (1 - pd)) / n_paths)
        gap = abs(pb - pd)
        ok = gap > th.gap_k * se
        rows.append(ReportRow(
            f"hitting_asymmetry:start={y:.6g}", Verdict.PASS if ok else Verdict.FAIL,
            detail={"closed_form_base": pb, "closed_form_dual": pd, "gap": gap,
                    "combined_stderr_at_n": se}))
    return VerificationReport("hitting_symmetry", meta, rows, _combine([r.verdict for r in rows]))


# -- marginals of the time-changed path ------------------------------------

def _dual_is_killed(dual) -> bool:
    """Whether ``X*`` is killed in finite time: every end it can tend to kills."""
    sc = dual.dual_scale
    ab = dual.spec.absorbing or (False, False)
    bt = sc.boundary_type
    if bt is BoundaryType.TYPE4:
        return False
    need_l = math.isfinite(sc.s_at_l)
    need_r = math.isfinite(sc.s_at_r)
    return (not need_l or ab[0]) and (not need_r or ab[1])


def check_theorem1_marginal(spec: DiffusionSpec, inv: Inversion, t_probe: Sequence[float],
                            n_paths: int, dt: float, seed: int = 0, max_time: float = 20.0,
                            lifetime: Optional[bool] = None, dt_halving: bool = True,
                            max_doublings: int = 3, workers: int = 1,
                            thresholds: Thresholds = Thresholds(),
                            keep_samples: bool = False) -> VerificationReport:
    """Compare ``I(X_{tau_t})`` from base paths with ``X*_t`` from dual paths.

    Both sides start at ``x0`` so that ``I(X_0) = X*_0``.  At every probe
    time the survivors of both samples are compared by KS at the
    Bonferroni-adjusted level.  With ``lifetime`` (default: whenever the dual
    is killed in finite time) the base clock at death ``A_zeta`` is also
    compared with the dual lifetime.  A Pass is re-checked at ``dt/2``.

    Raises
    ------
    InsufficientSurvivors
        If fewer than ``min_survivors`` paths are alive at a probe.
    TruncationError
        If the tail rule leaves more than 1% of the base paths undecided.
    """
    probes = tuple(sorted(float(t) for t in t_probe))
    if not probes or probes[0] <= 0:
        raise ConfigError("probe times must be positive")
    dual = make_dual(spec, inv)
    if lifetime is None:
        lifetime = _dual_is_killed(dual)
    x0 = inv.x0
    th = thresholds
    m = len(probes) + (1 if lifetime else 0)
    level = th.alpha / m
    horizon = max(max_time, probes[-1])

    def run(step):
        job = SimulationJob(spec, x0, step, horizon, seed, inversion=inv,
                            clock_probes=probes, lifetime_clock=lifetime,
                            max_doublings=max_doublings, scale=inv.base_scale)
        r = run_batch(job, n_paths, workers=workers)
        truncated = truncation_check(r)
        djob = SimulationJob(dual.spec, x0, step, horizon if lifetime else probes[-1],
                             seed + 1, time_probes=probes,
                             stop_when_observed=not lifetime, max_doublings=0,
                             scale=dual.dual_scale)
        rd = run_batch(djob, n_paths, workers=workers)
        rows = []
        samples = {}
        for j, t in enumerate(probes):
            a = inv.apply(r.transformed_alive_at(j))
            b = rd.alive_at(j)
            if min(a.size, b.size) < th.min_survivors:
                raise InsufficientSurvivors(
                    f"{min(a.size, b.size)} survivors at t={t} (need {th.min_survivors})")
            rows.append(_ks_row(f"theorem1:marginal:t={t:g}", a, b, level,
                                {"dt": step}))
            samples[f"transformed_t={t:g}"] = a
            samples[f"dual_t={t:g}"] = b
        if lifetime:
            # both lifetimes capped at the dual horizon; a truncated base clock
            # is only known when it already exceeds the cap
            cap = horizon
            known = ~r.truncated | (r.clock_end >= cap)
            a = np.minimum(r.clock_end[known], cap)
            b = np.minimum(rd.lifetime, cap)
            rows.append(_ks_row("theorem1:lifetime", a, b, level, {"dt": step, "cap": cap}))
            samples["clock_at_death"] = a
            samples["dual_lifetime"] = b
        meta = {"x0": x0, "n_paths": n_paths, "dt": step, "seed": seed,
                "probes": list(probes), "level": level, "truncated_fraction": truncated,
                "base": spec.name, "dual": dual.spec.name}
        rep = VerificationReport("theorem1", meta, rows, _combine([x.verdict for x in rows]),
                                 samples if keep_samples else {})
        return rep

    if not dt_halving:
        return run(dt)
    first, second = _with_dt_halving(run, dt)
    first.samples_meta["dt_halving"] = None if second is None else {
        "dt": dt / 2, "verdict": second.verdict.value,
        "rows": [x.to_dict() for x in second.rows]}
    return first


# -- lifetime laws ------------------------------------------------------------

class LifetimeExperiment(enum.Enum):
    BESSEL3 = "Bessel3"
    HYP_BESSEL = "HypBessel"


def lifetime_experiment_setup(experiment: LifetimeExperiment):
    """Catalog entry, inversion and reference sampler of a lifetime experiment."""
    if experiment is LifetimeExperiment.BESSEL3:
        entry = catalog.get("bessel", {"delta": 3})
        inv = entry.inversion(1.0)

        def reference(n, gen):
            return levy_hitting_time(n, gen, x=1.0)
        return entry, inv, reference
    entry = catalog.get("hyperbolic_bessel3", {"mu": 1.0})
    inv = entry.inversion()
    x0 = inv.x0

    def reference(n, gen):
        return inverse_gaussian(n, mean=x0, shape=x0 * x0, rng=gen)
    return entry, inv, reference


def check_lifetime_laws(experiment, n_paths: int, dt: float, max_time: float,
                        seed: int = 0, max_doublings: int = 3, workers: int = 1,
                        thresholds: Thresholds = Thresholds(),
                        keep_samples: bool = False) -> VerificationReport:
    """Law of ``A_inf`` along base paths against an exact hitting-time sampler.

    ``Bessel3``: ``int X^-4 ds`` for the Bessel(3) process from 1 against
    ``1/Z^2``.  ``HypBessel``: ``(1/4) int (cosh X sinh X)^-2 ds`` for the
    hyperbolic Bessel(3) process from ``x0 = ln(1 + sqrt 2)/2`` against the
    inverse Gaussian law with mean ``x0`` and shape ``x0^2``.

    Raises
    ------
    TruncationError
        If the tail rule fails for more than 1% of the paths.
    """
    experiment = LifetimeExperiment(experiment)
    entry, inv, reference = lifetime_experiment_setup(experiment)
    job = SimulationJob(entry.spec, inv.x0, dt, max_time, seed, inversion=inv,
                        lifetime_clock=True, max_doublings=max_doublings,
                        scale=inv.base_scale)
    r = run_batch(job, n_paths, workers=workers)
    truncated = truncation_check(r)
    a = r.clock_end[~r.truncated]
    gen = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1F]))
    b = reference(n_paths, gen)
    row = _ks_row(f"lifetime_law:{experiment.value}", a, b, thresholds.alpha,
                  {"dt": dt, "median_clock": float(np.median(a)),
                   "median_reference": float(np.median(b))})
    meta = {"experiment": experiment.value, "x0": inv.x0, "n_paths": n_paths, "dt": dt,
            "max_time": max_time, "max_doublings": max_doublings, "seed": seed,
            "truncated_fraction": truncated}
    return VerificationReport("lifetime_laws", meta, [row], row.verdict,
                              {"clock": a, "reference": b} if keep_samples else {})


# -- conditioning ----------------------------------------------------------------

def check_conditioning(spec: DiffusionSpec, inv: Inversion, t_probe: float, n_paths: int,
                       dt: float, seed: int = 0, sides: Sequence[str] = ("upper", "lower"),
                       max_time: float = 100.0, workers: int = 1,
                       thresholds: Thresholds = Thresholds()) -> VerificationReport:
    """Rejection-filtered base marginals against boundary-conditioned h-transforms.

    Base paths from ``x0`` that leave through the chosen end and are alive
    at ``t_probe`` are compared by KS with the h-transform conditioned on
    that end.  The acceptance rate must match the closed-form exit
    probability within ``stderr_k`` standard errors.  The split of the
    inversion's ``h`` into the two conditioned harmonics is checked
    against the exit probabilities when the split is built.

    Raises
    ------
    RejectionStarvation
        If the acceptance rate is below ``min_acceptance``.
    InsufficientSurvivors
        If fewer than ``min_survivors`` paths survive on either side.
    """
    scale = inv.base_scale
    if scale.boundary_type is not BoundaryType.TYPE1 or not spec.domain.bounded:
        raise ConfigError("conditioning check needs a Type 1 base on a bounded interval")
    th = thresholds
    x0 = inv.x0
    split = conditioning_split(scale, inv)
    dom = spec.domain
    sides = tuple(sides)
    level = th.alpha / max(1, len(sides))
    job = SimulationJob(spec, x0, dt, max_time, seed, time_probes=(t_probe,),
                        stop_when_observed=False, bridge=True, scale=scale)
    r = run_batch(job, n_paths, workers=workers)
    alive = ~np.isnan(r.time_probe_states[:, 0])
    rows = []
    meta = {"x0": x0, "n_paths": n_paths, "dt": dt, "seed": seed, "t_probe": t_probe,
            "p_star": split.p_star, "q_star": split.q_star, "bridge": True}
    for k, side in enumerate(sides):
        if side == "upper":
            code, h, p_exact = UPPER, split.h_r, split.q_star
        elif side == "lower":
            code, h, p_exact = LOWER, split.h_l, split.p_star
        else:
            raise ConfigError(f"side must be 'upper' or 'lower', got {side!r}")
        accepted = r.exit_side == code
        est = MCEstimate.from_samples(accepted.astype(float))
        if est.mean < th.min_acceptance:
            raise RejectionStarvation(f"acceptance rate {est.mean:.4g} below {th.min_acceptance}")
        closed = hitting_probability(scale, dom.upper if code == UPPER else dom.lower, x0,
                                     dom.lower if code == UPPER else dom.upper)
        ok = abs(est.mean - closed) < th.stderr_k * est.stderr
        rows.append(ReportRow(f"conditioning:acceptance:{side}",
                              Verdict.PASS if ok else Verdict.FAIL,
                              detail={"estimate": est.to_dict(), "closed_form": closed,
                                      "weight_in_h": p_exact}))
        filtered = r.time_probe_states[accepted & alive, 0]
        hspec, hscale = h_transform(spec, h, name=f"{spec.name}|{side}")
        hjob = SimulationJob(hspec, x0, dt, t_probe, seed + 1 + k, time_probes=(t_probe,),
                             bridge=True, scale=hscale)
        rh = run_batch(hjob, n_paths, workers=workers)
        cond = rh.alive_at(0)
        if min(filtered.size, cond.size) < th.min_survivors:
            raise InsufficientSurvivors(
                f"{filtered.size} filtered and {cond.size} conditioned survivors")
        rows.append(_ks_row(f"conditioning:marginal:{side}", filtered, cond, level,
                            {"t_probe": t_probe}))
    return VerificationReport("conditioning", meta, rows, _combine([x.verdict for x in rows]))


# -- clock duality -------------------------------------------------------------

def check_clock_duality(spec: DiffusionSpec, inv: Inversion, dts: Sequence[float],
                        n_paths: int, horizon: float, seed: int = 0,
                        thresholds: Thresholds = Thresholds()) -> VerificationReport:
    """Order of the clock-duality deviation in ``dt``.

    For every path the transform is re-clocked with the dual coefficients;
    the sup deviation from the base grid times is summarized by its median
    over paths, and the log-log slope against ``dt`` must fall in
    ``slope_range``.  The twice-transformed states must equal the base
    states to rounding.
    """
    dual = make_dual(spec, inv).spec
    medians = []
    state_dev = 0.0
    for step in dts:
        cps = simulate_clocked(spec, inv, inv.x0, step, horizon, seed, n_paths=n_paths)
        devs = [clock_duality_deviation(cp, dual) for cp in cps]
        medians.append(float(np.median([d.clock for d in devs])))
        state_dev = max(state_dev, max(d.state for d in devs))
    slope = float(np.polyfit(np.log(dts), np.log(medians), 1)[0])
    lo, hi = thresholds.slope_range
    rows = [
        ReportRow("clock_duality:slope", Verdict.PASS if lo <= slope <= hi else Verdict.FAIL,
                  detail={"slope": slope, "dts": list(dts), "median_sup_deviation": medians,
                          "C": [m / s for m, s in zip(medians, dts)]}),
        ReportRow("path_involution:states", Verdict.PASS if state_dev < 1e-9 else Verdict.FAIL,
                  detail={"max_state_deviation": state_dev}),
    ]
    meta = {"x0": inv.x0, "n_paths": n_paths, "horizon": horizon, "seed": seed}
    return VerificationReport("clock_duality", meta, rows, _combine([r.verdict for r in rows]))


# -- calibration ----------------------------------------------------------------

def calibration(n_rep: int = 100, n: int = 10_000, seed: int = 0,
                thresholds: Thresholds = Thresholds()) -> VerificationReport:
    """Same-distribution KS self-tests.

    Uniform samples, and split halves of both reference samplers, should
    pass at level ``alpha`` in at least ``calibration_passes`` of ``n_rep``
    repetitions.
    """
    th = thresholds
    x0 = catalog.get("hyperbolic_bessel3").default_x0
    makers = {
        "uniform": lambda g, k: g.random(k),
        "levy": lambda g, k: levy_hitting_time(k, g),
        "inverse_gaussian": lambda g, k: inverse_gaussian(k, x0, x0 * x0, g),
    }
    rows = []
    for j, (name, make) in enumerate(makers.items()):
        passes = 0
        for i in range(n_rep):
            g = np.random.default_rng(np.random.SeedSequence([int(seed), j, i]))
            s = make(g, 2 * n)
            if ks_two_sample(s[:n], s[n:]).p_value > th.alpha:
                passes += 1
        need = math.ceil(th.calibration_passes * n_rep / 100)
        rows.append(ReportRow(f"calibration:{name}",
                              Verdict.PASS if passes >= need else Verdict.FAIL,
                              detail={"passes": passes, "repetitions": n_rep, "required": need}))
    meta = {"n_rep": n_rep, "n": n, "seed": seed, "alpha": th.alpha}
    return VerificationReport("calibration", meta, rows, _combine([r.verdict for r in rows]))


def report_summary(reports: Sequence[VerificationReport]) -> dict:
    return {"verdict": _combine([r.verdict for r in reports]).value,
            "reports": [r.to_dict() for r in reports]}


def thresholds_dict(th: Thresholds) -> dict:
    d = asdict(th)
    d["slope_range"] = list(d["slope_range"])
    return d
