"""Killed diffusion paths, the inversion clock and time-changed transforms.

The engine advances all alive paths of a batch together, one Euler step
at a time, drawing noise from counter-based streams keyed by
``(seed, path id, step)``.  With constant coefficients the Euler step is
the exact Gaussian transition.  Observations (probe-time states, clock
crossings, lifetimes) are collected on the fly, so long runs never hold
whole trajectories unless ``record`` is requested.
"""

from __future__ import annotations

import enum
import io
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels, rng
from .core import DiffusionSpec, DomainError, Interval, RangeError, ScaleObject, build_scale
from .errors import CoefficientError, ConfigError, TruncationError
from .inversion import Inversion

TAIL_FRACTION = 0.1
TAIL_TOLERANCE = 1e-3
TRUNCATION_LIMIT = 0.01


class ExitSide(enum.Enum):
    LOWER = "Lower"
    UPPER = "Upper"
    CENSORED = "Censored"

    def mirror(self) -> "ExitSide":
        if self is ExitSide.LOWER:
            return ExitSide.UPPER
        if self is ExitSide.UPPER:
            return ExitSide.LOWER
        return self


_SIDE_CODES = (ExitSide.LOWER, ExitSide.UPPER, ExitSide.CENSORED)
LOWER, UPPER, CENSORED = 0, 1, 2


@dataclass
class PathSample:
    """One trajectory on a time grid.

    ``zeta`` is the lifetime (``inf`` when censored at the horizon).
    """

    times: np.ndarray
    states: np.ndarray
    killed: bool
    zeta: float
    exit_side: ExitSide
    path_id: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.times.shape != self.states.shape or self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("times and states must be equal-length 1-d arrays")
        if self.times[0] < 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing and nonnegative")


@dataclass
class ClockedPath:
    """A base path with the clock ``A`` evaluated at its grid times."""

    base: PathSample
    clock_values: np.ndarray
    inversion: Inversion

    @property
    def final_clock(self) -> float:
        return float(self.clock_values[-1])


@dataclass(frozen=True)
class ClockLifetime:
    """``A`` at the end of a path; a lower bound for ``A_zeta`` when censored."""

    value: float
    lower_bound: bool

    def __float__(self):
        return self.value


# -- clock -------------------------------------------------------------------

def clock_rate(inv: Inversion, spec: DiffusionSpec, x):
    """Integrand ``I'(x)^2 sigma^2(x) / sigma^2(I(x))`` of the clock."""
    return inv.clock_rate(spec, x)


def attach_clock(path: PathSample, inv: Inversion, spec: DiffusionSpec) -> ClockedPath:
    """Trapezoidal clock ``A`` along ``path`` with the analytic ``I'``."""
    r = np.asarray(clock_rate(inv, spec, path.states), dtype=float)
    if not np.all(np.isfinite(r)):
        raise CoefficientError("clock integrand is not finite along the path")
    inc = 0.5 * (r[1:] + r[:-1]) * np.diff(path.times)
    clock = np.concatenate(([0.0], np.cumsum(inc)))
    return ClockedPath(path, clock, inv)


def clock_at(cp: ClockedPath, t):
    """``A_t`` by linear interpolation between grid times."""
    return np.interp(t, cp.base.times, cp.clock_values)


def invert_clock(cp: ClockedPath, u):
    """``tau_u``: the time at which the piecewise-linear clock reaches ``u``.

    Raises
    ------
    RangeError
        If ``u`` is negative or exceeds the final clock value.
    """
    u_arr = np.asarray(u, dtype=float)
    a = cp.clock_values
    if np.any(u_arr < 0) or np.any(u_arr > a[-1]):
        raise RangeError(f"clock value outside [0, {a[-1]}]")
    t = cp.base.times
    k = np.clip(np.searchsorted(a, u_arr, side="right") - 1, 0, len(a) - 2)
    da = a[k + 1] - a[k]
    w = np.where(da > 0, (u_arr - a[k]) / np.where(da > 0, da, 1.0), 0.0)
    out = t[k] + w * (t[k + 1] - t[k])
    return float(out) if out.ndim == 0 else out


def _state_at(path: PathSample, t):
    return np.interp(t, path.times, path.states)


def transform_path(cp: ClockedPath, out_grid: Optional[Sequence[float]] = None) -> PathSample:
    """The time-changed inversion ``t -> I(X_{tau_t})``.

    Without ``out_grid`` the transform is returned at the clock knots
    ``(A_k, I(X_k))``, which involves no interpolation at all.  The result's
    lifetime is ``A_zeta`` and its exit side is mirrored.

    Raises
    ------
    RangeError
        If the grid leaves ``[0, A_zeta)`` (``[0, A_T]`` for censored paths).
    """
    base = cp.base
    inv = cp.inversion
    side = base.exit_side.mirror()
    zeta = cp.final_clock if base.killed else math.inf
    if out_grid is None:
        keep = np.concatenate(([True], np.diff(cp.clock_values) > 0))
        return PathSample(cp.clock_values[keep], inv.apply(base.states[keep]),
                          base.killed, zeta, side, base.path_id)
    grid = np.asarray(out_grid, dtype=float)
    limit = cp.final_clock
    if grid.size == 0 or grid[0] < 0 or (base.killed and grid[-1] >= limit) or grid[-1] > limit:
        raise RangeError(f"output grid must lie in [0, {limit})")
    tau = invert_clock(cp, grid)
    states = inv.apply(_state_at(base, tau))
    return PathSample(grid, states, base.killed, zeta, side, base.path_id)


def first_hitting(path: PathSample, y: float) -> float:
    """First crossing time of level ``y`` with linear interpolation (``inf`` if none)."""
    x = path.states
    d = x - y
    if d[0] == 0:
        return 0.0
    cross = np.nonzero(d[:-1] * d[1:] <= 0)[0]
    if cross.size == 0:
        return math.inf
    k = int(cross[0])
    t = path.times
    w = d[k] / (d[k] - d[k + 1])
    return float(t[k] + w * (t[k + 1] - t[k]))


def lifetime_clock(cp: ClockedPath) -> ClockLifetime:
    """``A_zeta``; flagged as a lower bound when the base path was censored."""
    return ClockLifetime(cp.final_clock, not cp.base.killed)


# -- the engine --------------------------------------------------------------

@dataclass(frozen=True)
class DualityDeviation:
    """Sup deviations found by re-clocking a transformed path.

    ``clock`` is ``sup_k |A^eta_k - t_k|``: the clock of the transformed
    path, computed with the dual coefficients and the same inversion,
    against the base grid times it should reproduce.  Transforming twice
    returns the base states exactly up to rounding (``state``); only
    the times move, by the same ``clock`` amount.
    """

    clock: float
    state: float
    n_knots: int


def clock_duality_deviation(cp: ClockedPath, dual_spec: DiffusionSpec) -> DualityDeviation:
    """Re-clock the transform of ``cp`` and compare with the base path.

    Raises
    ------
    CoefficientError
        If the dual clock integrand is not finite along the transformed path.
    """
    base = cp.base
    keep = np.concatenate(([True], np.diff(cp.clock_values) > 0))
    transformed = transform_path(cp)
    back = attach_clock(transformed, cp.inversion, dual_spec)
    twice = transform_path(back)
    t_base = base.times[keep]
    clock_dev = float(np.max(np.abs(back.clock_values - t_base)))
    m = min(twice.states.size, t_base.size)
    state_dev = float(np.max(np.abs(twice.states[:m] - base.states[keep][:m])))
    return DualityDeviation(clock_dev, state_dev, int(t_base.size))


def truncation_check(result: "BatchResult") -> float:
    """Fraction of truncated paths; raises above the allowed limit.

    Raises
    ------
    TruncationError
        If more than 1% of the paths failed the tail rule at the final horizon.
    """
    frac = float(np.mean(result.truncated))
    if frac > TRUNCATION_LIMIT:
        raise TruncationError(
            f"tail rule failed for {frac:.2%} of paths (limit {TRUNCATION_LIMIT:.0%})")
    return frac


@dataclass(frozen=True)
class Boundaries:
    """Killing/reflection levels used by the engine."""

    lower: float
    upper: float
    absorb_lower: bool
    absorb_upper: bool

    @classmethod
    def resolve(cls, spec: DiffusionSpec, x_init: float, boundary_eps: float,
                kill_interval: Optional[Interval] = None,
                scale: Optional[ScaleObject] = None) -> "Boundaries":
        dom = spec.domain
        eps = boundary_eps
        if kill_interval is not None:
            lo, hi = kill_interval.lower, kill_interval.upper
            if lo < dom.lower or hi > dom.upper:
                raise ConfigError(f"kill interval {kill_interval} is not inside {dom}")
            lo = lo + eps if lo == dom.lower else lo
            hi = hi - eps if hi == dom.upper else hi
            b = cls(lo, hi, math.isfinite(lo), math.isfinite(hi))
        else:
            absorbing = spec.absorbing
            if absorbing is None:
                sc = scale if scale is not None else build_scale(spec, x_init)
                absorbing = (math.isfinite(dom.lower) and math.isfinite(sc.s_at_l),
                             math.isfinite(dom.upper) and math.isfinite(sc.s_at_r))
            b = cls(dom.lower + eps if math.isfinite(dom.lower) else -math.inf,
                    dom.upper - eps if math.isfinite(dom.upper) else math.inf,
                    bool(absorbing[0]) and math.isfinite(dom.lower),
                    bool(absorbing[1]) and math.isfinite(dom.upper))
        if not (b.lower < x_init < b.upper):
            raise DomainError(f"x_init={x_init} is not strictly inside ({b.lower}, {b.upper})")
        return b


@dataclass(frozen=True)
class SimulationJob:
    """Everything that determines a batch of paths besides the path ids.

    Parameters
    ----------
    clock_probes
        Clock values ``u`` at which the base state ``X_{tau_u}`` is recorded
        (requires ``inversion``).
    time_probes
        Times at which ``X_t`` is recorded.
    lifetime_clock
        Keep stepping until the path is killed or the clock tail is negligible.
    stop_when_observed
        Retire a path once all probes are observed, instead of running to
        the horizon.
    max_doublings
        How many times an undecided path's horizon may be doubled.
    bridge
        Kill paths whose Brownian bridge between grid points crosses an
        absorbing level (exact for constant coefficients).
    """

    spec: DiffusionSpec
    x_init: float
    dt: float
    max_time: float
    seed: int
    boundary_eps: float = 1e-5
    inversion: Optional[Inversion] = None
    clock_probes: tuple = ()
    time_probes: tuple = ()
    lifetime_clock: bool = False
    stop_when_observed: bool = True
    max_doublings: int = 3
    bridge: bool = False
    kill_interval: Optional[Interval] = None
    record: bool = False
    scale: Optional[ScaleObject] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.max_time > 0):
            raise ConfigError(f"max_time must be positive, got {self.max_time}")
        if not self.boundary_eps > 0:
            raise ConfigError("boundary_eps must be positive")
        if (self.clock_probes or self.lifetime_clock) and self.inversion is None:
            raise ConfigError("clock observations need an inversion")
        for name in ("clock_probes", "time_probes"):
            v = tuple(float(p) for p in getattr(self, name))
            if any(p < 0 for p in v) or list(v) != sorted(v):
                raise ConfigError(f"{name} must be sorted and nonnegative")
            object.__setattr__(self, name, v)
        if self.time_probes and self.time_probes[-1] > self.max_time:
            raise ConfigError("time probes beyond max_time")


@dataclass
class BatchResult:
    """Per-path observations of a batch, sorted by path id.

    ``clock_probe_states[i, j]`` is ``X_{tau_u}`` for ``u = clock_probes[j]``
    and NaN when the transformed path is dead at ``u``.  ``undecided`` marks
    paths whose clock never reached a probe but whose tail rule failed.
    """

    path_ids: np.ndarray
    lifetime: np.ndarray
    exit_side: np.ndarray
    final_time: np.ndarray
    final_state: np.ndarray
    clock_end: np.ndarray
    time_probe_states: np.ndarray
    clock_probe_states: np.ndarray
    truncated: np.ndarray
    time_probes: tuple
    clock_probes: tuple
    paths: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return int(self.path_ids.size)

    def killed(self) -> np.ndarray:
        return self.exit_side != CENSORED

    def alive_at(self, j: int) -> np.ndarray:
        col = self.time_probe_states[:, j]
        return col[~np.isnan(col)]

    def transformed_alive_at(self, j: int) -> np.ndarray:
        col = self.clock_probe_states[:, j]
        return col[~np.isnan(col)]


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise CoefficientError(f"{what} is not finite at a visited state")


def _eval_coeffs(spec, x):
    b = np.asarray(spec.drift(x), dtype=float)
    sg = np.asarray(spec.sigma(x), dtype=float)
    if b.shape != x.shape:
        b = np.broadcast_to(b, x.shape).copy()
    if sg.shape != x.shape:
        sg = np.broadcast_to(sg, x.shape).copy()
    _check_finite(b, "drift")
    _check_finite(sg, "sigma")
    return np.ascontiguousarray(b), np.ascontiguousarray(sg)


class _Probes:
    """Crossing detector for an increasing list of levels of a monotone quantity."""

    def __init__(self, levels, n):
        self.levels = np.asarray(levels, dtype=float)
        self.m = self.levels.size
        self.idx = np.zeros(n, dtype=np.int64)
        self.values = np.full((n, self.m), math.nan)

    def observe(self, rows, q0, q1, x0, x1, dead):
        """Record states where the quantity passes a level within ``(q0, q1]``.

        A level reached exactly at the killing time is not observed.
        """
        if not self.m:
            return
        while True:
            ci = self.idx[rows]
            pending = ci < self.m
            lev = self.levels[np.minimum(ci, self.m - 1)]
            reach = pending & (lev <= q1)
            if not reach.any():
                return
            seen = reach & ~(dead & (lev >= q1))
            dq = q1 - q0
            w = np.where(dq > 0, (lev - q0) / np.where(dq > 0, dq, 1.0), 0.0)
            val = x0 + np.clip(w, 0.0, 1.0) * (x1 - x0)
            self.values[rows[seen], ci[seen]] = val[seen]
            self.idx[rows[reach]] += 1

    def done(self, rows):
        return self.idx[rows] >= self.m


def _run_chunk(job: SimulationJob, bounds: Boundaries, ids: np.ndarray) -> dict:
    spec, dt = job.spec, job.dt
    n = ids.size
    keys = rng.path_keys(job.seed, ids, rng.NORMALS)
    bkeys = rng.path_keys(job.seed, ids, rng.BRIDGE) if job.bridge else keys
    inv = job.inversion
    use_clock = inv is not None and bool(job.clock_probes or job.lifetime_clock or job.record)
    lo, hi = bounds.lower, bounds.upper
    reflect_lo = (not bounds.absorb_lower) and math.isfinite(lo)
    reflect_hi = (not bounds.absorb_upper) and math.isfinite(hi)

    x = np.full(n, float(job.x_init))
    a = np.zeros(n)
    rate = None
    if use_clock:
        rate = np.asarray(clock_rate(inv, spec, x), dtype=float).copy()
        _check_finite(rate, "clock integrand")
    lifetime = np.full(n, math.inf)
    side = np.full(n, CENSORED, dtype=np.int8)
    final_time = np.zeros(n)
    final_state = x.copy()
    clock_end = np.full(n, math.nan)
    truncated = np.zeros(n, dtype=bool)
    tprobe = _Probes(job.time_probes, n)
    cprobe = _Probes(job.clock_probes, n)
    everyone = np.arange(n)
    never = np.zeros(n, dtype=bool)
    # levels sitting at 0 are seen at the start
    tprobe.observe(everyone, np.zeros(n), np.zeros(n), x, x, never)
    cprobe.observe(everyone, np.zeros(n), np.zeros(n), x, x, never)
    log = [] if job.record else None
    retire = job.stop_when_observed and not job.lifetime_clock and not job.record \
        and (tprobe.m or cprobe.m)

    buf_x = np.empty(n)
    buf_f = np.empty(n)
    buf_c = np.empty(n, dtype=np.int8)
    active = everyone.copy()
    horizon = job.max_time
    tail_mark = (1 - TAIL_FRACTION) * horizon
    a_mark = np.full(n, math.nan)
    doublings = 0
    k = 0
    while True:
        n_steps = int(round(horizon / dt))
        while k < n_steps and active.size:
            t0 = k * dt
            t1 = (k + 1) * dt
            m = active.size
            sel = slice(None) if m == n else active
            xa = x[sel]
            b, sg = _eval_coeffs(spec, xa)
            x_end, frac, code = buf_x[:m], buf_f[:m], buf_c[:m]
            bad = _kernels.em_step(xa, b, sg, keys[sel], bkeys[sel], k, dt, lo, hi,
                                   bounds.absorb_lower, bounds.absorb_upper,
                                   reflect_lo, reflect_hi, job.bridge, x_end, frac, code)
            if bad >= 0:
                raise CoefficientError(f"state became non-finite from x={xa[bad]}")
            dead = code != _kernels.ALIVE
            t_end = t0 + frac * dt
            if use_clock:
                r_end = np.asarray(clock_rate(inv, spec, x_end), dtype=float)
                _check_finite(r_end, "clock integrand")
                a0 = a[sel]
                a_end = a0 + 0.5 * (rate[sel] + r_end) * (t_end - t0)
                cprobe.observe(active, a0, a_end, xa, x_end, dead)
                if t0 < tail_mark <= t1:
                    w = (tail_mark - t0) / dt
                    a_mark[sel] = a0 + w * (a_end - a0)
                a[sel] = a_end
                rate[sel] = r_end
            if tprobe.m:
                t_hi = np.full(m, t1)
                tprobe.observe(active, np.full(m, t0), np.where(dead, t_end, t_hi),
                               xa, x_end, dead)
                # a probe inside (t_end, t1] of a dying path is simply missed
                late = dead & ~tprobe.done(active)
                if late.any():
                    rows = active[late]
                    nxt = tprobe.levels[tprobe.idx[rows]]
                    tprobe.idx[rows[nxt <= t1]] += 1
            x[sel] = x_end
            if log is not None:
                log.append((active, t_end.copy(), x_end.copy(),
                            a_end.copy() if use_clock else None))
            if dead.any():
                rows = active[dead]
                lifetime[rows] = t_end[dead]
                side[rows] = code[dead]
                final_time[rows] = t_end[dead]
                final_state[rows] = x_end[dead]
                if use_clock:
                    clock_end[rows] = a_end[dead]
            keep = ~dead
            if retire:
                done = np.ones(m, dtype=bool)
                if tprobe.m:
                    done &= tprobe.done(active)
                if cprobe.m:
                    done &= cprobe.done(active)
                fin = done & keep
                if fin.any():
                    rows = active[fin]
                    final_time[rows] = t1
                    final_state[rows] = x_end[fin]
                    if use_clock:
                        clock_end[rows] = a_end[fin]
                keep &= ~done
            active = active[keep]
            k += 1

        if not active.size:
            break
        # still alive at the horizon
        final_time[active] = horizon
        final_state[active] = x[active]
        if use_clock:
            clock_end[active] = a[active]
        need_more = np.zeros(active.size, dtype=bool)
        if use_clock and (job.lifetime_clock or cprobe.m):
            tail = a[active] - a_mark[active]
            need_more = ~(tail < TAIL_TOLERANCE * a[active])
            if not job.lifetime_clock:
                need_more &= ~cprobe.done(active)
        if not need_more.any() or doublings >= job.max_doublings:
            truncated[active[need_more]] = True
            break
        active = active[need_more]
        doublings += 1
        horizon *= 2
        tail_mark = (1 - TAIL_FRACTION) * horizon

    paths = []
    if log is not None:
        paths = _assemble(log, n, ids, float(job.x_init), lifetime, side,
                          inv if use_clock else None)
    return dict(lifetime=lifetime, exit_side=side, final_time=final_time,
                final_state=final_state, clock_end=clock_end,
                time_probe_states=tprobe.values, clock_probe_states=cprobe.values,
                truncated=truncated, paths=paths)


def _assemble(log, n, ids, x_init, lifetime, side, inv):
    rows = np.concatenate([np.arange(n)] + [e[0] for e in log])
    ts = np.concatenate([np.zeros(n)] + [e[1] for e in log])
    xs = np.concatenate([np.full(n, x_init)] + [e[2] for e in log])
    order = np.argsort(rows, kind="stable")
    bounds = np.searchsorted(rows[order], np.arange(n + 1))
    if inv is not None:
        az = np.concatenate([np.zeros(n)] + [e[3] for e in log])[order]
    ts, xs = ts[order], xs[order]
    out = []
    for row in range(n):
        sl = slice(bounds[row], bounds[row + 1])
        ps = PathSample(ts[sl], xs[sl], bool(side[row] != CENSORED), float(lifetime[row]),
                        _SIDE_CODES[side[row]], int(ids[row]))
        out.append(ClockedPath(ps, az[sl], inv) if inv is not None else ps)
    return out


def run_batch(job: SimulationJob, n_paths: int, workers: int = 1,
              path_offset: int = 0, chunk_size: int = 4096) -> BatchResult:
    """Simulate ``n_paths`` paths with ids ``path_offset, ..., path_offset + n - 1``.

    Results are bit-identical for any ``workers`` and ``chunk_size``.
    """
    if n_paths < 1:
        raise ConfigError("n_paths must be positive")
    if workers < 1:
        raise ConfigError("workers must be positive")
    bounds = Boundaries.resolve(job.spec, job.x_init, job.boundary_eps,
                                job.kill_interval, job.scale)
    ids = np.arange(path_offset, path_offset + n_paths, dtype=np.int64)
    chunks = [ids[i:i + chunk_size] for i in range(0, n_paths, chunk_size)]
    if workers == 1 or len(chunks) == 1:
        parts = [_run_chunk(job, bounds, c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _run_chunk(job, bounds, c), chunks))
    order = np.argsort(np.concatenate(chunks), kind="stable")

    def cat(key):
        return np.concatenate([p[key] for p in parts])[order]

    paths = [p for part in parts for p in part["paths"]]
    return BatchResult(
        path_ids=np.concatenate(chunks)[order], lifetime=cat("lifetime"),
        exit_side=cat("exit_side"), final_time=cat("final_time"),
        final_state=cat("final_state"), clock_end=cat("clock_end"),
        time_probe_states=cat("time_probe_states"),
        clock_probe_states=cat("clock_probe_states"), truncated=cat("truncated"),
        time_probes=job.time_probes, clock_probes=job.clock_probes,
        paths=[paths[i] for i in order] if paths else [],
    )


def simulate_path(spec: DiffusionSpec, x_init: float, dt: float, max_time: float,
                  seed: int, boundary_eps: float = 1e-5, path_id: int = 0,
                  bridge: bool = False, kill_interval: Optional[Interval] = None,
                  scale: Optional[ScaleObject] = None) -> PathSample:
    """Euler-Maruyama path killed in the ``boundary_eps`` collar of attainable ends.

    Raises
    ------
    ConfigError
        On nonpositive ``dt`` or ``max_time``.
    CoefficientError
        If a coefficient is not finite at a visited state.
    """
    job = SimulationJob(spec, float(x_init), dt, max_time, seed, boundary_eps,
                        bridge=bridge, kill_interval=kill_interval, record=True,
                        stop_when_observed=False, scale=scale)
    return run_batch(job, 1, path_offset=path_id).paths[0]


def simulate_clocked(spec: DiffusionSpec, inv: Inversion, x_init: float, dt: float,
                     max_time: float, seed: int, n_paths: int = 1,
                     boundary_eps: float = 1e-5, path_offset: int = 0,
                     workers: int = 1) -> list:
    """Recorded paths with their clocks accumulated during simulation."""
    job = SimulationJob(spec, float(x_init), dt, max_time, seed, boundary_eps,
                        inversion=inv, record=True, stop_when_observed=False)
    return run_batch(job, n_paths, workers=workers, path_offset=path_offset).paths


# -- export ------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def paths_to_csv(paths: Sequence, fh: Optional[io.TextIOBase] = None) -> str:
    """CSV with columns ``path_id,t,x,A_t`` (empty ``A_t`` without a clock)."""
    out = io.StringIO()
    out.write("path_id,t,x,A_t\n")
    for p in paths:
        base = p.base if isinstance(p, ClockedPath) else p
        clock = p.clock_values if isinstance(p, ClockedPath) else None
        for i in range(base.times.size):
            a = _fmt(clock[i]) if clock is not None else ""
            out.write(f"{base.path_id},{_fmt(base.times[i])},{_fmt(base.states[i])},{a}\n")
    text = out.getvalue()
    if fh is not None:
        fh.write(text)
    return text


BINARY_MAGIC = b"DIFFPATH"
BINARY_VERSION = 1
_HEADER = struct.Struct("<8sII")
_RECORD = struct.Struct("<QQBB6xd")


def paths_to_bytes(paths: Sequence) -> bytes:
    """Compact little-endian batch format.

    Header ``magic(8) version(u32) count(u32)``; per path
    ``path_id(u64) n(u64) killed(u8) exit_side(u8) pad(6) zeta(f64)``
    followed by ``times``, ``states`` and ``clock`` as ``n`` float64 each
    (clock is NaN for unclocked paths).
    """
    chunks = [_HEADER.pack(BINARY_MAGIC, BINARY_VERSION, len(paths))]
    for p in paths:
        base = p.base if isinstance(p, ClockedPath) else p
        clock = p.clock_values if isinstance(p, ClockedPath) else np.full(base.times.size, math.nan)
        chunks.append(_RECORD.pack(base.path_id, base.times.size, int(base.killed),
                                   _SIDE_CODES.index(base.exit_side), base.zeta))
        for arr in (base.times, base.states, clock):
            chunks.append(np.asarray(arr, dtype="<f8").tobytes())
    return b"".join(chunks)


def paths_from_bytes(data: bytes) -> list:
    """Inverse of :func:`paths_to_bytes`; returns ``(PathSample, clock)`` pairs."""
    magic, version, count = _HEADER.unpack_from(data, 0)
    if magic != BINARY_MAGIC:
        raise ValueError("not a diffinv path file")
    if version != BINARY_VERSION:
        raise ValueError(f"unsupported path file version {version}")
    off = _HEADER.size
    out = []
    for _ in range(count):
        pid, n, killed, code, zeta = _RECORD.unpack_from(data, off)
        off += _RECORD.size
        arrs = []
        for _ in range(3):
            arrs.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).astype(float))
            off += 8 * n
        ps = PathSample(arrs[0], arrs[1], bool(killed), zeta, _SIDE_CODES[code], int(pid))
        out.append((ps, arrs[2]))
    return out
