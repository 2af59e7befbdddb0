"""Command-line front end.

Subcommands ``classify``, ``invert``, ``simulate`` and ``verify`` read an
experiment config (``--config``).  Exit codes: 0 when every check passes,
1 when any check does not pass, 2 for config errors, 3 for runtime or
numeric errors.  Set ``DIFFINV_LOG`` (``debug``, ``info``, ``warning``)
for progress messages on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import __version__, catalog, verify
from .config import ExperimentConfig, ResolvedDiffusion, check_coefficients, resolve_diffusion
from .errors import BoundaryTypeError, ConfigError, DiffinvError, NoSolution
from .inversion import h_arithmetic_mean, h_geometric_mean
from .paths import SimulationJob, paths_to_bytes, paths_to_csv, run_batch

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("diffinv")


def _setup_logging() -> None:
    level = os.environ.get("DIFFINV_LOG", "warning").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def _num(v: float):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=verify._json_default) + "\n"


class _Sink:
    """Writes named artifacts under ``--out`` or to stdout."""

    def __init__(self, out_dir: Optional[str], stdout):
        self.out_dir = out_dir
        self.stdout = stdout
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)

    def emit(self, name: str, text: str, echo: bool = False) -> None:
        if self.out_dir:
            with open(os.path.join(self.out_dir, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            log.info("wrote %s", os.path.join(self.out_dir, name))
            if echo:
                self.stdout.write(text)
        else:
            self.stdout.write(text)

    def emit_bytes(self, name: str, data: bytes) -> None:
        if not self.out_dir:
            raise ConfigError(f"{name} needs --out")
        with open(os.path.join(self.out_dir, name), "wb") as fh:
            fh.write(data)


# -- subcommands -----------------------------------------------------------------

def cmd_classify(cfg: ExperimentConfig, res: ResolvedDiffusion, sink: _Sink, args) -> int:
    anchor = cfg.x0 if cfg.x0 is not None else res.default_x0
    sc = res.scale(anchor)
    summary = {
        "diffusion": res.spec.name,
        "params": res.spec.params,
        "domain": res.spec.domain.to_tokens(),
        "type": sc.boundary_type.label,
        "scale_source": sc.source,
        "s_at_l": _num(sc.s_at_l),
        "s_at_r": _num(sc.s_at_r),
    }
    try:
        summary["h_geometric_mean"] = h_geometric_mean(sc)
    except NoSolution as exc:
        summary["h_geometric_mean"] = None
        summary["h_geometric_mean_note"] = str(exc)
    try:
        summary["h_arithmetic_mean"] = h_arithmetic_mean(sc)
    except BoundaryTypeError as exc:
        summary["h_arithmetic_mean"] = None
        summary["h_arithmetic_mean_note"] = str(exc)
    lines = [f"{k}: {json.dumps(summary[k], sort_keys=True)}" for k in
             ("diffusion", "params", "domain", "type", "scale_source", "s_at_l", "s_at_r",
              "h_geometric_mean", "h_arithmetic_mean")]
    text = "\n".join(lines) + "\n"
    if sink.out_dir:
        sink.emit("classify.json", _dumps(summary))
    sink.stdout.write(text)
    return EXIT_OK


def _default_grid(res: ResolvedDiffusion, x0: float, n: int) -> np.ndarray:
    dom = res.spec.domain
    lo, hi = dom.lower, dom.upper
    if math.isfinite(lo) and math.isfinite(hi):
        return np.linspace(lo, hi, n + 2)[1:-1]
    if math.isfinite(lo):
        return lo + (x0 - lo) * np.geomspace(1 / 8, 8, n)
    if math.isfinite(hi):
        return hi - (hi - x0) * np.geomspace(8, 1 / 8, n)
    return x0 + np.linspace(-4, 4, n)


def cmd_invert(cfg: ExperimentConfig, res: ResolvedDiffusion, sink: _Sink, args) -> int:
    inv = res.inversion(cfg.x0)
    xs = np.asarray(cfg.x_points, dtype=float) if cfg.x_points else \
        _default_grid(res, inv.x0, cfg.grid)
    ix = inv.apply(xs)
    hx = inv.harmonic_h(xs)
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["x", "I_x", "h_x"])
    for row in zip(xs, np.atleast_1d(ix), np.atleast_1d(hx)):
        w.writerow([repr(float(v)) for v in row])
    dump = _dumps(inv.to_dict())
    if sink.out_dir:
        sink.emit("inversion.json", dump)
        sink.emit("inversion.csv", out.getvalue())
        sink.stdout.write(dump)
    else:
        sink.stdout.write(dump + "\n" + out.getvalue())
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, res: ResolvedDiffusion, sink: _Sink, args) -> int:
    x0 = cfg.x0 if cfg.x0 is not None else res.default_x0
    scale = res.scale(x0)
    try:
        inv = res.inversion(x0)
    except DiffinvError as exc:
        log.info("no clock: %s", exc)
        inv = None
    job = SimulationJob(res.spec, x0, cfg.dt, cfg.max_time, cfg.seed, cfg.boundary_eps,
                        inversion=inv, stop_when_observed=False, bridge=cfg.bridge,
                        record=True, scale=scale)
    batch = run_batch(job, cfg.n_paths, workers=args.workers)
    log.info("simulated %d paths", batch.n)
    text = paths_to_csv(batch.paths)
    sink.emit(cfg.output.paths_csv or "paths.csv", text)
    if cfg.output.paths_bin:
        sink.emit_bytes(cfg.output.paths_bin, paths_to_bytes(batch.paths))
    return EXIT_OK


def _lifetime_experiment(cfg: ExperimentConfig) -> str:
    kind = cfg.diffusion.get("kind")
    params = cfg.diffusion.get("params") or {}
    if kind == "bessel" and float(params.get("delta", 3)) == 3.0 \
            and int(params.get("sign", 1)) == 1:
        return "Bessel3"
    if kind == "hyperbolic_bessel3" and float(params.get("mu", 1.0)) == 1.0:
        return "HypBessel"
    raise ConfigError("lifetime_laws runs on bessel (delta 3) or hyperbolic_bessel3 (mu 1)")


def _run_check(name: str, cfg: ExperimentConfig, res: ResolvedDiffusion, workers: int,
               th: verify.Thresholds) -> verify.VerificationReport:
    if name == "calibration":
        return verify.calibration(n=cfg.n_paths, seed=cfg.seed, thresholds=th)
    if name == "lifetime_laws":
        return verify.check_lifetime_laws(_lifetime_experiment(cfg), cfg.n_paths, cfg.dt,
                                          cfg.max_time, seed=cfg.seed,
                                          max_doublings=cfg.max_doublings, workers=workers,
                                          thresholds=th,
                                          keep_samples=cfg.output.samples_csv)
    inv = res.inversion(cfg.x0)
    spec = res.spec
    if name == "hitting_symmetry":
        return verify.check_hitting_symmetry(spec, inv, cfg.n_paths, cfg.dt,
                                             x_points=cfg.x_points, seed=cfg.seed,
                                             workers=workers, thresholds=th)
    if name == "theorem1":
        if not cfg.probes:
            raise ConfigError("theorem1 needs probes")
        return verify.check_theorem1_marginal(spec, inv, cfg.probes, cfg.n_paths, cfg.dt,
                                              seed=cfg.seed, max_time=cfg.max_time,
                                              dt_halving=cfg.dt_halving,
                                              max_doublings=cfg.max_doublings,
                                              workers=workers, thresholds=th,
                                              keep_samples=cfg.output.samples_csv)
    if name == "conditioning":
        t = cfg.t_probe if cfg.t_probe is not None else (cfg.probes[0] if cfg.probes else None)
        if t is None:
            raise ConfigError("conditioning needs t_probe or probes")
        return verify.check_conditioning(spec, inv, t, cfg.n_paths, cfg.dt, seed=cfg.seed,
                                         workers=workers, thresholds=th)
    if name == "clock_duality":
        return verify.check_clock_duality(spec, inv, cfg.dts, cfg.n_paths, cfg.max_time,
                                          seed=cfg.seed, thresholds=th)
    raise ConfigError(f"unknown check {name!r}")


def cmd_verify(cfg: ExperimentConfig, res: ResolvedDiffusion, sink: _Sink, args) -> int:
    if not cfg.checks:
        raise ConfigError("verify needs a non-empty 'checks' list")
    th = verify.Thresholds.from_dict(cfg.thresholds)
    reports = []
    for name in cfg.checks:
        log.info("running %s", name)
        rep = _run_check(name, cfg, res, args.workers, th)
        log.info("%s: %s", name, rep.verdict.value)
        reports.append(rep)
        if sink.out_dir:
            sink.emit(f"{name}.json", rep.to_json() + "\n")
            sink.emit(f"{name}.txt", rep.to_table())
            if cfg.output.samples_csv and rep.samples:
                sink.emit(f"{name}_samples.csv", rep.samples_csv())
    rows = [row for rep in reports for row in rep.csv_rows()]
    table = "".join(rep.to_table() for rep in reports)
    if sink.out_dir:
        sink.emit("report.csv", verify.rows_to_csv(rows))
        sink.emit("report.json", _dumps(verify.report_summary(reports)))
    sink.stdout.write(table)
    ok = all(rep.verdict is verify.Verdict.PASS for rep in reports)
    return EXIT_OK if ok else EXIT_FAIL


_COMMANDS = {
    "classify": cmd_classify,
    "invert": cmd_invert,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="diffinv",
        description="Inversions of one-dimensional diffusions: classify, invert, "
                    "simulate and verify.",
        epilog="catalog: " + ", ".join(catalog.NAMES) + " (or kind 'custom' with "
               "expression strings for sigma and drift)",
    )
    p.add_argument("--version", action="version", version=f"diffinv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "classify": "print boundary type, scale limits and the geometric/arithmetic means",
        "invert": "dump the inversion at x0 and a table of (x, I(x), h(x))",
        "simulate": "simulate paths and write (path_id, t, x, A_t) as CSV",
        "verify": "run the configured identity checks and write reports",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", required=True, metavar="PATH", help="experiment JSON")
        sp.add_argument("--seed", type=int, default=None, metavar="N",
                        help="override the config seed")
        sp.add_argument("--workers", type=int, default=1, metavar="N",
                        help="worker threads (results do not depend on it)")
        sp.add_argument("--out", default=None, metavar="DIR",
                        help="output directory (default: stdout)")
    return p


def main(argv: Optional[Sequence[str]] = None, stdout=None) -> int:
    _setup_logging()
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg = replace(cfg, seed=args.seed)
        out_dir = args.out or cfg.output.dir
        res = resolve_diffusion(cfg.diffusion)
        check_coefficients(res)
        sink = _Sink(out_dir, stdout)
        return _COMMANDS[args.command](cfg, res, sink, args)
    except ConfigError as exc:
        sys.stderr.write(f"diffinv: config error: {exc}\n")
        return EXIT_CONFIG
    except (DiffinvError, FloatingPointError, ValueError, ArithmeticError) as exc:
        sys.stderr.write(f"diffinv: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
