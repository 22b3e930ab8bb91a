"""Command line entry point: ``vpmcf run | validate | oracle``.

Exit codes for ``run``:

    0  converged
    1  usage or configuration error
    2  pinch detected (takes precedence over everything else)
    3  a hard monitor check failed at some observation
    4  horizon reached without convergence
    5  numerical failure (volume projection or non-finite nodes)
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfg
from .convergence import is_converged
from .curve import InitialShapeSpec, SHAPE_PARAMS, build_profile, validate
from .flow import FlowState, run
from .geometry import enclosed_volume, frames, mean_h, surface_area
from .monitor import Monitor, ledger_from_initial, MissingThreshold
from .oracle import KINDS, OracleError, k_integral_by_parts, k_integral_direct, reference_surface, refine
from .output import JsonLinesWriter, SeriesWriter, profile_svg, series_row, write_json

log = logging.getLogger("vpmcf")

EXIT_CONVERGED = 0
EXIT_USAGE = 1
EXIT_PINCH = 2
EXIT_MONITOR = 3
EXIT_HORIZON = 4
EXIT_NUMERICAL = 5


@dataclass
class RunOutcome:
    exit_code: int
    reason: str
    summary: object
    ledger: object
    reports: list = field(default_factory=list)
    output_dir: Path | None = None


def _exit_code(reason: str, monitor_failed: bool) -> int:
    if reason == "pinch-detected":
        return EXIT_PINCH
    if monitor_failed:
        return EXIT_MONITOR
    if reason in ("projection-failed", "numerical-blowup"):
        return EXIT_NUMERICAL
    if reason == "converged":
        return EXIT_CONVERGED
    return EXIT_HORIZON


def execute(config: cfg.RunConfig, write: bool = True) -> RunOutcome:
    """Run a configured scenario with monitor and convergence observers."""
    curve = build_profile(config.scenario)
    state0 = FlowState.initial(curve)
    fr0 = frames(curve)
    ledger = ledger_from_initial(state0, config.c_alpha, config.alpha_list, fr0)
    monitor = Monitor(ledger, config.tolerances)
    out = Path(config.output_dir)
    reports = []
    writers = []
    last_svg = [None]

    if write:
        out.mkdir(parents=True, exist_ok=True)
        series = SeriesWriter(out / "series.csv")
        mlog = JsonLinesWriter(out / "monitor.jsonl")
        writers = [series, mlog]
        snap_dir = out / "snapshots"
        if config.emit_svg:
            snap_dir.mkdir(exist_ok=True)
        write_json(out / "ledger.json", ledger.as_dict())

    def snapshot(state, fr, conv):
        path = snap_dir / f"profile_{state.step_index:09d}.svg"
        path.write_text(profile_svg(state, fr, conv, config.alpha_list), encoding="utf-8")
        last_svg[0] = state.step_index

    def observer(state, fr):
        conv = is_converged(state, fr, config.tol_cmc, config.tol_shape)
        rep = monitor.check(state, fr)
        reports.append(rep)
        if not rep.passed:
            for c in rep.failures:
                log.warning("t=%.6g check %s failed: measured %.6g, bound %.6g, node %s",
                            state.t, c.check_id, c.measured, c.bound, c.location)
        if write:
            series.write(series_row(state, fr, conv))
            mlog.write(rep.as_dict())
            if config.emit_svg and (
                last_svg[0] is None or (config.svg_every > 0 and state.step_index - last_svg[0] >= config.svg_every)
            ):
                snapshot(state, fr, conv)

    try:
        summary = run(
            state0, config.policy, config.horizon, observers=[observer], observe_every=config.observe_every,
            tol_cmc=config.tol_cmc, tol_shape=config.tol_shape, stop_on_convergence=config.stop_on_convergence,
        )
    finally:
        for w in writers:
            w.close()
    final = summary.final_state
    if write and config.emit_svg and last_svg[0] != final.step_index:
        ffr = frames(final.curve)
        snapshot(final, ffr, is_converged(final, ffr, config.tol_cmc, config.tol_shape))

    failed = [r for r in reports if not r.passed]
    code = _exit_code(summary.reason, bool(failed))
    log.info("finished: %s at t=%.6g after %d steps (exit %d)", summary.reason, final.t, summary.steps, code)
    if write:
        result = {
            "reason": summary.reason,
            "exit_code": code,
            "t": final.t,
            "steps": summary.steps,
            "area": final.area,
            "volume": final.volume,
            "h": final.h,
            "seed": config.seed,
        }
        write_json(out / "summary.json", result)
        if code != EXIT_CONVERGED:
            write_json(out / "diagnostic.json", _diagnostic(summary, failed, code))
    return RunOutcome(code, summary.reason, summary, ledger, reports, out if write else None)


def _diagnostic(summary, failed_reports, code) -> dict:
    s = summary.final_state
    r = np.where(s.curve.pole_mask(), np.inf, s.curve.r)
    j = int(np.argmin(r))
    diag = {
        "reason": summary.reason,
        "exit_code": code,
        "message": str(summary.error) if summary.error else None,
        "last_state": {
            "t": s.t, "step": s.step_index, "N": s.curve.N, "area": s.area, "volume": s.volume, "h": s.h,
            "min_r_node": j, "min_r": float(r[j]), "x_at_min_r": float(s.curve.x[j]),
        },
    }
    err = summary.error
    if err is not None and hasattr(err, "node"):
        diag["neck"] = {"node": err.node, "r_min": err.r_min, "x": float(s.curve.x[err.node])}
    if failed_reports:
        first = failed_reports[0]
        diag["first_monitor_failure"] = {"t": first.t, "step": first.step, "checks": [c.as_dict() for c in first.failures]}
        diag["monitor_failure_count"] = len(failed_reports)
    return diag


# --------------------------------------------------------------------------
# subcommands


def _cmd_run(args) -> int:
    try:
        config = cfg.load(args.config, args.set)
        if args.output_dir:
            config = cfg.RunConfig(**{**config.__dict__, "output_dir": Path(args.output_dir)})
    except cfg.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        outcome = execute(config)
    except MissingThreshold as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"{outcome.reason}: t={outcome.summary.t:.6g} steps={outcome.summary.steps} -> {outcome.output_dir}")
    return outcome.exit_code


def _cmd_validate(args) -> int:
    try:
        config = cfg.load(args.config, args.set)
    except cfg.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = validate(build_profile(config.scenario))
    print(report.summary())
    return 0 if report.ok else EXIT_USAGE


def _print_values(rows):
    for name, values in rows:
        print(f"{name:10s} " + "  ".join(f"{k}={_f(v)}" for k, v in values.items()))


def _f(v):
    if isinstance(v, str):
        return v
    return f"{v:.6f}" if isinstance(v, float) and math.isfinite(v) and abs(v) >= 1e-3 else f"{v:.6g}"


def _refined_rows(source, quantities, levels):
    rows = []
    for name, fun in quantities:
        res = refine(fun, source, levels)
        rows.append((name, {"refined": res.value, "order": res.order if math.isfinite(res.order) else "exact",
                            "status": res.status}))
    return rows


def _cmd_oracle(args) -> int:
    if args.kind == "refine":
        return _cmd_oracle_refine(args)
    if args.kind not in KINDS:
        print(f"unknown shape {args.kind!r}; expected one of {', '.join(KINDS + ('refine',))}", file=sys.stderr)
        return EXIT_USAGE
    params = {"radius": args.radius}
    if args.kind == "cylinder_segment":
        params["length"] = args.length
    if args.kind == "sphere" and args.center_x:
        params["center_x"] = args.center_x
    try:
        curve, rec = reference_surface(args.kind, params, args.N, args.n)
    except OracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    fr = frames(curve)
    rows = [
        ("area", {"closed": rec.area, "discrete": surface_area(curve)}),
        ("volume", {"closed": rec.volume, "discrete": enclosed_volume(curve)}),
        ("h", {"closed": float(rec.H[len(rec.H) // 2]), "discrete": mean_h(curve, fr)}),
        ("int_k", {"closed": rec.k_integral, "discrete": k_integral_direct(curve, fr)}),
    ]
    if args.kind == "hemisphere":
        rows[-1][1]["by_parts"] = k_integral_by_parts(curve, fr)
    _print_values(rows)
    if args.kind != "cylinder_segment":
        _print_values(_refined_rows(curve, [("area", surface_area), ("volume", enclosed_volume)], args.levels))
    return 0


def _cmd_oracle_refine(args) -> int:
    try:
        if args.config:
            spec = cfg.load(args.config, args.set).scenario
        elif args.scenario:
            if args.scenario not in SHAPE_PARAMS:
                raise cfg.ConfigError(f"unknown scenario {args.scenario!r}; expected one of {sorted(SHAPE_PARAMS)}")
            params = {".".join(k): v for k, v in (cfg.parse_override(p) for p in args.param)}
            spec = InitialShapeSpec(args.scenario, params, None, args.n, args.N)
            build_profile(spec)
        else:
            raise cfg.ConfigError("oracle refine needs --config or --scenario")
    except (cfg.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _print_values(_refined_rows(spec, [("area", surface_area), ("volume", enclosed_volume), ("h", mean_h)], args.levels))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vpmcf", description="Axisymmetric volume-preserving mean curvature flow.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    r.add_argument("--output-dir")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="build and validate the initial curve of a scenario")
    v.add_argument("--config", required=True)
    v.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    v.set_defaults(func=_cmd_validate)

    o = sub.add_parser("oracle", help="reference values (sphere, hemisphere, cylinder_segment, refine)")
    o.add_argument("kind")
    o.add_argument("--radius", type=float, default=1.0)
    o.add_argument("--length", type=float, default=2.0)
    o.add_argument("--center-x", type=float, default=0.0)
    o.add_argument("--n", type=int, default=2)
    o.add_argument("--N", type=int, default=400)
    o.add_argument("--levels", type=int, default=3)
    o.add_argument("--scenario")
    o.add_argument("--param", action="append", default=[], metavar="NAME=VALUE")
    o.add_argument("--config")
    o.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    o.set_defaults(func=_cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on usage errors; map to 1
        return EXIT_USAGE if exc.code else 0
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
