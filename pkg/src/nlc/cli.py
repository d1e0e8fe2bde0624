"""Command-line entry point: ``nlc <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import analysis as an
from .dynamics import integrate, invariance_monitor
from .errors import InvarianceViolation, NLCError, SpecError
from .graph import symmetric_pairs
from .scenarios import FIGURES, ScenarioConfig, figure
from .signals import (
    PERFECT,
    classify_estimation,
    find_fixed_points,
    parse_signal,
    validate,
)

log = logging.getLogger("nlc")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INVARIANCE = 3
EXIT_IO = 4

_STABILITY_TEXT = {
    an.ASYMPTOTICALLY_STABLE: "asymptotically stable",
    an.STABLE: "stable, not asymptotically stable",
    an.UNSTABLE: "unstable",
    an.AMBIGUOUS: "ambiguous",
}


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def _fmt_fix(fps) -> str:
    parts = [_fmt(c) for c in fps.isolated] + [f"[{_fmt(a)}, {_fmt(b)}]" for a, b in fps.intervals]
    if not fps.isolated and len(fps.intervals) == 1:
        return parts[0]
    return "{" + ", ".join(parts) + "}"


def signal_summary(spec: dict) -> str:
    """Graph-independent part of the stability analysis, as text."""
    s = parse_signal(spec)
    rep = validate(s)
    fps = find_fixed_points(s)
    est = classify_estimation(s)
    lines = [f"signal: {s.describe()}"]
    if rep.valid:
        lines.append(f"validation: ok (max grid slope {rep.lipschitz_estimate:.6g} "
                     f"near x={rep.lipschitz_location:.4g})")
    else:
        lines.append("validation: " + "; ".join(v.detail for v in rep.violations))
    lines.append(("perfect estimation" if est == PERFECT else f"global {est}") +
                 f"; Fix = {_fmt_fix(fps)}")
    for c, lab in zip(fps.isolated, fps.isolated_labels):
        stab = an.stability_from_consistency(lab, True)
        lines.append(f"  c = {_fmt(c)}: {lab} -> {_STABILITY_TEXT[stab]}")
    for (a, b), lab in zip(fps.intervals, fps.interval_labels):
        stab = an.stability_from_consistency(lab, False)
        lines.append(f"  [{_fmt(a)}, {_fmt(b)}]: {lab} -> {_STABILITY_TEXT[stab]}")
    return "\n".join(lines)


def run_scenario(config: ScenarioConfig, outdir: str | Path = ".", pairs: bool = True) -> dict:
    """Integrate a scenario, run the trajectory analyses and write the
    requested outputs. Returns the report as a dict."""
    config = config.apply_env()
    g, s, x0, h = config.build()
    meta = {"scenario": config.name, "notes": config.notes, "x0": config.x0}
    traj = integrate(g, s, x0, config.T, h, metadata=meta)
    mon = invariance_monitor(traj)
    report = an.AnalysisReport(
        sync=an.synchronization_status(traj),
        lyapunov=an.lyapunov_trace(g, traj, 0.0),
        pairs=an.pairwise_sync_check(g, s, traj) if pairs and symmetric_pairs(g) else None,
        metadata={**traj.metadata, "invariance": an.to_jsonable(mon)},
    )
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    stem = config.name
    if "trajectory_csv" in config.outputs:
        traj.to_csv(out / f"{stem}_trajectory.csv")
    if "trajectory_json" in config.outputs:
        traj.to_json(out / f"{stem}_trajectory.json")
    if "report_json" in config.outputs:
        report.to_json(out / f"{stem}_report.json")
    return report.to_dict()


def _print_run(name: str, rep: dict) -> None:
    sync = rep["sync"]
    inv = rep["metadata"]["invariance"]
    state = (f"synchronized at {sync['value']:.6g}" if sync["synchronized"]
             else "not synchronized")
    print(f"{name}: {state}; final spread {sync['final_spread']:.3e}; "
          f"Lyapunov max increment {rep['lyapunov']['max_increment']:.3e}; "
          f"box excursion {inv['max_box_excursion']:.1e}")


def _cmd_analyze_signal(args) -> int:
    spec = json.loads(Path(args.spec).read_text())
    if "signal" in spec and "kind" not in spec:
        spec = spec["signal"]
    print(signal_summary(spec))
    return EXIT_OK


def _simulate_one(path: str, outdir: str) -> tuple[str, dict]:
    cfg = ScenarioConfig.load(path)
    return cfg.name, run_scenario(cfg, outdir)


def _cmd_simulate(args) -> int:
    if args.jobs > 1 and len(args.scenario) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_simulate_one, args.scenario,
                                    [args.outdir] * len(args.scenario)))
    else:
        results = [_simulate_one(p, args.outdir) for p in args.scenario]
    for name, rep in results:
        _print_run(name, rep)
    return EXIT_OK


def _cmd_classify(args) -> int:
    cfg = ScenarioConfig.load(args.scenario).apply_env()
    g, s, _, _ = cfg.build()
    verdicts = an.classify_equilibria(g, s)
    for v in verdicts:
        loc = _fmt(v.location) if v.isolated else f"[{_fmt(v.location[0])}, {_fmt(v.location[1])}]"
        hint = v.spectral_hint.verdict if v.spectral_hint else "n/a"
        print(f"{loc}: {v.consistency}, {_STABILITY_TEXT[v.stability]} "
              f"(linearisation: {hint}; residual {v.residual:.1e})")
    if args.outdir:
        out = Path(args.outdir)
        out.mkdir(parents=True, exist_ok=True)
        an.AnalysisReport(equilibria=verdicts, metadata={"scenario": cfg.name}).to_json(
            out / f"{cfg.name}_equilibria.json")
    return EXIT_OK


def _cmd_basin(args) -> int:
    cfg = ScenarioConfig.load(args.scenario).apply_env()
    g, s, _, h = cfg.build()
    seed = cfg.x0.get("seed", 0)
    rep = an.basin_probe(g, s, args.samples, seed, horizon=cfg.T, h=h)
    print(f"inconsistent fixed points: {[_fmt(k) for k in rep.ordered_inconsistent_points]}")
    for cell in (*rep.cells, *rep.half_boxes):
        tag = f" ({cell.note})" if cell.note else ""
        print(f"[{_fmt(cell.lower)}, {_fmt(cell.upper)}]^N{tag}: targets {_fmt_fix(cell.targets)}; "
              f"contained {cell.fraction_contained:.0%}, converged {cell.fraction_converged:.0%} "
              f"of {cell.samples}")
    for note in rep.notes:
        print(f"note: {note}")
    if args.outdir:
        out = Path(args.outdir)
        out.mkdir(parents=True, exist_ok=True)
        an.AnalysisReport(basin=rep, metadata={"scenario": cfg.name}).to_json(
            out / f"{cfg.name}_basin.json")
    return EXIT_OK


def _cmd_reproduce(args) -> int:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.figure:
        cfg = figure(name)
        (out / f"{name}_scenario.json").write_text(cfg.to_json() + "\n")
        _print_run(name, run_scenario(cfg, out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-signal", help="fixed points and stability of a signal spec")
    p.add_argument("spec")
    p.set_defaults(func=_cmd_analyze_signal)

    p = sub.add_parser("simulate", help="integrate one or more scenarios")
    p.add_argument("scenario", nargs="+")
    p.add_argument("--outdir", default=".")
    p.add_argument("--jobs", "--batch", type=int, default=1, dest="jobs",
                   help="run scenarios concurrently in this many processes")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("classify", help="equilibrium verdicts for a scenario's graph and signal")
    p.add_argument("scenario")
    p.add_argument("--outdir")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("basin", help="sample attraction cells")
    p.add_argument("scenario")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--outdir")
    p.set_defaults(func=_cmd_basin)

    p = sub.add_parser("reproduce", help="regenerate figure data")
    p.add_argument("figure", nargs="+", choices=FIGURES)
    p.add_argument("--outdir", default=".")
    p.set_defaults(func=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvarianceViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANCE
    except (SpecError, NLCError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
