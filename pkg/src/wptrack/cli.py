"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or configuration error,
3 no feasible state or track lost (including the tangential blind spot).
Set ``WPTRACK_LOG_LEVEL`` (e.g. ``INFO``) for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import formats, fusion, pipeline, simulator
from .config import RunConfig, dump_config, load_config
from .errors import NoFeasibleState, TrackLost, WPTrackError
from .metrics import evaluate

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INFEASIBLE = 0, 1, 2, 3

log = logging.getLogger("wptrack")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(path) -> RunConfig:
    return load_config(path) if path else RunConfig()


def cmd_simulate(args) -> int:
    cfg = _config(args.config)
    scene = cfg.scene.build()
    out = Path(args.out)
    bundle = simulator.run_scenario(cfg.scenario, scene, out, seed=args.seed,
                                    compress=not args.no_gzip)
    dump_config(cfg, out / "config.yaml")
    log.info("wrote %s", ", ".join(str(p) for p in vars(bundle).values()))
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _config(args.config)
    scene = cfg.scene.build()
    layout = formats.read_layout(args.layout) if args.layout else None
    stream = formats.read_csi(args.csi)
    left = formats.read_pressure(args.pressure_left)
    right = formats.read_pressure(args.pressure_right)
    meas, info = pipeline.measurements_from_signals(stream, left, right, scene, cfg, layout)
    traj = fusion.solve(meas, scene, cfg.fusion)
    metrics = {
        "insole_offset_s": info["insole_offset_s"],
        "first_foot": info["first_foot"],
        "n_steps": info["n_steps"],
        "initial_residual": traj.residuals[0],
    }
    formats.write_trajectory(args.out, traj, scene, cfg.config_hash(), metrics)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    traj, _, _ = formats.read_trajectory(args.trajectory)
    gt = formats.read_ground_truth(args.ground_truth)
    report = evaluate(traj, gt)
    formats.write_json(args.out, report.to_dict())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, agg = pipeline.run_sweep(cfg, args.seeds, args.level, args.workers)
    for rec in records:
        formats.write_json(out / f"seed_{rec['seed']:05d}.json", rec)
    agg["level"] = args.level or cfg.sweep.level
    agg["config_hash"] = cfg.config_hash()
    formats.write_json(out / "aggregate.json", agg)
    ini = agg["initial_error_m"]
    if ini["n"]:
        print(f"{agg['n_ok']}/{agg['n_scenarios']} ok, initial error mean {ini['mean']:.4f} m, "
              f"max {ini['max']:.4f} m")
    return EXIT_OK


def cmd_plot_data(args) -> int:
    traj, _, _ = formats.read_trajectory(args.trajectory)
    report = None
    if args.ground_truth:
        report = evaluate(traj, formats.read_ground_truth(args.ground_truth))
    formats.write_plot_data(args.out, traj, report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wptrack", description="Wi-Fi and pressure-insole walking tracker")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic scenario bundle")
    s.add_argument("--config", help="run configuration (YAML)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, help="override scenario.seed")
    s.add_argument("--no-gzip", action="store_true", help="write plain csi.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("track", help="estimate a trajectory from recorded streams")
    s.add_argument("--csi", required=True)
    s.add_argument("--pressure-left", required=True)
    s.add_argument("--pressure-right", required=True)
    s.add_argument("--config")
    s.add_argument("--layout", help="insole sensor layout CSV")
    s.add_argument("--out", required=True, help="trajectory JSON")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("evaluate", help="compare a trajectory with ground truth")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--ground-truth", required=True)
    s.add_argument("--out", required=True, help="report JSON")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="batch of randomised straight walks")
    s.add_argument("--config")
    s.add_argument("--seeds", type=int, help="number of scenarios (default sweep.seeds)")
    s.add_argument("--out", required=True)
    s.add_argument("--level", choices=("measurement", "signal"))
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("plot-data", help="export trajectory points and errors as CSV")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--ground-truth")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("WPTRACK_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "seeds", None) is not None and args.seeds < 1:
            build_parser().error("--seeds must be positive")
    except SystemExit as exc:  # argparse exits for --help and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (NoFeasibleState, TrackLost) as exc:
        print(f"wptrack: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (WPTrackError, OSError, ValueError) as exc:
        print(f"wptrack: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
