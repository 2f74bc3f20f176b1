"""End-to-end glue: streams to measurements to trajectories to reports.

Two measurement levels share the same fusion back end:

``signal``
    CSI and insole streams run through the full signal processing chain.
``measurement``
    Doppler and AoA series are synthesised from the ground truth with
    calibrated noise (see :func:`wptrack.simulator.measurement_series`) and
    steps come from the true toe-offs.  This is what the statistical sweeps
    use, since it isolates the solver from front-end artefacts.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import csi as csi_mod
from . import fusion, insole, simulator
from .config import RunConfig
from .errors import TrackLost, WPTrackError
from .metrics import evaluate, summarize

log = logging.getLogger(__name__)


def measurements_from_signals(stream, left, right, scene, cfg: RunConfig, layout=None):
    """Full front end.  Returns ``(measurements, info)``."""
    layout = layout or insole.SensorLayout.default()
    icfg = cfg.insole
    left, right, offset = insole.synchronize(left, right, layout, icfg)
    t_sync = insole.detect_sync_feature(left, layout, icfg)
    first = insole.detect_first_moving_foot(left, right, t_sync + icfg.hold + 0.5, icfg)
    steps = insole.attach_stride(insole.segment_steps(left, right, layout, icfg), icfg.stride)
    if steps[0].foot != first:
        log.warning("first detected step starts on %s, first moving foot is %s",
                    steps[0].foot.value, first.value)

    if cfg.csi.denoise:
        stream = csi_mod.denoise_stream(stream, cfg.csi.sg_window, cfg.csi.sg_order)
    dcfg = cfg.csi.doppler
    doppler = csi_mod.estimate_doppler_velocity(stream, scene.wavelength, dcfg)
    aoa = csi_mod.estimate_aoa_series(stream, scene.wavelength, scene.antenna_spacing, dcfg)
    usable = [s for s in steps if s.t_start >= doppler.times[0] and s.t_end <= doppler.times[-1]]
    if len(usable) < len(steps):
        log.warning("dropped %d step(s) outside the Doppler support", len(steps) - len(usable))
    meas = fusion.build_measurements(doppler, aoa, usable, scene)
    info = {"insole_offset_s": float(offset), "first_foot": first.value,
            "n_steps": len(usable), "doppler": doppler, "aoa": aoa}
    return meas, info


def measurements_from_truth(gt, scene, cfg: RunConfig, seed: int):
    """Measurement-level synthesis with the scenario's noise settings."""
    rng = simulator.measurement_rng(seed)
    doppler, aoa = simulator.measurement_series(gt, scene, cfg.scenario, rng,
                                                cfg.csi.doppler.blind_hz(cfg.scenario.csi_rate))
    steps = gt.steps(cfg.scenario.stride)
    return fusion.build_measurements(doppler, aoa, steps, scene)


def run_case(cfg: RunConfig, seed: int | None = None, level: str = "measurement"):
    """Simulate, measure and track one scenario; returns ``(traj, gt, report)``."""
    scene = cfg.scene.build()
    seed = cfg.scenario.seed if seed is None else seed
    if level == "measurement":
        gt = simulator.gen_trajectory(cfg.scenario, scene)
        meas = measurements_from_truth(gt, scene, cfg, seed)
    elif level == "signal":
        gt, stream, left, right = simulator.simulate(cfg.scenario, scene, seed=seed)
        meas, _ = measurements_from_signals(stream, left, right, scene, cfg)
    else:
        raise ValueError(f"unknown level {level!r}")
    try:
        traj = fusion.solve(meas, scene, cfg.fusion)
    except TrackLost as exc:
        exc.ground_truth = gt  # lets callers score the partial trajectory
        raise
    return traj, gt, evaluate(traj, gt)


def sweep_case(cfg: RunConfig, seed: int, level: str | None = None) -> dict:
    """One randomised straight walk of the sweep, as a plain result record."""
    sw = cfg.sweep
    scene = cfg.scene.build()
    rng = np.random.default_rng(seed)
    waypoints = simulator.random_straight_walk(rng, scene, sw.n_steps, cfg.scenario.stride,
                                               sw.margin, sw.min_abs_y, sw.min_ratio)
    case = cfg.replace(scenario=dataclasses.replace(cfg.scenario, waypoints=waypoints, seed=seed))
    record = {"seed": int(seed), "waypoints": [list(p) for p in waypoints]}
    try:
        traj, _, report = run_case(case, seed, level or sw.level)
    except WPTrackError as exc:
        record.update(status=type(exc).__name__, message=str(exc))
        if isinstance(exc, TrackLost):
            # the initial estimate succeeded; only the tracking that followed was lost
            record["initial_error_m"] = evaluate(exc.trajectory, exc.ground_truth).initial_error
        return record
    record.update(status="ok", initial_error_m=report.initial_error,
                  mean_step_error_m=float(np.nanmean(report.step_errors)),
                  endpoint_error_m=report.endpoint_error, report=report.to_dict(),
                  residuals=[float(r) if np.isfinite(r) else None for r in traj.residuals])
    return record


def _sweep_worker(args):
    cfg, seed, level = args
    return sweep_case(cfg, seed, level)


def run_sweep(cfg: RunConfig, seeds: int | None = None, level: str | None = None,
              workers: int | None = None):
    """Run the sweep; records come back in seed order whatever the pool does."""
    n = cfg.sweep.seeds if seeds is None else seeds
    workers = cfg.sweep.workers if workers is None else workers
    jobs = [(cfg, cfg.sweep.seed_base + i, level) for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_sweep_worker, jobs))
    else:
        records = [_sweep_worker(j) for j in jobs]
    return records, aggregate(records)


def aggregate(records) -> dict:
    ok = [r for r in records if r["status"] == "ok"]
    return {
        "n_scenarios": len(records),
        "n_ok": len(ok),
        "failures": {r["seed"]: r["status"] for r in records if r["status"] != "ok"},
        "n_initial": sum("initial_error_m" in r for r in records),
        "initial_error_m": summarize([r["initial_error_m"] for r in records if "initial_error_m" in r]),
        "mean_step_error_m": summarize([r["mean_step_error_m"] for r in ok]),
        "endpoint_error_m": summarize([r["endpoint_error_m"] for r in ok]),
    }
