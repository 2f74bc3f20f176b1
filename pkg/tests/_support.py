"""Shared builders for the fusion and acceptance tests."""

import dataclasses

import numpy as np

from wptrack import fusion, simulator
from wptrack.config import RunConfig
from wptrack.geometry import Scene

SCENE = Scene()
BLIND_HZ = RunConfig().csi.doppler.blind_hz(1000.0)


def scenario(waypoints, **kw):
    return dataclasses.replace(simulator.ScenarioConfig(), waypoints=tuple(waypoints), **kw)


def noiseless(waypoints, aoa=True, stride=0.5, scene=SCENE):
    """Ground truth and exact step measurements for a walk."""
    cfg = scenario(waypoints, stride=stride)
    gt = simulator.gen_trajectory(cfg, scene)
    doppler, aoa_series = simulator.measurement_series(gt, scene, cfg, None, BLIND_HZ)
    meas = fusion.build_measurements(doppler, aoa_series if aoa else None,
                                     gt.steps(stride), scene)
    return gt, meas


def true_state(gt, t):
    """Position and heading of the segment being walked just after ``t``."""
    x, y = gt.position_at(t)
    seg = int(np.searchsorted(np.asarray(gt.turn_times), t + 1e-9, side="right"))
    return float(x), float(y), float(gt.segment_headings[seg])


def straight_walk(x0, y0, heading_deg, n_steps=4, stride=0.5):
    phi = np.deg2rad(heading_deg)
    length = n_steps * stride
    return [(x0, y0), (x0 + length * np.cos(phi), y0 + length * np.sin(phi))]


# one line per acceptance criterion, printed by conftest at the end of the run
ACCEPTANCE = {}


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE[n] = line
    assert ok, line
