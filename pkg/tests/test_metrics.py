import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wptrack.errors import NoOverlap
from wptrack.formats import GroundTruthTrace
from wptrack.fusion import Trajectory
from wptrack.geometry import Scene, TargetState
from wptrack.metrics import evaluate, summarize
from wptrack.simulator import ScenarioConfig, gen_trajectory

GT = gen_trajectory(ScenarioConfig(), Scene())


def traj_from(times, offset=(0.0, 0.0)):
    traj = Trajectory()
    for t, (x, y) in zip(times, GT.position_at(np.asarray(times))):
        traj.append(t, TargetState(x + offset[0], y + offset[1], 0.0), 0.0)
    return traj


STEP_TIMES = [6.5, 7.0, 7.5, 8.0, 8.5]


def test_identical_gives_zero():
    report = evaluate(traj_from(STEP_TIMES), GT)
    np.testing.assert_allclose(report.per_state, 0.0, atol=1e-12)


def test_constant_offset():
    report = evaluate(traj_from(STEP_TIMES, (0.1, 0.0)), GT)
    np.testing.assert_allclose(report.per_state, 0.1, atol=1e-12)
    assert report.summary["std"] == pytest.approx(0.0, abs=1e-12)


def test_single_state_std_is_null():
    report = evaluate(traj_from([7.0]), GT)
    d = report.to_dict()
    assert d["summary_m"]["n"] == 1 and d["summary_m"]["std"] is None
    assert d["step_errors_m"] == []


def test_no_overlap():
    with pytest.raises(NoOverlap):
        evaluate(traj_from([7.0]).__class__(), GT)
    late = Trajectory()
    late.append(100.0, TargetState(1, 1, 0), 0.0)
    with pytest.raises(NoOverlap):
        evaluate(late, GT)


def test_states_outside_support_are_nan():
    traj = traj_from([7.0])
    traj.append(100.0, TargetState(1, 1, 0), 0.0)
    report = evaluate(traj, GT)
    assert np.isnan(report.per_state[1])
    assert report.summary["n"] == 1
    assert report.to_dict()["endpoint_error_m"] is None


@settings(max_examples=50)
@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=2, max_size=40))
def test_summary_matches_statistics_module(values):
    s = summarize(values)
    assert s["mean"] == pytest.approx(statistics.fmean(values), abs=1e-12)
    assert s["std"] == pytest.approx(statistics.stdev(values), abs=1e-9)
    assert s["min"] == min(values) and s["max"] == max(values)


def test_summary_drops_nonfinite_and_handles_empty():
    assert summarize([1.0, float("nan"), 3.0])["n"] == 2
    assert summarize([]) == {"n": 0, "mean": None, "std": None, "min": None, "max": None}


def test_gt_resampling_invariance():
    # a 1 m/s walk resampled from 100 Hz to 50 Hz moves errors by well under 1 mm
    coarse = GroundTruthTrace(GT.times[::2], GT.positions[::2])
    times = np.linspace(6.6, 8.4, 37)
    traj = Trajectory()
    for t in times:
        traj.append(t, TargetState(2.0, 0.5, 0.0), 0.0)
    fine_err = evaluate(traj, GT).per_state
    coarse_err = evaluate(traj, coarse).per_state
    assert np.max(np.abs(fine_err - coarse_err)) < 1e-3


def test_time_unit_symmetry():
    # rescaling every time stamp by the same factor leaves the errors unchanged
    traj = traj_from(STEP_TIMES, (0.05, -0.02))
    scaled_gt = GroundTruthTrace(GT.times * 1000.0, GT.positions)
    scaled = Trajectory()
    for t, s, r in zip(traj.times, traj.states, traj.residuals):
        scaled.append(t * 1000.0, s, r)
    np.testing.assert_allclose(evaluate(scaled, scaled_gt).per_state,
                               evaluate(traj, GT).per_state, atol=1e-12)
