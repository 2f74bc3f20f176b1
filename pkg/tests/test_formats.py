import gzip
import json

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wptrack import formats
from wptrack.csi import CsiStream
from wptrack.errors import ParseError, SchemaError
from wptrack.fusion import Trajectory
from wptrack.geometry import Scene, TargetState
from wptrack.insole import Foot, PressureStream, SensorLayout, StepEvent
from wptrack.simulator import ScenarioConfig, gen_trajectory

SCENE = Scene()
HASH = "0" * 64


def nine_digits(x):
    return np.vectorize(lambda v: float(f"{v:.9g}"))(x)


def random_stream(n, seed=0):
    rng = np.random.default_rng(seed)
    t = np.cumsum(rng.uniform(5e-4, 2e-3, n))
    h = rng.standard_normal((n, 3, 30)) + 1j * rng.standard_normal((n, 3, 30))
    return CsiStream(t, h)


def sample_trajectory():
    traj = Trajectory()
    traj.append(6.5, TargetState(1.0, 0.6, 0.64), 0.0)
    traj.append(7.0, TargetState(1.4, 0.9, 0.64), 0.012)
    traj.append(7.5, TargetState(1.8, 1.2, 0.64), float("inf"))
    return traj


# ---------------------------------------------------------------- CSI

@pytest.mark.parametrize("name", ["csi.csv", "csi.csv.gz"])
def test_csi_roundtrip_nine_digits(tmp_path, name):
    stream = random_stream(1000)
    formats.write_csi(tmp_path / name, stream)
    back = formats.read_csi(tmp_path / name)
    np.testing.assert_array_equal(back.times, nine_digits(stream.times))
    np.testing.assert_array_equal(back.h.real, nine_digits(stream.h.real))
    np.testing.assert_array_equal(back.h.imag, nine_digits(stream.h.imag))


def test_csi_column_order_is_antenna_major(tmp_path):
    h = np.zeros((1, 3, 30), complex)
    h[0, 1, 4] = 2.0 + 3.0j
    formats.write_csi(tmp_path / "c.csv", CsiStream([0.0], h))
    header, row = (tmp_path / "c.csv").read_text().splitlines()
    cols = header.split(",")
    vals = dict(zip(cols, row.split(",")))
    assert len(cols) == 181
    assert float(vals["a2s5_re"]) == 2.0 and float(vals["a2s5_im"]) == 3.0
    assert cols[1] == "a1s1_re" and cols[91] == "a1s1_im"


def test_csi_179_data_columns_rejected(tmp_path):
    formats.write_csi(tmp_path / "c.csv", random_stream(3))
    lines = (tmp_path / "c.csv").read_text().splitlines()
    cut = [",".join(line.split(",")[:-1]) for line in lines]
    (tmp_path / "bad.csv").write_text("\n".join(cut) + "\n")
    with pytest.raises(SchemaError):
        formats.read_csi(tmp_path / "bad.csv")


def test_csi_short_row_reports_line(tmp_path):
    formats.write_csi(tmp_path / "c.csv", random_stream(3))
    lines = (tmp_path / "c.csv").read_text().splitlines()
    lines[2] = ",".join(lines[2].split(",")[:-1])
    (tmp_path / "bad.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError) as info:
        formats.read_csi(tmp_path / "bad.csv")
    assert info.value.line == 3


def test_csi_header_only_is_empty_stream(tmp_path):
    formats.write_csi(tmp_path / "c.csv", CsiStream(np.empty(0), np.empty((0, 3, 30))))
    back = formats.read_csi(tmp_path / "c.csv")
    assert len(back) == 0


def test_csi_text_value_is_parse_error(tmp_path):
    formats.write_csi(tmp_path / "c.csv", random_stream(2))
    text = (tmp_path / "c.csv").read_text().splitlines()
    fields = text[1].split(",")
    fields[5] = "abc"
    text[1] = ",".join(fields)
    (tmp_path / "bad.csv").write_text("\n".join(text) + "\n")
    with pytest.raises(ParseError) as info:
        formats.read_csi(tmp_path / "bad.csv")
    assert info.value.line == 2


def test_gzip_bytes_deterministic(tmp_path):
    stream = random_stream(50)
    formats.write_csi(tmp_path / "a.csv.gz", stream)
    formats.write_csi(tmp_path / "b.csv.gz", stream)
    assert (tmp_path / "a.csv.gz").read_bytes() == (tmp_path / "b.csv.gz").read_bytes()
    assert gzip.decompress((tmp_path / "a.csv.gz").read_bytes()).startswith(b"ts_s,")


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError, match="cannot read"):
        formats.read_csi(tmp_path / "nope.csv")


# ---------------------------------------------------------------- pressure

@settings(max_examples=25, deadline=None)
@given(st.integers(1, 30), st.sampled_from(["L", "R"]), st.integers(0, 2 ** 32 - 1))
def test_pressure_roundtrip_exact(tmp_path_factory, n, foot, seed):
    rng = np.random.default_rng(seed)
    stream = PressureStream(np.cumsum(rng.uniform(0.01, 0.03, n)),
                            rng.uniform(0, 50, (n, 45)), Foot(foot))
    path = tmp_path_factory.mktemp("p") / "p.csv"
    formats.write_pressure(path, stream)
    back = formats.read_pressure(path)
    np.testing.assert_array_equal(back.times, stream.times)
    np.testing.assert_array_equal(back.p, stream.p)
    assert back.foot is stream.foot


def test_pressure_header_documents_row_order(tmp_path):
    formats.write_pressure(tmp_path / "p.csv", PressureStream([0.0], np.ones((1, 45)), Foot.LEFT))
    first = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert first.startswith("#") and "toe" in first


def _pressure_text(tmp_path, foot="L", value="1.0"):
    formats.write_pressure(tmp_path / "p.csv", PressureStream([0.0, 0.02], np.ones((2, 45)), Foot.LEFT))
    lines = (tmp_path / "p.csv").read_text().splitlines()
    fields = lines[3].split(",")
    fields[1], fields[7] = foot, value
    lines[3] = ",".join(fields)
    (tmp_path / "bad.csv").write_text("\n".join(lines) + "\n")
    return tmp_path / "bad.csv"


def test_pressure_unknown_foot(tmp_path):
    with pytest.raises(ParseError) as info:
        formats.read_pressure(_pressure_text(tmp_path, foot="X"))
    assert info.value.line == 4


def test_pressure_negative_value(tmp_path):
    with pytest.raises(SchemaError):
        formats.read_pressure(_pressure_text(tmp_path, value="-0.5"))


def test_pressure_mixed_feet(tmp_path):
    with pytest.raises(SchemaError):
        formats.read_pressure(_pressure_text(tmp_path, foot="R"))


# ---------------------------------------------------------------- ground truth, steps, layout

def test_ground_truth_roundtrip_exact(tmp_path):
    gt = gen_trajectory(ScenarioConfig(), SCENE)
    formats.write_ground_truth(tmp_path / "gt.csv", gt)
    back = formats.read_ground_truth(tmp_path / "gt.csv")
    np.testing.assert_array_equal(back.times, gt.times)
    np.testing.assert_array_equal(back.positions, gt.positions)


def test_ground_truth_nonmonotone_times(tmp_path):
    (tmp_path / "gt.csv").write_text("ts_s,x_m,y_m\n0.0,1,1\n0.02,1,1\n0.01,1,1\n")
    with pytest.raises(SchemaError) as info:
        formats.read_ground_truth(tmp_path / "gt.csv")
    assert info.value.line == 4


def test_ground_truth_bad_header(tmp_path):
    (tmp_path / "gt.csv").write_text("t,x,y\n0.0,1,1\n")
    with pytest.raises(SchemaError):
        formats.read_ground_truth(tmp_path / "gt.csv")


def test_steps_roundtrip(tmp_path):
    steps = [StepEvent(6.5, 7.0, Foot.LEFT), StepEvent(7.0, 7.5, Foot.RIGHT)]
    formats.write_steps(tmp_path / "s.csv", steps)
    back = formats.read_steps(tmp_path / "s.csv")
    assert [(s.t_start, s.t_end, s.foot) for s in back] == \
        [(s.t_start, s.t_end, s.foot) for s in steps]


def test_layout_roundtrip_and_order_check(tmp_path):
    layout = SensorLayout.default()
    formats.write_layout(tmp_path / "l.csv", layout)
    np.testing.assert_array_equal(formats.read_layout(tmp_path / "l.csv").y, layout.y)
    lines = (tmp_path / "l.csv").read_text().splitlines()
    lines[2] = lines[2].replace("p01", "p02")
    (tmp_path / "bad.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError):
        formats.read_layout(tmp_path / "bad.csv")


# ---------------------------------------------------------------- trajectories

def test_trajectory_roundtrip_and_schema(tmp_path):
    traj = sample_trajectory()
    doc = formats.write_trajectory(tmp_path / "t.json", traj, SCENE, HASH, {"n_steps": 2})
    jsonschema.validate(json.loads((tmp_path / "t.json").read_text()), formats.TRAJECTORY_SCHEMA)
    assert doc["states"][2]["residual"] is None
    back, scene, _ = formats.read_trajectory(tmp_path / "t.json")
    assert back.times == traj.times
    assert back.states == traj.states
    assert back.residuals == traj.residuals
    assert scene == SCENE


def test_trajectory_schema_violation(tmp_path):
    formats.write_trajectory(tmp_path / "t.json", sample_trajectory(), SCENE, HASH)
    doc = json.loads((tmp_path / "t.json").read_text())
    del doc["states"][0]["phi"]
    (tmp_path / "t.json").write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        formats.read_trajectory(tmp_path / "t.json")


def test_trajectory_bad_hash_rejected_on_write(tmp_path):
    with pytest.raises(jsonschema.ValidationError):
        formats.write_trajectory(tmp_path / "t.json", sample_trajectory(), SCENE, "xyz")


def test_trajectory_invalid_json(tmp_path):
    (tmp_path / "t.json").write_text("{\n  \"scene\": \n")
    with pytest.raises(ParseError):
        formats.read_trajectory(tmp_path / "t.json")


def test_plot_data_columns(tmp_path):
    formats.write_plot_data(tmp_path / "p.csv", sample_trajectory())
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "t_s,x_m,y_m,phi_rad,residual,gt_x_m,gt_y_m,error_m"
    assert len(lines) == 4 and lines[1].endswith(",,")
