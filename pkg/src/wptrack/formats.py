"""On-disk formats: CSI, pressure, ground truth, steps, trajectories, reports.

All traces are CSV with one header row (comment lines starting with ``#``
may precede it).  A path ending in ``.gz`` is read and written through
gzip; written archives carry no timestamp so identical data gives
identical bytes.
"""

from __future__ import annotations

import csv
import gzip
import io
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .csi import N_ANTENNAS, N_SUBCARRIERS, CsiStream
from .errors import ParseError, SchemaError
from .fusion import Trajectory
from .geometry import Scene, TargetState
from .insole import N_COLS, N_ROWS, N_SENSORS, Foot, PressureStream, SensorLayout, StepEvent

CSI_COLUMNS = (["ts_s"]
               + [f"a{a}s{s}_re" for a in range(1, N_ANTENNAS + 1) for s in range(1, N_SUBCARRIERS + 1)]
               + [f"a{a}s{s}_im" for a in range(1, N_ANTENNAS + 1) for s in range(1, N_SUBCARRIERS + 1)])
PRESSURE_COLUMNS = ["ts_s", "foot"] + [f"p{i:02d}" for i in range(1, N_SENSORS + 1)]
GT_COLUMNS = ["ts_s", "x_m", "y_m"]
STEP_COLUMNS = ["t_start_s", "t_end_s", "foot"]
LAYOUT_COLUMNS = ["sensor", "row", "col", "y"]

PRESSURE_NOTE = ("# row 1 is the toe row: sensor pNN sits at row (NN-1)//5+1 and "
                 "column (NN-1)%5+1, rows run toe (1) to heel (9)")

TRAJECTORY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["scene", "config_hash", "states", "metrics"],
    "additionalProperties": False,
    "properties": {
        "scene": {
            "type": "object",
            "required": ["tx_pos", "rx_pos", "carrier_freq", "antenna_spacing", "area"],
            "properties": {
                "tx_pos": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "rx_pos": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "carrier_freq": {"type": "number", "exclusiveMinimum": 0},
                "antenna_spacing": {"type": "number", "exclusiveMinimum": 0},
                "area": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                "array_axis": {"type": "number"},
                "origin": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "rotation": {"type": "number"},
            },
        },
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "states": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["t", "x", "y", "phi", "residual"],
                "additionalProperties": False,
                "properties": {
                    "t": {"type": "number"},
                    "x": {"type": "number"},
                    "y": {"type": "number"},
                    "phi": {"type": "number", "minimum": -3.141592653589794, "maximum": 3.141592653589794},
                    "residual": {"type": ["number", "null"], "minimum": 0},
                },
            },
        },
        "metrics": {"type": "object"},
    },
}


@dataclass(frozen=True)
class GroundTruthTrace:
    """Ground-truth positions as read back from disk."""

    times: np.ndarray
    positions: np.ndarray

    def position_at(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.positions[:, 0]),
                         np.interp(t, self.times, self.positions[:, 1])], axis=-1)


# ---------------------------------------------------------------- helpers


def _open_text(path, mode: str):
    path = Path(path)
    if path.suffix == ".gz":
        if "w" in mode:
            raw = open(path, "wb")
            gz = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
            return _Closing(io.TextIOWrapper(gz, encoding="utf-8", newline=""), raw)
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, mode, encoding="utf-8", newline="")


class _Closing:
    """Text wrapper that also closes the underlying raw file."""

    def __init__(self, wrapper, raw):
        self._wrapper, self._raw = wrapper, raw

    def __getattr__(self, name):
        return getattr(self._wrapper, name)

    def __enter__(self):
        return self._wrapper

    def __exit__(self, *exc):
        self._wrapper.close()
        self._raw.close()


def _read_lines(path):
    """(header, [(line_no, text), ...]) with comment and blank lines dropped."""
    try:
        with _open_text(path, "r") as fh:
            lines = fh.read().splitlines()
    except (OSError, EOFError, UnicodeDecodeError) as exc:
        raise ParseError(f"cannot read file: {exc}", path) from exc
    header, body = None, []
    for no, text in enumerate(lines, start=1):
        if not text.strip() or text.lstrip().startswith("#"):
            continue
        if header is None:
            header = (no, text)
        else:
            body.append((no, text))
    if header is None:
        raise SchemaError("missing header row", path)
    return header, body


def _check_header(path, header, expected):
    no, text = header
    cols = [c.strip() for c in text.split(",")]
    if cols != list(expected):
        missing = len(expected) - len(cols)
        detail = f"{len(cols)} columns, expected {len(expected)}" if missing else "unexpected column names"
        raise SchemaError(f"bad header: {detail}", path, no)


def _parse_numeric(path, body, n_cols):
    """Float matrix from CSV lines, with the offending line on failure."""
    if not body:
        return np.empty((0, n_cols))
    text = "\n".join(t for _, t in body)
    try:
        data = np.loadtxt(io.StringIO(text), delimiter=",", ndmin=2)
        if data.shape[1] == n_cols:
            return data
    except ValueError:
        pass
    out = np.empty((len(body), n_cols))
    for i, (no, line) in enumerate(body):
        fields = line.split(",")
        if len(fields) != n_cols:
            raise SchemaError(f"{len(fields)} columns, expected {n_cols}", path, no)
        try:
            out[i] = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(f"not a number: {exc}", path, no) from exc
    return out


def _check_times(path, times, body):
    if not np.all(np.isfinite(times)):
        raise ParseError("non-finite timestamp", path, body[int(np.flatnonzero(~np.isfinite(times))[0])][0])
    bad = np.flatnonzero(np.diff(times) <= 0)
    if bad.size:
        raise SchemaError("timestamps must be strictly increasing", path, body[bad[0] + 1][0])


# ---------------------------------------------------------------- CSI


def write_csi(path, stream: CsiStream):
    n = len(stream)
    flat = stream.h.reshape(n, N_ANTENNAS * N_SUBCARRIERS)
    data = np.column_stack([stream.times, flat.real, flat.imag]) if n else np.empty((0, len(CSI_COLUMNS)))
    with _open_text(path, "w") as fh:
        fh.write(",".join(CSI_COLUMNS) + "\n")
        np.savetxt(fh, data, fmt="%.9g", delimiter=",")


def read_csi(path) -> CsiStream:
    header, body = _read_lines(path)
    _check_header(path, header, CSI_COLUMNS)
    data = _parse_numeric(path, body, len(CSI_COLUMNS))
    if data.size and not np.all(np.isfinite(data)):
        row = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0])
        raise ParseError("non-finite value", path, body[row][0])
    times = data[:, 0]
    _check_times(path, times, body)
    k = N_ANTENNAS * N_SUBCARRIERS
    h = (data[:, 1:1 + k] + 1j * data[:, 1 + k:]).reshape(-1, N_ANTENNAS, N_SUBCARRIERS)
    return CsiStream(times, h)


# ---------------------------------------------------------------- pressure


def write_pressure(path, stream: PressureStream):
    with _open_text(path, "w") as fh:
        fh.write(PRESSURE_NOTE + "\n")
        fh.write(",".join(PRESSURE_COLUMNS) + "\n")
        foot = Foot(stream.foot).value
        for t, row in zip(stream.times, stream.p):
            fh.write(f"{float(t)!r},{foot}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_pressure(path) -> PressureStream:
    header, body = _read_lines(path)
    _check_header(path, header, PRESSURE_COLUMNS)
    times = np.empty(len(body))
    p = np.empty((len(body), N_SENSORS))
    foot = None
    for i, (no, line) in enumerate(body):
        fields = next(csv.reader([line]))
        if len(fields) != len(PRESSURE_COLUMNS):
            raise SchemaError(f"{len(fields)} columns, expected {len(PRESSURE_COLUMNS)}", path, no)
        try:
            row_foot = Foot(fields[1].strip())
        except ValueError:
            raise ParseError(f"foot must be L or R, got {fields[1]!r}", path, no) from None
        if foot is None:
            foot = row_foot
        elif row_foot != foot:
            raise SchemaError("one pressure file must hold a single foot", path, no)
        try:
            times[i] = float(fields[0])
            p[i] = [float(v) for v in fields[2:]]
        except ValueError as exc:
            raise ParseError(f"not a number: {exc}", path, no) from exc
        if not np.all(np.isfinite(p[i])) or not np.isfinite(times[i]):
            raise ParseError("non-finite value", path, no)
        if np.any(p[i] < 0):
            raise SchemaError("pressure readings must be non-negative", path, no)
    _check_times(path, times, body)
    return PressureStream(times, p, foot or Foot.LEFT)


# ---------------------------------------------------------------- ground truth and steps


def write_ground_truth(path, gt):
    data = np.column_stack([gt.times, gt.positions])
    with _open_text(path, "w") as fh:
        fh.write(",".join(GT_COLUMNS) + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def read_ground_truth(path) -> GroundTruthTrace:
    header, body = _read_lines(path)
    _check_header(path, header, GT_COLUMNS)
    data = _parse_numeric(path, body, len(GT_COLUMNS))
    if data.size and not np.all(np.isfinite(data)):
        row = int(np.flatnonzero(~np.all(np.isfinite(data), axis=1))[0])
        raise ParseError("non-finite value", path, body[row][0])
    _check_times(path, data[:, 0], body)
    return GroundTruthTrace(data[:, 0].copy(), data[:, 1:].copy())


def write_steps(path, source):
    """Write step events; ``source`` is a GroundTruth or a list of StepEvent."""
    steps = source.steps() if hasattr(source, "steps") else list(source)
    with _open_text(path, "w") as fh:
        fh.write(",".join(STEP_COLUMNS) + "\n")
        for s in steps:
            fh.write(f"{float(s.t_start)!r},{float(s.t_end)!r},{Foot(s.foot).value}\n")


def read_steps(path) -> list[StepEvent]:
    header, body = _read_lines(path)
    _check_header(path, header, STEP_COLUMNS)
    steps = []
    for no, line in body:
        fields = line.split(",")
        if len(fields) != len(STEP_COLUMNS):
            raise SchemaError(f"{len(fields)} columns, expected {len(STEP_COLUMNS)}", path, no)
        try:
            steps.append(StepEvent(float(fields[0]), float(fields[1]), Foot(fields[2].strip())))
        except ValueError as exc:
            raise ParseError(str(exc), path, no) from exc
    return steps


# ---------------------------------------------------------------- layout


def write_layout(path, layout: SensorLayout):
    with _open_text(path, "w") as fh:
        fh.write(PRESSURE_NOTE + "\n")
        fh.write(",".join(LAYOUT_COLUMNS) + "\n")
        for i, y in enumerate(layout.y):
            fh.write(f"p{i + 1:02d},{i // N_COLS + 1},{i % N_COLS + 1},{float(y)!r}\n")


def read_layout(path) -> SensorLayout:
    header, body = _read_lines(path)
    _check_header(path, header, LAYOUT_COLUMNS)
    if len(body) != N_SENSORS:
        raise SchemaError(f"layout needs {N_SENSORS} sensors, got {len(body)}", path)
    y = np.empty(N_SENSORS)
    for i, (no, line) in enumerate(body):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != len(LAYOUT_COLUMNS):
            raise SchemaError(f"{len(fields)} columns, expected {len(LAYOUT_COLUMNS)}", path, no)
        expected = [f"p{i + 1:02d}", str(i // N_COLS + 1), str(i % N_COLS + 1)]
        if fields[:3] != expected:
            raise SchemaError(f"expected sensor {expected[0]} at row {expected[1]} "
                              f"col {expected[2]}", path, no)
        try:
            y[i] = float(fields[3])
        except ValueError as exc:
            raise ParseError(f"not a number: {exc}", path, no) from exc
    try:
        return SensorLayout(y)
    except ValueError as exc:
        raise SchemaError(str(exc), path) from exc


# ---------------------------------------------------------------- trajectories and reports


def scene_to_dict(scene: Scene) -> dict:
    return {
        "tx_pos": list(scene.tx_pos), "rx_pos": list(scene.rx_pos),
        "carrier_freq": scene.carrier_freq, "antenna_spacing": scene.antenna_spacing,
        "area": list(scene.area), "array_axis": scene.array_axis,
        "origin": list(scene.origin), "rotation": scene.rotation,
    }


def scene_from_dict(d: dict) -> Scene:
    return Scene(tx_pos=tuple(d["tx_pos"]), rx_pos=tuple(d["rx_pos"]),
                 carrier_freq=d["carrier_freq"], antenna_spacing=d["antenna_spacing"],
                 area=tuple(d["area"]), array_axis=d.get("array_axis", np.pi / 2),
                 origin=tuple(d.get("origin", (0.0, 0.0))), rotation=d.get("rotation", 0.0))


def _finite_or_none(v):
    v = float(v)
    return v if np.isfinite(v) else None


def trajectory_to_dict(traj: Trajectory, scene: Scene, config_hash: str, metrics=None) -> dict:
    doc = {
        "scene": scene_to_dict(scene),
        "config_hash": config_hash,
        "states": [{"t": float(t), "x": float(s.x), "y": float(s.y), "phi": float(s.phi),
                    "residual": _finite_or_none(r)}
                   for t, s, r in zip(traj.times, traj.states, traj.residuals)],
        "metrics": dict(metrics or {}),
    }
    jsonschema.validate(doc, TRAJECTORY_SCHEMA)
    return doc


def write_trajectory(path, traj: Trajectory, scene: Scene, config_hash: str, metrics=None):
    doc = trajectory_to_dict(traj, scene, config_hash, metrics)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return doc


def read_trajectory(path):
    """Return ``(trajectory, scene, document)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from exc
    try:
        jsonschema.validate(doc, TRAJECTORY_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"trajectory schema violation: {exc.message}", path) from exc
    traj = Trajectory()
    for s in doc["states"]:
        res = s["residual"] if s["residual"] is not None else float("inf")
        try:
            traj.append(s["t"], TargetState(s["x"], s["y"], s["phi"]), res)
        except ValueError as exc:
            raise SchemaError(str(exc), path) from exc
    return traj, scene_from_dict(doc["scene"]), doc


def write_json(path, doc: dict):
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def write_plot_data(path, traj: Trajectory, errors=None):
    """Points (and per-state errors when known) for external plotting."""
    with _open_text(path, "w") as fh:
        fh.write("t_s,x_m,y_m,phi_rad,residual,gt_x_m,gt_y_m,error_m\n")
        for i, (t, s, r) in enumerate(zip(traj.times, traj.states, traj.residuals)):
            if errors is not None:
                gx, gy = errors.gt_positions[i]
                tail = f"{float(gx)!r},{float(gy)!r},{float(errors.per_state[i])!r}"
            else:
                tail = ",,"
            fh.write(f"{float(t)!r},{float(s.x)!r},{float(s.y)!r},{float(s.phi)!r},{float(r)!r},{tail}\n")
