"""Plantar-pressure processing for a pair of 45-sensor insoles.

Sensor ``i`` (0-based) sits at row ``i // 5`` and column ``i % 5`` of the
9x5 grid; row 0 is the toe row.  Pressures are in units of one sensor's
full-scale reading.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import FeatureNotFound, NoMotionDetected, NoStepsFound

N_ROWS = 9
N_COLS = 5
N_SENSORS = N_ROWS * N_COLS

DEFAULT_ROW_Y = (0.95, 0.85, 0.74, 0.62, 0.50, 0.38, 0.26, 0.15, 0.05)


class Foot(str, enum.Enum):
    LEFT = "L"
    RIGHT = "R"

    @property
    def other(self) -> "Foot":
        return Foot.RIGHT if self is Foot.LEFT else Foot.LEFT


@dataclass(frozen=True)
class PressureFrame:
    timestamp: float
    foot: Foot
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if p.size != N_SENSORS:
            raise ValueError(f"pressure frame needs {N_SENSORS} readings, got {p.size}")
        if np.any(p < 0):
            raise ValueError("pressure readings must be non-negative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "foot", Foot(self.foot))


@dataclass(frozen=True)
class PressureStream:
    times: np.ndarray
    p: np.ndarray
    foot: Foot

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(times.size, N_SENSORS)
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("pressure timestamps must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "foot", Foot(self.foot))

    def __len__(self):
        return self.times.size

    def __getitem__(self, i):
        return PressureFrame(float(self.times[i]), self.foot, self.p[i])

    @classmethod
    def from_frames(cls, frames, foot=None):
        frames = list(frames)
        if not frames:
            return cls(np.empty(0), np.empty((0, N_SENSORS)), foot or Foot.LEFT)
        return cls(np.array([f.timestamp for f in frames]),
                   np.stack([f.p for f in frames]), frames[0].foot)

    @property
    def period(self) -> float:
        return float(np.median(np.diff(self.times))) if len(self) > 1 else 0.0

    def total(self):
        return self.p.sum(axis=1)

    def toe_row(self):
        return self.p[:, :N_COLS].sum(axis=1)

    def shifted(self, offset: float) -> "PressureStream":
        return PressureStream(self.times + offset, self.p, self.foot)


@dataclass(frozen=True)
class SensorLayout:
    """Longitudinal sensor coordinates, 0 at the heel and 1 at the toe."""

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if y.size != N_SENSORS:
            raise ValueError(f"layout needs {N_SENSORS} coordinates")
        grid = y.reshape(N_ROWS, N_COLS)
        # every sensor of row r must lie in front of every sensor of row r+1
        if np.any(grid[:-1].min(axis=1) <= grid[1:].max(axis=1)):
            raise ValueError("layout rows must be strictly ordered toe (row 1) to heel")
        object.__setattr__(self, "y", y)

    @classmethod
    def default(cls) -> "SensorLayout":
        return cls(np.repeat(DEFAULT_ROW_Y, N_COLS))

    @property
    def row_y(self):
        return self.y.reshape(N_ROWS, N_COLS).mean(axis=1)


@dataclass(frozen=True)
class StepEvent:
    t_start: float
    t_end: float
    foot: Foot
    stride: float | None = None
    speed: float | None = None

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("step must end after it starts")
        object.__setattr__(self, "foot", Foot(self.foot))

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class InsoleConfig:
    full_scale: float = 1.0
    contact_fraction: float = 0.01
    forefoot_cop: float = 0.6
    hold: float = 3.0
    hold_fraction: float = 0.8
    unload_fraction: float = 0.1
    toe_off_fraction: float = 0.05
    airborne_window: float = 0.15
    stride: float = 0.5
    resample_rate: float = 50.0

    @property
    def contact_threshold(self) -> float:
        return self.contact_fraction * self.full_scale * N_SENSORS

    @property
    def toe_threshold(self) -> float:
        return self.toe_off_fraction * self.full_scale * N_COLS


def cop_y(frame: PressureFrame, layout: SensorLayout, cfg: InsoleConfig | None = None):
    """Longitudinal centre of pressure, or None while the foot is airborne."""
    cfg = cfg or InsoleConfig()
    total = float(frame.p.sum())
    if total <= cfg.contact_threshold:
        return None
    return float(frame.p @ layout.y / total)


def cop_series(stream: PressureStream, layout: SensorLayout, cfg: InsoleConfig | None = None):
    """Vectorised :func:`cop_y`; NaN marks airborne samples."""
    cfg = cfg or InsoleConfig()
    total = stream.total()
    out = np.full(total.shape, np.nan)
    ok = total > cfg.contact_threshold
    out[ok] = stream.p[ok] @ layout.y / total[ok]
    return out


def _crossing_time(times, values, i, threshold):
    """Linear-interpolated instant between samples i-1 and i where values cross."""
    if i == 0 or not np.isfinite(values[i - 1]):
        return float(times[i])
    v0, v1 = values[i - 1], values[i]
    if v1 == v0:
        return float(times[i])
    w = (threshold - v0) / (v1 - v0)
    return float(times[i - 1] + np.clip(w, 0.0, 1.0) * (times[i] - times[i - 1]))


def _runs(mask):
    """(start, stop) index pairs of consecutive True runs."""
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    return list(zip(edges[::2], edges[1::2]))


def detect_sync_feature(stream: PressureStream, layout: SensorLayout,
                        cfg: InsoleConfig | None = None) -> float:
    """Rise instant of the heel-lift calibration hold.

    The hold is the first stretch where the CoP stays on the forefoot for at
    least ``hold_fraction * hold`` seconds.
    """
    cfg = cfg or InsoleConfig()
    if len(stream) < 2 or stream.times[-1] - stream.times[0] <= cfg.hold:
        raise FeatureNotFound("pressure stream shorter than the calibration hold")
    cop = cop_series(stream, layout, cfg)
    fore = np.nan_to_num(cop, nan=-1.0) > cfg.forefoot_cop
    dt = stream.period
    for start, stop in _runs(fore):
        duration = stream.times[stop - 1] - stream.times[start] + dt
        if duration >= cfg.hold * cfg.hold_fraction:
            return _crossing_time(stream.times, cop, start, cfg.forefoot_cop)
    raise FeatureNotFound(f"no forefoot hold of {cfg.hold * cfg.hold_fraction:.2f} s found")


def align_streams(left: PressureStream, right: PressureStream, layout: SensorLayout,
                  cfg: InsoleConfig | None = None) -> float:
    """Clock offset to add to the right insole's timestamps."""
    cfg = cfg or InsoleConfig()
    return detect_sync_feature(left, layout, cfg) - detect_sync_feature(right, layout, cfg)


def resample(stream: PressureStream, grid) -> PressureStream:
    grid = np.asarray(grid, dtype=float)
    p = np.column_stack([np.interp(grid, stream.times, stream.p[:, i])
                         for i in range(N_SENSORS)])
    return PressureStream(grid, p, stream.foot)


def synchronize(left: PressureStream, right: PressureStream, layout: SensorLayout,
                cfg: InsoleConfig | None = None):
    """Align both insoles and put them on one common grid.

    Returns ``(left, right, offset)`` with both streams sampled at
    ``cfg.resample_rate`` over the overlap of their aligned supports.
    """
    cfg = cfg or InsoleConfig()
    offset = align_streams(left, right, layout, cfg)
    right = right.shifted(offset)
    dt = 1.0 / cfg.resample_rate
    t0 = max(left.times[0], right.times[0])
    t1 = min(left.times[-1], right.times[-1])
    grid = np.arange(np.ceil(t0 / dt - 1e-9), np.floor(t1 / dt + 1e-9) + 1) * dt
    return resample(left, grid), resample(right, grid), offset


def _unload_time(stream: PressureStream, hint: float, cfg: InsoleConfig):
    total = stream.total()
    before = (stream.times >= hint - 1.0) & (stream.times <= hint)
    if not before.any():
        before = (stream.times >= hint) & (stream.times <= hint + 1.0)
    if not before.any():
        return None
    standing = float(total[before].mean())
    after = np.flatnonzero((stream.times > hint) & (total < cfg.unload_fraction * standing))
    if after.size == 0:
        return None
    return float(stream.times[after[0]])


def detect_first_moving_foot(left: PressureStream, right: PressureStream,
                             t_walk_start_hint: float, cfg: InsoleConfig | None = None) -> Foot:
    """Foot whose total load first collapses after the hint time.

    Ties within one sample period go to the left foot.
    """
    cfg = cfg or InsoleConfig()
    t_left = _unload_time(left, t_walk_start_hint, cfg)
    t_right = _unload_time(right, t_walk_start_hint, cfg)
    if t_left is None and t_right is None:
        raise NoMotionDetected("neither foot unloads after the hint time")
    if t_right is None:
        return Foot.LEFT
    if t_left is None:
        return Foot.RIGHT
    tie = max(left.period, right.period)
    return Foot.LEFT if t_left <= t_right + 0.5 * tie else Foot.RIGHT


def toe_off_times(stream: PressureStream, cfg: InsoleConfig | None = None):
    """Instants where the toe row unloads and the foot then leaves the ground."""
    cfg = cfg or InsoleConfig()
    toe = stream.toe_row()
    total = stream.total()
    thr = cfg.toe_threshold
    idx = np.flatnonzero((toe[:-1] >= thr) & (toe[1:] < thr)) + 1
    out = []
    for i in idx:
        t = _crossing_time(stream.times, toe, i, thr)
        # placing the forefoot back down also drops the toe row; require lift-off
        soon = (stream.times >= stream.times[i - 1]) & (stream.times <= t + cfg.airborne_window)
        if np.any(total[soon] <= cfg.contact_threshold):
            out.append(t)
    return np.array(out)


def segment_steps(left: PressureStream, right: PressureStream, layout: SensorLayout | None = None,
                  cfg: InsoleConfig | None = None):
    """Steps between consecutive toe-offs of alternating feet.

    ``layout`` is accepted for interface symmetry; toe-off detection only
    needs the row order.  Returned events carry no stride or speed yet.
    """
    cfg = cfg or InsoleConfig()
    events = [(t, Foot.LEFT) for t in toe_off_times(left, cfg)]
    events += [(t, Foot.RIGHT) for t in toe_off_times(right, cfg)]
    events.sort(key=lambda e: e[0])
    steps = []
    for (t0, f0), (t1, f1) in zip(events, events[1:]):
        if f0 != f1 and t1 > t0:
            steps.append(StepEvent(t_start=t0, t_end=t1, foot=f0))
    if not steps:
        raise NoStepsFound("no alternating toe-off pairs in the pressure streams")
    return steps


def attach_stride(steps, stride: float):
    """Give every step the fixed stride and the implied walking speed."""
    if stride <= 0:
        raise ValueError("stride must be positive")
    return [replace(s, stride=stride, speed=stride / s.duration) for s in steps]
