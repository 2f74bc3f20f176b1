"""Position-error evaluation against ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoOverlap


def summarize(values) -> dict:
    """Mean, unbiased std (None below two samples), min and max."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"n": 0, "mean": None, "std": None, "min": None, "max": None}
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "std": float(v.std(ddof=1)) if v.size > 1 else None,
        "min": float(v.min()),
        "max": float(v.max()),
    }


@dataclass(frozen=True)
class ErrorReport:
    times: np.ndarray
    per_state: np.ndarray
    gt_positions: np.ndarray

    @property
    def initial_error(self) -> float:
        return float(self.per_state[0])

    @property
    def step_errors(self) -> np.ndarray:
        return self.per_state[1:]

    @property
    def endpoint_error(self) -> float:
        return float(self.per_state[-1])

    @property
    def summary(self) -> dict:
        return summarize(self.per_state)

    def to_dict(self) -> dict:
        def clean(v):
            return [float(x) if np.isfinite(x) else None for x in v]

        return {
            "initial_error_m": clean([self.initial_error])[0],
            "step_errors_m": clean(self.step_errors),
            "endpoint_error_m": clean([self.endpoint_error])[0],
            "summary_m": self.summary,
        }


def evaluate(traj, gt) -> ErrorReport:
    """Distance from each estimated state to the interpolated ground truth.

    States outside the ground-truth time support get NaN and are left out
    of the summary; if none is inside, :class:`NoOverlap` is raised.
    """
    times = np.asarray(traj.times, dtype=float)
    est = np.asarray(traj.positions, dtype=float).reshape(-1, 2)
    if times.size == 0:
        raise NoOverlap("trajectory has no states")
    eps = 1e-9
    inside = (times >= gt.times[0] - eps) & (times <= gt.times[-1] + eps)
    if not inside.any():
        raise NoOverlap(
            f"trajectory [{times[0]:.3f}, {times[-1]:.3f}] s does not overlap ground truth "
            f"[{gt.times[0]:.3f}, {gt.times[-1]:.3f}] s"
        )
    ref = gt.position_at(times)
    err = np.hypot(est[:, 0] - ref[:, 0], est[:, 1] - ref[:, 1])
    err = np.where(inside, err, np.nan)
    return ErrorReport(times, err, ref)
