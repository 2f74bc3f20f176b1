"""CSI and insole fusion: per-step measurements, objective, solver, tracker.

Each step contributes three normalised terms evaluated at the walker's
state at the start of the step and the state one stride later:

* ellipse term: the propagated point must sit on the confocal ellipse whose
  path length is the current geometric length plus the measured change;
* line term: points along the step must sit on the rays leaving Rx at the
  bearings measured there (signed offsets averaged over the step);
* ratio term: the step-averaged path-length rate over walking speed must
  match the measured one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import geometry as geo
from .csi import AoaSeries, DopplerSeries, integrate_path_change
from .errors import DegenerateEllipse, InsufficientData, NoFeasibleState, TrackLost
from .geometry import Scene, TargetState
from .insole import StepEvent

RATIO_BOUND = 2.0


@dataclass(frozen=True)
class StepMeasurement:
    step: StepEvent
    delta_L: float
    v_ratio: float
    alpha_r_meas: float | None = None
    confidence: float = 1.0
    alpha_frac: float = 1.0
    # (fraction of the step, bearing) pairs spread over the step
    alpha_samples: tuple = ()

    def __post_init__(self):
        if not np.isfinite(self.delta_L):
            raise ValueError("delta_L must be finite")
        if self.step.stride is None:
            raise ValueError("step has no stride attached")
        object.__setattr__(self, "v_ratio",
                           float(np.clip(self.v_ratio, -RATIO_BOUND, RATIO_BOUND)))
        samples = tuple((float(f), float(a)) for f, a in self.alpha_samples)
        if not samples and self.alpha_r_meas is not None:
            samples = ((float(self.alpha_frac), float(self.alpha_r_meas)),)
        object.__setattr__(self, "alpha_samples", samples)

    @property
    def stride(self) -> float:
        return float(self.step.stride)

    @property
    def low_confidence(self) -> bool:
        return self.confidence < 0.5


@dataclass(frozen=True)
class FusionConfig:
    w_ellipse: float = 1.0
    w_line: float = 1.0
    w_ratio: float = 1.0
    sigma_path: float = 0.02
    sigma_ratio: float = 0.05
    sigma_line: float = 0.1
    grid_step: float = 0.1
    grid_heading_deg: float = 5.0
    refine_tol: float = 1e-5
    top_k: int = 5
    y_min: float = 0.05
    window_steps: int = 3
    track_heading_deg: float = 2.0
    oracle_step: float = 0.02
    oracle_heading_deg: float = 1.0
    lost_threshold: float | None = None
    ellipse_norm: str = "first_order"

    def __post_init__(self):
        w = (self.w_ellipse, self.w_line, self.w_ratio)
        if min(w) < 0 or max(w) <= 0:
            raise ValueError("weights must be non-negative with at least one positive")
        res = (self.grid_step, self.grid_heading_deg, self.track_heading_deg,
               self.oracle_step, self.oracle_heading_deg, self.refine_tol,
               self.sigma_path, self.sigma_ratio, self.sigma_line)
        if min(res) <= 0:
            raise ValueError("resolutions and noise scales must be positive")
        if self.ellipse_norm not in ("first_order", "vertex"):
            raise ValueError("ellipse_norm must be 'first_order' or 'vertex'")
        if self.window_steps < 2 or self.top_k < 1:
            raise ValueError("window_steps must be >= 2 and top_k >= 1")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def append(self, t: float, state: TargetState, residual: float):
        if self.times and t <= self.times[-1]:
            raise ValueError("trajectory timestamps must increase")
        self.times.append(float(t))
        self.states.append(state)
        self.residuals.append(float(residual))

    def __len__(self):
        return len(self.states)

    @property
    def positions(self):
        return np.array([[s.x, s.y] for s in self.states]).reshape(-1, 2)

    @property
    def headings(self):
        return np.array([s.phi for s in self.states])


@dataclass(frozen=True)
class OracleResult:
    state: TargetState
    residual: float
    ambiguity: tuple


def build_measurements(doppler: DopplerSeries, aoa: AoaSeries | None, steps,
                       scene: Scene, aoa_points: int = 4) -> list[StepMeasurement]:
    """One measurement tuple per step with a stride attached.

    The AoA is read at ``aoa_points`` evenly spaced instants ending at the
    step's end; ``alpha_r_meas`` is the last usable one.
    """
    out = []
    for step in steps:
        dl = integrate_path_change(doppler, step.t_start, step.t_end)
        speed = step.speed if step.speed else step.stride / step.duration
        v_ratio = dl / step.duration / speed
        inside = (doppler.times >= step.t_start) & (doppler.times <= step.t_end)
        confidence = 1.0 - float(np.mean(doppler.low_confidence[inside])) if inside.any() else 0.0
        alpha, frac, samples = None, 1.0, []
        if aoa is not None:
            for f in np.arange(1, aoa_points + 1) / aoa_points:
                th = aoa.at(step.t_start + f * step.duration)
                if th is not None:
                    samples.append((float(f), float(geo.bearing_from_array_angle(scene, th))))
            theta, t_a = aoa.at(step.t_end), step.t_end
            if theta is None:
                # fall back to the latest usable sample inside the step
                ok = ((aoa.times >= step.t_start) & (aoa.times <= step.t_end)
                      & np.isfinite(aoa.alpha_r))
                if ok.any():
                    i = int(np.flatnonzero(ok)[-1])
                    theta, t_a = float(aoa.alpha_r[i]), float(aoa.times[i])
            if theta is not None:
                alpha = float(geo.bearing_from_array_angle(scene, theta))
                frac = (t_a - step.t_start) / step.duration
                if not samples:
                    samples = [(frac, alpha)]
        out.append(StepMeasurement(step, float(dl), float(v_ratio), alpha, confidence, frac,
                                   tuple(samples)))
    return out


def _ellipse_term(x1, y1, L_pred, d: float, cfg: FusionConfig):
    """Normalised ellipse-equation residual at the propagated point; inf if degenerate.

    ``vertex`` scales by a / 2 sigma, exact only at the major-axis vertex.
    ``first_order`` divides by the gradient of the equation and multiplies
    by the gradient of the path length, so the term reads as path-length
    error over 2 sigma everywhere on the ellipse (same value at the vertex).
    """
    a = L_pred / 2
    c = d / 2
    ok = L_pred > d
    b2 = np.where(ok, a * a - c * c, 1.0)
    a2 = np.where(ok, a * a, 1.0)
    e = np.abs((x1 - c) ** 2 / a2 + y1 ** 2 / b2 - 1.0)
    if cfg.ellipse_norm == "vertex":
        scale = np.sqrt(a2)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            grad_e = 2 * np.hypot((x1 - c) / a2, y1 / b2)
            r0, r1 = np.hypot(x1, y1), np.hypot(x1 - d, y1)
            grad_L = np.hypot(x1 / r0 + (x1 - d) / r1, y1 / r0 + y1 / r1)
            scale = grad_L / grad_e
    t1 = e * scale / (2 * cfg.sigma_path)
    # 0/0 at the ellipse centre and at the devices counts as infeasible
    return np.where(ok & np.isfinite(t1), t1, np.inf)


def _line_offset(x0, y0, x1, y1, meas: StepMeasurement, d: float):
    """Mean signed distance from the anchored points to their bearing lines.

    Each sample is exact on its own, so averaging the signed offsets keeps
    the truth at zero while the AoA noise averages down.
    """
    total = 0.0
    for f, al in meas.alpha_samples:
        xa, ya = x0 + f * (x1 - x0), y0 + f * (y1 - y0)
        total = total + (xa - d) * np.sin(al) - ya * np.cos(al)
    return total / len(meas.alpha_samples)


def _step_cost(x0, y0, x1, y1, meas: StepMeasurement, scene: Scene, cfg: FusionConfig,
               L0=None, L1=None):
    """Weighted terms for arrays of start/end points; inf where degenerate.

    ``L0``/``L1`` are the path lengths at the two points when the caller
    already has them.
    """
    d = scene.d_los
    if L0 is None:
        L0 = np.hypot(x0, y0) + np.hypot(x0 - d, y0)
    if L1 is None:
        L1 = np.hypot(x1, y1) + np.hypot(x1 - d, y1)
    t1 = _ellipse_term(x1, y1, L0 + meas.delta_L, d, cfg)

    if meas.alpha_r_meas is None or cfg.w_line == 0:
        t2 = 0.0
    else:
        t2 = np.abs(_line_offset(x0, y0, x1, y1, meas, d)) / cfg.sigma_line

    t3 = np.abs((L1 - L0) / meas.stride - meas.v_ratio) / (2 * cfg.sigma_ratio)
    return cfg.w_ellipse * t1 + cfg.w_line * t2 + cfg.w_ratio * t3


def objective_terms(state: TargetState, meas: StepMeasurement, scene: Scene,
                    cfg: FusionConfig | None = None):
    """Unweighted normalised (ellipse, line, ratio) terms for one step."""
    cfg = cfg or FusionConfig()
    nxt = geo.propagate(state, meas.stride)
    L0 = geo.path_length(scene, state.pos)
    geo.ellipse_from_path_length(L0 + meas.delta_L, scene.d_los)  # raises if degenerate
    t1 = _ellipse_term(nxt.x, nxt.y, L0 + meas.delta_L, scene.d_los, cfg)
    t2 = 0.0
    if meas.alpha_r_meas is not None:
        t2 = abs(_line_offset(state.x, state.y, nxt.x, nxt.y, meas, scene.d_los)) / cfg.sigma_line
    rate = (geo.path_length(scene, nxt.pos) - L0) / meas.stride
    t3 = abs(rate - meas.v_ratio) / (2 * cfg.sigma_ratio)
    return float(t1), float(t2), float(t3)


def objective(state: TargetState, meas: StepMeasurement, scene: Scene,
              cfg: FusionConfig | None = None) -> float:
    """Weighted residual of one step; raises DegenerateEllipse."""
    cfg = cfg or FusionConfig()
    t1, t2, t3 = objective_terms(state, meas, scene, cfg)
    if meas.alpha_r_meas is None:
        t2 = 0.0
    return cfg.w_ellipse * t1 + cfg.w_line * t2 + cfg.w_ratio * t3


def window_cost(x0, y0, phi, window, scene: Scene, cfg: FusionConfig):
    """Summed residual of straight propagation at fixed heading over a window.

    Broadcasts over arrays of start positions and headings.  Starts closer
    than ``y_min`` to the LoS line and paths that leave the sensing area
    cost inf.
    """
    x = np.asarray(x0, dtype=float)
    y = np.asarray(y0, dtype=float)
    phi = np.asarray(phi, dtype=float)
    cos_p, sin_p = np.cos(phi), np.sin(phi)
    total = np.where((np.abs(y) >= cfg.y_min) & scene.contains(x, y), 0.0, np.inf)
    L = geo.path_length(scene, (x, y))
    for meas in window:
        x1 = x + meas.stride * cos_p
        y1 = y + meas.stride * sin_p
        L1 = geo.path_length(scene, (x1, y1))
        total = total + _step_cost(x, y, x1, y1, meas, scene, cfg, L, L1)
        total = np.where(scene.contains(x1, y1), total, np.inf)
        x, y, L = x1, y1, L1
    return total


def _axis(lo, hi, step):
    n = int(round((hi - lo) / step)) + 1 if hi > lo else 1
    return np.linspace(lo, hi, n)


def _heading_axis(step_deg):
    n = int(round(360.0 / step_deg))
    return geo.wrap_angle(np.deg2rad(np.arange(n) * step_deg))


def _grid_search(window, scene, cfg, step, heading_deg):
    """Residual cube over (heading, x, y) and the axes it was built on."""
    xmin, xmax, ymin, ymax = scene.area
    xs, ys = _axis(xmin, xmax, step), _axis(ymin, ymax, step)
    phis = _heading_axis(heading_deg)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    cube = np.empty((phis.size,) + X.shape)
    with np.errstate(invalid="ignore", over="ignore"):
        for i, phi in enumerate(phis):
            cube[i] = window_cost(X, Y, phi, window, scene, cfg)
    cube[np.isnan(cube)] = np.inf
    return cube, xs, ys, phis


def _distinct_minima(cube, xs, ys, phis, k, min_sep, min_turn, tol=None):
    """Lowest cells, skipping near-duplicates of already chosen ones."""
    flat = cube.ravel()
    if tol is None:
        order = np.argsort(flat, kind="stable")
    else:
        cand = np.flatnonzero(flat <= tol)
        order = cand[np.argsort(flat[cand], kind="stable")]
    picked = []
    for idx in order:
        val = flat[idx]
        if not np.isfinite(val) or (tol is None and len(picked) >= k):
            break
        if tol is not None and val > tol:
            break
        i, j, m = np.unravel_index(idx, cube.shape)
        cand = (xs[j], ys[m], phis[i], val)
        close = any(np.hypot(cand[0] - p[0], cand[1] - p[1]) < min_sep
                    and abs(geo.wrap_angle(cand[2] - p[2])) < min_turn for p in picked)
        if not close:
            picked.append(cand)
    return picked


def _check_window(window):
    window = list(window)
    if len(window) < 2:
        raise InsufficientData("initial estimation needs at least two steps")
    if all(m.low_confidence for m in window):
        raise NoFeasibleState("no usable Doppler in the window (tangential blind spot)")
    return window


def estimate_initial_state(meas_window, scene: Scene, cfg: FusionConfig | None = None):
    """Coarse grid over (x, y, heading) then simplex refinement of the best cells.

    Returns ``(state, residual)``.
    """
    cfg = cfg or FusionConfig()
    window = _check_window(meas_window)
    cube, xs, ys, phis = _grid_search(window, scene, cfg, cfg.grid_step, cfg.grid_heading_deg)
    seeds = _distinct_minima(cube, xs, ys, phis, cfg.top_k, 3 * cfg.grid_step,
                             np.deg2rad(3 * cfg.grid_heading_deg))
    if not seeds:
        raise NoFeasibleState("every grid cell is degenerate or excluded")

    def fun(p):
        with np.errstate(invalid="ignore", over="ignore"):
            return float(window_cost(p[0], p[1], p[2], window, scene, cfg))

    best = None
    h, hphi = cfg.grid_step, np.deg2rad(cfg.grid_heading_deg)
    for x0, y0, phi0, val in seeds:
        p = np.array([x0, y0, phi0])
        res_val = val
        simplex_scale = 1.0
        # restart the simplex from its own optimum until it stops moving
        for _ in range(3):
            simplex = p + simplex_scale * np.array(
                [[0, 0, 0], [h, 0, 0], [0, h, 0], [0, 0, hphi]]) / 2
            r = optimize.minimize(fun, p, method="Nelder-Mead",
                                  options=dict(initial_simplex=simplex, xatol=cfg.refine_tol,
                                               fatol=1e-12, maxiter=4000))
            moved = np.hypot(*(r.x[:2] - p[:2]))
            if r.fun <= res_val:
                p, res_val = r.x, float(r.fun)
            simplex_scale *= 0.2
            if moved < cfg.refine_tol:
                break
        if best is None or res_val < best[1]:
            best = (p, res_val)
    p, val = best
    if not np.isfinite(val):
        raise NoFeasibleState("refinement left the feasible region")
    return TargetState(float(p[0]), float(p[1]), geo.wrap_angle(p[2])), float(val)


def brute_force_oracle(meas_window, scene: Scene, cfg: FusionConfig | None = None,
                       tol: float = 1e-6) -> OracleResult:
    """Exhaustive fine-grid minimum, plus every distinct near-tie.

    The ambiguity set holds one representative per cluster of cells whose
    residual is within ``tol`` (absolute, plus the same relative amount) of
    the minimum; a y-mirror pair shows up as two entries.  When no cell is
    feasible the residual is inf.
    """
    cfg = cfg or FusionConfig()
    window = _check_window(meas_window)
    cube, xs, ys, phis = _grid_search(window, scene, cfg, cfg.oracle_step, cfg.oracle_heading_deg)
    i, j, m = np.unravel_index(int(np.argmin(cube)), cube.shape)
    best = float(cube[i, j, m])
    state = TargetState(float(xs[j]), float(ys[m]), float(phis[i]))
    if not np.isfinite(best):
        # nothing feasible: report the first cell so callers can see it
        return OracleResult(state, np.inf, (state,))
    ties = _distinct_minima(cube, xs, ys, phis, None, 0.1, np.deg2rad(10),
                            tol=best + tol * (1 + best))
    ambiguity = tuple(TargetState(float(x), float(y), float(p)) for x, y, p, _ in ties)
    return OracleResult(state, best, ambiguity)


def _best_heading(state: TargetState, meas: StepMeasurement, scene: Scene, cfg: FusionConfig):
    phis = _heading_axis(cfg.track_heading_deg)
    x1 = state.x + meas.stride * np.cos(phis)
    y1 = state.y + meas.stride * np.sin(phis)
    with np.errstate(invalid="ignore", over="ignore"):
        cost = _step_cost(state.x, state.y, x1, y1, meas, scene, cfg)
    cost = np.broadcast_to(cost, phis.shape)
    if not np.any(np.isfinite(cost)):
        return state.phi, np.inf
    step = np.deg2rad(cfg.track_heading_deg)

    def fun(phi):
        with np.errstate(invalid="ignore", over="ignore"):
            return float(_step_cost(state.x, state.y, state.x + meas.stride * np.cos(phi),
                                    state.y + meas.stride * np.sin(phi), meas, scene, cfg))

    # near the LoS the true basin can be narrower than the grid, so refine
    # the few lowest local minima on the heading circle, not just the argmin
    local = np.flatnonzero((cost <= np.roll(cost, 1)) & (cost <= np.roll(cost, -1))
                           & np.isfinite(cost))
    best_phi, best_cost = float(phis[np.argmin(cost)]), float(np.min(cost))
    for k in local[np.argsort(cost[local])][:3]:
        r = optimize.minimize_scalar(fun, bounds=(phis[k] - step, phis[k] + step),
                                     method="bounded", options=dict(xatol=1e-7))
        if r.fun < best_cost:
            best_phi, best_cost = geo.wrap_angle(r.x), float(r.fun)
    return best_phi, best_cost


def track(initial: TargetState, meas_stream, scene: Scene, cfg: FusionConfig | None = None,
          initial_residual: float = 0.0, t0: float | None = None) -> Trajectory:
    """Step-by-step tracking from a known initial state.

    Each step keeps the previous position, picks the heading that best
    explains the step's measurements and moves one stride along it.  The
    returned trajectory starts with ``initial`` at the first step's start
    time (or ``t0``) and adds one state per step at its end time.
    """
    cfg = cfg or FusionConfig()
    meas_stream = list(meas_stream)
    if t0 is None:
        t0 = meas_stream[0].step.t_start if meas_stream else 0.0
    traj = Trajectory()
    traj.append(t0, initial, initial_residual)
    state = initial
    strikes = 0
    for meas in meas_stream:
        phi, res = _best_heading(state, meas, scene, cfg)
        state = geo.propagate(TargetState(state.x, state.y, phi), meas.stride)
        traj.append(meas.step.t_end, state, res)
        if cfg.lost_threshold is not None and res > cfg.lost_threshold:
            strikes += 1
            if strikes >= 2:
                err = TrackLost(f"residual above {cfg.lost_threshold:g} for two consecutive "
                                f"steps (t = {meas.step.t_end:.2f} s)")
                err.trajectory = traj
                raise err
        else:
            strikes = 0
    return traj


def solve(meas_stream, scene: Scene, cfg: FusionConfig | None = None) -> Trajectory:
    """Initial estimate over the first window followed by tracking."""
    cfg = cfg or FusionConfig()
    meas_stream = list(meas_stream)
    initial, res = estimate_initial_state(meas_stream[:cfg.window_steps], scene, cfg)
    return track(initial, meas_stream, scene, cfg, initial_residual=res)


__all__ = [
    "StepMeasurement", "FusionConfig", "Trajectory", "OracleResult", "build_measurements",
    "objective", "objective_terms", "window_cost", "estimate_initial_state",
    "brute_force_oracle", "track", "solve", "DegenerateEllipse",
]
