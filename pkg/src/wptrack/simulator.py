"""Synthetic walks with matching CSI, insole and ground-truth streams.

The walker is a point moving at constant speed along a waypoint polyline.
It reflects one dynamic path (Tx -> walker -> Rx) on top of the static LoS
path and produces toe-offs every ``stride / speed`` seconds, alternating
feet.  All randomness comes from one seed, split into independent streams
for the CSI, pressure and measurement-level noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from .csi import N_ANTENNAS, N_SUBCARRIERS, AoaSeries, CsiStream, DopplerSeries
from .errors import BadScenario
from .geometry import SPEED_OF_LIGHT, Scene
from .insole import N_COLS, N_ROWS, Foot, PressureStream, SensorLayout, StepEvent, attach_stride


@dataclass(frozen=True)
class NoiseConfig:
    csi_snr_db: float | None = None
    cfo_sfo: bool = False
    sfo_sigma: float = 0.05
    pressure_noise: float = 0.0
    doppler_sigma: float = 0.0
    aoa_sigma_deg: float = 0.0
    noise_rate: float = 1000.0 / 128

    def silent(self) -> "NoiseConfig":
        return NoiseConfig(csi_snr_db=None, cfo_sfo=False, sfo_sigma=self.sfo_sigma,
                           pressure_noise=0.0, doppler_sigma=0.0, aoa_sigma_deg=0.0,
                           noise_rate=self.noise_rate)


@dataclass(frozen=True)
class GaitConfig:
    swing_fraction: float = 0.8
    push_off: float = 0.3
    unload_ramp: float = 0.04
    load_ramp: float = 0.04
    body_load: float = 8.0
    standing_cop: float = 0.45
    forefoot_cop: float = 0.85
    cop_start: float = 0.1
    cop_end: float = 0.9
    gesture_ramp: float = 0.1
    row_width: float = 0.12


@dataclass(frozen=True)
class ScenarioConfig:
    waypoints: tuple = ((1.0, 0.6), (2.6, 1.8))
    speed: float = 1.0
    stride: float = 0.5
    lead_in: float = 6.5
    lead_out: float = 1.0
    gesture_start: float = 1.5
    gesture_hold: float = 3.0
    first_foot: str = "L"
    right_offset: float = 0.0
    a_dyn_ratio: float = 0.2
    subcarrier_spacing: float = 1.25e6
    csi_rate: float = 1000.0
    pressure_rate: float = 50.0
    gt_rate: float = 100.0
    seed: int = 0
    gait: GaitConfig = field(default_factory=GaitConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)


@dataclass(frozen=True)
class GroundTruth:
    times: np.ndarray
    positions: np.ndarray
    headings: np.ndarray
    step_times: np.ndarray
    step_feet: tuple
    speed: float = 0.0
    walk_start: float = 0.0
    walk_end: float = 0.0
    turn_times: tuple = ()
    segment_headings: tuple = ()

    def position_at(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.positions[:, 0]),
                         np.interp(t, self.times, self.positions[:, 1])], axis=-1)

    def heading_at(self, t):
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, self.times.size - 1)
        return self.headings[idx]

    def steps(self, stride: float | None = None):
        """Step events between consecutive toe-offs (true timing)."""
        events = [StepEvent(t0, t1, foot) for t0, t1, foot
                  in zip(self.step_times[:-1], self.step_times[1:], self.step_feet)]
        return attach_stride(events, stride) if stride is not None else events


def _rngs(seed):
    csi, pressure, meas = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(csi), np.random.default_rng(pressure),
            np.random.default_rng(meas))


def gen_trajectory(cfg: ScenarioConfig, scene: Scene | None = None) -> GroundTruth:
    """Constant-speed walk through the waypoints, sampled at ``gt_rate``."""
    scene = scene or Scene()
    wp = np.asarray(cfg.waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[0] < 2 or wp.shape[1] != 2:
        raise BadScenario("a walk needs at least two 2D waypoints")
    if not np.all(scene.contains(wp[:, 0], wp[:, 1])):
        raise BadScenario(f"waypoints leave the sensing area {scene.area}")
    if cfg.speed <= 0 or cfg.stride <= 0:
        raise BadScenario("speed and stride must be positive")
    seg = np.diff(wp, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(seg_len == 0):
        raise BadScenario("repeated waypoint")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    walk_time = total / cfg.speed
    duration = cfg.lead_in + walk_time + cfg.lead_out
    n = int(round(duration * cfg.gt_rate)) + 1
    times = np.arange(n) / cfg.gt_rate
    s = np.clip((times - cfg.lead_in) * cfg.speed, 0.0, total)
    pos = np.column_stack([np.interp(s, cum, wp[:, 0]), np.interp(s, cum, wp[:, 1])])
    seg_heading = np.arctan2(seg[:, 1], seg[:, 0])
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, seg.shape[0] - 1)
    headings = seg_heading[idx]

    n_steps = int(np.floor(total / cfg.stride + 1e-9))
    if n_steps < 1:
        raise BadScenario("walk shorter than one stride")
    step_times = cfg.lead_in + np.arange(n_steps + 1) * (cfg.stride / cfg.speed)
    first = Foot(cfg.first_foot)
    feet = tuple(first if k % 2 == 0 else first.other for k in range(n_steps + 1))
    return GroundTruth(times=times, positions=pos, headings=headings, step_times=step_times,
                       step_feet=feet, speed=cfg.speed, walk_start=cfg.lead_in,
                       walk_end=cfg.lead_in + walk_time,
                       turn_times=tuple(float(v) for v in cfg.lead_in + cum[1:-1] / cfg.speed),
                       segment_headings=tuple(float(v) for v in seg_heading))


# ---------------------------------------------------------------- CSI


def subcarrier_freqs(scene: Scene, cfg: ScenarioConfig):
    k = np.arange(N_SUBCARRIERS) - (N_SUBCARRIERS - 1) / 2
    return scene.carrier_freq + k * cfg.subcarrier_spacing


def _steering(scene: Scene, theta, lam):
    """ULA phase per antenna: shape (..., antennas, subcarriers)."""
    k = np.arange(N_ANTENNAS)[:, None]
    cos_t = np.cos(np.asarray(theta, dtype=float))[..., None, None]
    return np.exp(2j * np.pi * k * scene.antenna_spacing * cos_t / lam)


def synth_csi(times, path_lengths, array_angles, scene: Scene, cfg: ScenarioConfig,
              rng=None, static_amplitude: float = 1.0) -> CsiStream:
    """CSI for a static LoS path plus one reflected path of given length/angle."""
    times = np.asarray(times, dtype=float)
    L = np.asarray(path_lengths, dtype=float)
    theta = np.asarray(array_angles, dtype=float)
    f = subcarrier_freqs(scene, cfg)
    lam = SPEED_OF_LIGHT / f
    theta_los = geo.array_angle(scene, scene.tx_pos)
    static = (static_amplitude * np.exp(-2j * np.pi * f * scene.d_los / SPEED_OF_LIGHT)
              * _steering(scene, theta_los, lam))
    amp = cfg.a_dyn_ratio * max(static_amplitude, 1.0) * scene.d_los / L
    dyn = (amp[:, None, None]
           * np.exp(-2j * np.pi * f[None, :] * L[:, None] / SPEED_OF_LIGHT)[:, None, :]
           * _steering(scene, theta, lam))
    h = static[None] + dyn
    noise = cfg.noise
    if rng is not None and noise.cfo_sfo:
        common = rng.uniform(0, 2 * np.pi, times.size)
        slope = rng.normal(0.0, noise.sfo_sigma, times.size)
        k = np.arange(N_SUBCARRIERS) - (N_SUBCARRIERS - 1) / 2
        h = h * np.exp(1j * (common[:, None] + slope[:, None] * k[None, :]))[:, None, :]
    if rng is not None and noise.csi_snr_db is not None:
        p_sig = float(np.mean(np.abs(h) ** 2))
        sigma = np.sqrt(p_sig / 10 ** (noise.csi_snr_db / 10) / 2)
        h = h + sigma * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
    return CsiStream(times, h)


def gen_csi(gt: GroundTruth, scene: Scene, cfg: ScenarioConfig, rng=None) -> CsiStream:
    """1 kHz CSI stream for the ground-truth walk."""
    n = int(np.floor(gt.times[-1] * cfg.csi_rate + 1e-9)) + 1
    times = np.arange(n) / cfg.csi_rate
    pos = gt.position_at(times)
    L = geo.path_length(scene, (pos[:, 0], pos[:, 1]))
    theta = geo.array_angle(scene, (pos[:, 0], pos[:, 1]))
    return synth_csi(times, L, theta, scene, cfg, rng)


# ---------------------------------------------------------------- pressure


def _row_weight_table(layout: SensorLayout, width: float):
    """CoP -> row weight lookup built from shifted Gaussian row profiles."""
    rows = layout.row_y
    mu = np.linspace(-1.0, 2.0, 3001)
    w = np.exp(-0.5 * ((rows[None, :] - mu[:, None]) / width) ** 2)
    w /= w.sum(axis=1, keepdims=True)
    centroid = w @ rows
    return centroid, w


def _ramp(t, t0, t1, v0, v1):
    return v0 + (v1 - v0) * np.clip((t - t0) / (t1 - t0), 0.0, 1.0)


def _foot_profile(t, toe_offs, cfg: ScenarioConfig, period: float):
    """CoP target and total load of one foot at true times ``t``."""
    g = cfg.gait
    cop = np.full(t.shape, g.standing_cop)
    load = np.full(t.shape, g.body_load)

    g0, g1 = cfg.gesture_start, cfg.gesture_start + cfg.gesture_hold
    m = (t >= g0) & (t < g1 + g.gesture_ramp)
    cop[m] = np.where(t[m] < g1,
                      _ramp(t[m], g0, g0 + g.gesture_ramp, g.standing_cop, g.forefoot_cop),
                      _ramp(t[m], g1, g1 + g.gesture_ramp, g.forefoot_cop, g.standing_cop))

    if len(toe_offs) == 0:
        return cop, load
    swing = g.swing_fraction * period
    first = toe_offs[0]
    m = (t >= first - g.push_off) & (t < first)
    cop[m] = _ramp(t[m], first - g.push_off, first, g.standing_cop, g.cop_end)
    for j, t_off in enumerate(toe_offs):
        m = (t >= t_off - g.unload_ramp) & (t < t_off)
        load[m] = _ramp(t[m], t_off - g.unload_ramp, t_off, g.body_load, 0.0)
        land = t_off + swing
        load[(t >= t_off) & (t < land)] = 0.0
        nxt = toe_offs[j + 1] if j + 1 < len(toe_offs) else None
        if nxt is not None:
            m = (t >= land) & (t < nxt - g.unload_ramp)
            cop[m] = _ramp(t[m], land, nxt, g.cop_start, g.cop_end)
            m = (t >= nxt - g.unload_ramp) & (t < nxt)
            cop[m] = _ramp(t[m], land, nxt, g.cop_start, g.cop_end)
        else:
            m = t >= land
            cop[m] = _ramp(t[m], land, land + 0.3, g.cop_start, g.standing_cop)
        m = (t >= land) & (t < land + g.load_ramp)
        load[m] = _ramp(t[m], land, land + g.load_ramp, 0.0, g.body_load)
    return cop, load


def gen_pressure(gt: GroundTruth, layout: SensorLayout, cfg: ScenarioConfig, rng=None):
    """Left and right 50 Hz insole streams.

    The right insole's clock runs ``cfg.right_offset`` seconds behind the
    left one, so :func:`wptrack.insole.align_streams` should return
    ``+right_offset``.  The left clock is the CSI/ground-truth clock.
    """
    centroid, table = _row_weight_table(layout, cfg.gait.row_width)
    col = np.array([0.7, 1.0, 1.0, 1.0, 0.7])
    col /= col.sum()
    n = int(np.floor(gt.times[-1] * cfg.pressure_rate + 1e-9)) + 1
    stamps = np.arange(n) / cfg.pressure_rate
    period = cfg.stride / cfg.speed
    feet = np.array([f.value for f in gt.step_feet])
    out = []
    for foot, clock_shift in ((Foot.LEFT, 0.0), (Foot.RIGHT, cfg.right_offset)):
        true_t = stamps + clock_shift
        cop, load = _foot_profile(true_t, gt.step_times[feet == foot.value], cfg, period)
        rows = np.column_stack([np.interp(cop, centroid, table[:, r]) for r in range(N_ROWS)])
        p = load[:, None, None] * rows[:, :, None] * col[None, None, :]
        p = p.reshape(n, N_ROWS * N_COLS)
        if rng is not None and cfg.noise.pressure_noise > 0:
            p = p * (1.0 + cfg.noise.pressure_noise * rng.standard_normal(p.shape))
        out.append(PressureStream(stamps, np.clip(p, 0.0, None), foot))
    return out[0], out[1]


# ---------------------------------------------------------------- measurement level


def measurement_series(gt: GroundTruth, scene: Scene, cfg: ScenarioConfig, rng=None,
                       blind_hz: float = 0.5):
    """Doppler and AoA series straight from the ground truth.

    This replaces the CSI front end with the true path-length rate and array
    angle plus Gaussian noise drawn at ``noise_rate`` (the STFT hop rate by
    default) and linearly interpolated, mimicking the correlation of
    window-based estimates.  Samples slower than ``blind_hz`` are flagged and
    zeroed the way the STFT estimator does it.
    """
    # the rate jumps at the walk ends and at every turn; sampling eps either
    # side of each jump keeps the step integrals exact to about rate * eps
    eps = 1e-9
    breaks = np.array([gt.walk_start, gt.walk_end, *gt.turn_times])
    # sample at the CSI rate so the trapezoid error stays far below any noise
    n = int(np.floor(gt.times[-1] * cfg.csi_rate + 1e-9)) + 1
    grid = np.arange(n) / cfg.csi_rate
    keep = np.min(np.abs(grid[:, None] - breaks[None, :]), axis=1) > eps
    times = np.union1d(grid[keep], np.concatenate([breaks - eps, breaks + eps]))
    times = times[(times >= gt.times[0]) & (times <= gt.times[-1])]
    pos = gt.position_at(times)
    seg = np.searchsorted(np.asarray(gt.turn_times), times, side="right")
    headings = np.asarray(gt.segment_headings)[seg] if gt.segment_headings else gt.heading_at(times)
    walking = (times > gt.walk_start) & (times < gt.walk_end)
    alpha_t, alpha_r = geo.angles_from_position(scene, (pos[:, 0], pos[:, 1]))
    v_true = geo.doppler_ratio(alpha_t, alpha_r, headings) * gt.speed * walking
    theta = np.asarray(geo.array_angle(scene, (pos[:, 0], pos[:, 1])), dtype=float)

    noise = cfg.noise
    v_noise = np.zeros_like(v_true)
    a_noise = np.zeros_like(theta)
    if rng is not None:
        dt = 1.0 / noise.noise_rate
        knots = np.arange(0.0, gt.times[-1] + 2 * dt, dt)
        z_v = rng.standard_normal(knots.size)
        z_a = rng.standard_normal(knots.size)
        v_noise = noise.doppler_sigma * np.interp(times, knots, z_v)
        a_noise = np.deg2rad(noise.aoa_sigma_deg) * np.interp(times, knots, z_a)

    low = np.abs(v_true) < blind_hz * scene.wavelength
    v_d = np.where(low, 0.0, v_true + v_noise)
    alpha = np.where(low, np.nan, np.clip(theta + a_noise, 0.0, np.pi))
    return (DopplerSeries(times, v_d, low), AoaSeries(times, alpha))


# ---------------------------------------------------------------- bundles


@dataclass(frozen=True)
class Bundle:
    csi: Path
    pressure_left: Path
    pressure_right: Path
    ground_truth: Path
    steps: Path


def simulate(cfg: ScenarioConfig, scene: Scene, layout: SensorLayout | None = None,
             seed: int | None = None):
    """Generate all streams in memory: ``(gt, csi, left, right)``."""
    layout = layout or SensorLayout.default()
    rng_csi, rng_p, _ = _rngs(cfg.seed if seed is None else seed)
    gt = gen_trajectory(cfg, scene)
    csi = gen_csi(gt, scene, cfg, rng_csi)
    left, right = gen_pressure(gt, layout, cfg, rng_p)
    return gt, csi, left, right


def measurement_rng(seed: int):
    return _rngs(seed)[2]


def run_scenario(cfg: ScenarioConfig, scene: Scene, out_dir, layout: SensorLayout | None = None,
                 seed: int | None = None, compress: bool = True) -> Bundle:
    """Simulate one scenario and write every stream to ``out_dir``."""
    from . import formats

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    gt, csi, left, right = simulate(cfg, scene, layout, seed)
    bundle = Bundle(
        csi=out / ("csi.csv.gz" if compress else "csi.csv"),
        pressure_left=out / "pressure_left.csv",
        pressure_right=out / "pressure_right.csv",
        ground_truth=out / "ground_truth.csv",
        steps=out / "steps.csv",
    )
    formats.write_csi(bundle.csi, csi)
    formats.write_pressure(bundle.pressure_left, left)
    formats.write_pressure(bundle.pressure_right, right)
    formats.write_ground_truth(bundle.ground_truth, gt)
    formats.write_steps(bundle.steps, gt)
    return bundle


def random_straight_walk(rng, scene: Scene, n_steps: int = 4, stride: float = 0.5,
                         margin: float = 0.2, min_abs_y: float = 0.3, min_ratio: float = 0.3,
                         max_tries: int = 10_000):
    """Random straight walk that stays observable.

    The path keeps ``margin`` from the area border, stays at least
    ``min_abs_y`` away from the LoS line on one side of it, and keeps
    ``|doppler_ratio| >= min_ratio`` so no step sits in the tangential blind
    spot.  Returns the two waypoints.
    """
    xmin, xmax, ymin, ymax = scene.area
    length = n_steps * stride
    s = np.linspace(0.0, length, 4 * n_steps + 1)
    for _ in range(max_tries):
        x0 = rng.uniform(xmin + margin, xmax - margin)
        y0 = rng.uniform(ymin + margin, ymax - margin)
        phi = rng.uniform(-np.pi, np.pi)
        x = x0 + s * np.cos(phi)
        y = y0 + s * np.sin(phi)
        if (x.min() < xmin + margin or x.max() > xmax - margin
                or y.min() < ymin + margin or y.max() > ymax - margin):
            continue
        if np.abs(y).min() < min_abs_y or np.ptp(np.sign(y)) > 0:
            continue
        at, ar = geo.angles_from_position(scene, (x, y))
        if np.abs(geo.doppler_ratio(at, ar, phi)).min() < min_ratio:
            continue
        return ((float(x[0]), float(y[0])), (float(x[-1]), float(y[-1])))
    raise BadScenario("could not draw an observable random walk")
