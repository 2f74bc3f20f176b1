import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wptrack import csi, geometry as geo, simulator
from wptrack.csi import CsiFrame, CsiStream, DopplerConfig, DopplerSeries
from wptrack.errors import AmbiguousAoa, BadFilterParams, InsufficientData, OutOfRange
from wptrack.geometry import Scene
from wptrack.simulator import NoiseConfig, ScenarioConfig

SCENE = Scene()
LAM = SCENE.wavelength
# centre weights of an 11-point quadratic smoother have squared sum 89/429
# (exact rational least squares, computed independently of scipy)
SG11_VARIANCE_FACTOR = 89 / 429


def constant_rate_stream(v, seconds=6.0, theta_deg=60.0, seed=0, snr_db=20.0, cfo=True):
    cfg = ScenarioConfig(noise=NoiseConfig(csi_snr_db=snr_db, cfo_sfo=cfo))
    t = np.arange(int(seconds * 1000)) / 1000.0
    # keep the path comfortably longer than the LoS for the whole run
    L = 5.0 + max(0.0, -v) * seconds + v * t
    theta = np.full(t.size, np.deg2rad(theta_deg))
    return simulator.synth_csi(t, L, theta, SCENE, cfg, np.random.default_rng(seed))


def random_frame(rng, t=0.0):
    h = rng.standard_normal((3, 30)) + 1j * rng.standard_normal((3, 30))
    return CsiFrame(t, h)


# ---------------------------------------------------------------- containers

def test_frame_shape_enforced():
    with pytest.raises(ValueError):
        CsiFrame(0.0, np.zeros((2, 30)))


def test_stream_requires_increasing_times():
    h = np.zeros((3, 3, 30), complex)
    with pytest.raises(ValueError):
        CsiStream(np.array([0.0, 0.002, 0.001]), h)


def test_stream_frames_roundtrip():
    rng = np.random.default_rng(1)
    frames = [random_frame(rng, t=i * 1e-3) for i in range(5)]
    stream = CsiStream.from_frames(frames)
    assert len(stream) == 5
    assert stream.sample_rate == pytest.approx(1000.0)
    np.testing.assert_array_equal(stream[3].h, frames[3].h)


# ---------------------------------------------------------------- denoising

def test_denoise_constant_fixed_point():
    np.testing.assert_allclose(csi.denoise_amplitude([5, 5, 5, 5, 5], 5, 2), 5.0, atol=1e-12)


def test_denoise_preserves_quadratic():
    t = np.arange(40, dtype=float)
    np.testing.assert_allclose(csi.denoise_amplitude(t ** 2, 7, 2), t ** 2, atol=1e-9)


def test_denoise_white_noise_variance():
    x = np.random.default_rng(0).standard_normal(200_000)
    var = csi.denoise_amplitude(x, 11, 2).var()
    assert var < 0.35
    assert var == pytest.approx(SG11_VARIANCE_FACTOR, rel=0.02)


@pytest.mark.parametrize("window, order, n", [(4, 2, 10), (5, 5, 10), (5, -1, 10), (11, 2, 8)])
def test_denoise_bad_params(window, order, n):
    with pytest.raises(BadFilterParams):
        csi.denoise_amplitude(np.ones(n), window, order)


def test_denoise_stream_keeps_phase():
    rng = np.random.default_rng(2)
    stream = CsiStream.from_frames(random_frame(rng, i * 1e-3) for i in range(30))
    out = csi.denoise_stream(stream, 11, 2)
    same = np.abs(out.h) > 1e-9
    np.testing.assert_allclose(np.angle(out.h[same]), np.angle(stream.h[same]), atol=1e-9)


# ---------------------------------------------------------------- phase sanitization

def test_sanitize_linear_phase_goes_to_zero():
    k = np.arange(30)
    phase = 0.3 + 0.17 * k
    h = np.tile(np.exp(1j * phase), (3, 1)) * 2.0
    out = csi.sanitize_phase(CsiFrame(0.0, h))
    np.testing.assert_allclose(np.angle(out.h), 0.0, atol=1e-9)
    np.testing.assert_allclose(np.abs(out.h), 2.0, atol=1e-12)


def test_sanitize_keeps_pattern_minus_its_fit():
    k = np.arange(30, dtype=float)
    pattern = 0.4 * np.sin(k / 3.0)
    h = np.tile(np.exp(1j * (pattern - 1.0 + 0.05 * k)), (3, 1))
    out = csi.sanitize_phase(CsiFrame(0.0, h))
    fit = np.polyval(np.polyfit(k, pattern, 1), k)
    np.testing.assert_allclose(np.angle(out.h[0]), pattern - fit, atol=1e-9)


def test_sanitize_removes_injected_sfo():
    # clean channel from the simulator, then a 0.01 rad/subcarrier slope
    clean = constant_rate_stream(0.2, seconds=0.01, snr_db=None, cfo=False)[0]
    k = np.arange(30)
    dirty = CsiFrame(0.0, clean.h * np.exp(1j * (0.01 * k + 0.7))[None, :])
    a = csi.sanitize_phase(clean).h
    b = csi.sanitize_phase(dirty).h
    assert np.max(np.abs(np.angle(b * np.conj(a)))) < 1e-3


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1))
def test_sanitize_idempotent(seed):
    rng = np.random.default_rng(seed)
    k = np.arange(30)
    h = np.exp(1j * (rng.uniform(-0.5, 0.5, (3, 30)) + 0.02 * k)) * rng.uniform(0.5, 2, (3, 30))
    once = csi.sanitize_phase(CsiFrame(0.0, h))
    twice = csi.sanitize_phase(once)
    np.testing.assert_allclose(twice.h, once.h, atol=1e-12)


# ---------------------------------------------------------------- conjugate multiplication

def test_conjugate_multiply_same_antenna_series():
    rng = np.random.default_rng(3)
    row = rng.standard_normal((10, 30)) + 1j * rng.standard_normal((10, 30))
    stream = CsiStream(np.arange(10) * 1e-3, np.stack([row, row, row], axis=1))
    out = csi.conjugate_multiply(stream, 0, 1)
    np.testing.assert_allclose(out.imag, 0.0, atol=1e-12)
    np.testing.assert_allclose(out.real, np.abs(row) ** 2, atol=1e-12)


def test_conjugate_multiply_rejects_same_index():
    stream = CsiStream(np.arange(2) * 1e-3, np.ones((2, 3, 30), complex))
    with pytest.raises(ValueError):
        csi.conjugate_multiply(stream, 1, 1)


@settings(max_examples=50)
@given(st.integers(0, 2**31 - 1))
def test_conjugate_multiply_cancels_common_phase(seed):
    rng = np.random.default_rng(seed)
    h = rng.standard_normal((20, 3, 30)) + 1j * rng.standard_normal((20, 3, 30))
    theta = rng.uniform(0, 2 * np.pi, 20)
    base = CsiStream(np.arange(20) * 1e-3, h)
    rotated = CsiStream(base.times, h * np.exp(1j * theta)[:, None, None])
    np.testing.assert_allclose(csi.conjugate_multiply(rotated, 0, 2),
                               csi.conjugate_multiply(base, 0, 2), atol=1e-10)


def test_conjugate_multiply_contains_doppler_tone():
    v = 0.2
    stream = constant_rate_stream(v, seconds=2.048, snr_db=None, cfo=False)
    prod = csi.conjugate_multiply(stream, 0, 1).mean(axis=1)
    prod = prod - prod.mean()
    spec = np.abs(np.fft.fft(prod * np.hanning(prod.size))) ** 2
    freqs = np.fft.fftfreq(prod.size, 1e-3)
    band = np.abs(freqs) > 0.5
    f_peak = abs(freqs[band][np.argmax(spec[band])])
    assert abs(f_peak - v / LAM) <= 1000.0 / prod.size


# ---------------------------------------------------------------- Doppler

def test_doppler_static_scene_all_low_confidence():
    stream = constant_rate_stream(0.0, seconds=4.0)
    d = csi.estimate_doppler_velocity(stream, LAM)
    assert d.low_confidence.all()
    np.testing.assert_array_equal(d.v_d, 0.0)


def test_doppler_constant_rate_example():
    d = csi.estimate_doppler_velocity(constant_rate_stream(0.2), LAM)
    assert not d.low_confidence.any()
    assert d.v_d.mean() == pytest.approx(0.2, abs=0.01)
    assert np.all(np.abs(d.v_d) <= DopplerConfig().v_max)


@pytest.mark.parametrize("v", [0.3, -0.3, 0.8, -1.2])
def test_doppler_sign_follows_path_change(v):
    d = csi.estimate_doppler_velocity(constant_rate_stream(v), LAM)
    assert np.median(d.v_d) == pytest.approx(v, abs=0.02)


@pytest.mark.parametrize("v", [0.2, -0.5])
def test_doppler_time_reversal_negates(v):
    stream = constant_rate_stream(v)
    fwd = csi.estimate_doppler_velocity(stream, LAM)
    rev = csi.estimate_doppler_velocity(stream.reversed(), LAM)
    bin_v = 1000.0 / DopplerConfig().window * LAM
    np.testing.assert_allclose(rev.v_d[::-1], -fwd.v_d, atol=bin_v)


@pytest.mark.parametrize("v", [0.03, -0.03])
def test_doppler_line_within_one_bin_of_dc_is_flagged(v):
    # about half an STFT bin (one bin is about 0.055 m/s)
    d = csi.estimate_doppler_velocity(constant_rate_stream(v), LAM)
    assert d.low_confidence.all()


def test_doppler_needs_one_window():
    with pytest.raises(InsufficientData):
        csi.estimate_doppler_velocity(constant_rate_stream(0.2, seconds=0.5), LAM)


def test_doppler_window_power_of_two():
    cfg = DopplerConfig(window=1000)
    with pytest.raises(ValueError):
        csi.estimate_doppler_velocity(constant_rate_stream(0.2), LAM, cfg)


# ---------------------------------------------------------------- integration

def test_integrate_constant():
    t = np.linspace(0, 2, 2001)
    s = DopplerSeries(t, np.full(t.size, 0.1), np.zeros(t.size, bool))
    assert csi.integrate_path_change(s, 0.0, 2.0) == pytest.approx(0.2, abs=1e-12)


def test_integrate_sine():
    t = np.arange(0, np.pi + 1e-3, 1e-3)
    s = DopplerSeries(t, np.sin(t), np.zeros(t.size, bool))
    assert csi.integrate_path_change(s, 0.0, np.pi) == pytest.approx(2.0, abs=1e-3)


def test_integrate_out_of_range():
    t = np.linspace(0, 1, 11)
    s = DopplerSeries(t, np.ones(11), np.zeros(11, bool))
    with pytest.raises(OutOfRange):
        csi.integrate_path_change(s, -0.5, 0.5)
    with pytest.raises(OutOfRange):
        csi.integrate_path_change(s, 0.8, 0.2)


@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.integers(0, 1000))
def test_integrate_additive(a, b, c, seed):
    t0, t1, t2 = sorted((a, b, c))
    t = np.linspace(0, 3, 97)
    v = np.random.default_rng(seed).standard_normal(t.size)
    s = DopplerSeries(t, v, np.zeros(t.size, bool))
    whole = csi.integrate_path_change(s, t0, t2)
    parts = csi.integrate_path_change(s, t0, t1) + csi.integrate_path_change(s, t1, t2)
    assert parts == pytest.approx(whole, abs=1e-12)


def test_integrate_matches_geometry_on_walk():
    cfg = ScenarioConfig(noise=NoiseConfig(csi_snr_db=25.0, cfo_sfo=True))
    gt, stream, _, _ = simulator.simulate(cfg, SCENE, seed=3)
    d = csi.estimate_doppler_velocity(csi.denoise_stream(stream), LAM)
    t0, t1 = gt.walk_start, gt.walk_end
    truth = (geo.path_length(SCENE, gt.position_at(t1))
             - geo.path_length(SCENE, gt.position_at(t0)))
    assert csi.integrate_path_change(d, t0, t1) == pytest.approx(truth, abs=0.05)


def test_step_path_change_within_ten_percent():
    cfg = ScenarioConfig(noise=NoiseConfig(csi_snr_db=25.0, cfo_sfo=True))
    gt, stream, _, _ = simulator.simulate(cfg, SCENE, seed=4)
    d = csi.estimate_doppler_velocity(csi.denoise_stream(stream), LAM)
    for step in gt.steps(cfg.stride):
        p0, p1 = gt.position_at(step.t_start), gt.position_at(step.t_end)
        truth = geo.path_length(SCENE, p1) - geo.path_length(SCENE, p0)
        got = csi.integrate_path_change(d, step.t_start, step.t_end)
        assert abs(got - truth) <= 0.1 * abs(truth)


# ---------------------------------------------------------------- AoA

def plane_wave(dtheta, n=8):
    k = np.arange(3)[:, None]
    h = np.exp(1j * dtheta * k) * np.ones((3, 30))
    return CsiStream(np.arange(n) * 1e-3, np.tile(h, (n, 1, 1)))


def test_aoa_broadside():
    got = csi.estimate_aoa(plane_wave(0.0), LAM, LAM / 2, isolate_dynamic=False)
    assert got == pytest.approx(np.pi / 2, abs=1e-12)


def test_aoa_endfire():
    got = csi.estimate_aoa(plane_wave(np.pi), LAM, LAM / 2, isolate_dynamic=False)
    assert got == pytest.approx(0.0, abs=1e-6)


def test_aoa_ambiguous():
    # with spacing below half a wavelength a pi phase step is out of range
    with pytest.raises(AmbiguousAoa):
        csi.estimate_aoa(plane_wave(np.pi), LAM, LAM / 4, isolate_dynamic=False)
    with pytest.raises(AmbiguousAoa):
        csi.estimate_aoa(plane_wave(0.0), LAM, LAM, isolate_dynamic=False)


def test_aoa_empty_window():
    with pytest.raises(InsufficientData):
        csi.estimate_aoa(plane_wave(0.0)[0:0], LAM, LAM / 2)


@pytest.mark.parametrize("deg", [35.0, 60.0, 120.0])
def test_aoa_moving_reflector(deg):
    stream = constant_rate_stream(0.5, seconds=3.0, theta_deg=deg)
    series = csi.estimate_aoa_series(stream, LAM, SCENE.antenna_spacing)
    assert np.rad2deg(np.nanmedian(series.alpha_r)) == pytest.approx(deg, abs=2.0)


def test_aoa_series_nan_without_motion():
    stream = constant_rate_stream(0.0, seconds=2.0)
    series = csi.estimate_aoa_series(stream, LAM, SCENE.antenna_spacing)
    assert np.isnan(series.alpha_r).all()


def test_aoa_series_interpolation_does_not_bridge_gaps():
    s = csi.AoaSeries(np.array([0.0, 1.0, 2.0]), np.array([1.0, np.nan, 2.0]))
    assert s.at(0.0) == 1.0
    assert s.at(0.5) is None
    assert s.at(3.0) is None
    s = csi.AoaSeries(np.array([0.0, 1.0]), np.array([1.0, 2.0]))
    assert s.at(0.25) == pytest.approx(1.25)


def test_doppler_config_blind_band():
    cfg = DopplerConfig()
    assert cfg.blind_hz(1000.0) == pytest.approx(1000.0 / 1024)
    assert dataclasses.replace(cfg, resolve_bins=0.0).blind_hz(1000.0) == cfg.dc_cut_hz
