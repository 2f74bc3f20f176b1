"""CSI processing: denoising, Doppler velocity, path-length change and AoA.

Streams are held as arrays: ``CsiStream.h`` has shape
``(packets, antennas, subcarriers)`` and ``CsiStream.times`` is in seconds.

Doppler extraction divides the conjugate product of two receive antennas by
the power of the second one, i.e. it works on the CSI ratio ``h_a / h_b``.
The random per-packet phase (CFO/PDD) and the subcarrier phase slope (SFO)
are common to all antennas of one NIC and cancel exactly.  Dividing by
``|h_b|^2`` is what makes the Doppler sign observable: the plain conjugate
product contains the dynamic path at both +f_D and -f_D with equal weight,
while the ratio is a Moebius map of the rotating dynamic phasor and keeps a
single dominant tone whose sign follows the direction of path change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import detrend, savgol_filter

from .errors import AmbiguousAoa, BadFilterParams, InsufficientData, OutOfRange

N_ANTENNAS = 3
N_SUBCARRIERS = 30


@dataclass(frozen=True)
class CsiFrame:
    timestamp: float
    h: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.shape != (N_ANTENNAS, N_SUBCARRIERS):
            raise ValueError(f"CSI frame must be {N_ANTENNAS}x{N_SUBCARRIERS}, got {h.shape}")
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class CsiStream:
    times: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        h = np.asarray(self.h, dtype=complex)
        if h.size == 0:
            h = h.reshape(0, N_ANTENNAS, N_SUBCARRIERS)
        if h.shape[1:] != (N_ANTENNAS, N_SUBCARRIERS) or h.shape[0] != times.size:
            raise ValueError(f"bad CSI stream shape {h.shape} for {times.size} timestamps")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("CSI timestamps must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "h", h)

    @classmethod
    def from_frames(cls, frames):
        frames = list(frames)
        if not frames:
            return cls(np.empty(0), np.empty((0, N_ANTENNAS, N_SUBCARRIERS), complex))
        return cls(np.array([f.timestamp for f in frames]), np.stack([f.h for f in frames]))

    def __len__(self):
        return self.times.size

    def __getitem__(self, item):
        if isinstance(item, slice):
            return CsiStream(self.times[item], self.h[item])
        return CsiFrame(float(self.times[item]), self.h[item])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def sample_rate(self) -> float:
        if len(self) < 2:
            raise InsufficientData("need at least two packets to infer the sample rate")
        return 1.0 / float(np.median(np.diff(self.times)))

    def reversed(self) -> "CsiStream":
        """Same packets played backwards on the original time grid."""
        return CsiStream(self.times.copy(), self.h[::-1].copy())


@dataclass(frozen=True)
class DopplerSeries:
    """Rate of reflected-path length change (m/s, positive = lengthening)."""

    times: np.ndarray
    v_d: np.ndarray
    low_confidence: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        v_d = np.asarray(self.v_d, dtype=float)
        flags = np.asarray(self.low_confidence, dtype=bool)
        if not (times.shape == v_d.shape == flags.shape):
            raise ValueError("DopplerSeries arrays must share one shape")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "v_d", v_d)
        object.__setattr__(self, "low_confidence", flags)


@dataclass(frozen=True)
class AoaSeries:
    """Array angle of the dynamic path in [0, pi]; NaN where unavailable."""

    times: np.ndarray
    alpha_r: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        alpha = np.asarray(self.alpha_r, dtype=float)
        if times.shape != alpha.shape:
            raise ValueError("AoaSeries arrays must share one shape")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "alpha_r", alpha)

    def at(self, t: float):
        """Angle at ``t`` interpolated between the two bracketing samples.

        Returns None outside the support or when a bracketing sample is
        missing; gaps from blind-spot windows are never bridged.
        """
        times = self.times
        if times.size == 0 or t < times[0] or t > times[-1]:
            return None
        hi = min(int(np.searchsorted(times, t)), times.size - 1)
        lo = max(hi - 1, 0)
        a0, a1 = self.alpha_r[lo], self.alpha_r[hi]
        if times[hi] == t:
            return float(a1) if np.isfinite(a1) else None
        if not (np.isfinite(a0) and np.isfinite(a1)):
            return None
        w = (t - times[lo]) / (times[hi] - times[lo])
        return float(a0 + w * (a1 - a0))


@dataclass(frozen=True)
class DopplerConfig:
    window: int = 1024
    hop: int = 128
    nfft_factor: int = 8
    dc_cut_hz: float = 0.5
    v_max: float = 4.0
    peak_dominance: float = 25.0
    antenna_pair: tuple = (0, 1)
    check_pair: tuple | None = (0, 2)
    aoa_window: int = 512
    aoa_hop: int = 128
    resolve_bins: float = 1.0

    def blind_hz(self, fs: float) -> float:
        """Lines slower than this cannot be told apart from the static path."""
        return max(self.dc_cut_hz, self.resolve_bins * fs / self.window)


def denoise_amplitude(series, window: int = 11, poly_order: int = 2):
    """Savitzky-Golay smoothing.

    Edge samples come from the polynomial fitted to the first and last
    ``window`` points, so polynomials up to ``poly_order`` pass unchanged.
    """
    series = np.asarray(series, dtype=float)
    if (window % 2 != 1 or window <= poly_order or poly_order < 0
            or series.shape[-1] < window):
        raise BadFilterParams(
            f"window={window}, poly_order={poly_order} invalid for length {series.shape[-1]}"
        )
    return savgol_filter(series, window, poly_order, mode="interp", axis=-1)


def denoise_stream(stream: CsiStream, window: int = 11, poly_order: int = 2) -> CsiStream:
    """Smooth every antenna/subcarrier amplitude along time, keeping the phase."""
    if len(stream) < window:
        return stream
    amp = np.abs(stream.h)
    smooth = np.clip(denoise_amplitude(np.moveaxis(amp, 0, -1), window, poly_order), 0.0, None)
    smooth = np.moveaxis(smooth, -1, 0)
    phase = np.exp(1j * np.angle(stream.h))
    return CsiStream(stream.times, smooth * phase)


def sanitize_phase(frame: CsiFrame) -> CsiFrame:
    """Remove the per-antenna linear phase trend across subcarriers.

    The intercept absorbs the CFO/PDD phase, the slope the SFO term.
    """
    h = frame.h
    phase = np.unwrap(np.angle(h), axis=1)
    k = np.arange(h.shape[1], dtype=float)
    coeffs = np.polynomial.polynomial.polyfit(k, phase.T, 1)  # (2, antennas)
    trend = coeffs[0][:, None] + coeffs[1][:, None] * k[None, :]
    return CsiFrame(frame.timestamp, np.abs(h) * np.exp(1j * (phase - trend)))


def sanitize_stream(stream: CsiStream) -> CsiStream:
    return CsiStream.from_frames(sanitize_phase(f) for f in stream)


def conjugate_multiply(stream: CsiStream, ant_a: int, ant_b: int):
    """Cross-antenna product ``h_a * conj(h_b)``, shape ``(packets, subcarriers)``."""
    if ant_a == ant_b:
        raise ValueError("conjugate multiplication needs two distinct antennas")
    return stream.h[:, ant_a, :] * np.conj(stream.h[:, ant_b, :])


def csi_ratio_series(stream: CsiStream, ant_a: int, ant_b: int):
    """Subcarrier-averaged ``h_a / h_b`` with the long-term mean removed."""
    power = np.abs(stream.h[:, ant_b, :]) ** 2
    power = np.where(power > 0, power, np.finfo(float).tiny)
    ratio = (conjugate_multiply(stream, ant_a, ant_b) / power).mean(axis=1)
    return ratio - ratio.mean()


def _dominant_frequency(segment, fs, cfg: DopplerConfig, f_max):
    """Signed frequency of the strongest spectral line, or None."""
    n = segment.size
    # slow drifts (array-angle change, static offsets) would leak just above
    # the DC cut; a linear detrend removes them without touching real lines
    segment = detrend(segment, type="linear")
    win = np.hanning(n)
    nfft = int(2 ** np.ceil(np.log2(n * cfg.nfft_factor)))
    spec = np.fft.fftshift(np.fft.fft(segment * win, nfft))
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft, 1.0 / fs))
    power = np.abs(spec) ** 2
    band = (np.abs(freqs) >= cfg.dc_cut_hz) & (np.abs(freqs) <= f_max)
    if not band.any():
        return None
    energy = float(np.sum(np.abs(segment) ** 2))
    candidates = np.where(band, power, -np.inf)
    k = int(np.argmax(candidates))
    peak = power[k]
    floor = float(np.median(power[band]))
    # a maximum on the band edge is DC leakage, not a Doppler line
    if not (0 < k < nfft - 1 and band[k - 1] and band[k + 1]):
        return None
    if energy <= 0 or peak <= 1e-20 * nfft * energy or peak < cfg.peak_dominance * floor:
        return None
    # parabolic refinement on the log spectrum
    f = freqs[k]
    lm, l0, lp = np.log(power[k - 1:k + 2] + 1e-300)
    denom = lm - 2 * l0 + lp
    if denom < 0:
        delta = 0.5 * (lm - lp) / denom
        f = f + float(np.clip(delta, -0.5, 0.5)) * (freqs[1] - freqs[0])
    return float(f)


def estimate_doppler_velocity(stream: CsiStream, wavelength: float,
                              cfg: DopplerConfig | None = None) -> DopplerSeries:
    """Short-time Doppler velocity of the reflected path.

    Each STFT window of the CSI-ratio series yields one sample at the window
    centre.  Windows without a dominant line at least one STFT bin (and
    ``dc_cut_hz``) away from DC are emitted
    as ``v_d = 0`` with ``low_confidence`` set; that is how the tangential
    blind spot shows up.
    """
    cfg = cfg or DopplerConfig()
    if cfg.window & (cfg.window - 1):
        raise ValueError("STFT window must be a power of two")
    if len(stream) < cfg.window:
        raise InsufficientData(
            f"stream has {len(stream)} packets, one STFT window needs {cfg.window}"
        )
    fs = stream.sample_rate
    f_max = cfg.v_max / wavelength
    blind = cfg.blind_hz(fs)
    series = csi_ratio_series(stream, *cfg.antenna_pair)
    check = None
    if cfg.check_pair is not None:
        check = csi_ratio_series(stream, *cfg.check_pair)

    starts = range(0, len(stream) - cfg.window + 1, cfg.hop)
    times, v_d, flags = [], [], []
    for start in starts:
        seg = slice(start, start + cfg.window)
        times.append(stream.times[start + cfg.window // 2])
        f = _dominant_frequency(series[seg], fs, cfg, f_max)
        # a line within one STFT bin of DC is not resolvable from the static path
        low = f is None or abs(f) < blind
        if not low and check is not None:
            f_check = _dominant_frequency(check[seg], fs, cfg, f_max)
            if f_check is not None and np.sign(f_check) != np.sign(f):
                low = True
        # the ratio rotates against the path-length change
        v_d.append(0.0 if low else -f * wavelength)
        flags.append(low)
    return DopplerSeries(np.array(times), np.array(v_d), np.array(flags))


def integrate_path_change(series: DopplerSeries, t0: float, t1: float) -> float:
    """Trapezoidal integral of the Doppler velocity over ``[t0, t1]``."""
    times, v = series.times, series.v_d
    if times.size == 0:
        raise OutOfRange("empty Doppler series")
    eps = 1e-9
    if t0 > t1 or t0 < times[0] - eps or t1 > times[-1] + eps:
        raise OutOfRange(
            f"[{t0:.3f}, {t1:.3f}] outside series support [{times[0]:.3f}, {times[-1]:.3f}]"
        )
    inside = (times > t0) & (times < t1)
    t = np.concatenate([[t0], times[inside], [t1]])
    y = np.concatenate([[np.interp(t0, times, v)], v[inside], [np.interp(t1, times, v)]])
    return float(np.trapezoid(y, t))


def estimate_aoa(window: CsiStream, wavelength: float, spacing: float,
                 cfg: DopplerConfig | None = None, isolate_dynamic: bool = True) -> float:
    """Angle of arrival (from the array axis) by adjacent-antenna phase difference.

    With ``isolate_dynamic`` the cross-antenna products are demodulated at
    the window's Doppler line, which keeps only the moving reflector and
    rejects the (much stronger) static path.  When there is no Doppler line,
    or isolation is off, the raw inter-antenna phase difference is used.
    """
    if len(window) == 0:
        raise InsufficientData("empty AoA window")
    if spacing > wavelength / 2 * (1 + 1e-9):
        raise AmbiguousAoa("antenna spacing exceeds half a wavelength")
    cfg = cfg or DopplerConfig()
    h = window.h
    f = None
    if isolate_dynamic and len(window) >= 16:
        fs = window.sample_rate
        ratio = csi_ratio_series(window, 1, 0)
        f = _dominant_frequency(ratio, fs, cfg, cfg.v_max / wavelength)
    if f is not None:
        # h_k conj(h_0) = static DC + D_k conj(S_0) + S_k conj(D_0).  The
        # ratio's own phasor follows D conj(S) even when the tone chirps, so
        # a joint fit on [1, tone, conj(tone)] keeps the image term out.
        k = max(1, int(round(fs / (4 * cfg.v_max / wavelength))))
        smooth = np.convolve(ratio, np.ones(k) / k, mode="same")
        mag = np.abs(smooth)
        tone = np.where(mag > 0, smooth / np.where(mag > 0, mag, 1.0), 0.0)
        basis = np.column_stack([np.ones(len(window)), tone, np.conj(tone)])
        products = (h * np.conj(h[:, :1, :])).reshape(len(window), -1)
        coef, *_ = np.linalg.lstsq(basis, products, rcond=None)
        comps = coef[1].reshape(h.shape[1], h.shape[2])
    else:
        comps = np.moveaxis(h, 0, -1)  # (antennas, subcarriers, time)
    pair = comps[1:] * np.conj(comps[:-1])
    dtheta = float(np.angle(pair.sum()))
    u = dtheta * wavelength / (2 * np.pi * spacing)
    if abs(u) > 1 + 1e-9:
        raise AmbiguousAoa(f"phase difference {dtheta:.3f} rad maps outside [-1, 1]")
    return float(np.arccos(np.clip(u, -1.0, 1.0)))


def estimate_aoa_series(stream: CsiStream, wavelength: float, spacing: float,
                        cfg: DopplerConfig | None = None) -> AoaSeries:
    """AoA of the moving reflector per short window; NaN without a Doppler line."""
    cfg = cfg or DopplerConfig()
    if len(stream) < cfg.aoa_window:
        raise InsufficientData("stream shorter than one AoA window")
    fs = stream.sample_rate
    blind = cfg.blind_hz(fs)
    times, alpha = [], []
    for start in range(0, len(stream) - cfg.aoa_window + 1, cfg.aoa_hop):
        win = stream[start:start + cfg.aoa_window]
        times.append(stream.times[start + cfg.aoa_window // 2])
        f = _dominant_frequency(csi_ratio_series(win, 1, 0), fs, cfg, cfg.v_max / wavelength)
        if f is None or abs(f) < blind:
            alpha.append(np.nan)
            continue
        try:
            alpha.append(estimate_aoa(win, wavelength, spacing, cfg))
        except AmbiguousAoa:
            alpha.append(np.nan)
    return AoaSeries(np.array(times), np.array(alpha))
