"""Per-frame voicing features and F0 candidates.

Sixteen voicing measurements are computed per 5 ms frame: nine on the speech
signal (time, spectral, residual and cepstral domains) and seven on the
mean-based signal (MS), a pitch-synchronously smoothed copy of the waveform
whose window length needs a rough speaker-average F0. Extraction therefore
runs in two passes: speech features first, then the average F0 from the
autocorrelation track, then the MS features.

Most functions accept either one frame or a (n_frames, frame_length) matrix;
scalar inputs give scalar outputs.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from .signal import (
    LOG_FLOOR,
    FrameGrid,
    Waveform,
    default_fft_size,
    frame_samples,
    hann,
    magnitude_spectrum,
    normalized_autocorrelation,
    square_difference_function,
)

log = logging.getLogger(__name__)

FEATURE_NAMES = (
    "zcr", "ac_peak", "clarity", "ssh", "ssh_star", "srh", "srh_star", "tilt", "cpp",
    "zcr_ms", "ac_ms", "clarity_ms", "ssh_ms", "ssh_star_ms", "tilt_ms", "cpp_ms",
)
CANDIDATE_NAMES = ("f0_ac", "f0_ssh", "f0_srh", "f0_cpp", "f0_ac_ms", "f0_ssh_ms", "f0_cpp_ms")
CSV_HEADER = ("frame_time_s",) + FEATURE_NAMES + CANDIDATE_NAMES

# Columns that carry absolute signal scale.
SCALE_DEPENDENT = ("ssh_star", "srh_star", "ssh_star_ms")

CLARITY_KEY_RATIO = 0.8
AC_KEY_RATIO = 0.9
CHUNK = 1024
RELATIVE_FLOOR = 1e-8


@dataclass(frozen=True)
class F0SearchRange:
    f0_min: float = 60.0
    f0_max: float = 400.0

    def __post_init__(self):
        if not (0 < self.f0_min < self.f0_max):
            raise ValueError(f"need 0 < f0_min < f0_max, got {self.f0_min}, {self.f0_max}")

    def check(self, sample_rate: int) -> "F0SearchRange":
        if self.f0_max >= sample_rate / 4:
            raise ValueError(f"f0_max {self.f0_max} Hz must stay below sample_rate/4")
        return self

    def lags(self, sample_rate: int, frame_length: int) -> tuple[int, int]:
        lo = max(1, int(np.floor(sample_rate / self.f0_max)))
        hi = min(frame_length - 1, int(np.ceil(sample_rate / self.f0_min)))
        if hi - lo < 2:
            raise ValueError(f"lag range [{lo}, {hi}] is empty for this frame length")
        return lo, hi

    def clip(self, f0):
        return np.clip(f0, self.f0_min, self.f0_max)


def _log_magnitude(mag):
    """Natural log of a magnitude spectrum with a floor relative to each frame's peak.

    A scale-relative floor keeps the log spectrum's shape, and so the tilt
    and cepstral features, independent of the signal level. At -160 dB it
    sits well above FFT round-off yet far below anything audible.
    """
    peak = np.max(mag, axis=-1, keepdims=True)
    return np.log(mag + np.where(peak > 0, RELATIVE_FLOOR * peak, LOG_FLOOR))


def _as_matrix(frame):
    frame = np.asarray(frame, dtype=np.float64)
    return np.atleast_2d(frame), frame.ndim == 1


def _out(single, *arrays):
    if single:
        arrays = tuple(a[0].item() if np.ndim(a) else a for a in arrays)
    return arrays[0] if len(arrays) == 1 else arrays


def zcr(frame):
    """Fraction of adjacent sample pairs whose sign (zero counted positive) flips."""
    x, single = _as_matrix(frame)
    if x.shape[1] == 0:
        raise ValueError("empty frame")
    if x.shape[1] == 1:
        return _out(single, np.zeros(x.shape[0]))
    neg = x < 0
    rate = np.count_nonzero(neg[:, 1:] != neg[:, :-1], axis=1) / (x.shape[1] - 1)
    return _out(single, rate)


def _first_key_maximum(curve, ratio):
    """Index of the first interior local max >= ratio * global max, else the global argmax."""
    gidx = np.argmax(curve, axis=1)
    gmax = curve[np.arange(len(curve)), gidx]
    mid = curve[:, 1:-1]
    local = (mid > curve[:, :-2]) & (mid >= curve[:, 2:])
    key = local & (mid >= ratio * gmax[:, None]) & (gmax[:, None] > 0)
    has = key.any(axis=1)
    return np.where(has, np.argmax(key, axis=1) + 1, gidx)


def _parabolic_offset(curve, idx):
    n = curve.shape[1]
    rows = np.arange(len(curve))
    inner = (idx > 0) & (idx < n - 1)
    i = np.clip(idx, 1, n - 2)
    a, b, c = curve[rows, i - 1], curve[rows, i], curve[rows, i + 1]
    den = a - 2 * b + c
    off = np.where(np.abs(den) > 1e-12, 0.5 * (a - c) / np.where(den == 0, 1, den), 0.0)
    return np.where(inner, np.clip(off, -0.5, 0.5), 0.0)


def ac_peak_and_f0(frame, sample_rate: int, search_range: F0SearchRange = F0SearchRange()):
    """Autocorrelation peak height and the F0 it implies.

    The peak value is the maximum of the normalized autocorrelation over the
    lags of the search range. The F0 lag is the first local maximum reaching
    90% of that peak (guards against picking a multiple of the period, which
    the overlap-normalized curve scores almost as high), refined by parabolic
    interpolation.
    """
    x, single = _as_matrix(frame)
    lo, hi = search_range.lags(sample_rate, x.shape[1])
    curve = normalized_autocorrelation(x, (lo, hi))
    peak = curve.max(axis=1)
    idx = _first_key_maximum(curve, AC_KEY_RATIO)
    lag = lo + idx + _parabolic_offset(curve, idx)
    f0 = search_range.clip(sample_rate / lag)
    silent = ~np.any(x != 0, axis=1)
    peak = np.where(silent, 0.0, peak)
    f0 = np.where(silent, search_range.f0_min, f0)
    return _out(single, peak, f0)


def clarity(frame, sample_rate: int, search_range: F0SearchRange = F0SearchRange()):
    """Height of the first key maximum of the NSDF curve."""
    x, single = _as_matrix(frame)
    lo, hi = search_range.lags(sample_rate, x.shape[1])
    curve = square_difference_function(x, (lo, hi))
    idx = _first_key_maximum(curve, CLARITY_KEY_RATIO)
    value = curve[np.arange(len(curve)), idx]
    return _out(single, value)


def spectral_tilt(spectrum_db, sample_rate: int, band=(1000.0, 7000.0)):
    """Least-squares slope (dB/kHz) of the dB spectrum inside ``band``.

    ``spectrum_db`` holds bins 0..fft_size/2. The upper band edge is clipped
    to 95% of Nyquist for low sample rates.
    """
    s, single = _as_matrix(spectrum_db)
    n_bins = s.shape[1]
    fft_size = 2 * (n_bins - 1)
    freqs = np.arange(n_bins) * sample_rate / fft_size
    hi = min(band[1], 0.95 * sample_rate / 2)
    sel = (freqs >= band[0]) & (freqs <= hi)
    if np.count_nonzero(sel) < 8:
        raise ValueError(f"only {np.count_nonzero(sel)} bins inside the tilt band")
    fk = freqs[sel] / 1000.0
    fc = fk - fk.mean()
    y = s[:, sel]
    slope = (y - y.mean(axis=1, keepdims=True)) @ fc / (fc @ fc)
    return _out(single, slope)


def harmonic_fft_size(sample_rate: int) -> int:
    """FFT length for harmonic summation: ~4 Hz bins at 16 kHz."""
    return 1 << int(np.ceil(np.log2(sample_rate / 4)))


def ssh(spectrum, sample_rate: int, search_range: F0SearchRange = F0SearchRange(), n_harmonics: int = 5):
    """Harmonic summation score on a linear amplitude spectrum.

    score(f) = sum_{k=1..n} E(k f) - E((k - 1/2) f), evaluated for every bin
    frequency f in the search range. Returns ``(star, normalized, f0)``:
    ``star`` is the best raw score, ``normalized`` the best score after the
    spectrum is divided by its RMS, ``f0`` the best-scoring frequency.
    """
    E, single = _as_matrix(spectrum)
    n_bins = E.shape[1]
    fft_size = 2 * (n_bins - 1)
    df = sample_rate / fft_size
    if n_harmonics * search_range.f0_min > sample_rate / 2:
        raise ValueError("n_harmonics * f0_min exceeds Nyquist")
    b = np.arange(int(np.ceil(search_range.f0_min / df)), int(np.floor(search_range.f0_max / df)) + 1)
    if len(b) == 0:
        raise ValueError("search range contains no spectral bin")
    k = np.arange(1, n_harmonics + 1)[:, None]
    pos = k * b
    neg = np.rint((k - 0.5) * b).astype(int)
    # bins past Nyquist contribute nothing
    Ep = np.concatenate([E, np.zeros((E.shape[0], 1))], axis=1)
    pos = np.where(pos < n_bins, pos, n_bins)
    neg = np.where(neg < n_bins, neg, n_bins)
    score = Ep[:, pos].sum(axis=1) - Ep[:, neg].sum(axis=1)
    best = np.argmax(score, axis=1)
    star = score[np.arange(len(score)), best]
    rms = np.sqrt(np.mean(E * E, axis=1))
    silent = rms == 0
    norm = np.where(silent, 0.0, star / np.where(silent, 1.0, rms))
    star = np.where(silent, 0.0, star)
    f0 = np.where(silent, search_range.f0_min, search_range.clip(b[best] * df))
    return _out(single, star, norm, f0)


def srh(residual_spectrum, sample_rate: int, search_range: F0SearchRange = F0SearchRange(), n_harmonics: int = 5):
    """Harmonic summation on the linear-prediction residual spectrum; see :func:`ssh`."""
    return ssh(residual_spectrum, sample_rate, search_range, n_harmonics)


def cpp(frame, sample_rate: int, search_range: F0SearchRange = F0SearchRange(), fft_size: int | None = None):
    """Cepstral peak prominence (dB) and the F0 at the cepstral peak."""
    x, single = _as_matrix(frame)
    fft_size = default_fft_size(x.shape[1]) if fft_size is None else fft_size
    log_mag = _log_magnitude(magnitude_spectrum(x, fft_size))
    ceps = np.fft.irfft(log_mag, fft_size, axis=1)
    q_lo = int(np.floor(sample_rate / search_range.f0_max))
    q_hi = min(int(np.ceil(sample_rate / search_range.f0_min)), fft_size // 2)
    q = np.arange(q_lo, q_hi + 1)
    if len(q) < 8:
        raise ValueError("quefrency band shorter than 8 bins")
    band = ceps[:, q]
    qc = q - q.mean()
    slope = (band - band.mean(axis=1, keepdims=True)) @ qc / (qc @ qc)
    intercept = band.mean(axis=1) - slope * q.mean()
    idx = np.argmax(band, axis=1)
    peak_q = q[idx]
    rows = np.arange(len(band))
    prominence = (band[rows, idx] - (intercept + slope * peak_q)) * (20.0 / np.log(10.0))
    f0 = search_range.clip(sample_rate / peak_q)
    silent = ~np.any(x != 0, axis=1)
    prominence = np.where(silent, 0.0, prominence)
    f0 = np.where(silent, search_range.f0_min, f0)
    return _out(single, prominence, f0)


# -- linear-prediction residual ------------------------------------------------

def levinson_durbin(r, order: int):
    """Solve the normal equations for rows of autocorrelation sequences ``r``.

    Returns ``(a, err, stable)`` where ``a`` is the prediction-error filter
    [1, a1, ..., ap] for each row and ``stable`` flags rows whose reflection
    coefficients all stayed strictly inside (-1, 1).
    """
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    n = r.shape[0]
    a = np.zeros((n, order + 1))
    a[:, 0] = 1.0
    err = r[:, 0].copy()
    stable = err > 0
    for i in range(1, order + 1):
        acc = r[:, i] + np.einsum("ij,ij->i", a[:, 1:i], r[:, i - 1:0:-1])
        safe = np.where(stable, err, 1.0)
        k = np.where(stable, -acc / safe, 0.0)
        stable &= np.abs(k) < 1.0
        k = np.where(stable, k, 0.0)
        prev = a[:, 1:i].copy()
        a[:, 1:i] = prev + k[:, None] * prev[:, ::-1]
        a[:, i] = k
        err = err * (1.0 - k * k)
    return a, err, stable


def lp_order(sample_rate: int) -> int:
    return int(round(sample_rate / 1000)) + 2


def lp_residual(w: Waveform, order: int | None = None) -> tuple[Waveform, int]:
    """Inverse-filter ``w`` with frame-wise LPC; returns (residual, n_fallback_frames).

    Each 30 ms Hann-windowed frame (hop = quarter frame) gets its own
    autocorrelation-method predictor; the error signal of the unwindowed
    segment is Hann-weighted and overlap-added. Frames where the recursion
    turns unstable are passed through unfiltered.
    """
    x = w.samples
    fs = w.sample_rate
    p = lp_order(fs) if order is None else int(order)
    grid = FrameGrid.for_length(len(x), fs)
    L = grid.frame_length
    hop = max(1, L // 4)
    starts = np.arange(-L + hop, len(x), hop)
    win = hann(L)
    padded = np.concatenate([np.zeros(L + p), x, np.zeros(2 * L)])
    off = L + p
    out = np.zeros(len(padded))
    norm = np.zeros(len(padded))
    n_bad = 0
    for c0 in range(0, len(starts), CHUNK):
        s = starts[c0:c0 + CHUNK] + off
        seg = padded[s[:, None] - p + np.arange(L + p)[None, :]]
        frames = seg[:, p:] * win
        nfft = 1 << int(np.ceil(np.log2(2 * L)))
        spec = np.fft.rfft(frames, nfft)
        r = np.fft.irfft(spec * np.conj(spec), nfft)[:, : p + 1]
        a, _, stable = levinson_durbin(r, p)
        a[~stable] = 0.0
        a[~stable, 0] = 1.0
        n_bad += int(np.count_nonzero(~stable & (r[:, 0] > 0)))
        e = np.zeros((len(s), L))
        for i in range(p + 1):
            e += a[:, i:i + 1] * seg[:, p - i:p - i + L]
        idx = s[:, None] + np.arange(L)[None, :]
        np.add.at(out, idx, e * win)
        np.add.at(norm, idx, np.broadcast_to(win, e.shape))
    res = np.where(norm > 1e-8, out / np.where(norm > 1e-8, norm, 1.0), 0.0)[off:off + len(x)]
    if n_bad:
        log.info("lp_residual: %d frames fell back to pass-through", n_bad)
    return Waveform(res, fs), n_bad


# -- mean-based signal -------------------------------------------------------------

@dataclass(frozen=True)
class MeanBasedSignal:
    samples: np.ndarray
    sample_rate: int
    window_halfwidth: int

    def as_waveform(self) -> Waveform:
        return Waveform(self.samples, self.sample_rate)


def estimate_mean_f0(ac_peak, f0_ac, threshold: float = 0.6) -> tuple[float, bool]:
    """Median autocorrelation F0 over confidently periodic frames.

    Returns ``(mean_f0, fallback)``; ``fallback`` is True when no frame reached
    ``threshold`` and the median over all frames was used instead.
    """
    ac_peak = np.asarray(ac_peak, dtype=np.float64)
    f0_ac = np.asarray(f0_ac, dtype=np.float64)
    if f0_ac.size == 0:
        raise ValueError("no frames")
    sel = ac_peak >= threshold
    if np.any(sel):
        return float(np.median(f0_ac[sel])), False
    return float(np.median(f0_ac)), True


def mean_based_signal(w: Waveform, mean_f0: float) -> MeanBasedSignal:
    """Blackman-weighted moving average over ~1.75 mean pitch periods (unit DC gain)."""
    length = int(round(1.75 * w.sample_rate / mean_f0))
    if length % 2 == 0:
        length += 1
    length = max(length, 3)
    if length > len(w):
        raise ValueError(f"MS window ({length} samples) is longer than the signal ({len(w)})")
    win = np.blackman(length)
    win = win / win.sum()
    y = np.convolve(w.samples, win, mode="same")
    return MeanBasedSignal(y, w.sample_rate, length // 2)


# -- full extraction -------------------------------------------------------------

@dataclass
class FeatureSet:
    """Dense per-frame feature matrix (16 features + 7 F0 candidates)."""
    times: np.ndarray
    features: np.ndarray
    candidates: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        if name in FEATURE_NAMES:
            return self.features[:, FEATURE_NAMES.index(name)]
        return self.candidates[:, CANDIDATE_NAMES.index(name)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(CSV_HEADER)
            for t, f, c in zip(self.times, self.features, self.candidates):
                out.writerow([repr(float(t))] + [repr(float(v)) for v in f] + [repr(float(v)) for v in c])

    @classmethod
    def from_csv(cls, path) -> "FeatureSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"{path}: not a feature CSV (unexpected header)")
        data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64).reshape(-1, len(CSV_HEADER))
        return cls(data[:, 0], data[:, 1:17], data[:, 17:])


def _speech_domain(frames_raw, frames_win, sample_rate, rng: F0SearchRange, n_harmonics, h_fft):
    """zcr, ac, clarity, ssh*, ssh, tilt, cpp and their candidates for one frame block."""
    z = zcr(frames_raw)
    ac, f0_ac = ac_peak_and_f0(frames_raw, sample_rate, rng)
    cl = clarity(frames_raw, sample_rate, rng)
    s_star, s_norm, f0_s = ssh(magnitude_spectrum(frames_win, h_fft), sample_rate, rng, n_harmonics)
    db = (20.0 / np.log(10.0)) * _log_magnitude(magnitude_spectrum(frames_win, default_fft_size(frames_win.shape[1])))
    tl = spectral_tilt(db, sample_rate)
    cp, f0_cp = cpp(frames_win, sample_rate, rng)
    return dict(zcr=z, ac=ac, clarity=cl, ssh=s_norm, ssh_star=s_star, tilt=tl, cpp=cp,
                f0_ac=f0_ac, f0_ssh=f0_s, f0_cpp=f0_cp)


def _blocks(x, grid, window):
    raw = frame_samples(x, grid)
    for c0 in range(0, grid.n_frames, CHUNK):
        block = raw[c0:c0 + CHUNK]
        yield block, block * window


def extract_all(w: Waveform, search_range: F0SearchRange | None = None, n_harmonics: int = 5,
                mean_f0_threshold: float = 0.6) -> FeatureSet:
    """Two-pass extraction of all 16 features and 7 candidates on the shared 5 ms grid."""
    rng = (search_range or F0SearchRange()).check(w.sample_rate)
    grid = FrameGrid.for_length(len(w), w.sample_rate)
    fs = w.sample_rate
    win = grid.window
    h_fft = max(harmonic_fft_size(fs), default_fft_size(grid.frame_length))

    residual, lp_bad = lp_residual(w)
    first = []
    for (raw, windowed), (_, res_win) in zip(_blocks(w.samples, grid, win), _blocks(residual.samples, grid, win)):
        d = _speech_domain(raw, windowed, fs, rng, n_harmonics, h_fft)
        d["srh_star"], d["srh"], d["f0_srh"] = srh(magnitude_spectrum(res_win, h_fft), fs, rng, n_harmonics)
        first.append(d)
    p1 = {k: np.concatenate([d[k] for d in first]) for k in first[0]}

    mean_f0, fallback = estimate_mean_f0(p1["ac"], p1["f0_ac"], mean_f0_threshold)
    ms = mean_based_signal(w, float(rng.clip(mean_f0)))
    second = [_speech_domain(raw, windowed, fs, rng, n_harmonics, h_fft)
              for raw, windowed in _blocks(ms.samples, grid, win)]
    p2 = {k: np.concatenate([d[k] for d in second]) for k in second[0]}

    feats = np.column_stack([
        p1["zcr"], p1["ac"], p1["clarity"], p1["ssh"], p1["ssh_star"], p1["srh"], p1["srh_star"],
        p1["tilt"], p1["cpp"],
        p2["zcr"], p2["ac"], p2["clarity"], p2["ssh"], p2["ssh_star"], p2["tilt"], p2["cpp"],
    ])
    cands = np.column_stack([
        p1["f0_ac"], p1["f0_ssh"], p1["f0_srh"], p1["f0_cpp"], p2["f0_ac"], p2["f0_ssh"], p2["f0_cpp"],
    ])
    meta = dict(mean_f0=mean_f0, mean_f0_fallback=fallback, lp_fallback_frames=lp_bad,
                ms_halfwidth=ms.window_halfwidth, sample_rate=fs,
                f0_min=rng.f0_min, f0_max=rng.f0_max)
    return FeatureSet(grid.times, feats, cands, meta)
