"""Waveform I/O, framing and the shared correlation / spectrum primitives."""
from __future__ import annotations

import math
import os
import wave
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

FRAME_SECONDS = 0.030
HOP_SECONDS = 0.005
LOG_FLOOR = 1e-12


class WaveformError(ValueError):
    """Base class for ingestion failures."""


class UnreadableWaveError(WaveformError):
    pass


class UnsupportedEncodingError(WaveformError):
    pass


class ChannelCountError(WaveformError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ChannelCountError(f"expected mono samples, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise WaveformError("samples contain NaN or Inf")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise WaveformError(f"invalid sample rate {self.sample_rate!r}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def load_waveform(path) -> Waveform:
    """Read a mono PCM16 or IEEE-float WAV file.

    Integer samples are scaled by 1/32768 so that full scale maps to [-1, 1).
    """
    path = os.fspath(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError as exc:
        raise UnreadableWaveError(f"{path}: no such file") from exc
    except ValueError as exc:
        msg = str(exc)
        if "not understood" in msg:  # no RIFF header: not a WAV file at all
            raise UnreadableWaveError(f"{path}: {msg}") from exc
        if "format" in msg.lower() or "bit" in msg.lower():
            raise UnsupportedEncodingError(f"{path}: {msg}") from exc
        raise UnreadableWaveError(f"{path}: {msg}") from exc
    except Exception as exc:  # scipy raises assorted errors on garbage input
        raise UnreadableWaveError(f"{path}: {exc}") from exc

    if data.ndim != 1:
        raise ChannelCountError(f"{path}: {data.shape[1]} channels, mono required")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise UnsupportedEncodingError(f"{path}: sample type {data.dtype} not supported")
    return Waveform(samples, rate)


def save_waveform(path, w: Waveform, pcm16: bool = True) -> None:
    """Write a mono WAV file (PCM16 by default, float32 otherwise)."""
    if pcm16:
        data = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = w.samples.astype(np.float32)
    wavfile.write(os.fspath(path), w.sample_rate, data)


def wav_info(path) -> tuple[int, int]:
    """Return (sample_rate, n_samples) of a PCM WAV without decoding it."""
    with wave.open(os.fspath(path), "rb") as fh:
        return fh.getframerate(), fh.getnframes()


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def hann(n: int) -> np.ndarray:
    """Periodic Hanning window."""
    return np.hanning(n + 1)[:-1]


@dataclass(frozen=True)
class FrameGrid:
    frame_length: int
    hop: int
    n_frames: int
    sample_rate: int

    @classmethod
    def for_length(cls, n_samples: int, sample_rate: int) -> "FrameGrid":
        if n_samples < 1:
            raise WaveformError("cannot frame an empty waveform")
        frame_length = _round_half_up(FRAME_SECONDS * sample_rate)
        hop = _round_half_up(HOP_SECONDS * sample_rate)
        return cls(frame_length, hop, -(-n_samples // hop), sample_rate)

    @property
    def window(self) -> np.ndarray:
        return hann(self.frame_length)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * HOP_SECONDS

    @property
    def starts(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.hop


def frame_samples(x: np.ndarray, grid: FrameGrid) -> np.ndarray:
    """Unwindowed (n_frames, frame_length) matrix; the tail is zero-padded."""
    need = (grid.n_frames - 1) * grid.hop + grid.frame_length
    padded = np.zeros(max(need, len(x)))
    padded[: len(x)] = x
    idx = grid.starts[:, None] + np.arange(grid.frame_length)[None, :]
    return padded[idx]


def frame_signal(w: Waveform, windowed: bool = True) -> tuple[FrameGrid, np.ndarray]:
    """Cut ``w`` into 30 ms frames every 5 ms.

    Returns the grid and a (n_frames, frame_length) matrix, Hanning-windowed
    unless ``windowed`` is False.
    """
    if len(w) == 0:
        raise WaveformError("cannot frame an empty waveform")
    grid = FrameGrid.for_length(len(w), w.sample_rate)
    frames = frame_samples(w.samples, grid)
    if windowed:
        frames = frames * grid.window
    return grid, frames


def _lag_products(frames: np.ndarray, lag_min: int, lag_max: int):
    """Cross products and overlap energies for lags lag_min..lag_max."""
    frames = np.atleast_2d(frames)
    n = frames.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(frames, nfft)
    r = np.fft.irfft(spec * np.conj(spec), nfft)[:, lag_min : lag_max + 1]
    sq = frames * frames
    csum = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(sq, axis=1)], axis=1)
    lags = np.arange(lag_min, lag_max + 1)
    head = csum[:, n - lags]  # sum of x[0 .. n-1-lag]^2
    tail = csum[:, [n]] - csum[:, lags]  # sum of x[lag .. n-1]^2
    return r, head, tail


def _check_lags(n: int, lag_range) -> tuple[int, int]:
    lag_min, lag_max = int(lag_range[0]), int(lag_range[1])
    if lag_min < 0 or lag_min > lag_max:
        raise ValueError(f"invalid lag range {lag_range!r}")
    if lag_max >= n:
        raise ValueError(f"lag_max {lag_max} must be below the frame length {n}")
    return lag_min, lag_max


def normalized_autocorrelation(frame, lag_range) -> np.ndarray:
    """Energy-normalized autocorrelation over the overlapping region.

    ``frame`` may be a single frame or a (n_frames, length) matrix; the result
    has one column per lag in ``lag_range`` (inclusive). Lags with zero
    overlap energy evaluate to 0.
    """
    frame = np.asarray(frame, dtype=np.float64)
    single = frame.ndim == 1
    lag_min, lag_max = _check_lags(frame.shape[-1], lag_range)
    r, head, tail = _lag_products(frame, lag_min, lag_max)
    den = np.sqrt(head * tail)
    ok = den > 1e-300
    ac = np.where(ok, r / np.where(ok, den, 1.0), 0.0)
    ac = np.clip(ac, -1.0, 1.0)
    return ac[0] if single else ac


def square_difference_function(frame, lag_range) -> np.ndarray:
    """NSDF curve 2*sum(x[n]x[n+t]) / sum(x[n]^2 + x[n+t]^2); 0 where undefined."""
    frame = np.asarray(frame, dtype=np.float64)
    single = frame.ndim == 1
    lag_min, lag_max = _check_lags(frame.shape[-1], lag_range)
    r, head, tail = _lag_products(frame, lag_min, lag_max)
    den = head + tail
    ok = den > 1e-300
    out = np.clip(np.where(ok, 2.0 * r / np.where(ok, den, 1.0), 0.0), -1.0, 1.0)
    return out[0] if single else out


def default_fft_size(frame_length: int) -> int:
    return 1 << int(np.ceil(np.log2(2 * frame_length)))


def _check_fft_size(fft_size: int, frame_length: int) -> int:
    fft_size = int(fft_size)
    if fft_size < frame_length:
        raise ValueError(f"fft_size {fft_size} is shorter than the frame ({frame_length})")
    if fft_size & (fft_size - 1):
        raise ValueError(f"fft_size {fft_size} is not a power of two")
    return fft_size


def magnitude_spectrum(frame, fft_size: int | None = None) -> np.ndarray:
    """Linear magnitude |FFT| of a windowed frame (or frame matrix), bins 0..fft_size/2."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1]
    fft_size = default_fft_size(n) if fft_size is None else _check_fft_size(fft_size, n)
    return np.abs(np.fft.rfft(frame, fft_size, axis=-1))


def magnitude_spectrum_db(frame, sample_rate: int, fft_size: int | None = None):
    """Return (bin frequencies in Hz, 20*log10(|FFT| + 1e-12))."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1]
    fft_size = default_fft_size(n) if fft_size is None else _check_fft_size(fft_size, n)
    mag = magnitude_spectrum(frame, fft_size)
    freqs = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    return freqs, 20.0 * np.log10(mag + LOG_FLOOR)
