"""Seeded synthetic speech + pseudo-EGG corpora with known F0 contours.

Voiced stretches are glottal pulse trains shaped by a two-pole source
low-pass, lip radiation and a cascade of formant resonators; some get
added frication (voiced fricatives). Unvoiced stretches are coloured noise
(fricative-like or whisper-like) or near-silence carrying faint room tone.
White Gaussian noise is added at the requested SNR, measured against the
voiced power. The pseudo-EGG rises sharply at every pulse and relaxes
exponentially, so its first difference peaks at the closure instants. The
stored contour maps the exact pulse instants onto the analysis grid.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter

from .groundtruth import gci_to_reference
from .signal import FrameGrid, Waveform, save_waveform

DEFAULT_SPEAKERS = (
    {"id": "spk_low", "f0_mean": 110.0, "formant_scale": 1.0},
    {"id": "spk_high", "f0_mean": 215.0, "formant_scale": 1.17},
)
VOWELS = ((730, 1090, 2440), (270, 2290, 3010), (530, 1840, 2480), (660, 1720, 2410),
          (300, 870, 2240), (570, 840, 2410), (440, 1020, 2240), (490, 1350, 1690))
BANDWIDTHS = (90.0, 110.0, 170.0)
F0_SPREAD_OCT = 0.2
VOICED_FRICATIVE_RATE = 0.15


@dataclass
class CorpusSpec:
    speakers: list = field(default_factory=lambda: [dict(s) for s in DEFAULT_SPEAKERS])
    utterances: int = 10
    duration_s: float = 15.0
    snr_db: float | None = 20.0
    sample_rate: int = 16000
    voiced_s: tuple = (0.4, 1.5)
    unvoiced_s: tuple = (0.2, 0.8)

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown corpus spec keys: {sorted(unknown)}")
        if "snr_db" in d and d["snr_db"] is not None and not np.isfinite(d["snr_db"]):
            d["snr_db"] = None
        spec = cls(**d)
        if spec.utterances < 1 or spec.duration_s <= 0 or not spec.speakers:
            raise ValueError("corpus spec needs speakers, utterances >= 1 and duration_s > 0")
        return spec


@dataclass
class Utterance:
    speaker: str
    speech: Waveform
    egg: Waveform
    gcis: np.ndarray
    reference: object  # ReferenceTrack


def _resonator(freq, bw, fs):
    r = np.exp(-np.pi * bw / fs)
    theta = 2 * np.pi * freq / fs
    a = [1.0, -2 * r * np.cos(theta), r * r]
    return [sum(a)], a  # unit gain at DC


def _formant_filter(x, formants, fs):
    for f, bw in zip(formants, BANDWIDTHS):
        if f < 0.45 * fs:
            b, a = _resonator(f, bw, fs)
            x = lfilter(b, a, x)
    return x


def room_noise(n, rng, fs=16000, exponent=2.0, low_cut=20.0):
    """Unit-variance noise with a 1/f**exponent power spectrum above ``low_cut`` Hz."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(len(spec)) * fs / n
    spec = spec / np.maximum(f, low_cut) ** (exponent / 2)
    b, a = butter(2, low_cut / (fs / 2), "high")
    x = lfilter(b, a, np.fft.irfft(spec, n))
    return x / (np.std(x) or 1.0)


def _pulse_positions(start, n, f0_start, f0_end, fs, rng):
    """Pulse sample indices for a linearly gliding, slightly jittered F0."""
    t = np.arange(n) / fs
    f0 = f0_start + (f0_end - f0_start) * t / max(t[-1], 1e-9)
    f0 = f0 * (1 + 0.01 * np.sin(2 * np.pi * rng.uniform(3, 6) * t + rng.uniform(0, 2 * np.pi)))
    phase = np.cumsum(f0) / fs + rng.uniform(0, 0.5)
    crossings = np.flatnonzero(np.diff(np.floor(phase)) > 0) + 1
    return start + crossings


def _egg_wave(gcis, n, fs):
    egg = np.zeros(n)
    for g, nxt in zip(gcis[:-1], gcis[1:]):
        p = nxt - g
        seg = np.arange(p)
        egg[g:nxt] = np.exp(-seg / (0.3 * p))
    if len(gcis) >= 2:
        p = gcis[-1] - gcis[-2]
        end = min(n, gcis[-1] + p)
        egg[gcis[-1]:end] = np.exp(-np.arange(end - gcis[-1]) / (0.3 * p))
    return 0.5 * egg


def synth_utterance(speaker: dict, spec: CorpusSpec, rng: np.random.Generator) -> Utterance:
    fs = spec.sample_rate
    n = int(round(spec.duration_s * fs))
    clean = np.zeros(n + fs)
    voiced_mask = np.zeros(n, dtype=bool)
    gcis = []
    f_mean = float(speaker["f0_mean"])
    f_lo, f_hi = f_mean * 2 ** -0.5, f_mean * 2 ** 0.5
    scale = float(speaker.get("formant_scale", 1.0))
    # glottal low-pass (two poles) followed by lip radiation (differentiator): no DC
    b_src, a_src = [1.0, -1.0], np.convolve([1.0, -0.95], [1.0, -0.95])

    pos, voiced = int(rng.uniform(*spec.unvoiced_s) * fs * 0.5), False
    while pos < n:
        voiced = not voiced
        length = int(rng.uniform(*(spec.voiced_s if voiced else spec.unvoiced_s)) * fs)
        length = min(length, n - pos)
        if length <= 0:
            break
        formants = np.array(VOWELS[rng.integers(len(VOWELS))]) * scale * rng.uniform(0.92, 1.08)
        if voiced:
            f0a = np.clip(f_mean * 2 ** (F0_SPREAD_OCT * rng.standard_normal()), f_lo, f_hi)
            f0b = np.clip(f0a * 2 ** (0.15 * rng.standard_normal()), f_lo, f_hi)
            p = _pulse_positions(pos, length, f0a, f0b, fs, rng)
            exc = np.zeros(length + fs // 20)
            exc[p - pos] = rng.uniform(0.6, 1.0) * (1 + 0.05 * rng.standard_normal(len(p)))
            seg = _formant_filter(lfilter(b_src, a_src, exc), formants, fs)
            if rng.uniform() < VOICED_FRICATIVE_RATE:
                b, a = butter(2, rng.uniform(2500, 4500) / (fs / 2), "high")
                hiss = lfilter(b, a, rng.standard_normal(length))
                seg[:length] += rng.uniform(0.5, 1.5) * np.std(seg[:length]) * hiss / np.std(hiss)
            gcis.extend(p.tolist())
            voiced_mask[pos:pos + length] = True
        else:
            kind = rng.integers(3)
            noise = rng.standard_normal(length)
            if kind == 0:  # fricative-like
                b, a = butter(2, rng.uniform(2000, 4000) / (fs / 2), "high")
                seg = 0.3 * lfilter(b, a, noise)
            elif kind == 1:  # whisper-like
                seg = 0.05 * _formant_filter(noise, formants, fs)
            else:  # pause
                seg = 1e-3 * room_noise(length, rng, fs)
            seg = seg * rng.uniform(0.3, 1.0)
        clean[pos:pos + len(seg)] += seg
        pos += length
    clean = clean[:n]
    if np.any(voiced_mask):
        ref_power = np.mean(clean[voiced_mask] ** 2)
    else:
        ref_power = np.mean(clean ** 2) or 1.0
    speech = clean.copy()
    if spec.snr_db is not None:
        speech += np.sqrt(ref_power / 10 ** (spec.snr_db / 10)) * rng.standard_normal(n)
    speech *= 0.9 / max(np.max(np.abs(speech)), 1e-12)
    # PCM16 round trip so in-memory and on-disk corpora agree exactly
    speech = np.clip(np.round(speech * 32768), -32768, 32767) / 32768
    gcis = np.asarray(gcis, dtype=np.int64)
    egg = _egg_wave(gcis, n, fs)
    egg = np.clip(np.round(egg * 32768), -32768, 32767) / 32768
    grid = FrameGrid.for_length(n, fs)
    return Utterance(speaker["id"], Waveform(speech, fs), Waveform(egg, fs), gcis, gci_to_reference(gcis, grid))


def generate(spec: CorpusSpec | dict | None = None, seed: int = 0) -> list[Utterance]:
    """In-memory corpus, speaker-major order."""
    spec = CorpusSpec() if spec is None else spec
    spec = CorpusSpec.from_dict(spec) if isinstance(spec, dict) else spec
    rng = np.random.default_rng(seed)
    return [synth_utterance(spk, spec, rng) for spk in spec.speakers for _ in range(spec.utterances)]


def truth_path(speech_path) -> Path:
    p = Path(speech_path)
    return p.with_name(p.stem + "_f0.csv")


def synth_corpus(spec: CorpusSpec | dict | None = None, seed: int = 0, out_dir=".") -> Path:
    """Write speech/EGG WAVs, stored contours and a manifest; returns the manifest path."""
    spec = CorpusSpec() if spec is None else spec
    spec = CorpusSpec.from_dict(spec) if isinstance(spec, dict) else spec
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    counters: dict = {}
    for utt in generate(spec, seed):
        i = counters[utt.speaker] = counters.get(utt.speaker, -1) + 1
        speech = out / f"{utt.speaker}_{i:03d}.wav"
        egg = out / f"{utt.speaker}_{i:03d}_egg.wav"
        save_waveform(speech, utt.speech)
        save_waveform(egg, utt.egg)
        utt.reference.track.to_csv(truth_path(speech))
        lines.append(f"{utt.speaker}\t{speech.name}\t{egg.name}")
    manifest = out / "manifest.tsv"
    manifest.write_text("\n".join(lines) + "\n")
    with open(out / "corpus_spec.json", "w") as fh:
        json.dump({**spec.__dict__, "seed": seed}, fh, indent=2, default=list)
    return manifest
