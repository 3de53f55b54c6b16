import numpy as np
import pytest

from pitchml.features import extract_all
from pitchml.signal import Waveform
from pitchml.synth import CorpusSpec, generate

FS = 16000


def pulse_train(f0, seconds, fs=FS, amplitude=0.5):
    x = np.zeros(int(seconds * fs))
    x[:: int(round(fs / f0))] = amplitude
    return x


def alternating_signal(seed=0, n_segments=8, seg_s=0.4, f0=150.0):
    """Pulse trains and white noise in turn; returns samples and a per-sample voiced mask."""
    rng = np.random.default_rng(seed)
    parts, mask = [], []
    n = int(seg_s * FS)
    for i in range(n_segments):
        if i % 2 == 0:
            parts.append(pulse_train(f0 * rng.uniform(0.8, 1.25), seg_s))
            mask.append(np.ones(n, bool))
        else:
            parts.append(0.1 * rng.standard_normal(n))
            mask.append(np.zeros(n, bool))
    return np.concatenate(parts), np.concatenate(mask)


def frame_labels(mask, n_frames, hop=80, length=480):
    """+1 voiced / 0 unvoiced / -1 mixed, per frame."""
    out = np.full(n_frames, -1)
    for k in range(n_frames):
        span = mask[k * hop:k * hop + length]
        if len(span) == length and span.all():
            out[k] = 1
        elif len(span) and not span.any():
            out[k] = 0
    return out


@pytest.fixture(scope="session")
def alternating_features():
    x, mask = alternating_signal()
    fs = extract_all(Waveform(x, FS))
    return fs, frame_labels(mask, len(fs))


@pytest.fixture(scope="session")
def small_corpus():
    """Two speakers, two 6 s utterances each: (utterances, feature sets)."""
    spec = CorpusSpec(utterances=2, duration_s=6.0)
    utts = generate(spec, seed=11)
    return utts, [extract_all(u.speech) for u in utts]


@pytest.fixture(scope="session")
def disk_corpus(tmp_path_factory):
    """Small on-disk corpus, its prepared utterances and an MLP + median model."""
    from pitchml.pipeline import Config, CorpusManifest, prepare_corpus, train_pipeline
    from pitchml.synth import synth_corpus

    out = tmp_path_factory.mktemp("corpus")
    manifest_path = synth_corpus(CorpusSpec(utterances=2, duration_s=4.0), seed=3, out_dir=out)
    manifest = CorpusManifest.read(manifest_path)
    config = Config()
    prepared = prepare_corpus(manifest, config)
    doc = train_pipeline(manifest, config, prepared=prepared)
    return manifest_path, manifest, prepared, doc


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
