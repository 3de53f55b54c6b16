import filecmp

import numpy as np
import pytest

from pitchml.evaluation import ffe
from pitchml.pipeline import Config, CorpusManifest, reference_track, stored_reference
from pitchml.signal import FrameGrid, load_waveform
from pitchml.synth import CorpusSpec, generate, room_noise, synth_corpus, truth_path

SMALL = CorpusSpec(utterances=1, duration_s=3.0)


def test_files_readable_and_references_recovered(tmp_path):
    manifest = CorpusManifest.read(synth_corpus(SMALL, seed=0, out_dir=tmp_path))
    assert len(manifest) == 2 and manifest.speakers == ["spk_low", "spk_high"]
    for e in manifest.entries:
        speech, egg = load_waveform(e.speech), load_waveform(e.egg)
        assert speech.sample_rate == egg.sample_rate == 16000
        assert len(speech.samples) == len(egg.samples) == 48000
        stored = stored_reference(e)
        grid = FrameGrid.for_length(len(egg.samples), egg.sample_rate)
        recovered = reference_track(egg, grid, Config())
        assert ffe(recovered, stored) < 0.5
        assert 0.2 < stored.voiced.mean() < 0.9


def test_fixed_seed_bit_identical(tmp_path):
    a = synth_corpus(SMALL, seed=4, out_dir=tmp_path / "a").parent
    b = synth_corpus(SMALL, seed=4, out_dir=tmp_path / "b").parent
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    assert not mismatch and not errors
    c = synth_corpus(SMALL, seed=5, out_dir=tmp_path / "c").parent
    assert not filecmp.cmp(a / "spk_low_000.wav", c / "spk_low_000.wav", shallow=False)


def test_infinite_snr_means_no_noise():
    spec = CorpusSpec.from_dict({"utterances": 1, "duration_s": 2.0, "snr_db": float("inf")})
    assert spec.snr_db is None
    clean = generate(spec, seed=1)[0].speech.samples
    noisy = generate(CorpusSpec(utterances=1, duration_s=2.0, snr_db=20.0), seed=1)[0].speech.samples
    lead = np.flatnonzero(clean)[0]
    assert lead > 0 and not clean[:lead].any()  # nothing but the signal itself
    assert np.count_nonzero(noisy[:lead]) > 0.5 * lead


def test_spec_validation():
    with pytest.raises(ValueError, match="unknown"):
        CorpusSpec.from_dict({"speakerz": []})
    with pytest.raises(ValueError):
        CorpusSpec.from_dict({"utterances": 0})


def test_stored_contour_matches_excitation():
    utt = generate(SMALL, seed=2)[0]
    ref = utt.reference.track
    f = ref.f0[ref.voiced]
    assert np.all((f >= 60) & (f <= 400))
    # frames far from any glottal pulse are unvoiced
    grid = FrameGrid.for_length(len(utt.speech.samples), 16000)
    centres = grid.starts + grid.frame_length // 2
    dist = np.min(np.abs(centres[:, None] - utt.gcis[None, :]), axis=1)
    assert not ref.voiced[dist > 1600].any()


def test_room_noise_unit_variance():
    x = room_noise(16000, np.random.default_rng(0))
    assert np.std(x) == pytest.approx(1.0)


def test_truth_path_naming(tmp_path):
    assert truth_path(tmp_path / "spk1_000.wav").name == "spk1_000_f0.csv"
