import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import FS, pulse_train
from pitchml.f0 import (
    F0Fuser, PitchTrack, fit_fuser, fuse_median, predict_track, stack_candidates, voiced_segments,
)
from pitchml.features import CANDIDATE_NAMES, F0SearchRange, extract_all
from pitchml.signal import Waveform

values = st.floats(50, 500, allow_nan=False)


# -- median fuser ----------------------------------------------------------------------

def test_median_all_equal():
    assert np.all(fuse_median(np.full((7, 3), 180.0)) == 180.0)


def test_median_single_outlier_rejected():
    c = np.array([[100.0], [100], [100], [200], [100]])
    assert fuse_median(c, radius=2)[2] == 100.0
    assert np.all(fuse_median(c, radius=2) == 100.0)


def test_median_even_count_averages_centre_pair():
    c = np.array([[100.0, 110.0]])
    assert fuse_median(c, radius=0)[0] == 105.0


def test_median_seven_of_fifteen_corrupted():
    rng = np.random.default_rng(0)
    clean = rng.uniform(180, 190, 15)
    stack = clean.copy()
    bad = rng.choice(15, 7, replace=False)
    stack[bad] = rng.choice([40.0, 900.0], 7)
    c = stack.reshape(5, 3)
    out = fuse_median(c, radius=2)[2]
    good = np.delete(clean, bad)
    assert good.min() <= out <= good.max()


@settings(max_examples=200, deadline=None)
@given(st.lists(values, min_size=1, max_size=15), st.data())
def test_median_brute_force_oracle(vals, data):
    c = np.array(vals)[:, None]
    radius = len(vals)  # every frame sees the whole run
    expect = sorted(vals)
    n = len(expect)
    med = expect[n // 2] if n % 2 else 0.5 * (expect[n // 2 - 1] + expect[n // 2])
    out = fuse_median(c, radius)
    np.testing.assert_allclose(out, med, rtol=1e-12)
    assert np.all((out >= min(vals)) & (out <= max(vals)))
    perm = data.draw(st.permutations(range(len(vals))))
    np.testing.assert_allclose(fuse_median(c[list(perm)], radius), med, rtol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(values, min_size=3, max_size=9), st.data())
def test_median_minority_corruption_stays_in_clean_range(clean, data):
    n = len(clean)
    n_bad = data.draw(st.integers(0, (n - 1) // 2))
    bad_idx = data.draw(st.lists(st.integers(0, n - 1), min_size=n_bad, max_size=n_bad, unique=True))
    stack = np.array(clean, dtype=float)
    for i in bad_idx:
        stack[i] = data.draw(st.sampled_from([1.0, 1e4]))
    good = np.delete(np.array(clean), bad_idx)
    out = fuse_median(stack[None, :], radius=0)[0]
    assert good.min() <= out <= good.max()


def test_median_candidate_permutation_invariant():
    c = np.random.default_rng(1).uniform(80, 300, (20, 3))
    np.testing.assert_array_equal(fuse_median(c), fuse_median(c[:, [2, 0, 1]]))


def test_median_context_is_bounded_by_voiced_run():
    c = np.array([[100.0], [300], [300], [100], [100]])
    voiced = np.array([True, False, True, True, True])
    out = fuse_median(c, radius=2, voiced=voiced)
    assert out[0] == 100.0  # the island sees only itself
    assert np.isnan(out[1])
    assert out[3] == 100.0  # the 300 two frames back is in the run, the one before the gap is not


def test_voiced_segments_and_stack_clamping():
    v = np.array([False, True, True, False, True])
    assert voiced_segments(v) == [(1, 3), (4, 5)]
    c = np.arange(5.0)[:, None]
    s = stack_candidates(c, 1, v)
    np.testing.assert_array_equal(s[1], [1, 1, 2])
    np.testing.assert_array_equal(s[4], [4, 4, 4])


# -- fusers ----------------------------------------------------------------------------

def test_fuser_validation():
    with pytest.raises(ValueError):
        F0Fuser("viterbi")
    with pytest.raises(ValueError):
        F0Fuser("median", subset=())
    f = F0Fuser("median", subset=("f0_ac", "f0_ssh", "f0_ac_ms"), radius=2)
    assert f.input_dim == 15
    with pytest.raises(ValueError):
        f.select(np.zeros((3, 5)))


def test_mlp_idx_learns_exact_candidate():
    rng = np.random.default_rng(2)
    truth = np.concatenate([np.linspace(100, 200, 300), np.full(200, np.nan), np.linspace(220, 150, 300)])
    cands = np.column_stack([truth * rng.uniform(0.7, 1.3, len(truth)), truth,
                             truth * rng.choice([0.5, 2.0], len(truth))])
    cands = np.nan_to_num(cands, nan=100.0)
    f = fit_fuser(cands, truth, "mlp_idx", subset=("f0_ac", "f0_ssh", "f0_srh"), seed=0)
    assert f.meta["label_counts"][1] == np.count_nonzero(~np.isnan(truth))
    voiced = ~np.isnan(truth)
    picked = f.fuse(np.column_stack([cands, np.zeros((len(truth), 4))]), voiced)
    assert np.mean(picked[voiced] == truth[voiced]) >= 0.99


def test_linreg_beats_best_single_candidate():
    rng = np.random.default_rng(3)
    truth = rng.uniform(100, 300, 10_000)
    noisy = truth[:, None] + rng.standard_normal((10_000, 3)) * np.array([5.0, 8.0, 10.0])
    f = fit_fuser(noisy, truth, "linreg", radius=0, subset=("f0_ac", "f0_ssh", "f0_ac_ms"))
    err = f.fuse(noisy) - truth
    best = np.min(np.var(noisy - truth[:, None], axis=0))
    assert np.var(err) < best


def test_knn_reg_exact_training_point():
    truth = np.array([100.0, 150.0, 210.0, 260.0])
    cands = np.column_stack([truth + 1, truth - 3, truth * 1.01])
    f = fit_fuser(cands, truth, "knn_reg", radius=0, knn_k=1)
    np.testing.assert_array_equal(f.fuse(cands), truth)


def test_fit_requires_voiced_frames():
    with pytest.raises(ValueError, match="no voiced"):
        fit_fuser(np.ones((5, 3)), np.full(5, np.nan), "linreg")


def test_fuser_roundtrip():
    rng = np.random.default_rng(4)
    truth = rng.uniform(100, 200, 200)
    cands = truth[:, None] * rng.uniform(0.9, 1.1, (200, 3))
    for kind in ("median", "linreg", "knn_reg", "mlp_idx"):
        f = fit_fuser(cands, truth, kind, mlp_options={"epochs": 3})
        back = F0Fuser.from_dict(f.to_dict())
        np.testing.assert_array_equal(f.fuse(cands), back.fuse(cands))


# -- predict_track ---------------------------------------------------------------------

def test_all_unvoiced_track():
    t = predict_track(np.zeros(10, bool), np.full((10, 7), 150.0), F0Fuser())
    assert not t.voiced.any() and np.all(np.isnan(t.f0))


def test_200hz_pulse_train_median():
    fs = extract_all(Waveform(pulse_train(200, 1.0), FS))
    t = predict_track(np.ones(len(fs), bool), fs.candidates, F0Fuser(), times=fs.times)
    assert np.all(np.abs(t.f0 - 200) <= 2)


def test_one_frame_island_uses_own_candidates():
    c = np.full((5, 7), 300.0)
    c[2] = 120.0
    t = predict_track([False, False, True, False, False], c, F0Fuser())
    assert t.f0[2] == 120.0


def test_clipping_length_check_and_bijection():
    rng = np.random.default_rng(5)
    c = rng.uniform(20, 900, (50, 7))
    v = rng.uniform(size=50) < 0.5
    t = predict_track(v, c, F0Fuser(radius=0), F0SearchRange(60, 400))
    assert np.array_equal(~np.isnan(t.f0), v)
    assert np.all((t.f0[v] >= 60) & (t.f0[v] <= 400))
    np.testing.assert_allclose(np.diff(t.times), 0.005)
    with pytest.raises(ValueError):
        predict_track(v[:-1], c, F0Fuser())


# -- PitchTrack ------------------------------------------------------------------------

def test_pitch_track_invariants():
    with pytest.raises(ValueError):
        PitchTrack([0, 0.005], [True, False], [np.nan, np.nan])
    with pytest.raises(ValueError):
        PitchTrack([0, 0.005], [False, False], [100.0, np.nan])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.one_of(st.none(), st.floats(60, 400)), min_size=0, max_size=40))
def test_pitch_track_csv_bit_exact(tmp_path_factory, spec):
    path = tmp_path_factory.mktemp("pt") / "t.csv"
    voiced = np.array([v is not None for v in spec], dtype=bool)
    f0 = np.array([np.nan if v is None else v for v in spec], dtype=float)
    t = PitchTrack(np.arange(len(spec)) * 0.005, voiced, f0)
    t.to_csv(path)
    back = PitchTrack.from_csv(path)
    np.testing.assert_array_equal(back.times, t.times)
    np.testing.assert_array_equal(back.voiced, t.voiced)
    np.testing.assert_array_equal(back.f0, t.f0)


def test_default_subset_names():
    assert F0Fuser().subset == ("f0_ac", "f0_ssh", "f0_ac_ms")
    assert set(F0Fuser().subset) <= set(CANDIDATE_NAMES)
