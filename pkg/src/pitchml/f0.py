"""F0 contour estimation inside voiced segments by fusing candidate estimators."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .features import CANDIDATE_NAMES, F0SearchRange
from .ml import (
    Standardizer, fit_linreg, fit_mlp, knn_regress, model_from_dict, model_to_dict,
    standardize_fit,
)
from .ml.knn import KnnModel
from .signal import HOP_SECONDS

FUSER_KINDS = ("median", "linreg", "knn_reg", "mlp_idx")
DEFAULT_SUBSET = ("f0_ac", "f0_ssh", "f0_ac_ms")


@dataclass
class PitchTrack:
    """Per-frame contour on the 5 ms grid; ``f0`` is NaN on unvoiced frames."""
    times: np.ndarray
    voiced: np.ndarray
    f0: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        if not (len(self.times) == len(self.voiced) == len(self.f0)):
            raise ValueError("times, voiced and f0 must have equal length")
        if np.any(np.isnan(self.f0[self.voiced])) or np.any(~np.isnan(self.f0[~self.voiced])):
            raise ValueError("f0 must be present exactly on voiced frames")

    def __len__(self):
        return len(self.times)

    @classmethod
    def unvoiced(cls, n_frames: int) -> "PitchTrack":
        return cls(np.arange(n_frames) * HOP_SECONDS, np.zeros(n_frames, bool), np.full(n_frames, np.nan))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["time_s", "voiced", "f0_hz"])
            for t, v, f in zip(self.times, self.voiced, self.f0):
                out.writerow([repr(float(t)), int(v), repr(float(f)) if v else ""])

    @classmethod
    def from_csv(cls, path) -> "PitchTrack":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["time_s", "voiced", "f0_hz"]:
            raise ValueError(f"{path}: not a pitch-track CSV (unexpected header)")
        times, voiced, f0 = [], [], []
        for row in rows[1:]:
            times.append(float(row[0]))
            voiced.append(row[1] == "1")
            f0.append(float(row[2]) if row[2] != "" else np.nan)
        return cls(np.array(times), np.array(voiced, dtype=bool), np.array(f0))


def voiced_segments(voiced) -> list[tuple[int, int]]:
    """Half-open [start, stop) index ranges of consecutive voiced frames."""
    v = np.concatenate([[False], np.asarray(voiced, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(v.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


def _segment_bounds(voiced, n):
    """Per-frame [lo, hi) of the voiced run containing it (whole track when ``voiced`` is None)."""
    lo = np.zeros(n, dtype=np.int64)
    hi = np.full(n, n, dtype=np.int64)
    if voiced is not None:
        for s, e in voiced_segments(voiced):
            lo[s:e], hi[s:e] = s, e
    return lo, hi


def stack_candidates(candidates, radius: int, voiced=None) -> np.ndarray:
    """(n, n_cand * (2r+1)) context stack; neighbours are clamped to the voiced run."""
    c = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    n = len(c)
    lo, hi = _segment_bounds(voiced, n)
    idx = np.arange(n)[:, None] + np.arange(-radius, radius + 1)[None, :]
    idx = np.clip(idx, lo[:, None], hi[:, None] - 1)
    return c[idx].reshape(n, -1)


def fuse_median(candidates, radius: int = 2, voiced=None) -> np.ndarray:
    """Median of all candidate values within +-radius frames of the same voiced run.

    Frames outside the run are left out of the pool (not replicated).
    Returns NaN on unvoiced frames when ``voiced`` is given.
    """
    c = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if c.shape[1] < 1:
        raise ValueError("need at least one candidate")
    n = len(c)
    lo, hi = _segment_bounds(voiced, n)
    idx = np.arange(n)[:, None] + np.arange(-radius, radius + 1)[None, :]
    inside = (idx >= lo[:, None]) & (idx < hi[:, None])
    pool = c[np.clip(idx, 0, n - 1)]  # (n, 2r+1, n_cand)
    pool = np.where(inside[:, :, None], pool, np.nan).reshape(n, -1)
    out = np.nanmedian(pool, axis=1) if n else np.empty(0)
    if voiced is not None:
        out = np.where(np.asarray(voiced, dtype=bool), out, np.nan)
    return out


@dataclass
class F0Fuser:
    kind: str = "median"
    subset: tuple = DEFAULT_SUBSET
    radius: int = 2
    model: object = None
    standardizer: Standardizer | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FUSER_KINDS:
            raise ValueError(f"fuser kind must be one of {FUSER_KINDS}")
        self.subset = tuple(self.subset)
        if not self.subset or any(s not in CANDIDATE_NAMES for s in self.subset):
            raise ValueError(f"candidate subset must be a nonempty subset of {CANDIDATE_NAMES}")

    @property
    def columns(self) -> list[int]:
        return [CANDIDATE_NAMES.index(s) for s in self.subset]

    @property
    def input_dim(self) -> int:
        return len(self.subset) * (2 * self.radius + 1)

    def select(self, candidates) -> np.ndarray:
        c = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
        if c.shape[1] == len(CANDIDATE_NAMES):
            return c[:, self.columns]
        if c.shape[1] == len(self.subset):
            return c
        raise ValueError(f"expected {len(CANDIDATE_NAMES)} or {len(self.subset)} candidate columns")

    def fuse(self, candidates, voiced=None) -> np.ndarray:
        """Fused F0 per frame (NaN where ``voiced`` is False)."""
        c = self.select(candidates)
        if self.kind == "median":
            return fuse_median(c, self.radius, voiced)
        x = stack_candidates(c, self.radius, voiced)
        if self.kind == "linreg":
            out = self.model.predict(x)
        elif self.kind == "knn_reg":
            out = knn_regress(self.model, self.standardizer.apply(x))
        else:
            probs = self.model.predict_output(self.standardizer.apply(x))
            out = c[np.arange(len(c)), np.argmax(probs, axis=1)]
        if voiced is not None:
            out = np.where(np.asarray(voiced, dtype=bool), out, np.nan)
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "subset": list(self.subset), "radius": self.radius,
            "model": None if self.model is None else model_to_dict(self.model),
            "standardizer": None if self.standardizer is None else model_to_dict(self.standardizer),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "F0Fuser":
        return cls(d["kind"], tuple(d["subset"]), int(d["radius"]),
                   None if d.get("model") is None else model_from_dict(d["model"]),
                   None if d.get("standardizer") is None else model_from_dict(d["standardizer"]),
                   dict(d.get("meta", {})))


def _parts(x):
    if isinstance(x, (list, tuple)):
        return [np.asarray(p) for p in x]
    return [np.asarray(x)]


def fit_fuser(candidates, ground_truth_f0, kind: str = "median", radius: int = 2, seed: int = 0,
              subset=DEFAULT_SUBSET, knn_k: int = 5, mlp_options: dict | None = None) -> F0Fuser:
    """Train a fuser on frames where the reference F0 is defined (non-NaN).

    ``candidates`` / ``ground_truth_f0`` may be single arrays or lists of
    per-utterance arrays. Context stacks are bounded by the reference's
    voiced runs.
    """
    fuser = F0Fuser(kind, subset, radius)
    c_parts, t_parts = _parts(candidates), _parts(ground_truth_f0)
    if len(c_parts) != len(t_parts):
        raise ValueError("candidates and ground truth have different utterance counts")
    xs, ts, centers = [], [], []
    for c, t in zip(c_parts, t_parts):
        t = np.asarray(t, dtype=np.float64)
        c = fuser.select(c)
        if len(c) != len(t):
            raise ValueError(f"{len(t)} reference frames for {len(c)} candidate frames")
        voiced = ~np.isnan(t)
        if not np.any(voiced):
            continue
        xs.append(stack_candidates(c, radius, voiced)[voiced])
        ts.append(t[voiced])
        centers.append(c[voiced])
    if not xs:
        raise ValueError("no voiced reference frames to train on")
    if kind == "median":
        return fuser
    x, t, center = np.concatenate(xs), np.concatenate(ts), np.concatenate(centers)
    if kind == "linreg":
        fuser.model = fit_linreg(x, t)
    elif kind == "knn_reg":
        fuser.standardizer = standardize_fit(x)
        fuser.model = KnnModel(fuser.standardizer.apply(x), t, knn_k)
    else:
        best = np.argmin(np.abs(center - t[:, None]), axis=1)
        fuser.standardizer = standardize_fit(x)
        fuser.model = fit_mlp(fuser.standardizer.apply(x), best, head="softmax", seed=seed,
                              n_out=len(fuser.subset), **(mlp_options or {}))
        fuser.meta["label_counts"] = np.bincount(best, minlength=len(fuser.subset)).tolist()
    return fuser


def predict_track(voicing, candidates, fuser: F0Fuser, search_range: F0SearchRange = F0SearchRange(),
                  times=None) -> PitchTrack:
    """Attach fused, range-clipped F0 values to the voiced frames."""
    voiced = np.asarray(voicing, dtype=bool)
    c = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if len(c) != len(voiced):
        raise ValueError(f"{len(voiced)} voicing decisions for {len(c)} candidate frames")
    f0 = fuser.fuse(c, voiced) if len(c) else np.empty(0)
    f0 = np.where(voiced, search_range.clip(f0), np.nan)
    if times is None:
        times = np.arange(len(voiced)) * HOP_SECONDS
    return PitchTrack(times, voiced, f0)
