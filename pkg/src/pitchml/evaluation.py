"""Frame-level pitch tracking metrics and feature/class mutual information."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .f0 import PitchTrack

GROSS_THRESHOLD = 0.20


def _pair(pred: PitchTrack, ref: PitchTrack):
    if len(pred) != len(ref):
        raise ValueError(f"track lengths differ: {len(pred)} predicted vs {len(ref)} reference frames")
    return pred.voiced, ref.voiced


def _rel_error(pred, ref):
    both = pred.voiced & ref.voiced
    rel = np.full(len(ref), np.nan)
    rel[both] = (pred.f0[both] - ref.f0[both]) / ref.f0[both]
    return both, rel


def vde(pred: PitchTrack, ref: PitchTrack) -> float:
    """Percentage of frames with a wrong voicing decision."""
    pv, rv = _pair(pred, ref)
    return 100.0 * np.count_nonzero(pv != rv) / len(rv)


def gpe(pred: PitchTrack, ref: PitchTrack, threshold: float = GROSS_THRESHOLD):
    """Percentage of both-voiced frames whose relative F0 error exceeds ``threshold``; None if none."""
    _pair(pred, ref)
    both, rel = _rel_error(pred, ref)
    n = np.count_nonzero(both)
    if n == 0:
        return None
    return 100.0 * np.count_nonzero(np.abs(rel[both]) > threshold) / n


def fpe(pred: PitchTrack, ref: PitchTrack, threshold: float = GROSS_THRESHOLD):
    """Population std (in %) of relative F0 errors at or below ``threshold``; None if none."""
    _pair(pred, ref)
    both, rel = _rel_error(pred, ref)
    fine = rel[both]
    fine = fine[np.abs(fine) <= threshold]
    if len(fine) == 0:
        return None
    return float(np.std(100.0 * fine))


def ffe(pred: PitchTrack, ref: PitchTrack, threshold: float = GROSS_THRESHOLD) -> float:
    """Percentage of frames with either a voicing error or a gross pitch error."""
    pv, rv = _pair(pred, ref)
    both, rel = _rel_error(pred, ref)
    gross = np.count_nonzero(np.abs(rel[both]) > threshold)
    return 100.0 * (np.count_nonzero(pv != rv) + gross) / len(rv)


@dataclass
class EvalReport:
    vde: float
    gpe: float | None
    fpe: float | None
    ffe: float
    n_frames: int
    voiced_to_unvoiced: float
    unvoiced_to_voiced: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def table(self) -> str:
        rows = [("VDE", self.vde), ("GPE", self.gpe), ("FPE", self.fpe), ("FFE", self.ffe),
                ("V->U", self.voiced_to_unvoiced), ("U->V", self.unvoiced_to_voiced)]
        lines = [f"{'metric':<8}{'value (%)':>12}"]
        for name, v in rows:
            lines.append(f"{name:<8}{'n/a' if v is None else f'{v:.3f}':>12}")
        lines.append(f"{'frames':<8}{self.n_frames:>12d}")
        return "\n".join(lines)


def evaluate(pred: PitchTrack, ref: PitchTrack, threshold: float = GROSS_THRESHOLD) -> EvalReport:
    pv, rv = _pair(pred, ref)
    n = len(rv)
    return EvalReport(
        vde=vde(pred, ref), gpe=gpe(pred, ref, threshold), fpe=fpe(pred, ref, threshold),
        ffe=ffe(pred, ref, threshold), n_frames=n,
        voiced_to_unvoiced=100.0 * np.count_nonzero(rv & ~pv) / n,
        unvoiced_to_voiced=100.0 * np.count_nonzero(pv & ~rv) / n,
    )


def concat_tracks(tracks) -> PitchTrack:
    tracks = list(tracks)
    return PitchTrack(np.concatenate([t.times for t in tracks]), np.concatenate([t.voiced for t in tracks]),
                      np.concatenate([t.f0 for t in tracks]))


def evaluate_speakers(items, threshold: float = GROSS_THRESHOLD) -> tuple[EvalReport, dict]:
    """Equal-weight average over speakers.

    ``items`` yields (speaker, pred, ref). Frames are pooled within a speaker;
    each speaker's report then counts once in the average. Returns the
    averaged report and the per-speaker reports.
    """
    by_spk: dict = {}
    for spk, pred, ref in items:
        by_spk.setdefault(spk, ([], []))
        by_spk[spk][0].append(pred)
        by_spk[spk][1].append(ref)
    if not by_spk:
        raise ValueError("nothing to evaluate")
    per = {s: evaluate(concat_tracks(p), concat_tracks(r), threshold) for s, (p, r) in by_spk.items()}

    def avg(name):
        vals = [getattr(r, name) for r in per.values() if getattr(r, name) is not None]
        return float(np.mean(vals)) if vals else None

    total = EvalReport(avg("vde"), avg("gpe"), avg("fpe"), avg("ffe"),
                       int(sum(r.n_frames for r in per.values())),
                       avg("voiced_to_unvoiced"), avg("unvoiced_to_voiced"))
    return total, per


def equal_frequency_bins(feature, n_bins: int = 32) -> np.ndarray:
    """Bin index per value with ~equal counts; equal values share a bin.

    Cut points are data values, so any strictly increasing transform of the
    feature gives the same partition.
    """
    x = np.asarray(feature, dtype=np.float64)
    q = np.arange(1, n_bins) / n_bins
    cuts = np.unique(np.quantile(x, q, method="inverted_cdf"))
    return np.searchsorted(cuts, x, side="left")


def _entropy(counts):
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def nmi(feature, labels, n_bins: int = 32) -> float:
    """Mutual information between the binned feature and the classes over the class entropy."""
    x = np.asarray(feature, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if len(x) != len(y):
        raise ValueError("feature and labels must have equal length")
    if len(x) < 2:
        raise ValueError("need at least 2 frames")
    if y.all() or not y.any():
        raise ValueError("labels contain a single class")
    bins = equal_frequency_bins(x, n_bins)
    h_y = _entropy(np.bincount(y.astype(int), minlength=2))
    n = len(x)
    h_y_given_x = 0.0
    for b in np.unique(bins):
        members = y[bins == b]
        h_y_given_x += len(members) / n * _entropy(np.bincount(members.astype(int), minlength=2))
    return float(np.clip((h_y - h_y_given_x) / h_y, 0.0, 1.0))
