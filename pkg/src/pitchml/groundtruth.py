"""Reference voicing and F0 from electroglottograph (EGG) recordings.

Glottal closures show up as sharp positive peaks of the differenced EGG.
Each pair of consecutive closures gives one pitch period; a frame is
voiced when it holds at least one period midpoint and all of its periods
are plausible and mutually consistent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .f0 import PitchTrack
from .features import F0SearchRange
from .signal import FrameGrid, Waveform

PEAK_RATIO = 0.2
NORM_WINDOW_S = 0.200
NORM_PERCENTILE = 95.0
CONTINUITY = 0.25


def _sliding_percentile(x, width, q, step):
    """Percentile of ``x`` in a centred window, evaluated every ``step`` samples and held."""
    n = len(x)
    centers = np.arange(0, n, step)
    out = np.empty(n)
    half = width // 2
    for c in centers:
        lo, hi = max(0, c - half), min(n, c + half + 1)
        out[c:c + step] = np.percentile(x[lo:hi], q)
    return out


def degg_peaks(egg: Waveform, search_range: F0SearchRange = F0SearchRange(),
               peak_ratio: float = PEAK_RATIO, window_s: float = NORM_WINDOW_S) -> np.ndarray:
    """Glottal closure instants (sample indices) from the differenced EGG.

    Local maxima of dEGG[n] = egg[n] - egg[n-1] count when they exceed
    ``peak_ratio`` times the 95th percentile of |dEGG| over a sliding
    ``window_s`` window. Peaks closer than one shortest period (1/f0_max)
    are merged, keeping the larger.
    """
    x = egg.samples
    if len(x) < 3:
        return np.empty(0, dtype=np.int64)
    d = np.empty(len(x))
    d[0] = 0.0
    d[1:] = np.diff(x)
    width = max(3, int(round(window_s * egg.sample_rate)))
    step = max(1, int(round(0.01 * egg.sample_rate)))
    thresh = peak_ratio * _sliding_percentile(np.abs(d), width, NORM_PERCENTILE, step)
    mid = d[1:-1]
    is_peak = (mid > d[:-2]) & (mid >= d[2:]) & (mid > thresh[1:-1]) & (mid > 0)
    cand = np.flatnonzero(is_peak) + 1
    min_gap = egg.sample_rate / search_range.f0_max
    kept: list[int] = []
    for p in cand:
        if kept and p - kept[-1] < min_gap:
            if d[p] > d[kept[-1]]:
                kept[-1] = p
            continue
        kept.append(p)
    return np.asarray(kept, dtype=np.int64)


@dataclass
class ReferenceTrack:
    track: PitchTrack
    n_periods: np.ndarray

    def __len__(self):
        return len(self.track)


def gci_to_reference(gcis, grid: FrameGrid, search_range: F0SearchRange = F0SearchRange(),
                     continuity: float = CONTINUITY) -> ReferenceTrack:
    """Map closure instants onto the analysis grid.

    A period is assigned to every frame whose span [start, start + length)
    contains its midpoint. F0 is sample_rate / mean assigned period.
    """
    g = np.asarray(gcis, dtype=np.float64)
    n = grid.n_frames
    voiced = np.zeros(n, dtype=bool)
    f0 = np.full(n, np.nan)
    count = np.zeros(n, dtype=np.int64)
    if len(g) >= 2:
        periods = np.diff(g)
        mids = 0.5 * (g[1:] + g[:-1])
        p_min = grid.sample_rate / search_range.f0_max
        p_max = grid.sample_rate / search_range.f0_min
        plausible = (periods >= p_min) & (periods <= p_max)
        jumps = np.abs(np.diff(periods)) / periods[:-1] >= continuity
        starts = grid.starts
        first = np.searchsorted(mids, starts, side="left")
        last = np.searchsorted(mids, starts + grid.frame_length, side="left")
        for k in range(n):
            a, b = first[k], last[k]
            count[k] = b - a
            if b <= a:
                continue
            if not np.all(plausible[a:b]) or np.any(jumps[a:b - 1]):
                continue
            voiced[k] = True
            f0[k] = grid.sample_rate / periods[a:b].mean()
    return ReferenceTrack(PitchTrack(grid.times, voiced, f0), count)


def reference_from_egg(egg: Waveform, grid: FrameGrid, search_range: F0SearchRange = F0SearchRange(),
                       **kwargs) -> ReferenceTrack:
    """Convenience: :func:`degg_peaks` followed by :func:`gci_to_reference`."""
    return gci_to_reference(degg_peaks(egg, search_range), grid, search_range, **kwargs)
