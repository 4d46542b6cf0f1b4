"""Pairwise region similarity: binary spectral fingerprints and windowed
Fourier-magnitude correlation.

Per-region spectra are computed once in :func:`compare_all`, so the
quadratic pair loop only does cheap array work.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer, get_window
from .errors import RegionTooShort
from .scoring import pair_score
from .segment import Region, RegionSet

FP_WINDOW_S = 0.1
N_BANDS = 32
BAND = (300.0, 3000.0)
CORR_WINDOW_S = 0.1
CORR_OVERLAP = 0.5
MIN_COMPARE_S = 0.2
MAX_DURATION_RATIO = 4.0


@dataclass(frozen=True)
class Fingerprint:
    bits: np.ndarray        # bool, (N - 1, M - 1)
    n_windows: int
    n_bands: int = N_BANDS


@dataclass(frozen=True)
class PairScore:
    idx_a: int
    idx_b: int
    fp_distance: float
    correlation: float
    combined: float
    mean_energy: float


def _region_samples(buf: AudioBuffer, region: Region) -> np.ndarray:
    a = int(round(region.start * buf.sample_rate))
    b = int(round(region.end * buf.sample_rate))
    return buf.samples[max(a, 0):max(b, 0)]


def band_energies(buf: AudioBuffer, region: Region, n_bands: int = N_BANDS,
                  band=BAND, window_s: float = FP_WINDOW_S) -> np.ndarray:
    """Energy of each non-overlapping 0.1 s window in each equal-width band, (N, M)."""
    rate = buf.sample_rate
    wlen = int(round(window_s * rate))
    x = _region_samples(buf, region)
    n = x.shape[0] // wlen
    if n == 0:
        return np.zeros((0, n_bands))
    frames = x[: n * wlen].reshape(n, wlen) * get_window("hamming", wlen)
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    freqs = np.fft.rfftfreq(wlen, 1.0 / rate)
    edges = np.linspace(band[0], band[1], n_bands + 1)
    which = np.searchsorted(edges, freqs, side="right") - 1
    which[freqs == band[1]] = n_bands - 1
    inside = (which >= 0) & (which < n_bands)
    out = np.zeros((n, n_bands))
    for m in range(n_bands):
        out[:, m] = power[:, inside & (which == m)].sum(axis=1)
    return out


def fingerprint_from_energies(E: np.ndarray) -> Fingerprint:
    """Bits of the sign of the time difference of adjacent-band differences."""
    E = np.asarray(E, dtype=np.float64)
    if E.shape[0] < 2:
        raise RegionTooShort(f"need at least 2 windows, got {E.shape[0]}")
    d = E[:, :-1] - E[:, 1:]
    second = d[1:] - d[:-1]
    return Fingerprint(bits=second > 0, n_windows=E.shape[0], n_bands=E.shape[1])


def fingerprint(buf: AudioBuffer, region: Region) -> Fingerprint:
    if region.duration < MIN_COMPARE_S - 1e-9:
        raise RegionTooShort(f"region of {region.duration:.3f} s < {MIN_COMPARE_S} s")
    return fingerprint_from_energies(band_energies(buf, region))


def fingerprint_distance(a: Fingerprint, b: Fingerprint) -> float:
    """Fraction of differing bits over the common leading windows."""
    rows = min(a.bits.shape[0], b.bits.shape[0])
    x, y = a.bits[:rows], b.bits[:rows]
    if x.size == 0:
        return 1.0
    return float(np.count_nonzero(x != y)) / x.size


def correlation_windows(buf: AudioBuffer, region: Region) -> np.ndarray:
    """In-band DFT magnitudes of 50%-overlapping 0.1 s windows, (N, bins)."""
    rate = buf.sample_rate
    wlen = int(round(CORR_WINDOW_S * rate))
    hop = int(round(wlen * (1 - CORR_OVERLAP)))
    x = _region_samples(buf, region)
    if x.shape[0] < wlen:
        return np.zeros((0, 0))
    n = (x.shape[0] - wlen) // hop + 1
    idx = np.arange(wlen)[None, :] + hop * np.arange(n)[:, None]
    mag = np.abs(np.fft.rfft(x[idx] * get_window("hamming", wlen), axis=1))
    freqs = np.fft.rfftfreq(wlen, 1.0 / rate)
    keep = (freqs >= BAND[0]) & (freqs <= BAND[1])
    return mag[:, keep]


def correlation_from_windows(w1: np.ndarray, w2: np.ndarray) -> float:
    """Mean over coefficients of the across-window Pearson correlation."""
    n = min(w1.shape[0], w2.shape[0])
    if n < 2:
        return 0.0
    a = w1[:n] - w1[:n].mean(axis=0)
    b = w2[:n] - w2[:n].mean(axis=0)
    s1 = np.sqrt(np.sum(a * a, axis=0))
    s2 = np.sqrt(np.sum(b * b, axis=0))
    s12 = np.sum(a * b, axis=0)
    # relative floor: a coefficient that is constant up to round-off has no variance
    scale1 = np.sqrt(n) * np.abs(w1[:n]).max(axis=0)
    scale2 = np.sqrt(n) * np.abs(w2[:n]).max(axis=0)
    ok = (s1 > 1e-12 * scale1) & (s2 > 1e-12 * scale2) & (s1 > 0) & (s2 > 0)
    if not np.any(ok):
        return 0.0
    c = s12[ok] / (s1[ok] * s2[ok])
    return float(np.clip(np.mean(c), -1.0, 1.0))


def correlation_similarity(buf: AudioBuffer, r1: Region, r2: Region) -> float:
    for r in (r1, r2):
        if r.duration < MIN_COMPARE_S - 1e-9:
            raise RegionTooShort(f"region of {r.duration:.3f} s < {MIN_COMPARE_S} s")
    return correlation_from_windows(correlation_windows(buf, r1), correlation_windows(buf, r2))


def _comparable(a: Region, b: Region) -> bool:
    if a.overlaps(b):
        return False
    short, long_ = sorted((a.duration, b.duration))
    return short > 0 and long_ / short <= MAX_DURATION_RATIO + 1e-9


def compare_all(buf: AudioBuffer, regions) -> list:
    """Score every unordered pair of disjoint regions with duration ratio <= 4.

    Regions are put in canonical (start, end) order first; ``idx_a`` and
    ``idx_b`` index that order.
    """
    regs = regions.regions if isinstance(regions, RegionSet) else list(regions)
    regs = sorted(regs, key=lambda r: (r.start, r.end))
    fps, wins = [], []
    for r in regs:
        fp = w = None
        if r.duration >= MIN_COMPARE_S - 1e-9:
            try:
                fp = fingerprint(buf, r)
                w = correlation_windows(buf, r)
            except RegionTooShort:
                fp = w = None
        fps.append(fp)
        wins.append(w)

    out = []
    for i in range(len(regs)):
        for j in range(i + 1, len(regs)):
            a, b = regs[i], regs[j]
            if not _comparable(a, b):
                continue
            energy = 0.5 * (a.mean_energy + b.mean_energy)
            if fps[i] is None or fps[j] is None:
                out.append(PairScore(i, j, 1.0, 0.0, 0.0, energy))
                continue
            e = fingerprint_distance(fps[i], fps[j])
            c = correlation_from_windows(wins[i], wins[j])
            out.append(PairScore(i, j, e, c, pair_score(e, c), energy))
    return out


def write_pairs_csv(pairs, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("idx_a", "idx_b", "E", "C", "S", "mean_energy"))
        for p in pairs:
            w.writerow((p.idx_a, p.idx_b, repr(p.fp_distance), repr(p.correlation),
                        repr(p.combined), repr(p.mean_energy)))
