"""Energy-envelope segmentation into candidate repetition regions.

The band-passed signal's short-window energy is thresholded, split at its
local minima, and only minima preceded by a rise of more than one standard
deviation are kept as region boundaries.  Neighbouring regions separated
by less than the cutoff are then chained into longer candidates.

All breakpoint bookkeeping is done in envelope window indices; seconds are
``index * hop``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .audio_io import AudioBuffer, bandpass
from .errors import BufferTooShort, NotBandLimited

WINDOW_S = 0.05
HOP_S = 0.01
THRESHOLD = 0.05
CUTOFF_S = 0.02
MIN_REGION_S = 0.05
BAND = (300.0, 3000.0)
_EPS = 1e-9


@dataclass(frozen=True)
class EnergyEnvelope:
    values: np.ndarray       # thresholded E(t)
    raw: np.ndarray          # E'(t)
    window_len: float = WINDOW_S
    hop: float = HOP_S
    threshold: float = THRESHOLD
    sigma: float = field(default=None)

    def __post_init__(self):
        if self.sigma is None:
            object.__setattr__(self, "sigma", float(np.std(self.values)) if self.values.size else 0.0)

    @classmethod
    def from_values(cls, values, hop: float = HOP_S, threshold: float = THRESHOLD) -> "EnergyEnvelope":
        """Envelope whose raw and thresholded values coincide (hand-made curves)."""
        v = np.asarray(values, dtype=np.float64)
        return cls(values=v, raw=v, hop=hop, threshold=threshold)

    def time(self, idx) -> float:
        return float(idx) * self.hop


@dataclass(frozen=True)
class SegmentationTrace:
    minima_early: list       # t_0 .. t_n (window indices)
    minima_late: list        # t'_0 .. t'_n
    maxima: list             # T_1 .. T_n
    kept_early: list         # s_0, s_1, ...  (subsequence of minima_early)
    kept_late: list          # s'_0, s'_1, ...


@dataclass(frozen=True)
class Region:
    start: float
    end: float
    mean_energy: float
    source: str = "initial"

    @property
    def duration(self) -> float:
        return self.end - self.start

    def overlaps(self, other: "Region") -> bool:
        return self.start < other.end - _EPS and other.start < self.end - _EPS


@dataclass(frozen=True)
class RegionSet:
    envelope: EnergyEnvelope
    regions: list

    def __len__(self):
        return len(self.regions)

    def to_json(self) -> str:
        return json.dumps([asdict(r) for r in self.regions])

    def to_labels(self) -> str:
        """Audacity label track: start<TAB>end<TAB>label per line."""
        return "".join(f"{r.start:.6f}\t{r.end:.6f}\t{i}:{r.source}\n"
                       for i, r in enumerate(self.regions))


def energy_envelope(buf: AudioBuffer, require_band: bool = True) -> EnergyEnvelope:
    """Mean squared amplitude over 0.05 s windows every 0.01 s, thresholded."""
    if require_band and buf.band is None:
        raise NotBandLimited("energy_envelope expects a band-passed buffer")
    win = int(round(WINDOW_S * buf.sample_rate))
    hop = int(round(HOP_S * buf.sample_rate))
    x = buf.samples
    if len(x) < win:
        raise BufferTooShort(f"{len(x)} samples < envelope window {win}")
    csum = np.concatenate([[0.0], np.cumsum(x * x)])
    starts = np.arange(0, len(x) - win + 1, hop)
    raw = (csum[starts + win] - csum[starts]) / win
    raw = np.maximum(raw, 0.0)   # cumsum round-off on silent stretches
    values = np.where(raw > THRESHOLD, raw, 0.0)
    return EnergyEnvelope(values=values, raw=raw, hop=hop / buf.sample_rate)


def _plateaus(values: np.ndarray):
    """Runs of equal values as (value, first_index, last_index)."""
    change = np.flatnonzero(np.diff(values) != 0)
    firsts = np.concatenate([[0], change + 1])
    lasts = np.concatenate([change, [values.size - 1]])
    return [(values[a], int(a), int(b)) for a, b in zip(firsts, lasts)]


def find_breakpoints(env: EnergyEnvelope) -> SegmentationTrace:
    """Earliest/latest local minima and the earliest maxima between them.

    Flat runs collapse to (first, last) index pairs, which is how the
    "earliest time with a differing value since the previous minimum" rule
    plays out on a sampled curve.  A boundary run counts as an extremum
    when its single neighbour is higher (minimum) or lower (maximum).
    """
    E = np.asarray(env.values)
    runs = _plateaus(E) if E.size else []
    n = len(runs)

    def is_min(i):
        v = runs[i][0]
        return n > 1 and (i == 0 or runs[i - 1][0] > v) and (i == n - 1 or runs[i + 1][0] > v)

    def is_max(i):
        v = runs[i][0]
        return n > 1 and (i == 0 or runs[i - 1][0] < v) and (i == n - 1 or runs[i + 1][0] < v)

    early = [0]
    late = [runs[0][2] if n and is_min(0) else 0]
    maxima = []
    max_runs = [i for i in range(n) if is_max(i)]
    for i in range(1, n):
        if not is_min(i):
            continue
        lo, hi = late[-1], runs[i][1]
        peak = next(runs[k][1] for k in max_runs if lo <= runs[k][1] <= hi)
        early.append(runs[i][1])
        late.append(runs[i][2])
        maxima.append(peak)

    s_early, s_late = [early[0]], [late[0]]
    for i in range(1, len(early)):
        if E[maxima[i - 1]] - E[early[i]] > env.sigma:
            s_early.append(early[i])
            s_late.append(late[i])
    return SegmentationTrace(early, late, maxima, s_early, s_late)


def _mean_energy(env: EnergyEnvelope, a: int, b: int) -> float:
    seg = env.values[a:b] if b > a else env.values[a:a + 1]
    return float(np.mean(seg)) if seg.size else 0.0


def select_regions(trace: SegmentationTrace, env: EnergyEnvelope) -> list:
    """Regions [s'_{j-1}, s_j] between consecutive kept minima."""
    regions = []
    for j in range(1, len(trace.kept_early)):
        a, b = trace.kept_late[j - 1], trace.kept_early[j]
        regions.append(Region(env.time(a), env.time(b), _mean_energy(env, a, b)))
    return regions


def concatenate_regions(regions: list, cutoff: float = CUTOFF_S, env: EnergyEnvelope | None = None,
                        min_length: float = MIN_REGION_S) -> list:
    """Add chained regions across gaps shorter than ``cutoff``.

    Originals are kept.  Chain energy is the duration-weighted mean of its
    members unless ``env`` is given, in which case it is recomputed from the
    envelope.  Duplicates and regions shorter than ``min_length`` are dropped.
    """
    base = sorted(regions, key=lambda r: (r.start, r.end))
    pool = list(base)
    for j in range(len(base)):
        k = 0
        while j + k + 1 < len(base) and abs(base[j + k].end - base[j + k + 1].start) < cutoff - _EPS:
            members = base[j:j + k + 2]
            start, end = base[j].start, base[j + k + 1].end
            if env is not None:
                energy = _mean_energy(env, int(round(start / env.hop)), int(round(end / env.hop)))
            else:
                w = np.array([m.duration for m in members])
                e = np.array([m.mean_energy for m in members])
                energy = float(np.average(e, weights=w)) if w.sum() > 0 else float(e.mean())
            pool.append(Region(start, end, energy, "concatenated"))
            k += 1
    seen = set()
    out = []
    for r in sorted(pool, key=lambda r: (r.start, r.end, r.source != "initial")):
        key = (round(r.start, 9), round(r.end, 9))
        if key in seen or r.duration < min_length - _EPS:
            continue
        seen.add(key)
        out.append(r)
    return out


def segment(buf: AudioBuffer) -> RegionSet:
    """bandpass -> envelope -> breakpoints -> regions -> concatenation."""
    if buf.band is None:
        buf = bandpass(buf, *BAND)
    env = energy_envelope(buf)
    if env.values.size < 3 or not np.any(env.values > 0):
        return RegionSet(env, [])
    trace = find_breakpoints(env)
    regions = select_regions(trace, env)
    return RegionSet(env, concatenate_regions(regions, env=env))
