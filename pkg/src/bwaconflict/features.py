"""Short-term and mid-term acoustic features for speech / non-speech work.

Short-term frames are 0.06 s with a 0.02 s step; each yields 23 features.
Mid-term windows (0.3 s, step 0.1 s) average the short-term rows they
contain; every short frame carries the mid-term vector of the latest window
containing its start, giving 46 columns in the fixed order of
:data:`FEATURE_NAMES`.  Saved models depend on this order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .audio_io import AudioBuffer, frame_signal, get_window
from .errors import BufferTooShort

SHORT_FRAME_S = 0.06
SHORT_STEP_S = 0.02
MID_FRAME_S = 0.3
MID_STEP_S = 0.1

N_MFCC = 13
N_MEL = 26
LOG_FLOOR = 1e-10
N_SUBBLOCKS = 10
ROLLOFF = 0.90
F0_MIN, F0_MAX = 60.0, 1000.0

SHORT_NAMES = (
    tuple(f"mfcc_{i}" for i in range(1, N_MFCC + 1))
    + ("zcr", "energy", "energy_entropy",
       "spectral_centroid", "spectral_spread", "spectral_entropy",
       "spectral_flux", "spectral_rolloff", "f0", "harmonic_ratio")
)
FEATURE_NAMES = SHORT_NAMES + tuple(f"mid_{n}" for n in SHORT_NAMES)
N_SHORT = len(SHORT_NAMES)
N_FEATURES = len(FEATURE_NAMES)
COL = {name: i for i, name in enumerate(FEATURE_NAMES)}


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray          # (rows, 46)
    frame_times: np.ndarray     # start time of each short frame, seconds
    names: tuple = FEATURE_NAMES

    def __len__(self):
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


_FB_CACHE: dict = {}


def mel_filterbank(n_fft: int, rate: int, n_mel: int = N_MEL,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular mel filters, shape (n_mel, n_fft//2 + 1)."""
    fmax = rate / 2 if fmax is None else fmax
    key = (n_fft, rate, n_mel, fmin, fmax)
    if key not in _FB_CACHE:
        freqs = np.fft.rfftfreq(n_fft, 1.0 / rate)
        edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mel + 2))
        fb = np.zeros((n_mel, freqs.size))
        for i in range(n_mel):
            lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
            rising = (freqs - lo) / (mid - lo)
            falling = (hi - freqs) / (hi - mid)
            fb[i] = np.maximum(0.0, np.minimum(rising, falling))
        _FB_CACHE[key] = fb
    return _FB_CACHE[key]


def _entropy(parts: np.ndarray) -> np.ndarray:
    """Base-2 entropy of each row's normalized distribution; uniform if empty."""
    total = parts.sum(axis=1, keepdims=True)
    k = parts.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        prob = np.where(total > 0, parts / np.where(total > 0, total, 1.0), 1.0 / k)
        h = -np.sum(np.where(prob > 0, prob * np.log2(prob), 0.0), axis=1)
    return h


def _pitch(frames: np.ndarray, rate: int):
    """Normalized-autocorrelation pitch and harmonic ratio per frame."""
    n = frames.shape[1]
    lag_lo = int(np.floor(rate / F0_MAX))
    lag_hi = min(int(np.ceil(rate / F0_MIN)), n - 2)
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    acf = np.fft.irfft(np.abs(spec) ** 2, nfft, axis=1)[:, : lag_hi + 2]

    sq = frames ** 2
    csum = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(sq, axis=1)], axis=1)
    lags = np.arange(lag_hi + 2)
    head = csum[:, n - lags]                 # sum x[0 : n-lag]^2
    tail = csum[:, [n]] - csum[:, lags]      # sum x[lag : n]^2
    denom = np.sqrt(head * tail)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(denom > 0, acf / np.where(denom > 0, denom, 1.0), 0.0)

    win = r[:, lag_lo:lag_hi + 1]
    best = win.max(axis=1)
    left = r[:, lag_lo - 1:lag_hi]
    right = r[:, lag_lo + 1:lag_hi + 2]
    is_peak = (win >= left) | (np.arange(win.shape[1]) == 0)
    is_peak &= win >= right
    # earliest peak close to the global best guards against sub-octave picks
    ok = is_peak & (win >= 0.9 * best[:, None]) & (best[:, None] > 0)
    first = np.argmax(ok, axis=1)
    voiced = ok.any(axis=1)
    f0 = np.where(voiced, rate / (first + lag_lo), 0.0)
    hr = np.clip(np.where(voiced, best, 0.0), 0.0, 1.0)
    return f0, hr


def _short_term_batch(frames: np.ndarray, prev_mag: np.ndarray | None, rate: int) -> np.ndarray:
    """23 features for each row of ``frames`` (raw, un-windowed samples)."""
    n_frames, n = frames.shape
    out = np.empty((n_frames, N_SHORT))

    windowed = frames * get_window("hamming", n)
    mag = np.abs(np.fft.rfft(windowed, axis=1))
    power = mag ** 2
    freqs = np.fft.rfftfreq(n, 1.0 / rate)

    fb = mel_filterbank(n, rate)
    log_mel = np.log(np.maximum(power @ fb.T, LOG_FLOOR))
    out[:, 0:N_MFCC] = dct(log_mel, type=2, norm="ortho", axis=1)[:, 1:N_MFCC + 1]

    signs = frames >= 0
    out[:, 13] = np.count_nonzero(signs[:, 1:] != signs[:, :-1], axis=1) / (n - 1)
    out[:, 14] = np.mean(frames ** 2, axis=1)
    sub = n // N_SUBBLOCKS
    blocks = (frames[:, : sub * N_SUBBLOCKS] ** 2).reshape(n_frames, N_SUBBLOCKS, sub).sum(axis=2)
    out[:, 15] = _entropy(blocks)

    msum = mag.sum(axis=1)
    safe = np.where(msum > 0, msum, 1.0)
    centroid = np.where(msum > 0, (mag @ freqs) / safe, 0.0)
    spread = np.where(msum > 0, np.sqrt(np.maximum(
        (mag * (freqs[None, :] - centroid[:, None]) ** 2).sum(axis=1) / safe, 0.0)), 0.0)
    out[:, 16] = centroid
    out[:, 17] = spread

    nb = power.shape[1]
    edges = np.linspace(0, nb, N_SUBBLOCKS + 1).astype(int)
    bands = np.stack([power[:, a:b].sum(axis=1) for a, b in zip(edges[:-1], edges[1:])], axis=1)
    out[:, 18] = _entropy(bands)

    prev = np.vstack([np.zeros((1, nb)) if prev_mag is None else prev_mag[None, :], mag[:-1]])
    out[:, 19] = np.linalg.norm(mag - prev, axis=1) / nb

    cum = np.cumsum(power, axis=1)
    ptot = cum[:, -1]
    idx = np.argmax(cum >= ROLLOFF * ptot[:, None], axis=1)
    out[:, 20] = np.where(ptot > 0, freqs[idx], 0.0)

    out[:, 21], out[:, 22] = _pitch(frames, rate)
    return out, mag[-1]


def short_term_features(frame, prev_spectrum=None, rate: int = 16000) -> np.ndarray:
    """The 23 short-term features of a single frame.

    ``prev_spectrum`` is the previous frame's Hamming-weighted magnitude
    spectrum (used by flux); zeros when absent.
    """
    frame = np.asarray(frame, dtype=np.float64)[None, :]
    prev = None if prev_spectrum is None else np.asarray(prev_spectrum, dtype=np.float64)
    return _short_term_batch(frame, prev, rate)[0][0]


def extract_features(buf: AudioBuffer, chunk: int = 2048) -> FeatureMatrix:
    rate = buf.sample_rate
    flen = int(round(SHORT_FRAME_S * rate))
    hop = int(round(SHORT_STEP_S * rate))
    if len(buf) < int(round(MID_FRAME_S * rate)):
        raise BufferTooShort(f"{buf.duration:.3f} s < {MID_FRAME_S} s")

    frames = frame_signal(buf.samples, flen, hop)
    n_rows = frames.shape[0]
    short = np.empty((n_rows, N_SHORT))
    prev = None
    for a in range(0, n_rows, chunk):
        block = np.ascontiguousarray(frames[a:a + chunk])
        short[a:a + chunk], prev = _short_term_batch(block, prev, rate)

    per_step = int(round(MID_STEP_S / SHORT_STEP_S))
    per_win = int(round(MID_FRAME_S / SHORT_STEP_S))
    starts = (np.arange(n_rows) // per_step) * per_step
    stops = np.minimum(starts + per_win, n_rows)
    csum = np.vstack([np.zeros((1, N_SHORT)), np.cumsum(short, axis=0)])
    mid = (csum[stops] - csum[starts]) / (stops - starts)[:, None]

    times = np.arange(n_rows) * hop / rate
    return FeatureMatrix(np.hstack([short, mid]), times)


def write_feature_csv(fm: FeatureMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("time",) + tuple(fm.names))
        for t, row in zip(fm.frame_times, fm.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_feature_csv(path) -> FeatureMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = tuple(rows[0])
    if header[0] != "time":
        raise ValueError(f"{path}: first column must be 'time'")
    names = header[1:]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64).reshape(-1, len(header))
    return FeatureMatrix(data[:, 1:], data[:, 0], tuple(names))
