"""Seeded synthetic body-worn-style corpora.

"Speech" is built from formant-shaped harmonic syllables with pitch
contours.  Conflict files embed an identical phrase several times: loudly
in high-conflict files, a little above the talker's level in mild ones.
Every file carries babble (overlapping unrelated talkers) and siren noise
at random SNRs.  The same building blocks also produce the labeled
speech / non-speech stream used to train the VAD.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer, write_wav

RATE = 16000
CLASS_NAMES = {2: "high", 1: "mild", 0: "low"}
SHOUT_DRIVE = 8.0            # a shout overloads a body-worn mic


@dataclass(frozen=True)
class SynthSpec:
    n_high: int = 3
    n_mild: int = 15
    n_low: int = 87
    duration_s: float = 20.0
    seed: int = 7
    snr_db: tuple = (0.0, 15.0)
    high_repeats: tuple = (3, 6)      # extra occurrences of the phrase
    mild_repeats: tuple = (1, 2)
    high_gain_db: float = 9.0         # phrase level over the talker's
    mild_gain_db: float = 6.0
    noise_profiles: tuple = ("babble", "siren")
    rate: int = RATE

    @property
    def n_files(self) -> int:
        return self.n_high + self.n_mild + self.n_low


# -------------------------------------------------------------- building blocks


def _db(x):
    return 10.0 ** (x / 20.0)


def _rms(x):
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def syllable(rng: np.random.Generator, rate: int = RATE, pitch: float | None = None) -> np.ndarray:
    """One voiced syllable: harmonics of a gliding f0 weighted by moving formants."""
    dur = rng.uniform(0.14, 0.32)
    n = int(dur * rate)
    t = np.arange(n) / rate
    f0a = pitch * rng.uniform(0.85, 1.2) if pitch else rng.uniform(100, 230)
    f0b = f0a * rng.uniform(0.75, 1.3)
    f0 = f0a + (f0b - f0a) * t / dur + 3.0 * np.sin(2 * np.pi * rng.uniform(4, 7) * t)
    phase = 2 * np.pi * np.cumsum(f0) / rate

    f_start = [rng.uniform(300, 800), rng.uniform(900, 2300), rng.uniform(2400, 3200)]
    f_end = [f * rng.uniform(0.8, 1.25) for f in f_start]
    bws = (90.0, 130.0, 220.0)
    gains = (1.0, 0.6, 0.3)
    frac = t / dur

    x = np.zeros(n)
    for h in range(1, int(4000 / max(f0a, f0b)) + 1):
        fh = h * f0
        amp = np.zeros(n)
        for fs, fe, bw, g in zip(f_start, f_end, bws, gains):
            fc = fs + (fe - fs) * frac
            amp += g / (1.0 + ((fh - fc) / bw) ** 2)
        x += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi))

    attack, release = int(0.02 * rate), int(0.05 * rate)
    env = np.ones(n)
    env[:attack] = 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    env[-release:] = 0.5 + 0.5 * np.cos(np.pi * np.arange(release) / release)
    x *= env
    if rng.random() < 0.4:
        # fricative onset
        m = int(rng.uniform(0.03, 0.06) * rate)
        burst = np.diff(rng.normal(size=m + 1)) * np.hanning(m) * 0.15
        x = np.concatenate([burst * np.max(np.abs(x)), x])
    return x / (_rms(x) + 1e-12)


def phrase(rng: np.random.Generator, rate: int = RATE, n_syll: int | None = None,
           pitch: float | None = None, style: str = "normal") -> np.ndarray:
    """Connected syllables (slight overlap or a very short gap), unit RMS.

    ``style`` is "normal", "raised" or "shouted".  Raised and shouted
    phrases keep an even syllable level, run syllables together and are
    saturated (shouted ones harder), which flattens their energy contour.
    """
    n_syll = n_syll or int(rng.integers(2, 6))
    pitch = pitch or rng.uniform(100, 220)
    if style == "normal":
        spread, overlap = 3.0, (-0.015, 0.05)
    else:
        spread, overlap = 1.0, (0.03, 0.07)
    sylls = [syllable(rng, rate, pitch) * _db(rng.uniform(-spread, spread)) for _ in range(n_syll)]
    starts = [0]
    for s in sylls[:-1]:
        starts.append(starts[-1] + s.size - int(rng.uniform(*overlap) * rate))
    out = np.zeros(max(a + s.size for a, s in zip(starts, sylls)))
    for a, s in zip(starts, sylls):
        out[a:a + s.size] += s
    drive = {"normal": 0.0, "raised": 2.0, "shouted": SHOUT_DRIVE}[style]
    if drive:
        out = np.tanh(drive * out / np.max(np.abs(out)))
    return out / (_rms(out) + 1e-12)


def babble(rng: np.random.Generator, n: int, rate: int = RATE, talkers: int = 7) -> np.ndarray:
    """Overlapping unrelated talkers, unit RMS."""
    out = np.zeros(n)
    for _ in range(talkers):
        stream = np.zeros(n)
        pos = int(rng.uniform(0, 0.5) * rate)
        pitch = rng.uniform(90, 240)
        while pos < n:
            p = phrase(rng, rate, pitch=pitch)
            end = min(n, pos + p.size)
            stream[pos:end] += p[: end - pos]
            pos = end + int(rng.uniform(0.1, 0.6) * rate)
        out += stream * _db(rng.uniform(-4, 4))
    return out / (_rms(out) + 1e-12)


def siren(rng: np.random.Generator, n: int, rate: int = RATE) -> np.ndarray:
    """Wail (sinusoidal sweep) or hi-lo two-tone siren with a few harmonics."""
    t = np.arange(n) / rate
    if rng.random() < 0.5:
        period = rng.uniform(1.5, 4.0)
        f = rng.uniform(750, 1000) + rng.uniform(250, 450) * np.sin(2 * np.pi * t / period)
    else:
        half = rng.uniform(0.4, 0.7)
        lo = rng.uniform(550, 750)
        f = np.where((t // half) % 2 == 0, lo, lo * rng.uniform(1.3, 1.5))
    ph = 2 * np.pi * np.cumsum(f) / rate
    x = np.sin(ph) + 0.35 * np.sin(2 * ph) + 0.15 * np.sin(3 * ph)
    return x / _rms(x)


def tones(rng: np.random.Generator, n: int, rate: int = RATE) -> np.ndarray:
    """Radio-style beeps: steady tones switching on and off."""
    x = np.zeros(n)
    pos = 0
    while pos < n:
        m = int(rng.uniform(0.1, 0.8) * rate)
        f = rng.uniform(400, 2500)
        seg = np.sin(2 * np.pi * f * np.arange(min(m, n - pos)) / rate)
        x[pos:pos + seg.size] = seg
        pos += seg.size + int(rng.uniform(0.05, 0.6) * rate)
    return x / (_rms(x) + 1e-12)


def _mix_noise(rng, speech: np.ndarray, active_rms: float, spec: SynthSpec):
    n = speech.size
    rate = spec.rate
    noise = np.zeros(n)
    if "babble" in spec.noise_profiles:
        snr = rng.uniform(*spec.snr_db)
        noise += babble(rng, n, rate) * active_rms * _db(-snr)
    if "siren" in spec.noise_profiles:
        snr = rng.uniform(*spec.snr_db)
        span = int(rng.uniform(0.2, 0.5) * n)
        start = int(rng.integers(0, n - span))
        s = siren(rng, span, rate) * active_rms * _db(-snr)
        ramp = int(0.3 * rate)
        s[:ramp] *= np.linspace(0, 1, ramp)
        s[-ramp:] *= np.linspace(1, 0, ramp)
        noise[start:start + span] += s
    return noise


def conflict_file(rng: np.random.Generator, label: int, spec: SynthSpec):
    """Build one file; returns (samples, info) where info lists phrase onsets."""
    rate = spec.rate
    n = int(spec.duration_s * rate)
    clean = np.zeros(n)
    level = 0.1

    # slots of background talk; some get replaced by the repeated phrase
    slots = []
    pos = int(rng.uniform(1.0, 2.0) * rate)
    while True:
        p = phrase(rng, rate) * level * _db(rng.uniform(-3, 3))
        if pos + p.size > n - int(0.3 * rate):
            break
        slots.append((pos, p))
        pos += p.size + int(rng.uniform(0.4, 1.4) * rate)

    if label == 2:
        repeats = int(rng.integers(spec.high_repeats[0], spec.high_repeats[1] + 1))
        gain = spec.high_gain_db
    elif label == 1:
        repeats = int(rng.integers(spec.mild_repeats[0], spec.mild_repeats[1] + 1))
        gain = spec.mild_gain_db
    else:
        repeats, gain = 0, 0.0

    onsets, rep = [], None
    if repeats:
        rep = phrase(rng, rate, n_syll=int(rng.integers(3, 6)),
                     style="shouted" if label == 2 else "raised") * level * _db(gain)
        # place occurrences into distinct slots, rebuilding later positions;
        # if the longer phrase pushes a chosen slot off the end, redraw among
        # the slots that fitted
        k = repeats + 1
        usable = len(slots)
        for _ in range(20):
            chosen = set(rng.choice(usable, size=min(k, usable), replace=False).tolist())
            rebuilt, onsets, pos = [], [], slots[0][0]
            for i, (_, p) in enumerate(slots):
                item = rep if i in chosen else p
                if pos + item.size > n - int(0.3 * rate):
                    break
                if i in chosen:
                    onsets.append(pos / rate)
                rebuilt.append((pos, item))
                pos += item.size + int(rng.uniform(0.4, 1.4) * rate)
            if len(onsets) == min(k, len(slots)):
                break
            usable = len(rebuilt)
        slots = rebuilt
        repeats = len(onsets) - 1

    # SNR is set against the talker's ordinary speech, so louder or more
    # frequent repeats do not raise the noise floor
    talk = []
    for start, p in slots:
        clean[start:start + p.size] += p
        if p is not rep:
            talk.append(p)
    active_rms = _rms(np.concatenate(talk)) if talk else level
    mix = clean + _mix_noise(rng, clean, active_rms, spec)
    mix *= 0.9 / np.max(np.abs(mix))
    return mix, {"repeats": repeats, "onsets": onsets}


def class_sequence(spec: SynthSpec) -> list:
    rng = np.random.default_rng([spec.seed, 0])
    labels = [2] * spec.n_high + [1] * spec.n_mild + [0] * spec.n_low
    return [labels[i] for i in rng.permutation(len(labels))]


def generate_corpus(spec: SynthSpec, out_dir) -> list:
    """Write ``bwa_###.wav`` files plus ``labels.csv``; returns label rows."""
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for i, label in enumerate(class_sequence(spec)):
        rng = np.random.default_rng([spec.seed, 1, i])
        x, info = conflict_file(rng, label, spec)
        file_id = f"bwa_{i:03d}"
        write_wav(os.path.join(out_dir, file_id + ".wav"), AudioBuffer(x, spec.rate))
        rows.append({"file_id": file_id, "label": label, "class": CLASS_NAMES[label],
                     "repeats": info["repeats"]})
    tmp = os.path.join(out_dir, f"labels.csv.tmp{os.getpid()}")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["file_id", "label", "class", "repeats"])
        w.writeheader()
        w.writerows(rows)
    os.replace(tmp, os.path.join(out_dir, "labels.csv"))
    return rows


# ------------------------------------------------------------ VAD training data


def vad_stream(rng: np.random.Generator, duration_s: float, rate: int = RATE,
               guard_s: float = 0.15):
    """Alternating speech / non-speech segments over continuous babble.

    Returns (samples, sample_labels) with 1 = speech, 0 = non-speech and
    -1 within ``guard_s`` of a segment boundary (left unlabeled).
    """
    n = int(duration_s * rate)
    x = np.zeros(n)
    lab = np.zeros(n, dtype=np.int8)
    level = 0.1
    pos = 0
    speech_turn = bool(rng.random() < 0.5)
    bounds = []
    while pos < n:
        seg = min(int(rng.uniform(2.5, 6.0) * rate), n - pos)
        if speech_turn:
            s = np.zeros(seg)
            q = 0
            pitch = rng.uniform(100, 220)
            while q < seg:
                style = rng.choice(["normal", "raised", "shouted"], p=[0.5, 0.25, 0.25])
                p = phrase(rng, rate, pitch=pitch, style=str(style))
                p = p * level * _db(rng.uniform(-3, 9))
                m = min(p.size, seg - q)
                s[q:q + m] = p[:m]
                q += m + int(rng.uniform(0.1, 0.3) * rate)
            x[pos:pos + seg] += s
            lab[pos:pos + seg] = 1
        else:
            kind = rng.choice(["siren", "tones", "babble"])
            snr = rng.uniform(-5, 10)
            if kind == "siren":
                noise = siren(rng, seg, rate)
            elif kind == "tones":
                noise = tones(rng, seg, rate)
            else:
                noise = babble(rng, seg, rate)
            x[pos:pos + seg] += noise * level * _db(snr)
        bounds.append(pos)
        pos += seg
        speech_turn = not speech_turn
    x += babble(rng, n, rate) * level * _db(-rng.uniform(0, 15))
    g = int(guard_s * rate)
    for b in bounds[1:]:
        lab[max(0, b - g):b + g] = -1
    return x * 0.9 / np.max(np.abs(x)), lab
