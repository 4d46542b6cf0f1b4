"""Signal fixtures and measurement oracles shared by unit and acceptance tests."""

from __future__ import annotations

import numpy as np

RATE = 16000


def segmental_snr(clean: np.ndarray, estimate: np.ndarray, frame: int = 256,
                  lo: float = -10.0, hi: float = 35.0) -> float:
    """Mean per-frame SNR (dB, clipped to [lo, hi]) over frames where ``clean`` is active."""
    n = min(len(clean), len(estimate)) // frame
    vals = []
    for i in range(n):
        s = clean[i * frame:(i + 1) * frame]
        e = estimate[i * frame:(i + 1) * frame]
        sig = float(np.sum(s * s))
        if sig < 1e-10:
            continue
        err = max(float(np.sum((s - e) ** 2)), 1e-20)
        vals.append(np.clip(10 * np.log10(sig / err), lo, hi))
    return float(np.mean(vals))


def gated_tone(seconds: float = 10.0, freq: float = 1000.0, period: float = 1.0,
               rate: int = RATE) -> np.ndarray:
    """Tone switched on for the first half of every period, with 10 ms ramps."""
    t = np.arange(int(seconds * rate)) / rate
    gate = ((t % period) < period / 2).astype(float)
    ramp = np.hanning(161)
    gate = np.convolve(gate, ramp / ramp.sum(), mode="same")
    return np.sin(2 * np.pi * freq * t) * gate


def white_noise_at_snr(clean: np.ndarray, snr_db: float, seed: int = 0) -> np.ndarray:
    noise = np.random.default_rng(seed).normal(size=clean.size)
    target = np.mean(clean ** 2) / 10 ** (snr_db / 10)
    return noise * np.sqrt(target / np.mean(noise ** 2))


def power_db(x: np.ndarray) -> float:
    return 10 * np.log10(np.mean(x * x) + 1e-300)


def harmonic_signal(seconds: float = 2.0, f0: float = 150.0, rate: int = RATE) -> np.ndarray:
    """Voiced-speech-like signal: harmonics with a 1/h roll-off and slow amplitude modulation."""
    t = np.arange(int(seconds * rate)) / rate
    x = sum(np.sin(2 * np.pi * h * f0 * t) / h for h in range(1, 20))
    return x * (0.6 + 0.4 * np.sin(2 * np.pi * 3 * t))


ACCEPTANCE_LINES: list = []


def verdict(number: int, title: str, ok: bool, detail: str) -> bool:
    """Record and print one acceptance line."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return ok
