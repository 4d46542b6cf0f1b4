"""Audio ingestion and the spectral primitives shared by every stage.

Everything here is a pure function on :class:`AudioBuffer` /
:class:`Spectrogram` values.  WAV decoding is done by hand (RIFF chunk walk)
so that 32-bit float files and the error taxonomy are handled uniformly.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field, replace
from math import gcd

import numpy as np
from scipy import signal as sps

from .errors import (
    BufferTooShort,
    EmptyAudio,
    IncompatibleOverlap,
    MalformedWav,
    UnsupportedEncoding,
)

CANONICAL_RATE = 16000

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int
    # (lo, hi) in Hz once the buffer has been through bandpass()
    band: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class Spectrogram:
    """One-sided STFT, ``frames[k, l]`` for bin ``k`` and frame ``l``."""

    frames: np.ndarray
    frame_len: int
    hop: int
    window: str
    sample_rate: int
    num_samples: int = field(default=0)

    @property
    def n_bins(self) -> int:
        return self.frames.shape[0]

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]


# ---------------------------------------------------------------- WAV I/O


def _parse_fmt(chunk: bytes):
    if len(chunk) < 16:
        raise MalformedWav("fmt chunk too short")
    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", chunk[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(chunk) < 40:
            raise MalformedWav("truncated WAVE_FORMAT_EXTENSIBLE header")
        tag = struct.unpack("<H", chunk[24:26])[0]
    return tag, channels, rate, block_align, bits


def load_wav(path) -> AudioBuffer:
    """Decode a 16-bit PCM or 32-bit float WAV file to a mono buffer.

    Stereo is downmixed by channel mean.  Integer samples are scaled by
    1/32768 so full-scale negative maps to exactly -1.0.  The file's own
    sample rate is kept; see :func:`ingest` for the canonical pipeline input.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack("<I", data[pos + 4:pos + 8])[0]
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            fmt = _parse_fmt(body)
        elif cid == b"data":
            if len(body) < size:
                raise MalformedWav(f"{path}: data chunk truncated")
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None or payload is None:
        raise MalformedWav(f"{path}: missing fmt or data chunk")

    tag, channels, rate, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedEncoding(f"{path}: {channels} channels")
    if rate <= 0:
        raise MalformedWav(f"{path}: sample rate {rate}")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2")
        x = raw.astype(np.float64) / 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4")
        x = raw.astype(np.float64)
        if not np.all(np.isfinite(x)):
            raise MalformedWav(f"{path}: non-finite float samples")
        x = np.clip(x, -1.0, 1.0)
    else:
        raise UnsupportedEncoding(f"{path}: format tag {tag:#x}, {bits} bits")

    n = x.shape[0] // channels
    if n == 0:
        raise EmptyAudio(f"{path}: no samples")
    x = x[: n * channels].reshape(n, channels).mean(axis=1)
    return AudioBuffer(x, int(rate))


def write_wav(path, buf: AudioBuffer, encoding: str = "pcm16") -> None:
    """Write a mono WAV file.  The write is atomic (temp file + rename)."""
    x = np.clip(buf.samples, -1.0, 1.0)
    if encoding == "pcm16":
        # inverse of the 1/32768 read scaling; +1.0 saturates at 32767
        pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = _WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        pcm = x.astype("<f4").tobytes()
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, buf.sample_rate, buf.sample_rate * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(pcm)) + pcm
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)
    os.replace(tmp, path)


# ---------------------------------------------------------- conditioning


def resample(buf: AudioBuffer, target: int) -> AudioBuffer:
    """Band-limited (polyphase windowed-sinc) rate conversion."""
    if target <= 0:
        raise ValueError("target rate must be positive")
    if target == buf.sample_rate:
        return buf
    g = gcd(int(target), int(buf.sample_rate))
    up, down = int(target) // g, int(buf.sample_rate) // g
    y = sps.resample_poly(buf.samples, up, down, window=("kaiser", 5.0))
    return AudioBuffer(y, int(target))


def normalize_peak(buf: AudioBuffer) -> AudioBuffer:
    peak = float(np.max(np.abs(buf.samples))) if len(buf) else 0.0
    if peak == 0.0 or peak == 1.0:
        return buf
    return replace(buf, samples=buf.samples / peak)


def ingest(path, rate: int = CANONICAL_RATE) -> AudioBuffer:
    """load_wav -> resample to the canonical rate -> peak normalize."""
    return normalize_peak(resample(load_wav(path), rate))


def bandpass(buf: AudioBuffer, lo: float, hi: float) -> AudioBuffer:
    """Zero-phase band-pass: zero every full-signal DFT bin outside [lo, hi]."""
    if not (0 <= lo < hi <= buf.sample_rate / 2):
        raise ValueError(f"invalid band [{lo}, {hi}] for rate {buf.sample_rate}")
    n = len(buf)
    spec = np.fft.rfft(buf.samples)
    freqs = np.fft.rfftfreq(n, d=1.0 / buf.sample_rate)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    return AudioBuffer(np.fft.irfft(spec, n), buf.sample_rate, band=(float(lo), float(hi)))


# ------------------------------------------------------------------ STFT


def get_window(name: str, n: int) -> np.ndarray:
    """Periodic analysis windows (the DFT-even form, COLA-friendly)."""
    k = np.arange(n)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * k / n)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * k / n)
    if name in ("rect", "rectangular", "boxcar"):
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}")


def frame_signal(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    """View of ``x`` as (n_frames, frame_len); frame l starts at l*hop."""
    if len(x) < frame_len:
        raise BufferTooShort(f"{len(x)} samples < frame length {frame_len}")
    view = np.lib.stride_tricks.sliding_window_view(x, frame_len)
    return view[::hop]


def stft(buf: AudioBuffer, frame_len: int = 512, hop: int = 256,
         window: str = "hamming", pad: bool = False) -> Spectrogram:
    """Short-time Fourier transform.

    Frame count is ``floor((n - frame_len) / hop) + 1``.  With ``pad=True``
    the tail is zero-padded to a whole frame so that :func:`istft` can return
    every input sample.
    """
    if not (frame_len >= hop >= 1):
        raise ValueError("need frame_len >= hop >= 1")
    x = buf.samples
    if len(x) < frame_len:
        raise BufferTooShort(f"{len(x)} samples < frame length {frame_len}")
    if pad:
        n_frames = -(-(len(x) - frame_len) // hop) + 1
        x = np.concatenate([x, np.zeros((n_frames - 1) * hop + frame_len - len(x))])
    frames = frame_signal(x, frame_len, hop) * get_window(window, frame_len)
    spec = np.fft.rfft(frames, axis=1).T
    return Spectrogram(spec, frame_len, hop, window, buf.sample_rate, len(buf))


def istft(spec: Spectrogram) -> AudioBuffer:
    """Weighted overlap-add inverse (least-squares synthesis).

    Each frame is inverse transformed, weighted by the analysis window and
    the sum is divided by the overlapped squared-window envelope.
    """
    n_frames, L, hop = spec.n_frames, spec.frame_len, spec.hop
    w = get_window(spec.window, L)
    total = (n_frames - 1) * hop + L
    out = np.zeros(total)
    env = np.zeros(total)
    if n_frames:
        blocks = np.fft.irfft(spec.frames.T, n=L, axis=1) * w
        for l in range(n_frames):
            out[l * hop:l * hop + L] += blocks[l]
            env[l * hop:l * hop + L] += w * w
    hole = env <= 1e-12
    # a zero-valued window sample at n=0 is unavoidable for hann; any other
    # uncovered sample means the overlap cannot reconstruct
    if np.any(hole[1:]):
        raise IncompatibleOverlap(
            f"window {spec.window!r} with hop {hop}/{L} leaves samples uncovered")
    out[~hole] /= env[~hole]
    out[hole] = 0.0
    n = spec.num_samples if 0 < spec.num_samples <= total else total
    return AudioBuffer(out[:n], spec.sample_rate)
