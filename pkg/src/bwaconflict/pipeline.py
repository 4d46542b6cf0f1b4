"""End-to-end scoring of one recording and VAD training-set assembly."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .audio_io import CANONICAL_RATE, AudioBuffer, bandpass, ingest, normalize_peak, resample
from .denoise import DenoiserParams, denoise
from .features import extract_features
from .repetition import compare_all
from .scoring import ConflictReport, conflict_score
from .segment import BAND, segment
from .synth import vad_stream
from .vad import VadModel, filter_speech

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    denoise: DenoiserParams = field(default_factory=DenoiserParams)
    passes: int = 3
    use_vad: bool = True
    renormalize: bool = True        # peak-normalize again right before segmentation
    workers: int = 1


def load_config(path) -> PipelineConfig:
    """Read a TOML config.

    Recognised keys::

        [denoise]   alpha, g_min, frame_len, hop, alpha_d, minima_window, q_max,
                    alpha_s, alpha_p, delta, beta, zeta_min_db, zeta_max_db, passes
        [pipeline]  use_vad, renormalize, workers
    """
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> PipelineConfig:
    cfg = PipelineConfig()
    den = dict(doc.get("denoise", {}))
    passes = den.pop("passes", cfg.passes)
    known = {f.name for f in fields(DenoiserParams)}
    unknown = set(den) - known
    pipe = dict(doc.get("pipeline", {}))
    unknown |= {f"pipeline.{k}" for k in set(pipe) - {"use_vad", "renormalize", "workers"}}
    unknown |= {k for k in doc if k not in ("denoise", "pipeline")}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return replace(cfg, denoise=replace(cfg.denoise, **den), passes=int(passes), **pipe)


def prepare(buf: AudioBuffer) -> AudioBuffer:
    return normalize_peak(resample(buf, CANONICAL_RATE))


def score_buffer(buf: AudioBuffer, model: VadModel | None, config: PipelineConfig | None = None,
                 file_id: str = "") -> ConflictReport:
    """Denoise -> non-speech filter -> segment -> compare -> score."""
    config = config or PipelineConfig()
    buf = prepare(buf)
    clean = denoise(buf, config.denoise, config.passes)
    if config.use_vad and model is not None:
        clean, _ = filter_speech(clean, model)
    if config.renormalize:
        clean = normalize_peak(clean)
    banded = bandpass(clean, *BAND)
    regions = segment(banded)
    pairs = compare_all(banded, regions)
    ordered = sorted(regions.regions, key=lambda r: (r.start, r.end))
    return conflict_score(pairs, regions.envelope, file_id, ordered)


def score_file(path, model: VadModel | None, config: PipelineConfig | None = None) -> ConflictReport:
    file_id = os.path.splitext(os.path.basename(str(path)))[0]
    return score_buffer(ingest(path), model, config, file_id)


def vad_training_set(seed: int = 0, seconds: float = 480.0, chunk_s: float = 60.0,
                     params: DenoiserParams | None = None, passes: int = 3):
    """Denoised synthetic speech / non-speech stream as (features, labels).

    Frames whose centre falls in an unlabeled guard span are dropped.
    """
    rows, labels = [], []
    n_chunks = int(np.ceil(seconds / chunk_s))
    for c in range(n_chunks):
        rng = np.random.default_rng([seed, 2, c])
        x, lab = vad_stream(rng, chunk_s)
        buf = denoise(AudioBuffer(x, CANONICAL_RATE), params or DenoiserParams(), passes)
        fm = extract_features(buf)
        centres = np.rint((fm.frame_times + 0.03) * CANONICAL_RATE).astype(int)
        frame_lab = lab[np.clip(centres, 0, lab.size - 1)]
        keep = frame_lab >= 0
        rows.append(fm.values[keep])
        labels.append(frame_lab[keep] == 1)
    return np.vstack(rows), np.concatenate(labels)
