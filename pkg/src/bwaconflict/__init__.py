"""Conflict triage for body-worn audio recordings.

Recordings are denoised, filtered down to speech, split into energy-bounded
regions, and scored by how often loud phrases repeat.
"""

from .audio_io import AudioBuffer, ingest, load_wav, write_wav
from .pipeline import PipelineConfig, score_buffer, score_file
from .scoring import ConflictReport

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "ConflictReport",
    "PipelineConfig",
    "ingest",
    "load_wav",
    "score_buffer",
    "score_file",
    "write_wav",
]
