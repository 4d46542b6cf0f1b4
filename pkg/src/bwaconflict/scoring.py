"""Confidence mapping of pair metrics and file-level aggregation.

f1 maps fingerprint distance and f2 maps correlation onto [0, 1]
confidences; a pair's score is their geometric mean.  A file's repetition
score averages the non-zero scores among its top 5% of pairs, its
intensity averages those pairs' energies, and the conflict score is the
product of the two.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

REPORT_VERSION = "bwaconflict-report/1"
TOP_FRACTION_DENOM = 20   # top 5% == ceil(n / 20)


def f1(E: float) -> float:
    """Fingerprint confidence: 1 below 0.3, linear down to 0 at 0.45."""
    if E < 0.3:
        return 1.0
    if E <= 0.45:
        # clamp: rounding at the breakpoint can step just outside [0, 1]
        return min(1.0, max(0.0, 20.0 / 3.0 * (0.3 - E) + 1.0))
    return 0.0


def f2(C: float) -> float:
    """Correlation confidence: 0 below 0.25, linear up to 1 at 0.55."""
    if C > 0.55:
        return 1.0
    if C >= 0.25:
        return min(1.0, max(0.0, 10.0 / 3.0 * (C - 0.25)))
    return 0.0


def pair_score(E: float, C: float) -> float:
    return math.sqrt(f1(E) * f2(C))


def top_k(pair_count: int) -> int:
    return -(-pair_count // TOP_FRACTION_DENOM)


def _rank_key(p):
    return (-p.combined, p.fp_distance, p.idx_a, p.idx_b)


def repetition_score(pairs):
    """Return (score, contributors) from the top ceil(5%) pairs by S."""
    pairs = list(pairs)
    if not pairs:
        return 0.0, []
    top = sorted(pairs, key=_rank_key)[: top_k(len(pairs))]
    contributors = [p for p in top if p.combined > 0]
    if not contributors:
        return 0.0, []
    return sum(p.combined for p in contributors) / len(contributors), contributors


def intensity_score(contributors, envelope=None) -> float:
    """Mean pair energy over the contributing pairs.

    Each pair's ``mean_energy`` already averages its two regions' mean of
    the thresholded envelope, so ``envelope`` is only accepted for
    interface symmetry.
    """
    contributors = list(contributors)
    if not contributors:
        return 0.0
    return sum(p.mean_energy for p in contributors) / len(contributors)


@dataclass
class ConflictReport:
    file_id: str
    repetition_score: float = 0.0
    intensity_score: float = 0.0
    conflict_score: float = 0.0
    top_pairs: list = field(default_factory=list)
    region_count: int = 0
    pair_count: int = 0
    error: str | None = None
    version: str = REPORT_VERSION

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ConflictReport":
        if doc.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {doc.get('version')!r}")
        return cls(**doc)


def conflict_score(pairs, envelope=None, file_id: str = "", regions=None) -> ConflictReport:
    """Aggregate pair scores of one file into a :class:`ConflictReport`.

    ``top_pairs`` lists all ceil(5%) top pairs; those with ``contributes``
    set carry the repetition and intensity averages.  ``regions``
    (canonically ordered, as used by ``compare_all``) adds timestamps.
    """
    pairs = list(pairs)
    rep, contributors = repetition_score(pairs)
    inten = intensity_score(contributors, envelope)
    top = []
    for p in sorted(pairs, key=_rank_key)[: top_k(len(pairs))]:
        entry = {"idx_a": p.idx_a, "idx_b": p.idx_b, "E": p.fp_distance,
                 "C": p.correlation, "S": p.combined, "mean_energy": p.mean_energy,
                 "contributes": p.combined > 0}
        if regions is not None:
            ra, rb = regions[p.idx_a], regions[p.idx_b]
            entry.update(a_start=ra.start, a_end=ra.end, b_start=rb.start, b_end=rb.end)
        top.append(entry)
    n_regions = len(regions) if regions is not None else len({i for p in pairs for i in (p.idx_a, p.idx_b)})
    return ConflictReport(
        file_id=file_id,
        repetition_score=rep,
        intensity_score=inten,
        conflict_score=rep * inten,
        top_pairs=top,
        region_count=n_regions,
        pair_count=len(pairs),
    )
