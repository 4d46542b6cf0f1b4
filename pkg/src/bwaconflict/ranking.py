"""Corpus ranking by conflict score and the triage summaries built on it."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

from .errors import DuplicateFileId
from .scoring import ConflictReport


@dataclass(frozen=True)
class RankRow:
    rank: int
    file_id: str
    conflict_score: float
    repetition_score: float
    intensity_score: float
    label: int | None = None


def rank_reports(reports, labels: dict | None = None) -> list:
    """Sort by conflict score (descending, file_id breaks ties); ranks 1..n."""
    seen = set()
    for r in reports:
        if r.file_id in seen:
            raise DuplicateFileId(r.file_id)
        seen.add(r.file_id)
    ordered = sorted(reports, key=lambda r: (-r.conflict_score, r.file_id))
    labels = labels or {}
    return [RankRow(i + 1, r.file_id, r.conflict_score, r.repetition_score,
                    r.intensity_score, labels.get(r.file_id))
            for i, r in enumerate(ordered)]


def class_means(rows) -> dict:
    groups: dict = {}
    for row in rows:
        if row.label is not None:
            groups.setdefault(row.label, []).append(row.conflict_score)
    return {lab: sum(v) / len(v) for lab, v in sorted(groups.items())}


def triage_summary(rows, top_fraction: float = 0.23, top_n: int = 10) -> dict:
    """How far down the list a reviewer has to go to find labeled conflict."""
    n = len(rows)
    cutoff = math.floor(top_fraction * n + 1e-9)
    conflict = [r for r in rows if r.label is not None and r.label > 0]
    high = [r for r in rows if r.label == 2]
    found = sum(1 for r in conflict if r.rank <= cutoff)
    return {
        "n_files": n,
        "top_fraction": top_fraction,
        "top_cutoff_rank": cutoff,
        "conflict_files": len(conflict),
        "conflict_in_top": found,
        "conflict_recall_top": found / len(conflict) if conflict else 0.0,
        "high_files": len(high),
        "high_in_top_n": sum(1 for r in high if r.rank <= top_n),
        "top_n": top_n,
        "high_ranks": [r.rank for r in high],
        "class_means": {str(k): v for k, v in class_means(rows).items()},
    }


def read_labels(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"file_id", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns file_id,label")
        return {row["file_id"]: int(row["label"]) for row in reader}


def write_rank_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("rank", "file_id", "conflict_score", "repetition_score", "intensity_score", "label"))
        for r in rows:
            w.writerow((r.rank, r.file_id, repr(r.conflict_score), repr(r.repetition_score),
                        repr(r.intensity_score), "" if r.label is None else r.label))


def write_plot_data(rows, path) -> None:
    """(rank, score, class) triples for an external rank-curve plot."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("rank", "score", "class"))
        for r in rows:
            w.writerow((r.rank, repr(r.conflict_score), "" if r.label is None else r.label))


def load_reports(paths) -> list:
    out = []
    for p in paths:
        with open(p) as fh:
            out.append(ConflictReport.from_dict(json.load(fh)))
    return out
