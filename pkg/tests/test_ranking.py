from __future__ import annotations

import csv

import pytest

from bwaconflict.errors import DuplicateFileId
from bwaconflict.ranking import class_means, rank_reports, read_labels, triage_summary, write_plot_data, write_rank_csv
from bwaconflict.scoring import ConflictReport


def _rep(fid, score):
    return ConflictReport(file_id=fid, repetition_score=1.0, intensity_score=score, conflict_score=score)


def test_sort_three():
    rows = rank_reports([_rep("a", 0.5), _rep("b", 0.2), _rep("c", 0.9)])
    assert [(r.rank, r.conflict_score) for r in rows] == [(1, 0.9), (2, 0.5), (3, 0.2)]


def test_single_and_ties():
    assert rank_reports([_rep("x", 0.0)])[0].rank == 1
    rows = rank_reports([_rep("b", 0.0), _rep("a", 0.0)])
    assert [r.file_id for r in rows] == ["a", "b"]


def test_permutation_and_no_gaps():
    reps = [_rep(f"f{i}", (i * 37 % 11) / 10) for i in range(20)]
    rows = rank_reports(reps)
    assert [r.rank for r in rows] == list(range(1, 21))
    assert sorted(r.file_id for r in rows) == sorted(r.file_id for r in reps)
    scores = [r.conflict_score for r in rows]
    assert scores == sorted(scores, reverse=True)
    assert sorted(scores) == sorted(r.conflict_score for r in reps)


def test_duplicate_ids():
    with pytest.raises(DuplicateFileId):
        rank_reports([_rep("a", 0.1), _rep("a", 0.2)])


def test_class_means_and_summary():
    reps = [_rep("h", 0.9), _rep("m1", 0.5), _rep("m2", 0.3), _rep("l1", 0.1), _rep("l2", 0.0)]
    labels = {"h": 2, "m1": 1, "m2": 1, "l1": 0, "l2": 0}
    rows = rank_reports(reps, labels)
    assert class_means(rows) == {0: pytest.approx(0.05), 1: pytest.approx(0.4), 2: 0.9}
    s = triage_summary(rows, top_fraction=0.6, top_n=1)
    assert s["top_cutoff_rank"] == 3
    assert s["conflict_in_top"] == 3 and s["high_in_top_n"] == 1


def test_cutoff_for_105_files():
    rows = rank_reports([_rep(f"f{i:03d}", 1 - i / 105) for i in range(105)])
    assert triage_summary(rows)["top_cutoff_rank"] == 24


def test_csv_outputs(tmp_path):
    rows = rank_reports([_rep("a", 0.5), _rep("b", 0.25)], {"a": 1})
    write_rank_csv(rows, tmp_path / "r.csv")
    write_plot_data(rows, tmp_path / "p.csv")
    with open(tmp_path / "r.csv", newline="") as fh:
        back = list(csv.DictReader(fh))
    assert [b["file_id"] for b in back] == ["a", "b"] and back[1]["label"] == ""
    assert float(back[0]["conflict_score"]) == 0.5
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "rank,score,class"


def test_read_labels(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("file_id,label,class\na,2,high\nb,0,low\n")
    assert read_labels(p) == {"a": 2, "b": 0}
    p.write_text("name,value\n")
    with pytest.raises(ValueError):
        read_labels(p)
