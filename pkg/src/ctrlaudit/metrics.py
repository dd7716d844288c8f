"""Accuracy tables and pairwise skin-tone divergence from prediction logs.

The prediction log is a CSV with header ``video_id,model_id,rank,label,score``
carrying each model's ranked labels per video. Only rank-1 labels feed the
divergence statistics; deeper ranks are retained for diagnostics.

For two tones the divergence rate is the fraction of complete motion groups
in which the model's top-1 labels differ between those tones:

    rate(s1, s2) = #{groups i : top1_i(s1) != top1_i(s2)} / n_groups
"""
from __future__ import annotations

import csv
import io
import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ManifestParseError, ValidationError
from .labelmatch import MatchTable, normalize_label
from .manifest import Manifest, MotionGroup, SkinTone, canonical_sorted

PREDICTION_HEADER = ("video_id", "model_id", "rank", "label", "score")


@dataclass(frozen=True)
class PredictionRecord:
    video_id: str
    model_id: str
    rank: int
    label: str
    score: float


class PredictionLog:
    """Validated prediction records indexed by (video_id, model_id)."""

    def __init__(self, records: Sequence[PredictionRecord]):
        ranked: dict[tuple[str, str], list[PredictionRecord]] = defaultdict(list)
        for rec in records:
            ranked[(rec.video_id, rec.model_id)].append(rec)
        self._ranked: dict[tuple[str, str], tuple[PredictionRecord, ...]] = {}
        for key, recs in ranked.items():
            recs.sort(key=lambda r: r.rank)
            ranks = [r.rank for r in recs]
            if ranks != list(range(1, len(recs) + 1)):
                raise ValidationError(
                    f"ranks for video {key[0]!r} model {key[1]!r} are {ranks}, "
                    "expected contiguous 1..k"
                )
            scores = [r.score for r in recs]
            if any(a < b for a, b in zip(scores, scores[1:])):
                raise ValidationError(
                    f"scores for video {key[0]!r} model {key[1]!r} increase with rank"
                )
            self._ranked[key] = tuple(recs)
        self.records = tuple(
            rec for key in sorted(self._ranked) for rec in self._ranked[key]
        )

    def top1(self, video_id: str, model_id: str) -> str | None:
        recs = self._ranked.get((video_id, model_id))
        return recs[0].label if recs else None

    def ranked(self, video_id: str, model_id: str) -> tuple[PredictionRecord, ...]:
        return self._ranked.get((video_id, model_id), ())

    def model_ids(self) -> tuple[str, ...]:
        return tuple(sorted({key[1] for key in self._ranked}))

    def __len__(self) -> int:
        return len(self.records)


def load_predictions(data: bytes | str) -> PredictionLog:
    """Parse and validate a prediction-log CSV.

    Labels are normalized on load so downstream comparisons are insensitive
    to case and separator style in the wire file.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ManifestParseError("empty prediction log: missing header", line=1) from None
    if tuple(header) != PREDICTION_HEADER:
        raise ManifestParseError(
            f"bad header {header!r}, expected {','.join(PREDICTION_HEADER)}", line=1
        )
    records = []
    for line, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(PREDICTION_HEADER):
            raise ManifestParseError(
                f"expected {len(PREDICTION_HEADER)} fields, found {len(row)}", line=line
            )
        video_id, model_id, rank_text, label, score_text = row
        try:
            rank = int(rank_text)
            score = float(score_text)
        except ValueError:
            raise ManifestParseError(
                f"non-numeric rank or score in {row!r}", line=line
            ) from None
        if rank < 1:
            raise ValidationError(f"line {line}: rank must be >= 1, got {rank}")
        records.append(
            PredictionRecord(
                video_id=video_id,
                model_id=model_id,
                rank=rank,
                label=normalize_label(label),
                score=score,
            )
        )
    return PredictionLog(records)


def predictions_to_csv(log: PredictionLog) -> bytes:
    """Serialize sorted by (video_id, model_id, rank); the canonical wire form."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTION_HEADER)
    for rec in log.records:
        writer.writerow(
            (rec.video_id, rec.model_id, rec.rank, rec.label, repr(rec.score))
        )
    return buf.getvalue().encode("utf-8")


_ATTRIBUTE_GETTERS = {
    "action": lambda rec: rec.action,
    "motion_id": lambda rec: rec.motion_id,
    "skin_tone": lambda rec: rec.skin_tone.value,
    "viewpoint": lambda rec: rec.viewpoint,
    "background": lambda rec: rec.background,
    "variant": lambda rec: rec.variant,
}


@dataclass
class AblationCell:
    correct: int
    count: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.count


@dataclass
class AblationTable:
    """Top-1 accuracy per (model, *group_by) cell, with exact counts retained."""

    group_by: tuple[str, ...]
    cells: dict[tuple[str, ...], AblationCell]

    def merged_with(self, other: "AblationTable") -> "AblationTable":
        if self.group_by != other.group_by:
            raise ValidationError("cannot merge ablation tables with different grouping")
        cells = dict(self.cells)
        for key, cell in other.cells.items():
            if key in cells:
                cells[key] = AblationCell(
                    correct=cells[key].correct + cell.correct,
                    count=cells[key].count + cell.count,
                )
            else:
                cells[key] = AblationCell(correct=cell.correct, count=cell.count)
        return AblationTable(group_by=self.group_by, cells=cells)

    def to_csv(self) -> str:
        header = ["model_id", *self.group_by, "correct", "count", "accuracy"]
        lines = [",".join(header)]
        for key in sorted(self.cells):
            cell = self.cells[key]
            lines.append(
                ",".join([*key, str(cell.correct), str(cell.count), repr(cell.accuracy)])
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "group_by": list(self.group_by),
            "cells": [
                {
                    "model_id": key[0],
                    **dict(zip(self.group_by, key[1:])),
                    "correct": cell.correct,
                    "count": cell.count,
                    "accuracy": cell.accuracy,
                }
                for key, cell in sorted(self.cells.items())
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AblationTable":
        payload = json.loads(text)
        group_by = tuple(payload["group_by"])
        cells = {}
        for row in payload["cells"]:
            key = (row["model_id"], *(row[name] for name in group_by))
            cells[key] = AblationCell(correct=int(row["correct"]), count=int(row["count"]))
        return cls(group_by=group_by, cells=cells)


def accuracy(
    manifest: Manifest,
    preds: PredictionLog,
    table: MatchTable,
    model_id: str,
    group_by: Sequence[str] = (),
) -> AblationTable:
    """Fraction of videos whose rank-1 label is correct, per grouping cell.

    Every manifest video must have a rank-1 prediction for the model.
    """
    group_by = tuple(group_by)
    for name in group_by:
        if name not in _ATTRIBUTE_GETTERS:
            raise ValidationError(f"unknown grouping attribute {name!r}")
    missing = [rec.video_id for rec in manifest.records if preds.top1(rec.video_id, model_id) is None]
    if missing:
        raise ValidationError(
            f"model {model_id!r} has no predictions for {len(missing)} videos: "
            + ", ".join(sorted(missing)[:10])
            + ("..." if len(missing) > 10 else "")
        )
    cells: dict[tuple[str, ...], AblationCell] = {}
    for rec in manifest.records:
        key = (model_id, *(_ATTRIBUTE_GETTERS[name](rec) for name in group_by))
        cell = cells.setdefault(key, AblationCell(correct=0, count=0))
        cell.count += 1
        if table.is_correct(preds.top1(rec.video_id, model_id), rec.action):
            cell.correct += 1
    return AblationTable(group_by=group_by, cells=cells)


def best_worst_summary(ablation: AblationTable, best, worst) -> dict:
    """Per-model accuracy at best settings vs two readings of "worst".

    ``worst_per_action`` pools each action's minimum-mean cell;
    ``non_best_mean`` pools every cell except each action's best one. All
    three aggregate exact correct/count sums, reported alongside the ratio.
    """
    if tuple(ablation.group_by) != ("action", "viewpoint", "background"):
        raise ValidationError(
            "best/worst summary needs a table grouped by action,viewpoint,background"
        )
    models = sorted({key[0] for key in ablation.cells})
    summary: dict[str, dict] = {}
    for model in models:
        tallies = {"best": [0, 0], "worst_per_action": [0, 0], "non_best_mean": [0, 0]}
        for (model_id, action, viewpoint, background), cell in ablation.cells.items():
            if model_id != model:
                continue
            best_setting = best.entries[action]
            if (viewpoint, background) == (best_setting.viewpoint, best_setting.background):
                bucket = tallies["best"]
                bucket[0] += cell.correct
                bucket[1] += cell.count
            else:
                bucket = tallies["non_best_mean"]
                bucket[0] += cell.correct
                bucket[1] += cell.count
            worst_setting = worst.entries[action]
            if (viewpoint, background) == (worst_setting.viewpoint, worst_setting.background):
                bucket = tallies["worst_per_action"]
                bucket[0] += cell.correct
                bucket[1] += cell.count
        summary[model] = {
            name: {
                "correct": correct,
                "count": count,
                "accuracy": (correct / count) if count else None,
            }
            for name, (correct, count) in tallies.items()
        }
    return summary


@dataclass(frozen=True)
class DivergenceMatrix:
    """Symmetric per-pair group counts and rates for one model.

    ``counts[i][j]`` is the number of motion groups whose compared quantity
    differs between tones i and j; ``rate = counts / n_groups``.
    """

    model_id: str
    tones: tuple[SkinTone, ...]
    counts: np.ndarray
    n_groups: int

    @property
    def rates(self) -> np.ndarray:
        return self.counts / self.n_groups

    def pair_count(self, a: SkinTone, b: SkinTone) -> int:
        i, j = self.tones.index(a), self.tones.index(b)
        return int(self.counts[i, j])

    def to_csv(self) -> str:
        lines = ["model_id,tone_1,tone_2,count,n_groups,rate"]
        rates = self.rates
        for i in range(len(self.tones)):
            for j in range(i + 1, len(self.tones)):
                lines.append(
                    ",".join(
                        (
                            self.model_id,
                            self.tones[i].value,
                            self.tones[j].value,
                            str(int(self.counts[i, j])),
                            str(self.n_groups),
                            repr(float(rates[i, j])),
                        )
                    )
                )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "model_id": self.model_id,
            "tones": [t.value for t in self.tones],
            "n_groups": self.n_groups,
            "counts": [[int(c) for c in row] for row in self.counts],
            "rates": [[float(r) for r in row] for row in self.rates],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _resolve_tones(
    groups: Sequence[MotionGroup], tones: Sequence[SkinTone] | None
) -> tuple[SkinTone, ...]:
    if tones is None:
        seen: set[SkinTone] = set()
        for group in groups:
            seen.update(group.members)
        tones = canonical_sorted(seen)
    else:
        tones = canonical_sorted(tones)
    for group in groups:
        if set(group.members) != set(tones):
            raise ValidationError(
                f"group {group.key} covers {sorted(t.value for t in group.members)}, "
                f"expected exactly {[t.value for t in tones]}"
            )
    return tuple(tones)


def _top1_labels(
    group: MotionGroup,
    preds: PredictionLog,
    model_id: str,
    tones: Sequence[SkinTone],
) -> list[str]:
    labels = []
    for tone in tones:
        video_id = group.members[tone]
        label = preds.top1(video_id, model_id)
        if label is None:
            raise ValidationError(
                f"model {model_id!r} has no rank-1 prediction for video {video_id!r}"
            )
        labels.append(label)
    return labels


def divergence_matrix(
    groups: Sequence[MotionGroup],
    preds: PredictionLog,
    model_id: str,
    tones: Sequence[SkinTone] | None = None,
) -> DivergenceMatrix:
    """Count, per tone pair, the complete groups whose top-1 labels differ.

    All groups must cover exactly the same tone set; the caller filters out
    incomplete groups (and reports how many it dropped).
    """
    if not groups:
        raise ValidationError("divergence needs at least one complete motion group")
    tones = _resolve_tones(groups, tones)
    n = len(tones)
    counts = np.zeros((n, n), dtype=np.int64)
    for group in groups:
        labels = _top1_labels(group, preds, model_id, tones)
        for i in range(n):
            for j in range(i + 1, n):
                if labels[i] != labels[j]:
                    counts[i, j] += 1
                    counts[j, i] += 1
    return DivergenceMatrix(
        model_id=model_id, tones=tones, counts=counts, n_groups=len(groups)
    )


def divergence_by_action(
    groups: Sequence[MotionGroup],
    preds: PredictionLog,
    model_id: str,
    tones: Sequence[SkinTone] | None = None,
) -> dict[str, DivergenceMatrix]:
    """Per-action divergence matrices; N is that action's complete-group count."""
    if not groups:
        raise ValidationError("divergence needs at least one complete motion group")
    tones = _resolve_tones(groups, tones)
    by_action: dict[str, list[MotionGroup]] = defaultdict(list)
    for group in groups:
        by_action[group.action].append(group)
    return {
        action: divergence_matrix(action_groups, preds, model_id, tones)
        for action, action_groups in sorted(by_action.items())
    }


def error_matrix(
    groups: Sequence[MotionGroup],
    preds: PredictionLog,
    table: MatchTable,
    model_id: str,
    tones: Sequence[SkinTone] | None = None,
) -> DivergenceMatrix:
    """Count groups where correctness (not just the label) flips between tones.

    A correctness flip requires a label change, so these counts are bounded
    above by the divergence counts elementwise.
    """
    if not groups:
        raise ValidationError("error matrix needs at least one complete motion group")
    tones = _resolve_tones(groups, tones)
    n = len(tones)
    counts = np.zeros((n, n), dtype=np.int64)
    for group in groups:
        labels = _top1_labels(group, preds, model_id, tones)
        correct = [table.is_correct(label, group.action) for label in labels]
        for i in range(n):
            for j in range(i + 1, n):
                if correct[i] != correct[j]:
                    counts[i, j] += 1
                    counts[j, i] += 1
    return DivergenceMatrix(
        model_id=model_id, tones=tones, counts=counts, n_groups=len(groups)
    )
