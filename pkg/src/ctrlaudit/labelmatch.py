"""Action-vocabulary matching and the prediction-correctness predicate.

Source labels (the motion library vocabulary) are matched against the target
model vocabulary either semantically, via precomputed sentence embeddings
supplied as a CSV file, or lexically via normalized Levenshtein similarity.
The resulting match table decides whether a predicted label counts as correct
for a ground-truth action.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

_SEPARATOR_RUNS = re.compile(r"[\s_\-]+")


def normalize_label(raw: str) -> str:
    """Lowercase, trim, and collapse whitespace/underscore/hyphen runs to one space."""
    out = _SEPARATOR_RUNS.sub(" ", raw).strip().lower()
    if not out:
        raise ValidationError(f"label {raw!r} normalizes to the empty string")
    return out


@dataclass(frozen=True)
class Vocabulary:
    """An ordered, duplicate-free list of normalized labels."""

    name: str
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "labels", tuple(normalize_label(label) for label in self.labels)
        )
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError(
                f"vocabulary {self.name!r} has duplicate labels after normalization"
            )

    @classmethod
    def from_text(cls, name: str, text: str) -> "Vocabulary":
        """Load from a one-label-per-line file; blank lines are skipped."""
        labels = []
        seen = set()
        for line in text.splitlines():
            if not line.strip():
                continue
            label = normalize_label(line)
            if label in seen:
                raise ValidationError(
                    f"vocabulary {name!r}: duplicate label {label!r} after normalization"
                )
            seen.add(label)
            labels.append(label)
        return cls(name=name, labels=tuple(labels))


class EmbeddingTable:
    """Normalized label -> fixed-dimension embedding vector."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        dims = {v.shape for v in vectors.values()}
        if len(dims) > 1:
            raise ValidationError(f"inconsistent embedding dimensions: {sorted(dims)}")
        for label, vec in vectors.items():
            if vec.size == 0:
                raise ValidationError(f"embedding for {label!r} has zero length")
            if not np.isfinite(vec).all():
                raise ValidationError(f"embedding for {label!r} has non-finite values")
            if float(np.linalg.norm(vec)) == 0.0:
                raise ValidationError(f"embedding for {label!r} has zero norm")
        self.vectors = vectors
        self.dim = next(iter(vectors.values())).size if vectors else 0

    def vector(self, label: str) -> np.ndarray:
        try:
            return self.vectors[label]
        except KeyError:
            raise ValidationError(f"label {label!r} missing from embedding table") from None

    @classmethod
    def from_csv(cls, text: str) -> "EmbeddingTable":
        """Parse ``label,v0,v1,...`` rows (header required, constant dimension)."""
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValidationError("empty embedding file")
        header = lines[0].split(",")
        if header[0] != "label":
            raise ValidationError("embedding file must start with a 'label,...' header")
        vectors: dict[str, np.ndarray] = {}
        for i, line in enumerate(lines[1:], start=2):
            cells = line.split(",")
            label = normalize_label(cells[0])
            if label in vectors:
                raise ValidationError(f"duplicate embedding label {label!r}")
            try:
                vec = np.array([float(c) for c in cells[1:]], dtype=np.float64)
            except ValueError:
                raise ValidationError(f"line {i}: non-numeric embedding value") from None
            vectors[label] = vec
        return cls(vectors)


@dataclass(frozen=True)
class MatchEntry:
    targets: tuple[str, ...]
    scores: tuple[float, ...]


@dataclass
class MatchTable:
    """Per source label, the accepted target labels in descending score order."""

    entries: dict[str, MatchEntry]
    unmatched: tuple[str, ...]
    unmatched_queries: int = field(default=0, compare=False)

    def is_correct(self, prediction_label: str, ground_truth_action: str) -> bool:
        """True iff the normalized prediction is among the action's matched targets.

        Ground truths that fell below the match threshold always answer False;
        ``unmatched_queries`` counts those lookups so silent misses stay visible.
        """
        truth = normalize_label(ground_truth_action)
        entry = self.entries.get(truth)
        if entry is not None:
            return normalize_label(prediction_label) in entry.targets
        if truth in self.unmatched:
            self.unmatched_queries += 1
            return False
        raise ValidationError(f"action {truth!r} absent from match table")

    def matched_label(self, action: str) -> str:
        """The top-ranked target for an action (used as the simulator's base label)."""
        truth = normalize_label(action)
        entry = self.entries.get(truth)
        if entry is None:
            raise ValidationError(f"action {truth!r} has no matched target label")
        return entry.targets[0]

    def to_json(self) -> str:
        payload = {
            "entries": {
                src: {"targets": list(e.targets), "scores": list(e.scores)}
                for src, e in self.entries.items()
            },
            "unmatched": list(self.unmatched),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MatchTable":
        payload = json.loads(text)
        entries = {
            src: MatchEntry(targets=tuple(e["targets"]), scores=tuple(e["scores"]))
            for src, e in payload["entries"].items()
        }
        return cls(entries=entries, unmatched=tuple(payload["unmatched"]))


def _check_match_params(k: int, threshold: float, lo: float) -> None:
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if not lo <= threshold <= 1.0:
        raise ValidationError(f"threshold {threshold} outside [{lo}, 1]")


def _select(
    source: Vocabulary,
    target: Vocabulary,
    similarity_row: "callable",
    k: int,
    threshold: float,
) -> MatchTable:
    entries: dict[str, MatchEntry] = {}
    unmatched: list[str] = []
    for src in source.labels:
        sims = similarity_row(src)
        candidates = [
            (float(sims[idx]), idx) for idx in range(len(target.labels))
            if sims[idx] >= threshold
        ]
        # descending score, ties broken by target vocabulary order
        candidates.sort(key=lambda pair: (-pair[0], pair[1]))
        top = candidates[:k]
        if not top:
            unmatched.append(src)
            continue
        entries[src] = MatchEntry(
            targets=tuple(target.labels[idx] for _, idx in top),
            scores=tuple(score for score, _ in top),
        )
    return MatchTable(entries=entries, unmatched=tuple(unmatched))


def match_semantic(
    source: Vocabulary,
    target: Vocabulary,
    emb: EmbeddingTable,
    k: int = 1,
    threshold: float = 0.6,
) -> MatchTable:
    """Match by cosine similarity between precomputed label embeddings."""
    _check_match_params(k, threshold, lo=-1.0)
    for vocab in (source, target):
        for label in vocab.labels:
            emb.vector(label)
    target_matrix = (
        np.stack([emb.vector(t) for t in target.labels])
        if target.labels
        else np.zeros((0, max(emb.dim, 1)))
    )
    target_norms = np.linalg.norm(target_matrix, axis=1) if target.labels else np.array([])

    def cosine_row(src: str) -> np.ndarray:
        v = emb.vector(src)
        sims = target_matrix @ v / (target_norms * np.linalg.norm(v))
        return np.clip(sims, -1.0, 1.0)

    return _select(source, target, cosine_row, k, threshold)


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(
                    previous[j] + 1,  # delete
                    current[j - 1] + 1,  # insert
                    previous[j - 1] + (ca != cb),  # substitute
                )
            )
        previous = current
    return previous[-1]


def lexical_similarity(a: str, b: str) -> float:
    """1 - dist/max(len); 1.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def match_lexical(
    source: Vocabulary,
    target: Vocabulary,
    k: int = 1,
    threshold: float = 0.6,
) -> MatchTable:
    """Embedding-free fallback: normalized Levenshtein similarity."""
    _check_match_params(k, threshold, lo=0.0)
    if not source.labels or not target.labels:
        raise ValidationError("lexical matching requires non-empty vocabularies")

    def similarity_row(src: str) -> list[float]:
        return [lexical_similarity(src, t) for t in target.labels]

    return _select(source, target, similarity_row, k, threshold)
