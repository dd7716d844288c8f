"""Monte Carlo permutation tests for pairwise divergence, with Bonferroni control.

Under the null hypothesis that skin tone does not influence predictions, the
top-1 labels within a motion group are exchangeable across the tone slots:
the same motion was rendered identically except for the texture. Each
permutation therefore reshuffles, independently within every group, the
group's labels over its tone slots and recounts the divergence of the pair
under test. The upper-tail add-one estimate

    raw_p = (1 + #{permuted D >= observed D}) / (1 + P)

is exact-in-expectation and never returns 0. Each (pair, group) owns its own
keyed random stream, so p-values do not depend on group order, pair order, or
worker scheduling.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .manifest import MotionGroup, SkinTone, canonical_sorted
from .metrics import PredictionLog, _resolve_tones, _top1_labels
from .rng import keyed_generator


@dataclass(frozen=True)
class PermutationConfig:
    permutations: int = 9999
    seed: int = 0
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if self.permutations < 99:
            raise ValidationError(f"permutations must be >= 99, got {self.permutations}")
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class GroupLabels:
    """One complete group's top-1 labels, aligned with the tone order."""

    token: str
    labels: tuple[str, ...]


@dataclass(frozen=True)
class LabelSet:
    """Everything a pair test needs for one model."""

    model_id: str
    tones: tuple[SkinTone, ...]
    groups: tuple[GroupLabels, ...]


def collect_top1_labels(
    groups: Sequence[MotionGroup],
    preds: PredictionLog,
    model_id: str,
    tones: Sequence[SkinTone] | None = None,
) -> LabelSet:
    """Extract per-group top-1 labels for the permutation machinery."""
    if not groups:
        raise ValidationError("significance testing needs at least one complete group")
    tones = _resolve_tones(groups, tones)
    collected = tuple(
        GroupLabels(
            token=group.identity_token,
            labels=tuple(_top1_labels(group, preds, model_id, tones)),
        )
        for group in sorted(groups, key=lambda g: g.key)
    )
    return LabelSet(model_id=model_id, tones=tuple(tones), groups=collected)


def canonical_pairs(tones: Sequence[SkinTone]) -> tuple[tuple[SkinTone, SkinTone], ...]:
    """Upper-triangle tone pairs in canonical order; C(n, 2) of them."""
    ordered = canonical_sorted(tones)
    return tuple(
        (ordered[i], ordered[j])
        for i in range(len(ordered))
        for j in range(i + 1, len(ordered))
    )


def observed_divergence(label_set: LabelSet, pair: tuple[SkinTone, SkinTone]) -> int:
    i, j = _pair_slots(label_set, pair)
    return sum(1 for g in label_set.groups if g.labels[i] != g.labels[j])


def _pair_slots(label_set: LabelSet, pair: tuple[SkinTone, SkinTone]) -> tuple[int, int]:
    try:
        return label_set.tones.index(pair[0]), label_set.tones.index(pair[1])
    except ValueError:
        raise ValidationError(
            f"pair ({pair[0].value}, {pair[1].value}) not covered by tones "
            f"{[t.value for t in label_set.tones]}"
        ) from None


def pair_test(
    label_set: LabelSet,
    pair: tuple[SkinTone, SkinTone],
    cfg: PermutationConfig,
) -> float:
    """Upper-tail Monte Carlo p-value for one tone pair's divergence count.

    The stream for each group is keyed by (seed, model, pair index, group
    identity). Groups whose labels are all identical contribute zero to every
    permuted count as well as to the observed one, so they are skipped without
    touching any stream.
    """
    if not label_set.groups:
        raise ValidationError("pair test needs at least one group")
    pairs = canonical_pairs(label_set.tones)
    try:
        pair_index = pairs.index((pair[0], pair[1]))
    except ValueError:
        pair_index = pairs.index((pair[1], pair[0]))
    slot_i, slot_j = _pair_slots(label_set, pair)
    n_tones = len(label_set.tones)
    P = cfg.permutations

    observed = observed_divergence(label_set, pair)
    permuted = np.zeros(P, dtype=np.int64)
    for group in label_set.groups:
        labels = group.labels
        first = labels[0]
        if all(label == first for label in labels):
            continue
        code_of: dict[str, int] = {}
        codes = np.array([code_of.setdefault(label, len(code_of)) for label in labels])
        rng = keyed_generator(cfg.seed, label_set.model_id, pair_index, group.token)
        keys = rng.random((P, n_tones))
        perms = np.argsort(keys, axis=1)
        permuted += codes[perms[:, slot_i]] != codes[perms[:, slot_j]]
    exceed = int(np.count_nonzero(permuted >= observed))
    return (1 + exceed) / (1 + P)


def bonferroni(raw_ps: Sequence[float]) -> list[float]:
    """Family-wise correction: adjusted_i = min(1, m * raw_i), m = len(raw_ps)."""
    m = len(raw_ps)
    for p in raw_ps:
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"p-value {p} outside [0, 1]")
    return [min(1.0, m * p) for p in raw_ps]


@dataclass(frozen=True)
class PairResult:
    tone_1: SkinTone
    tone_2: SkinTone
    observed_count: int
    raw_p: float
    adjusted_p: float
    significant_raw: bool
    significant_adjusted: bool


@dataclass(frozen=True)
class SignificanceReport:
    """Raw and Bonferroni-adjusted p-values for every tone pair of one model."""

    model_id: str
    tones: tuple[SkinTone, ...]
    n_groups: int
    m: int
    alpha: float
    permutations: int
    seed: int
    pairs: tuple[PairResult, ...]

    def result(self, a: SkinTone, b: SkinTone) -> PairResult:
        for res in self.pairs:
            if {res.tone_1, res.tone_2} == {a, b}:
                return res
        raise KeyError((a.value, b.value))

    def any_significant_adjusted(self) -> bool:
        return any(res.significant_adjusted for res in self.pairs)

    def to_json(self) -> str:
        payload = {
            "model_id": self.model_id,
            "tones": [t.value for t in self.tones],
            "n_groups": self.n_groups,
            "m": self.m,
            "alpha": self.alpha,
            "permutations": self.permutations,
            "seed": self.seed,
            "pairs": [
                {
                    "tone_1": res.tone_1.value,
                    "tone_2": res.tone_2.value,
                    "observed_count": res.observed_count,
                    "raw_p": res.raw_p,
                    "adjusted_p": res.adjusted_p,
                    "significant_raw": res.significant_raw,
                    "significant_adjusted": res.significant_adjusted,
                }
                for res in self.pairs
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def _grid(self, attr: str) -> str:
        """Upper-triangle CSV grid in canonical tone order (diagonal blank)."""
        header = ["tone", *(t.value for t in self.tones)]
        values: dict[tuple[SkinTone, SkinTone], float] = {}
        for res in self.pairs:
            values[(res.tone_1, res.tone_2)] = getattr(res, attr)
        lines = [",".join(header)]
        for i, row_tone in enumerate(self.tones):
            cells = [row_tone.value]
            for j, col_tone in enumerate(self.tones):
                if j > i:
                    cells.append(repr(values[(row_tone, col_tone)]))
                else:
                    cells.append("")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def raw_grid_csv(self) -> str:
        return self._grid("raw_p")

    def adjusted_grid_csv(self) -> str:
        return self._grid("adjusted_p")

    def matrix(self, attr: str) -> np.ndarray:
        """Symmetric matrix of raw_p/adjusted_p (diagonal 1: no self-divergence)."""
        n = len(self.tones)
        out = np.ones((n, n), dtype=np.float64)
        index = {tone: k for k, tone in enumerate(self.tones)}
        for res in self.pairs:
            i, j = index[res.tone_1], index[res.tone_2]
            value = getattr(res, attr)
            out[i, j] = value
            out[j, i] = value
        return out


def audit_model(
    groups: Sequence[MotionGroup],
    preds: PredictionLog,
    model_id: str,
    cfg: PermutationConfig,
    tones: Sequence[SkinTone] | None = None,
    workers: int = 1,
) -> SignificanceReport:
    """Run every pair test for one model and apply the Bonferroni correction.

    Pair tests are independent; ``workers`` > 1 fans them out over a thread
    pool without changing any result (streams are keyed, reduction ordered).
    """
    label_set = collect_top1_labels(groups, preds, model_id, tones)
    pairs = canonical_pairs(label_set.tones)

    def run(pair: tuple[SkinTone, SkinTone]) -> float:
        return pair_test(label_set, pair, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw_ps = list(pool.map(run, pairs))
    else:
        raw_ps = [run(pair) for pair in pairs]
    adjusted = bonferroni(raw_ps)
    results = tuple(
        PairResult(
            tone_1=pair[0],
            tone_2=pair[1],
            observed_count=observed_divergence(label_set, pair),
            raw_p=raw,
            adjusted_p=adj,
            significant_raw=raw < cfg.alpha,
            significant_adjusted=adj < cfg.alpha,
        )
        for pair, raw, adj in zip(pairs, raw_ps, adjusted)
    )
    return SignificanceReport(
        model_id=model_id,
        tones=label_set.tones,
        n_groups=len(label_set.groups),
        m=len(pairs),
        alpha=cfg.alpha,
        permutations=cfg.permutations,
        seed=cfg.seed,
        pairs=results,
    )
