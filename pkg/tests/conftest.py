from __future__ import annotations

import pytest

from ctrlaudit.labelmatch import MatchTable, Vocabulary, match_lexical
from ctrlaudit.manifest import (
    CANONICAL_TONES,
    FactorSpace,
    Manifest,
    build_full_manifest,
)
from ctrlaudit.metrics import PredictionLog, PredictionRecord


def manifest_csv(rows: list[tuple[str, ...]]) -> bytes:
    header = "video_id,path,action,motion_id,skin_tone,viewpoint,background,variant"
    return ("\n".join([header] + [",".join(r) for r in rows]) + "\n").encode()


def make_row(
    video_id: str,
    action: str = "cartwheel",
    motion_id: str = "m00",
    tone: str = "white",
    viewpoint: str = "near",
    background: str = "autumn",
    variant: str = "initial",
) -> tuple[str, ...]:
    path = f"videos/{action}_{motion_id}_{tone}_{viewpoint}_{background}.mp4"
    return (video_id, path, action, motion_id, tone, viewpoint, background, variant)


def product_manifest(space: FactorSpace) -> Manifest:
    return build_full_manifest(space)


def rank1_log(entries: dict[tuple[str, str], str]) -> PredictionLog:
    """Build a top-1-only log from {(video_id, model_id): label}."""
    return PredictionLog(
        [
            PredictionRecord(video_id=vid, model_id=mid, rank=1, label=label, score=1.0)
            for (vid, mid), label in entries.items()
        ]
    )


@pytest.fixture
def small_space() -> FactorSpace:
    return FactorSpace(
        skin_tones=CANONICAL_TONES[:3],
        actions=("cartwheel", "jog"),
        motion_ids=("m00", "m01"),
        viewpoints=("near",),
        backgrounds=("autumn",),
    )


@pytest.fixture
def default_space() -> FactorSpace:
    return FactorSpace.default()


@pytest.fixture
def identity_table(default_space) -> MatchTable:
    """Every default action matched to itself (normalized), score 1.0."""
    src = Vocabulary("src", default_space.actions)
    tgt = Vocabulary("tgt", default_space.actions + ("capoeira",))
    return match_lexical(src, tgt, k=1, threshold=0.95)
