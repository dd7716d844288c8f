from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np
import pytest

MANIFEST_HEADER = "video_id,path,action,motion_id,skin_tone,viewpoint,background,variant"

STUB_LABELS = ["cartwheeling", "capoeira", "jogging", "yoga", "drinking", "golf driving"]


def write_video(path: Path, pattern_seed: int, frames: int = 16, size: int = 32) -> None:
    """A tiny MJPG clip whose pixels vary with the seed so videos differ."""
    writer = cv2.VideoWriter(
        str(path), cv2.VideoWriter_fourcc(*"MJPG"), 10, (size, size)
    )
    assert writer.isOpened(), "cv2 VideoWriter unavailable"
    rng = np.random.default_rng(pattern_seed)
    base = rng.integers(0, 255, size=(size, size, 3), dtype=np.uint8)
    for t in range(frames):
        frame = np.clip(base.astype(np.int16) + 5 * t, 0, 255).astype(np.uint8)
        writer.write(frame)
    writer.release()


@pytest.fixture
def video_fixture(tmp_path: Path) -> Path:
    """Three decodable videos plus a manifest referencing them."""
    rows = []
    for i, (action, tone) in enumerate(
        [("cartwheel", "white"), ("cartwheel", "african"), ("jog", "asian")]
    ):
        name = f"clip{i}.avi"
        write_video(tmp_path / name, pattern_seed=i)
        rows.append(f"v{i:03d},{name},{action},m00,{tone},near,autumn,modified")
    (tmp_path / "manifest.csv").write_text(MANIFEST_HEADER + "\n" + "\n".join(rows) + "\n")
    return tmp_path


def adapter_config(
    workdir: Path,
    models: list[dict],
    top_k: int = 5,
    manifest: str = "manifest.csv",
) -> Path:
    payload = {
        "manifest": manifest,
        "output": "out/predictions.csv",
        "errors": "out/errors.jsonl",
        "top_k": top_k,
        "device": "cpu",
        "models": models,
    }
    path = workdir / "adapter.json"
    path.write_text(json.dumps(payload, indent=2))
    return path


def stub_model(model_id: str, **overrides) -> dict:
    spec = {"model_id": model_id, "backend": "stub", "labels": STUB_LABELS}
    spec.update(overrides)
    return spec
