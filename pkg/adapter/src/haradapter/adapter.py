"""Batch inference: manifest videos in, prediction-log CSV out.

The output schema is the audit harness's wire format,
``video_id,model_id,rank,label,score``: ranks contiguous from 1, scores
non-increasing, rows sorted by (video_id, model_id, rank). Videos that fail
to decode are skipped and recorded in a JSONL sidecar; the harness then
surfaces them as missing predictions.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .backends import build_backend
from .config import AdapterConfig, read_manifest_videos
from .video import DecodeError, read_frames

PREDICTION_HEADER = ("video_id", "model_id", "rank", "label", "score")


@dataclass(frozen=True)
class InferenceResult:
    rows: int
    videos_ok: int
    videos_failed: int


def infer(config: AdapterConfig) -> InferenceResult:
    """Run every configured model over every manifest video and write the log."""
    entries = read_manifest_videos(config)
    backends = [(spec.model_id, build_backend(spec, config.device)) for spec in config.models]

    rows: list[tuple[str, str, int, str, float]] = []
    failures: list[dict[str, str]] = []
    ok = 0
    for entry in sorted(entries, key=lambda e: e.video_id):
        try:
            frames = read_frames(entry.path)
        except DecodeError as exc:
            failures.append(
                {"video_id": entry.video_id, "path": str(entry.path), "error": str(exc)}
            )
            continue
        ok += 1
        for model_id, backend in backends:
            ranking = backend.predict(frames)[: config.top_k]
            for rank, (label, score) in enumerate(ranking, start=1):
                rows.append((entry.video_id, model_id, rank, label, score))

    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PREDICTION_HEADER)
    for video_id, model_id, rank, label, score in rows:
        writer.writerow((video_id, model_id, rank, label, repr(score)))
    config.output.parent.mkdir(parents=True, exist_ok=True)
    config.output.write_bytes(buf.getvalue().encode("utf-8"))

    config.errors.parent.mkdir(parents=True, exist_ok=True)
    error_lines = [json.dumps(f, sort_keys=True) for f in failures]
    config.errors.write_bytes(("\n".join(error_lines) + "\n" if error_lines else "").encode("utf-8"))

    return InferenceResult(rows=len(rows), videos_ok=ok, videos_failed=len(failures))
