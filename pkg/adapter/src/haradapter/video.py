"""Frame decoding and clip sampling."""
from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np


class DecodeError(Exception):
    pass


def read_frames(path: Path) -> np.ndarray:
    """Decode every frame as RGB uint8, shape (T, H, W, 3)."""
    capture = cv2.VideoCapture(str(path))
    frames = []
    try:
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
    finally:
        capture.release()
    if not frames:
        raise DecodeError(f"no decodable frames in {path}")
    return np.stack(frames)


def clip_indices(
    n_frames: int, frames_per_clip: int, stride: int, clips_per_video: int
) -> list[np.ndarray]:
    """Frame indices per clip; one centered clip by default.

    With clips_per_video > 1, clip starts are spread uniformly over the video.
    Indices beyond the end clamp to the last frame, so short videos still
    yield full-length clips.
    """
    span = (frames_per_clip - 1) * stride + 1
    if clips_per_video == 1:
        starts = [max(0, (n_frames - span) // 2)]
    else:
        upper = max(0, n_frames - span)
        starts = [round(i * upper / (clips_per_video - 1)) for i in range(clips_per_video)]
    clips = []
    for start in starts:
        idx = start + stride * np.arange(frames_per_clip)
        clips.append(np.minimum(idx, n_frames - 1))
    return clips
