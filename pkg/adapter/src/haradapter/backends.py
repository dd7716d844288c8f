"""Model backends: a deterministic stub and torchvision's Kinetics-400 zoo.

Labels leaving any backend are normalized exactly as the audit harness
normalizes them on load (lowercase, whitespace/underscore/hyphen runs
collapsed to single spaces), so emitted logs compare cleanly.
"""
from __future__ import annotations

import hashlib
import re

import numpy as np

from .config import ConfigError, ModelSpec
from .video import clip_indices

_SEPARATOR_RUNS = re.compile(r"[\s_\-]+")


def normalize_label(raw: str) -> str:
    out = _SEPARATOR_RUNS.sub(" ", raw).strip().lower()
    if not out:
        raise ConfigError(f"label {raw!r} normalizes to the empty string")
    return out


class StubBackend:
    """Deterministic pseudo-model for tests and dry runs.

    Scores are drawn from a generator seeded by a digest of the decoded frame
    statistics, so the same video bytes always rank the same way while
    different videos disagree; no weights, no network.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.labels = tuple(normalize_label(label) for label in spec.labels)

    def predict(self, frames: np.ndarray) -> list[tuple[str, float]]:
        clips = clip_indices(
            len(frames), self.spec.frames_per_clip, self.spec.stride,
            self.spec.clips_per_video,
        )
        sampled = frames[np.concatenate(clips)]
        features = np.round(sampled.mean(axis=(1, 2, 3)), 4)
        token = f"{self.spec.model_id}|{self.spec.seed}|{features.tolist()}"
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=16).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        raw = rng.random(len(self.labels))
        order = np.argsort(-raw, kind="stable")
        return [(self.labels[i], float(raw[i])) for i in order]


class TorchvisionBackend:
    """Kinetics-400 pretrained video models from torchvision.

    Imported lazily: the adapter stays usable without torch installed. The
    default policy samples a single centered clip; ``clips_per_video`` spreads
    clips uniformly and averages their softmax scores before ranking.
    """

    def __init__(self, spec: ModelSpec, device: str = "cpu"):
        try:
            import torch
            from torchvision.models import get_model, get_model_weights
        except ImportError as exc:
            raise ConfigError(
                f"model {spec.model_id!r} needs torch/torchvision installed: {exc}"
            ) from None
        self.spec = spec
        self.torch = torch
        arch = spec.backend.split(":", 1)[1]
        weights_enum = get_model_weights(arch)
        weights = getattr(weights_enum, spec.weights, None) or weights_enum.DEFAULT
        self.model = get_model(arch, weights=weights).eval().to(device)
        self.transforms = weights.transforms()
        self.labels = tuple(normalize_label(c) for c in weights.meta["categories"])
        self.device = device

    def predict(self, frames: np.ndarray) -> list[tuple[str, float]]:
        torch = self.torch
        clips = clip_indices(
            len(frames), self.spec.frames_per_clip, self.spec.stride,
            self.spec.clips_per_video,
        )
        probs = None
        with torch.no_grad():
            for idx in clips:
                clip = torch.from_numpy(frames[idx]).permute(0, 3, 1, 2)  # T,C,H,W
                batch = self.transforms(clip).unsqueeze(0).to(self.device)
                logits = self.model(batch)
                clip_probs = torch.softmax(logits, dim=1)[0].cpu()
                probs = clip_probs if probs is None else probs + clip_probs
        scores = (probs / len(clips)).numpy()
        order = np.argsort(-scores, kind="stable")
        return [(self.labels[i], float(scores[i])) for i in order]


def build_backend(spec: ModelSpec, device: str):
    if spec.backend == "stub":
        return StubBackend(spec)
    if spec.backend.startswith("torchvision:"):
        return TorchvisionBackend(spec, device=device)
    raise ConfigError(f"unknown backend {spec.backend!r}")
