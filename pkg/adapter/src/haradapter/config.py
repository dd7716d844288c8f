"""Adapter configuration: which models run over which manifest."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path


class AdapterError(Exception):
    pass


class ConfigError(AdapterError):
    pass


MANIFEST_HEADER = (
    "video_id",
    "path",
    "action",
    "motion_id",
    "skin_tone",
    "viewpoint",
    "background",
    "variant",
)


@dataclass(frozen=True)
class ModelSpec:
    """One model to run: identity, backend, weights, and clip sampling."""

    model_id: str
    backend: str  # "stub" or "torchvision:<arch>"
    weights: str = "DEFAULT"
    frames_per_clip: int = 8
    stride: int = 1
    clips_per_video: int = 1  # >1 samples uniformly spaced clips, averages scores
    labels: tuple[str, ...] = ()  # stub backend only
    seed: int = 0  # stub backend only

    def __post_init__(self) -> None:
        if self.frames_per_clip < 1 or self.stride < 1 or self.clips_per_video < 1:
            raise ConfigError(
                f"model {self.model_id!r}: frames_per_clip, stride, and "
                "clips_per_video must all be >= 1"
            )
        if self.backend == "stub" and not self.labels:
            raise ConfigError(f"stub model {self.model_id!r} needs a labels list")
        if self.backend != "stub" and not self.backend.startswith("torchvision:"):
            raise ConfigError(
                f"model {self.model_id!r}: unknown backend {self.backend!r} "
                "(expected 'stub' or 'torchvision:<arch>')"
            )


@dataclass(frozen=True)
class VideoEntry:
    video_id: str
    path: Path


@dataclass(frozen=True)
class AdapterConfig:
    manifest: Path
    output: Path
    errors: Path
    models: tuple[ModelSpec, ...]
    top_k: int = 5
    device: str = "cpu"
    video_root: Path | None = None

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if not self.models:
            raise ConfigError("no models configured")
        ids = [m.model_id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate model_id in config")

    @classmethod
    def from_json(cls, text: str, base_dir: Path | None = None) -> "AdapterConfig":
        payload = json.loads(text)
        base = base_dir or Path(".")

        def resolve(p: str) -> Path:
            path = Path(p)
            return path if path.is_absolute() else base / path

        try:
            models = tuple(
                ModelSpec(
                    model_id=m["model_id"],
                    backend=m["backend"],
                    weights=m.get("weights", "DEFAULT"),
                    frames_per_clip=int(m.get("frames_per_clip", 8)),
                    stride=int(m.get("stride", 1)),
                    clips_per_video=int(m.get("clips_per_video", 1)),
                    labels=tuple(m.get("labels", ())),
                    seed=int(m.get("seed", 0)),
                )
                for m in payload["models"]
            )
            output = resolve(payload["output"])
            return cls(
                manifest=resolve(payload["manifest"]),
                output=output,
                errors=resolve(payload["errors"]) if "errors" in payload
                else output.with_name("errors.jsonl"),
                models=models,
                top_k=int(payload.get("top_k", 5)),
                device=payload.get("device", "cpu"),
                video_root=resolve(payload["video_root"]) if "video_root" in payload else None,
            )
        except KeyError as exc:
            raise ConfigError(f"adapter config missing key {exc}") from None


def read_manifest_videos(config: AdapterConfig) -> list[VideoEntry]:
    """Read (video_id, path) pairs off the manifest and check the files exist.

    The manifest schema is the audit harness's wire format; only the first two
    columns matter here, but the header is verified in full so a foreign file
    fails loudly.
    """
    if not config.manifest.is_file():
        raise ConfigError(f"manifest not found: {config.manifest}")
    root = config.video_root or config.manifest.parent
    entries: list[VideoEntry] = []
    missing: list[str] = []
    with config.manifest.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_HEADER:
            raise ConfigError(
                f"bad manifest header {header!r}, expected {','.join(MANIFEST_HEADER)}"
            )
        seen: set[str] = set()
        for row in reader:
            if not row:
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise ConfigError(f"manifest row has {len(row)} fields: {row!r}")
            video_id, rel_path = row[0], row[1]
            if video_id in seen:
                raise ConfigError(f"duplicate video_id {video_id!r} in manifest")
            seen.add(video_id)
            path = Path(rel_path)
            if not path.is_absolute():
                path = root / path
            if not path.is_file():
                missing.append(f"{video_id} -> {path}")
            entries.append(VideoEntry(video_id=video_id, path=path))
    if missing:
        raise ConfigError(
            "manifest paths do not resolve to readable files: " + "; ".join(missing[:5])
            + ("..." if len(missing) > 5 else "")
        )
    return entries
