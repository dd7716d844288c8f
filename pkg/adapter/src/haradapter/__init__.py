"""Inference adapter: manifest videos in, audit-ready prediction logs out."""

__version__ = "0.1.0"

from .adapter import InferenceResult, infer
from .backends import StubBackend, TorchvisionBackend, build_backend, normalize_label
from .config import AdapterConfig, AdapterError, ConfigError, ModelSpec, read_manifest_videos
from .video import DecodeError, clip_indices, read_frames
