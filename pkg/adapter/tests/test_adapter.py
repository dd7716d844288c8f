from __future__ import annotations

import json
from pathlib import Path

import pytest

from haradapter.adapter import infer
from haradapter.backends import StubBackend, normalize_label
from haradapter.cli import main
from haradapter.config import AdapterConfig, ConfigError, ModelSpec, read_manifest_videos
from haradapter.video import DecodeError, clip_indices, read_frames

from conftest import STUB_LABELS, adapter_config, stub_model

# conformance oracle: the audit harness's own loader (test-only dependency;
# the adapter itself never imports the harness)
from ctrlaudit.metrics import load_predictions


def load_config(path: Path) -> AdapterConfig:
    return AdapterConfig.from_json(path.read_text(), base_dir=path.parent)


class TestConfig:
    def test_round_trip(self, video_fixture):
        cfg = load_config(adapter_config(video_fixture, [stub_model("m1")]))
        assert cfg.top_k == 5
        assert cfg.models[0].backend == "stub"
        assert cfg.errors.name == "errors.jsonl"

    def test_bad_top_k_rejected(self, video_fixture):
        with pytest.raises(ConfigError, match="top_k"):
            load_config(adapter_config(video_fixture, [stub_model("m1")], top_k=0))

    def test_stub_needs_labels(self):
        with pytest.raises(ConfigError, match="labels"):
            ModelSpec(model_id="m1", backend="stub")

    def test_unknown_backend_rejected(self):
        with pytest.raises(ConfigError, match="backend"):
            ModelSpec(model_id="m1", backend="tensorplow:x3d")

    def test_missing_video_file_rejected(self, video_fixture):
        manifest = video_fixture / "manifest.csv"
        manifest.write_text(
            manifest.read_text().replace("clip0.avi", "ghost.avi")
        )
        cfg = load_config(adapter_config(video_fixture, [stub_model("m1")]))
        with pytest.raises(ConfigError, match="ghost.avi"):
            read_manifest_videos(cfg)

    def test_duplicate_model_id_rejected(self, video_fixture):
        with pytest.raises(ConfigError, match="duplicate model_id"):
            load_config(
                adapter_config(video_fixture, [stub_model("m1"), stub_model("m1")])
            )


class TestVideo:
    def test_read_frames_shape(self, video_fixture):
        frames = read_frames(video_fixture / "clip0.avi")
        assert frames.shape == (16, 32, 32, 3)

    def test_garbage_file_raises_decode_error(self, tmp_path):
        bad = tmp_path / "bad.avi"
        bad.write_bytes(b"this is not a video at all")
        with pytest.raises(DecodeError):
            read_frames(bad)

    def test_center_clip_indices(self):
        (clip,) = clip_indices(n_frames=20, frames_per_clip=4, stride=2, clips_per_video=1)
        assert clip.tolist() == [6, 8, 10, 12]

    def test_short_video_clamps(self):
        (clip,) = clip_indices(n_frames=3, frames_per_clip=8, stride=1, clips_per_video=1)
        assert clip.max() == 2
        assert len(clip) == 8

    def test_multi_clip_spread(self):
        clips = clip_indices(n_frames=30, frames_per_clip=4, stride=1, clips_per_video=3)
        assert len(clips) == 3
        assert clips[0][0] == 0
        assert clips[-1][-1] == 29


class TestStubBackend:
    def spec(self, **overrides) -> ModelSpec:
        return ModelSpec(**{**stub_model("stub-a"), **overrides})

    def test_deterministic_and_sorted(self, video_fixture):
        frames = read_frames(video_fixture / "clip0.avi")
        backend = StubBackend(self.spec())
        one = backend.predict(frames)
        two = backend.predict(frames)
        assert one == two
        scores = [s for _, s in one]
        assert scores == sorted(scores, reverse=True)
        assert {label for label, _ in one} == set(STUB_LABELS)

    def test_different_videos_differ(self, video_fixture):
        backend = StubBackend(self.spec())
        a = backend.predict(read_frames(video_fixture / "clip0.avi"))
        b = backend.predict(read_frames(video_fixture / "clip1.avi"))
        assert a != b

    def test_labels_are_normalized(self):
        backend = StubBackend(self.spec(labels=("Golf_Driving", "Yoga ")))
        assert backend.labels == ("golf driving", "yoga")


class TestInfer:
    def test_three_videos_two_models_top5(self, video_fixture):
        cfg = load_config(
            adapter_config(video_fixture, [stub_model("m1"), stub_model("m2", seed=9)])
        )
        result = infer(cfg)
        assert (result.videos_ok, result.videos_failed) == (3, 0)
        assert result.rows == 3 * 2 * 5
        lines = cfg.output.read_text().splitlines()
        assert lines[0] == "video_id,model_id,rank,label,score"
        assert len(lines) == 1 + 30

    def test_output_passes_harness_validation(self, video_fixture):
        cfg = load_config(
            adapter_config(video_fixture, [stub_model("m1"), stub_model("m2", seed=9)])
        )
        infer(cfg)
        log = load_predictions(cfg.output.read_bytes())  # raises on any violation
        assert len(log) == 30
        for video_id in ("v000", "v001", "v002"):
            ranked = log.ranked(video_id, "m1")
            assert [r.rank for r in ranked] == [1, 2, 3, 4, 5]
            scores = [r.score for r in ranked]
            assert scores == sorted(scores, reverse=True)

    def test_rows_sorted_by_video_model_rank(self, video_fixture):
        cfg = load_config(
            adapter_config(video_fixture, [stub_model("mB"), stub_model("mA", seed=3)])
        )
        infer(cfg)
        rows = [
            line.split(",")[:3] for line in cfg.output.read_text().splitlines()[1:]
        ]
        keys = [(r[0], r[1], int(r[2])) for r in rows]
        assert keys == sorted(keys)

    def test_repeat_runs_are_identical(self, video_fixture):
        cfg = load_config(adapter_config(video_fixture, [stub_model("m1")]))
        infer(cfg)
        first = cfg.output.read_bytes()
        infer(cfg)
        assert cfg.output.read_bytes() == first

    def test_top_k_clamped_to_label_count(self, video_fixture):
        cfg = load_config(
            adapter_config(
                video_fixture,
                [stub_model("m1", labels=["cartwheeling", "capoeira"])],
                top_k=10,
            )
        )
        result = infer(cfg)
        assert result.rows == 3 * 2
        load_predictions(cfg.output.read_bytes())  # still contiguous from 1

    def test_undecodable_video_sidecarred_and_skipped(self, video_fixture):
        (video_fixture / "clip1.avi").write_bytes(b"garbage bytes, not a video")
        cfg = load_config(adapter_config(video_fixture, [stub_model("m1")]))
        result = infer(cfg)
        assert (result.videos_ok, result.videos_failed) == (2, 1)
        log = load_predictions(cfg.output.read_bytes())
        assert log.top1("v001", "m1") is None
        assert log.top1("v000", "m1") is not None
        errors = [
            json.loads(line) for line in cfg.errors.read_text().splitlines() if line
        ]
        assert len(errors) == 1
        assert errors[0]["video_id"] == "v001"

    def test_no_failures_writes_empty_sidecar(self, video_fixture):
        cfg = load_config(adapter_config(video_fixture, [stub_model("m1")]))
        infer(cfg)
        assert cfg.errors.read_text() == ""


class TestCli:
    def test_main_success(self, video_fixture, capsys):
        config = adapter_config(video_fixture, [stub_model("m1")])
        assert main(["--config", str(config)]) == 0
        assert "wrote 15 rows" in capsys.readouterr().out

    def test_main_partial_failure_exits_one(self, video_fixture):
        (video_fixture / "clip2.avi").write_bytes(b"nope")
        config = adapter_config(video_fixture, [stub_model("m1")])
        assert main(["--config", str(config)]) == 1

    def test_main_missing_config_exits_two(self, tmp_path):
        assert main(["--config", str(tmp_path / "none.json")]) == 2


class TestNormalize:
    def test_matches_harness_rules(self):
        assert normalize_label("Jumpstyle_Dancing ") == "jumpstyle dancing"
        assert normalize_label("golf-driving") == "golf driving"
        with pytest.raises(ConfigError):
            normalize_label("  ")
