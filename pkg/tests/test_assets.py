"""Tests for target images and run manifests."""
import numpy as np
import pytest

from app.assets import BUNDLED, bundled_target, load_target, write_bundled_targets
from app.exceptions import AssetIOError, ResolutionMismatchError
from app.manifest import ManifestWriter, read_manifest
from app.rendering import GrayImage
from app.schemas import FrameRecord, RestartRecord


class TestBundledTargets:
    """Built-in silhouettes."""

    @pytest.mark.parametrize("name", BUNDLED)
    def test_binary_and_nonempty(self, name):
        image = bundled_target(name, (64, 64))
        assert image.resolution == (64, 64)
        assert set(np.unique(image.pixels)) == {0.0, 1.0}

    def test_rectangular_resolution(self):
        assert bundled_target("rabbit", (48, 80)).resolution == (48, 80)

    def test_unknown_name(self):
        with pytest.raises(AssetIOError) as exc:
            bundled_target("dragon")
        assert "bundled:dragon" in exc.value.message

    def test_written_files(self, tmp_path):
        paths = write_bundled_targets(tmp_path, (32, 32))
        assert sorted(p.name for p in paths) == sorted(f"{n}.pgm" for n in BUNDLED)
        assert GrayImage.load(paths[0]).resolution == (32, 32)


class TestLoadTarget:
    """Targets from files or bundled names."""

    def test_threshold_at_half(self, tmp_path):
        path = tmp_path / "gray.png"
        GrayImage(np.array([[0.2, 0.6], [0.5, 0.49]])).save_png(path)
        target = load_target(str(path))
        np.testing.assert_array_equal(target.silhouette.pixels, [[0.0, 1.0], [1.0, 0.0]])
        assert target.original.pixels[0, 1] == pytest.approx(153 / 255)

    def test_relative_to_base_dir(self, tmp_path):
        GrayImage.blank((4, 4), 1.0).save_pgm(tmp_path / "white.pgm")
        target = load_target("white.pgm", base_dir=tmp_path)
        assert target.silhouette.pixels.all()

    def test_file_resolution_must_match(self, tmp_path):
        path = tmp_path / "small.pgm"
        GrayImage.blank((4, 4)).save_pgm(path)
        with pytest.raises(ResolutionMismatchError):
            load_target(str(path), (8, 8))

    def test_bundled_follows_resolution(self):
        target = load_target("bundled:disc", (40, 40))
        assert target.silhouette.resolution == (40, 40)
        assert target.source == "bundled:disc"

    def test_missing_file(self, tmp_path):
        with pytest.raises(AssetIOError) as exc:
            load_target(str(tmp_path / "missing.png"))
        assert exc.value.exit_code == 3


class TestManifest:
    """JSON-lines records."""

    def test_records_round_trip(self, tmp_path):
        path = tmp_path / "run" / "manifest.jsonl"
        with ManifestWriter(path) as manifest:
            manifest.write(RestartRecord(restart=0, seed=3, status="completed", iterations=10, best_iteration=7,
                                         best_image_term=1.5))
            manifest.write(FrameRecord(frame=1, alpha=0.5, refined=False, pen_term=0.0, files=["a.pgm"]))
        assert manifest.count == 2
        records = read_manifest(path)
        assert [r["kind"] for r in records] == ["restart", "frame"]
        assert records[0]["best_image_term"] == 1.5
        assert b"\r\n" not in path.read_bytes()

    def test_write_outside_context(self, tmp_path):
        with pytest.raises(RuntimeError):
            ManifestWriter(tmp_path / "m.jsonl").write(FrameRecord(frame=0, alpha=0.0, refined=False,
                                                                    pen_term=0.0, files=[]))

    def test_unreadable(self, tmp_path):
        with pytest.raises(AssetIOError):
            read_manifest(tmp_path / "absent.jsonl")
