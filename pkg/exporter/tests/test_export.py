import json

import numpy as np
import pytest

from rrfexporter import cli, layout as layout_mod, plugins
from rrfexporter.errors import ExportError, ImageError, LayoutJsonError, PluginError
from rrfexporter.export import discover_images, export, load_image
from rrfexporter.rrfe import file_size


class TestLayoutContract:
    def test_fingerprint_matches_consumer(self, layout_json):
        rrfsim_io = pytest.importorskip("rrfsim.io")
        from rrfsim.geometry import PatchLayout

        ours = layout_mod.load(layout_json)
        theirs = PatchLayout.from_dict(json.loads(layout_json.read_text()))
        assert ours.canonical_json() == rrfsim_io.canonical_layout_json(theirs)
        assert ours.fingerprint() == rrfsim_io.layout_fingerprint(theirs)

    def test_mirror_permutation_is_involution(self, layout_json):
        grid = layout_mod.load(layout_json)
        perm = grid.mirror_permutation()
        for i, j in enumerate(perm):
            assert perm[j] == i
            assert grid.positions[i][1] == grid.positions[j][1]

    def test_malformed_layout_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"W": 112, "H": 112}))
        with pytest.raises(LayoutJsonError):
            layout_mod.load(path)

    def test_out_of_bounds_position_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({
            "W": 112, "H": 112, "w": 28, "h": 28, "stride": 14,
            "corner_exclusion": False, "positions": [[112, 0]],
        }))
        with pytest.raises(LayoutJsonError):
            layout_mod.load(path)


class TestExport:
    def test_writes_expected_files_and_sizes(self, tmp_path, layout_json, four_images):
        images_dir, _ = four_images
        grid = layout_mod.load(layout_json)
        out = tmp_path / "out"
        result = export(images_dir, grid, plugins.identity(dim=64), out)
        assert result.written == 4
        files = sorted(out.glob("*.rrfe"))
        assert len(files) == 4
        for path in files:
            assert path.stat().st_size == file_size(33, 64) == 24 + 33 * 64 * 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["flip_policy"] == "none"
        assert set(manifest["images"]) == {f"face{i:02d}" for i in range(4)}

    def test_rerun_is_skip_complete(self, tmp_path, layout_json, four_images):
        images_dir, _ = four_images
        grid = layout_mod.load(layout_json)
        out = tmp_path / "out"
        export(images_dir, grid, plugins.identity(dim=16), out)
        before = {p.name: p.read_bytes() for p in out.iterdir()}
        again = export(images_dir, grid, plugins.identity(dim=16), out)
        assert again.skipped
        assert again.written == 0
        after = {p.name: p.read_bytes() for p in out.iterdir()}
        assert before == after

    def test_conflicting_rerun_rejected(self, tmp_path, layout_json, four_images):
        images_dir, _ = four_images
        grid = layout_mod.load(layout_json)
        out = tmp_path / "out"
        export(images_dir, grid, plugins.identity(dim=16), out)
        with pytest.raises(ExportError):
            export(images_dir, grid, plugins.identity(dim=16), out, flip=True)

    def test_dim_violation_reports_image(self, tmp_path, layout_json, four_images):
        images_dir, _ = four_images
        grid = layout_mod.load(layout_json)

        class Liar:
            dim = 8
            batch_size = 4

            def __call__(self, patch):
                return np.ones(6, dtype=np.float32)

        with pytest.raises(ExportError, match="face00"):
            export(images_dir, grid, Liar(), tmp_path / "out")
        assert not (tmp_path / "out" / "manifest.json").exists()

    def test_wrong_geometry_reports_image(self, tmp_path, layout_json):
        images_dir = tmp_path / "imgs"
        images_dir.mkdir()
        np.save(images_dir / "small.npy", np.ones((16, 16, 1), dtype=np.float32))
        grid = layout_mod.load(layout_json)
        with pytest.raises(ExportError, match="small"):
            export(images_dir, grid, plugins.identity(dim=8), tmp_path / "out")

    def test_zero_patch_rejected_with_diagnostics(self, tmp_path, layout_json):
        images_dir = tmp_path / "imgs"
        images_dir.mkdir()
        # one fully black image: every identity row would be a zero vector
        np.save(images_dir / "black.npy", np.zeros((112, 112, 1), dtype=np.float32))
        grid = layout_mod.load(layout_json)
        with pytest.raises(ExportError, match="black"):
            export(images_dir, grid, plugins.identity(dim=8), tmp_path / "out")

    def test_flip_merges_mirrored_pass(self, tmp_path, layout_json, four_images):
        images_dir, arrays = four_images
        grid = layout_mod.load(layout_json)
        plugin = plugins.identity(dim=48)
        out_plain = tmp_path / "plain"
        out_flip = tmp_path / "flip"
        export(images_dir, grid, plugin, out_plain)
        export(images_dir, grid, plugin, out_flip, flip=True)

        rrfsim_io = pytest.importorskip("rrfsim.io")
        from rrfsim.geometry import PatchLayout

        consumer_layout = PatchLayout.from_dict(grid.to_dict())
        perm = list(grid.mirror_permutation())
        for image_id, pixels in arrays.items():
            base = rrfsim_io.read_embeddings(
                out_plain / f"{image_id}.rrfe", consumer_layout
            ).matrix
            merged = rrfsim_io.read_embeddings(
                out_flip / f"{image_id}.rrfe", consumer_layout
            ).matrix
            flipped = pixels[:, ::-1, :]
            expected = []
            for i, (x, y) in enumerate(grid.positions):
                mx, my = grid.positions[perm[i]]
                mirror_feat = flipped[my : my + 28, mx : mx + 28].astype(
                    np.float32
                ).reshape(-1)[:48]
                expected.append(base[i] + mirror_feat)
            assert np.array_equal(merged, np.stack(expected))


class TestCli:
    def test_cli_export_and_skip(self, tmp_path, layout_json, four_images, capsys):
        images_dir, _ = four_images
        out = tmp_path / "out"
        argv = [
            "--images", str(images_dir), "--layout", str(layout_json),
            "--plugin", "rrfexporter.plugins:identity",
            "--plugin-opt", "dim=32", "--out", str(out),
        ]
        assert cli.main(argv) == 0
        assert "wrote 4 file(s)" in capsys.readouterr().out
        assert cli.main(argv) == 0
        assert "skipped" in capsys.readouterr().out

    def test_cli_bad_plugin_exits_1(self, tmp_path, layout_json, four_images, capsys):
        images_dir, _ = four_images
        code = cli.main([
            "--images", str(images_dir), "--layout", str(layout_json),
            "--plugin", "nope.such:thing", "--out", str(tmp_path / "out"),
        ])
        assert code == 1
        assert capsys.readouterr().err.startswith("rrf-export: error:")

    def test_plugin_opt_parsing(self):
        parser = cli.build_parser()
        args = parser.parse_args([
            "--images", "i", "--layout", "l", "--out", "o",
            "--plugin-opt", "dim=16", "--plugin-opt", "tag=fast",
        ])
        assert dict(args.plugin_opt) == {"dim": 16, "tag": "fast"}


class TestPluginLoading:
    def test_loads_identity_by_spec(self):
        plugin = plugins.load_plugin("rrfexporter.plugins:identity", {"dim": 12})
        assert plugin.dim == 12

    def test_missing_attribute(self):
        with pytest.raises(PluginError):
            plugins.load_plugin("rrfexporter.plugins:missing")

    def test_bad_spec_format(self):
        with pytest.raises(PluginError):
            plugins.load_plugin("rrfexporter.plugins.identity")

    def test_rejects_bad_dim(self):
        class NoDim:
            pass

        with pytest.raises(PluginError):
            plugins.load_plugin("rrfexporter.plugins:identity", {"dim": 0})


class TestImageLoading:
    def test_grayscale_png_gets_channel_axis(self, tmp_path):
        from PIL import Image

        pixels = np.arange(112 * 112, dtype=np.uint8).reshape(112, 112) % 255 + 1
        Image.fromarray(pixels, mode="L").save(tmp_path / "gray.png")
        loaded = load_image(tmp_path / "gray.png")
        assert loaded.shape == (112, 112, 1)

    def test_empty_directory_rejected(self, tmp_path):
        (tmp_path / "imgs").mkdir()
        with pytest.raises(ImageError):
            discover_images(tmp_path / "imgs")
