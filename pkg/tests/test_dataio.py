"""Dataset CSVs, image codecs, heatmap renders, and run configuration."""

import json

import numpy as np
import pytest

from qregion._pnm import read_pnm
from qregion.dataio import (
    CONFIG_ENV_VAR,
    DataError,
    DatasetRecord,
    RunConfig,
    decode_image,
    encode_image,
    load_dataset,
    load_run_config,
    render_heatmap,
    render_masked_image,
)
from qregion.features import ImageBuffer
from qregion.grid import BlockSet, partition_grid
from qregion.synthetic import generate_image


class TestDataset:
    def test_rows_with_scores(self, tmp_path):
        (tmp_path / "d.csv").write_text("image_path,mos\na.png,3.5\nsub/b.png,4.0\n")
        records = load_dataset(tmp_path / "d.csv")
        assert len(records) == 2
        assert records[0].mos == 3.5
        assert records[0].image_path == str(tmp_path / "a.png")
        assert records[1].image_path == str(tmp_path / "sub" / "b.png")

    def test_rows_without_score_column(self, tmp_path):
        (tmp_path / "d.csv").write_text("image_path\na.png\nb.png\n")
        records = load_dataset(tmp_path / "d.csv")
        assert all(r.mos is None for r in records)

    def test_non_numeric_score_names_line(self, tmp_path):
        (tmp_path / "d.csv").write_text("image_path,mos\na.png,3.5\nb.png,high\n")
        with pytest.raises(DataError, match="line 3"):
            load_dataset(tmp_path / "d.csv")

    def test_duplicate_paths_rejected(self, tmp_path):
        (tmp_path / "d.csv").write_text("image_path\na.png\na.png\n")
        with pytest.raises(DataError, match="duplicate"):
            load_dataset(tmp_path / "d.csv")

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataError):
            load_dataset(tmp_path / "absent.csv")

    def test_wrong_header_rejected(self, tmp_path):
        (tmp_path / "d.csv").write_text("file,score\na.png,1\n")
        with pytest.raises(DataError, match="header"):
            load_dataset(tmp_path / "d.csv")

    def test_record_validation(self):
        with pytest.raises(DataError):
            DatasetRecord(image_path="")
        with pytest.raises(DataError):
            DatasetRecord(image_path="a.png", mos=float("nan"))


class TestImageCodec:
    def test_known_ppm_bytes_decode_exactly(self, tmp_path):
        path = tmp_path / "two.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255]))
        img = decode_image(path)
        assert img.pixels[0, 0].tolist() == [1.0, 0.0, 0.0]
        assert img.pixels[1, 1].tolist() == [1.0, 1.0, 1.0]

    @pytest.mark.parametrize("name", ["img.png", "img.ppm", "img.pgm"])
    def test_encode_decode_within_quantization(self, name, tmp_path):
        src = generate_image(3, height=40, width=56)
        if name.endswith(".pgm"):
            src = ImageBuffer(pixels=src.luma()[..., None])
        path = tmp_path / name
        encode_image(src, path)
        back = decode_image(path)
        assert back.pixels.shape == src.pixels.shape
        assert np.abs(back.pixels - src.pixels).max() <= 1.0 / 255.0

    def test_truncated_png_rejected(self, tmp_path):
        good = tmp_path / "good.png"
        encode_image(generate_image(1, 32, 32), good)
        bad = tmp_path / "bad.png"
        bad.write_bytes(good.read_bytes()[:48])
        with pytest.raises(DataError):
            decode_image(bad)

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"GIF89a" + b"\0" * 32)
        with pytest.raises(DataError, match="unsupported"):
            decode_image(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataError):
            decode_image(tmp_path / "absent.png")

    def test_sixteen_bit_pgm_scaled(self, tmp_path):
        path = tmp_path / "w.pgm"
        arr = np.array([[0, 65535], [32768, 1000]], dtype=">u2")
        path.write_bytes(b"P5\n2 2\n65535\n" + arr.tobytes())
        img = decode_image(path)
        assert img.pixels[0, 1, 0] == 1.0
        assert img.pixels[0, 0, 0] == 0.0


class TestRenders:
    def test_measure_map_render_is_min_max_scaled(self, tmp_path):
        values = np.linspace(0.0, 1.0, 48).reshape(6, 8)
        render_heatmap(values, tmp_path / "m.pgm")
        gray = read_pnm(tmp_path / "m.pgm")
        assert gray.min() == 0 and gray.max() == 255

    def test_constant_map_renders_mid_gray(self, tmp_path):
        render_heatmap(np.full((5, 5), 2.0), tmp_path / "c.pgm")
        assert np.all(read_pnm(tmp_path / "c.pgm") == 128)

    def test_block_scores_render_monotone_distinct(self, tmp_path):
        grid = partition_grid(3, 4)
        scores = np.arange(12.0)
        render_heatmap(scores, tmp_path / "b.pgm", grid=grid, image_shape=(96, 128))
        gray = read_pnm(tmp_path / "b.pgm")
        tiles = [gray[r * 32, c * 32] for r in range(3) for c in range(4)]
        assert len(set(tiles)) == 12
        assert tiles == sorted(tiles)

    def test_block_scores_need_grid_and_shape(self, tmp_path):
        with pytest.raises(DataError):
            render_heatmap(np.arange(12.0), tmp_path / "b.pgm")

    def test_png_render_supported(self, tmp_path):
        render_heatmap(np.linspace(0, 1, 64).reshape(8, 8), tmp_path / "m.png")
        img = decode_image(tmp_path / "m.png")
        assert img.channels == 1

    def test_masked_render_blacks_out_selected_half(self, tmp_path):
        img = generate_image(5, 96, 128)
        grid = partition_grid(3, 4)
        blocks = BlockSet.from_indices(12, [0, 1, 2, 3, 4, 5])
        render_masked_image(img, blocks, grid, tmp_path / "mask.pgm")
        gray = read_pnm(tmp_path / "mask.pgm")
        # row-major: blocks 0-3 = first block row, 4-5 = second row cols 0-1
        assert np.all(gray[:32, :] == 0)
        assert np.all(gray[32:64, :64] == 0)
        assert gray[32:64, 64:].max() > 0
        assert gray[64:, :].max() > 0


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.grid_rows == 3 and cfg.grid_cols == 4
        assert cfg.mode == "image_deviation"
        assert cfg.subset_cap == 924
        assert cfg.thresholds == (1, 2, 3, 4, 5)
        assert cfg.pixels_per_degree == 100.0

    def test_mode_aliases(self):
        assert RunConfig(mode="deviation").mode == "image_deviation"
        assert RunConfig(mode="plcc").mode == "dataset_plcc"

    def test_unknown_mode_rejected(self):
        with pytest.raises(DataError):
            RunConfig(mode="sideways")

    def test_bad_thresholds_rejected(self):
        with pytest.raises(DataError):
            RunConfig(thresholds=(3, 2))
        with pytest.raises(DataError):
            RunConfig(thresholds=(0,))

    def test_bad_predictor_rejected(self):
        with pytest.raises(DataError):
            RunConfig(predictor="magic")
        with pytest.raises(DataError):
            RunConfig(predictor="bridge:")

    def test_bridge_predictor_accepted(self):
        cfg = RunConfig(predictor="bridge:server --stub 3")
        assert cfg.predictor.startswith("bridge:")

    def test_encoder_fields_validated(self):
        with pytest.raises(DataError):
            RunConfig(embed_dim=63)

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"seed": 4, "grid_rows": 2, "grid_cols": 2}))
        cfg = load_run_config(path, {"seed": 9})
        assert cfg.seed == 9 and cfg.grid_rows == 2

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"bogus": 1}))
        with pytest.raises(DataError, match="unknown config key"):
            load_run_config(path)

    def test_env_var_names_default_file(self, tmp_path, monkeypatch):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"subset_cap": 10}))
        monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
        assert load_run_config().subset_cap == 10

    def test_explicit_path_beats_env_var(self, tmp_path, monkeypatch):
        env_cfg = tmp_path / "env.json"
        env_cfg.write_text(json.dumps({"subset_cap": 10}))
        file_cfg = tmp_path / "file.json"
        file_cfg.write_text(json.dumps({"subset_cap": 20}))
        monkeypatch.setenv(CONFIG_ENV_VAR, str(env_cfg))
        assert load_run_config(file_cfg).subset_cap == 20

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(DataError, match="invalid JSON"):
            load_run_config(path)
