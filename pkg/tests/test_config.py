"""Config file parsing and pipeline configuration tests."""

import pytest

from radarp2t.config import MethodSpec, PipelineConfig, load_config, parse_method
from radarp2t.errors import ConfigError


class TestParseMethod:
    def test_percentile(self):
        m = parse_method("percentile:5")
        assert m == MethodSpec("percentile", 5.0)
        assert m.tag == "percentile5"

    def test_cfar(self):
        assert parse_method(" cfar:2.5 ") == MethodSpec("cfar", 2.5)

    def test_bad_shape(self):
        with pytest.raises(ConfigError, match="percentile:P"):
            parse_method("percentile")

    def test_unknown_kind(self):
        with pytest.raises(ConfigError, match="unknown method"):
            parse_method("otsu:3")

    def test_out_of_range_hyper(self):
        with pytest.raises(ConfigError):
            parse_method("percentile:0")


class TestLoadConfig:
    def test_defaults_without_file(self):
        cfg = load_config(None)
        assert cfg.grid.shape == (192, 80, 32)
        assert cfg.train.learning_rate == 0.001
        assert cfg.train.batch_size == 8
        assert cfg.train.epochs == 20
        assert cfg.weights.lambda_l1 == 100.0
        assert cfg.gen.encoder_channels == (16, 32, 64, 128)

    def test_file_values_applied(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# toy run\n"
            "radar.samples_per_chirp = 32\n"
            "radar.chirps_per_frame = 8\n"
            "grid.voxel_size = 0.8\n"
            "methods = percentile:5, cfar:2.5\n"
            "model.encoder_channels = 4, 8\n"
            "train.epochs = 3\n"
            "seed = 11\n"
        )
        cfg = load_config(path)
        assert cfg.radar.samples_per_chirp == 32
        assert cfg.grid.voxel_size == 0.8
        assert [m.tag for m in cfg.methods] == ["percentile5", "cfar2.5"]
        assert cfg.gen.encoder_channels == (4, 8)
        assert cfg.train.epochs == 3
        assert cfg.seed == 11

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed = 11\n")
        cfg = load_config(path, {"seed": "99", "grid.voxel_size": "1.6"})
        assert cfg.seed == 99
        assert cfg.grid.voxel_size == 1.6

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("radar.bandwidth = 4e9\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(path)

    def test_bad_value_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("train.epochs = soon\n")
        with pytest.raises(ConfigError, match="train.epochs"):
            load_config(path)

    def test_invariant_violations_become_config_errors(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("radar.samples_per_chirp = 48\n")
        with pytest.raises(ConfigError, match="power-of-two"):
            load_config(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("seed 11\n")
        with pytest.raises(ConfigError, match="run.cfg:1"):
            load_config(path)

    def test_empty_methods_rejected(self):
        with pytest.raises(ValueError, match="methods"):
            PipelineConfig(methods=[])
