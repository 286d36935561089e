import numpy as np
import pytest

from flowforge.camera import FOVY_KITTI, FOVY_SINTEL
from flowforge.config import (
    DEFAULT_DROPOUT,
    DEFAULT_N_SAMPLES,
    DEFAULT_RESOLUTION,
    DEFAULT_TRANSLATION_RANGE,
    SEED_ENV,
    SynthConfig,
    load_config,
    parse_config_text,
)
from flowforge.errors import ConfigError
from flowforge.filtering import DEFAULT_THRESHOLD, SWEEP_THRESHOLDS
from flowforge.grid import DEFAULT_MAX_DEPTH, Indexing
from flowforge.synthesis import draw_translation


def ready(tmp_path, **kw):
    (tmp_path / "f").mkdir(exist_ok=True)
    (tmp_path / "d").mkdir(exist_ok=True)
    return SynthConfig(frames=str(tmp_path / "f"), depth=str(tmp_path / "d"), out=str(tmp_path / "o"), **kw)


class TestProtocolConstants:
    """Defaults pinned to the published protocol values."""

    def test_sample_count(self):
        assert DEFAULT_N_SAMPLES == 5000
        assert SynthConfig().n_samples == 5000

    def test_translation_range(self):
        assert DEFAULT_TRANSLATION_RANGE == (0.8, 1.2)
        cfg = SynthConfig()
        assert (cfg.translation_min, cfg.translation_max) == (0.8, 1.2)
        assert cfg.axis == (1.0, 0.0, 0.0)
        assert cfg.allow_negative

    def test_field_of_view(self):
        assert FOVY_KITTI == 29.2
        assert FOVY_SINTEL == 26.5
        assert SynthConfig().fovy == 29.2

    def test_max_depth(self):
        assert DEFAULT_MAX_DEPTH == 80.0
        assert SynthConfig().max_depth == 80.0

    def test_threshold(self):
        assert DEFAULT_THRESHOLD == 30
        assert SynthConfig().z_threshold == 30
        assert 30 in SWEEP_THRESHOLDS

    def test_dropout(self):
        assert DEFAULT_DROPOUT == 0.10
        assert SynthConfig().dropout_rate == 0.10

    def test_other_defaults(self):
        cfg = SynthConfig()
        assert cfg.indexing == Indexing.SOURCE
        assert cfg.resolution == DEFAULT_RESOLUTION == 512
        assert cfg.workers == 1 and cfg.seed == 0

    def test_drawn_translations_respect_range(self):
        motion = SynthConfig(seed=9).motion
        draws = np.array([draw_translation(motion, i)[0] for i in range(400)])
        assert np.all((np.abs(draws) >= 0.8) & (np.abs(draws) <= 1.2))
        assert (draws > 0).any() and (draws < 0).any()


class TestParsing:
    def test_key_value_text(self):
        values = parse_config_text(
            "# comment\n"
            "n_samples = 12\n"
            "fovy=26.5  # sintel\n"
            "indexing=target\n"
            "export-npy=yes\n"
            "axis=y\n"
            "seed=0x10\n"
        )
        assert values == {
            "n_samples": 12,
            "fovy": 26.5,
            "indexing": Indexing.TARGET,
            "export_npy": True,
            "axis": (0.0, 1.0, 0.0),
            "seed": 16,
        }

    def test_axis_components(self):
        assert parse_config_text("axis=0,0,1")["axis"] == (0.0, 0.0, 1.0)

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError) as info:
            parse_config_text("bogus=1")
        assert info.value.key == "bogus"
        assert "bogus" in str(info.value)

    def test_bad_value_named(self):
        with pytest.raises(ConfigError) as info:
            parse_config_text("n_samples=many")
        assert info.value.key == "n_samples"

    def test_missing_equals(self):
        with pytest.raises(ConfigError) as info:
            parse_config_text("n_samples 5")
        assert "line 1" in info.value.key

    def test_text_round_trip(self, tmp_path):
        cfg = ready(tmp_path, n_samples=7, fovy=26.5, indexing=Indexing.TARGET, axis=(0.0, 0.0, 1.0), export_kitti=True)
        path = tmp_path / "c.txt"
        path.write_text(cfg.to_text())
        assert load_config(path, environ={}) == cfg


class TestLoading:
    def test_overrides_win(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("n_samples=10\nseed=3\n")
        cfg = load_config(path, {"n_samples": 4, "seed": None}, environ={})
        assert cfg.n_samples == 4 and cfg.seed == 3

    def test_env_seed_fallback(self):
        assert load_config(environ={SEED_ENV: "77"}).seed == 77
        assert load_config(overrides={"seed": 5}, environ={SEED_ENV: "77"}).seed == 5
        assert load_config(environ={}).seed == 0

    def test_bad_env_seed(self):
        with pytest.raises(ConfigError) as info:
            load_config(environ={SEED_ENV: "abc"})
        assert info.value.key == "seed"

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.txt", environ={})


class TestValidation:
    def test_valid(self, tmp_path):
        assert ready(tmp_path).validate()

    @pytest.mark.parametrize(
        "key,value",
        [
            ("n_samples", 0),
            ("resolution", 1),
            ("fovy", 180.0),
            ("max_depth", 0.0),
            ("translation_min", -0.1),
            ("translation_max", 0.5),
            ("z_threshold", -1.0),
            ("dropout_rate", 1.5),
            ("workers", 0),
            ("seed", -1),
            ("axis", (1.0, 1.0, 0.0)),
        ],
    )
    def test_error_names_key(self, tmp_path, key, value):
        with pytest.raises(ConfigError) as info:
            ready(tmp_path, **{key: value}).validate()
        assert info.value.key == key

    def test_output_must_differ(self, tmp_path):
        cfg = ready(tmp_path)
        cfg.out = cfg.frames
        with pytest.raises(ConfigError) as info:
            cfg.validate()
        assert info.value.key == "out"

    def test_required_directories(self):
        with pytest.raises(ConfigError) as info:
            SynthConfig().validate()
        assert info.value.key == "frames"
