import json

import pytest

from src.errors import SchemaError
from src.runner import DEFAULT_CONFIG, PipelineConfig, build_config, field_kinds, load_json_layer, validate_config


def write_yaml(path, text: str):
    path.write_text(text, encoding="utf-8")
    return path


class TestBuildConfig:
    def test_defaults_when_default_file_missing(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert build_config(DEFAULT_CONFIG) == PipelineConfig()

    def test_explicit_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            build_config(tmp_path / "nope.yaml")

    def test_empty_file(self, tmp_path):
        assert build_config(write_yaml(tmp_path / "c.yaml", "")) == PipelineConfig()

    def test_precedence(self, tmp_path):
        path = write_yaml(tmp_path / "c.yaml", "tau_occ: 0.3\nbeta: 0.5\nmax_iters: 7\n")
        config = build_config(path, overrides={"tau_occ": 0.7}, layers=[{"beta": 0.0}])
        assert config.tau_occ == 0.7
        assert config.beta == 0.0
        assert config.max_iters == 7
        assert config.gamma == PipelineConfig().gamma

    def test_path_overrides_merge(self, tmp_path):
        path = write_yaml(tmp_path / "c.yaml", "paths:\n  gt: a.occ\n  map: a.map\n")
        config = build_config(path, overrides={"paths": {"map": "b.map"}})
        assert config.paths == {"gt": "a.occ", "map": "b.map"}

    def test_env_placeholders(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OCC_DATA", "/data/scene0")
        monkeypatch.delenv("OCC_UNSET", raising=False)
        path = write_yaml(tmp_path / "c.yaml", "paths:\n  gt: ${OCC_DATA}/gt.occ\n  out: ${OCC_UNSET}/x\n")
        config = build_config(path)
        assert config.paths["gt"] == "/data/scene0/gt.occ"
        assert config.paths["out"] == "${OCC_UNSET}/x"

    def test_top_level_must_be_mapping(self, tmp_path):
        with pytest.raises(SchemaError) as exc:
            build_config(write_yaml(tmp_path / "c.yaml", "- 1\n- 2\n"))
        assert exc.value.field == "config"


class TestValidateConfig:
    def test_unknown_key_named(self):
        with pytest.raises(SchemaError) as exc:
            validate_config({"gama": 3.0})
        assert exc.value.field == "gama"

    @pytest.mark.parametrize(
        "key, value",
        [("tau_occ", 1.5), ("o_init", -0.1), ("voxel_size", 0.0), ("pixel_stride", 0), ("beta", -1.0), ("threads", 0)],
    )
    def test_out_of_domain(self, key, value):
        with pytest.raises(SchemaError) as exc:
            validate_config({key: value})
        assert exc.value.field == key

    def test_integer_fields(self):
        assert validate_config({"pixel_stride": 2.0}).pixel_stride == 2
        with pytest.raises(SchemaError):
            validate_config({"pixel_stride": 2.5})

    def test_type_errors(self):
        with pytest.raises(SchemaError):
            validate_config({"gamma": "big"})
        with pytest.raises(SchemaError):
            validate_config({"gamma": True})
        with pytest.raises(SchemaError):
            validate_config({"dilate": 1})

    def test_ints_become_floats(self):
        config = validate_config({"gamma": 2})
        assert isinstance(config.gamma, float)

    def test_optimizer_view(self):
        opt = validate_config({"beta": 0.25, "max_iters": 0, "optimize_means": True, "lr_mean": 0.01}).optimizer()
        assert opt.beta == 0.25
        assert opt.max_iters == 0
        assert opt.optimize_means
        assert opt.lr_mean == 0.01

    def test_init_mode_choices(self):
        assert PipelineConfig().init_mode == "ray_aligned"
        assert validate_config({"init_mode": "isotropic"}).init_mode == "isotropic"
        with pytest.raises(SchemaError) as exc:
            validate_config({"init_mode": "spherical"})
        assert exc.value.field == "init_mode"
        with pytest.raises(SchemaError):
            validate_config({"init_mode": 1})

    def test_field_kinds_skip_paths(self):
        kinds = field_kinds()
        assert "paths" not in kinds
        assert kinds["dilate"] is bool
        assert kinds["pixel_stride"] is int
        assert kinds["gamma"] is float
        assert kinds["init_mode"] is str
        assert kinds["optimize_means"] is bool


class TestJsonLayer:
    def test_object(self, tmp_path):
        path = tmp_path / "opt.json"
        path.write_text(json.dumps({"beta": 0.0}))
        assert load_json_layer(path) == {"beta": 0.0}

    def test_not_an_object(self, tmp_path):
        path = tmp_path / "opt.json"
        path.write_text("[1, 2]")
        with pytest.raises(SchemaError):
            load_json_layer(path)
