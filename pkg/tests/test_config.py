import pytest

from mfpose.config import RunConfig, apply_overrides, build, load_config, parse_override
from mfpose.errors import ConfigError


def test_defaults_roundtrip(tmp_path):
    cfg = load_config()
    assert cfg == RunConfig()
    path = tmp_path / "c.yaml"
    path.write_text(cfg.dumps())
    assert load_config(path) == cfg


def test_yaml_exponent_floats(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("train:\n  lr: 5e-6\n  lr_step: 5\n  lr_gamma: 0.5\n")
    cfg = load_config(path)
    assert cfg.train.lr == 5e-6 and isinstance(cfg.train.lr, float)


def test_json_documents(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{"data": {"spec": {"num_videos": 7}}}')
    assert load_config(path).data.spec.num_videos == 7


def test_unknown_key_named_with_path(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("train:\n  model:\n    backbone:\n      depht: 3\n")
    with pytest.raises(ConfigError, match="train.model.backbone.depht"):
        load_config(path)


def test_wrong_type_named(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("train:\n  batch_size: many\n")
    with pytest.raises(ConfigError, match="train.batch_size"):
        load_config(path)


def test_invalid_value_reports_section():
    with pytest.raises(ConfigError, match="train"):
        load_config(overrides=["train.precision=float16"])


def test_overrides_last_wins():
    cfg = load_config(overrides=["train.epochs=3", "train.epochs=4", "data.spec.occlusion_prob=0.5",
                                 "train.model.use_afw=false"])
    assert cfg.train.epochs == 4 and cfg.data.spec.occlusion_prob == 0.5 and not cfg.train.model.use_afw


def test_override_syntax_errors():
    with pytest.raises(ConfigError):
        parse_override("train.epochs")
    with pytest.raises(ConfigError):
        parse_override("=3")
    with pytest.raises(ConfigError):
        apply_overrides({"train": 3}, ["train.epochs=2"])


def test_unsupported_schema_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="schema"):
        load_config(overrides=["schema=2"])
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.yaml")


def test_build_rejects_non_mapping():
    with pytest.raises(ConfigError):
        build(RunConfig, [1, 2])


def test_eval_spec_uses_eval_count():
    cfg = load_config(overrides=["data.eval_videos=5"])
    assert cfg.data.eval_spec().num_videos == 5
    assert cfg.data.eval_spec().frames_per_video == cfg.data.spec.frames_per_video
