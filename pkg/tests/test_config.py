import pytest

from mganet.config import (
    ConfigError,
    ConvBlockVariant,
    ModelConfig,
    Order,
    build_run_config,
    load_run_config,
    parse_overrides,
)


def test_defaults_are_the_full_model():
    cfg = build_run_config({})
    assert cfg.model.channels == (16, 32, 64, 128, 144, 144)
    assert cfg.model.mga.d == 144 and cfg.model.n_mga == 4
    assert cfg.training.ema_alpha == 0.999 and cfg.eval.median_window == 7


def test_file_overrides_and_comments(tmp_path):
    p = tmp_path / "run.txt"
    p.write_text(
        "# a comment\n"
        "training.lr = 0.002   # trailing\n"
        "model.variant = ra\n"
        "mga.order = fine_coarse\n"
        "mga.local_stage = false\n"
        "eval.threshold = 0.4\n"
    )
    cfg = load_run_config(p)
    assert cfg.training.lr == 0.002
    assert cfg.model.variant is ConvBlockVariant.RA_CONV
    assert cfg.model.mga.order is Order.FINE_COARSE and cfg.model.mga.local_stage is False
    assert cfg.eval.threshold == 0.4


def test_flags_override_the_file(tmp_path):
    p = tmp_path / "run.txt"
    p.write_text("training.lr = 0.002\n")
    assert load_run_config(p, extra=["training.lr=0.005"]).training.lr == 0.005


def test_tiny_preset_and_tuple_values():
    lines = ["model.channels = 4,16", "model.pools = 2x8,2x8", "model.n_classes = 3"]
    cfg = build_run_config(parse_overrides(lines), preset="tiny")
    assert cfg.model.channels == (4, 16) and cfg.model.preset == "tiny"
    assert cfg.model.pools == ((2, 8), (2, 8))


@pytest.mark.parametrize(
    "line",
    ["training.nope = 1", "bogus.lr = 1", "mga.d = wide", "model.spatial_shift = maybe", "paths.nowhere = x"],
)
def test_bad_keys_and_values_are_rejected(line):
    with pytest.raises(ConfigError):
        build_run_config(parse_overrides([line]))


def test_malformed_line_names_its_source():
    with pytest.raises(ConfigError, match="run.txt:2"):
        parse_overrides(["training.lr = 1", "just words"], "run.txt")


def test_inconsistent_model_is_rejected():
    with pytest.raises(ConfigError, match="attention width"):
        ModelConfig.tiny(channels=(8, 12), pools=((2, 8), (2, 8)))
    with pytest.raises(ConfigError, match="pooling"):
        ModelConfig.tiny(n_frames=495)
    with pytest.raises(ConfigError):
        build_run_config(parse_overrides(["eval.median_window = 4"]))


def test_echo_lines_round_trip():
    cfg = build_run_config(parse_overrides(["training.lr = 0.01", "mga.order = fine_coarse"]), preset="tiny")
    again = build_run_config(parse_overrides(cfg.lines()), preset="tiny")
    assert again.lines() == cfg.lines()
    assert "mga.order = fine_coarse" in cfg.lines()
