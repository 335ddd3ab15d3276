import pytest

from bridgeprompt.config import RunConfig, load_config, parse_config, serialize_config, write_config
from bridgeprompt.exceptions import ParseError, ValidationError


def test_defaults_round_trip():
    cfg = RunConfig()
    assert parse_config(serialize_config(cfg)) == cfg


def test_parse_keys_comments_and_schedules():
    text = """
    # comment line
    out = runs/a
    sampler.window_len = 8   # trailing comment
    sampler.schedule = 1:2
    sampler.schedule = 2:1
    sampler.schedule = 4:0.5
    model.embed_dim = 64
    train.max_steps = 100
    train.betas = 0.9,0.98
    loss.enable_stat = false
    loss.lambda1 = 0.5
    data.exclude = background,SIL
    synth.actions_per_activity = 2,5
    """
    cfg = parse_config(text)
    assert cfg.out == "runs/a"
    assert cfg.sampler.window_len == 8
    assert cfg.sampler.schedules == [(1, 2.0), (2, 1.0), (4, 0.5)]
    assert cfg.model.embed_dim == 64
    assert cfg.train.max_steps == 100 and cfg.train.betas == (0.9, 0.98)
    assert cfg.loss.enable_stat is False and cfg.loss.lambda1 == 0.5
    assert cfg.data.exclude == ("background", "SIL")
    assert cfg.synth.actions_per_activity == (2, 5)
    assert parse_config(serialize_config(cfg)) == cfg


def test_float_values_round_trip_exactly():
    cfg = RunConfig()
    cfg.train.base_lr = 0.1 + 0.2
    cfg.sampler.schedules = [(1, 1 / 3)]
    again = parse_config(serialize_config(cfg))
    assert again.train.base_lr == cfg.train.base_lr and again.sampler.schedules == cfg.sampler.schedules


@pytest.mark.parametrize("text", ["model.nope = 1", "nosuch.key = 1", "just words", "sampler.schedule = 2",
                                  "train.epochs = many", "loss.enable_sem = maybe", "model.vocab_size = 9",
                                  "sampler.window_len = 1"])
def test_bad_lines(text):
    with pytest.raises(ParseError):
        parse_config(text)


def test_error_names_line():
    with pytest.raises(ParseError) as info:
        parse_config("out = x\nmodel.nope = 1\n", "run.cfg")
    assert info.value.line == 2 and "run.cfg" in str(info.value)


def test_validation_checks_paths(tmp_path):
    cfg = RunConfig()
    cfg.data.root = str(tmp_path)
    with pytest.raises(ValidationError):
        cfg.validate()
    (tmp_path / "mapping.txt").write_text("0 a\n")
    cfg.validate()
    cfg.prompts.variants = str(tmp_path / "missing.txt")
    with pytest.raises(ValidationError):
        cfg.validate()
    cfg.validate(check_paths=False)


def test_file_round_trip(tmp_path):
    cfg = RunConfig()
    cfg.set_seed(7)
    write_config(tmp_path / "c.txt", cfg)
    again = load_config(tmp_path / "c.txt")
    assert again == cfg and again.model.seed == again.train.seed == again.synth.seed == 7
    with pytest.raises(ValidationError):
        load_config(tmp_path / "missing.txt")
