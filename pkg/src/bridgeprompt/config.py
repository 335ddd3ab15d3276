"""Run configuration and its flat ``key = value`` file format.

One setting per line, ``#`` starts a comment, dotted keys select the
section (``sampler.window_len = 16``). Sampling schedules are repeatable
``sampler.schedule = d:s`` lines. Unknown keys are errors.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .contrastive import LossWeights
from .dataset_io import SynthConfig
from .encoders import ModelConfig
from .exceptions import ParseError, ValidationError
from .sampler import SampleConfig
from .trainer import TrainConfig

DECODE_MODES = ("ordinal", "uniform")
VOTING_MODES = ("average", "vote")


@dataclass
class DataConfig:
    """Dataset location and split names.

    ``exclude`` lists action names whose runs are not counted as steps;
    ``held_out`` is the number of trailing synthetic videos that the
    ``synth`` command writes to the test split.
    """

    root: str = ""
    train_split: str = "train"
    test_split: str = "test"
    fps: float = 15.0
    exclude: Tuple[str, ...] = ()
    held_out: int = 0


@dataclass
class PromptConfig:
    variants: str = ""
    activity_template: str = "the person is making {activity}"
    voting: str = "average"


@dataclass
class InferConfig:
    decode_mode: str = "ordinal"
    activity_segments: int = 64
    activity_seg_len: int = 8


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    prompts: PromptConfig = field(default_factory=PromptConfig)
    sampler: SampleConfig = field(default_factory=SampleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    out: str = "out"

    @property
    def loss(self) -> LossWeights:
        return self.train.loss

    def set_seed(self, seed: int):
        self.train.seed = self.model.seed = self.synth.seed = int(seed)

    def validate(self, check_paths: bool = True):
        # the model config is checked once the tokenizer fixes vocab_size
        for part in (self.sampler, self.train, self.synth):
            part.validate()
        if self.prompts.voting not in VOTING_MODES:
            raise ValidationError(f"prompts.voting must be one of {VOTING_MODES}")
        if self.infer.decode_mode not in DECODE_MODES:
            raise ValidationError(f"infer.decode_mode must be one of {DECODE_MODES}")
        if self.data.held_out < 0:
            raise ValidationError("data.held_out must be >= 0")
        if check_paths:
            root = Path(self.data.root)
            if not self.data.root or not root.is_dir():
                raise ValidationError(f"data.root {self.data.root!r} is not a directory")
            if not (root / "mapping.txt").is_file():
                raise ValidationError(f"missing mapping file {root / 'mapping.txt'}")
            if self.prompts.variants and not Path(self.prompts.variants).is_file():
                raise ValidationError(f"missing variant table {self.prompts.variants}")


# Keys derived at run time rather than configured.
_SKIP = {"model.vocab_size", "model.window_len", "sampler.schedules", "sampler.exclude", "synth.templates",
         "train.loss"}
_OPTIONAL_INT = {"train.max_steps"}


def _sections(cfg: RunConfig):
    return [("data", cfg.data), ("prompts", cfg.prompts), ("sampler", cfg.sampler), ("model", cfg.model),
            ("train", cfg.train), ("loss", cfg.train.loss), ("infer", cfg.infer), ("synth", cfg.synth)]


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_format(v) for v in value)
    return str(value)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _convert(key: str, text: str, default):
    if key in _OPTIONAL_INT:
        return None if text.lower() == "none" else int(text)
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    if isinstance(default, tuple):
        items = [t.strip() for t in text.split(",") if t.strip()]
        if default and isinstance(default[0], (int, float)):
            kind = type(default[0])
            return tuple(kind(t) for t in items)
        return tuple(items)
    return text


def _parse_schedule(text: str) -> Tuple[int, float]:
    d, sep, s = text.partition(":")
    if not sep:
        raise ValueError(f"schedule must look like 'd:s', got {text!r}")
    return int(d), float(s)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cfg = RunConfig()
    sections = dict(_sections(cfg))
    schedules: List[Tuple[int, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError("expected 'key = value'", source, lineno)
        try:
            if key == "out":
                cfg.out = value
                continue
            if key == "sampler.schedule":
                schedules.append(_parse_schedule(value))
                continue
            section, _, name = key.partition(".")
            obj = sections.get(section)
            if obj is None or key in _SKIP or name not in {f.name for f in dataclasses.fields(obj)}:
                raise ParseError(f"unknown key {key!r}", source, lineno)
            setattr(obj, name, _convert(key, value, getattr(obj, name)))
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad value for {key}: {exc}", source, lineno) from exc
    if schedules:
        cfg.sampler.schedules = schedules
    try:
        cfg.sampler = SampleConfig(cfg.sampler.window_len, cfg.sampler.schedules, cfg.sampler.pad_policy,
                                   cfg.sampler.max_steps)
        cfg.train.loss = LossWeights(**dataclasses.asdict(cfg.train.loss))
    except ValueError as exc:
        raise ParseError(str(exc), source) from exc
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    lines = [f"out = {cfg.out}"]
    for section, obj in _sections(cfg):
        lines.append("")
        for f in dataclasses.fields(obj):
            key = f"{section}.{f.name}"
            if key in _SKIP:
                if key == "sampler.schedules":
                    lines += [f"sampler.schedule = {d}:{_format(s)}" for d, s in cfg.sampler.schedules]
                continue
            lines.append(f"{key} = {_format(getattr(obj, f.name))}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def write_config(path, cfg: RunConfig):
    Path(path).write_text(serialize_config(cfg), encoding="utf-8")


def config_dict(cfg: RunConfig) -> Dict[str, str]:
    """Flat ``key -> value text`` view, handy for logging and checkpoints."""
    out = {}
    for line in serialize_config(cfg).splitlines():
        if line:
            k, _, v = line.partition(" = ")
            out.setdefault(k, v)
    return out
