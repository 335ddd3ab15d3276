"""Pre-training loop: cut batching, AdamW with warm-up plus cosine decay,
checkpoints at epoch ends and exact resumption."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .contrastive import LossReport, LossWeights, pair_loss, total_loss
from .encoders import BridgePromptModel, ModelConfig, Tokenizer
from .exceptions import TrainingDiverged, ValidationError
from .inference import DEFAULT_ACTIVITY_TEMPLATE, video_feature
from .prompts import (VariantTable, build_prompt_bundle, make_activity_prompt,
                      make_integrated_prompts, make_ordinal_prompt, make_semantic_prompts,
                      make_statistical_prompt)
from .sampler import SampleConfig, make_cuts

log = logging.getLogger(__name__)

COUNT_POOLS = ("cut", "all")


@dataclass
class TrainConfig:
    """Optimisation settings.

    ``count_pool`` selects which fusion passes feed the pooled count
    feature of the statistical term: the cut's own ``K`` passes
    (``"cut"``) or all ``max_steps`` passes (``"all"``, matching
    inference). ``activity_weight > 0`` adds a video-level contrastive
    term between uniformly sampled segment features and activity prompts.
    """

    batch_size: int = 12
    epochs: int = 10
    base_lr: float = 1e-3
    weight_decay: float = 0.2
    warmup_frac: float = 0.1
    seed: int = 0
    loss: LossWeights = field(default_factory=LossWeights)
    max_steps: Optional[int] = None
    count_pool: str = "all"
    activity_weight: float = 0.0
    activity_batch: int = 6
    activity_segments: int = 16
    activity_seg_len: int = 8
    activity_template: str = DEFAULT_ACTIVITY_TEMPLATE
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8

    def validate(self):
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2")
        if not 0 <= self.warmup_frac < 1:
            raise ValidationError("warmup_frac must lie in [0, 1)")
        if self.base_lr < 0:
            raise ValidationError("base_lr must be >= 0")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.count_pool not in COUNT_POOLS:
            raise ValidationError(f"count_pool must be one of {COUNT_POOLS}")
        if self.activity_weight < 0:
            raise ValidationError("activity_weight must be >= 0")


def lr_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warm-up to ``base_lr`` then cosine decay to zero at ``total_steps``."""
    if total_steps <= 0:
        return 0.0
    warm = cfg.warmup_frac * total_steps
    if step < warm:
        return cfg.base_lr * step / warm
    progress = min(1.0, (step - warm) / (total_steps - warm))
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


def prompt_corpus(vocab, table: VariantTable, k_max: int, activities=(), activity_template=DEFAULT_ACTIVITY_TEMPLATE):
    """Every string the trainer or the prompt bank can render, for building the tokenizer."""
    texts = []
    for i in range(1, k_max + 1):
        texts.append(make_statistical_prompt(i))
        texts.append(make_ordinal_prompt(i))
        for vp in vocab.names:
            texts += make_semantic_prompts(i, vp, table)
    texts += make_integrated_prompts(vocab.names[:1] * k_max, table)
    texts += vocab.names
    texts += [make_activity_prompt(a, activity_template) for a in activities]
    return texts


def build_model(vocab, table, sample_cfg: SampleConfig, model_cfg: ModelConfig, activities=(),
                activity_template=DEFAULT_ACTIVITY_TEMPLATE) -> BridgePromptModel:
    tok = Tokenizer.from_corpus(prompt_corpus(vocab, table, sample_cfg.max_steps, activities, activity_template),
                                model_cfg.max_text_len)
    model_cfg.vocab_size = len(tok)
    model_cfg.window_len = sample_cfg.window_len
    return BridgePromptModel(model_cfg, tok)


def make_optimizer(model, cfg: TrainConfig):
    return torch.optim.AdamW(model.parameters(), lr=cfg.base_lr, betas=tuple(cfg.betas), eps=cfg.eps,
                             weight_decay=cfg.weight_decay)


@dataclass
class TrainResult:
    model: BridgePromptModel
    history: List[str]
    reports: list
    step: int
    checkpoint: Optional[Path] = None


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    return [b for b in out if len(b) >= 2]


def train(videos, vocab, sample_cfg: SampleConfig, model_cfg: ModelConfig, train_cfg: TrainConfig,
          table: Optional[VariantTable] = None, model: Optional[BridgePromptModel] = None,
          checkpoint_dir=None, resume_from=None, on_step: Optional[Callable] = None,
          stop_after_epoch: Optional[int] = None) -> TrainResult:
    """Pre-train a model on the planned cuts of ``videos``.

    With ``checkpoint_dir`` a checkpoint ``epoch_<n>.brpc`` (and
    ``last.brpc``) is written after each epoch. ``resume_from`` continues
    from such a checkpoint; the continuation reproduces the uninterrupted
    run. Raises :class:`TrainingDiverged` on a non-finite loss.
    """
    train_cfg.validate()
    table = table or VariantTable()
    if not videos:
        raise ValidationError("training needs at least one video")
    activities = sorted({v.activity_label for v in videos if v.activity_label})
    if train_cfg.activity_weight > 0 and not activities:
        raise ValidationError("activity_weight > 0 needs videos with activity labels")

    history: List[str] = []
    start_epoch, step = 0, 0
    ckpt = None
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        model = ckpt.model
        st = ckpt.train_state or {}
        start_epoch, step = st.get("epoch", 0), st.get("step", 0)
        history = list(st.get("history", []))
    elif model is None:
        model = build_model(vocab, table, sample_cfg, model_cfg, activities, train_cfg.activity_template)
    model.train()
    optimizer = make_optimizer(model, train_cfg)
    if ckpt is not None:
        ckpt.restore_optimizer(optimizer)

    cuts = make_cuts(videos, sample_cfg)
    bundles = [build_prompt_bundle(c, vocab, table) for c in cuts]
    if len(cuts) < 2:
        raise ValidationError("need at least two cuts to form a contrastive batch")
    k_max = sample_cfg.max_steps
    steps_per_epoch = len(_batches(len(cuts), train_cfg.batch_size, np.random.default_rng(0)))
    total_steps = train_cfg.epochs * steps_per_epoch
    if train_cfg.max_steps is not None:
        total_steps = min(total_steps, train_cfg.max_steps)
    dtype = model.dtype
    reports = []
    last_path = None
    checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
    if checkpoint_dir:
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    for epoch in range(start_epoch, train_cfg.epochs):
        if step >= total_steps:
            break
        rng = np.random.default_rng([train_cfg.seed, epoch])
        for batch in _batches(len(cuts), train_cfg.batch_size, rng):
            if step >= total_steps:
                break
            report = batch_loss(model, [cuts[i] for i in batch], [bundles[i] for i in batch], videos,
                                activities, train_cfg, k_max, dtype, rng)
            total = report.tensor
            if not math.isfinite(report.total):
                raise TrainingDiverged(
                    f"non-finite loss at step {step}: {report.format_line(step)}", step=step,
                    terms={"sem": report.sem_terms, "integ": report.integ, "stat": report.stat,
                           "act": report.act, "total": report.total})
            if total.requires_grad:
                optimizer.zero_grad(set_to_none=True)
                total.backward()
                lr = lr_at(step + 1, total_steps, train_cfg)
                for g in optimizer.param_groups:
                    g["lr"] = lr
                optimizer.step()
            line = report.format_line(step)
            history.append(line)
            reports.append(report)
            log.debug(line)
            if on_step is not None:
                on_step(step, report)
            step += 1
        if checkpoint_dir:
            state = {"epoch": epoch + 1, "step": step, "history": history, "seed": train_cfg.seed}
            last_path = checkpoint_dir / f"epoch_{epoch + 1}.brpc"
            save_checkpoint(last_path, model, optimizer, state)
            save_checkpoint(checkpoint_dir / "last.brpc", model, optimizer, state)
        if stop_after_epoch is not None and epoch + 1 >= stop_after_epoch:
            break
    model.eval()
    return TrainResult(model, history, reports, step, last_path)


def batch_loss(model, cuts, bundles, videos, activities, cfg: TrainConfig, k_max, dtype, rng) -> LossReport:
    """Loss report for one batch; ``report.tensor`` carries the graph."""
    ord_feats = model.ordinal_features(k_max)
    feats = torch.as_tensor(np.stack([c.features for c in cuts]), dtype=dtype)
    passes = [b.K for b in bundles]
    count_passes = passes if cfg.count_pool == "cut" else [k_max] * len(cuts)
    if cfg.loss.any_enabled:
        clips = model.encode_cuts(feats, passes, ord_feats, count_passes)
        report = total_loss(clips, bundles, model.encode_texts, model.logit_scale(), cfg.loss)
    else:
        report = LossReport([], 0.0, 0.0, 0.0, tensor=torch.zeros((), dtype=dtype))
    if cfg.activity_weight > 0:
        n = min(cfg.activity_batch, len(videos))
        pick = rng.choice(len(videos), size=n, replace=False)
        vids = [videos[i] for i in pick]
        Zx = torch.stack([video_feature(model, v.features, ord_feats[0], cfg.activity_segments,
                                        cfg.activity_seg_len) for v in vids])
        Zy = model.encode_texts([make_activity_prompt(v.activity_label, cfg.activity_template) for v in vids])
        act = pair_loss(Zx, Zy, [v.activity_label for v in vids], model.logit_scale())
        report.act = float(act.detach())
        report.tensor = report.tensor + cfg.activity_weight * act
        report.total = float(report.tensor.detach())
    return report
