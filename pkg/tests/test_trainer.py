import math

import numpy as np
import pytest
import torch

from bridgeprompt.contrastive import LossWeights
from bridgeprompt.exceptions import TrainingDiverged, ValidationError
from bridgeprompt.prompts import VariantTable, build_prompt_bundle
from bridgeprompt.sampler import make_cuts
from bridgeprompt.trainer import TrainConfig, batch_loss, build_model, lr_at, make_optimizer, train

from small import small_setup


def _params(model):
    return {n: p.detach().clone() for n, p in model.named_parameters()}


def test_lr_schedule_endpoints():
    cfg = TrainConfig(base_lr=1.0, warmup_frac=0.1)
    assert lr_at(0, 100, cfg) == 0.0
    assert lr_at(5, 100, cfg) == pytest.approx(0.5)
    assert lr_at(10, 100, cfg) == pytest.approx(1.0)
    assert lr_at(55, 100, cfg) == pytest.approx(0.5)
    assert lr_at(100, 100, cfg) == pytest.approx(0.0, abs=1e-15)
    assert lr_at(0, 10, TrainConfig(base_lr=1.0, warmup_frac=0.0)) == 1.0
    vals = [lr_at(s, 100, cfg) for s in range(10, 101)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_train_config_validation():
    for bad in (dict(batch_size=1), dict(warmup_frac=1.0), dict(base_lr=-1), dict(count_pool="x")):
        with pytest.raises(ValidationError):
            TrainConfig(**bad).validate()


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        vocab, videos, samp, mcfg, tcfg = small_setup(seed=5)
        runs.append(train(videos, vocab, samp, mcfg, tcfg))
    assert runs[0].history == runs[1].history
    for (n, p), (_, q) in zip(runs[0].model.named_parameters(), runs[1].model.named_parameters()):
        assert torch.equal(p, q), n


def test_zero_lr_leaves_parameters_unchanged():
    vocab, videos, samp, mcfg, tcfg = small_setup(base_lr=0.0, epochs=1)
    model = build_model(vocab, VariantTable(), samp, mcfg)
    before = _params(model)
    train(videos, vocab, samp, mcfg, tcfg, model=model)
    for n, p in model.named_parameters():
        assert torch.equal(before[n], p), n


def test_all_losses_disabled_is_a_no_op():
    off = LossWeights(enable_sem=False, enable_integ=False, enable_stat=False)
    vocab, videos, samp, mcfg, tcfg = small_setup(epochs=1, loss=off)
    model = build_model(vocab, VariantTable(), samp, mcfg)
    before = _params(model)
    res = train(videos, vocab, samp, mcfg, tcfg, model=model)
    assert res.step > 0 and all(r.total == 0.0 for r in res.reports)
    for n, p in model.named_parameters():
        assert torch.equal(before[n], p), n


def test_resume_matches_uninterrupted_run(tmp_path):
    vocab, videos, samp, mcfg, tcfg = small_setup(epochs=3)
    full = train(videos, vocab, samp, mcfg, tcfg, checkpoint_dir=tmp_path / "full")
    assert sorted(p.name for p in (tmp_path / "full").iterdir()) == \
        ["epoch_1.brpc", "epoch_2.brpc", "epoch_3.brpc", "last.brpc"]
    vocab, videos, samp, mcfg, tcfg = small_setup(epochs=3)
    part = train(videos, vocab, samp, mcfg, tcfg, checkpoint_dir=tmp_path / "part", stop_after_epoch=1)
    assert part.history == full.history[:len(part.history)]
    resumed = train(videos, vocab, samp, mcfg, tcfg, resume_from=tmp_path / "part" / "epoch_1.brpc")
    assert resumed.history == full.history
    for (n, p), (_, q) in zip(full.model.named_parameters(), resumed.model.named_parameters()):
        assert torch.equal(p, q), n


def test_loss_decreases_on_fixed_batch():
    vocab, videos, samp, mcfg, tcfg = small_setup()
    table = VariantTable()
    model = build_model(vocab, table, samp, mcfg)
    cuts = make_cuts(videos, samp)[:6]
    bundles = [build_prompt_bundle(c, vocab, table) for c in cuts]
    opt = make_optimizer(model, tcfg)
    losses = []
    for _ in range(10):
        rep = batch_loss(model, cuts, bundles, videos, [], tcfg, samp.max_steps, model.dtype, None)
        losses.append(rep.total)
        opt.zero_grad()
        rep.tensor.backward()
        opt.step()
    assert all(a > b for a, b in zip(losses, losses[1:])), losses


def test_divergence_is_reported():
    vocab, videos, samp, mcfg, tcfg = small_setup(base_lr=1e6, epochs=5)
    with pytest.raises(TrainingDiverged) as info:
        train(videos, vocab, samp, mcfg, tcfg)
    assert math.isnan(info.value.terms["total"])
    assert info.value.step >= 1


def test_activity_term_logged():
    vocab, videos, samp, mcfg, tcfg = small_setup(epochs=1, activity_weight=1.0, activity_batch=4,
                                                  activity_segments=4, activity_seg_len=4)
    res = train(videos, vocab, samp, mcfg, tcfg)
    assert " act=" in res.history[0]
    assert all(r.act is not None and r.act >= 0 for r in res.reports)


def test_activity_term_needs_labels():
    vocab, videos, samp, mcfg, tcfg = small_setup(activity_weight=1.0)
    for v in videos:
        v.activity_label = None
    with pytest.raises(ValidationError):
        train(videos, vocab, samp, mcfg, tcfg)


def test_history_line_format():
    vocab, videos, samp, mcfg, tcfg = small_setup(epochs=1)
    res = train(videos, vocab, samp, mcfg, tcfg)
    assert res.history[0].startswith("step=0 sem=[")
    assert all(" integ=" in l and " stat=" in l and " total=" in l for l in res.history)
