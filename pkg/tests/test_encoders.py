import numpy as np
import pytest
import torch

from bridgeprompt.encoders import BOS, EOS, PAD, UNK, BridgePromptModel, ModelConfig, Tokenizer
from bridgeprompt.exceptions import ValidationError

from gradcheck import fd_check, loss_fn, tiny_problem


def _model(**kw):
    tok = Tokenizer.from_corpus(["this is the first action in the video", "cut bread", "pour milk"], 24)
    cfg = dict(embed_dim=16, fusion_layers=1, fusion_heads=2, text_layers=1, text_width=8, text_heads=2,
               max_text_len=24, frame_input_dim=5, window_len=6)
    cfg.update(kw)
    return BridgePromptModel(ModelConfig(**cfg), tok)


def test_tokenizer_encode():
    tok = Tokenizer(["cut", "bread"], max_len=6)
    assert tok.encode("Cut bread") == [BOS, 4, 5, EOS, PAD, PAD]
    assert tok.encode("cut salt") == [BOS, 4, UNK, EOS, PAD, PAD]
    ids = tok.encode("cut bread cut bread cut")
    assert len(ids) == 6 and ids[-1] == EOS
    with pytest.raises(ValueError):
        tok.encode("")


def test_tokenizer_from_corpus_sorted_and_unique():
    tok = Tokenizer.from_corpus(["b a", "a c"])
    assert tok.itos[4:] == ["a", "b", "c"]


def test_config_validation():
    with pytest.raises(ValidationError):
        _model(embed_dim=15)
    with pytest.raises(ValidationError):
        _model(fusion_layers=0)


def test_seeded_init_is_deterministic():
    a, b = _model(seed=3), _model(seed=3)
    for (n, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(p, q), n
    c = _model(seed=4)
    assert not torch.equal(a.fusion.cnt_token, c.fusion.cnt_token)


def test_shapes():
    m = _model()
    assert m.encode_texts(["cut bread", "pour milk now"]).shape == (2, 16)
    ords = m.ordinal_features(3)
    clips = m.encode_cuts(np.random.default_rng(0).normal(size=(2, 6, 5)), [1, 3], ords)
    assert clips[0].per_ordinal.shape == (1, 16) and clips[1].per_ordinal.shape == (3, 16)
    assert clips[1].mean_count.shape == (16,)
    with pytest.raises(ValueError):
        m.encode_frames(np.zeros((6, 4)))


def test_text_feature_ignores_padding_length():
    m = _model()
    a = m.encode_texts(["cut bread"])
    b = m.encode_texts(["cut bread", "this is the first action in the video"])[:1]
    assert torch.allclose(a, b, atol=1e-6)


def test_frame_encoder_is_row_wise():
    m = _model()
    x = torch.randn(6, 5)
    full = m.encode_frames(x)
    rows = torch.stack([m.encode_frames(x[i:i + 1])[0] for i in range(6)])
    assert torch.allclose(full, rows, atol=1e-6)


def test_fusion_permutation_invariant_without_positions():
    m = _model()
    with torch.no_grad():
        m.fusion.positional_embedding.zero_()
    frames = torch.randn(1, 6, 16)
    z = torch.randn(1, 16)
    perm = torch.randperm(6)
    c1, n1 = m.fuse(frames, z)
    c2, n2 = m.fuse(frames[:, perm], z)
    assert torch.allclose(c1, c2, atol=1e-5) and torch.allclose(n1, n2, atol=1e-5)


def test_fusion_rejects_long_window():
    m = _model()
    with pytest.raises(ValueError):
        m.fuse(torch.randn(1, 7, 16), torch.randn(1, 16))


def test_logit_scale_init_and_clamp():
    m = _model()
    assert float(m.logit_scale().detach()) == pytest.approx(1 / 0.07, rel=1e-6)
    with torch.no_grad():
        m.log_logit_scale.fill_(10.0)
    assert float(m.logit_scale().detach()) == 100.0


def test_frozen_ordinal_features_detached():
    assert not _model(freeze_ordinal=True).ordinal_features(2).requires_grad
    assert _model().ordinal_features(2).requires_grad


def test_gradients_reach_every_group():
    model, _, bundles, feats = tiny_problem()
    loss_fn(model, bundles, feats).backward()
    for name, params in model.parameter_groups().items():
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in params), name


def test_fd_per_group_float64():
    model, _, bundles, feats = tiny_problem(seed=2)
    errs = fd_check(model, lambda: loss_fn(model, bundles, feats), seed=2)
    for name, e in errs.items():
        assert e < 1e-4, (name, e)


def test_tokenizer_punctuation_and_case():
    tok = Tokenizer(["take", "bread"], max_len=8)
    assert tok.tokens("Take, bread.") == ["take", "bread"]
    assert tok.encode("TAKE bread") == tok.encode("take BREAD")


def test_encode_cut_means():
    from bridgeprompt.sampler import VideoCut
    m = _model()
    cut = VideoCut("v", np.arange(6), np.random.default_rng(1).normal(size=(6, 5)), [], np.ones(6, int))
    one = m.encode_cut(cut, 1)
    assert torch.equal(one.mean_clip, one.per_ordinal[0])
    three = m.encode_cut(cut, 3)
    assert three.per_ordinal.shape[0] == 3
    assert torch.equal(three.mean_clip, three.per_ordinal.mean(dim=0))
    assert torch.equal(three.mean_count, three.count_vectors.mean(dim=0))
    assert not torch.allclose(three.per_ordinal[0], three.per_ordinal[1])
    with pytest.raises(ValueError):
        m.encode_cut(cut, 0)
