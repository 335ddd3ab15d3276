import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from bridgeprompt.contrastive import (LossReport, LossWeights, combine, cosine_sim, gt_matrix, kl_matrix,
                                      pair_loss, sim_matrix, total_loss)

from gradcheck import fd_check, loss_fn, tiny_problem


def test_cosine_sim():
    assert float(cosine_sim([1.0, 0.0], [0.0, 1.0])) == 0.0
    assert float(cosine_sim([1.0, 1.0], [2.0, 2.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        cosine_sim([0.0, 0.0], [1.0, 0.0])


def test_sim_matrix_scale_and_shape():
    Z = torch.eye(3, dtype=torch.float64)
    S = sim_matrix(Z, Z, scale=5.0)
    assert torch.allclose(S, 5 * torch.eye(3, dtype=torch.float64))
    with pytest.raises(ValueError):
        sim_matrix(Z[:1], Z[:1])
    with pytest.raises(ValueError):
        sim_matrix(Z, Z[:2])
    with pytest.raises(ValueError):
        sim_matrix(torch.zeros(2, 3), torch.ones(2, 3))


def test_gt_matrix():
    gt = gt_matrix(["a", "b", "a"])
    expected = torch.tensor([[0.5, 0, 0.5], [0, 1, 0], [0.5, 0, 0.5]], dtype=torch.float64)
    assert torch.equal(gt, expected)
    assert torch.allclose(gt.sum(dim=1), torch.ones(3, dtype=torch.float64))
    assert torch.equal(gt_matrix(["x", "x"]), torch.full((2, 2), 0.5, dtype=torch.float64))


def test_kl_self_and_identity_vs_uniform():
    P = torch.softmax(torch.randn(4, 4, dtype=torch.float64), dim=1)
    assert float(kl_matrix(P, P)) < 1e-12
    val = kl_matrix(torch.eye(2, dtype=torch.float64), torch.full((2, 2), 0.5, dtype=torch.float64))
    assert float(val) == pytest.approx(math.log(2) / 2, abs=1e-12)
    assert float(val) == pytest.approx(0.34657, abs=1e-4)


def test_kl_zero_q_is_clamped():
    P = torch.eye(2, dtype=torch.float64)
    Q = torch.tensor([[0.0, 1.0], [0.0, 1.0]], dtype=torch.float64)
    assert math.isfinite(float(kl_matrix(P, Q)))


def test_kl_gradient_finite_where_p_zero():
    P = torch.eye(3, dtype=torch.float64)
    logits = torch.zeros(3, 3, dtype=torch.float64, requires_grad=True)
    kl_matrix(P, logits.softmax(dim=1)).backward()
    assert torch.isfinite(logits.grad).all()


def test_pair_loss_decreases_with_scale_for_aligned_batch():
    Z = torch.eye(4, dtype=torch.float64)
    keys = list("abcd")
    vals = [float(pair_loss(Z, Z, keys, s)) for s in (1, 2, 5, 10, 20)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert abs(float(pair_loss(Z, Z, keys, 100))) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.floats(0.1, 10.0), st.integers(0, 10_000))
def test_pair_loss_invariant_to_row_rescaling(B, c, seed):
    g = torch.Generator().manual_seed(seed)
    Zx = torch.randn(B, 5, generator=g, dtype=torch.float64)
    Zy = torch.randn(B, 5, generator=g, dtype=torch.float64)
    keys = list(range(B))
    assert float(pair_loss(Zx, Zy, keys, 3.0)) == pytest.approx(float(pair_loss(c * Zx, Zy, keys, 3.0)), abs=1e-10)


def test_pair_loss_nonnegative_random():
    g = torch.Generator().manual_seed(0)
    for _ in range(50):
        Zx, Zy = torch.randn(2, 5, 4, generator=g, dtype=torch.float64)
        assert float(pair_loss(Zx, Zy, [0, 1, 0, 2, 1], 10.0)) >= 0


def test_combine_weights_and_toggles():
    w = LossWeights(lambda1=2.0, lambda2=3.0)
    assert combine([1.0, 2.0], 1.0, 1.0, w) == 8.0
    assert combine([1.0, 2.0], 1.0, 1.0, LossWeights(enable_sem=False)) == 2.0
    assert combine([1.0], 1.0, 1.0, LossWeights(enable_sem=False, enable_integ=False, enable_stat=False)) == 0.0
    with pytest.raises(ValueError):
        LossWeights(lambda1=-1)


def test_report_line_format():
    r = LossReport([0.5, 0.25], 0.1, 0.2, 1.05)
    assert r.format_line(3) == "step=3 sem=[0.5,0.25] integ=0.1 stat=0.2 total=1.05"


def test_total_loss_skips_sparse_ordinal():
    model, cuts, bundles, feats = tiny_problem(B=4)
    ks = [b.K for b in bundles]
    assert sorted(ks) == [1, 2, 2, 2]
    ords = model.ordinal_features(2)
    clips = model.encode_cuts(feats, ks, ords)
    rep = total_loss(clips, bundles, model.encode_texts, model.logit_scale(), LossWeights())
    assert rep.skipped == [] and len(rep.sem_terms) == 2
    # a batch where only one cut has K = 2
    pick = [i for i, k in enumerate(ks) if k == 1] + [ks.index(2)]
    rep = total_loss([clips[i] for i in pick], [bundles[i] for i in pick], model.encode_texts,
                     model.logit_scale(), LossWeights())
    assert rep.skipped == ["sem2"] and rep.sem_terms[1] == 0.0


@pytest.mark.parametrize("seed", [0, 1])
def test_total_loss_gradients_match_finite_differences(seed):
    model, _, bundles, feats = tiny_problem(seed=seed)
    errs = fd_check(model, lambda: loss_fn(model, bundles, feats), seed=seed)
    assert set(errs) >= {"token_embedding", "text_layers", "frame_projector", "fusion_layers", "cnt_token",
                         "logit_scale"}
    assert max(errs.values()) < 1e-4, errs


def test_kl_propagates_nan():
    P = torch.tensor([[float("nan"), 0.5], [0.5, 0.5]], dtype=torch.float64)
    assert math.isnan(float(kl_matrix(P, torch.full((2, 2), 0.5, dtype=torch.float64))))
