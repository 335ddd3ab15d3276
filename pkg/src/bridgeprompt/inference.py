"""Prompt-based prediction of action counts, ordinal steps and activities."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch

from .prompts import (VariantTable, make_activity_prompt, make_semantic_prompts,
                      make_statistical_prompt)
from .sampler import uniform_segments

DEFAULT_ACTIVITY_TEMPLATE = "the person is making {activity}"


@dataclass
class PromptBank:
    """Frozen text features for every candidate prompt.

    ``sem_feats[i-1, a]`` is the variant-averaged feature of the i-th
    ordinal semantic prompt of action ``a``; ``sem_variant_feats`` keeps
    the per-variant features for hard voting.
    """

    stat_feats: np.ndarray
    sem_feats: np.ndarray
    sem_variant_feats: Optional[np.ndarray] = None
    activity_feats: Optional[np.ndarray] = None
    activity_names: List[str] = field(default_factory=list)

    @property
    def k_max(self) -> int:
        return self.stat_feats.shape[0]

    @property
    def n_actions(self) -> int:
        return self.sem_feats.shape[1]


@dataclass
class CutPrediction:
    K_hat: int
    steps: List[int]
    scores: List[np.ndarray]
    all_steps: List[int] = field(default_factory=list)
    count_scores: Optional[np.ndarray] = None

    def format_line(self, video_id, start, vocab) -> str:
        names = ",".join(vocab.name_of(a) for a in self.steps)
        return f"video={video_id} start={start} K={self.K_hat} steps={names}"


def _unit(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x, axis=axis, keepdims=True)
    return x / np.where(n == 0, 1.0, n)


def cosine_scores(v, M) -> np.ndarray:
    """Cosine similarity of vector ``v`` against each row of ``M``."""
    return _unit(M) @ _unit(v)


def _first_argmax(scores) -> int:
    return int(np.argmax(scores))  # np.argmax returns the lowest index among ties


@torch.no_grad()
def _encode_np(model, texts):
    return model.encode_texts(list(texts)).double().numpy()


@torch.no_grad()
def build_prompt_bank(vocab, table: VariantTable, model, k_max: int,
                      activities: Optional[Sequence[str]] = None,
                      activity_template: str = DEFAULT_ACTIVITY_TEMPLATE) -> PromptBank:
    if len(vocab) == 0:
        raise ValueError("empty action vocabulary")
    was_training = model.training
    model.eval()
    try:
        stat = _encode_np(model, [make_statistical_prompt(k) for k in range(1, k_max + 1)])
        V = len(table.semantic_variants)
        texts = [t for i in range(1, k_max + 1) for vp in vocab.names
                 for t in make_semantic_prompts(i, vp, table)]
        variant = _encode_np(model, texts).reshape(k_max, len(vocab), V, -1)
        act_feats, names = None, []
        if activities:
            names = list(activities)
            act_feats = _encode_np(model, [make_activity_prompt(a, activity_template) for a in names])
    finally:
        model.train(was_training)
    return PromptBank(stat, variant.mean(axis=2), variant, act_feats, names)


def infer_count(mean_count, bank: PromptBank) -> int:
    return _first_argmax(cosine_scores(mean_count, bank.stat_feats)) + 1


def _step_for(z, i, bank: PromptBank, voting: str):
    scores = cosine_scores(z, bank.sem_feats[i])
    if voting == "average":
        return _first_argmax(scores), scores
    if voting != "vote":
        raise ValueError(f"unknown voting mode {voting!r}")
    per_variant = bank.sem_variant_feats[i]  # (A, V, D)
    votes = np.zeros(bank.n_actions, dtype=np.int64)
    for v in range(per_variant.shape[1]):
        votes[_first_argmax(cosine_scores(z, per_variant[:, v]))] += 1
    return _first_argmax(votes), scores


def predict_from_features(per_ordinal, mean_count, bank: PromptBank, voting="average") -> CutPrediction:
    """Decode count then steps from fusion outputs of all ``k_max`` ordinal passes."""
    per_ordinal = np.asarray(per_ordinal, dtype=np.float64)
    count_scores = cosine_scores(mean_count, bank.stat_feats)
    k_hat = _first_argmax(count_scores) + 1
    all_steps, scores = [], []
    for i in range(min(len(per_ordinal), bank.k_max)):
        a, s = _step_for(per_ordinal[i], i, bank, voting)
        all_steps.append(a)
        scores.append(s)
    return CutPrediction(k_hat, all_steps[:k_hat], scores[:k_hat], all_steps, count_scores)


@torch.no_grad()
def infer_cuts(cut_features, bank: PromptBank, model, voting="average") -> List[CutPrediction]:
    """Batched :func:`infer_cut` over a (B, L, F) stack of cut features."""
    was_training = model.training
    model.eval()
    try:
        ords = model.ordinal_features(bank.k_max)
        feats = np.asarray(cut_features)
        clips = model.encode_cuts(feats, [bank.k_max] * len(feats), ords)
    finally:
        model.train(was_training)
    return [predict_from_features(c.per_ordinal.double().numpy(), c.mean_count.double().numpy(), bank, voting)
            for c in clips]


def infer_cut(cut_features, bank: PromptBank, model, voting="average") -> CutPrediction:
    return infer_cuts(np.asarray(cut_features)[None], bank, model, voting)[0]


def video_feature(model, features, ord_feat, n_seg=64, seg_len=8) -> torch.Tensor:
    """Mean first-ordinal clip feature over uniformly sampled segments of one video."""
    segs = uniform_segments(len(features), n_seg, seg_len)
    x = torch.as_tensor(np.asarray(features)[np.stack(segs)], dtype=model.dtype)
    frames = model.encode_frames(x)
    z_clip, _ = model.fuse(frames, ord_feat.expand(len(segs), -1))
    return z_clip.mean(dim=0)


@torch.no_grad()
def infer_activity(video, bank: PromptBank, model, n_seg=64, seg_len=8, top_k=5
                   ) -> Tuple[str, List[Tuple[str, float]]]:
    if bank.activity_feats is None or not bank.activity_names:
        raise ValueError("no activities configured in the prompt bank")
    was_training = model.training
    model.eval()
    try:
        ord1 = model.ordinal_features(1)[0]
        v = video_feature(model, video.features, ord1, n_seg, seg_len).double().numpy()
    finally:
        model.train(was_training)
    scores = cosine_scores(v, bank.activity_feats)
    order = np.lexsort((np.arange(len(scores)), -scores))
    ranked = [(bank.activity_names[j], float(scores[j])) for j in order[:top_k]]
    return ranked[0][0], ranked


def decode_frames(cut_predictions, video_len: int, mode: str = "ordinal") -> np.ndarray:
    """Frame labels from overlapping cut predictions by majority vote.

    ``cut_predictions`` is a sequence of ``(cut, CutPrediction)``. With
    ``mode="ordinal"`` each frame takes the predicted step at its
    ``frame_step_ordinal``; ``mode="uniform"`` splits the cut evenly into
    ``K_hat`` spans instead. Ordinals beyond ``K_hat`` map to the last
    predicted step. Vote ties go to the label the earliest cut proposed.
    """
    votes = [dict() for _ in range(video_len)]
    first_seen = [dict() for _ in range(video_len)]
    for order, (cut, pred) in enumerate(cut_predictions):
        L = len(cut.frame_indices)
        if mode == "ordinal":
            ords = np.asarray(cut.frame_step_ordinal)
        elif mode == "uniform":
            ords = np.arange(L) * pred.K_hat // L + 1
        else:
            raise ValueError(f"unknown decode mode {mode!r}")
        seen_here = set()
        for f, o in zip(np.asarray(cut.frame_indices), ords):
            f = int(f)
            if f in seen_here:
                continue  # padded repeats of the last frame vote once
            seen_here.add(f)
            o = int(o)
            step = pred.steps[min(max(o, 1), pred.K_hat) - 1] if o >= 1 else pred.steps[-1]
            votes[f][step] = votes[f].get(step, 0) + 1
            first_seen[f].setdefault(step, order)
    out = np.empty(video_len, dtype=np.int64)
    for f in range(video_len):
        if not votes[f]:
            raise ValueError(f"frame {f} is not covered by any cut")
        top = max(votes[f].values())
        out[f] = min((first_seen[f][a], a) for a, c in votes[f].items() if c == top)[1]
    return out
