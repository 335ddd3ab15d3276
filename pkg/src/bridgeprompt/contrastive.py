"""Similarity matrices and the KL-based video-text contrastive objective."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import torch

KL_EPS = 1e-8


def _as_tensor(x, dtype=None):
    if torch.is_tensor(x):
        return x if dtype is None else x.to(dtype)
    return torch.as_tensor(x, dtype=dtype or torch.float64)


def cosine_sim(a, b) -> torch.Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    na, nb = a.norm(), b.norm()
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return (a @ b / (na * nb)).clamp(-1.0, 1.0)


def _unit_rows(Z, name):
    norms = Z.norm(dim=1, keepdim=True)
    if bool((norms == 0).any()):
        raise ValueError(f"{name} contains a zero row")
    return Z / norms


def sim_matrix(Zx, Zy, scale=1.0) -> torch.Tensor:
    """``S[i, j] = scale * cos(Zx[i], Zy[j])``."""
    Zx, Zy = _as_tensor(Zx), _as_tensor(Zy)
    if Zx.ndim != 2 or Zx.shape != Zy.shape:
        raise ValueError(f"need two B x D matrices of equal shape, got {tuple(Zx.shape)} and {tuple(Zy.shape)}")
    if Zx.shape[0] < 2:
        raise ValueError("a similarity batch needs B >= 2")
    return scale * _unit_rows(Zx, "Zx") @ _unit_rows(Zy, "Zy").T


def gt_matrix(keys: Sequence, dtype=torch.float64) -> torch.Tensor:
    """Row-stochastic target: uniform mass over entries sharing the row's key."""
    if len(keys) < 2:
        raise ValueError("a similarity batch needs B >= 2")
    same = torch.tensor([[ki == kj for kj in keys] for ki in keys], dtype=dtype)
    return same / same.sum(dim=1, keepdim=True)


def kl_matrix(P, Q, eps: float = KL_EPS) -> torch.Tensor:
    """Mean over all N*N entries of ``P log(P / max(Q, eps))``; zero entries of P contribute 0."""
    P, Q = _as_tensor(P), _as_tensor(Q)
    if P.shape != Q.shape or P.ndim != 2:
        raise ValueError(f"shape mismatch: {tuple(P.shape)} vs {tuple(Q.shape)}")
    pos = P != 0  # NaN stays in the sum so divergence is visible
    P_safe = torch.where(pos, P, torch.ones_like(P))
    terms = torch.where(pos, P * (P_safe.log() - Q.clamp_min(eps).log()), torch.zeros_like(P))
    return terms.sum() / P.numel()


@dataclass
class SimilarityBatch:
    S: torch.Tensor
    S_T: torch.Tensor
    S_V: torch.Tensor
    GT: torch.Tensor

    def loss(self) -> torch.Tensor:
        return 0.5 * (kl_matrix(self.S_T, self.GT) + kl_matrix(self.S_V, self.GT))


def similarity_batch(Zx, Zy, keys, scale=1.0) -> SimilarityBatch:
    S = sim_matrix(Zx, Zy, scale)
    return SimilarityBatch(S, S.softmax(dim=1), S.softmax(dim=0), gt_matrix(keys, dtype=S.dtype))


def pair_loss(Zx, Zy, keys, scale=1.0) -> torch.Tensor:
    return similarity_batch(Zx, Zy, keys, scale).loss()


@dataclass
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    enable_sem: bool = True
    enable_integ: bool = True
    enable_stat: bool = True

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be >= 0")

    @property
    def any_enabled(self) -> bool:
        return self.enable_sem or self.enable_integ or self.enable_stat


@dataclass
class LossReport:
    sem_terms: List[float]
    integ: float
    stat: float
    total: float
    act: Optional[float] = None
    skipped: List[str] = field(default_factory=list)
    tensor: Optional[torch.Tensor] = field(default=None, repr=False, compare=False)

    def format_line(self, step: int) -> str:
        sem = ",".join(f"{v:.6g}" for v in self.sem_terms)
        line = f"step={step} sem=[{sem}] integ={self.integ:.6g} stat={self.stat:.6g}"
        if self.act is not None:
            line += f" act={self.act:.6g}"
        return line + f" total={self.total:.6g}"


def combine(sem_terms, integ, stat, weights: LossWeights):
    """Total objective from already-computed terms (tensors or floats)."""
    total = 0.0
    if weights.enable_sem:
        for t in sem_terms:
            total = total + t
    if weights.enable_integ:
        total = total + weights.lambda1 * integ
    if weights.enable_stat:
        total = total + weights.lambda2 * stat
    return total


def _mean_variant_features(encode, variant_lists):
    """Average encodings per variant list, encoding each distinct string once."""
    uniq = list(dict.fromkeys(t for vs in variant_lists for t in vs))
    feats = encode(uniq)
    index = {t: i for i, t in enumerate(uniq)}
    return torch.stack([feats[[index[t] for t in vs]].mean(dim=0) for vs in variant_lists])


def total_loss(clips, bundles, encode: Callable[[List[str]], torch.Tensor], scale,
               weights: LossWeights) -> LossReport:
    """Three-part objective over a batch.

    ``clips[b]`` are the fusion outputs of cut ``b`` (at least ``K_b``
    ordinal rows), ``bundles[b]`` its prompts, ``encode`` maps a list of
    strings to an (N, D) tensor. The i-th semantic term runs over the cuts
    with ``K >= i``; a term over fewer than two cuts is skipped.
    """
    if len(clips) != len(bundles):
        raise ValueError("one prompt bundle per clip is required")
    skipped = []
    zero = torch.zeros((), dtype=clips[0].mean_clip.dtype)
    sem_terms = []
    if weights.enable_sem:
        k_top = max(b.K for b in bundles)
        for i in range(1, k_top + 1):
            members = [b for b in range(len(bundles)) if bundles[b].K >= i]
            if len(members) < 2:
                skipped.append(f"sem{i}")
                sem_terms.append(zero)
                continue
            Zx = torch.stack([clips[b].per_ordinal[i - 1] for b in members])
            Zy = _mean_variant_features(encode, [bundles[b].semantic[i - 1] for b in members])
            keys = [bundles[b].semantic[i - 1][0] for b in members]
            sem_terms.append(pair_loss(Zx, Zy, keys, scale))
    integ = stat = zero
    if len(bundles) < 2:
        skipped += [n for n, on in (("integ", weights.enable_integ), ("stat", weights.enable_stat)) if on]
    else:
        if weights.enable_integ:
            Zx = torch.stack([c.mean_clip for c in clips])
            Zy = _mean_variant_features(encode, [b.integrated for b in bundles])
            integ = pair_loss(Zx, Zy, [b.integrated[0] for b in bundles], scale)
        if weights.enable_stat:
            Zx = torch.stack([c.mean_count for c in clips])
            Zy = _mean_variant_features(encode, [[b.statistical] for b in bundles])
            stat = pair_loss(Zx, Zy, [b.statistical for b in bundles], scale)
    total = combine(sem_terms, integ, stat, weights)
    if not torch.is_tensor(total):
        total = zero
    return LossReport(
        sem_terms=[float(t.detach()) if torch.is_tensor(t) else float(t) for t in sem_terms],
        integ=float(integ.detach()) if torch.is_tensor(integ) else float(integ),
        stat=float(stat.detach()) if torch.is_tensor(stat) else float(stat),
        total=float(total.detach()),
        skipped=skipped,
        tensor=total,
    )


def report_terms(report: LossReport) -> Dict[str, float]:
    out = {f"sem{i}": v for i, v in enumerate(report.sem_terms, start=1)}
    out.update(integ=report.integ, stat=report.stat, total=report.total)
    if report.act is not None:
        out["act"] = report.act
    return out
