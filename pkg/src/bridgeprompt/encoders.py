"""Frame, text and fusion encoders.

The fusion encoder reads ``[CNT] [ORD] [SEP] v_1 .. v_L`` where ``[ORD]`` is
the text embedding of an ordinal prompt. One pass per ordinal position
yields a clip feature (mean of the visual outputs) and a count feature
(the ``[CNT]`` output).
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .exceptions import ValidationError
from .prompts import make_ordinal_prompt

SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")
PAD, BOS, EOS, UNK = range(4)
_WORD = re.compile(r"\w+")


class Tokenizer:
    """Lower-casing word tokenizer over a vocabulary built from a prompt corpus."""

    def __init__(self, words: Sequence[str], max_len: int = 77):
        if max_len < 2:
            raise ValueError("max_len must leave room for <bos> and <eos>")
        words = [w for w in words if w not in SPECIAL_TOKENS]
        self.itos = list(SPECIAL_TOKENS) + list(dict.fromkeys(words))
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        self.max_len = max_len

    @classmethod
    def from_corpus(cls, texts: Iterable[str], max_len: int = 77) -> "Tokenizer":
        words = set()
        for t in texts:
            words.update(split_words(t))
        return cls(sorted(words), max_len)

    def __len__(self):
        return len(self.itos)

    def tokens(self, text: str) -> List[str]:
        if not text:
            raise ValueError("cannot tokenize empty text")
        return split_words(text)

    def encode(self, text: str) -> List[int]:
        """``<bos> w_1 .. w_n <eos>`` padded to ``max_len``; ``<eos>`` survives truncation."""
        ids = [self.stoi.get(w, UNK) for w in self.tokens(text)][: self.max_len - 2]
        seq = [BOS] + ids + [EOS]
        return seq + [PAD] * (self.max_len - len(seq))


def split_words(text: str) -> List[str]:
    return _WORD.findall(text.lower())


@dataclass
class ModelConfig:
    embed_dim: int = 512
    fusion_layers: int = 6
    fusion_heads: int = 8
    text_layers: int = 2
    text_width: int = 128
    text_heads: int = 4
    vocab_size: int = 0
    max_text_len: int = 77
    frame_input_dim: int = 768
    window_len: int = 16
    logit_scale_init: float = 1 / 0.07
    freeze_ordinal: bool = False
    seed: int = 0

    def validate(self):
        if self.embed_dim < 8:
            raise ValidationError("embed_dim must be >= 8")
        if self.fusion_layers < 1 or self.text_layers < 1:
            raise ValidationError("encoders need at least one layer")
        for name in ("fusion_heads", "text_width", "text_heads", "max_text_len", "frame_input_dim",
                     "window_len"):
            if getattr(self, name) < 1:
                raise ValidationError(f"ModelConfig.{name} must be positive")
        if self.embed_dim % self.fusion_heads:
            raise ValidationError("embed_dim must be divisible by fusion_heads")
        if self.text_width % self.text_heads:
            raise ValidationError("text_width must be divisible by text_heads")
        if self.vocab_size < len(SPECIAL_TOKENS):
            raise ValidationError("vocab_size must cover the special tokens")

    def to_dict(self):
        return asdict(self)


class SelfAttention(nn.Module):
    def __init__(self, width, heads):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(width, 3 * width)
        self.out = nn.Linear(width, width)

    def forward(self, x, causal=False):
        N, T, W = x.shape
        h = self.heads
        q, k, v = self.qkv(x).view(N, T, 3, h, W // h).permute(2, 0, 3, 1, 4)
        y = F.scaled_dot_product_attention(q, k, v, is_causal=causal)
        return self.out(y.transpose(1, 2).reshape(N, T, W))


class Block(nn.Module):
    """Pre-norm transformer block."""

    def __init__(self, width, heads):
        super().__init__()
        self.ln1 = nn.LayerNorm(width)
        self.attn = SelfAttention(width, heads)
        self.ln2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(nn.Linear(width, 4 * width), nn.GELU(), nn.Linear(4 * width, width))

    def forward(self, x, causal=False):
        x = x + self.attn(self.ln1(x), causal=causal)
        return x + self.mlp(self.ln2(x))


class TextEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        W = cfg.text_width
        self.token_embedding = nn.Embedding(cfg.vocab_size, W)
        self.positional_embedding = nn.Parameter(torch.empty(cfg.max_text_len, W))
        self.blocks = nn.ModuleList(Block(W, cfg.text_heads) for _ in range(cfg.text_layers))
        self.ln_final = nn.LayerNorm(W)
        self.projection = nn.Linear(W, cfg.embed_dim, bias=False)
        nn.init.normal_(self.token_embedding.weight, std=0.02)
        nn.init.normal_(self.positional_embedding, std=0.01)

    def forward(self, ids, eos_pos):
        T = ids.shape[1]
        x = self.token_embedding(ids) + self.positional_embedding[:T]
        for blk in self.blocks:
            x = blk(x, causal=True)
        x = self.ln_final(x)
        return self.projection(x[torch.arange(len(ids)), eos_pos])


class FrameEncoder(nn.Module):
    """Row-wise two-layer perceptron from input features to the joint space."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.fc1 = nn.Linear(cfg.frame_input_dim, cfg.embed_dim)
        self.fc2 = nn.Linear(cfg.embed_dim, cfg.embed_dim)

    def forward(self, x):
        return self.fc2(F.gelu(self.fc1(x)))


class FusionEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        D = cfg.embed_dim
        self.cnt_token = nn.Parameter(torch.empty(D))
        self.sep_token = nn.Parameter(torch.empty(D))
        self.positional_embedding = nn.Parameter(torch.empty(3 + cfg.window_len, D))
        self.blocks = nn.ModuleList(Block(D, cfg.fusion_heads) for _ in range(cfg.fusion_layers))
        self.ln_final = nn.LayerNorm(D)
        nn.init.normal_(self.cnt_token, std=0.02)
        nn.init.normal_(self.sep_token, std=0.02)
        nn.init.normal_(self.positional_embedding, std=0.01)

    def forward(self, frame_tokens, z_ord):
        """``frame_tokens`` (N, L, D), ``z_ord`` (N, D) -> ``(z_clip, z_cnt)`` each (N, D)."""
        N, L, D = frame_tokens.shape
        if z_ord.shape != (N, D):
            raise ValueError(f"ordinal embedding shape {tuple(z_ord.shape)} does not match ({N}, {D})")
        if 3 + L > self.positional_embedding.shape[0]:
            raise ValueError(f"{L} visual tokens exceed the fusion window of "
                             f"{self.positional_embedding.shape[0] - 3}")
        x = torch.cat([self.cnt_token.expand(N, 1, D), z_ord[:, None, :],
                       self.sep_token.expand(N, 1, D), frame_tokens], dim=1)
        x = x + self.positional_embedding[: 3 + L]
        for blk in self.blocks:
            x = blk(x)
        x = self.ln_final(x)
        return x[:, 3:].mean(dim=1), x[:, 0]


@dataclass
class TextFeature:
    vector: torch.Tensor


@dataclass
class ClipFeatures:
    """Fusion outputs of one cut; rows are ordinal positions."""

    per_ordinal: torch.Tensor
    count_vectors: torch.Tensor
    mean_clip: torch.Tensor
    mean_count: torch.Tensor

    @classmethod
    def from_rows(cls, per_ordinal, count_vectors):
        return cls(per_ordinal, count_vectors, per_ordinal.mean(dim=0), count_vectors.mean(dim=0))


class BridgePromptModel(nn.Module):
    def __init__(self, cfg: ModelConfig, tokenizer: Tokenizer):
        super().__init__()
        if cfg.vocab_size == 0:
            cfg.vocab_size = len(tokenizer)
        if cfg.vocab_size != len(tokenizer):
            raise ValidationError(f"vocab_size {cfg.vocab_size} != tokenizer size {len(tokenizer)}")
        if cfg.max_text_len != tokenizer.max_len:
            raise ValidationError("tokenizer max_len must equal ModelConfig.max_text_len")
        cfg.validate()
        self.cfg = cfg
        self.tokenizer = tokenizer
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.text_encoder = TextEncoder(cfg)
            self.frame_encoder = FrameEncoder(cfg)
            self.fusion = FusionEncoder(cfg)
        self.log_logit_scale = nn.Parameter(torch.tensor(math.log(cfg.logit_scale_init)))

    @property
    def dtype(self):
        return self.log_logit_scale.dtype

    def logit_scale(self):
        return self.log_logit_scale.exp().clamp(1.0, 100.0)

    def encode_texts(self, texts: Sequence[str]) -> torch.Tensor:
        """(N, D) features read at each text's <eos> position."""
        ids = torch.tensor([self.tokenizer.encode(t) for t in texts], dtype=torch.long)
        eos = (ids == EOS).int().argmax(dim=1)
        # causal attention lets us drop trailing padding without changing outputs
        ids = ids[:, : int(eos.max()) + 1]
        return self.text_encoder(ids, eos)

    def encode_text(self, text: str) -> TextFeature:
        return TextFeature(self.encode_texts([text])[0])

    def ordinal_features(self, k_max: int) -> torch.Tensor:
        feats = self.encode_texts([make_ordinal_prompt(i) for i in range(1, k_max + 1)])
        return feats.detach() if self.cfg.freeze_ordinal else feats

    def encode_frames(self, features) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(features) if not torch.is_tensor(features) else features,
                            dtype=self.dtype)
        if x.shape[-1] != self.cfg.frame_input_dim:
            raise ValueError(f"expected frame features of width {self.cfg.frame_input_dim}, got {x.shape[-1]}")
        return self.frame_encoder(x)

    def fuse(self, frame_tokens, z_ord):
        return self.fusion(frame_tokens, z_ord)

    def encode_cuts(self, cut_features, passes: Sequence[int], ord_feats: torch.Tensor,
                    count_passes: Optional[Sequence[int]] = None) -> List[ClipFeatures]:
        """Ordinal fusion passes for a batch of cuts.

        ``cut_features`` is (B, L, F); ``ord_feats`` row ``i-1`` embeds the
        i-th ordinal prompt. Cut ``b`` gets clip rows for ordinals
        ``1..passes[b]`` and count rows for ordinals ``1..count_passes[b]``
        (defaults to ``passes``).
        """
        frames = self.encode_frames(cut_features)
        B = frames.shape[0]
        if count_passes is None:
            count_passes = passes
        if len(passes) != B or len(count_passes) != B:
            raise ValueError("one pass count per cut is required")
        total = [max(p, c) for p, c in zip(passes, count_passes)]
        cut_idx = torch.tensor([b for b in range(B) for _ in range(total[b])], dtype=torch.long)
        ord_idx = torch.tensor([i for b in range(B) for i in range(total[b])], dtype=torch.long)
        z_clip, z_cnt = self.fuse(frames[cut_idx], ord_feats[ord_idx])
        out, pos = [], 0
        for b in range(B):
            out.append(ClipFeatures.from_rows(z_clip[pos:pos + passes[b]], z_cnt[pos:pos + count_passes[b]]))
            pos += total[b]
        return out

    def encode_cut(self, cut, K: int, ord_feats: Optional[torch.Tensor] = None) -> ClipFeatures:
        if K < 1:
            raise ValueError("K must be >= 1")
        if ord_feats is None:
            ord_feats = self.ordinal_features(K)
        return self.encode_cuts(np.asarray(cut.features)[None], [K], ord_feats)[0]

    def parameter_groups(self) -> Dict[str, List[nn.Parameter]]:
        """Named parameter groups used in gradient checks and reporting."""
        fusion_layers = [p for n, p in self.fusion.named_parameters()
                         if n not in ("cnt_token", "sep_token", "positional_embedding")]
        return {
            "token_embedding": [self.text_encoder.token_embedding.weight],
            "text_layers": [p for n, p in self.text_encoder.named_parameters() if n != "token_embedding.weight"],
            "frame_projector": list(self.frame_encoder.parameters()),
            "fusion_layers": fusion_layers,
            "cnt_token": [self.fusion.cnt_token],
            "fusion_tokens": [self.fusion.sep_token, self.fusion.positional_embedding],
            "logit_scale": [self.log_logit_scale],
        }
