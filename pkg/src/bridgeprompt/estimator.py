"""scikit-learn style front end over the training and inference pipeline."""
from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_frame_labels, check_videos
from .contrastive import LossWeights
from .dataset_io import ActionVocab, AnnotatedVideo
from .encoders import ModelConfig
from .inference import DEFAULT_ACTIVITY_TEMPLATE, build_prompt_bank, decode_frames, infer_activity, infer_cuts
from .metrics import frame_accuracy
from .prompts import VariantTable
from .sampler import SampleConfig, extract_cut, plan_cuts
from .trainer import TrainConfig, train


class BridgePrompt(BaseEstimator):
    """Prompt-supervised video-text pre-training on per-frame features.

    ``fit(X, y)`` takes a list of (T, F) feature arrays and matching frame
    label vectors. ``predict`` returns frame labels decoded from cut-level
    step predictions, ``transform`` returns frame-encoder features and
    ``predict_activity`` ranks activity prompts when activities were given
    to ``fit``.
    """

    def __init__(self, action_names: Optional[Sequence[str]] = None, window_len: int = 16,
                 schedules=((1, 0.5),), max_steps: int = 4, embed_dim: int = 64, fusion_layers: int = 2,
                 fusion_heads: int = 4, text_layers: int = 2, text_width: int = 64, text_heads: int = 4,
                 batch_size: int = 12, epochs: int = 10, max_train_steps: Optional[int] = None,
                 base_lr: float = 1e-3, weight_decay: float = 0.2, warmup_frac: float = 0.1,
                 lambda1: float = 1.0, lambda2: float = 1.0, activity_weight: float = 0.0,
                 voting: str = "average", random_state: int = 0):
        self.action_names = action_names
        self.window_len = window_len
        self.schedules = schedules
        self.max_steps = max_steps
        self.embed_dim = embed_dim
        self.fusion_layers = fusion_layers
        self.fusion_heads = fusion_heads
        self.text_layers = text_layers
        self.text_width = text_width
        self.text_heads = text_heads
        self.batch_size = batch_size
        self.epochs = epochs
        self.max_train_steps = max_train_steps
        self.base_lr = base_lr
        self.weight_decay = weight_decay
        self.warmup_frac = warmup_frac
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.activity_weight = activity_weight
        self.voting = voting
        self.random_state = random_state

    def _sample_config(self):
        return SampleConfig(self.window_len, list(self.schedules), max_steps=self.max_steps)

    def _vocab(self, y):
        n = int(max(labels.max() for labels in y)) + 1
        names = list(self.action_names) if self.action_names is not None else [f"action {i}" for i in range(n)]
        if len(names) < n:
            raise ValueError(f"labels reach {n - 1} but only {len(names)} action names were given")
        return ActionVocab(list(enumerate(names)))

    def fit(self, X, y, activities: Optional[Sequence[str]] = None):
        X = check_videos(X)
        y = check_frame_labels(y, X)
        if activities is not None and len(activities) != len(X):
            raise ValueError("one activity label per video is required")
        self.vocab_ = self._vocab(y)
        self.n_features_in_ = X[0].shape[1]
        videos = [AnnotatedVideo(f"v{i:04d}", labels, x, activity_label=None if activities is None else activities[i])
                  for i, (x, labels) in enumerate(zip(X, y))]
        samp = self._sample_config()
        mcfg = ModelConfig(embed_dim=self.embed_dim, fusion_layers=self.fusion_layers,
                           fusion_heads=self.fusion_heads, text_layers=self.text_layers,
                           text_width=self.text_width, text_heads=self.text_heads,
                           frame_input_dim=self.n_features_in_, seed=self.random_state)
        tcfg = TrainConfig(batch_size=self.batch_size, epochs=self.epochs, base_lr=self.base_lr,
                           weight_decay=self.weight_decay, warmup_frac=self.warmup_frac, seed=self.random_state,
                           loss=LossWeights(self.lambda1, self.lambda2), max_steps=self.max_train_steps,
                           activity_weight=self.activity_weight)
        res = train(videos, self.vocab_, samp, mcfg, tcfg)
        self.model_ = res.model
        self.history_ = res.history
        self.activities_ = sorted({a for a in activities}) if activities is not None else []
        self.bank_ = build_prompt_bank(self.vocab_, VariantTable(), self.model_, samp.max_steps,
                                       self.activities_ or None, DEFAULT_ACTIVITY_TEMPLATE)
        return self

    def _cuts(self, x):
        samp = self._sample_config()
        return [extract_cut(_Unlabelled(x), w, samp.max_steps) for w in plan_cuts(len(x), samp)]

    def predict_cuts(self, X):
        """Per video, a list of ``(start_frame, CutPrediction)``."""
        check_is_fitted(self, "model_")
        X = check_videos(X, self.n_features_in_)
        out = []
        for x in X:
            cuts = self._cuts(x)
            preds = infer_cuts(np.stack([c.features for c in cuts]), self.bank_, self.model_, self.voting)
            out.append([(c.start, p) for c, p in zip(cuts, preds)])
        return out

    def predict(self, X) -> List[np.ndarray]:
        """Frame labels per video; each cut is split evenly among its predicted steps."""
        check_is_fitted(self, "model_")
        X = check_videos(X, self.n_features_in_)
        out = []
        for x in X:
            cuts = self._cuts(x)
            preds = infer_cuts(np.stack([c.features for c in cuts]), self.bank_, self.model_, self.voting)
            out.append(decode_frames(list(zip(cuts, preds)), len(x), mode="uniform"))
        return out

    def predict_activity(self, X) -> List[str]:
        check_is_fitted(self, "model_")
        if not self.activities_:
            raise ValueError("fit was called without activity labels")
        X = check_videos(X, self.n_features_in_, min_frames=8)
        return [infer_activity(_Unlabelled(x), self.bank_, self.model_)[0] for x in X]

    def transform(self, X) -> List[np.ndarray]:
        """Frame-encoder features, one (T, D) array per video."""
        check_is_fitted(self, "model_")
        X = check_videos(X, self.n_features_in_)
        with torch.no_grad():
            return [self.model_.encode_frames(x).double().numpy() for x in X]

    def score(self, X, y) -> float:
        """Mean frame accuracy in [0, 1]."""
        X = check_videos(X, getattr(self, "n_features_in_", None))
        y = check_frame_labels(y, X)
        return float(np.mean([frame_accuracy(p, t) for p, t in zip(self.predict(X), y)]) / 100.0)


class _Unlabelled:
    """Minimal video stand-in for unlabelled features (every frame labelled 0)."""

    def __init__(self, features):
        self.video_id = "<input>"
        self.features = np.asarray(features)
        self.frame_labels = np.zeros(len(self.features), dtype=np.int64)

    def __len__(self):
        return len(self.features)
