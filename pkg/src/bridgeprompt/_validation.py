"""Input checks shared by the estimator front end."""
from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
from sklearn.utils.validation import check_array


def check_videos(X, n_features: Optional[int] = None, min_frames: int = 1) -> List[np.ndarray]:
    """A list of finite (T, F) float arrays with a common F."""
    if isinstance(X, np.ndarray) and X.ndim == 2:
        X = [X]
    if not isinstance(X, (list, tuple)) or not len(X):
        raise ValueError("X must be a non-empty list of (frames, features) arrays")
    out = [check_array(x, dtype=np.float64, ensure_min_samples=min_frames) for x in X]
    widths = {x.shape[1] for x in out}
    if len(widths) != 1:
        raise ValueError(f"videos disagree on feature width: {sorted(widths)}")
    if n_features is not None and out[0].shape[1] != n_features:
        raise ValueError(f"X has {out[0].shape[1]} features per frame, expected {n_features}")
    return out


def check_frame_labels(y, X: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Non-negative integer label vectors, one per video, lengths matching ``X``."""
    if isinstance(y, np.ndarray) and y.ndim == 1:
        y = [y]
    if len(y) != len(X):
        raise ValueError(f"got {len(y)} label sequences for {len(X)} videos")
    out = []
    for i, (labels, x) in enumerate(zip(y, X)):
        labels = np.asarray(labels)
        if labels.ndim != 1 or len(labels) != len(x):
            raise ValueError(f"video {i}: labels of shape {labels.shape} for {len(x)} frames")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.mod(labels, 1) == 0):
                raise ValueError(f"video {i}: labels must be integers")
            labels = labels.astype(np.int64)
        if labels.min() < 0:
            raise ValueError(f"video {i}: labels must be >= 0")
        out.append(labels.astype(np.int64))
    return out
