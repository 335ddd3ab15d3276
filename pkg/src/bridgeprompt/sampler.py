"""Fixed-length cut planning, step extraction and uniform segment sampling."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import ValidationError

PAD_POLICIES = ("repeat_last", "drop_partial")


@dataclass
class SampleConfig:
    """Cut sampling schedule.

    Each ``(downsample, stride_rate)`` schedule places windows every
    ``window_len * downsample * stride_rate`` raw frames; a window reads
    every ``downsample``-th frame. Runs of ``exclude`` labels (e.g.
    background) are not counted as steps.
    """

    window_len: int = 16
    schedules: List[Tuple[int, float]] = field(default_factory=lambda: [(1, 1.0)])
    pad_policy: str = "repeat_last"
    max_steps: int = 8
    exclude: Tuple[int, ...] = ()

    def __post_init__(self):
        self.schedules = [(int(d), float(s)) for d, s in self.schedules]
        self.exclude = tuple(int(a) for a in self.exclude)
        self.validate()

    def validate(self):
        if self.window_len < 2:
            raise ValidationError("window_len must be >= 2")
        if not self.schedules:
            raise ValidationError("at least one sampling schedule is required")
        for d, s in self.schedules:
            if d < 1 or s <= 0:
                raise ValidationError(f"bad schedule {d}:{s}")
        if self.pad_policy not in PAD_POLICIES:
            raise ValidationError(f"pad_policy must be one of {PAD_POLICIES}")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be >= 1")


@dataclass
class VideoCut:
    video_id: str
    frame_indices: np.ndarray
    features: np.ndarray
    step_labels: List[Tuple[int, Tuple[int, int]]]
    frame_step_ordinal: np.ndarray
    truncated: bool = False

    @property
    def K(self) -> int:
        return len(self.step_labels)

    @property
    def actions(self) -> List[int]:
        return [a for a, _ in self.step_labels]

    @property
    def start(self) -> int:
        return int(self.frame_indices[0])


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def plan_cuts(video_len: int, cfg: SampleConfig) -> List[np.ndarray]:
    """Window index lists for every schedule, duplicates removed, schedule order kept."""
    if video_len < 1:
        raise ValueError("video_len must be >= 1")
    L = cfg.window_len
    out, seen = [], set()
    for d, s in cfg.schedules:
        step = L * d * s
        n = 0
        while True:
            start = _round_half_up(n * step)
            if start >= video_len:
                break
            idx = start + d * np.arange(L, dtype=np.int64)
            n += 1
            if idx[-1] > video_len - 1:
                if cfg.pad_policy == "drop_partial":
                    continue
                idx = np.minimum(idx, video_len - 1)
            key = tuple(idx.tolist())
            if key not in seen:
                seen.add(key)
                out.append(idx)
    return out


def run_length(labels: Sequence[int]) -> List[Tuple[int, int, int]]:
    """``(label, start, end)`` runs with half-open spans."""
    runs = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t] != labels[start]:
            runs.append((int(labels[start]), start, t))
            start = t
    return runs


def extract_cut(video, window, max_steps: int = 8, exclude: Sequence[int] = ()) -> VideoCut:
    """Cut of ``video`` at ``window`` with its ordered steps.

    Frames beyond ``max_steps`` steps or in an excluded run get ordinal 0.
    """
    window = np.asarray(window, dtype=np.int64)
    if window.size == 0 or window.min() < 0 or window.max() >= len(video):
        raise IndexError(f"window indices out of range for video {video.video_id} of length {len(video)}")
    labels = video.frame_labels[window]
    runs = [r for r in run_length(labels) if r[0] not in exclude]
    truncated = len(runs) > max_steps
    runs = runs[:max_steps]
    ordinal = np.zeros(len(window), dtype=np.int64)
    for i, (_, s, e) in enumerate(runs, start=1):
        ordinal[s:e] = i
    return VideoCut(
        video_id=video.video_id,
        frame_indices=window,
        features=video.features[window],
        step_labels=[(a, (s, e)) for a, s, e in runs],
        frame_step_ordinal=ordinal,
        truncated=truncated,
    )


def make_cuts(videos, cfg: SampleConfig) -> List[VideoCut]:
    """All planned cuts with at least one step, in video then window order."""
    cuts = []
    for v in videos:
        for w in plan_cuts(len(v), cfg):
            cut = extract_cut(v, w, cfg.max_steps, cfg.exclude)
            if cut.K:
                cuts.append(cut)
    return cuts


def uniform_segments(video_len: int, n_seg: int = 64, seg_len: int = 8) -> List[np.ndarray]:
    if video_len < seg_len:
        raise ValueError(f"video of {video_len} frames is shorter than a {seg_len}-frame segment")
    if n_seg < 1:
        raise ValueError("n_seg must be >= 1")
    span = video_len - seg_len
    if n_seg == 1:
        starts = [0]
    else:
        # integer round-half-up of i*span/(n_seg-1)
        den = n_seg - 1
        starts = [(2 * i * span + den) // (2 * den) for i in range(n_seg)]
    return [s + np.arange(seg_len, dtype=np.int64) for s in starts]
