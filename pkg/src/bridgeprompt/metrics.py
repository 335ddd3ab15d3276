"""Temporal segmentation and recognition metrics (all returned in percent)."""
from __future__ import annotations

from typing import Dict, List, NamedTuple, Sequence

import numpy as np

from .sampler import run_length

THRESHOLDS = (0.10, 0.25, 0.50)
REPORT_COLUMNS = ("F1@10", "F1@25", "F1@50", "Edit", "Acc")


class Segment(NamedTuple):
    label: int
    start: int
    end: int


Segmentation = List[Segment]


def frames_to_segments(labels: Sequence[int]) -> Segmentation:
    if len(labels) == 0:
        raise ValueError("cannot segment an empty label sequence")
    return [Segment(*r) for r in run_length(list(labels))]


def frame_accuracy(pred: Sequence[int], gt: Sequence[int]) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {len(pred)} predicted vs {len(gt)} ground-truth frames")
    if pred.size == 0:
        raise ValueError("empty label sequences")
    return 100.0 * float(np.mean(pred == gt))


def levenshtein(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, y in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y))
        prev = cur
    return prev[-1]


def edit_score(pred: Segmentation, gt: Segmentation) -> float:
    if not pred or not gt:
        raise ValueError("edit score needs non-empty segmentations")
    p = [s.label for s in pred]
    g = [s.label for s in gt]
    return 100.0 * (1.0 - levenshtein(p, g) / max(len(p), len(g)))


def iou(a: Segment, b: Segment) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = (a.end - a.start) + (b.end - b.start) - inter
    return inter / union


def match_counts(pred: Segmentation, gt: Segmentation, tau: float):
    """Greedy matching in prediction order; returns ``(tp, fp, fn)``."""
    used = [False] * len(gt)
    tp = fp = 0
    for p in pred:
        best, best_iou = -1, -1.0
        for j, g in enumerate(gt):
            if used[j] or g.label != p.label:
                continue
            v = iou(p, g)
            if v > best_iou:
                best, best_iou = j, v
        if best >= 0 and best_iou >= tau:
            used[best] = True
            tp += 1
        else:
            fp += 1
    return tp, fp, len(gt) - sum(used)


def f1_from_counts(tp, fp, fn) -> float:
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 100.0 * 2 * precision * recall / (precision + recall)


def f1_at(pred: Segmentation, gt: Segmentation, tau: float) -> float:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"overlap threshold must lie in (0, 1), got {tau}")
    return f1_from_counts(*match_counts(pred, gt, tau))


def topk_accuracy(score_lists, gt_labels: Sequence[int], k: int) -> float:
    """Share of items whose true label is among the ``k`` best scores.

    Ties rank the smaller label id first.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(score_lists) != len(gt_labels):
        raise ValueError("one score list per item is required")
    if len(gt_labels) == 0:
        raise ValueError("no items to score")
    hits = 0
    for scores, g in zip(score_lists, gt_labels):
        scores = np.asarray(scores, dtype=float)
        order = np.lexsort((np.arange(len(scores)), -scores))
        hits += int(g in order[:k])
    return 100.0 * hits / len(gt_labels)


def segmentation_scores(pred: Sequence[int], gt: Sequence[int]) -> Dict[str, float]:
    ps, gs = frames_to_segments(pred), frames_to_segments(gt)
    out = {f"F1@{round(t * 100)}": f1_at(ps, gs, t) for t in THRESHOLDS}
    out["Edit"] = edit_score(ps, gs)
    out["Acc"] = frame_accuracy(pred, gt)
    return out


def evaluate_split(preds: Sequence[Sequence[int]], gts: Sequence[Sequence[int]],
                   pooled: bool = False) -> Dict[str, float]:
    """Aggregate the five segmentation metrics over videos.

    By default each metric is computed per video and averaged. With
    ``pooled=True`` accuracy pools frames and F1 pools match counts across
    the split; edit stays a per-video average.
    """
    if len(preds) != len(gts) or not gts:
        raise ValueError("need matching, non-empty lists of predictions and ground truth")
    if not pooled:
        rows = [segmentation_scores(p, g) for p, g in zip(preds, gts)]
        return {c: float(np.mean([r[c] for r in rows])) for c in REPORT_COLUMNS}
    counts = {t: np.zeros(3) for t in THRESHOLDS}
    correct = total = 0
    edits = []
    for p, g in zip(preds, gts):
        ps, gs = frames_to_segments(p), frames_to_segments(g)
        for t in THRESHOLDS:
            counts[t] += match_counts(ps, gs, t)
        edits.append(edit_score(ps, gs))
        frame_accuracy(p, g)
        correct += int(np.sum(np.asarray(p) == np.asarray(g)))
        total += len(g)
    out = {f"F1@{round(t * 100)}": f1_from_counts(*counts[t]) for t in THRESHOLDS}
    out["Edit"] = float(np.mean(edits))
    out["Acc"] = 100.0 * correct / total
    return out


def format_report(rows: Dict[str, Dict[str, float]]) -> str:
    """Render ``{split_name: scores}`` as whitespace-separated text with a mean row.

    The header is ``split F1@10 F1@25 F1@50 Edit Acc``.
    """
    lines = ["split " + " ".join(REPORT_COLUMNS)]
    for name, scores in rows.items():
        lines.append(name + " " + " ".join(f"{scores[c]:.1f}" for c in REPORT_COLUMNS))
    if len(rows) > 1:
        mean = {c: float(np.mean([r[c] for r in rows.values()])) for c in REPORT_COLUMNS}
        lines.append("mean " + " ".join(f"{mean[c]:.1f}" for c in REPORT_COLUMNS))
    return "\n".join(lines)
