"""Annotation/feature file parsing and the synthetic dataset generator.

On-disk layout of a dataset directory (MS-TCN style)::

    <root>/mapping.txt              "<id> <label>" per line
    <root>/groundTruth/<vid>.txt    one label token per frame
    <root>/features/<vid>.brpf      per-frame features, BRPF container
    <root>/activity.txt             optional "<vid> <activity>" per line
    <root>/splits/<name>.bundle     optional list of video ids
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import FormatError, LengthError, ParseError, ValidationError

BRPF_MAGIC = b"BRPF"
BRPF_VERSION = 1
_BRPF_HEADER = struct.Struct("<4sIII")


@dataclass
class ActionVocab:
    """Ordered action label space.

    ``entries`` holds ``(id, verb_phrase)`` pairs with contiguous ids from 0.
    ``label_map`` rewrites raw annotation tokens before lookup, e.g. a full
    GTEA label onto its verb.
    """

    entries: List[Tuple[int, str]]
    label_map: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.entries = [(int(i), str(name)) for i, name in self.entries]
        if not self.entries:
            raise ValidationError("action vocabulary is empty")
        ids = [i for i, _ in self.entries]
        if sorted(ids) != list(range(len(ids))):
            raise ValidationError(f"action ids must be unique and contiguous from 0, got {ids}")
        self.entries.sort()
        names = [name for _, name in self.entries]
        if len(set(names)) != len(names):
            raise ValidationError("action labels must be unique")
        self._index = {name: i for i, name in self.entries}

    def __len__(self):
        return len(self.entries)

    @property
    def names(self) -> List[str]:
        return [name for _, name in self.entries]

    def name_of(self, action_id: int) -> str:
        return self.entries[action_id][1]

    def id_of(self, token: str) -> int:
        """Map a raw label token to its id, applying ``label_map`` first."""
        key = self.label_map.get(token, token)
        try:
            return self._index[key]
        except KeyError:
            raise KeyError(token) from None

    def __contains__(self, token):
        return self.label_map.get(token, token) in self._index


@dataclass
class AnnotatedVideo:
    video_id: str
    frame_labels: np.ndarray
    features: np.ndarray
    fps: float = 15.0
    activity_label: Optional[str] = None

    def __post_init__(self):
        self.frame_labels = np.asarray(self.frame_labels, dtype=np.int64)
        self.features = np.asarray(self.features)
        if self.features.ndim != 2:
            raise ValidationError(f"{self.video_id}: features must be 2-D, got shape {self.features.shape}")
        if self.frame_labels.ndim != 1 or len(self.frame_labels) < 1:
            raise ValidationError(f"{self.video_id}: need at least one frame label")
        if len(self.frame_labels) != self.features.shape[0]:
            raise ValidationError(
                f"{self.video_id}: {len(self.frame_labels)} labels but {self.features.shape[0]} feature rows"
            )

    def __len__(self):
        return len(self.frame_labels)

    def check_vocab(self, vocab: ActionVocab):
        bad = self.frame_labels[(self.frame_labels < 0) | (self.frame_labels >= len(vocab))]
        if bad.size:
            raise ValidationError(f"{self.video_id}: label id {int(bad[0])} not in vocabulary")


@dataclass
class SynthConfig:
    """Parameters of the synthetic instructional-video generator.

    ``templates`` optionally pins the activity action sequences (lists of
    action ids); otherwise ``n_activities`` sequences are drawn.
    """

    n_actions: int = 6
    n_activities: int = 3
    actions_per_activity: Tuple[int, int] = (3, 4)
    mean_segment_len: int = 12
    feature_dim: int = 32
    noise_sigma: float = 0.05
    seed: int = 0
    n_videos: int = 30
    templates: Optional[List[List[int]]] = None

    def validate(self):
        lo, hi = self.actions_per_activity
        for name in ("n_actions", "n_activities", "mean_segment_len", "feature_dim", "n_videos"):
            if getattr(self, name) < 1:
                raise ValidationError(f"SynthConfig.{name} must be >= 1")
        if not 1 <= lo <= hi:
            raise ValidationError(f"bad actions_per_activity range {self.actions_per_activity}")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be >= 0")
        if self.templates is not None:
            for t in self.templates:
                if not t or any(not 0 <= a < self.n_actions for a in t):
                    raise ValidationError(f"bad activity template {t}")
        elif hi > self.n_actions:
            raise ValidationError("actions_per_activity exceeds n_actions")


# ---------------------------------------------------------------- text files


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read().splitlines()


def load_mapping(path, label_map: Optional[Dict[str, str]] = None) -> ActionVocab:
    entries = []
    seen = set()
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.strip().split(" ", 1)
        if len(parts) != 2 or not parts[1].strip():
            raise ParseError("expected '<id> <label>'", path, lineno)
        try:
            idx = int(parts[0])
        except ValueError:
            raise ParseError(f"non-integer id {parts[0]!r}", path, lineno) from None
        if idx in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate action id {idx}")
        seen.add(idx)
        entries.append((idx, parts[1].strip()))
    if not entries:
        raise ValidationError(f"{path}: empty action vocabulary")
    return ActionVocab(entries, dict(label_map or {}))


def write_mapping(path, vocab: ActionVocab):
    with open(path, "w", encoding="utf-8") as fh:
        for idx, name in vocab.entries:
            fh.write(f"{idx} {name}\n")


def load_framewise_labels(path, vocab: ActionVocab) -> List[int]:
    ids = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        token = line.strip()
        try:
            ids.append(vocab.id_of(token))
        except KeyError:
            raise ParseError(f"unknown label {token!r}", path, lineno) from None
    return ids


def write_framewise_labels(path, labels: Iterable[int], vocab: ActionVocab):
    with open(path, "w", encoding="utf-8") as fh:
        for a in labels:
            fh.write(vocab.name_of(int(a)) + "\n")


# ------------------------------------------------------------------ BRPF


def write_feature_file(path, features) -> None:
    arr = np.asarray(features, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError(f"feature matrix must be 2-D, got shape {arr.shape}")
    T, F = arr.shape
    with open(path, "wb") as fh:
        fh.write(_BRPF_HEADER.pack(BRPF_MAGIC, BRPF_VERSION, T, F))
        fh.write(np.ascontiguousarray(arr).tobytes())


def decode_feature_bytes(buf: bytes, source="<bytes>") -> np.ndarray:
    if len(buf) < _BRPF_HEADER.size:
        raise LengthError(f"{source}: file shorter than BRPF header")
    magic, version, T, F = _BRPF_HEADER.unpack_from(buf)
    if magic != BRPF_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r}")
    if version != BRPF_VERSION:
        raise FormatError(f"{source}: unsupported BRPF version {version}")
    expected = T * F * 4
    payload = buf[_BRPF_HEADER.size:]
    if len(payload) != expected:
        raise LengthError(f"{source}: payload has {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(T, F).astype(np.float32)


def load_feature_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_feature_bytes(fh.read(), source=path)


# ------------------------------------------------------------ directories


def read_bundle(path) -> List[str]:
    out = []
    for line in _read_lines(path):
        line = line.strip()
        if line:
            out.append(line[:-4] if line.endswith(".txt") else line)
    return out


def load_activities(path) -> Dict[str, str]:
    out = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.strip().split(" ", 1)
        if len(parts) != 2:
            raise ParseError("expected '<video_id> <activity>'", path, lineno)
        out[parts[0]] = parts[1].strip()
    return out


def load_dataset(root, vocab: Optional[ActionVocab] = None, video_ids: Optional[Sequence[str]] = None,
                 fps: float = 15.0):
    """Load every (or the listed) video under ``root``; returns ``(vocab, videos)``."""
    root = Path(root)
    if vocab is None:
        vocab = load_mapping(root / "mapping.txt")
    gt_dir = root / "groundTruth"
    if video_ids is None:
        video_ids = sorted(p.stem for p in gt_dir.glob("*.txt"))
    activities = {}
    if (root / "activity.txt").exists():
        activities = load_activities(root / "activity.txt")
    videos = []
    for vid in video_ids:
        gt_path = gt_dir / f"{vid}.txt"
        if not gt_path.exists():
            raise FileNotFoundError(f"no ground truth for video {vid!r} at {gt_path}")
        labels = load_framewise_labels(gt_path, vocab)
        feats = load_feature_file(root / "features" / f"{vid}.brpf")
        videos.append(AnnotatedVideo(vid, labels, feats, fps, activities.get(vid)))
    return vocab, videos


def write_dataset(root, vocab: ActionVocab, videos: Sequence[AnnotatedVideo], splits=None):
    """Write a dataset directory; ``splits`` maps bundle name to video ids."""
    root = Path(root)
    (root / "groundTruth").mkdir(parents=True, exist_ok=True)
    (root / "features").mkdir(parents=True, exist_ok=True)
    write_mapping(root / "mapping.txt", vocab)
    for v in videos:
        write_framewise_labels(root / "groundTruth" / f"{v.video_id}.txt", v.frame_labels, vocab)
        write_feature_file(root / "features" / f"{v.video_id}.brpf", v.features)
    if any(v.activity_label for v in videos):
        with open(root / "activity.txt", "w", encoding="utf-8") as fh:
            for v in videos:
                if v.activity_label:
                    fh.write(f"{v.video_id} {v.activity_label}\n")
    if splits:
        (root / "splits").mkdir(exist_ok=True)
        for name, ids in splits.items():
            with open(root / "splits" / f"{name}.bundle", "w", encoding="utf-8") as fh:
                fh.writelines(f"{vid}.txt\n" for vid in ids)


# -------------------------------------------------------------- synthetic

_VERBS = ["take", "pour", "stir", "cut", "open", "close", "put", "spread", "fold", "shake",
          "scoop", "peel", "crack", "fry", "wash", "mix", "press", "slice", "grate", "toss"]
_NOUNS = ["bread", "water", "cheese", "tomato", "cup", "lid", "butter", "egg", "milk", "sugar",
          "honey", "jam", "onion", "lettuce", "pepper", "salt", "oil", "tea", "coffee", "spoon"]
_DISHES = ["salad", "tea", "coffee", "sandwich", "pancake", "omelette", "cereal", "juice",
           "toast", "porridge", "soup", "noodles", "smoothie", "waffles", "burrito", "pasta"]


def synthetic_verb_phrase(action_id: int) -> str:
    n = len(_VERBS)
    q, r = divmod(action_id, n)
    if q >= len(_NOUNS):
        return f"{_VERBS[r]} {_NOUNS[(r + q) % len(_NOUNS)]} {q}"
    return f"{_VERBS[r]} {_NOUNS[(r + q) % len(_NOUNS)]}"


def synthetic_activity_name(index: int) -> str:
    if index < len(_DISHES):
        return _DISHES[index]
    return f"{_DISHES[index % len(_DISHES)]} {index // len(_DISHES)}"


def _prototypes(rng, n_actions, dim):
    protos = rng.standard_normal((n_actions, dim))
    if dim >= n_actions:
        q, _ = np.linalg.qr(protos.T)
        protos = q.T[:n_actions]
    else:
        protos /= np.linalg.norm(protos, axis=1, keepdims=True)
    return protos


def _draw_templates(rng, cfg: SynthConfig):
    lo, hi = cfg.actions_per_activity
    templates = []
    tries = 0
    while len(templates) < cfg.n_activities:
        k = int(rng.integers(lo, hi + 1))
        t = [int(a) for a in rng.permutation(cfg.n_actions)[:k]]
        if t not in templates:
            templates.append(t)
        tries += 1
        if tries > 1000 * cfg.n_activities:
            raise ValidationError("cannot draw enough distinct activity templates from this config")
    return templates


def generate_synthetic(cfg: SynthConfig):
    """Draw a reproducible dataset of prototype-plus-noise videos.

    Each action owns a fixed prototype vector (orthonormal when
    ``feature_dim >= n_actions``). Video ``i`` follows activity template
    ``i % n_activities``; segment lengths are uniform in
    ``[mean/2, 3*mean/2]``. Returns ``(vocab, videos)``.
    """
    rng, protos, templates = _synth_setup(cfg)
    vocab = ActionVocab([(a, synthetic_verb_phrase(a)) for a in range(cfg.n_actions)])
    m = cfg.mean_segment_len
    seg_lo, seg_hi = max(1, m - m // 2), m + m // 2
    videos = []
    for i in range(cfg.n_videos):
        act = i % len(templates)
        lengths = rng.integers(seg_lo, seg_hi + 1, size=len(templates[act]))
        labels = np.repeat(np.asarray(templates[act], dtype=np.int64), lengths)
        noise = rng.standard_normal((len(labels), cfg.feature_dim)) * cfg.noise_sigma
        feats = (protos[labels] + noise) if cfg.noise_sigma > 0 else protos[labels]
        videos.append(AnnotatedVideo(f"synth_{i:03d}", labels, feats.astype(np.float32),
                                     fps=15.0, activity_label=synthetic_activity_name(act)))
    return vocab, videos


def _synth_setup(cfg: SynthConfig):
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    protos = _prototypes(rng, cfg.n_actions, cfg.feature_dim)
    if cfg.templates is not None:
        templates = [list(t) for t in cfg.templates]
    else:
        templates = _draw_templates(rng, cfg)
    return rng, protos, templates


def synthetic_prototypes(cfg: SynthConfig) -> np.ndarray:
    """The action prototype matrix used by :func:`generate_synthetic` for ``cfg``."""
    return _synth_setup(cfg)[1]


def synthetic_templates(cfg: SynthConfig) -> List[List[int]]:
    """Activity action sequences; template ``j`` is named ``synthetic_activity_name(j)``."""
    return _synth_setup(cfg)[2]
