"""Versioned binary checkpoint container.

Layout: ``b"BRPC"``, u32 version, u32 header length, a UTF-8 JSON header,
then the raw tensor payload. Tensors are little-endian and row-major (the
BRPF convention); the header lists each tensor's name, dtype, shape and
byte offset.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch

from .encoders import BridgePromptModel, ModelConfig, Tokenizer
from .exceptions import FormatError, LengthError

MAGIC = b"BRPC"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8", torch.int64: "<i8"}
_TORCH_DTYPES = {v: k for k, v in _DTYPES.items()}


def _tensor_to_bytes(t: torch.Tensor):
    t = t.detach().cpu().contiguous()
    if t.dtype not in _DTYPES:
        raise TypeError(f"unsupported tensor dtype {t.dtype}")
    return _DTYPES[t.dtype], np.ascontiguousarray(t.numpy().astype(_DTYPES[t.dtype])).tobytes()


def _optimizer_tensors(model, optimizer):
    """Flatten AdamW state into named tensors keyed by parameter name."""
    names = {id(p): n for n, p in model.named_parameters()}
    tensors, scalars = {}, {}
    for group in optimizer.param_groups:
        for p in group["params"]:
            st = optimizer.state.get(p)
            if not st:
                continue
            name = names[id(p)]
            for key, val in st.items():
                if torch.is_tensor(val):
                    tensors[f"optim/{name}/{key}"] = val
                else:
                    scalars[f"{name}/{key}"] = val
    groups = [{k: v for k, v in g.items() if k != "params"} for g in optimizer.param_groups]
    return tensors, {"groups": groups, "scalars": scalars}


def save_checkpoint(path, model: BridgePromptModel, optimizer=None, train_state=None, extra=None):
    tensors = dict(model.state_dict())
    optim_meta = None
    if optimizer is not None:
        opt_tensors, optim_meta = _optimizer_tensors(model, optimizer)
        tensors.update(opt_tensors)
    index, chunks, offset = [], [], 0
    for name, t in tensors.items():
        dtype, raw = _tensor_to_bytes(t)
        index.append({"name": name, "dtype": dtype, "shape": list(t.shape), "offset": offset,
                      "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "model_config": model.cfg.to_dict(),
        "tokenizer": {"words": model.tokenizer.itos, "max_len": model.tokenizer.max_len},
        "tensors": index,
        "optimizer": optim_meta,
        "train_state": train_state,
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(hbytes)))
        fh.write(hbytes)
        for raw in chunks:
            fh.write(raw)
    tmp.replace(path)


class Checkpoint:
    """Decoded checkpoint: model plus optional trainer/optimizer state."""

    def __init__(self, model, header, tensors):
        self.model = model
        self.header = header
        self._tensors = tensors

    @property
    def train_state(self):
        return self.header.get("train_state")

    @property
    def extra(self):
        return self.header.get("extra", {})

    def restore_optimizer(self, optimizer):
        meta = self.header.get("optimizer")
        if meta is None:
            return False
        params = dict(self.model.named_parameters())
        for g, saved in zip(optimizer.param_groups, meta["groups"]):
            g.update(saved)
        for name, p in params.items():
            st = {}
            for key in ("step", "exp_avg", "exp_avg_sq"):
                t = self._tensors.get(f"optim/{name}/{key}")
                if t is not None:
                    st[key] = t.clone()
            for skey, val in meta["scalars"].items():
                pname, _, key = skey.rpartition("/")
                if pname == name:
                    st[key] = val
            if st:
                optimizer.state[p] = st
        return True


def load_checkpoint(path) -> Checkpoint:
    try:
        buf = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read checkpoint ({exc})") from exc
    if len(buf) < _PREFIX.size:
        raise LengthError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    try:
        header = json.loads(buf[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: corrupt checkpoint header") from exc
    payload = buf[_PREFIX.size + hlen:]
    tensors = {}
    for entry in header["tensors"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(payload):
            raise LengthError(f"{path}: tensor {entry['name']} extends past end of file")
        arr = np.frombuffer(payload[start:start + n], dtype=entry["dtype"]).reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(arr.copy()).to(_TORCH_DTYPES[entry["dtype"]])
    cfg = ModelConfig(**header["model_config"])
    tok = Tokenizer(header["tokenizer"]["words"], header["tokenizer"]["max_len"])
    model = BridgePromptModel(cfg, tok)
    state = {k: v for k, v in tensors.items() if not k.startswith("optim/")}
    if "log_logit_scale" in state and state["log_logit_scale"].dtype == torch.float64:
        model.double()
    try:
        model.load_state_dict(state)
    except RuntimeError as exc:
        raise FormatError(f"{path}: parameters do not match the stored config ({exc})") from exc
    return Checkpoint(model, header, tensors)
