"""Model configuration and the flat named-tensor parameter registry."""

from __future__ import annotations

import json
import struct
from collections.abc import Iterator, Mapping
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

DTYPE = torch.float64
MAGIC = b"FDGNN1"


@dataclass(frozen=True)
class ModelConfig:
    node_attr_dim: int
    edge_attr_dim: int
    embed_dim: int = 8
    attr_embed_dim: int = 8
    raw_dim: int = 8
    bptt_window: int = 20
    edge_attr_factor: bool = False
    similarity: str = "cosine"

    def __post_init__(self):
        for name in ("embed_dim", "attr_embed_dim", "raw_dim", "bptt_window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.node_attr_dim < 0 or self.edge_attr_dim < 0:
            raise ValueError("attribute dimensions must be non-negative")
        if self.similarity != "cosine":
            raise ValueError(f"unknown similarity {self.similarity!r}")

    @property
    def needs_lift(self) -> bool:
        return self.attr_embed_dim != self.embed_dim


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, ub, zb = cfg.embed_dim, cfg.attr_embed_dim, cfg.raw_dim
    shapes: dict[str, tuple[int, ...]] = {}
    for kind, adim in (("node", cfg.node_attr_dim), ("edge", cfg.edge_attr_dim)):
        shapes[f"attr.{kind}.enc.W"] = (zb, adim)
        shapes[f"attr.{kind}.enc.b"] = (zb,)
        shapes[f"attr.{kind}.M0"] = (ub, ub + zb)
        shapes[f"attr.{kind}.b"] = (ub,)
    shapes.update(
        {
            "emb.node.M1": (d, d),
            "emb.node.M2": (d, d),
            "emb.node.m3": (d,),
            "emb.node.M4": (d, ub),
            "emb.node.m5": (),
            "emb.node.m6": (),
            "emb.edge.M7": (d, d),
            "emb.edge.M8": (d, d),
            "emb.edge.m9": (d,),
            "emb.edge.M10": (d, ub),
            "emb.edge.m11": (),
            "emb.edge.m12": (),
            "emb.edge.m13": (),
            "emb.edge.m14": (),
            "emb.init.Mp": (d, d),
            "emb.init.Mpp": (d, ub),
        }
    )
    if cfg.needs_lift:
        shapes["emb.node.lift"] = (d, ub)
        shapes["emb.edge.lift"] = (d, ub)
    shapes.update(
        {
            "int.W0": (d,),
            "int.W1": (d,),
            "int.W2": (3 * d,),
            "int.W3": (3 * d,),
            "int.W4": (2 * d,),
            "int.W5": (3 * d,),
            "int.Wh5": (2 * d,),
        }
    )
    # psi_k is stored as log(psi_k) so SGD stays unconstrained
    for k in range(6):
        shapes[f"int.psi{k}"] = ()
    return shapes


class ModelParams(Mapping[str, torch.Tensor]):
    """Named float64 leaf tensors, iterated in sorted-name order."""

    def __init__(self, tensors: Mapping[str, torch.Tensor]):
        self._t: dict[str, torch.Tensor] = {}
        for name in sorted(tensors):
            t = torch.as_tensor(tensors[name], dtype=DTYPE).detach().clone()
            self._t[name] = t.requires_grad_(True)

    @classmethod
    def initialize(cls, cfg: ModelConfig, seed: int = 0, scale: float = 0.1) -> ModelParams:
        rng = np.random.default_rng(seed)
        tensors = {}
        for name, shape in sorted(param_shapes(cfg).items()):
            if name.startswith("int.psi"):
                tensors[name] = torch.zeros(shape, dtype=DTYPE)
            else:
                tensors[name] = torch.from_numpy(rng.uniform(-scale, scale, size=shape))
        return cls(tensors)

    @classmethod
    def zeros(cls, cfg: ModelConfig) -> ModelParams:
        return cls({n: torch.zeros(s, dtype=DTYPE) for n, s in param_shapes(cfg).items()})

    def __getitem__(self, name: str) -> torch.Tensor:
        return self._t[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._t)

    def __len__(self) -> int:
        return len(self._t)

    def psi(self, k: int) -> torch.Tensor:
        return torch.exp(self._t[f"int.psi{k}"])

    def set(self, name: str, value) -> None:
        if name not in self._t:
            raise KeyError(name)
        t = torch.as_tensor(value, dtype=DTYPE).detach().clone()
        if t.shape != self._t[name].shape:
            raise ValueError(f"{name}: shape {tuple(t.shape)} != {tuple(self._t[name].shape)}")
        self._t[name] = t.requires_grad_(True)

    def clone(self) -> ModelParams:
        return ModelParams(self._t)

    def to_numpy(self) -> dict[str, np.ndarray]:
        return {n: t.detach().numpy().copy() for n, t in self._t.items()}

    def tensors(self) -> list[torch.Tensor]:
        return list(self._t.values())

    def equal(self, other: ModelParams) -> bool:
        return list(self) == list(other) and all(
            torch.equal(self[n], other[n]) for n in self
        )


def infer_config(params: Mapping[str, torch.Tensor], **overrides) -> ModelConfig:
    zb, adim_n = params["attr.node.enc.W"].shape
    adim_e = params["attr.edge.enc.W"].shape[1]
    kw = dict(
        node_attr_dim=adim_n,
        edge_attr_dim=adim_e,
        embed_dim=params["emb.node.M1"].shape[0],
        attr_embed_dim=params["attr.node.b"].shape[0],
        raw_dim=zb,
    )
    kw.update(overrides)
    return ModelConfig(**kw)


def save_model(path: str | Path, params: ModelParams, cfg: ModelConfig) -> None:
    """Binary layout: magic, JSON config line, tensor count, then for each
    tensor its name, shape and row-major little-endian float64 values."""
    meta = json.dumps(asdict(cfg), sort_keys=True).encode()
    chunks = [MAGIC, b"\n", struct.pack("<I", len(meta)), meta, struct.pack("<I", len(params))]
    for name in sorted(params):
        # np.ascontiguousarray would promote 0-d tensors to shape (1,)
        arr = np.asarray(params[name].detach().numpy(), dtype="<f8", order="C")
        bname = name.encode()
        chunks.append(struct.pack("<H", len(bname)) + bname)
        chunks.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_model(path: str | Path) -> tuple[ModelParams, ModelConfig]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC + b"\n"):
        raise ValueError(f"{path}: not an FDGNN1 model file")
    pos = len(MAGIC) + 1

    def take(fmt: str):
        nonlocal pos
        vals = struct.unpack_from(fmt, data, pos)
        pos += struct.calcsize(fmt)
        return vals

    try:
        (mlen,) = take("<I")
        cfg = ModelConfig(**json.loads(data[pos : pos + mlen]))
        pos += mlen
        (count,) = take("<I")
        tensors = {}
        for _ in range(count):
            (nlen,) = take("<H")
            name = data[pos : pos + nlen].decode()
            pos += nlen
            (ndim,) = take("<B")
            shape = take(f"<{ndim}Q") if ndim else ()
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape)
            pos += 8 * n
            tensors[name] = torch.from_numpy(arr.astype(np.float64))
    except (struct.error, ValueError, TypeError) as exc:
        raise ValueError(f"{path}: corrupt model file ({exc})") from exc
    expected = param_shapes(cfg)
    if set(tensors) != set(expected):
        raise ValueError(f"{path}: tensor names do not match config")
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != shape:
            raise ValueError(f"{path}: {name} has shape {tuple(tensors[name].shape)}, expected {shape}")
    return ModelParams(tensors), cfg
