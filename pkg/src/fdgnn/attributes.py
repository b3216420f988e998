"""Attribute encoding and the recursive, linear attribute embedding.

Raw attributes are mapped to a fixed-size encoding by a pluggable encoder
(affine by default), then folded into the entity's running attribute
embedding ``u_t = M0 @ [u_prev; z_t] + b``.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence

import torch

from .params import DTYPE

Encoder = Callable[[torch.Tensor], torch.Tensor]


def as_vector(x: Sequence[float] | torch.Tensor) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x.to(DTYPE)
    return torch.tensor(list(x), dtype=DTYPE)


def encode_raw(attr, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    attr = as_vector(attr)
    if attr.shape != (weight.shape[1],):
        raise ValueError(f"attribute has dim {tuple(attr.shape)}, encoder expects {weight.shape[1]}")
    return weight @ attr + bias


def embed_attribute(
    prev: torch.Tensor, raw: torch.Tensor, M0: torch.Tensor, b: torch.Tensor
) -> torch.Tensor:
    ub = b.shape[0]
    if prev.shape != (ub,) or raw.shape != (M0.shape[1] - ub,):
        raise ValueError(
            f"shape mismatch: prev {tuple(prev.shape)}, raw {tuple(raw.shape)}, M0 {tuple(M0.shape)}"
        )
    return M0 @ torch.cat([prev, raw]) + b


class AttributeCodec:
    """Encoder plus recursion for one attribute space ("node" or "edge").

    ``encoder`` may replace the default affine map; it receives the raw
    attribute vector and must return a vector of the configured raw_dim.
    """

    def __init__(self, kind: str, encoder: Encoder | None = None):
        if kind not in ("node", "edge"):
            raise ValueError(kind)
        self.kind = kind
        self.encoder = encoder

    def encode(self, attr, params: Mapping[str, torch.Tensor]) -> torch.Tensor:
        if self.encoder is not None:
            return self.encoder(as_vector(attr))
        p = f"attr.{self.kind}.enc."
        return encode_raw(attr, params[p + "W"], params[p + "b"])

    def embed(self, prev: torch.Tensor | None, attr, params: Mapping[str, torch.Tensor]) -> torch.Tensor:
        p = f"attr.{self.kind}."
        b = params[p + "b"]
        if prev is None:
            prev = torch.zeros_like(b)
        return embed_attribute(prev, self.encode(attr, params), params[p + "M0"], b)
