"""Recursive node and edge embeddings.

Node update::

    Z_v(t) = sigmoid(M1 h_loc(v) + M2 Z_v(prev) p_v + m3 (t - t_prev) + M4 u_v)

Edge update is the same shape with M7..M10 and an edge-specific ``h_loc``
built from the two endpoints. Entities seen for the first time get the
initial embedding ``sigmoid(Mp h_loc + Mpp u)``.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import torch

from .attention import SelfAttentionAccumulator
from .events import Activity
from .params import DTYPE

Params = Mapping[str, torch.Tensor]


@dataclass
class EntityRecord:
    """Latest embedding state of one node or edge."""

    status: Activity
    z: torch.Tensor
    z_prev: torch.Tensor
    u: torch.Tensor
    t_last: float
    p: torch.Tensor
    attr: tuple[float, ...]
    acc: SelfAttentionAccumulator = field(default_factory=SelfAttentionAccumulator)
    depth: int = 0
    updates: int = 0

    @property
    def xi(self) -> float:
        return self.status.value01

    def detach(self) -> None:
        self.z = self.z.detach()
        self.z_prev = self.z_prev.detach()
        self.u = self.u.detach()
        self.p = self.p.detach()
        self.acc.detach()
        self.depth = 0


def _lift(params: Params, scheme: str, u: torch.Tensor) -> torch.Tensor:
    name = f"emb.{scheme}.lift"
    if name in params:
        return u @ params[name].T if u.dim() == 2 else params[name] @ u
    return u


def aggregate_neighbors(
    z: torch.Tensor, u: torch.Tensor, q: torch.Tensor, params: Params
) -> torch.Tensor:
    """Attention-weighted sum over neighbor rows of ``m5 z + m6 lift(u)``."""
    if z.shape[0] == 0:
        return torch.zeros(params["emb.node.M1"].shape[0], dtype=DTYPE)
    rows = params["emb.node.m5"] * z + params["emb.node.m6"] * _lift(params, "node", u)
    return q @ rows


def edge_local_prop(
    z_u: torch.Tensor,
    z_v: torch.Tensor,
    u_u: torch.Tensor,
    u_v: torch.Tensor,
    p_u: torch.Tensor,
    p_v: torch.Tensor,
    params: Params,
) -> torch.Tensor:
    """Edge neighborhood term from the two endpoints.

    Works on single vectors or on stacked rows (pairs along dim 0, with
    ``p_u``/``p_v`` of shape (n, 1)).
    """
    lu = _lift(params, "edge", u_u)
    lv = _lift(params, "edge", u_v)
    return (
        params["emb.edge.m11"] * z_u * p_u
        + params["emb.edge.m12"] * z_v * p_v
        + params["emb.edge.m13"] * lu * p_u
        + params["emb.edge.m14"] * lv * p_v
    )


def node_update(
    h_loc: torch.Tensor,
    z_prev: torch.Tensor,
    p: torch.Tensor,
    dt: float,
    u: torch.Tensor,
    params: Params,
) -> torch.Tensor:
    pre = (
        params["emb.node.M1"] @ h_loc
        + (params["emb.node.M2"] @ z_prev) * p
        + params["emb.node.m3"] * dt
        + params["emb.node.M4"] @ u
    )
    return torch.sigmoid(pre)


def edge_update(
    h_loc: torch.Tensor,
    z_prev: torch.Tensor,
    p: torch.Tensor,
    dt: float,
    u: torch.Tensor,
    params: Params,
) -> torch.Tensor:
    pre = (
        params["emb.edge.M7"] @ h_loc
        + (params["emb.edge.M8"] @ z_prev) * p
        + params["emb.edge.m9"] * dt
        + params["emb.edge.M10"] @ u
    )
    return torch.sigmoid(pre)


def initial_embedding(h_loc: torch.Tensor, u: torch.Tensor, params: Params) -> torch.Tensor:
    """Embedding for an entity with no activity history; rows allowed."""
    Mp, Mpp = params["emb.init.Mp"], params["emb.init.Mpp"]
    if h_loc.dim() == 2:
        return torch.sigmoid(h_loc @ Mp.T + u @ Mpp.T)
    return torch.sigmoid(Mp @ h_loc + Mpp @ u)
