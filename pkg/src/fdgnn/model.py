"""Stream-driven model state: ledger, snapshot and per-entity embeddings.

``FDGNN`` replays events one by one. Between events every stored embedding
is held fixed, so intensities are piecewise constant in time and always
evaluated against the state left by the most recent event.
"""

from __future__ import annotations

from collections.abc import Iterable

import torch

from .attention import neighborhood_attention, similarity, similarity_rows
from .attributes import AttributeCodec, Encoder
from .embedding import (
    EntityRecord,
    aggregate_neighbors,
    edge_local_prop,
    edge_update,
    initial_embedding,
    node_update,
)
from .events import (
    Activity,
    ActivityLedger,
    Edge,
    EntityId,
    Event,
    GraphSnapshot,
    StreamHeader,
    apply_event,
    edge_id,
    initial_state,
    is_edge,
)
from .params import DTYPE, ModelConfig, ModelParams


class FDGNN:
    def __init__(
        self,
        header: StreamHeader,
        params: ModelParams,
        cfg: ModelConfig,
        node_encoder: Encoder | None = None,
        edge_encoder: Encoder | None = None,
    ):
        if (cfg.node_attr_dim, cfg.edge_attr_dim) != (header.node_attr_dim, header.edge_attr_dim):
            raise ValueError("model attribute dims do not match stream header")
        self.header = header
        self.params = params
        self.cfg = cfg
        self.node_codec = AttributeCodec("node", node_encoder)
        self.edge_codec = AttributeCodec("edge", edge_encoder)
        self.ledger: ActivityLedger
        self.snapshot: GraphSnapshot
        self.ledger, self.snapshot = initial_state(header)
        self.nodes: dict[int, EntityRecord] = {}
        self.edges: dict[Edge, EntityRecord] = {}
        self.neighbors: dict[int, set[int]] = {}
        self.t = header.t0
        self.truncations = 0
        for v, a in header.g0_nodes:
            self.nodes[v] = self._new_record(Activity.ACTIVE, a, header.t0, edge=None)
        for e, a in header.g0_edges:
            self._link(e)
            self.edges[e] = self._new_record(Activity.ACTIVE, a, header.t0, edge=e)

    # -- queries ------------------------------------------------------------

    def status(self, x: EntityId) -> Activity:
        return self.ledger.current(x)

    def activity(self, x: EntityId, t: float) -> Activity:
        return self.ledger.activity(x, t)

    def zero_attr(self, edge: bool) -> tuple[float, ...]:
        return (0.0,) * (self.header.edge_attr_dim if edge else self.header.node_attr_dim)

    def candidate_node(self, v: int, attr=None) -> torch.Tensor:
        """Embedding used to score ``v``: stored if seen, else initial."""
        rec = self.nodes.get(v)
        if rec is not None:
            return rec.z
        u = self.node_codec.embed(None, attr if attr is not None else self.zero_attr(False), self.params)
        return initial_embedding(torch.zeros(self.cfg.embed_dim, dtype=DTYPE), u, self.params)

    def candidate_edge(self, e: Edge, attr=None) -> torch.Tensor:
        rec = self.edges.get(e)
        if rec is not None:
            return rec.z
        u = self.edge_codec.embed(None, attr if attr is not None else self.zero_attr(True), self.params)
        return initial_embedding(self.edge_hloc(e), u, self.params)

    def edge_hloc(self, e: Edge) -> torch.Tensor:
        a, b = self.nodes.get(e[0]), self.nodes.get(e[1])
        d = self.cfg.embed_dim
        if a is None and b is None:
            return torch.zeros(d, dtype=DTYPE)
        zero_u = torch.zeros(self.cfg.attr_embed_dim, dtype=DTYPE)
        zero_z = torch.zeros(d, dtype=DTYPE)
        zero_p = torch.zeros((), dtype=DTYPE)
        # a missing endpoint contributes nothing
        za, ua, pa = (a.z, a.u, a.p) if a else (zero_z, zero_u, zero_p)
        zb, ub, pb = (b.z, b.u, b.p) if b else (zero_z, zero_u, zero_p)
        return edge_local_prop(za, zb, ua, ub, pa, pb, self.params)

    def node_hloc(self, v: int, u_v: torch.Tensor | None = None, xi_v: float | None = None) -> torch.Tensor:
        nbrs = sorted(self.neighbors.get(v, ()))
        if u_v is None:
            u_v = self.nodes[v].u
        if xi_v is None:
            xi_v = self.status(v).value01
        if not nbrs:
            return torch.zeros(self.cfg.embed_dim, dtype=DTYPE)
        recs = [self.nodes[w] for w in nbrs]
        z = torch.stack([r.z for r in recs])
        u = torch.stack([r.u for r in recs])
        xi = torch.tensor(
            [xi_v * self.status(w).value01 * self.status(edge_id(v, w)).value01 for w in nbrs],
            dtype=DTYPE,
        )
        tau = similarity_rows(u_v.expand_as(u), u)
        if self.cfg.edge_attr_factor:
            tau = tau * self._edge_attr_factor(v, nbrs)
        q = neighborhood_attention(xi * tau)
        return aggregate_neighbors(z, u, q, self.params)

    def _edge_attr_factor(self, v: int, nbrs: list[int]) -> torch.Tensor:
        recs = [self.edges.get(edge_id(v, w)) for w in nbrs]
        present = [r.u for r in recs if r is not None]
        if not present:
            return torch.ones(len(nbrs), dtype=DTYPE)
        mean = torch.stack(present).mean(dim=0)
        return torch.stack(
            [similarity(r.u, mean) if r is not None else torch.ones((), dtype=DTYPE) for r in recs]
        )

    def neighborhood_weights(self, v: int) -> dict[int, float]:
        nbrs = sorted(self.neighbors.get(v, ()))
        if not nbrs:
            return {}
        u_v = self.nodes[v].u
        xi_v = self.status(v).value01
        u = torch.stack([self.nodes[w].u for w in nbrs])
        xi = torch.tensor(
            [xi_v * self.status(w).value01 * self.status(edge_id(v, w)).value01 for w in nbrs],
            dtype=DTYPE,
        )
        tau = similarity_rows(u_v.expand_as(u), u)
        if self.cfg.edge_attr_factor:
            tau = tau * self._edge_attr_factor(v, nbrs)
        q = neighborhood_attention(xi * tau)
        return {w: float(x) for w, x in zip(nbrs, q.detach())}

    def embedding(self, x: EntityId) -> torch.Tensor:
        return self.candidate_edge(x) if is_edge(x) else self.candidate_node(x)

    # -- updates ------------------------------------------------------------

    def _link(self, e: Edge) -> None:
        self.neighbors.setdefault(e[0], set()).add(e[1])
        self.neighbors.setdefault(e[1], set()).add(e[0])

    def _new_record(self, status: Activity, attr, t: float, edge: Edge | None) -> EntityRecord:
        codec = self.edge_codec if edge else self.node_codec
        u = codec.embed(None, attr, self.params)
        h = self.edge_hloc(edge) if edge else torch.zeros(self.cfg.embed_dim, dtype=DTYPE)
        z = initial_embedding(h, u, self.params)
        rec = EntityRecord(status=status, z=z, z_prev=z, u=u, t_last=t, p=None, attr=tuple(attr))
        # no previous activity: exponent is 0 and the weight is 1
        rec.p = rec.acc.push(0.0)
        rec.updates = 1
        return rec

    def _step(self, rec: EntityRecord, status: Activity, attr, t: float, x: EntityId):
        """Compute the recursive update of ``rec`` without committing it."""
        if rec.depth >= self.cfg.bptt_window:
            rec.detach()
            self.truncations += 1
        edge = is_edge(x)
        codec = self.edge_codec if edge else self.node_codec
        u_new = rec.u if attr is None else codec.embed(rec.u, attr, self.params)
        tau = similarity(u_new, rec.u)
        p = rec.acc.push(status.value01 * rec.xi * tau)
        dt = t - rec.t_last
        if edge:
            z = edge_update(self.edge_hloc(x), rec.z, p, dt, u_new, self.params)
        else:
            z = node_update(self.node_hloc(x, u_new, status.value01), rec.z, p, dt, u_new, self.params)
        return u_new, p, z

    @staticmethod
    def _commit(rec: EntityRecord, status: Activity, attr, t: float, update) -> None:
        u_new, p, z = update
        rec.status = status
        rec.u, rec.p = u_new, p
        rec.z_prev, rec.z = rec.z, z
        rec.t_last = t
        rec.depth += 1
        rec.updates += 1
        if attr is not None:
            rec.attr = tuple(attr)

    def observe(self, event: Event) -> list[Edge]:
        """Apply ``event`` to the ledger and update affected embeddings.

        Returns the edges deleted by cascade.
        """
        cascaded = apply_event(self.header, self.ledger, self.snapshot, event)
        x, t = event.subject, event.t
        status = self.status(x)
        if is_edge(x):
            first = x not in self.edges
            if first:
                self.edges[x] = self._new_record(status, event.attr, t, edge=x)
                self._link(x)
            else:
                rec = self.edges[x]
                self._commit(rec, status, event.attr, t, self._step(rec, status, event.attr, t, x))
            # both endpoints see the pre-event state of each other
            ends = [(w, self.nodes[w], self.status(w)) for w in x]
            pending = [self._step(rec, s, None, t, w) for w, rec, s in ends]
            for (w, rec, s), upd in zip(ends, pending):
                self._commit(rec, s, None, t, upd)
        else:
            rec = self.nodes.get(x)
            if rec is None:
                self.nodes[x] = self._new_record(status, event.attr, t, edge=None)
            else:
                self._commit(rec, status, event.attr, t, self._step(rec, status, event.attr, t, x))
            for e in cascaded:
                self.edges[e].status = Activity.INACTIVE
        self.t = t
        return cascaded

    def replay(self, events: Iterable[Event]) -> FDGNN:
        for ev in events:
            self.observe(ev)
        return self

    def detach_state(self) -> None:
        for rec in self.nodes.values():
            rec.detach()
        for rec in self.edges.values():
            rec.detach()

    def set_params(self, params: ModelParams) -> None:
        """Swap in new parameters; stored state is kept as constants."""
        self.params = params
        self.detach_state()

    def max_depth(self) -> int:
        recs = list(self.nodes.values()) + list(self.edges.values())
        return max((r.depth for r in recs), default=0)
