"""Conditional intensities of the six event kinds.

Each kind has a case table over the activity of its subject (and, for edge
kinds, of both endpoints). On admissible branches the intensity is a scaled
softplus of a linear score of the relevant embeddings; on impossible
branches it is exactly 0. Deleting an active edge whose endpoint is gone is
certain and has intensity 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import torch

from .events import (
    ADD_EDGE,
    ADD_NODE,
    CHANGE_EDGE_ATTR,
    CHANGE_NODE_ATTR,
    DELETE_EDGE,
    DELETE_NODE,
    EDGE_KINDS,
    KINDS,
    Activity,
    EntityId,
    Event,
    is_edge,
)
from .embedding import edge_local_prop, initial_embedding
from .model import FDGNN
from .params import DTYPE

A = Activity.ACTIVE
UNDEFINED_NODES = "undefined-node"


class Branch(enum.Enum):
    SCORED = "scored"
    FORCED_ONE = "forced-one"
    FORBIDDEN_ZERO = "forbidden-zero"


class ForbiddenEventError(ValueError):
    """An observed event has zero intensity under the current state."""


@dataclass
class IntensityReport:
    kind: int
    subject: EntityId
    value: torch.Tensor
    branch: Branch

    @property
    def lam(self) -> float:
        return float(self.value.detach())


def activation(x, psi):
    """Scaled softplus ``psi * log(1 + exp(x / psi))``, overflow-safe."""
    x = torch.as_tensor(x, dtype=DTYPE)
    psi = torch.as_tensor(psi, dtype=DTYPE)
    return psi * torch.logaddexp(x / psi, torch.zeros((), dtype=DTYPE))


def branch_for(
    kind: int,
    subject: Activity,
    end_u: Activity | None = None,
    end_v: Activity | None = None,
) -> Branch:
    """Case table: which branch of the kind's intensity applies."""
    ends_active = end_u is A and end_v is A
    if kind == ADD_NODE:
        return Branch.FORBIDDEN_ZERO if subject is A else Branch.SCORED
    if kind in (DELETE_NODE, CHANGE_NODE_ATTR):
        return Branch.SCORED if subject is A else Branch.FORBIDDEN_ZERO
    if kind == ADD_EDGE:
        return Branch.SCORED if subject is not A and ends_active else Branch.FORBIDDEN_ZERO
    if kind == DELETE_EDGE:
        if subject is not A:
            return Branch.FORBIDDEN_ZERO
        return Branch.SCORED if ends_active else Branch.FORCED_ONE
    if kind == CHANGE_EDGE_ATTR:
        return Branch.SCORED if subject is A and ends_active else Branch.FORBIDDEN_ZERO
    raise ValueError(f"unknown event kind {kind}")


def _score(model: FDGNN, kind: int, x: EntityId, attr) -> torch.Tensor:
    P = model.params
    if not is_edge(x):
        z = model.candidate_node(x, attr)
        if kind == CHANGE_NODE_ATTR:
            return P["int.W4"] @ torch.cat([z, model.nodes[x].z_prev])
        return P[f"int.W{kind}"] @ z
    zu = model.candidate_node(x[0])
    zv = model.candidate_node(x[1])
    ze = model.candidate_edge(x, attr)
    s = P[f"int.W{kind}"] @ torch.cat([zu, zv, ze])
    if kind == CHANGE_EDGE_ATTR:
        s = s + P["int.Wh5"] @ torch.cat([ze, model.edges[x].z_prev])
    return s


def intensity(model: FDGNN, kind: int, x: EntityId, attr=None) -> IntensityReport:
    """lambda_kind^x at the model's current (pre-event) state.

    ``attr`` is the candidate attribute used to build the initial embedding
    of a not-yet-seen subject; defaults to the zero vector.
    """
    if (kind in EDGE_KINDS) != is_edge(x):
        raise ValueError(f"kind {kind} does not take subject {x!r}")
    if is_edge(x):
        br = branch_for(kind, model.status(x), model.status(x[0]), model.status(x[1]))
    else:
        br = branch_for(kind, model.status(x))
    if br is Branch.FORBIDDEN_ZERO:
        value = torch.zeros((), dtype=DTYPE)
    elif br is Branch.FORCED_ONE:
        value = torch.ones((), dtype=DTYPE)
    else:
        value = activation(_score(model, kind, x, attr), model.params.psi(kind))
    return IntensityReport(kind, x, value, br)


def lambda_add_node(model: FDGNN, v: int, attr=None) -> IntensityReport:
    return intensity(model, ADD_NODE, v, attr)


def lambda_delete_node(model: FDGNN, v: int) -> IntensityReport:
    return intensity(model, DELETE_NODE, v)


def lambda_add_edge(model: FDGNN, e, attr=None) -> IntensityReport:
    return intensity(model, ADD_EDGE, e, attr)


def lambda_delete_edge(model: FDGNN, e) -> IntensityReport:
    return intensity(model, DELETE_EDGE, e)


def lambda_change_node_attr(model: FDGNN, v: int) -> IntensityReport:
    return intensity(model, CHANGE_NODE_ATTR, v)


def lambda_change_edge_attr(model: FDGNN, e) -> IntensityReport:
    return intensity(model, CHANGE_EDGE_ATTR, e)


def event_intensity(model: FDGNN, event: Event) -> IntensityReport:
    """Intensity of an observed event; raises if it sits on a zero branch."""
    rep = intensity(model, event.kind, event.subject, event.attr)
    if rep.branch is Branch.FORBIDDEN_ZERO:
        raise ForbiddenEventError(
            f"event seq={event.seq} kind={event.kind} subject={event.subject!r} has zero intensity"
        )
    return rep


# -- total intensity over a candidate set -------------------------------------


@dataclass
class IntensityTable:
    """Per-kind candidate intensities with estimator weights.

    ``weights`` are multiplicities (identical undefined nodes collapsed into
    one row) or inverse inclusion probabilities for subsampled edge pairs.
    """

    values: dict[int, torch.Tensor] = field(default_factory=dict)
    weights: dict[int, torch.Tensor] = field(default_factory=dict)
    subjects: dict[int, list] = field(default_factory=dict)

    def kind_total(self, k: int) -> torch.Tensor:
        if k not in self.values:
            return torch.zeros((), dtype=DTYPE)
        return (self.values[k] * self.weights[k]).sum()

    def total(self) -> torch.Tensor:
        out = torch.zeros((), dtype=DTYPE)
        for k in sorted(self.values):
            out = out + self.kind_total(k)
        return out

    def count(self, k: int) -> float:
        return float(self.weights[k].sum()) if k in self.weights else 0.0

    def argmax(self, rng: np.random.Generator | None = None) -> tuple[int, object, float] | None:
        """Most intense (kind, subject, value). Exact ties across kinds are
        broken uniformly at random when ``rng`` is given, else by kind order."""
        best = {}
        for k in sorted(self.values):
            vals = self.values[k].detach()
            if vals.numel() == 0:
                continue
            i = int(torch.argmax(vals))
            best[k] = (k, self.subjects[k][i], float(vals[i]))
        if not best:
            return None
        top = max(b[2] for b in best.values())
        tied = [k for k in sorted(best) if best[k][2] == top]
        k = tied[int(rng.integers(len(tied)))] if rng is not None and len(tied) > 1 else tied[0]
        return best[k]

    def _add(self, k: int, vals: torch.Tensor, weights: torch.Tensor, subjects: list) -> None:
        if k in self.values:
            self.values[k] = torch.cat([self.values[k], vals])
            self.weights[k] = torch.cat([self.weights[k], weights])
            self.subjects[k] = self.subjects[k] + subjects
        else:
            self.values[k], self.weights[k], self.subjects[k] = vals, weights, subjects


def _ones(n: int) -> torch.Tensor:
    return torch.ones(n, dtype=DTYPE)


def unseen_pairs(model: FDGNN, active: list[int]) -> list[tuple[int, int]]:
    """Pairs of active nodes never yet connected by an edge."""
    return [
        (a, b)
        for i, a in enumerate(active)
        for b in active[i + 1 :]
        if (a, b) not in model.edges
    ]


def intensity_table(
    model: FDGNN,
    kinds=KINDS,
    pair_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> IntensityTable:
    """All admissible (kind, subject) intensities at the current state.

    Seen nodes and edges are enumerated exactly. Never-seen nodes all share
    the same initial embedding, so they form one row weighted by their
    count. Never-seen edges between active nodes are enumerated exactly
    unless there are more than ``pair_samples`` of them, in which case a
    uniform sample without replacement is drawn and reweighted by
    ``n_pairs / pair_samples``.
    """
    kinds = set(kinds)
    P = model.params
    table = IntensityTable()
    seen = sorted(model.nodes)
    active = [v for v in seen if model.status(v) is A]
    inactive = [v for v in seen if model.status(v) is not A]
    pos = {v: i for i, v in enumerate(active)}
    if active:
        za = torch.stack([model.nodes[v].z for v in active])
    if ADD_NODE in kinds:
        if inactive:
            zi = torch.stack([model.nodes[v].z for v in inactive])
            table._add(ADD_NODE, activation(zi @ P["int.W0"], P.psi(0)), _ones(len(inactive)), inactive)
        n_new = model.header.node_universe - len(seen)
        if n_new > 0:
            z0 = model.candidate_node(-1)
            val = activation(P["int.W0"] @ z0, P.psi(0)).reshape(1)
            table._add(ADD_NODE, val, torch.tensor([float(n_new)], dtype=DTYPE), [UNDEFINED_NODES])
    if active and DELETE_NODE in kinds:
        table._add(DELETE_NODE, activation(za @ P["int.W1"], P.psi(1)), _ones(len(active)), active)
    if active and CHANGE_NODE_ATTR in kinds:
        zp = torch.stack([model.nodes[v].z_prev for v in active])
        s = torch.cat([za, zp], dim=1) @ P["int.W4"]
        table._add(CHANGE_NODE_ATTR, activation(s, P.psi(4)), _ones(len(active)), active)

    groups: dict[str, list] = {"add": [], "scored": [], "forced": []}
    for e in sorted(model.edges):
        br3 = branch_for(DELETE_EDGE, model.status(e), model.status(e[0]), model.status(e[1]))
        if br3 is Branch.SCORED:
            groups["scored"].append(e)
        elif br3 is Branch.FORCED_ONE:
            groups["forced"].append(e)
        elif e[0] in pos and e[1] in pos:
            groups["add"].append(e)

    def triple(edges):
        zu = torch.stack([model.nodes[e[0]].z for e in edges])
        zv = torch.stack([model.nodes[e[1]].z for e in edges])
        ze = torch.stack([model.edges[e].z for e in edges])
        return torch.cat([zu, zv, ze], dim=1), ze

    if ADD_EDGE in kinds:
        if groups["add"]:
            x, _ = triple(groups["add"])
            table._add(ADD_EDGE, activation(x @ P["int.W2"], P.psi(2)), _ones(len(groups["add"])), groups["add"])
        pairs = unseen_pairs(model, active)
        n = len(pairs)
        if n:
            weight = 1.0
            if pair_samples is not None and n > pair_samples:
                if rng is None:
                    raise ValueError("pair subsampling needs an rng")
                idx = np.sort(rng.choice(n, size=pair_samples, replace=False))
                pairs = [pairs[i] for i in idx]
                weight = n / pair_samples
            ia = torch.tensor([pos[a] for a, _ in pairs])
            ib = torch.tensor([pos[b] for _, b in pairs])
            ua = torch.stack([model.nodes[v].u for v in active])
            pa = torch.stack([model.nodes[v].p for v in active]).reshape(-1, 1)
            h = edge_local_prop(za[ia], za[ib], ua[ia], ua[ib], pa[ia], pa[ib], P)
            u0 = model.edge_codec.embed(None, model.zero_attr(True), P)
            ze = initial_embedding(h, u0.expand(len(pairs), -1), P)
            s = torch.cat([za[ia], za[ib], ze], dim=1) @ P["int.W2"]
            table._add(ADD_EDGE, activation(s, P.psi(2)), torch.full((len(pairs),), weight, dtype=DTYPE), pairs)
    if groups["scored"]:
        x, ze = triple(groups["scored"])
        if DELETE_EDGE in kinds:
            table._add(DELETE_EDGE, activation(x @ P["int.W3"], P.psi(3)), _ones(len(x)), groups["scored"])
        if CHANGE_EDGE_ATTR in kinds:
            zp = torch.stack([model.edges[e].z_prev for e in groups["scored"]])
            s = x @ P["int.W5"] + torch.cat([ze, zp], dim=1) @ P["int.Wh5"]
            table._add(CHANGE_EDGE_ATTR, activation(s, P.psi(5)), _ones(len(x)), groups["scored"])
    if groups["forced"] and DELETE_EDGE in kinds:
        n = len(groups["forced"])
        table._add(DELETE_EDGE, _ones(n), _ones(n), groups["forced"])
    return table


def total_intensity(model: FDGNN, kinds=KINDS, pair_samples=None, rng=None) -> torch.Tensor:
    return intensity_table(model, kinds, pair_samples, rng).total()


def total_intensity_over(model: FDGNN, candidates) -> torch.Tensor:
    """Sum of all six intensities over an explicit list of subjects."""
    out = torch.zeros((), dtype=DTYPE)
    for x in candidates:
        for k in sorted(EDGE_KINDS if is_edge(x) else set(KINDS) - EDGE_KINDS):
            out = out + intensity(model, k, x).value
    return out
