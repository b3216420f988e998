"""Synthetic fully dynamic graph streams by thinning.

Two intensity sources are supported: a table of constant per-entity rates
(one per event kind, applied to every admissible subject) and a full model.
Candidate times are proposed from a dominating constant rate and accepted
with probability true rate / bound; the event is then drawn proportionally
to the individual intensities.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .events import (
    ADD_EDGE,
    ADD_NODE,
    CHANGE_EDGE_ATTR,
    CHANGE_NODE_ATTR,
    DELETE_EDGE,
    DELETE_NODE,
    KINDS,
    Event,
    StreamHeader,
    apply_event,
    edge_id,
    initial_state,
    is_edge,
    write_stream,
)
from .intensity import UNDEFINED_NODES, intensity_table
from .model import FDGNN
from .params import ModelConfig, ModelParams


@dataclass
class SimSpec:
    horizon: float
    header: StreamHeader
    rates: tuple[float, ...] | None = None
    params: ModelParams | None = None
    model_cfg: ModelConfig | None = None
    attr_mode: str = "constant"
    attr_std: float = 0.1
    seed: int = 0
    max_events: int = 1_000_000
    bound_factor: float = 2.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if (self.rates is None) == (self.params is None):
            raise ValueError("give exactly one intensity source: rates or params")
        if self.rates is not None:
            if len(self.rates) != 6 or any(r < 0 for r in self.rates):
                raise ValueError("rates must be six non-negative numbers")
        elif self.model_cfg is None:
            raise ValueError("model source needs a model config")
        if self.attr_mode not in ("constant", "noise"):
            raise ValueError(f"unknown attr_mode {self.attr_mode!r}")
        if self.header.node_universe < len(self.header.g0_nodes):
            raise ValueError("node universe smaller than the initial graph")


@dataclass
class SimTrace:
    header: StreamHeader
    events: list[Event]
    lambdas: list[float]
    spec: SimSpec
    bound_doublings: int = 0

    def write(self, path: str | Path) -> Path:
        """Write the stream and a ``<path>.lambda`` sidecar keyed by seq."""
        path = Path(path)
        write_stream(path, self.header, self.events)
        side = path.with_name(path.name + ".lambda")
        side.write_text(
            "".join(json.dumps({"seq": e.seq, "lambda": lam}) + "\n" for e, lam in zip(self.events, self.lambdas)),
            encoding="utf-8",
        )
        return side


class _Attributes:
    def __init__(self, spec: SimSpec, rng: np.random.Generator):
        self.spec = spec
        self.rng = rng
        self.last: dict = {}
        for v, a in spec.header.g0_nodes:
            self.last[v] = np.asarray(a, dtype=float)
        for e, a in spec.header.g0_edges:
            self.last[e] = np.asarray(a, dtype=float)

    def draw(self, x, kind: int) -> tuple[float, ...]:
        dim = self.spec.header.edge_attr_dim if is_edge(x) else self.spec.header.node_attr_dim
        cur = self.last.get(x, np.zeros(dim))
        if kind not in (DELETE_NODE, DELETE_EDGE) and self.spec.attr_mode == "noise":
            cur = cur + self.rng.normal(0.0, self.spec.attr_std, size=dim)
        self.last[x] = cur
        return tuple(float(a) for a in cur)


def _constant_candidates(header: StreamHeader, ledger, snapshot, rates):
    """(kind, subjects) lists for every kind with a positive rate."""
    active = sorted(snapshot.nodes)
    out = []
    if rates[ADD_NODE] > 0:
        out.append((ADD_NODE, [v for v in range(header.node_universe) if v not in snapshot.nodes]))
    if rates[DELETE_NODE] > 0:
        out.append((DELETE_NODE, active))
    if rates[CHANGE_NODE_ATTR] > 0:
        out.append((CHANGE_NODE_ATTR, active))
    if rates[ADD_EDGE] > 0:
        out.append(
            (
                ADD_EDGE,
                [
                    (a, b)
                    for i, a in enumerate(active)
                    for b in active[i + 1 :]
                    if (a, b) not in snapshot.edges
                ],
            )
        )
    edges = sorted(snapshot.edges)
    if rates[DELETE_EDGE] > 0:
        out.append((DELETE_EDGE, edges))
    if rates[CHANGE_EDGE_ATTR] > 0:
        out.append((CHANGE_EDGE_ATTR, edges))
    return out


def _simulate_constant(spec: SimSpec, rng, attrs: _Attributes):
    header = spec.header
    ledger, snapshot = initial_state(header)
    events, lambdas = [], []
    t = header.t0
    while len(events) < spec.max_events:
        cands = _constant_candidates(header, ledger, snapshot, spec.rates)
        masses = np.array([spec.rates[k] * len(xs) for k, xs in cands])
        total = float(masses.sum()) if len(masses) else 0.0
        if total <= 0:
            break
        bound = total
        t = t + rng.exponential(1.0 / bound)
        if t > header.t0 + spec.horizon:
            break
        if rng.uniform() * bound > total:
            continue
        ci = rng.choice(len(cands), p=masses / total)
        kind, xs = cands[ci]
        x = xs[rng.integers(len(xs))]
        ev = Event(len(events), float(t), kind, x, attrs.draw(x, kind))
        apply_event(header, ledger, snapshot, ev)
        events.append(ev)
        lambdas.append(float(spec.rates[kind]))
    return events, lambdas, 0


def _simulate_model(spec: SimSpec, rng, attrs: _Attributes):
    header = spec.header
    model = FDGNN(header, spec.params, spec.model_cfg)
    events, lambdas = [], []
    doublings = 0
    t = header.t0
    with torch.no_grad():
        table = intensity_table(model)
        while len(events) < spec.max_events:
            total = float(table.total())
            if total <= 0:
                break
            bound = spec.bound_factor * total
            t_new = t + rng.exponential(1.0 / bound)
            if t_new > header.t0 + spec.horizon:
                break
            # state is unchanged since the last event, so this is the true rate
            lam_t = float(table.total())
            while lam_t > bound:
                bound *= 2.0
                doublings += 1
                t_new = t + rng.exponential(1.0 / bound)
            t = t_new
            if t > header.t0 + spec.horizon:
                break
            if rng.uniform() * bound > lam_t:
                continue
            assert lam_t <= bound
            kinds = [k for k in KINDS if k in table.values]
            masses = np.array([float(table.kind_total(k)) for k in kinds])
            kind = kinds[rng.choice(len(kinds), p=masses / masses.sum())]
            vals = (table.values[kind] * table.weights[kind]).numpy()
            i = rng.choice(len(vals), p=vals / vals.sum())
            x = table.subjects[kind][i]
            if x == UNDEFINED_NODES:
                fresh = [v for v in range(header.node_universe) if v not in model.nodes]
                x = fresh[rng.integers(len(fresh))]
            ev = Event(len(events), float(t), kind, x, attrs.draw(x, kind))
            model.observe(ev)
            events.append(ev)
            lambdas.append(float(table.values[kind][i]))
            table = intensity_table(model)
    return events, lambdas, doublings


def thinning_sample(spec: SimSpec) -> SimTrace:
    rng = np.random.default_rng(spec.seed)
    attrs = _Attributes(spec, rng)
    if spec.rates is not None:
        events, lambdas, doublings = _simulate_constant(spec, rng, attrs)
    else:
        events, lambdas, doublings = _simulate_model(spec, rng, attrs)
    header = replace(spec.header, horizon=spec.header.t0 + spec.horizon)
    return SimTrace(header, events, lambdas, spec, doublings)


def random_initial_graph(
    n_universe: int,
    n_nodes: int,
    n_edges: int,
    node_attr_dim: int,
    edge_attr_dim: int,
    seed: int = 0,
) -> StreamHeader:
    rng = np.random.default_rng(seed)
    nodes = tuple((v, tuple(rng.normal(size=node_attr_dim).tolist())) for v in range(n_nodes))
    pairs = [(a, b) for a in range(n_nodes) for b in range(a + 1, n_nodes)]
    if n_edges > len(pairs):
        raise ValueError("more initial edges than node pairs")
    chosen = sorted(rng.choice(len(pairs), size=n_edges, replace=False)) if n_edges else []
    edges = tuple((edge_id(*pairs[i]), tuple(rng.normal(size=edge_attr_dim).tolist())) for i in chosen)
    return StreamHeader(node_attr_dim, edge_attr_dim, n_universe, nodes, edges)


@dataclass
class RateReport:
    true: dict[int, float] = field(default_factory=dict)
    learned: dict[int, float] = field(default_factory=dict)

    @property
    def rel_error(self) -> dict[int, float]:
        return {k: abs(self.learned[k] - c) / c for k, c in self.true.items()}


def rate_recovery_check(trace: SimTrace, params: ModelParams, model_cfg: ModelConfig) -> RateReport:
    """Time-averaged per-subject intensity of each kind against the
    constant rate the trace was generated with."""
    if not trace.events:
        raise ValueError("no events to compare")
    rates = trace.spec.rates
    if rates is None:
        raise ValueError("rate recovery needs a constant-rate trace")
    model = FDGNN(trace.header, params, model_cfg)
    horizon = trace.header.horizon
    num = {k: 0.0 for k in KINDS}
    den = {k: 0.0 for k in KINDS}
    prev = trace.header.t0
    with torch.no_grad():
        for ev in [*trace.events, None]:
            t = horizon if ev is None else ev.t
            dt = t - prev
            table = intensity_table(model)
            for k in KINDS:
                n = table.count(k)
                if rates[k] > 0 and n > 0 and dt > 0:
                    num[k] += float(table.kind_total(k)) / n * dt
                    den[k] += dt
            if ev is not None:
                model.observe(ev)
                prev = t
    report = RateReport()
    for k in KINDS:
        if rates[k] > 0 and den[k] > 0:
            report.true[k] = float(rates[k])
            report.learned[k] = num[k] / den[k]
    return report


def load_sidecar(path: str | Path) -> dict[int, float]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[int(rec["seq"])] = float(rec["lambda"])
    return out

