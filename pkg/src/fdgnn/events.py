"""Graph streams: events, validation, the activity ledger and snapshots.

A stream is a start graph plus a strictly time-ordered list of events. Each
event is one of six kinds::

    0 add-node    1 delete-node    4 node-attr-change
    2 add-edge    3 delete-edge    5 edge-attr-change

Edges are undirected and identified by the ordered pair ``(u, v)`` with
``u < v``. Deleting a node deletes its incident active edges at the same
timestamp (cascade); those transitions live in the ledger only.
"""

from __future__ import annotations

import bisect
import copy
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

ADD_NODE, DELETE_NODE, ADD_EDGE, DELETE_EDGE, CHANGE_NODE_ATTR, CHANGE_EDGE_ATTR = range(6)
KINDS = tuple(range(6))
NODE_KINDS = frozenset({ADD_NODE, DELETE_NODE, CHANGE_NODE_ATTR})
EDGE_KINDS = frozenset({ADD_EDGE, DELETE_EDGE, CHANGE_EDGE_ATTR})
ACTIVATING_KINDS = frozenset({ADD_NODE, ADD_EDGE, CHANGE_NODE_ATTR, CHANGE_EDGE_ATTR})
KIND_NAMES = {
    0: "add-node",
    1: "delete-node",
    2: "add-edge",
    3: "delete-edge",
    4: "node-attr-change",
    5: "edge-attr-change",
}

Edge = tuple[int, int]
EntityId = Union[int, Edge]


class Activity(enum.Enum):
    ACTIVE = "active"
    INACTIVE = "inactive"
    UNDEFINED = "undefined"

    @property
    def value01(self) -> float:
        """Numeric activity for products; undefined counts as 0."""
        return 1.0 if self is Activity.ACTIVE else 0.0


def edge_id(u: int, v: int) -> Edge:
    u, v = int(u), int(v)
    if u == v:
        raise ValueError(f"self-loop edge ({u}, {v})")
    return (u, v) if u < v else (v, u)


def is_edge(x: EntityId) -> bool:
    return isinstance(x, tuple)


@dataclass(frozen=True)
class Event:
    seq: int
    t: float
    kind: int
    subject: EntityId
    attr: tuple[float, ...] = ()

    def to_json(self) -> dict:
        rec: dict = {"seq": self.seq, "t": self.t, "k": self.kind}
        if is_edge(self.subject):
            rec["edge"] = list(self.subject)
        else:
            rec["node"] = self.subject
        rec["attr"] = list(self.attr)
        return rec


@dataclass(frozen=True)
class StreamHeader:
    node_attr_dim: int
    edge_attr_dim: int
    node_universe: int
    g0_nodes: tuple[tuple[int, tuple[float, ...]], ...] = ()
    g0_edges: tuple[tuple[Edge, tuple[float, ...]], ...] = ()
    t0: float = 0.0
    horizon: float | None = None
    version: int = 1

    def to_json(self) -> dict:
        rec = {
            "version": self.version,
            "node_attr_dim": self.node_attr_dim,
            "edge_attr_dim": self.edge_attr_dim,
            "node_universe": self.node_universe,
            "g0_nodes": [[v, list(a)] for v, a in self.g0_nodes],
            "g0_edges": [[e[0], e[1], list(a)] for e, a in self.g0_edges],
        }
        if self.t0 != 0.0:
            rec["t0"] = self.t0
        if self.horizon is not None:
            rec["horizon"] = self.horizon
        return rec


@dataclass(frozen=True)
class Violation:
    seq: int
    rule: str
    message: str

    def __str__(self) -> str:
        return f"seq={self.seq} rule={self.rule} message={self.message!r}"


class StreamError(ValueError):
    """A stream or event broke one of the validity rules."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class StreamFormatError(ValueError):
    """The stream file could not be parsed."""


@dataclass
class GraphSnapshot:
    t: float
    nodes: set[int] = field(default_factory=set)
    edges: set[Edge] = field(default_factory=set)
    node_attr: dict[int, tuple[float, ...]] = field(default_factory=dict)
    edge_attr: dict[Edge, tuple[float, ...]] = field(default_factory=dict)

    def copy(self) -> GraphSnapshot:
        return copy.deepcopy(self)


class ActivityLedger:
    """Per-entity status transitions plus the global event history.

    Transitions are appended in stream order, so each entity's list is sorted
    by time. G0 entities get a transition at ``t0`` with ``seq=-1``.
    """

    def __init__(self) -> None:
        self.transitions: dict[EntityId, list[tuple[float, int, Activity]]] = {}
        self.history: list[Event] = []

    def record(self, x: EntityId, t: float, seq: int, status: Activity) -> None:
        self.transitions.setdefault(x, []).append((t, seq, status))

    def current(self, x: EntityId) -> Activity:
        tr = self.transitions.get(x)
        return tr[-1][2] if tr else Activity.UNDEFINED

    def activity(self, x: EntityId, t: float) -> Activity:
        tr = self.transitions.get(x)
        if not tr:
            return Activity.UNDEFINED
        times = [rec[0] for rec in tr]
        i = bisect.bisect_right(times, t)
        return tr[i - 1][2] if i else Activity.UNDEFINED

    def seen(self, x: EntityId) -> bool:
        return x in self.transitions


def activity(ledger: ActivityLedger, x: EntityId, t: float) -> Activity:
    return ledger.activity(x, t)


def initial_state(header: StreamHeader) -> tuple[ActivityLedger, GraphSnapshot]:
    errs = _check_header(header)
    if errs:
        raise StreamError(errs)
    ledger = ActivityLedger()
    snap = GraphSnapshot(t=header.t0)
    for v, a in header.g0_nodes:
        ledger.record(v, header.t0, -1, Activity.ACTIVE)
        snap.nodes.add(v)
        snap.node_attr[v] = tuple(a)
    for e, a in header.g0_edges:
        ledger.record(e, header.t0, -1, Activity.ACTIVE)
        snap.edges.add(e)
        snap.edge_attr[e] = tuple(a)
    return ledger, snap


def _check_header(header: StreamHeader) -> list[Violation]:
    out = []
    seen = set()
    for v, a in header.g0_nodes:
        if not 0 <= v < header.node_universe:
            out.append(Violation(-1, "universe", f"G0 node {v} outside universe"))
        if v in seen:
            out.append(Violation(-1, "readd-active", f"G0 node {v} listed twice"))
        seen.add(v)
        if len(a) != header.node_attr_dim:
            out.append(Violation(-1, "dimension", f"G0 node {v} attr has dim {len(a)}"))
    seen_e = set()
    for e, a in header.g0_edges:
        if e[0] not in seen or e[1] not in seen:
            out.append(Violation(-1, "endpoint-inactive", f"G0 edge {e} has a missing endpoint"))
        if e in seen_e:
            out.append(Violation(-1, "readd-active", f"G0 edge {e} listed twice"))
        seen_e.add(e)
        if len(a) != header.edge_attr_dim:
            out.append(Violation(-1, "dimension", f"G0 edge {e} attr has dim {len(a)}"))
    return out


def check_event(
    header: StreamHeader, ledger: ActivityLedger, snapshot: GraphSnapshot, event: Event
) -> list[Violation]:
    """Violations ``event`` would cause if applied to the current state."""
    seq, k, x = event.seq, event.kind, event.subject
    out: list[Violation] = []
    if k not in KINDS:
        return [Violation(seq, "kind", f"unknown event kind {k}")]
    if not math.isfinite(event.t) or event.t < header.t0:
        out.append(Violation(seq, "time-order", f"timestamp {event.t} before t0 or not finite"))
    last = ledger.history[-1] if ledger.history else None
    if last is not None and not event.t > last.t:
        out.append(Violation(seq, "time-order", f"t={event.t} not after previous t={last.t}"))
    if last is not None and not event.seq > last.seq:
        out.append(Violation(seq, "seq-order", f"seq {event.seq} not after {last.seq}"))
    if (k in NODE_KINDS) == is_edge(x):
        return out + [Violation(seq, "arity", f"kind {k} does not take subject {x!r}")]
    dim = header.edge_attr_dim if is_edge(x) else header.node_attr_dim
    if len(event.attr) != dim:
        out.append(Violation(seq, "dimension", f"attr dim {len(event.attr)} != {dim}"))
    elif not all(math.isfinite(a) for a in event.attr):
        out.append(Violation(seq, "dimension", "attr contains non-finite values"))
    nodes = x if is_edge(x) else (x,)
    for v in nodes:
        if not 0 <= v < header.node_universe:
            out.append(Violation(seq, "universe", f"node {v} outside universe"))
    status = ledger.current(x)
    if k in (ADD_NODE, ADD_EDGE):
        if status is Activity.ACTIVE:
            out.append(Violation(seq, "readd-active", f"{x!r} is already active"))
        if k == ADD_EDGE:
            for v in nodes:
                if ledger.current(v) is not Activity.ACTIVE:
                    out.append(Violation(seq, "endpoint-inactive", f"endpoint {v} not active"))
    elif status is not Activity.ACTIVE:
        out.append(Violation(seq, "missing-entity", f"{x!r} is {status.value}"))
    return out


def apply_event(
    header: StreamHeader, ledger: ActivityLedger, snapshot: GraphSnapshot, event: Event
) -> list[Edge]:
    """Apply ``event`` in place; returns edges removed by cascade deletion."""
    errs = check_event(header, ledger, snapshot, event)
    if errs:
        raise StreamError(errs)
    k, x, t = event.kind, event.subject, event.t
    status = Activity.ACTIVE if k in ACTIVATING_KINDS else Activity.INACTIVE
    ledger.record(x, t, event.seq, status)
    ledger.history.append(event)
    snapshot.t = t
    cascaded: list[Edge] = []
    if is_edge(x):
        if status is Activity.ACTIVE:
            snapshot.edges.add(x)
            snapshot.edge_attr[x] = event.attr
        else:
            snapshot.edges.discard(x)
            snapshot.edge_attr.pop(x, None)
    elif status is Activity.ACTIVE:
        snapshot.nodes.add(x)
        snapshot.node_attr[x] = event.attr
    else:
        snapshot.nodes.discard(x)
        snapshot.node_attr.pop(x, None)
        cascaded = sorted(e for e in snapshot.edges if x in e)
        for e in cascaded:
            ledger.record(e, t, event.seq, Activity.INACTIVE)
            snapshot.edges.discard(e)
            snapshot.edge_attr.pop(e, None)
    return cascaded


def validate_stream(header: StreamHeader, events: Iterable[Event]) -> list[Violation]:
    """All rule violations in the stream. Offending events are skipped so the
    rest of the stream is still checked against a consistent state."""
    out = _check_header(header)
    if out:
        return out
    ledger, snap = initial_state(header)
    for ev in events:
        errs = check_event(header, ledger, snap, ev)
        if errs:
            out.extend(errs)
            continue
        apply_event(header, ledger, snap, ev)
    return out


def replay(
    header: StreamHeader, events: Iterable[Event], until: float | None = None
) -> tuple[ActivityLedger, GraphSnapshot]:
    ledger, snap = initial_state(header)
    for ev in events:
        if until is not None and ev.t > until:
            break
        apply_event(header, ledger, snap, ev)
    if until is not None:
        snap.t = max(snap.t, until)
    return ledger, snap


def snapshot_at(header: StreamHeader, events: Iterable[Event], t: float) -> GraphSnapshot:
    return replay(header, events, until=t)[1]


# -- file format ------------------------------------------------------------


def _attr(raw, where: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(a) for a in raw)
    except (TypeError, ValueError) as exc:
        raise StreamFormatError(f"{where}: bad attribute vector {raw!r}") from exc
    return vals


def header_from_json(rec: dict) -> StreamHeader:
    try:
        if rec.get("version", 1) != 1:
            raise StreamFormatError(f"unsupported stream version {rec.get('version')}")
        return StreamHeader(
            node_attr_dim=int(rec["node_attr_dim"]),
            edge_attr_dim=int(rec["edge_attr_dim"]),
            node_universe=int(rec["node_universe"]),
            g0_nodes=tuple((int(v), _attr(a, "g0_nodes")) for v, a in rec.get("g0_nodes", [])),
            g0_edges=tuple(
                (edge_id(u, v), _attr(a, "g0_edges")) for u, v, a in rec.get("g0_edges", [])
            ),
            t0=float(rec.get("t0", 0.0)),
            horizon=None if rec.get("horizon") is None else float(rec["horizon"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, StreamFormatError):
            raise
        raise StreamFormatError(f"bad header: {exc}") from exc


def event_from_json(rec: dict) -> Event:
    try:
        if ("node" in rec) == ("edge" in rec):
            raise StreamFormatError(f"event needs exactly one of node/edge: {rec!r}")
        subject: EntityId = int(rec["node"]) if "node" in rec else edge_id(*rec["edge"])
        return Event(
            seq=int(rec["seq"]),
            t=float(rec["t"]),
            kind=int(rec["k"]),
            subject=subject,
            attr=_attr(rec.get("attr", []), f"seq {rec.get('seq')}"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, StreamFormatError):
            raise
        raise StreamFormatError(f"bad event record {rec!r}: {exc}") from exc


def parse_stream(lines: Iterable[str]) -> tuple[StreamHeader, list[Event]]:
    header = None
    events = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise StreamFormatError(f"line {lineno}: {exc}") from exc
        if header is None:
            header = header_from_json(rec)
        else:
            events.append(event_from_json(rec))
    if header is None:
        raise StreamFormatError("empty stream file (missing header)")
    return header, events


def read_stream(path: str | Path) -> tuple[StreamHeader, list[Event]]:
    with open(path, encoding="utf-8") as fh:
        return parse_stream(fh)


def format_stream(header: StreamHeader, events: Iterable[Event]) -> str:
    lines = [json.dumps(header.to_json())]
    lines.extend(json.dumps(ev.to_json()) for ev in events)
    return "\n".join(lines) + "\n"


def write_stream(path: str | Path, header: StreamHeader, events: Iterable[Event]) -> None:
    Path(path).write_text(format_stream(header, events), encoding="utf-8")
