from __future__ import annotations

import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from fdgnn.events import Event, StreamHeader, edge_id
from fdgnn.params import ModelConfig, ModelParams
from fdgnn.simulator import SimSpec, random_initial_graph, thinning_sample
from fdgnn.training import TrainConfig, evaluate, train

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


def random_valid_stream(rng: np.random.Generator, n_events: int, universe: int = 12, dims=(2, 1)):
    """Independent generator of legal streams: picks uniformly among the
    operations that are admissible in a hand-maintained state."""
    da, db = dims
    active: set[int] = set()
    edges: set[tuple[int, int]] = set()
    events = []
    t = 0.0
    for seq in range(n_events):
        t += float(rng.exponential(1.0)) + 1e-6
        ops = []
        absent = [v for v in range(universe) if v not in active]
        if absent:
            ops.append(0)
        if active:
            ops += [1, 4]
        act = sorted(active)
        free = [(a, b) for i, a in enumerate(act) for b in act[i + 1 :] if (a, b) not in edges]
        if free:
            ops.append(2)
        if edges:
            ops += [3, 5]
        k = int(rng.choice(ops))
        if k == 0:
            x = int(rng.choice(absent))
            active.add(x)
        elif k in (1, 4):
            x = int(rng.choice(act))
            if k == 1:
                active.discard(x)
                edges = {e for e in edges if x not in e}
        elif k == 2:
            x = free[int(rng.integers(len(free)))]
            edges.add(x)
        else:
            es = sorted(edges)
            x = es[int(rng.integers(len(es)))]
            if k == 3:
                edges.discard(x)
        dim = db if isinstance(x, tuple) else da
        events.append(Event(seq, t, k, x, tuple(rng.normal(size=dim).tolist())))
    header = StreamHeader(da, db, universe)
    return header, events


def gradient_fixture():
    """10 nodes, 20 events; no entity needs more than 5 recursion steps."""
    header = StreamHeader(2, 1, 12)
    rng = np.random.default_rng(7)
    evs = []
    t = 0.0

    def add(kind, x, dim):
        nonlocal t
        t += 0.5 + float(rng.uniform())
        evs.append(Event(len(evs), t, kind, x, tuple(rng.normal(size=dim).round(3).tolist())))

    for v in range(10):
        add(0, v, 2)
    for a, b in [(0, 1), (1, 2), (2, 3), (3, 4), (5, 6), (0, 7)]:
        add(2, edge_id(a, b), 1)
    add(4, 1, 2)
    add(4, 8, 2)
    add(5, (1, 2), 1)
    add(1, 4, 2)
    return header, evs


@pytest.fixture
def toy_header():
    return StreamHeader(2, 1, 6, g0_nodes=((0, (1.0, 0.0)), (1, (0.0, 1.0))))


@pytest.fixture
def toy_events():
    return [
        Event(0, 1.0, 0, 2, (0.5, 0.5)),
        Event(1, 2.0, 2, (0, 1), (1.0,)),
        Event(2, 3.0, 2, (1, 2), (0.2,)),
        Event(3, 3.5, 4, 0, (0.1, 0.2)),
        Event(4, 4.0, 5, (0, 1), (2.0,)),
        Event(5, 5.0, 1, 1, (0.0, 1.0)),
        Event(6, 6.0, 0, 1, (0.0, 1.0)),
    ]


def central_difference(f, params: ModelParams, name: str, h: float = 1e-5) -> torch.Tensor:
    """Elementwise central finite difference of scalar ``f(params)``."""
    base = params[name].detach().clone()
    flat = base.reshape(-1)
    out = torch.zeros_like(flat)
    for i in range(flat.numel()):
        for sign in (1, -1):
            pert = flat.clone()
            pert[i] += sign * h
            p2 = params.clone()
            p2.set(name, pert.reshape(base.shape))
            out[i] += sign * float(torch.as_tensor(f(p2)).detach())
        out[i] /= 2 * h
    return out.reshape(base.shape)


def rel_err(a: torch.Tensor, b: torch.Tensor) -> float:
    na, nb = float(torch.linalg.vector_norm(a)), float(torch.linalg.vector_norm(b))
    scale = max(na, nb)
    if scale < 1e-10:
        return 0.0
    return float(torch.linalg.vector_norm(a - b)) / scale


HETERO_RATES = (0.02, 0.01, 0.01, 0.03, 0.15, 0.1)


@pytest.fixture(scope="session")
def hetero_run():
    """500-event heterogeneous constant-rate stream, trained on the first
    400 events and scored on the last 100."""
    t_start = time.perf_counter()
    header = random_initial_graph(20, 10, 8, 2, 1, seed=1)
    spec = SimSpec(horizon=400.0, header=header, rates=HETERO_RATES, attr_mode="noise", attr_std=0.2, seed=5, max_events=500)
    trace = thinning_sample(spec)
    hdr = replace(trace.header, horizon=None)
    cfg = ModelConfig(2, 1, embed_dim=8, attr_embed_dim=8, raw_dim=8)
    init = ModelParams.initialize(cfg, seed=0)
    tcfg = TrainConfig(lr=0.05, epochs=10, batch_events=50, seed=0)
    result = train(hdr, trace.events[:400], cfg, tcfg, params=init)
    before = evaluate(hdr, trace.events, init, cfg, start=400)
    after = evaluate(hdr, trace.events, result.params, cfg, start=400)
    elapsed = time.perf_counter() - t_start
    return dict(trace=trace, header=hdr, cfg=cfg, init=init, result=result, before=before, after=after, elapsed=elapsed)
