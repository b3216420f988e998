import math

import numpy as np
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_difference, random_valid_stream, rel_err
from fdgnn.embedding import (
    aggregate_neighbors,
    edge_local_prop,
    edge_update,
    initial_embedding,
    node_update,
)
from fdgnn.events import Event, StreamHeader
from fdgnn.model import FDGNN
from fdgnn.params import DTYPE, ModelConfig, ModelParams

T = lambda *a: torch.tensor(a, dtype=DTYPE)  # noqa: E731
SCALAR = ModelConfig(1, 1, embed_dim=1, attr_embed_dim=1, raw_dim=1)


def scalar_params(**vals):
    p = ModelParams.zeros(SCALAR)
    for k, v in vals.items():
        p.set(k, torch.as_tensor(v, dtype=DTYPE).reshape(p[k].shape))
    return p


def test_empty_neighborhood_is_zero():
    p = scalar_params()
    out = aggregate_neighbors(torch.zeros(0, 1, dtype=DTYPE), torch.zeros(0, 1, dtype=DTYPE), T(), p)
    assert out.tolist() == [0.0]


def test_single_neighbor_passes_embedding():
    p = scalar_params(**{"emb.node.m5": 1.0})
    out = aggregate_neighbors(T([0.37]), T([5.0]), T(1.0), p)
    assert out.tolist() == [0.37]


def test_two_symmetric_neighbors_average():
    p = scalar_params(**{"emb.node.m5": 1.0})
    from fdgnn.attention import neighborhood_attention

    q = neighborhood_attention(T(0.2, 0.2))
    out = aggregate_neighbors(T([0.6], [0.6]), T([1.0], [1.0]), q, p)
    assert math.isclose(float(out.detach()), 0.6, rel_tol=1e-15)


def test_node_update_zero_params():
    cfg = ModelConfig(1, 1, embed_dim=4, attr_embed_dim=4)
    p = ModelParams.zeros(cfg)
    z = node_update(torch.ones(4, dtype=DTYPE), torch.ones(4, dtype=DTYPE), T(0.3), 2.0, torch.ones(4, dtype=DTYPE), p)
    assert z.tolist() == [0.5] * 4


def test_node_update_scalar():
    p = scalar_params(**{"emb.node.M2": 1.0, "emb.node.m3": 2.0})
    z = node_update(T(0.0), T(0.5), T(1.0), 0.25, T(3.0), p)
    assert math.isclose(float(z.detach()), 1 / (1 + math.exp(-1.0)), rel_tol=1e-15)
    assert abs(float(z.detach()) - 0.7311) < 1e-4


def test_zero_gap_drive_term_vanishes():
    p = scalar_params(**{"emb.node.m3": 5.0, "emb.edge.m9": 5.0})
    assert node_update(T(0.0), T(0.5), T(1.0), 0.0, T(0.0), p).tolist() == [0.5]
    assert edge_update(T(0.0), T(0.5), T(1.0), 0.0, T(0.0), p).tolist() == [0.5]


def test_edge_update_scalar():
    p = scalar_params(**{"emb.edge.M7": 0.5, "emb.edge.M8": 2.0, "emb.edge.m9": -1.0, "emb.edge.M10": 0.25})
    z = edge_update(T(2.0), T(0.5), T(0.5), 1.5, T(4.0), p)
    pre = 0.5 * 2.0 + 2.0 * 0.5 * 0.5 - 1.0 * 1.5 + 0.25 * 4.0
    assert math.isclose(float(z.detach()), 1 / (1 + math.exp(-pre)), rel_tol=1e-15)


def test_edge_local_prop_examples():
    zu, zv, uu, uv = T(0.2), T(0.7), T(3.0), T(4.0)
    assert edge_local_prop(zu, zv, uu, uv, T(1.0), T(1.0), scalar_params()).tolist() == [0.0]
    p = scalar_params(**{"emb.edge.m11": 1.0, "emb.edge.m12": 1.0})
    assert math.isclose(float(edge_local_prop(zu, zv, uu, uv, T(1.0), T(1.0), p).detach()), 0.9, rel_tol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_edge_local_prop_endpoint_swap(seed):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(1, 1, embed_dim=3, attr_embed_dim=3)
    p = ModelParams.zeros(cfg)
    a, b = rng.normal(size=2)
    p.set("emb.edge.m11", T(a).reshape(()))
    p.set("emb.edge.m12", T(a).reshape(()))
    p.set("emb.edge.m13", T(b).reshape(()))
    p.set("emb.edge.m14", T(b).reshape(()))
    zu, zv, uu, uv = (torch.tensor(rng.normal(size=3), dtype=DTYPE) for _ in range(4))
    pu, pv = (torch.tensor(rng.uniform(), dtype=DTYPE) for _ in range(2))
    assert torch.allclose(edge_local_prop(zu, zv, uu, uv, pu, pv, p), edge_local_prop(zv, zu, uv, uu, pv, pu, p), atol=1e-15)


def test_initial_embedding_examples():
    cfg = ModelConfig(1, 1, embed_dim=3, attr_embed_dim=2)
    p = ModelParams.zeros(cfg)
    assert initial_embedding(torch.zeros(3, dtype=DTYPE), T(1.0, 2.0), p).tolist() == [0.5] * 3
    p = scalar_params(**{"emb.init.Mpp": 1.0})
    assert math.isclose(float(initial_embedding(T(0.0), T(2.0), p).detach()), 1 / (1 + math.exp(-2.0)), rel_tol=1e-15)
    assert abs(float(initial_embedding(T(0.0), T(2.0), p).detach()) - 0.8808) < 1e-4


def test_new_edge_between_embedded_nodes_uses_endpoints():
    h = StreamHeader(1, 1, 3, g0_nodes=((0, (1.0,)), (1, (2.0,))))
    p = scalar_params(**{"emb.edge.m11": 1.0, "emb.edge.m12": 1.0, "emb.init.Mp": 1.0})
    m = FDGNN(h, p, SCALAR)
    # endpoints sit at 0.5 with weight 1, so h_loc = 1
    assert math.isclose(float(m.candidate_edge((0, 1)).detach()), 1 / (1 + math.exp(-1.0)), rel_tol=1e-15)


def test_all_zero_params_give_half_everywhere():
    header, events = random_valid_stream(np.random.default_rng(3), 200, universe=8)
    cfg = ModelConfig(2, 1, embed_dim=4, attr_embed_dim=4, raw_dim=3)
    m = FDGNN(header, ModelParams.zeros(cfg), cfg)
    with torch.no_grad():
        m.replay(events)
    for rec in [*m.nodes.values(), *m.edges.values()]:
        assert rec.z.tolist() == [0.5] * 4


def test_sigmoid_range_and_determinism():
    header, events = random_valid_stream(np.random.default_rng(4), 300, universe=8)
    cfg = ModelConfig(2, 1, embed_dim=4, attr_embed_dim=3, raw_dim=3)
    # default init scale; sigmoid saturates to exactly 1.0 in float64 past ~37
    params = ModelParams.initialize(cfg, seed=1)
    runs = []
    for _ in range(2):
        m = FDGNN(header, params, cfg)
        traj = []
        with torch.no_grad():
            for ev in events:
                m.observe(ev)
                traj.append(m.embedding(ev.subject).clone())
        runs.append(traj)
        for rec in [*m.nodes.values(), *m.edges.values()]:
            assert bool(((rec.z > 0) & (rec.z < 1)).all())
    assert all(torch.equal(a, b) for a, b in zip(*runs))


def test_neighborhood_weights_sum_to_one(toy_header, toy_events):
    cfg = ModelConfig(2, 1, embed_dim=3, attr_embed_dim=3)
    m = FDGNN(toy_header, ModelParams.initialize(cfg, seed=0), cfg)
    with torch.no_grad():
        m.replay(toy_events)
    w = m.neighborhood_weights(1)
    assert set(w) == {0, 2}
    assert abs(sum(w.values()) - 1.0) < 1e-12


def test_one_step_gradients_match_finite_differences():
    cfg = ModelConfig(2, 1, embed_dim=3, attr_embed_dim=2, raw_dim=2)
    header = StreamHeader(2, 1, 4, g0_nodes=((0, (1.0, -0.5)), (1, (0.3, 0.8)), (2, (0.1, 0.1))), g0_edges=(((0, 1), (0.4,)),))
    events = [Event(0, 0.7, 2, (1, 2), (0.9,)), Event(1, 1.3, 5, (0, 1), (-0.6,)), Event(2, 2.0, 4, 0, (0.2, 0.2))]
    params = ModelParams.initialize(cfg, seed=3, scale=0.5)
    w = torch.linspace(-1.0, 1.0, 3, dtype=DTYPE)

    def f(p):
        m = FDGNN(header, p, cfg)
        m.replay(events)
        return (m.embedding((0, 1)) @ w) + (m.embedding(0) @ w) + (m.embedding((1, 2)) @ w)

    loss = f(params)
    names = [n for n in params if n.startswith(("emb.", "attr."))]
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    for n, g in zip(names, grads):
        g = torch.zeros_like(params[n]) if g is None else g
        assert rel_err(g, central_difference(f, params, n)) < 1e-4, n
