"""Graph construction, evaluation, and subgraph extraction."""

import numpy as np
import pytest

from oracles import random_dense_graph
from zonotrain import ops
from zonotrain.errors import ReachabilityError, StructureError
from zonotrain.graph import Graph, extract_subgraph
from zonotrain.tensor import OpKind


def _dense_chain():
    g = Graph()
    x = g.placeholder((-1, 2), "x")
    w = g.variable("w", np.array([[1.0, 0.0], [0.0, 1.0]]))
    b = g.variable("b", np.array([0.5, -0.5]))
    h = g.apply(OpKind.MATMUL, x, w)
    h2 = g.apply(OpKind.BIAS_ADD, h, b)
    y = g.apply(OpKind.RELU, h2)
    return g, x, w, b, h, h2, y


def test_forward_evaluates_chain():
    g, x, w, b, h, h2, y = _dense_chain()
    out, = g.evaluate({x: np.array([[1.0, -2.0]])}, [y])
    assert np.array_equal(out, [[1.5, 0.0]])


def test_forward_missing_placeholder_errors():
    g, x, *_, y = _dense_chain()
    with pytest.raises(StructureError, match="no value"):
        g.evaluate({}, [y])


def test_feeds_pin_intermediate_tensors():
    g, x, w, b, h, h2, y = _dense_chain()
    # feeding h2 directly means x is not needed at all
    out, = g.evaluate({h2: np.array([[-1.0, 3.0]])}, [y])
    assert np.array_equal(out, [[0.0, 3.0]])


def test_duplicate_variable_name_rejected():
    g = Graph()
    g.variable("w", np.zeros(2))
    with pytest.raises(StructureError):
        g.variable("w", np.ones(2))


def test_set_variable_role_check():
    g = Graph()
    x = g.placeholder((-1, 2), "x")
    with pytest.raises(StructureError):
        g.set_variable(x, np.zeros(2))
    w = g.variable("w", np.zeros(2))
    g.set_variable(w, np.ones(2))
    assert np.array_equal(g.values[w], np.ones(2))


def test_unknown_input_tensor_rejected():
    g = Graph()
    g.placeholder((-1, 2), "x")
    with pytest.raises(StructureError):
        g.add_op(OpKind.NEG, [999])


def test_extra_attr_rejected():
    g = Graph()
    x = g.placeholder((-1, 2), "x")
    with pytest.raises(StructureError):
        g.add_op(OpKind.RELU, [x], {"bogus": 1})


def test_topological_order_respects_dependencies():
    g, x, w, b, h, h2, y = _dense_chain()
    order = g.topological_order()
    pos = {n: i for i, n in enumerate(order)}
    assert pos[g.producer[h]] < pos[g.producer[h2]] < pos[g.producer[y]]


def test_extract_subgraph_dense_chain():
    g, x, w, b, h, h2, y = _dense_chain()
    idx = extract_subgraph(g, x, [y])
    assert idx.members == {x, h, h2, y}
    assert w not in idx.members and b not in idx.members
    assert idx.ops == {g.producer[h], g.producer[h2], g.producer[y]}


def test_extract_subgraph_input_is_output():
    g = Graph()
    x = g.placeholder((-1, 2), "x")
    idx = extract_subgraph(g, x, [x])
    assert idx.members == {x}
    assert idx.ops == set()


def test_extract_subgraph_diamond():
    g = Graph()
    x = g.placeholder((-1, 2), "x")
    a = g.apply(OpKind.RELU, x)
    b = g.apply(OpKind.NEG, x)
    out = g.apply(OpKind.ADD, a, b)
    side = g.apply(OpKind.SIGMOID, b)  # dead branch for this extraction
    idx = extract_subgraph(g, x, [out])
    assert idx.members == {x, a, b, out}
    assert g.producer[side] not in idx.ops


def test_extract_subgraph_unreachable_output():
    g = Graph()
    x = g.placeholder((-1, 2), "x")
    other = g.placeholder((-1, 2), "other")
    y = g.apply(OpKind.RELU, other)
    with pytest.raises(ReachabilityError):
        extract_subgraph(g, x, [y])
    with pytest.raises(StructureError):
        extract_subgraph(g, 12345, [y])


def _brute_force_members(g, x, outputs):
    fwd = {x}
    changed = True
    while changed:
        changed = False
        for n in g.nodes:
            if any(t in fwd for t in n.inputs):
                for o in n.outputs:
                    if o not in fwd:
                        fwd.add(o)
                        changed = True
    bwd = set(outputs)
    changed = True
    while changed:
        changed = False
        for n in g.nodes:
            if any(o in bwd for o in n.outputs):
                for t in n.inputs:
                    if t not in bwd:
                        bwd.add(t)
                        changed = True
    return fwd & bwd


def test_extract_subgraph_matches_brute_force_on_random_graphs():
    rng = np.random.default_rng(11)
    for _ in range(25):
        g, x, out, params, feed, kinks = random_dense_graph(rng)
        assert len(g.nodes) <= 30
        idx = extract_subgraph(g, x, [out])
        assert idx.members == _brute_force_members(g, x, [out])
        # every op must consume a member and produce a member
        for n in idx.ops:
            node = g.nodes[n]
            assert any(t in idx.members for t in node.inputs)
            assert any(o in idx.members for o in node.outputs)


def test_forward_only_computes_needed_nodes():
    g = Graph()
    x = g.placeholder((-1, 2), "x")
    y = g.apply(OpKind.RELU, x)
    dead = g.placeholder((-1, 2), "dead")
    g.apply(OpKind.LOG, dead)  # would need a feed if ever evaluated
    out, = g.evaluate({x: np.array([[1.0, -1.0]])}, [y])
    assert np.array_equal(out, [[1.0, 0.0]])
