import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _helpers import path_graph, polluted_flow
from reactionmap.errors import LengthMismatch, NotAdmissible
from reactionmap.generators import random_admissible_flow, random_library
from reactionmap.graph_core import (
    EmbeddedGraph,
    check_alpha,
    energy,
    energy_from_beta,
    find_directed_cycle,
    incidence_matrix,
    is_acyclic,
    is_admissible,
    kirchhoff_residual,
    remove_cycles,
)


def triangle():
    V = [(0, 0), (1, 0), (0, 1)]
    return EmbeddedGraph.build(V, [(0, 1), (1, 2), (2, 0)], [0, 0, 0], beta=[1, 1, 1])


def test_incidence_single_edge():
    assert incidence_matrix(path_graph(2)).tolist() == [[1.0], [-1.0]]


def test_incidence_two_edge_path():
    A = incidence_matrix(path_graph(3))
    assert A.tolist() == [[1, 0], [-1, 1], [0, -1]]


def test_incidence_columns_sum_to_zero():
    g = random_library(np.random.default_rng(3))
    assert np.all(incidence_matrix(g).sum(axis=0) == 0)


def test_residual_examples():
    g = path_graph(2)
    assert kirchhoff_residual(g, [1.0]).tolist() == [0.0, 0.0]
    assert kirchhoff_residual(g, [0.0]).tolist() == [-1.0, 1.0]
    with pytest.raises(LengthMismatch):
        kirchhoff_residual(g, [1.0, 2.0])


def test_relay_vertex_balances():
    # two half-unit sources merging at a relay, then one edge to the sink
    V = [(0, 1), (0, -1), (1, 0), (2, 0)]
    g = EmbeddedGraph.build(V, [(0, 2), (1, 2), (2, 3)], [0.5, 0.5, 0, -1], beta=[1, 1, 1])
    r = kirchhoff_residual(g, [0.5, 0.5, 1.0])
    assert r[2] == 0.0
    assert is_admissible(g, [0.5, 0.5, 1.0])


def test_residual_matches_incidence_product():
    rng = np.random.default_rng(0)
    g = random_library(rng)
    w = rng.uniform(0, 1, g.n_edges)
    np.testing.assert_allclose(kirchhoff_residual(g, w), incidence_matrix(g) @ w - g.b, atol=1e-15)


def test_energy_examples():
    assert energy_from_beta([2.0], [4.0], 0.5) == 4.0
    g = random_library(np.random.default_rng(1))
    assert energy(g, np.zeros(g.n_edges), 0.5) == 0.0
    split = energy_from_beta([1, 1], [0.5, 0.5], 0.5)
    assert split == pytest.approx(2 * np.sqrt(0.5)) and split > energy_from_beta([1], [1.0], 0.5)


def test_alpha_range():
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            check_alpha(bad)


def test_graph_validation():
    V = [(0, 0), (1, 0)]
    with pytest.raises(ValueError):
        EmbeddedGraph.build(V, [(0, 1)], [1.0, -0.9], beta=[1])
    with pytest.raises(ValueError):
        EmbeddedGraph.build(V, [(0, 0, [(1, 1)])], [0, 0], beta=[1])
    with pytest.raises(ValueError):
        EmbeddedGraph.build(V, [(0, 1)], [1, -1], beta=[0.0])


def test_curved_edges_keep_endpoints():
    g = EmbeddedGraph.build([(0, 0), (2, 0)], [(0, 1, [(1, 1)])], [1, -1], beta=[1.0])
    assert g.lengths[0] == pytest.approx(2 * np.sqrt(2))


nonneg = st.floats(0, 1e3, allow_nan=False)
alphas = st.floats(0.01, 0.99)


@given(nonneg, nonneg, alphas)
def test_subadditivity(w1, w2, a):
    lhs, rhs = (w1 + w2) ** a, w1**a + w2**a
    assert lhs <= rhs * (1 + 1e-12)
    if w1 == 0 or w2 == 0:
        assert lhs == pytest.approx(rhs, rel=1e-12)
    elif min(w1, w2) > 1e-6:
        assert lhs < rhs


@given(st.integers(0, 10**6), alphas, st.floats(0.01, 100))
@settings(max_examples=60, deadline=None)
def test_energy_monotone_and_homogeneous(seed, a, lam):
    rng = np.random.default_rng(seed)
    beta = rng.uniform(0.5, 2, 6)
    w = rng.uniform(0, 2, 6)
    assert energy_from_beta(lam * beta, w, a) == pytest.approx(lam * energy_from_beta(beta, w, a), rel=1e-12)
    bumped = w.copy()
    bumped[rng.integers(6)] += rng.uniform(0, 1)
    assert energy_from_beta(beta, bumped, a) >= energy_from_beta(beta, w, a)


def test_pure_cycle_cancels():
    g = triangle()
    assert find_directed_cycle(g, [1, 1, 1]) is not None
    assert remove_cycles(g, [1.0, 1.0, 1.0]).tolist() == [0.0, 0.0, 0.0]


def test_acyclic_flow_unchanged():
    g = path_graph(4)
    w = np.ones(3)
    assert np.array_equal(remove_cycles(g, w), w)


def test_cycle_sharing_an_edge_with_the_path():
    # path 0->1->2 carries the unit mass; edges 1->3 and 3->1 close a cycle with flow 0.3 through vertex 1
    V = [(0, 0), (1, 0), (2, 0), (1, 1)]
    E = [(0, 1), (1, 2), (1, 3), (3, 1)]
    g = EmbeddedGraph.build(V, E, [1, 0, -1, 0], beta=[1, 1, 1, 1])
    polluted = np.array([1.0, 1.0, 0.3, 0.3])
    # route the cycle over a shared edge instead: 2->1 back-edge plus 1->2
    V2 = [(0, 0), (1, 0), (2, 0)]
    g2 = EmbeddedGraph.build(V2, [(0, 1), (1, 2), (2, 1)], [1, 0, -1], beta=[1, 1, 1])
    w2 = np.array([1.0, 1.3, 0.3])
    for gg, ww, clean in ((g, polluted, [1, 1, 0, 0]), (g2, w2, [1, 1, 0])):
        out = remove_cycles(gg, ww)
        np.testing.assert_allclose(out, clean, atol=1e-15)
        assert is_admissible(gg, out)
        for a in (0.2, 0.5, 0.9):
            assert energy(gg, out, a) < energy(gg, ww, a)


def test_antiparallel_pair_is_a_two_cycle():
    g = EmbeddedGraph.build([(0, 0), (1, 0)], [(0, 1), (1, 0)], [1, -1], beta=[1, 1])
    assert remove_cycles(g, [1.5, 0.5]).tolist() == [1.0, 0.0]


def test_remove_cycles_needs_admissible_input():
    with pytest.raises(NotAdmissible):
        remove_cycles(path_graph(3), [1.0, 0.5])


@given(st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_remove_cycles_properties(seed):
    rng = np.random.default_rng(seed)
    g, w = polluted_flow(rng)
    out = remove_cycles(g, w)
    assert is_acyclic(g, out)
    assert np.all(out <= w + 1e-15)
    assert np.abs(kirchhoff_residual(g, out) - kirchhoff_residual(g, w)).max() <= 1e-12
    for a in (0.3, 0.7):
        assert energy(g, out, a) < energy(g, w, a)


@given(st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_random_admissible_flows_are_admissible(seed):
    rng = np.random.default_rng(seed)
    g = random_library(rng)
    assert is_admissible(g, random_admissible_flow(g, rng))
