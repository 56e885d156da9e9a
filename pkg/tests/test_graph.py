"""Similarity graph, two-stage pruning, and conversation extraction."""

import json

import numpy as np
import pytest

from untangler import graph
from untangler.graph import (Conversation, ReplyGraph, average_score,
                             extract_conversations, export_graph, orient,
                             parse_graph_json, prune_average,
                             similarity_matrix, thin)
from untangler.temporal import Range

from oracles import reference_prune, reference_thin


def random_sim(rng, n):
    m = rng.uniform(-1, 1, size=(n, n))
    m = (m + m.T) / 2
    np.fill_diagonal(m, 0.0)
    return m


def random_partition(rng, n):
    cuts = sorted(rng.choice(range(1, n), size=rng.integers(0, n - 1), replace=False)) if n > 1 else []
    bounds = [0] + list(cuts) + [n]
    return [(int(a), int(b)) for a, b in zip(bounds, bounds[1:])]


def random_forward_graph(rng, n):
    g = ReplyGraph(n=n)
    parents, children, weights = [], [], []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < 0.4:
                parents.append(u)
                children.append(v)
                weights.append(float(rng.uniform(0.1, 1.0)))
    g.parent = np.array(parents, dtype=np.int64)
    g.child = np.array(children, dtype=np.int64)
    g.weight = np.array(weights, dtype=np.float64)
    return g


class TestSimilarityMatrix:
    def test_known_values(self):
        emb = np.array([[1.0, 0.0], [0.0, 2.0], [-3.0, 0.0]])
        sim = similarity_matrix(emb)
        np.testing.assert_allclose(sim, [[0, 0, -1], [0, 0, 0], [-1, 0, 0]], atol=1e-12)

    def test_zero_rows_isolated(self):
        sim = similarity_matrix(np.array([[1.0, 1.0], [0.0, 0.0], [2.0, 2.0]]))
        np.testing.assert_array_equal(sim[1], 0.0)
        assert sim[0, 2] == pytest.approx(1.0)

    def test_symmetric_zero_diagonal_bounded(self):
        rng = np.random.default_rng(1)
        sim = similarity_matrix(rng.standard_normal((12, 5)))
        np.testing.assert_allclose(sim, sim.T)
        np.testing.assert_array_equal(np.diag(sim), 0.0)
        assert np.all(np.abs(sim) <= 1.0)

    def test_rejects_non_matrix(self):
        with pytest.raises(ValueError):
            similarity_matrix(np.zeros(3))


class TestAverageScore:
    def test_strict_upper_triangle_mean(self):
        sim = np.array([[0.0, 0.2, 0.4], [0.2, 0.0, 0.9], [0.4, 0.9, 0.0]])
        assert average_score(sim) == pytest.approx((0.2 + 0.4 + 0.9) / 3)

    def test_small_matrices(self):
        assert average_score(np.zeros((0, 0))) == 0.0
        assert average_score(np.zeros((1, 1))) == 0.0


class TestPruneAverage:
    def test_matches_reference_on_random_inputs(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = int(rng.integers(2, 10))
            sim = random_sim(rng, n)
            parts = random_partition(rng, n)
            ranges = [Range(a, b) for a, b in parts]
            np.testing.assert_array_equal(prune_average(sim, ranges),
                                          reference_prune(sim, parts))

    def test_cross_range_entries_removed(self):
        sim = np.full((4, 4), 0.9)
        np.fill_diagonal(sim, 0.0)
        pruned = prune_average(sim, [Range(0, 2), Range(2, 4)])
        assert pruned[0, 2] == 0.0 and pruned[1, 3] == 0.0
        assert pruned[0, 1] == 0.9 and pruned[2, 3] == 0.9

    def test_bad_partitions_rejected(self):
        sim = np.zeros((3, 3))
        for ranges in ([], [Range(0, 2)], [Range(1, 3)],
                       [Range(0, 2), Range(1, 3)], [Range(0, 3), Range(3, 3)]):
            with pytest.raises(ValueError):
                prune_average(sim, ranges)

    def test_empty_matrix_allowed(self):
        out = prune_average(np.zeros((0, 0)), [])
        assert out.shape == (0, 0)


class TestOrientAndThin:
    def test_orient_uses_upper_triangle_only(self):
        pruned = np.array([[0.0, 0.8, 0.0], [0.8, 0.0, 0.5], [0.0, 0.5, 0.0]])
        g = orient(pruned)
        assert g.edge_dict() == {(0, 1): 0.8, (1, 2): 0.5}
        assert g.n == 3

    def test_thin_matches_reference_on_random_graphs(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            n = int(rng.integers(1, 12))
            g = random_forward_graph(rng, n)
            thinned = thin(g)
            assert thinned.edge_dict() == reference_thin(n, g.edge_dict())
            # forest invariant: in-degree <= 1
            assert np.unique(thinned.child).size == thinned.child.size

    def test_thin_keeps_latest_parent(self):
        g = ReplyGraph(n=4,
                       parent=np.array([0, 1, 2]), child=np.array([3, 3, 3]),
                       weight=np.array([0.9, 0.5, 0.2]))
        assert thin(g).edge_dict() == {(2, 3): 0.2}

    def test_thin_empty(self):
        thinned = thin(ReplyGraph(n=5))
        assert thinned.n == 5 and thinned.n_edges == 0

    def test_roots_and_children(self):
        g = ReplyGraph(n=4, parent=np.array([0, 0]), child=np.array([1, 3]),
                       weight=np.array([1.0, 1.0]))
        assert g.roots() == [0, 2]
        assert g.children(0) == [1, 3]


class TestExtractConversations:
    def test_two_trees(self):
        g = ReplyGraph(n=5, parent=np.array([0, 1, 3]), child=np.array([1, 2, 4]),
                       weight=np.ones(3))
        convs = extract_conversations(g)
        assert convs == [
            Conversation(root=0, members=[0, 1, 2], parents={1: 0, 2: 1}),
            Conversation(root=3, members=[3, 4], parents={4: 3}),
        ]

    def test_isolated_nodes_are_singletons(self):
        convs = extract_conversations(ReplyGraph(n=3))
        assert [c.members for c in convs] == [[0], [1], [2]]

    def test_non_forest_rejected(self):
        g = ReplyGraph(n=3, parent=np.array([0, 1]), child=np.array([2, 2]),
                       weight=np.ones(2))
        with pytest.raises(ValueError, match="in-degree"):
            extract_conversations(g)


class TestExport:
    def test_json_round_trip(self):
        g = ReplyGraph(n=3, parent=np.array([0]), child=np.array([2]),
                       weight=np.array([0.75]))
        again = parse_graph_json(export_graph(g, "json"))
        assert again.n == g.n
        assert again.edge_dict() == g.edge_dict()

    def test_json_payload_shape(self):
        g = ReplyGraph(n=2, parent=np.array([0]), child=np.array([1]),
                       weight=np.array([0.5]))
        payload = json.loads(export_graph(g, "json"))
        assert payload == {"n": 2, "edges": [{"parent": 0, "child": 1, "w": 0.5}],
                           "roots": [0]}

    def test_dot_output(self):
        g = ReplyGraph(n=2, parent=np.array([0]), child=np.array([1]),
                       weight=np.array([0.51239]))
        text = export_graph(g, "dot").decode()
        assert text.startswith("digraph replies {")
        assert '0 -> 1 [label="0.5124"];' in text
        assert text.rstrip().endswith("}")

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            export_graph(ReplyGraph(n=1), "yaml")
