"""Cosine retrieval: exactness against a brute-force oracle."""

from __future__ import annotations

import numpy as np
import pytest

from graphsolve.embedding import DeterministicEmbedder, embed_text, node_text, propagate
from graphsolve.retrieval import (
    CosineRetriever,
    RetrievalError,
    build_index,
    cosine,
    mismatch_diagnostic,
    query,
)

from conftest import callable_node, catalogue, graph_from


def unit(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr / np.linalg.norm(arr)


def brute_force_ranking(matrix, ids, q, n):
    """Oracle: score every entry with cosine() and sort by (-score, id)."""
    scored = [(cosine(row, q), node_id) for row, node_id in zip(matrix, ids)]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return scored[:n]


class TestCosine:
    def test_identical_unit_vectors(self):
        v = unit([0.3, -0.4, 0.5])
        assert cosine(v, v) == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0, abs=1e-9)

    def test_forty_five_degrees(self):
        assert cosine([1.0, 0.0], [0.7071, 0.7071]) == pytest.approx(0.7071, abs=1e-4)

    def test_symmetry(self):
        a, b = unit([1.0, 2.0, 3.0]), unit([-1.0, 0.5, 2.0])
        assert cosine(a, b) == pytest.approx(cosine(b, a), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(RetrievalError, match="dimension"):
            cosine([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_zero_vector(self):
        with pytest.raises(RetrievalError, match="zero"):
            cosine([0.0, 0.0], [1.0, 0.0])


@pytest.fixture
def indexed_graph(small_graph):
    provider = DeterministicEmbedder(dimension=32)
    raw = {i: embed_text(provider, node_text(small_graph.nodes[i])) for i in small_graph.nodes}
    table = propagate(small_graph, raw, provider=provider.identity)
    return small_graph, table


class TestBuildIndex:
    def test_callables_only(self, indexed_graph):
        graph, table = indexed_graph
        index = build_index(graph, table)
        assert len(index) == 3
        assert set(index.ids_) == set(graph.callable_ids())

    def test_empty_index_returns_no_hits(self):
        graph = graph_from([catalogue("root", [])], roots=["root"])
        provider = DeterministicEmbedder(dimension=8)
        raw = {"root": embed_text(provider, "root")}
        table = propagate(graph, raw)
        index = build_index(graph, table)
        assert len(index) == 0
        assert index.query(unit(np.ones(8)), 3) == []

    def test_rebuild_is_identical(self, indexed_graph):
        graph, table = indexed_graph
        one = build_index(graph, table)
        two = build_index(graph, table)
        assert one.ids_ == two.ids_
        assert np.array_equal(one.matrix_, two.matrix_)

    def test_missing_vector_rejected(self, indexed_graph):
        graph, table = indexed_graph
        vectors = dict(table.vectors)
        vectors.pop(graph.callable_ids()[0])
        broken = type(table)(
            vectors=vectors, dimension=table.dimension, weight=table.weight,
            provider=table.provider,
        )
        with pytest.raises(RetrievalError, match="missing"):
            build_index(graph, broken)


class TestQuery:
    def test_self_retrieval(self, indexed_graph):
        graph, table = indexed_graph
        index = build_index(graph, table)
        target = graph.callable_ids()[1]
        hits = index.query(table[target], 1)
        assert hits[0].node_id == target
        assert hits[0].score == pytest.approx(1.0, abs=1e-6)
        assert hits[0].rank == 1

    def test_n_larger_than_index(self, indexed_graph):
        graph, table = indexed_graph
        index = build_index(graph, table)
        hits = index.query(table[graph.callable_ids()[0]], 99)
        assert len(hits) == 3
        assert [h.rank for h in hits] == [1, 2, 3]

    def test_three_entry_example(self):
        # Oracle: exhaustive pairwise cosine over all three entries.
        ids = ["A", "B", "C"]
        matrix = np.array([[1.0, 0.0], [0.0, 1.0], [0.7071, 0.7071]])
        matrix = matrix / np.linalg.norm(matrix, axis=1, keepdims=True)
        index = CosineRetriever().fit(matrix, ids)
        hits = index.query(np.array([1.0, 0.0]), 2)
        assert [h.node_id for h in hits] == ["A", "C"]
        assert hits[0].score == pytest.approx(1.0, abs=1e-6)
        assert hits[1].score == pytest.approx(0.7071, abs=1e-4)

    def test_zero_n_rejected(self, indexed_graph):
        graph, table = indexed_graph
        index = build_index(graph, table)
        with pytest.raises(RetrievalError, match="positive"):
            index.query(table[graph.callable_ids()[0]], 0)

    def test_dimension_mismatch_rejected(self, indexed_graph):
        graph, table = indexed_graph
        index = build_index(graph, table)
        with pytest.raises(ValueError, match="dimension"):
            index.query(unit(np.ones(4)), 1)

    def test_tie_break_is_lexicographic(self):
        v = unit([1.0, 1.0])
        index = CosineRetriever().fit(np.stack([v, v, v]), ["b", "a", "c"])
        hits = index.query(v, 3)
        assert [h.node_id for h in hits] == ["a", "b", "c"]
        assert [h.rank for h in hits] == [1, 2, 3]

    def test_functional_alias(self, indexed_graph):
        graph, table = indexed_graph
        index = build_index(graph, table)
        target = graph.callable_ids()[0]
        assert query(index, table[target], 1)[0].node_id == target

    def test_matches_brute_force_on_random_index(self):
        rng = np.random.default_rng(42)
        size, dim = 200, 16
        matrix = rng.standard_normal((size, dim))
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        ids = [f"node{i:04d}" for i in range(size)]
        index = CosineRetriever().fit(matrix, ids)
        for _ in range(50):
            q = rng.standard_normal(dim)
            q /= np.linalg.norm(q)
            hits = index.query(q, 10)
            expected = brute_force_ranking(matrix, ids, q, 10)
            assert [h.node_id for h in hits] == [node_id for _, node_id in expected]
            for hit, (score, _) in zip(hits, expected):
                assert hit.score == pytest.approx(score, abs=1e-9)

    def test_scores_non_increasing(self):
        rng = np.random.default_rng(1)
        matrix = rng.standard_normal((50, 8))
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        index = CosineRetriever().fit(matrix, [f"n{i}" for i in range(50)])
        q = matrix[0]
        hits = index.query(q, 50)
        scores = [h.score for h in hits]
        assert scores == sorted(scores, reverse=True)


class TestMismatchDiagnostic:
    def test_identical_sets(self):
        vectors = [unit([1.0, 2.0]), unit([0.5, -1.0])]
        assert mismatch_diagnostic(vectors, vectors) == pytest.approx(0.0, abs=1e-9)

    def test_orthogonal_centroids(self):
        assert mismatch_diagnostic([[1.0, 0.0]], [[0.0, 1.0]]) == pytest.approx(1.0, abs=1e-9)

    def test_forty_five_degree_example(self):
        # Oracle: 1 - cos(45 degrees) = 0.2929.
        value = mismatch_diagnostic([[1.0, 0.0]], [[0.7071, 0.7071]])
        assert value == pytest.approx(0.2929, abs=1e-4)

    def test_empty_set_rejected(self):
        with pytest.raises(RetrievalError, match="non-empty"):
            mismatch_diagnostic([], [[1.0, 0.0]])

    def test_zero_centroid_rejected(self):
        with pytest.raises(RetrievalError, match="zero"):
            mismatch_diagnostic([[1.0, 0.0], [-1.0, 0.0]], [[1.0, 0.0]])

    def test_range(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            nodes = [unit(rng.standard_normal(6)) for _ in range(4)]
            queries = [unit(rng.standard_normal(6)) for _ in range(3)]
            value = mismatch_diagnostic(nodes, queries)
            assert 0.0 <= value <= 2.0
