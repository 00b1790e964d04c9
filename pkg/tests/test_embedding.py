"""Embedding providers and hierarchy-aware propagation."""

from __future__ import annotations

import math
import random

import numpy as np
import pytest

from graphsolve.embedding import (
    DeterministicEmbedder,
    EmbeddingError,
    HierarchicalPropagator,
    PropagationConfig,
    embed_text,
    load_table,
    node_text,
    normalize,
    propagate,
    save_table,
)
from graphsolve.kg import topo_order

from conftest import callable_node, catalogue, graph_from


def unit(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return arr / np.linalg.norm(arr)


def chain_graph():
    return graph_from(
        [catalogue("root", ["root/child"]), callable_node("root/child")], roots=["root"]
    )


class TestNormalize:
    def test_three_four(self):
        assert np.allclose(normalize([3.0, 4.0]), [0.6, 0.8])

    def test_idempotent_on_unit_vectors(self):
        v = unit([1.0, 2.0, -0.5])
        assert np.allclose(normalize(v), v)

    def test_zero_vector_rejected(self):
        with pytest.raises(EmbeddingError, match="zero"):
            normalize([0.0, 0.0])


class TestNodeText:
    def test_callable_concatenation(self):
        node = callable_node(
            "lib/solve", name="solve", signature="solve(f, *symbols)", doc="Solves equations."
        )
        assert node_text(node) == "solve\nsolve(f, *symbols)\nSolves equations."

    def test_catalogue_with_empty_summary(self):
        node = catalogue("lib/solvers", [], title="solvers", summary="")
        assert node_text(node) == "solvers\n"

    def test_embedded_newlines_preserved(self):
        node = callable_node("lib/f", name="f", signature="f()", doc="line one\nline two")
        assert node_text(node).endswith("line one\nline two")


class TestDeterministicEmbedder:
    def test_same_text_same_vector(self):
        provider = DeterministicEmbedder(dimension=64)
        a = embed_text(provider, "solve a quadratic equation")
        b = embed_text(provider, "solve a quadratic equation")
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        provider = DeterministicEmbedder(dimension=128)
        for text in ("a", "b", "a longer text with more words"):
            assert abs(np.linalg.norm(embed_text(provider, text)) - 1.0) < 1e-6

    def test_no_collisions_on_corpus(self):
        # Oracle for distinctness: 100 distinct strings must embed to 100
        # pairwise non-identical vectors.
        provider = DeterministicEmbedder(dimension=32)
        corpus = [f"synthetic query number {i}" for i in range(100)]
        vectors = [embed_text(provider, text) for text in corpus]
        for i in range(len(vectors)):
            for j in range(i + 1, len(vectors)):
                assert not np.array_equal(vectors[i], vectors[j])

    def test_empty_text_rejected(self):
        with pytest.raises(EmbeddingError, match="empty"):
            embed_text(DeterministicEmbedder(dimension=8), "")


class TestPropagate:
    def test_w_one_reproduces_raw(self, small_graph):
        rng = np.random.default_rng(11)
        raw = {i: unit(rng.standard_normal(16)) for i in small_graph.nodes}
        table = propagate(small_graph, raw, PropagationConfig(weight=1.0))
        for node_id, vector in raw.items():
            assert np.allclose(table[node_id], vector, atol=1e-9)

    def test_w_zero_collapses_chain_to_root(self):
        graph = chain_graph()
        raw = {"root": unit([1.0, 0.0]), "root/child": unit([0.0, 1.0])}
        table = propagate(graph, raw, PropagationConfig(weight=0.0))
        assert np.allclose(table["root/child"], raw["root"], atol=1e-9)

    def test_hand_computed_two_node_chain(self):
        # Direct evaluation of the fusion rule: 0.5*(0,1)+0.5*(1,0) scaled
        # to unit length gives (0.7071, 0.7071).
        graph = chain_graph()
        raw = {"root": np.array([1.0, 0.0]), "root/child": np.array([0.0, 1.0])}
        table = propagate(graph, raw, PropagationConfig(weight=0.5))
        assert np.allclose(table["root/child"], [0.7071, 0.7071], atol=1e-4)

    def test_all_outputs_unit_norm(self, small_graph):
        rng = np.random.default_rng(3)
        raw = {i: unit(rng.standard_normal(8)) for i in small_graph.nodes}
        table = propagate(small_graph, raw, PropagationConfig(weight=0.3))
        for vector in table.vectors.values():
            assert abs(np.linalg.norm(vector) - 1.0) < 1e-6

    def test_multi_parent_mean(self):
        graph = graph_from(
            [
                catalogue("root", ["root/x", "root/y"]),
                catalogue("root/x", ["shared"]),
                catalogue("root/y", ["shared"]),
                callable_node("shared"),
            ],
            roots=["root"],
        )
        raw = {
            "root": unit([1.0, 0.0, 0.0]),
            "root/x": unit([0.0, 1.0, 0.0]),
            "root/y": unit([0.0, 0.0, 1.0]),
            "shared": unit([1.0, 1.0, 1.0]),
        }
        w = 0.5
        table = propagate(graph, raw, PropagationConfig(weight=w))
        # Independent recursive evaluation of the same rule.
        e_x = unit(w * raw["root/x"] + (1 - w) * raw["root"])
        e_y = unit(w * raw["root/y"] + (1 - w) * raw["root"])
        parent = unit((e_x + e_y) / 2.0)
        expected = unit(w * raw["shared"] + (1 - w) * parent)
        assert np.allclose(table["shared"], expected, atol=1e-12)

    def test_missing_raw_vector(self, tiny_graph):
        raw = {"lib": unit([1.0, 0.0])}
        with pytest.raises(EmbeddingError, match="missing"):
            propagate(tiny_graph, raw)

    def test_dimension_mismatch(self, tiny_graph):
        raw = {"lib": unit([1.0, 0.0]), "lib/solve": unit([1.0, 0.0, 0.0])}
        with pytest.raises(EmbeddingError, match="dimension"):
            propagate(tiny_graph, raw)

    def test_unnormalized_raw_rejected(self, tiny_graph):
        raw = {"lib": np.array([1.0, 1.0]), "lib/solve": unit([0.0, 1.0])}
        with pytest.raises(EmbeddingError, match="not normalized"):
            propagate(tiny_graph, raw)

    def test_degenerate_fusion_names_node(self):
        graph = chain_graph()
        raw = {"root": unit([1.0, 0.0]), "root/child": unit([-1.0, 0.0])}
        with pytest.raises(EmbeddingError, match="root/child"):
            propagate(graph, raw, PropagationConfig(weight=0.5))

    def test_weight_outside_range_rejected(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            PropagationConfig(weight=1.5)

    def test_propagation_is_deterministic(self, small_graph):
        rng = np.random.default_rng(5)
        raw = {i: unit(rng.standard_normal(8)) for i in small_graph.nodes}
        one = propagate(small_graph, raw, PropagationConfig(weight=0.7))
        two = propagate(small_graph, raw, PropagationConfig(weight=0.7))
        for node_id in raw:
            assert np.array_equal(one[node_id], two[node_id])

    def test_homonym_separation(self):
        # Identically-texted callables under different catalogues must split
        # apart as soon as parent context is blended in.
        graph = graph_from(
            [
                catalogue("root", ["root/algebra", "root/geometry"]),
                catalogue("root/algebra", ["root/algebra/solve"]),
                catalogue("root/geometry", ["root/geometry/solve"]),
                callable_node("root/algebra/solve", name="solve"),
                callable_node("root/geometry/solve", name="solve"),
            ],
            roots=["root"],
        )
        provider = DeterministicEmbedder(dimension=48)
        raw = {i: embed_text(provider, node_text(graph.nodes[i])) for i in graph.nodes}
        twin_a, twin_b = "root/algebra/solve", "root/geometry/solve"
        assert np.array_equal(raw[twin_a], raw[twin_b])  # same text, same raw vector
        table = propagate(graph, raw, PropagationConfig(weight=0.5))
        similarity = float(np.dot(table[twin_a], table[twin_b]))
        assert similarity < 1.0 - 1e-6


class TestEstimatorApi:
    def test_transform_matches_propagate(self, small_graph):
        rng = np.random.default_rng(9)
        raw = {i: unit(rng.standard_normal(8)) for i in small_graph.nodes}
        propagator = HierarchicalPropagator(weight=0.4).fit(small_graph)
        X = np.stack([raw[i] for i in propagator.node_order_])
        out = propagator.transform(X)
        table = propagate(small_graph, raw, PropagationConfig(weight=0.4))
        for row, node_id in enumerate(propagator.node_order_):
            assert np.array_equal(out[row], table[node_id])

    def test_node_order_is_topological(self, small_graph):
        propagator = HierarchicalPropagator().fit(small_graph)
        assert propagator.node_order_ == topo_order(small_graph)

    def test_get_params_round_trip(self):
        propagator = HierarchicalPropagator(weight=0.25)
        params = propagator.get_params()
        assert params["weight"] == 0.25
        clone = HierarchicalPropagator(**params)
        assert clone.get_params() == params

    def test_unfitted_transform_rejected(self):
        with pytest.raises(EmbeddingError, match="not fitted"):
            HierarchicalPropagator().transform(np.zeros((1, 4)))


class TestCacheFile:
    def test_round_trip(self, small_graph, tmp_path):
        provider = DeterministicEmbedder(dimension=16)
        raw = {i: embed_text(provider, node_text(small_graph.nodes[i])) for i in small_graph.nodes}
        table = propagate(small_graph, raw, provider=provider.identity)
        path = tmp_path / "cache.json"
        save_table(table, path)
        reloaded = load_table(path)
        assert reloaded.dimension == table.dimension
        assert reloaded.weight == table.weight
        assert reloaded.provider == table.provider
        for node_id in table.vectors:
            assert np.allclose(reloaded[node_id], table[node_id], atol=1e-12)

    def test_cache_bytes_are_deterministic(self, small_graph, tmp_path):
        provider = DeterministicEmbedder(dimension=8)
        raw = {i: embed_text(provider, node_text(small_graph.nodes[i])) for i in small_graph.nodes}
        table = propagate(small_graph, raw, provider=provider.identity)
        first = tmp_path / "one.json"
        second = tmp_path / "two.json"
        save_table(table, first)
        save_table(table, second)
        assert first.read_bytes() == second.read_bytes()


def test_distinct_texts_give_distinct_vectors_property():
    rng = random.Random(13)
    provider = DeterministicEmbedder(dimension=24)
    seen = {}
    for _ in range(200):
        text = "".join(rng.choice("abcdefg ") for _ in range(rng.randint(1, 12))).strip() or "x"
        vector = embed_text(provider, text)
        if text in seen:
            assert np.array_equal(seen[text], vector)
        else:
            for other_text, other in seen.items():
                if other_text != text:
                    assert not np.array_equal(other, vector)
            seen[text] = vector
    assert math.isclose(float(np.linalg.norm(next(iter(seen.values())))), 1.0, abs_tol=1e-9)
