"""Text-embedding providers and hierarchy-aware propagation.

Raw per-node text embeddings are blended root-to-leaf so each node's final
vector carries both its own semantics and its ancestors' context:

    final = normalize(w * own + (1 - w) * parent_final)

with the normalized mean of parent finals standing in for `parent_final`
when a node has several parents. All vectors are kept unit-norm so cosine
similarity downstream reduces to a dot product.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import requests
from sklearn.base import BaseEstimator, TransformerMixin

from .kg import CallableNode, CatalogueNode, KnowledgeGraph, topo_order
from .validation import as_vector, ensure_unit

DEFAULT_DIMENSION = 1024
DEFAULT_WEIGHT = 0.7
MULTI_PARENT_POLICIES = ("mean-of-parents",)

# A fused vector below this norm only occurs when the child vector exactly
# cancels the parent context; treated as a hard error naming the node.
DEGENERATE_NORM = 1e-12


class EmbeddingError(Exception):
    """Provider failures, dimension mismatches, and degenerate fusions."""


def normalize(vector) -> np.ndarray:
    """Scale to unit Euclidean norm, preserving direction; rejects zero vectors."""
    arr = as_vector(vector)
    norm = float(np.linalg.norm(arr))
    if norm < DEGENERATE_NORM:
        raise EmbeddingError("cannot normalize a zero vector")
    return arr / norm


def node_text(node: CatalogueNode | CallableNode) -> str:
    """Text a node is embedded from: title+summary or name+signature+doc."""
    if isinstance(node, CatalogueNode):
        return f"{node.title}\n{node.summary}"
    return f"{node.name}\n{node.signature}\n{node.doc}"


class DeterministicEmbedder:
    """Offline provider: hashes the text into a seeded pseudo-random unit vector.

    Stands in for the remote embedding model in tests and air-gapped runs;
    identical text always maps to the identical vector.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    @property
    def identity(self) -> str:
        return f"hash-fallback-d{self.dimension}"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big")
        rng = np.random.default_rng(seed)
        values = rng.standard_normal(self.dimension)
        return values / np.linalg.norm(values)


class HttpEmbedder:
    """Remote provider speaking the common embeddings-endpoint wire shape."""

    def __init__(
        self,
        base_url: str,
        model: str,
        dimension: int = DEFAULT_DIMENSION,
        api_key: str | None = None,
        timeout: float = 60.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.dimension = dimension
        self.api_key = api_key
        self.timeout = timeout

    @property
    def identity(self) -> str:
        return f"{self.model}@{self.base_url}"

    def embed_batch(self, texts: list[str]) -> list[np.ndarray]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                f"{self.base_url}/embeddings",
                json={"input": texts, "model": self.model},
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            payload = response.json()
        except requests.RequestException as exc:
            raise EmbeddingError(f"embedding provider unreachable: {exc}") from exc
        try:
            rows = [np.asarray(item["embedding"], dtype=np.float64) for item in payload["data"]]
        except (KeyError, TypeError) as exc:
            raise EmbeddingError(f"unexpected provider response shape: {exc}") from exc
        if len(rows) != len(texts):
            raise EmbeddingError(f"provider returned {len(rows)} vectors for {len(texts)} inputs")
        return rows


def embed_text(provider, text: str) -> np.ndarray:
    """Embed one text through `provider` and normalize the result."""
    if not text:
        raise EmbeddingError("cannot embed empty text")
    (raw,) = provider.embed_batch([text])
    vec = as_vector(raw, name="provider output")
    if vec.shape[0] != provider.dimension:
        raise EmbeddingError(
            f"provider returned dimension {vec.shape[0]}, expected {provider.dimension}"
        )
    return normalize(vec)


def embed_nodes(provider, graph: KnowledgeGraph, batch_size: int = 64) -> dict[str, np.ndarray]:
    """Raw (pre-propagation) unit embeddings for every node of the graph."""
    ids = sorted(graph.nodes)
    vectors: dict[str, np.ndarray] = {}
    for start in range(0, len(ids), batch_size):
        chunk = ids[start : start + batch_size]
        rows = provider.embed_batch([node_text(graph.nodes[i]) for i in chunk])
        if len(rows) != len(chunk):
            raise EmbeddingError("provider returned a short batch")
        for node_id, row in zip(chunk, rows):
            vec = as_vector(row, name=f"embedding for {node_id!r}")
            if vec.shape[0] != provider.dimension:
                raise EmbeddingError(
                    f"provider returned dimension {vec.shape[0]} for node {node_id!r}"
                )
            vectors[node_id] = normalize(vec)
    return vectors


@dataclass(frozen=True)
class PropagationConfig:
    """Knobs for the root-to-leaf fusion pass."""

    weight: float = DEFAULT_WEIGHT
    multi_parent: str = "mean-of-parents"
    normalize_after_fusion: bool = True

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"weight must lie in [0, 1], got {self.weight}")
        if self.multi_parent not in MULTI_PARENT_POLICIES:
            raise ValueError(f"unknown multi-parent policy {self.multi_parent!r}")
        if not self.normalize_after_fusion:
            raise ValueError("normalize_after_fusion is fixed true")


@dataclass(frozen=True)
class EmbeddingTable:
    """Final unit vectors for every node of a graph, plus provenance."""

    vectors: dict[str, np.ndarray]
    dimension: int
    weight: float
    provider: str

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.vectors

    def __getitem__(self, node_id: str) -> np.ndarray:
        return self.vectors[node_id]


class HierarchicalPropagator(BaseEstimator, TransformerMixin):
    """Root-to-leaf embedding fusion over a validated graph.

    fit() binds the estimator to a graph (topological order and parent map);
    transform() maps a matrix of raw unit embeddings, rows aligned with
    ``node_order_``, to the propagated matrix in the same row order.
    """

    def __init__(
        self,
        weight: float = DEFAULT_WEIGHT,
        multi_parent: str = "mean-of-parents",
        normalize_after_fusion: bool = True,
    ):
        self.weight = weight
        self.multi_parent = multi_parent
        self.normalize_after_fusion = normalize_after_fusion

    def fit(self, graph: KnowledgeGraph, y=None):
        # Re-validates knobs through PropagationConfig so set_params abuse fails here.
        self._config = PropagationConfig(
            weight=self.weight,
            multi_parent=self.multi_parent,
            normalize_after_fusion=self.normalize_after_fusion,
        )
        self.node_order_ = topo_order(graph)
        self._row_of = {node_id: row for row, node_id in enumerate(self.node_order_)}
        parents = graph.parent_map()
        self.parent_rows_ = [
            [self._row_of[p] for p in parents[node_id]] for node_id in self.node_order_
        ]
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "node_order_"):
            raise EmbeddingError("propagator is not fitted; call fit(graph) first")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != len(self.node_order_):
            raise EmbeddingError(
                f"expected a ({len(self.node_order_)}, D) matrix, got shape {X.shape}"
            )
        if not np.all(np.isfinite(X)):
            raise EmbeddingError("raw embedding matrix contains non-finite values")
        norms = np.linalg.norm(X, axis=1)
        bad = np.nonzero(np.abs(norms - 1.0) > 1e-6)[0]
        if bad.size:
            raise EmbeddingError(
                f"raw embedding for {self.node_order_[bad[0]]!r} is not normalized"
            )

        w = self._config.weight
        out = np.empty_like(X)
        for row, parent_rows in enumerate(self.parent_rows_):
            if not parent_rows:
                out[row] = X[row]
                continue
            if len(parent_rows) == 1:
                parent = out[parent_rows[0]]
            else:
                parent = out[parent_rows].mean(axis=0)
                norm = float(np.linalg.norm(parent))
                if norm < DEGENERATE_NORM:
                    raise EmbeddingError(
                        f"degenerate fusion at {self.node_order_[row]!r}: parent mean is zero"
                    )
                parent = parent / norm
            fused = w * X[row] + (1.0 - w) * parent
            norm = float(np.linalg.norm(fused))
            if norm < DEGENERATE_NORM:
                raise EmbeddingError(
                    f"degenerate fusion at {self.node_order_[row]!r}: "
                    "child vector cancels parent context"
                )
            out[row] = fused / norm
        return out

    def propagate(self, raw: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        """Dict-keyed convenience wrapper around transform()."""
        if not hasattr(self, "node_order_"):
            raise EmbeddingError("propagator is not fitted; call fit(graph) first")
        missing = [i for i in self.node_order_ if i not in raw]
        if missing:
            raise EmbeddingError(f"raw embeddings missing for node {missing[0]!r}")
        dims = {np.asarray(raw[i]).shape for i in self.node_order_}
        if len(dims) > 1:
            raise EmbeddingError(f"raw embeddings carry mixed dimensions: {sorted(dims)}")
        X = np.stack([np.asarray(raw[i], dtype=np.float64) for i in self.node_order_])
        out = self.transform(X)
        return {node_id: out[row] for row, node_id in enumerate(self.node_order_)}


def propagate(
    graph: KnowledgeGraph,
    raw: Mapping[str, np.ndarray],
    config: PropagationConfig | None = None,
    provider: str = "unknown",
) -> EmbeddingTable:
    """Run the fusion pass over a whole graph and package the result."""
    config = config or PropagationConfig()
    propagator = HierarchicalPropagator(
        weight=config.weight,
        multi_parent=config.multi_parent,
        normalize_after_fusion=config.normalize_after_fusion,
    ).fit(graph)
    vectors = propagator.propagate(raw)
    dimension = next(iter(vectors.values())).shape[0] if vectors else 0
    return EmbeddingTable(
        vectors=vectors, dimension=dimension, weight=config.weight, provider=provider
    )


def save_table(table: EmbeddingTable, path) -> None:
    """Write the embedding cache file (deterministic for identical tables)."""
    doc = {
        "dimension": table.dimension,
        "provider": table.provider,
        "w": table.weight,
        "vectors": {i: [float(x) for x in table.vectors[i]] for i in sorted(table.vectors)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_table(path) -> EmbeddingTable:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        vectors = {
            node_id: ensure_unit(as_vector(values, doc["dimension"], name=f"vector {node_id!r}"))
            for node_id, values in doc["vectors"].items()
        }
        return EmbeddingTable(
            vectors=vectors,
            dimension=int(doc["dimension"]),
            weight=float(doc["w"]),
            provider=str(doc["provider"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise EmbeddingError(f"malformed embedding cache {path}: {exc}") from exc
