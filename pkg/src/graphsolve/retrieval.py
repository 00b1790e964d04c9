"""Exact top-n cosine retrieval over the callable-node embeddings.

The index is an exhaustive scan: at a few thousand entries a full matrix
product beats any approximate structure and keeps rankings exactly
reproducible. Entries are stored in lexicographic id order so that a stable
sort on descending score breaks ties by id for free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .embedding import EmbeddingTable
from .kg import KnowledgeGraph
from .validation import as_vector, ensure_unit

DEFAULT_TOP_N = 5


class RetrievalError(Exception):
    """Index construction and query contract failures."""


@dataclass(frozen=True)
class RetrievalHit:
    """One scored entry: rank starts at 1, scores descend, ties go by id."""

    node_id: str
    score: float
    rank: int


def cosine(a, b) -> float:
    """Cosine similarity in [-1, 1]; symmetric; rejects zero vectors."""
    va = as_vector(a, name="a")
    vb = as_vector(b, name="b")
    if va.shape[0] != vb.shape[0]:
        raise RetrievalError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise RetrievalError("cosine is undefined for zero vectors")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


class CosineRetriever(BaseEstimator):
    """Exhaustive cosine scanner over unit vectors keyed by id."""

    def __init__(self, top_n: int = DEFAULT_TOP_N):
        self.top_n = top_n

    def fit(self, X, ids: list[str]):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise RetrievalError(f"expected a 2-D matrix, got shape {X.shape}")
        if X.shape[0] != len(ids):
            raise RetrievalError(f"{X.shape[0]} rows for {len(ids)} ids")
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        self.ids_ = [ids[i] for i in order]
        self.matrix_ = X[order]
        self.dimension_ = int(X.shape[1])
        return self

    def __len__(self) -> int:
        return len(getattr(self, "ids_", []))

    def query(self, query_vector, n: int | None = None) -> list[RetrievalHit]:
        """Top-n hits for a normalized query vector."""
        if not hasattr(self, "ids_"):
            raise RetrievalError("retriever is not fitted")
        if n is None:
            n = self.top_n
        if n < 1:
            raise RetrievalError(f"n must be positive, got {n}")
        if not self.ids_:
            return []
        q = as_vector(query_vector, self.dimension_, name="query")
        ensure_unit(q, name="query")
        scores = np.clip(self.matrix_ @ q, -1.0, 1.0)
        # Stable sort on descending score; rows are already in id order,
        # so equal scores keep lexicographic id order.
        top = np.argsort(-scores, kind="stable")[: min(n, len(self.ids_))]
        return [
            RetrievalHit(node_id=self.ids_[i], score=float(scores[i]), rank=rank)
            for rank, i in enumerate(top, start=1)
        ]


def build_index(graph: KnowledgeGraph, table: EmbeddingTable, top_n: int = DEFAULT_TOP_N) -> CosineRetriever:
    """Index the graph's callable nodes (catalogues are never retrieved)."""
    callable_ids = graph.callable_ids()
    missing = [i for i in callable_ids if i not in table.vectors]
    if missing:
        raise RetrievalError(f"embedding table is missing node {missing[0]!r}")
    if callable_ids:
        matrix = np.stack([table.vectors[i] for i in callable_ids])
    else:
        matrix = np.zeros((0, table.dimension))
    return CosineRetriever(top_n=top_n).fit(matrix, callable_ids)


def query(index: CosineRetriever, query_vector, n: int) -> list[RetrievalHit]:
    """Functional alias for CosineRetriever.query."""
    return index.query(query_vector, n)


def mismatch_diagnostic(node_embeddings, query_embeddings) -> float:
    """Distributional gap between node and query embedding sets, in [0, 2].

    Defined as one minus the cosine of the two set centroids: 0 means the
    distributions point the same way. A diagnostic only, never optimized.
    """
    nodes = [as_vector(v, name="node embedding") for v in node_embeddings]
    queries = [as_vector(v, name="query embedding") for v in query_embeddings]
    if not nodes or not queries:
        raise RetrievalError("mismatch diagnostic needs non-empty sets")
    node_centroid = np.mean(nodes, axis=0)
    query_centroid = np.mean(queries, axis=0)
    return 1.0 - cosine(node_centroid, query_centroid)
