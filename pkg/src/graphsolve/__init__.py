"""Graph-guided executable chain-of-thought solving for math word problems."""

from .embedding import (
    DeterministicEmbedder,
    EmbeddingTable,
    HierarchicalPropagator,
    PropagationConfig,
    embed_text,
    node_text,
    propagate,
)
from .kg import CallableNode, CatalogueNode, KnowledgeGraph, load_graph, serialize, topo_order, validate
from .pipeline import PipelineDeps, Problem, ScriptedModelClient, TaskGraph, solve
from .retrieval import CosineRetriever, RetrievalHit, build_index, cosine, mismatch_diagnostic
from .sandbox import ExecutionRequest, ExecutionResult, SubprocessSandbox

__version__ = "0.1.0"

__all__ = [
    "CallableNode",
    "CatalogueNode",
    "CosineRetriever",
    "DeterministicEmbedder",
    "EmbeddingTable",
    "ExecutionRequest",
    "ExecutionResult",
    "HierarchicalPropagator",
    "KnowledgeGraph",
    "PipelineDeps",
    "Problem",
    "PropagationConfig",
    "RetrievalHit",
    "ScriptedModelClient",
    "SubprocessSandbox",
    "TaskGraph",
    "build_index",
    "cosine",
    "embed_text",
    "load_graph",
    "mismatch_diagnostic",
    "node_text",
    "propagate",
    "serialize",
    "solve",
    "topo_order",
    "validate",
]
