"""Library introspection producing the documentation knowledge-base document."""

from .introspect import (
    ExtractionConfig,
    ExtractionError,
    build_document,
    extract_graph,
    summarize_catalogue,
)

__version__ = "0.1.0"

__all__ = [
    "ExtractionConfig",
    "ExtractionError",
    "build_document",
    "extract_graph",
    "summarize_catalogue",
]
