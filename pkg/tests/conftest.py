"""Shared fixtures: tiny graphs, toy datasets, and scripted model responses."""

from __future__ import annotations

import json

import pytest

from graphsolve.kg import (
    CallableNode,
    CatalogueNode,
    GraphMetadata,
    KnowledgeGraph,
)

META = GraphMetadata(library="fixturelib", version="1.0", extracted_at="2026-01-01T00:00:00Z")


def catalogue(node_id: str, children: list[str], title: str | None = None,
              summary: str = "") -> CatalogueNode:
    return CatalogueNode(
        id=node_id,
        title=title or node_id.rsplit("/", 1)[-1],
        summary=summary,
        children=tuple(children),
    )


def callable_node(node_id: str, name: str | None = None, signature: str | None = None,
                  doc: str = "", kind: str = "function") -> CallableNode:
    name = name if name is not None else node_id.rsplit("/", 1)[-1]
    return CallableNode(
        id=node_id,
        name=name,
        signature=signature if signature is not None else f"{name}(x)",
        doc=doc,
        kind=kind,
    )


def graph_from(nodes, roots) -> KnowledgeGraph:
    return KnowledgeGraph(metadata=META, roots=tuple(roots), nodes={n.id: n for n in nodes})


@pytest.fixture
def tiny_graph() -> KnowledgeGraph:
    """Smallest valid graph: one root catalogue with one callable child."""
    return graph_from(
        [catalogue("lib", ["lib/solve"]), callable_node("lib/solve", doc="Solves equations.")],
        roots=["lib"],
    )


@pytest.fixture
def small_graph() -> KnowledgeGraph:
    """Two catalogues and three callables for retrieval tests."""
    return graph_from(
        [
            catalogue("lib", ["lib/algebra", "lib/calculus"], summary="fixture library"),
            catalogue("lib/algebra", ["lib/algebra/solve", "lib/algebra/expand"]),
            catalogue("lib/calculus", ["lib/calculus/diff"]),
            callable_node("lib/algebra/solve", doc="Solve an equation."),
            callable_node("lib/algebra/expand", doc="Expand a product."),
            callable_node("lib/calculus/diff", doc="Differentiate an expression."),
        ],
        roots=["lib"],
    )


def write_mock_script(path, script: dict) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(script, fh, indent=2)
    return str(path)


def plan_response(goal: str, conditions: list[str], subtasks: list[dict]) -> str:
    doc = {"goal": goal, "conditions": conditions, "subtasks": subtasks}
    return "Planned.\n```json\n" + json.dumps(doc, indent=2) + "\n```\n"


def code_response(source: str) -> str:
    return "Here is the program.\n```python\n" + source + "\n```\n"


def answer_response(answer: str, rationale: str = "checked") -> str:
    return (
        "```json\n" + json.dumps({"answer": answer, "rationale": rationale}) + "\n```\n"
    )


def duck_script() -> dict:
    """Scripted run for the duck-egg demo problem (id ``duck``)."""
    return {
        "build_solution:duck": plan_response(
            "compute daily revenue from selling duck eggs",
            ["16 eggs laid per day", "3 eggs eaten", "4 eggs baked", "$2 per egg"],
            [
                {
                    "id": "t1",
                    "description": "calculate the total number of eggs used daily",
                    "depends_on": [],
                },
                {
                    "id": "t2",
                    "description": "calculate the number of eggs available for sale",
                    "depends_on": ["t1"],
                },
                {
                    "id": "t3",
                    "description": "calculate the daily revenue",
                    "depends_on": ["t2"],
                },
            ],
        ),
        "coding:duck": code_response(
            "used = 3 + 4\nleft = 16 - used\nprint('ANSWER:', left * 2)"
        ),
        "answer:duck": answer_response("18"),
    }


DUCK_PROBLEM_TEXT = (
    "Janet's ducks lay 16 eggs per day. She eats three for breakfast every "
    "morning and bakes muffins for her friends every day with four. She sells "
    "the remainder at the farmers' market daily for $2 per fresh duck egg. "
    "How much in dollars does she make every day at the farmers' market?"
)


def bench_fixture(total: int = 10, wrong: int = 2):
    """Ten-problem benchmark plus a fully scripted client.

    Full mode executes programs printing the right value for all but
    ``wrong`` items; the scripted answer-stage replies are always wrong, so
    drop_coding scores zero while full mode scores (total-wrong)/total.
    """
    from graphsolve.evalkit import BenchmarkItem

    items = []
    script: dict[str, object] = {}
    for i in range(1, total + 1):
        pid = f"p{i:02d}"
        gold = str(2 * i)
        items.append(
            BenchmarkItem(id=pid, question=f"Compute {i} + {i}.", gold=gold)
        )
        script[f"build_solution:{pid}"] = plan_response(
            f"compute {i} + {i}",
            [f"addends are {i} and {i}"],
            [{"id": "t1", "description": f"add {i} and {i}", "depends_on": []}],
        )
        printed = gold if i > wrong else str(2 * i + 1)
        script[f"coding:{pid}"] = code_response(f"print('ANSWER: {printed}')")
        script[f"answer:{pid}"] = answer_response(str(1000 + i), "scripted fallback")
    return items, script
