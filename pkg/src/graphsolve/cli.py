"""Operator command line: validate, embed, query, solve, bench, grade.

Exit codes: 0 success, 1 operational error, 2 usage error. Usage problems
are reported before any output file is touched.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import evalkit, kg
from .config import ConfigError, RunConfig, load_config
from .embedding import (
    DeterministicEmbedder,
    EmbeddingError,
    HttpEmbedder,
    PropagationConfig,
    embed_nodes,
    embed_text,
    load_table,
    propagate,
    save_table,
)
from .pipeline import (
    HttpChatClient,
    PipelineDeps,
    Problem,
    ScriptedModelClient,
    solve,
)
from .retrieval import RetrievalError, build_index
from .sandbox import ContainerSandbox, SubprocessSandbox


class UsageError(Exception):
    pass


def _build_embedder(config: RunConfig):
    if config.embed_kind == "remote":
        if not config.embed_base_url or not config.embed_model:
            raise UsageError("remote embedding requires base_url and model in [embedding]")
        return HttpEmbedder(
            base_url=config.embed_base_url,
            model=config.embed_model,
            dimension=config.dimension,
            api_key=config.embed_api_key or None,
        )
    return DeterministicEmbedder(dimension=config.dimension)


def _build_client(config: RunConfig):
    if config.model_kind == "remote":
        if not config.model_base_url or not config.model_name:
            raise UsageError("remote model requires base_url and name in [model]")
        return HttpChatClient(
            base_url=config.model_base_url,
            model=config.model_name,
            api_key=config.chat_api_key or None,
        )
    if not config.mock_script:
        raise UsageError("mock model requires mock_script in [model]")
    return ScriptedModelClient.from_file(config.mock_script)


def _build_sandbox(config: RunConfig):
    if config.sandbox_backend == "container":
        if not config.sandbox_image:
            raise UsageError("container sandbox requires image in [sandbox]")
        return ContainerSandbox(
            image=config.sandbox_image,
            interpreter=config.sandbox_interpreter or "python3",
        )
    return SubprocessSandbox(interpreter=config.sandbox_interpreter or None)


def _load_graph_file(path: str) -> kg.KnowledgeGraph:
    with open(path, "rb") as fh:
        return kg.load_graph(fh.read())


def _embedding_table(config: RunConfig, graph, cache_path: str | None):
    if cache_path and os.path.exists(cache_path):
        return load_table(cache_path)
    embedder = _build_embedder(config)
    raw = embed_nodes(embedder, graph)
    return propagate(
        graph, raw, PropagationConfig(weight=config.weight), provider=embedder.identity
    )


def _build_deps(config: RunConfig, mode: str, cache_path: str | None) -> PipelineDeps:
    client = _build_client(config)
    deps = PipelineDeps(
        client=client,
        top_n=config.top_n,
        time_limit=config.time_limit,
        memory_limit=config.memory_limit_bytes,
    )
    if mode in ("full", "drop_rag"):
        deps.sandbox = _build_sandbox(config)
    if mode == "full":
        if not config.kg_path:
            raise UsageError("full mode requires [kg] path in the config")
        graph = _load_graph_file(config.kg_path)
        table = _embedding_table(config, graph, cache_path)
        deps.graph = graph
        deps.embedder = _build_embedder(config)
        deps.index = build_index(graph, table, top_n=config.top_n)
    return deps


# --- subcommands -------------------------------------------------------------


def cmd_validate(args) -> int:
    with open(args.kg, "rb") as fh:
        data = fh.read()
    try:
        graph = kg.load_graph(data)
    except kg.GraphError as exc:
        if exc.violations:
            for violation in exc.violations:
                print(f"[{violation.code}] {violation.node_id}: {violation.message}",
                      file=sys.stderr)
            print(f"{len(exc.violations)} violations", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"0 violations ({len(graph.nodes)} nodes, {len(graph.roots)} roots)")
    return 0


def cmd_embed(args) -> int:
    config = load_config(args.config)
    graph = _load_graph_file(args.kg)
    embedder = _build_embedder(config)
    raw = embed_nodes(embedder, graph)
    table = propagate(
        graph, raw, PropagationConfig(weight=config.weight), provider=embedder.identity
    )
    out = args.out or os.path.join(config.output_dir, "embeddings.json")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    save_table(table, out)
    print(f"wrote {len(table.vectors)} vectors (D={table.dimension}, w={table.weight}) to {out}")
    return 0


def cmd_query(args) -> int:
    config = load_config(args.config)
    graph = _load_graph_file(args.kg)
    table = _embedding_table(config, graph, args.cache)
    index = build_index(graph, table, top_n=config.top_n)
    embedder = _build_embedder(config)
    hits = index.query(embed_text(embedder, args.text), args.n)
    for hit in hits:
        print(f"{hit.rank:2d}. {hit.node_id}  {hit.score:.4f}")
    if not hits:
        print("(no hits: index is empty)")
    return 0


def cmd_solve(args) -> int:
    config = load_config(args.config)
    mode = args.mode.replace("-", "_")
    if os.path.exists(args.problem):
        with open(args.problem, encoding="utf-8") as fh:
            data = json.load(fh)
        problem = Problem(id=str(data.get("id", "problem")), text=str(data["text"]))
    else:
        problem = Problem(id="cli", text=args.problem)
    deps = _build_deps(config, mode, args.cache)
    trace = solve(problem, mode, deps)
    run_dir = os.path.join(config.output_dir, config.fingerprint({"solve": problem.id, "mode": mode}))
    os.makedirs(run_dir, exist_ok=True)
    trace_path = os.path.join(run_dir, f"{problem.id}.json")
    with open(trace_path, "w", encoding="utf-8") as fh:
        json.dump(trace.to_dict(), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    if trace.final_answer is None:
        print(f"pipeline failed: {trace.failure}", file=sys.stderr)
        print(f"trace: {trace_path}", file=sys.stderr)
        return 1
    print(f"answer: {trace.final_answer.value} ({trace.final_answer.provenance})")
    print(f"trace: {trace_path}")
    return 0


def cmd_bench(args) -> int:
    config = load_config(args.config)
    mode = args.mode.replace("-", "_")
    items = evalkit.load_dataset(args.dataset, args.data)
    deps = _build_deps(config, mode, args.cache)
    run_dir = os.path.join(
        config.output_dir,
        config.fingerprint({"dataset": args.dataset, "data": os.path.abspath(args.data),
                            "mode": mode}),
    )
    report = evalkit.run_benchmark(
        args.dataset, items, mode, deps, workers=config.workers,
        metric=args.metric.upper() if args.metric else None, trace_dir=run_dir,
    )
    print(evalkit.render_table(report), end="")
    print(f"report: {os.path.join(run_dir, 'report.json')}")
    return 0


def cmd_grade(args) -> int:
    with open(args.pred, encoding="utf-8") as fh:
        predictions = [line.rstrip("\n") for line in fh]
    with open(args.gold, encoding="utf-8") as fh:
        golds = [line.rstrip("\n") for line in fh]
    if len(predictions) != len(golds):
        raise UsageError(
            f"prediction file has {len(predictions)} lines, gold file has {len(golds)}"
        )
    metric = args.metric.upper()
    correct = 0
    for i, (predicted, gold) in enumerate(zip(predictions, golds), start=1):
        outcome = evalkit.grade(metric, predicted, gold, item_id=str(i))
        if outcome.verdict == "correct":
            correct += 1
        print(f"{i}: {outcome.verdict} ({outcome.detail})")
    accuracy = correct / len(golds) if golds else 0.0
    print(f"accuracy: {accuracy:.4f} ({correct}/{len(golds)})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphsolve",
        description="Graph-guided executable chain-of-thought solving and grading.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a knowledge-base document")
    p.add_argument("kg", help="KG JSON document path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("embed", help="embed and propagate node vectors, write the cache")
    p.add_argument("kg")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="cache file path")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("query", help="inspect retrieval for a text query")
    p.add_argument("kg")
    p.add_argument("--text", required=True)
    p.add_argument("-n", type=int, default=5)
    p.add_argument("--config", default=None)
    p.add_argument("--cache", default=None, help="reuse an embedding cache file")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("solve", help="solve one problem end to end")
    p.add_argument("--problem", required=True, help="problem text or a JSON file with id/text")
    p.add_argument("--mode", default="full", choices=["full", "drop-rag", "drop-coding"])
    p.add_argument("--config", default=None)
    p.add_argument("--cache", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run a benchmark and write the report")
    p.add_argument("--dataset", required=True, choices=sorted(evalkit.DATASETS))
    p.add_argument("--data", required=True, help="line-delimited JSON dataset file")
    p.add_argument("--mode", default="full", choices=["full", "drop-rag", "drop-coding"])
    p.add_argument("--metric", default=None, choices=["ema", "sea"],
                   help="override the dataset's default metric")
    p.add_argument("--config", default=None)
    p.add_argument("--cache", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("grade", help="grade aligned prediction/gold files")
    p.add_argument("--metric", required=True, choices=["ema", "sea"])
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.set_defaults(func=cmd_grade)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, kg.GraphError, EmbeddingError, RetrievalError,
            evalkit.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
