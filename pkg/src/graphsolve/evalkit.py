"""Dataset loading, answer grading, and the benchmark/ablation harness.

Two metrics: exact match after normalization (numeric/simple answers) and
semantic equivalence through the expression parser (answers with multiple
valid renderings, e.g. "\\dfrac{a}{b}" vs "a/b").
"""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

from . import mathexpr
from .embedding import embed_text
from .pipeline import PipelineDeps, Problem, solve
from .retrieval import mismatch_diagnostic


class DatasetError(Exception):
    """Unknown dataset id, malformed record, or unparseable gold answer."""


@dataclass(frozen=True)
class BenchmarkItem:
    id: str
    question: str
    gold: str


@dataclass(frozen=True)
class GradeOutcome:
    item_id: str
    predicted: str
    verdict: str  # correct | incorrect | ungradeable
    metric: str  # EMA | SEA
    detail: str = ""


@dataclass
class RunReport:
    dataset_id: str
    mode: str
    model: str
    outcomes: list[GradeOutcome]
    accuracy: float
    stage_failures: dict[str, int] = field(default_factory=dict)
    provenance_counts: dict[str, int] = field(default_factory=dict)
    mismatch: float | None = None
    duration_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "mode": self.mode,
            "model": self.model,
            "accuracy": self.accuracy,
            "stage_failures": dict(sorted(self.stage_failures.items())),
            "provenance_counts": dict(sorted(self.provenance_counts.items())),
            "mismatch": self.mismatch,
            "duration_seconds": self.duration_seconds,
            "outcomes": [
                {
                    "item_id": o.item_id,
                    "predicted": o.predicted,
                    "verdict": o.verdict,
                    "metric": o.metric,
                    "detail": o.detail,
                }
                for o in self.outcomes
            ],
        }


@dataclass(frozen=True)
class DatasetSpec:
    question_field: str
    answer_field: str
    metric: str  # default metric for the dataset
    gold_marker: str | None = None  # gold follows this marker inside the answer text
    normalize_gold: bool = True  # False keeps gold verbatim (semantic grading)


DATASETS: dict[str, DatasetSpec] = {
    "gsm8k": DatasetSpec("question", "answer", "EMA", gold_marker="#### "),
    "svamp": DatasetSpec("question", "answer", "EMA"),
    "math500": DatasetSpec("problem", "answer", "SEA", normalize_gold=False),
}


def load_dataset(dataset_id: str, path) -> list[BenchmarkItem]:
    """Read a line-delimited JSON benchmark file into items.

    Gold answers are normalized for exact-match datasets and kept verbatim
    for the semantic-equivalence dataset. Malformed records are reported
    with their line number.
    """
    try:
        spec = DATASETS[dataset_id]
    except KeyError:
        raise DatasetError(
            f"unknown dataset {dataset_id!r}; known: {', '.join(sorted(DATASETS))}"
        ) from None
    items: list[BenchmarkItem] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"{path}:{lineno}: record is not an object")
            if spec.question_field not in record:
                raise DatasetError(f"{path}:{lineno}: missing field {spec.question_field!r}")
            if spec.answer_field not in record:
                raise DatasetError(f"{path}:{lineno}: missing field {spec.answer_field!r}")
            question = str(record[spec.question_field])
            answer = str(record[spec.answer_field])
            if spec.gold_marker is not None:
                marker_at = answer.rfind(spec.gold_marker)
                if marker_at < 0:
                    raise DatasetError(
                        f"{path}:{lineno}: answer lacks the {spec.gold_marker!r} marker"
                    )
                answer = answer[marker_at + len(spec.gold_marker) :].strip()
            gold = normalize_answer(answer) if spec.normalize_gold else answer.strip()
            if not gold:
                raise DatasetError(f"{path}:{lineno}: empty gold answer")
            items.append(
                BenchmarkItem(id=str(record.get("id", f"{dataset_id}-{lineno}")),
                              question=question, gold=gold)
            )
    return items


_THOUSANDS_COMMA = re.compile(r"(?<=\d),(?=\d)")


def normalize_answer(text: str) -> str:
    """Exact-match normalization: whitespace/$ trim, thousands commas, casefold."""
    value = text.strip()
    if value.startswith("$"):
        value = value[1:]
    if value.endswith("$"):
        value = value[:-1]
    value = value.strip()
    value = _THOUSANDS_COMMA.sub("", value)
    return value.casefold()


def _as_number(text: str) -> Decimal | None:
    try:
        return Decimal(text)
    except InvalidOperation:
        return None


def grade_ema(predicted: str, gold: str, item_id: str = "") -> GradeOutcome:
    """Exact match after normalization; numeric strings compare numerically."""
    norm_predicted = normalize_answer(predicted)
    norm_gold = normalize_answer(gold)
    if norm_predicted == norm_gold:
        verdict, detail = "correct", "string match"
    else:
        num_predicted = _as_number(norm_predicted)
        num_gold = _as_number(norm_gold)
        if num_predicted is not None and num_gold is not None and num_predicted == num_gold:
            verdict, detail = "correct", "numeric match"
        else:
            verdict, detail = "incorrect", f"{norm_predicted!r} != {norm_gold!r}"
    return GradeOutcome(
        item_id=item_id, predicted=predicted, verdict=verdict, metric="EMA", detail=detail
    )


def grade_sea(predicted: str, gold: str, item_id: str = "") -> GradeOutcome:
    """Semantic equivalence; unparseable predictions are ungradeable.

    An unparseable gold answer is a dataset defect and raises instead.
    """
    try:
        gold_expr = mathexpr.parse_math(gold)
    except mathexpr.ExprError as exc:
        raise DatasetError(f"gold answer {gold!r} does not parse: {exc}") from exc
    try:
        predicted_expr = mathexpr.parse_math(predicted)
    except mathexpr.ExprError as exc:
        return GradeOutcome(
            item_id=item_id,
            predicted=predicted,
            verdict="ungradeable",
            metric="SEA",
            detail=f"prediction does not parse: {exc}",
        )
    if mathexpr.equivalent(predicted_expr, gold_expr):
        return GradeOutcome(
            item_id=item_id, predicted=predicted, verdict="correct", metric="SEA",
            detail="equivalent",
        )
    return GradeOutcome(
        item_id=item_id, predicted=predicted, verdict="incorrect", metric="SEA",
        detail="not equivalent",
    )


def grade(metric: str, predicted: str, gold: str, item_id: str = "") -> GradeOutcome:
    if metric == "EMA":
        return grade_ema(predicted, gold, item_id)
    if metric == "SEA":
        return grade_sea(predicted, gold, item_id)
    raise ValueError(f"unknown metric {metric!r}")


def run_benchmark(
    dataset_id: str,
    items: list[BenchmarkItem],
    mode: str,
    deps: PipelineDeps,
    workers: int = 1,
    metric: str | None = None,
    trace_dir=None,
) -> RunReport:
    """Solve and grade every item; per-item failures count as incorrect.

    Outcomes are merged in item-id order so reports are deterministic for a
    scripted client regardless of worker interleaving.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if metric is None:
        spec = DATASETS.get(dataset_id)
        if spec is None:
            raise DatasetError(f"unknown dataset {dataset_id!r} and no metric override given")
        metric = spec.metric
    started = time.monotonic()

    def run_one(item: BenchmarkItem):
        try:
            trace = solve(Problem(id=item.id, text=item.question), mode, deps)
            return item, trace, None
        except Exception as exc:  # infrastructure failure for this item only
            return item, None, f"{type(exc).__name__}: {exc}"

    if workers == 1:
        results = [run_one(item) for item in items]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, items))
    results.sort(key=lambda triple: triple[0].id)

    outcomes: list[GradeOutcome] = []
    stage_failures: dict[str, int] = {}
    provenance_counts: dict[str, int] = {}
    traces = []
    for item, trace, error in results:
        if trace is not None:
            traces.append(trace)
        if error is not None or trace.final_answer is None:
            detail = error if error is not None else f"pipeline failed: {trace.failure}"
            if trace is not None and trace.failure:
                stage = trace.failure.split(":", 1)[0]
                stage_failures[stage] = stage_failures.get(stage, 0) + 1
            outcomes.append(
                GradeOutcome(
                    item_id=item.id, predicted="", verdict="incorrect", metric=metric,
                    detail=detail,
                )
            )
            continue
        provenance = trace.final_answer.provenance
        provenance_counts[provenance] = provenance_counts.get(provenance, 0) + 1
        outcomes.append(grade(metric, trace.final_answer.value, item.gold, item.id))

    correct = sum(1 for o in outcomes if o.verdict == "correct")
    accuracy = correct / len(outcomes) if outcomes else 0.0
    report = RunReport(
        dataset_id=dataset_id,
        mode=mode,
        model=deps.client.identity,
        outcomes=outcomes,
        accuracy=accuracy,
        stage_failures=stage_failures,
        provenance_counts=provenance_counts,
        mismatch=_run_mismatch(deps, traces),
        duration_seconds=time.monotonic() - started,
    )
    if trace_dir is not None:
        _write_traces(trace_dir, traces, report)
    return report


def _run_mismatch(deps: PipelineDeps, traces) -> float | None:
    """Node-vs-query embedding drift over the whole run (retrieval runs only)."""
    if deps.index is None or deps.embedder is None or not len(deps.index):
        return None
    descriptions = []
    for trace in traces:
        if trace.context is not None and trace.task_graph is not None:
            descriptions.extend(t.description for t in trace.task_graph.subtasks)
    if not descriptions:
        return None
    query_vectors = [embed_text(deps.embedder, d) for d in descriptions]
    return mismatch_diagnostic(list(deps.index.matrix_), query_vectors)


def _write_traces(trace_dir, traces, report: RunReport) -> None:
    os.makedirs(trace_dir, exist_ok=True)
    for trace in traces:
        path = os.path.join(trace_dir, f"{_safe_name(trace.problem.id)}.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(trace.to_dict(), fh, ensure_ascii=False, indent=2, sort_keys=True)
            fh.write("\n")
    with open(os.path.join(trace_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(trace_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(render_table(report))


def _safe_name(item_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", item_id) or "item"


def render_table(report: RunReport) -> str:
    """Plain-text accuracy table, one method row per model column."""
    header_model = report.model
    method = {"full": "graph-guided", "drop_rag": "drop retrieval",
              "drop_coding": "drop coding"}.get(report.mode, report.mode)
    col = max(len(header_model), 8)
    lines = [
        f"Dataset: {report.dataset_id} ({report.outcomes[0].metric if report.outcomes else '-'})",
        f"{'Method':<18} {header_model:>{col}}",
        f"{method:<18} {report.accuracy * 100:>{col}.2f}%",
        "",
        f"items: {len(report.outcomes)}"
        f"  correct: {sum(1 for o in report.outcomes if o.verdict == 'correct')}"
        f"  ungradeable: {sum(1 for o in report.outcomes if o.verdict == 'ungradeable')}",
        f"provenance: {report.provenance_counts}",
        f"stage failures: {report.stage_failures}",
        f"mismatch diagnostic: {report.mismatch}",
    ]
    return "\n".join(lines) + "\n"
