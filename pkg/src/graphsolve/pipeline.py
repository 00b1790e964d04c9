"""Five-stage solving pipeline: plan, retrieve, code, execute, answer.

A problem is decomposed into a task graph, each subtask's description is
used to retrieve documented API entries, a program is generated and run in
the sandbox, and the answer stage either confirms the executed value or
falls back to reasoning when execution failed or was ablated away.

Ablation modes: ``drop_rag`` skips retrieval; ``drop_coding`` additionally
skips code generation and execution, answering from the task graph alone.
"""

from __future__ import annotations

import heapq
import json
import re
import time
from dataclasses import dataclass, field
from typing import Sequence

import requests

from . import prompts
from .embedding import embed_text
from .kg import CallableNode, KnowledgeGraph
from .retrieval import CosineRetriever, RetrievalHit
from .sandbox import ExecutionRequest, ExecutionResult

MODES = ("full", "drop_rag", "drop_coding")
ANSWER_MARKER = "ANSWER:"
DOC_EXCERPT_CHARS = 240


class StageError(Exception):
    """A stage could not produce usable output, retry included."""

    def __init__(self, stage: str, message: str, transcripts: list["StageTranscript"]):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message
        self.transcripts = transcripts


@dataclass(frozen=True)
class Problem:
    id: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("problem text must be non-empty")


@dataclass(frozen=True)
class SubTask:
    id: str
    description: str
    depends_on: tuple[str, ...] = ()


@dataclass(frozen=True)
class TaskGraph:
    goal: str
    conditions: tuple[str, ...]
    subtasks: tuple[SubTask, ...]
    order: tuple[str, ...]

    def subtask(self, subtask_id: str) -> SubTask:
        for task in self.subtasks:
            if task.id == subtask_id:
                return task
        raise KeyError(subtask_id)


@dataclass(frozen=True)
class ContextEntry:
    node_id: str
    name: str
    signature: str
    doc: str
    score: float


@dataclass(frozen=True)
class ContextPack:
    """Retrieved entries per subtask id, capped at top-n each."""

    entries: dict[str, tuple[ContextEntry, ...]]

    def deduplicated(self) -> list[ContextEntry]:
        """All entries merged across subtasks, one per node id, best score first."""
        best: dict[str, ContextEntry] = {}
        for hits in self.entries.values():
            for entry in hits:
                kept = best.get(entry.node_id)
                if kept is None or entry.score > kept.score:
                    best[entry.node_id] = entry
        return sorted(best.values(), key=lambda e: (-e.score, e.node_id))


@dataclass(frozen=True)
class CodeArtifact:
    source: str
    language: str = "python"

    def __post_init__(self):
        if not self.source.strip():
            raise ValueError("code artifact must not be empty")


@dataclass(frozen=True)
class FinalAnswer:
    value: str
    provenance: str  # code_execution | llm_fallback
    rationale: str | None = None


@dataclass(frozen=True)
class StageTranscript:
    stage: str
    prompt: str
    response: str


@dataclass
class CodeRun:
    """Execution result plus the parsed answer line (or why it is missing)."""

    result: ExecutionResult
    answer: str | None = None
    failure: str | None = None


@dataclass
class PipelineTrace:
    problem: Problem
    mode: str
    task_graph: TaskGraph | None = None
    context: ContextPack | None = None
    code: CodeArtifact | None = None
    execution: CodeRun | None = None
    final_answer: FinalAnswer | None = None
    transcripts: list[StageTranscript] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "ok"
    failure: str | None = None

    def to_dict(self) -> dict:
        return {
            "problem": {"id": self.problem.id, "text": self.problem.text},
            "mode": self.mode,
            "task_graph": None
            if self.task_graph is None
            else {
                "goal": self.task_graph.goal,
                "conditions": list(self.task_graph.conditions),
                "subtasks": [
                    {"id": t.id, "description": t.description, "depends_on": list(t.depends_on)}
                    for t in self.task_graph.subtasks
                ],
                "order": list(self.task_graph.order),
            },
            "context": None
            if self.context is None
            else {
                sid: [
                    {
                        "node_id": e.node_id,
                        "name": e.name,
                        "signature": e.signature,
                        "doc": e.doc,
                        "score": e.score,
                    }
                    for e in hits
                ]
                for sid, hits in self.context.entries.items()
            },
            "code": None
            if self.code is None
            else {"source": self.code.source, "language": self.code.language},
            "execution": None
            if self.execution is None
            else {
                "status": self.execution.result.status,
                "exit_code": self.execution.result.exit_code,
                "stdout": self.execution.result.stdout,
                "stderr": self.execution.result.stderr,
                "duration": self.execution.result.duration,
                "answer": self.execution.answer,
                "failure": self.execution.failure,
            },
            "final_answer": None
            if self.final_answer is None
            else {
                "value": self.final_answer.value,
                "provenance": self.final_answer.provenance,
                "rationale": self.final_answer.rationale,
            },
            "transcripts": [
                {"stage": t.stage, "prompt": t.prompt, "response": t.response}
                for t in self.transcripts
            ],
            "timings": dict(self.timings),
            "status": self.status,
            "failure": self.failure,
        }


# --- model clients ----------------------------------------------------------


class ModelClient:
    """Behavioral contract: complete(stage, prompt) -> response text."""

    identity: str = "unknown"

    def complete(self, stage: str, prompt: str) -> str:
        raise NotImplementedError

    def for_problem(self, problem_id: str) -> "ModelClient":
        """A view bound to one problem; remote clients are problem-agnostic."""
        return self


class ScriptedModelClient(ModelClient):
    """Canned responses keyed ``"<stage>:<problem id>"``.

    A value may be a list, consumed sequentially, to script retry behavior;
    the last element repeats once exhausted. Bind with for_problem() before
    use so concurrent solves never share consumption counters.
    """

    def __init__(self, script: dict, problem_id: str | None = None):
        self.script = script
        self.problem_id = problem_id
        self._consumed: dict[str, int] = {}

    @property
    def identity(self) -> str:
        return "scripted-mock"

    @classmethod
    def from_file(cls, path) -> "ScriptedModelClient":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def for_problem(self, problem_id: str) -> "ScriptedModelClient":
        return ScriptedModelClient(self.script, problem_id)

    def complete(self, stage: str, prompt: str) -> str:
        key = f"{stage}:{self.problem_id}"
        if key not in self.script:
            raise KeyError(f"no scripted response for {key!r}")
        entry = self.script[key]
        if isinstance(entry, list):
            index = min(self._consumed.get(key, 0), len(entry) - 1)
            self._consumed[key] = index + 1
            return entry[index]
        return entry


class HttpChatClient(ModelClient):
    """Chat-completions endpoint client, greedy decoding for reproducibility."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        temperature: float = 0.0,
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.timeout = timeout

    @property
    def identity(self) -> str:
        return f"{self.model}@{self.base_url}"

    def complete(self, stage: str, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        response = requests.post(
            f"{self.base_url}/chat/completions",
            json={
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": self.temperature,
            },
            headers=headers,
            timeout=self.timeout,
        )
        response.raise_for_status()
        return response.json()["choices"][0]["message"]["content"]


# --- fenced-block extraction -------------------------------------------------

_FENCE_RE = re.compile(r"```([a-zA-Z0-9_-]*)[ \t]*\n(.*?)```", re.DOTALL)


def extract_fenced(text: str, language: str | None = None) -> str | None:
    """The last fenced block, optionally restricted to a language tag.

    The last block wins because models commonly emit exploratory blocks
    before the final one. Untagged blocks match any requested language.
    """
    blocks = [
        body for tag, body in _FENCE_RE.findall(text) if language is None or tag in (language, "")
    ]
    return blocks[-1] if blocks else None


def _ask(client: ModelClient, stage: str, prompt: str, transcripts: list[StageTranscript]) -> str:
    response = client.complete(stage, prompt)
    transcripts.append(StageTranscript(stage=stage, prompt=prompt, response=response))
    return response


def _ask_with_repair(client, stage, prompt, parse, transcripts):
    """One attempt plus one repair retry; parse() raises ValueError to reject."""
    response = _ask(client, stage, prompt, transcripts)
    try:
        return parse(response)
    except ValueError as first_error:
        repair = prompts.REPAIR.format(error=first_error, original=prompt)
        response = _ask(client, stage, repair, transcripts)
        try:
            return parse(response)
        except ValueError as second_error:
            raise StageError(stage, str(second_error), transcripts) from second_error


# --- stages ------------------------------------------------------------------


def _toposort_subtasks(subtasks: Sequence[SubTask]) -> tuple[str, ...]:
    """Deterministic topological order (lexicographic among ready tasks)."""
    ids = {t.id for t in subtasks}
    indegree = {t.id: 0 for t in subtasks}
    dependents: dict[str, list[str]] = {t.id: [] for t in subtasks}
    for task in subtasks:
        for dep in task.depends_on:
            indegree[task.id] += 1
            dependents[dep].append(task.id)
    ready = sorted(i for i, d in indegree.items() if d == 0)
    heapq.heapify(ready)
    order: list[str] = []
    while ready:
        current = heapq.heappop(ready)
        order.append(current)
        for nxt in dependents[current]:
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(ready, nxt)
    if len(order) != len(ids):
        raise ValueError("subtask dependencies contain a cycle")
    return tuple(order)


def _parse_task_graph(response: str) -> TaskGraph:
    body = extract_fenced(response, "json")
    if body is None:
        raise ValueError("no fenced json block found")
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ValueError(f"fenced block is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValueError("fenced block must hold a JSON object")
    goal = doc.get("goal")
    if not isinstance(goal, str) or not goal.strip():
        raise ValueError("goal is missing or empty")
    conditions = doc.get("conditions", [])
    if not isinstance(conditions, list) or not all(isinstance(c, str) for c in conditions):
        raise ValueError("conditions must be a list of strings")
    raw_subtasks = doc.get("subtasks")
    if not isinstance(raw_subtasks, list) or not raw_subtasks:
        raise ValueError("subtasks must be a non-empty list")
    subtasks: list[SubTask] = []
    seen: set[str] = set()
    for i, entry in enumerate(raw_subtasks):
        if not isinstance(entry, dict):
            raise ValueError(f"subtask {i} is not an object")
        sid = entry.get("id")
        description = entry.get("description")
        depends_on = entry.get("depends_on", [])
        if not isinstance(sid, str) or not sid:
            raise ValueError(f"subtask {i} has no id")
        if sid in seen:
            raise ValueError(f"duplicate subtask id {sid!r}")
        seen.add(sid)
        if not isinstance(description, str) or not description.strip():
            raise ValueError(f"subtask {sid!r} has no description")
        if not isinstance(depends_on, list) or not all(isinstance(d, str) for d in depends_on):
            raise ValueError(f"subtask {sid!r} has a malformed depends_on list")
        if sid in depends_on:
            raise ValueError(f"subtask {sid!r} depends on itself")
        subtasks.append(SubTask(id=sid, description=description, depends_on=tuple(depends_on)))
    for task in subtasks:
        for dep in task.depends_on:
            if dep not in seen:
                raise ValueError(f"subtask {task.id!r} depends on unknown {dep!r}")
    # The model's stated ordering is ignored; the order is re-derived so it
    # is always a valid topological sort.
    order = _toposort_subtasks(subtasks)
    return TaskGraph(
        goal=goal.strip(),
        conditions=tuple(c.strip() for c in conditions),
        subtasks=tuple(subtasks),
        order=order,
    )


def build_solution(client: ModelClient, problem: Problem,
                   transcripts: list[StageTranscript] | None = None) -> TaskGraph:
    """Decompose the problem into a dependency-ordered task graph."""
    transcripts = transcripts if transcripts is not None else []
    prompt = prompts.BUILD_SOLUTION.format(problem=problem.text)
    return _ask_with_repair(client, prompts.PLAN_STAGE, prompt, _parse_task_graph, transcripts)


def get_query(
    task_graph: TaskGraph,
    index: CosineRetriever,
    embedder,
    graph: KnowledgeGraph,
    n: int,
) -> ContextPack:
    """Retrieve top-n documented entries for every subtask description."""
    entries: dict[str, tuple[ContextEntry, ...]] = {}
    for sid in task_graph.order:
        task = task_graph.subtask(sid)
        query_vector = embed_text(embedder, task.description)
        hits = index.query(query_vector, n)
        entries[sid] = tuple(_materialize(graph, hit) for hit in hits)
    return ContextPack(entries=entries)


def _materialize(graph: KnowledgeGraph, hit: RetrievalHit) -> ContextEntry:
    node = graph.nodes[hit.node_id]
    if not isinstance(node, CallableNode):
        raise ValueError(f"retrieval hit {hit.node_id!r} is not a callable node")
    doc = node.doc[:DOC_EXCERPT_CHARS]
    return ContextEntry(
        node_id=node.id, name=node.name, signature=node.signature, doc=doc, score=hit.score
    )


def _format_subtasks(task_graph: TaskGraph) -> str:
    lines = []
    for position, sid in enumerate(task_graph.order, start=1):
        task = task_graph.subtask(sid)
        suffix = f" (needs: {', '.join(task.depends_on)})" if task.depends_on else ""
        lines.append(f"{position}. [{task.id}] {task.description}{suffix}")
    return "\n".join(lines)


def _format_conditions(task_graph: TaskGraph) -> str:
    if not task_graph.conditions:
        return "(none listed)"
    return "\n".join(f"- {c}" for c in task_graph.conditions)


def _format_context(context: ContextPack) -> str:
    entries = context.deduplicated()
    if not entries:
        return "(no retrieved entries)"
    lines = []
    for entry in entries:
        doc = entry.doc.replace("\n", " ").strip()
        lines.append(f"- {entry.signature}" + (f"\n  {doc}" if doc else ""))
    return "\n".join(lines)


def _parse_code(response: str) -> CodeArtifact:
    body = extract_fenced(response, "python")
    if body is None:
        raise ValueError("no fenced code block found")
    if not body.strip():
        raise ValueError("fenced code block is empty")
    return CodeArtifact(source=body)


def coding(
    client: ModelClient,
    task_graph: TaskGraph,
    context: ContextPack | None = None,
    transcripts: list[StageTranscript] | None = None,
) -> CodeArtifact:
    """Generate the solver program from the task graph and retrieved context."""
    transcripts = transcripts if transcripts is not None else []
    if context is not None:
        prompt = prompts.CODING_WITH_CONTEXT.format(
            goal=task_graph.goal,
            conditions=_format_conditions(task_graph),
            subtasks=_format_subtasks(task_graph),
            context=_format_context(context),
        )
    else:
        prompt = prompts.CODING_NO_CONTEXT.format(
            goal=task_graph.goal,
            conditions=_format_conditions(task_graph),
            subtasks=_format_subtasks(task_graph),
        )
    return _ask_with_repair(client, prompts.CODE_STAGE, prompt, _parse_code, transcripts)


def run_code(artifact: CodeArtifact, backend, time_limit: float, memory_limit: int,
             interpreter: str | None = None) -> CodeRun:
    """Execute the program and pull the final ANSWER line out of stdout."""
    request_kwargs = {
        "source": artifact.source,
        "time_limit": time_limit,
        "memory_limit": memory_limit,
    }
    if interpreter:
        request_kwargs["interpreter"] = interpreter
    result = backend.execute(ExecutionRequest(**request_kwargs))
    if result.status == "ok":
        value = parse_answer_line(result.stdout)
        if value is None:
            return CodeRun(result=result, failure="missing answer marker")
        return CodeRun(result=result, answer=value)
    if result.status == "timeout":
        return CodeRun(result=result, failure="timeout")
    if result.status == "spawn_failure":
        return CodeRun(result=result, failure=f"sandbox unavailable: {result.stderr.strip()}")
    tail = result.stderr.strip().splitlines()[-1] if result.stderr.strip() else "no stderr"
    return CodeRun(result=result, failure=f"nonzero exit: {tail}")


def parse_answer_line(stdout: str) -> str | None:
    """Value of the last ``ANSWER:`` line, or None when absent/empty."""
    value = None
    for line in stdout.splitlines():
        if line.strip().startswith(ANSWER_MARKER):
            candidate = line.strip()[len(ANSWER_MARKER) :].strip()
            if candidate:
                value = candidate
    return value


def normalize_value(text: str) -> str:
    """Light answer cleanup: surrounding whitespace and $ wrappers."""
    value = text.strip()
    while len(value) >= 2 and value.startswith("$") and value.endswith("$"):
        value = value[1:-1].strip()
    return value


def _parse_answer_block(response: str) -> tuple[str, str | None]:
    body = extract_fenced(response, "json")
    if body is None:
        raise ValueError("no fenced json block found")
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ValueError(f"fenced block is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("answer"), str):
        raise ValueError("fenced block must hold an object with an 'answer' string")
    answer = doc["answer"].strip()
    if not answer:
        raise ValueError("answer is empty")
    rationale = doc.get("rationale")
    return answer, rationale if isinstance(rationale, str) else None


def ans_question(
    client: ModelClient,
    problem: Problem,
    task_graph: TaskGraph,
    execution: CodeRun | None,
    transcripts: list[StageTranscript] | None = None,
) -> FinalAnswer:
    """Final safeguard: confirm the executed value or answer from reasoning.

    When execution succeeded the executed value is authoritative; the model
    may only influence formatting, and even that is normalized away.
    """
    transcripts = transcripts if transcripts is not None else []
    executed = execution.answer if execution is not None else None
    if executed is not None:
        prompt = prompts.ANSWER_CONFIRM.format(
            problem=problem.text, goal=task_graph.goal, value=executed
        )
        try:
            _, rationale = _ask_with_repair(
                client, prompts.ANSWER_STAGE, prompt, _parse_answer_block, transcripts
            )
        except StageError:
            rationale = None  # raw executed value still stands
        return FinalAnswer(
            value=normalize_value(executed), provenance="code_execution", rationale=rationale
        )
    failure_note = ""
    if execution is not None and execution.failure:
        failure_note = f" (execution failed: {execution.failure})"
    prompt = prompts.ANSWER_FALLBACK.format(
        problem=problem.text,
        goal=task_graph.goal,
        conditions=_format_conditions(task_graph),
        subtasks=_format_subtasks(task_graph),
        failure_note=failure_note,
    )
    answer, rationale = _ask_with_repair(
        client, prompts.ANSWER_STAGE, prompt, _parse_answer_block, transcripts
    )
    return FinalAnswer(
        value=normalize_value(answer), provenance="llm_fallback", rationale=rationale
    )


# --- orchestration -----------------------------------------------------------


@dataclass
class PipelineDeps:
    """Everything one solve call needs, wired per mode."""

    client: ModelClient
    sandbox: object | None = None
    index: CosineRetriever | None = None
    embedder: object | None = None
    graph: KnowledgeGraph | None = None
    top_n: int = 5
    time_limit: float = 10.0
    memory_limit: int = 512 * 1024 * 1024
    interpreter: str | None = None


def solve(problem: Problem, mode: str, deps: PipelineDeps) -> PipelineTrace:
    """Run the pipeline end to end for one problem.

    Model-content failures never raise: they are recorded on the trace with
    a terminal failed status. Infrastructure failures (embedder down,
    missing wiring) do raise.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "full" and (deps.index is None or deps.embedder is None or deps.graph is None):
        raise ValueError("full mode needs index, embedder, and graph wired")
    if mode in ("full", "drop_rag") and deps.sandbox is None:
        raise ValueError(f"{mode} mode needs a sandbox backend wired")

    client = deps.client.for_problem(problem.id)
    trace = PipelineTrace(problem=problem, mode=mode)

    start = time.monotonic()
    try:
        trace.task_graph = build_solution(client, problem, trace.transcripts)
    except StageError as exc:
        return _fail(trace, exc, start)
    trace.timings[prompts.PLAN_STAGE] = time.monotonic() - start

    if mode == "full":
        stage_start = time.monotonic()
        trace.context = get_query(
            trace.task_graph, deps.index, deps.embedder, deps.graph, deps.top_n
        )
        trace.timings["get_query"] = time.monotonic() - stage_start

    if mode in ("full", "drop_rag"):
        stage_start = time.monotonic()
        try:
            trace.code = coding(client, trace.task_graph, trace.context, trace.transcripts)
        except StageError as exc:
            return _fail(trace, exc, stage_start)
        trace.timings[prompts.CODE_STAGE] = time.monotonic() - stage_start

        stage_start = time.monotonic()
        trace.execution = run_code(
            trace.code, deps.sandbox, deps.time_limit, deps.memory_limit, deps.interpreter
        )
        trace.timings["run_code"] = time.monotonic() - stage_start

    stage_start = time.monotonic()
    try:
        trace.final_answer = ans_question(
            client, problem, trace.task_graph, trace.execution, trace.transcripts
        )
    except StageError as exc:
        return _fail(trace, exc, stage_start)
    trace.timings[prompts.ANSWER_STAGE] = time.monotonic() - stage_start
    return trace


def _fail(trace: PipelineTrace, exc: StageError, stage_start: float) -> PipelineTrace:
    trace.status = "failed"
    trace.failure = str(exc)
    trace.timings[exc.stage] = time.monotonic() - stage_start
    return trace
