"""Prompt templates for the five solving stages.

Every stage demands a fenced block with a fixed schema so responses parse
deterministically; each stage gets one repair retry before giving up.
"""

PLAN_STAGE = "build_solution"
CODE_STAGE = "coding"
ANSWER_STAGE = "answer"

BUILD_SOLUTION = """\
You are planning the solution of a math word problem. Work through five steps:
1. Goal analysis: identify the main objective and the problem type.
2. Conditions extraction: record every given value, constant, and constraint.
3. Problem decomposition: split the problem into small subtasks.
4. Dependency modeling: decide which subtasks depend on which.
5. Task sorting: order the subtasks so dependencies come first.

Problem:
{problem}

Reply with exactly one fenced block of this shape:
```json
{{
  "goal": "<main objective>",
  "conditions": ["<given fact>", "..."],
  "subtasks": [
    {{"id": "t1", "description": "<what to compute>", "depends_on": []}},
    {{"id": "t2", "description": "<what to compute>", "depends_on": ["t1"]}}
  ]
}}
```
"""

CODING_WITH_CONTEXT = """\
Write a complete Python program that solves the problem below by working
through the subtasks in order. You may use the standard library and the
documented API functions listed under "Available functions".

Goal: {goal}
Conditions:
{conditions}
Subtasks (in execution order):
{subtasks}

Available functions:
{context}

The program must print exactly one final line of the form:
ANSWER: <value>

Reply with the full program in one fenced block:
```python
...
```
"""

CODING_NO_CONTEXT = """\
Write a complete Python program that solves the problem below by working
through the subtasks in order. You may use the standard library.

Goal: {goal}
Conditions:
{conditions}
Subtasks (in execution order):
{subtasks}

The program must print exactly one final line of the form:
ANSWER: <value>

Reply with the full program in one fenced block:
```python
...
```
"""

ANSWER_CONFIRM = """\
A program solving this problem was executed and printed the value below.
Check that the value answers the stated goal; reply with the value (you may
only adjust its formatting, not its meaning).

Problem:
{problem}

Goal: {goal}
Executed value: {value}

Reply with exactly one fenced block:
```json
{{"answer": "<final value>", "rationale": "<one sentence>"}}
```
"""

ANSWER_FALLBACK = """\
Answer this math problem directly from the reasoning below. No code was
executed{failure_note}, so derive the value yourself, step by step, from the
goal, conditions, and subtasks.

Problem:
{problem}

Goal: {goal}
Conditions:
{conditions}
Subtasks:
{subtasks}

Reply with exactly one fenced block:
```json
{{"answer": "<final value>", "rationale": "<short derivation>"}}
```
"""

REPAIR = """\
Your previous reply could not be used: {error}

Repeat the task, making sure the reply contains exactly one fenced block in
the requested format.

Original request:
{original}
"""
