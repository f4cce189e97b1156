"""Workflow DAG model whose edges are exchanged data items.

A task depends on another task when it consumes a data item the other one
produces. Data items with no producer are workflow inputs.
"""

from __future__ import annotations

import json
from collections import defaultdict, deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable

from .rational import json_number, to_fraction


class WorkflowError(ValueError):
    """Raised for documents that cannot be turned into a Workflow."""


@dataclass(frozen=True)
class DataItem:
    id: str
    name: str
    size_bytes: int = 0


@dataclass(frozen=True)
class Task:
    id: str
    name: str
    group: str
    work_gcs: Fraction = Fraction(0)  # GHz-seconds: 1 s on one 1 GHz core
    parallelism: int = 1
    memory_mb: int = 128
    disk_mb: int = 0
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    executor_hint: str | None = None


@dataclass(frozen=True)
class Workflow:
    name: str
    tasks: tuple[Task, ...] = ()
    data: tuple[DataItem, ...] = ()

    @cached_property
    def task_by_id(self) -> dict[str, Task]:
        return {t.id: t for t in self.tasks}

    @cached_property
    def data_by_id(self) -> dict[str, DataItem]:
        return {d.id: d for d in self.data}

    @cached_property
    def producer(self) -> dict[str, str]:
        """data id -> producing task id (first producer wins on invalid input)."""
        out: dict[str, str] = {}
        for t in self.tasks:
            for d in t.outputs:
                out.setdefault(d, t.id)
        return out

    @cached_property
    def dependencies(self) -> dict[str, frozenset[str]]:
        """task id -> ids of the tasks it directly depends on."""
        prod = self.producer
        deps = {}
        for t in self.tasks:
            deps[t.id] = frozenset(prod[d] for d in t.inputs if d in prod and prod[d] != t.id)
        return deps

    @cached_property
    def dependents(self) -> dict[str, tuple[str, ...]]:
        out: dict[str, list[str]] = {t.id: [] for t in self.tasks}
        for tid, deps in self.dependencies.items():
            for d in deps:
                out[d].append(tid)
        return {k: tuple(sorted(v)) for k, v in out.items()}

    def edges(self) -> set[tuple[str, str]]:
        return {(p, c) for c, ps in self.dependencies.items() for p in ps}

    def input_bytes(self, task: Task) -> int:
        return sum(self.data_by_id[d].size_bytes for d in task.inputs if d in self.data_by_id)

    def output_bytes(self, task: Task) -> int:
        return sum(self.data_by_id[d].size_bytes for d in task.outputs if d in self.data_by_id)


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

_TASK_FIELDS = {
    "id": str,
    "name": str,
    "group": str,
    "work_gcs": "number",
    "parallelism": int,
    "memory_mb": int,
    "disk_mb": int,
    "inputs": list,
    "outputs": list,
}
_DATA_FIELDS = {"id": str, "name": str, "size_bytes": int}


def _require(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise WorkflowError(f"{where}: missing required field {key!r}")
    value = obj[key]
    if kind == "number":
        ok = isinstance(value, (int, Fraction)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        name = "number" if kind == "number" else kind.__name__
        raise WorkflowError(
            f"{where}: field {key!r} has wrong type (expected {name}, got {type(value).__name__})"
        )
    return value


def _str_list(values: list, key: str, where: str) -> tuple[str, ...]:
    for v in values:
        if not isinstance(v, str):
            raise WorkflowError(f"{where}: field {key!r} must be a list of strings")
    return tuple(values)


def workflow_from_dict(doc) -> Workflow:
    if not isinstance(doc, dict):
        raise WorkflowError("document: top level must be an object")
    name = _require(doc, "name", str, "workflow")
    raw_data = _require(doc, "data", list, "workflow")
    raw_tasks = _require(doc, "tasks", list, "workflow")

    data = []
    for i, d in enumerate(raw_data):
        where = f"data[{i}]"
        if not isinstance(d, dict):
            raise WorkflowError(f"{where}: expected an object")
        vals = {k: _require(d, k, kind, where) for k, kind in _DATA_FIELDS.items()}
        if vals["size_bytes"] < 0:
            raise WorkflowError(f"{where}: size_bytes must be non-negative")
        data.append(DataItem(**vals))

    tasks = []
    for i, t in enumerate(raw_tasks):
        where = f"tasks[{i}]"
        if not isinstance(t, dict):
            raise WorkflowError(f"{where}: expected an object")
        if isinstance(t.get("work_gcs"), str):
            # exact "p/q" form written for rationals with no finite decimal
            try:
                t = dict(t, work_gcs=to_fraction(t["work_gcs"], "work_gcs"))
            except ValueError as exc:
                raise WorkflowError(f"{where}: {exc}") from None
        vals = {k: _require(t, k, kind, where) for k, kind in _TASK_FIELDS.items()}
        vals["inputs"] = _str_list(vals["inputs"], "inputs", where)
        vals["outputs"] = _str_list(vals["outputs"], "outputs", where)
        hint = t.get("executor_hint")
        if hint is not None and not isinstance(hint, str):
            raise WorkflowError(f"{where}: field 'executor_hint' has wrong type (expected str)")
        tasks.append(Task(executor_hint=hint, **vals))
    return Workflow(name=name, tasks=tuple(tasks), data=tuple(data))


def parse_workflow(json_text: str) -> Workflow:
    """Parse a workflow JSON document. Non-integral numbers are read exactly."""
    try:
        doc = json.loads(json_text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise WorkflowError(
            f"syntax error at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}"
        ) from None
    return workflow_from_dict(doc)


def workflow_to_dict(w: Workflow) -> dict:
    tasks = []
    for t in w.tasks:
        d = {
            "id": t.id,
            "name": t.name,
            "group": t.group,
            "work_gcs": json_number(t.work_gcs),
            "parallelism": t.parallelism,
            "memory_mb": t.memory_mb,
            "disk_mb": t.disk_mb,
            "inputs": list(t.inputs),
            "outputs": list(t.outputs),
        }
        if t.executor_hint is not None:
            d["executor_hint"] = t.executor_hint
        tasks.append(d)
    return {
        "name": w.name,
        "data": [{"id": d.id, "name": d.name, "size_bytes": d.size_bytes} for d in w.data],
        "tasks": tasks,
    }


def serialize_workflow(w: Workflow, indent: int | None = 1) -> str:
    return json.dumps(workflow_to_dict(w), indent=indent)


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # cycle | duplicate task id | duplicate data id | dangling reference | multiple producers | ...
    subjects: tuple[str, ...]
    detail: str = ""

    def __str__(self) -> str:
        text = f"{self.kind}: {', '.join(self.subjects)}"
        return f"{text} ({self.detail})" if self.detail else text


def _find_cycle(nodes: set[str], deps: dict[str, Iterable[str]]) -> list[str]:
    """Return one cycle (list of task ids) within ``nodes``; every node there
    must lie on or lead into a cycle, so walking dependencies always closes one."""
    start = min(nodes)
    seen: dict[str, int] = {}
    path: list[str] = []
    node = start
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = min(d for d in deps[node] if d in nodes)
    cycle = path[seen[node]:]
    # report in dependency order (producer before consumer)
    return list(reversed(cycle))


def validate_workflow(w: Workflow) -> list[Violation]:
    """Every structural problem in ``w``; an empty list means valid."""
    report: list[Violation] = []

    seen_tasks: set[str] = set()
    for t in w.tasks:
        if t.id in seen_tasks:
            report.append(Violation("duplicate task id", (t.id,)))
        seen_tasks.add(t.id)
    seen_data: set[str] = set()
    for d in w.data:
        if d.id in seen_data:
            report.append(Violation("duplicate data id", (d.id,)))
        seen_data.add(d.id)
        if d.size_bytes < 0:
            report.append(Violation("negative size", (d.id,)))

    producers: dict[str, list[str]] = defaultdict(list)
    for t in w.tasks:
        for ref in (*t.inputs, *t.outputs):
            if ref not in seen_data:
                report.append(Violation("dangling data reference", (t.id, ref)))
        both = sorted(set(t.inputs) & set(t.outputs))
        if both:
            report.append(Violation("data both input and output", (t.id, *both)))
        if t.parallelism < 1:
            report.append(Violation("parallelism below 1", (t.id,)))
        if t.work_gcs < 0:
            report.append(Violation("negative work", (t.id,)))
        if t.memory_mb < 1 or t.disk_mb < 0:
            report.append(Violation("invalid resource request", (t.id,)))
        for d in t.outputs:
            producers[d].append(t.id)
    for d, ps in sorted(producers.items()):
        if len(ps) > 1:
            report.append(Violation("multiple producers", (d,), detail=", ".join(ps)))

    # Kahn-style elimination; anything left over sits on or behind a cycle
    deps: dict[str, set[str]] = defaultdict(set)
    for t in w.tasks:
        for d in t.inputs:
            for p in producers.get(d, ()):
                if p != t.id:
                    deps[t.id].add(p)
    ids = {t.id for t in w.tasks}
    indeg = {tid: len(deps[tid]) for tid in ids}
    users: dict[str, list[str]] = defaultdict(list)
    for c, ps in deps.items():
        for p in ps:
            users[p].append(c)
    queue = deque(tid for tid, n in indeg.items() if n == 0)
    removed = 0
    while queue:
        tid = queue.popleft()
        removed += 1
        for c in users[tid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if removed < len(ids):
        rest = {tid for tid, n in indeg.items() if n > 0}
        report.append(Violation("cycle", tuple(_find_cycle(rest, deps))))
    return report


def is_valid(w: Workflow) -> bool:
    return not validate_workflow(w)


def ready_tasks(w: Workflow, completed: Iterable[str]) -> list[str]:
    """Tasks not yet completed whose inputs are all available, sorted by id."""
    done = set(completed)
    unknown = done - w.task_by_id.keys()
    if unknown:
        raise KeyError(f"unknown task id(s) in completed set: {sorted(unknown)}")
    return sorted(
        tid
        for tid, deps in w.dependencies.items()
        if tid not in done and deps <= done
    )


def topological_order(w: Workflow) -> list[str]:
    """Deterministic topological order (smallest ready id first)."""
    import heapq

    indeg = {tid: len(d) for tid, d in w.dependencies.items()}
    heap = [tid for tid, n in indeg.items() if n == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        tid = heapq.heappop(heap)
        order.append(tid)
        for c in w.dependents[tid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != len(indeg):
        raise WorkflowError("workflow has a dependency cycle")
    return order
