"""Synthetic workflow shapes: bag of tasks, fan-out/fan-in, multi-stage pipeline."""

from __future__ import annotations

import random
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from typing import Iterable, Mapping, NamedTuple, Sequence, Union

from .rational import to_fraction
from .workflow import DataItem, Task, Workflow


@dataclass(frozen=True)
class TaskTemplate:
    """Per-task defaults stamped onto every generated task of a stage."""

    group: str = "task"
    work_gcs: Fraction = Fraction(1)
    parallelism: int = 1
    memory_mb: int = 512
    disk_mb: int = 0
    output_bytes: int = 0
    executor_hint: str | None = None

    @classmethod
    def of(cls, value: "TemplateLike", **overrides) -> "TaskTemplate":
        if value is None:
            base = cls()
        elif isinstance(value, TaskTemplate):
            base = value
        else:
            known = {f.name for f in fields(cls)}
            extra = set(value) - known
            if extra:
                raise ValueError(f"unknown template field(s): {sorted(extra)}")
            base = cls(**value)
        tpl = replace(base, **overrides)
        tpl = replace(tpl, work_gcs=to_fraction(tpl.work_gcs, "work_gcs"))
        if tpl.parallelism < 1 or tpl.work_gcs < 0 or tpl.memory_mb < 1 or tpl.disk_mb < 0:
            raise ValueError(f"invalid template: {tpl}")
        return tpl


TemplateLike = Union[TaskTemplate, Mapping, None]


class Stage(NamedTuple):
    group: str
    width: int
    template: TemplateLike = None
    pattern: str = "all"  # link from the previous stage: "all" or "matched"


def _width(n: int) -> int:
    return max(4, len(str(n)))


def generate_bag(
    n: int,
    template: TemplateLike = None,
    *,
    name: str = "bag",
    input_bytes: int = 0,
) -> Workflow:
    """``n`` independent tasks of one group sharing a single workflow input."""
    if n < 1:
        raise ValueError("bag size must be at least 1")
    tpl = TaskTemplate.of(template)
    pad = _width(n)
    shared = DataItem("input", "input", input_bytes)
    data = [shared]
    tasks = []
    for i in range(1, n + 1):
        tid = f"t{i:0{pad}d}"
        out = DataItem(f"{tid}.out", f"{tid}.out", tpl.output_bytes)
        data.append(out)
        tasks.append(_task(tid, tpl, ("input",), (out.id,)))
    return Workflow(name=name, tasks=tuple(tasks), data=tuple(data))


def _task(tid: str, tpl: TaskTemplate, inputs, outputs) -> Task:
    return Task(
        id=tid,
        name=tpl.group,
        group=tpl.group,
        work_gcs=tpl.work_gcs,
        parallelism=tpl.parallelism,
        memory_mb=tpl.memory_mb,
        disk_mb=tpl.disk_mb,
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        executor_hint=tpl.executor_hint,
    )


def generate_pipeline(
    stages: Sequence[Union[Stage, tuple]],
    *,
    name: str = "pipeline",
    input_bytes: int = 0,
) -> Workflow:
    """Consecutive stages; stage i+1 consumes the outputs of stage i.

    Tasks of the first stage read one shared workflow input. With pattern
    "all" every task of a stage consumes every output of the previous stage;
    "matched" links task k to task k and requires equal widths.
    """
    stages = [Stage(*s) for s in stages]
    if not stages:
        raise ValueError("pipeline needs at least one stage")
    for s in stages:
        if s.width < 1:
            raise ValueError(f"stage {s.group!r}: width must be at least 1")
        if s.pattern not in ("all", "matched"):
            raise ValueError(f"stage {s.group!r}: unknown pattern {s.pattern!r}")
    total = sum(s.width for s in stages)
    pad = _width(total)

    data = [DataItem("input", "input", input_bytes)]
    tasks: list[Task] = []
    prev_outputs: list[str] = ["input"]
    counter = 0
    for idx, s in enumerate(stages):
        tpl = TaskTemplate.of(s.template, group=s.group)
        if idx > 0 and s.pattern == "matched" and len(prev_outputs) != s.width:
            raise ValueError(
                f"stage {s.group!r}: matched pattern needs width {len(prev_outputs)}, got {s.width}"
            )
        outputs = []
        for k in range(s.width):
            counter += 1
            tid = f"t{counter:0{pad}d}"
            out = DataItem(f"{tid}.out", f"{tid}.out", tpl.output_bytes)
            data.append(out)
            outputs.append(out.id)
            if idx > 0 and s.pattern == "matched":
                ins = (prev_outputs[k],)
            else:
                ins = tuple(prev_outputs)
            tasks.append(_task(tid, tpl, ins, (out.id,)))
        prev_outputs = outputs
    return Workflow(name=name, tasks=tuple(tasks), data=tuple(data))


def generate_fan(
    width: int,
    template: TemplateLike = None,
    *,
    name: str = "fan",
    setup_group: str = "setup",
    reduce_group: str = "aggregate",
    input_bytes: int = 0,
) -> Workflow:
    """One setup task, ``width`` parallel tasks of the template's group, one reducer."""
    if width < 1:
        raise ValueError("fan width must be at least 1")
    tpl = TaskTemplate.of(template)
    side = replace(tpl, work_gcs=Fraction(0))
    return generate_pipeline(
        [
            Stage(setup_group, 1, side),
            Stage(tpl.group, width, tpl),
            Stage(reduce_group, 1, side),
        ],
        name=name,
        input_bytes=input_bytes,
    )


def generate_random(
    n: int,
    rng: random.Random,
    *,
    edge_prob: float = 0.15,
    max_work: int = 50,
    groups: Iterable[str] = ("a", "b", "c"),
    max_bytes: int = 10_000_000,
    name: str = "random",
) -> Workflow:
    """Random valid DAG: edges only go from lower to higher task index.

    Each task produces one data item; a consumer reads the items of the
    producers it picked. Some tasks also read a shared workflow input.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    groups = list(groups)
    pad = _width(n)
    data = [DataItem("input", "input", rng.randrange(max_bytes + 1))]
    tasks = []
    for i in range(n):
        tid = f"t{i + 1:0{pad}d}"
        out = f"{tid}.out"
        data.append(DataItem(out, out, rng.randrange(max_bytes + 1)))
        ins = [f"t{j + 1:0{pad}d}.out" for j in range(i) if rng.random() < edge_prob]
        if not ins or rng.random() < 0.3:
            ins.insert(0, "input")
        tasks.append(
            Task(
                id=tid,
                name=tid,
                group=rng.choice(groups),
                work_gcs=Fraction(rng.randrange(max_work + 1), rng.choice((1, 2, 4, 10))),
                parallelism=rng.randint(1, 4),
                memory_mb=rng.choice((128, 256, 512, 1024)),
                disk_mb=rng.choice((0, 10, 100)),
                inputs=tuple(ins),
                outputs=(out,),
            )
        )
    return Workflow(name=name, tasks=tuple(tasks), data=tuple(data))
