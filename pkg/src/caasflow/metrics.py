"""Figures from traces: per-group averages, Gantt exports, bursts, concurrency."""

from __future__ import annotations

import csv
import heapq
import io
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

from .engine import SUCCESS, ExecutionTrace, TaskAttempt
from .rational import fixed, format_rational

GANTT_HEADER = (
    "task_id", "group", "lane", "scheduled_t", "exec_start_t", "end_t",
    "setup_s", "exec_s", "executor", "cold",
)


@dataclass(frozen=True)
class GroupStats:
    group: str
    count: int
    mean_setup_s: Fraction
    min_setup_s: Fraction
    max_setup_s: Fraction
    stddev_setup_s: float
    mean_exec_s: Fraction
    min_exec_s: Fraction
    max_exec_s: Fraction
    stddev_exec_s: float

    def to_dict(self) -> dict:
        out = {"group": self.group, "count": self.count}
        for name in ("setup", "exec"):
            for stat in ("mean", "min", "max"):
                key = f"{stat}_{name}_s"
                out[key] = format_rational(getattr(self, key))
            out[f"stddev_{name}_s"] = round(getattr(self, f"stddev_{name}_s"), 6)
        return out


def group_stats(trace: ExecutionTrace) -> list[GroupStats]:
    """Setup/execution statistics per task group over successful attempts."""
    by_group: dict[str, list[TaskAttempt]] = defaultdict(list)
    for a in trace.attempts:
        if a.outcome == SUCCESS:
            by_group[a.group].append(a)
    if not by_group:
        raise ValueError("trace has no successful attempts")
    out = []
    for group in sorted(by_group):
        setups = [a.setup_s for a in by_group[group]]
        execs = [a.exec_s for a in by_group[group]]
        n = len(setups)
        out.append(
            GroupStats(
                group=group,
                count=n,
                mean_setup_s=sum(setups, Fraction(0)) / n,
                min_setup_s=min(setups),
                max_setup_s=max(setups),
                stddev_setup_s=math.sqrt(statistics.pvariance(setups)),
                mean_exec_s=sum(execs, Fraction(0)) / n,
                min_exec_s=min(execs),
                max_exec_s=max(execs),
                stddev_exec_s=math.sqrt(statistics.pvariance(execs)),
            )
        )
    return out


def assign_lanes(attempts: list[TaskAttempt]) -> dict[tuple[str, int], int]:
    """Greedy first-fit lanes over [setup_start_t, end_t) intervals.

    Intervals are taken in start order and each gets the lowest-indexed lane
    that is free by then, which makes the lane count equal to the largest
    number of simultaneously open attempts.
    """
    busy: list[tuple[Fraction, int]] = []  # (end_t, lane)
    free: list[int] = []
    lanes = {}
    n_lanes = 0
    for a in sorted(attempts, key=lambda a: (a.setup_start_t, a.task_id, a.attempt_no)):
        while busy and busy[0][0] <= a.setup_start_t:
            heapq.heappush(free, heapq.heappop(busy)[1])
        if free:
            lane = heapq.heappop(free)
        else:
            lane = n_lanes
            n_lanes += 1
        lanes[(a.task_id, a.attempt_no)] = lane
        heapq.heappush(busy, (a.end_t, lane))
    return lanes


def export_gantt_csv(trace: ExecutionTrace, mode: str = "flattened") -> str:
    """CSV rows per attempt, sorted by scheduled time then task id.

    ``per_task`` gives every row its own lane; ``flattened`` packs the bars
    into as few lanes as possible.
    """
    if mode not in ("per_task", "flattened"):
        raise ValueError(f"unknown gantt mode {mode!r}")
    rows = sorted(trace.attempts, key=lambda a: (a.scheduled_t, a.task_id, a.attempt_no))
    if mode == "flattened":
        lanes = assign_lanes(rows)
    else:
        lanes = {(a.task_id, a.attempt_no): i for i, a in enumerate(rows)}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(GANTT_HEADER)
    for a in rows:
        writer.writerow([
            a.task_id, a.group, lanes[(a.task_id, a.attempt_no)],
            fixed(a.scheduled_t), fixed(a.exec_start_t), fixed(a.end_t),
            fixed(a.setup_s), fixed(a.exec_s), a.executor, int(a.cold),
        ])
    return buf.getvalue()


def measure_burst(trace: ExecutionTrace, executor: str) -> int:
    """Admissions on ``executor`` before its first throttled submission
    (all admissions when nothing was throttled)."""
    if executor not in trace.counters:
        raise KeyError(f"executor {executor!r} not present in trace")
    c = trace.counters[executor]
    if c.get("first_throttle_after") is not None:
        return c["first_throttle_after"]
    return c.get("admitted", sum(1 for a in trace.attempts if a.executor == executor))


def concurrency_timeline(trace: ExecutionTrace, executor: str) -> list[tuple[Fraction, int]]:
    """Step points (t, running containers) from admissions and releases.

    Changes at the same instant are merged into one point.
    """
    delta: dict[Fraction, int] = defaultdict(int)
    for a in trace.attempts:
        if a.executor == executor:
            delta[a.setup_start_t] += 1
            delta[a.end_t] -= 1
    steps = []
    running = 0
    for t in sorted(delta):
        running += delta[t]
        steps.append((t, running))
    return steps


def peak_concurrency(trace: ExecutionTrace, executor: str) -> int:
    return max((n for _, n in concurrency_timeline(trace, executor)), default=0)


def stats_document(trace: ExecutionTrace) -> dict:
    """Bundle behind stats.json: group averages, makespan and counters."""
    try:
        groups = [g.to_dict() for g in group_stats(trace)]
    except ValueError:
        groups = []
    return {
        "workflow_name": trace.workflow_name,
        "seed": trace.seed,
        "complete": trace.complete,
        "makespan_s": format_rational(trace.makespan_s),
        "makespan_s_float": round(float(trace.makespan_s), 6),
        "attempts": len(trace.attempts),
        "groups": groups,
        "executors": {
            name: dict(c, measured_burst=measure_burst(trace, name))
            for name, c in sorted(trace.counters.items())
        },
    }
