"""Discrete-event enactment with one container per task attempt.

There is no worker pool or task queue: every submission asks the platform
for a fresh container. The platform may admit it (cold or from its warm
pool), throttle the request, or refuse it because the concurrency limit is
reached. Throttled requests are retried by the client with exponential
backoff; refused ones wait until some container is released.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Mapping, NamedTuple, Union

from .executors import (
    Admitted,
    Allocation,
    CapacityFull,
    ExecutorProfile,
    ExecutorState,
    allocation_for,
    compute_time_s,
    profiles_hash,
    release,
    sample_cold_start_s,
    staging_time_s,
    try_admit,
)
from .rational import format_rational, quantize_micros, to_fraction
from .routing import RoutingPolicy, route_all
from .workflow import Task, Workflow, WorkflowError, validate_workflow

SUCCESS = "success"
TIMEOUT = "timeout"
THROTTLED_RETRY = "throttled_retry"
FAILED = "failed"
OUTCOMES = (SUCCESS, TIMEOUT, THROTTLED_RETRY, FAILED)


@dataclass(frozen=True)
class EngineConfig:
    max_task_retries: int = 2
    backoff_initial_s: Fraction = Fraction(1)
    backoff_multiplier: Fraction = Fraction(2)
    backoff_max_s: Fraction = Fraction(32)
    seed: int = 0
    # uniform submission delay in [0, submit_jitter_s]; 0 disables the noise
    submit_jitter_s: Fraction = Fraction(0)
    # probability that an attempt fails at its end (failure injection)
    failure_prob: float = 0.0

    def __post_init__(self):
        for name in ("backoff_initial_s", "backoff_multiplier", "backoff_max_s", "submit_jitter_s"):
            object.__setattr__(self, name, to_fraction(getattr(self, name), name))
        if self.max_task_retries < 0:
            raise ValueError("max_task_retries must be >= 0")
        if self.backoff_multiplier < 1:
            raise ValueError("backoff_multiplier must be >= 1")
        if self.backoff_initial_s < 0 or self.backoff_max_s < 0 or self.submit_jitter_s < 0:
            raise ValueError("backoff and jitter values must be non-negative")
        if not 0 <= self.failure_prob <= 1:
            raise ValueError("failure_prob must be in [0, 1]")

    def with_overrides(self, overrides: Mapping[str, str]) -> "EngineConfig":
        """Apply textual key=value overrides (as given on the command line)."""
        types = {f.name: f.type for f in fields(self)}
        changes = {}
        for key, raw in overrides.items():
            if key not in types:
                raise ValueError(f"unknown engine setting {key!r}")
            current = getattr(self, key)
            if isinstance(current, int):
                changes[key] = int(raw)
            elif isinstance(current, float):
                changes[key] = float(raw)
            else:
                changes[key] = to_fraction(raw, key)
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            f.name: format_rational(v) if isinstance(v := getattr(self, f.name), Fraction) else v
            for f in fields(self)
        }


@dataclass(frozen=True)
class TaskAttempt:
    task_id: str
    attempt_no: int
    executor: str
    group: str
    scheduled_t: Fraction
    setup_start_t: Fraction
    exec_start_t: Fraction
    end_t: Fraction
    outcome: str
    cold: bool
    allocation: Allocation
    throttle_events: int = 0

    @property
    def setup_s(self) -> Fraction:
        return self.exec_start_t - self.scheduled_t

    @property
    def exec_s(self) -> Fraction:
        return self.end_t - self.exec_start_t

    @property
    def lifetime_s(self) -> Fraction:
        return self.end_t - self.setup_start_t

    def to_dict(self) -> dict:
        r = format_rational
        return {
            "task_id": self.task_id,
            "attempt_no": self.attempt_no,
            "executor": self.executor,
            "group": self.group,
            "scheduled_t": r(self.scheduled_t),
            "setup_start_t": r(self.setup_start_t),
            "exec_start_t": r(self.exec_start_t),
            "end_t": r(self.end_t),
            "setup_s": r(self.setup_s),
            "exec_s": r(self.exec_s),
            "outcome": self.outcome,
            "cold": self.cold,
            "memory_mb": self.allocation.memory_mb,
            "vcpu": r(self.allocation.vcpu),
            "throttle_events": self.throttle_events,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TaskAttempt":
        f = Fraction
        return cls(
            task_id=d["task_id"],
            attempt_no=int(d["attempt_no"]),
            executor=d["executor"],
            group=d["group"],
            scheduled_t=f(d["scheduled_t"]),
            setup_start_t=f(d["setup_start_t"]),
            exec_start_t=f(d["exec_start_t"]),
            end_t=f(d["end_t"]),
            outcome=d["outcome"],
            cold=bool(d["cold"]),
            allocation=Allocation(int(d["memory_mb"]), f(d["vcpu"])),
            throttle_events=int(d["throttle_events"]),
        )


@dataclass
class ExecutionTrace:
    workflow_name: str
    seed: int
    attempts: list[TaskAttempt] = field(default_factory=list)
    makespan_s: Fraction = Fraction(0)
    # per-executor counters for this run; includes "first_throttle_after"
    counters: dict[str, dict] = field(default_factory=dict)
    profiles_hash: str = ""
    incomplete: dict[str, str] = field(default_factory=dict)  # task id -> reason

    @property
    def complete(self) -> bool:
        return not self.incomplete

    def successful(self) -> list[TaskAttempt]:
        return [a for a in self.attempts if a.outcome == SUCCESS]

    def header(self) -> dict:
        return {
            "workflow_name": self.workflow_name,
            "seed": self.seed,
            "profiles_hash": self.profiles_hash,
            "makespan_s": format_rational(self.makespan_s),
            "complete": self.complete,
            "incomplete": dict(sorted(self.incomplete.items())),
            "counters": {k: self.counters[k] for k in sorted(self.counters)},
        }

    def to_jsonl(self) -> str:
        lines = [json.dumps(self.header())]
        lines.extend(json.dumps(a.to_dict()) for a in self.attempts)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "ExecutionTrace":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows:
            raise ValueError("empty trace file")
        head = rows[0]
        return cls(
            workflow_name=head["workflow_name"],
            seed=head["seed"],
            attempts=[TaskAttempt.from_dict(r) for r in rows[1:]],
            makespan_s=Fraction(head["makespan_s"]),
            counters=head.get("counters", {}),
            profiles_hash=head.get("profiles_hash", ""),
            incomplete=head.get("incomplete", {}),
        )


def makespan(attempts) -> Fraction:
    ok = [a for a in attempts if a.outcome == SUCCESS]
    if not ok:
        return Fraction(0)
    return max(a.end_t for a in ok) - min(a.scheduled_t for a in ok)


# --------------------------------------------------------------------------
# Retry policy
# --------------------------------------------------------------------------


class Retry(NamedTuple):
    delay_s: Fraction


class GiveUp(NamedTuple):
    reason: str


def backoff_delay(n: int, cfg: EngineConfig) -> Fraction:
    """Delay before the n-th retry (n >= 1)."""
    return min(cfg.backoff_initial_s * cfg.backoff_multiplier ** (n - 1), cfg.backoff_max_s)


def retry_decision(attempt: TaskAttempt, cfg: EngineConfig) -> Union[Retry, GiveUp]:
    """Throttling never uses up the retry budget; timeouts and failures do."""
    if attempt.outcome == SUCCESS:
        raise ValueError("retry_decision called for a successful attempt")
    if attempt.outcome == THROTTLED_RETRY:
        return Retry(backoff_delay(max(attempt.throttle_events, 1), cfg))
    if attempt.attempt_no > cfg.max_task_retries:
        return GiveUp(f"{attempt.outcome} after {attempt.attempt_no} attempt(s)")
    return Retry(backoff_delay(attempt.attempt_no, cfg))


# --------------------------------------------------------------------------
# Container lifecycle
# --------------------------------------------------------------------------


class Lifecycle(NamedTuple):
    setup_start_t: Fraction
    exec_start_t: Fraction
    end_t: Fraction
    outcome: str


def lifecycle(
    profile: ExecutorProfile,
    task: Task,
    alloc: Allocation,
    admit_t: Fraction,
    cold_s: Fraction,
    input_bytes: int,
    output_bytes: int,
) -> Lifecycle:
    """Timestamps of one admitted container.

    Setup runs from admission through the cold start and input download; the
    task's command then computes and uploads its outputs. The execution limit
    counts from the moment the container is up (after the cold start).
    """
    ready = admit_t + cold_s
    stage_in = staging_time_s(profile, input_bytes)
    busy = stage_in + compute_time_s(profile, task, alloc) + staging_time_s(profile, output_bytes)
    if profile.max_exec_s is not None and busy > profile.max_exec_s:
        end = ready + profile.max_exec_s
        return Lifecycle(admit_t, min(ready + stage_in, end), end, TIMEOUT)
    return Lifecycle(admit_t, ready + stage_in, ready + busy, SUCCESS)


# --------------------------------------------------------------------------
# Event loop
# --------------------------------------------------------------------------

_SUBMIT = 0
_END = 1


@dataclass
class _Pending:
    task: Task
    executor: str
    alloc: Allocation
    attempt_no: int
    scheduled_t: Fraction
    throttle_events: int = 0


@dataclass
class _RunCounters:
    base: dict
    first_throttle_after: int | None = None
    peak_running: int = 0


def run(
    w: Workflow,
    policy: RoutingPolicy,
    states: Mapping[str, ExecutorState],
    cfg: EngineConfig = EngineConfig(),
    *,
    validate: bool = True,
) -> ExecutionTrace:
    """Simulate ``w`` and return its trace.

    ``states`` are mutated: warm pools persist, so calling run repeatedly
    with the same states models consecutive runs in one session. A task that
    exhausts its retries (or can never be admitted) leaves the run
    incomplete; the partial trace is still returned.
    Raises NoFit if some task cannot be routed.
    """
    if validate:
        problems = validate_workflow(w)
        if problems:
            raise WorkflowError("invalid workflow: " + "; ".join(map(str, problems)))
    profiles = {name: s.profile for name, s in states.items()}
    policy.check_against(profiles)
    routes = route_all(policy, w.tasks, profiles)

    rng = random.Random(cfg.seed)
    for s in states.values():
        s.begin_run()
    run_counters = {name: _RunCounters(base=s.counters()) for name, s in states.items()}

    heap: list = []
    seq = 0
    pending: dict[str, _Pending] = {}
    running: dict[str, tuple[_Pending, TaskAttempt]] = {}
    waiting: dict[str, list] = {name: [] for name in states}
    attempts: list[TaskAttempt] = []
    incomplete: dict[str, str] = {}
    remaining = {tid: len(deps) for tid, deps in w.dependencies.items()}
    jitter = cfg.submit_jitter_s
    allocs: dict[tuple[str, str], Allocation] = {}

    def push(t: Fraction, tid: str, attempt_no: int, kind: int) -> None:
        nonlocal seq
        seq += 1
        heapq.heappush(heap, (t, tid, attempt_no, seq, kind))

    def submit_new(task: Task, now: Fraction, attempt_no: int) -> None:
        ex = routes[task.id]
        key = (ex, task.id)
        alloc = allocs.get(key)
        if alloc is None:
            alloc = allocs[key] = allocation_for(states[ex].profile, task)
        t = now
        if jitter:
            t = now + quantize_micros(rng.uniform(0, float(jitter)))
        pending[task.id] = _Pending(task, ex, alloc, attempt_no, now)
        push(t, task.id, attempt_no, _SUBMIT)

    zero = Fraction(0)
    for tid in sorted(remaining):
        if remaining[tid] == 0:
            submit_new(w.task_by_id[tid], zero, 1)

    while heap:
        now, tid, attempt_no, _, kind = heapq.heappop(heap)
        if kind == _SUBMIT:
            p = pending[tid]
            state = states[p.executor]
            rc = run_counters[p.executor]
            result = try_admit(state, now)
            if isinstance(result, Admitted):
                prof = state.profile
                cold_s = sample_cold_start_s(prof, rng) if result.cold else zero
                lc = lifecycle(prof, p.task, p.alloc, now, cold_s,
                               w.input_bytes(p.task), w.output_bytes(p.task))
                outcome = lc.outcome
                if outcome == SUCCESS and cfg.failure_prob and rng.random() < cfg.failure_prob:
                    outcome = FAILED
                att = TaskAttempt(
                    task_id=tid, attempt_no=p.attempt_no, executor=p.executor, group=p.task.group,
                    scheduled_t=p.scheduled_t, setup_start_t=lc.setup_start_t,
                    exec_start_t=lc.exec_start_t, end_t=lc.end_t, outcome=outcome,
                    cold=result.cold, allocation=p.alloc, throttle_events=p.throttle_events,
                )
                running[tid] = (p, att)
                if state.running > rc.peak_running:
                    rc.peak_running = state.running
                push(lc.end_t, tid, p.attempt_no, _END)
            elif isinstance(result, CapacityFull):
                heapq.heappush(waiting[p.executor], (p.scheduled_t, tid))
            else:
                if rc.first_throttle_after is None:
                    rc.first_throttle_after = state.admitted - rc.base["admitted"]
                p.throttle_events += 1
                if result.retry_after_s is None:
                    incomplete[tid] = "starved: throttled and the burst bucket never refills"
                    del pending[tid]
                    continue
                delay = max(result.retry_after_s, backoff_delay(p.throttle_events, cfg))
                push(now + delay, tid, p.attempt_no, _SUBMIT)
        else:
            p, att = running.pop(tid)
            del pending[tid]
            state = states[p.executor]
            release(state, now, att.outcome)
            attempts.append(att)
            queue = waiting[p.executor]
            if queue:
                _, wid = heapq.heappop(queue)
                push(now, wid, pending[wid].attempt_no, _SUBMIT)
            if att.outcome == SUCCESS:
                for child in w.dependents[tid]:
                    remaining[child] -= 1
                    if remaining[child] == 0:
                        submit_new(w.task_by_id[child], now, 1)
            else:
                decision = retry_decision(att, cfg)
                if isinstance(decision, GiveUp):
                    incomplete[tid] = decision.reason
                else:
                    submit_new(p.task, now + decision.delay_s, p.attempt_no + 1)

    done = {a.task_id for a in attempts if a.outcome == SUCCESS}
    for queue in waiting.values():
        for _, wid in queue:
            incomplete.setdefault(wid, "never admitted")
    for t in w.tasks:
        if t.id not in done and t.id not in incomplete:
            incomplete[t.id] = "blocked by an incomplete dependency"

    counters = {}
    for name, s in states.items():
        rc = run_counters[name]
        now_c = s.counters()
        snap = {k: now_c[k] - rc.base[k] for k in now_c}
        snap["first_throttle_after"] = rc.first_throttle_after
        snap["peak_running"] = rc.peak_running
        snap["warm_pool"] = s.warm_pool
        counters[name] = snap

    attempts.sort(key=lambda a: (a.scheduled_t, a.task_id, a.attempt_no))
    return ExecutionTrace(
        workflow_name=w.name,
        seed=cfg.seed,
        attempts=attempts,
        makespan_s=makespan(attempts),
        counters=counters,
        profiles_hash=profiles_hash(profiles),
        incomplete=incomplete,
    )
