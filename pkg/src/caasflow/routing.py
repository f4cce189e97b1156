"""Hybrid FaaS/CaaS routing from fit predicates plus per-group overrides."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence, Union

from .executors import ExecutorProfile, ProfileError, allocation_for
from .rational import format_rational, to_fraction
from .workflow import Task


class PolicyError(ValueError):
    pass


class NoFit(LookupError):
    """No executor can run the task; ``reasons`` maps profile -> failed constraints."""

    def __init__(self, task_id: str, reasons: Mapping[str, list[str]]):
        self.task_id = task_id
        self.reasons = dict(reasons)
        detail = "; ".join(f"{p}: {', '.join(r)}" for p, r in self.reasons.items())
        super().__init__(f"task {task_id!r} fits no executor ({detail})")


@dataclass(frozen=True)
class RoutingPolicy:
    preference: tuple[str, ...]
    group_overrides: Mapping[str, str] = field(default_factory=dict)
    duration_safety_factor: Fraction = Fraction(4, 5)
    estimate_clock_ghz: Fraction = Fraction(5, 2)

    def __post_init__(self):
        object.__setattr__(self, "preference", tuple(self.preference))
        object.__setattr__(self, "group_overrides", dict(self.group_overrides))
        sf = to_fraction(self.duration_safety_factor, "duration_safety_factor")
        clock = to_fraction(self.estimate_clock_ghz, "estimate_clock_ghz")
        object.__setattr__(self, "duration_safety_factor", sf)
        object.__setattr__(self, "estimate_clock_ghz", clock)
        if not self.preference:
            raise PolicyError("preference list must not be empty")
        if not 0 < sf <= 1:
            raise PolicyError("duration_safety_factor must be in (0, 1]")
        if clock <= 0:
            raise PolicyError("estimate_clock_ghz must be positive")

    @classmethod
    def single(cls, name: str, **kw) -> "RoutingPolicy":
        return cls(preference=(name,), **kw)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RoutingPolicy":
        if "preference" not in d:
            raise PolicyError("policy: missing required field 'preference'")
        kw = {k: d[k] for k in ("group_overrides", "duration_safety_factor", "estimate_clock_ghz") if k in d}
        return cls(preference=tuple(d["preference"]), **kw)

    def to_dict(self) -> dict:
        return {
            "preference": list(self.preference),
            "group_overrides": dict(sorted(self.group_overrides.items())),
            "duration_safety_factor": format_rational(self.duration_safety_factor),
            "estimate_clock_ghz": format_rational(self.estimate_clock_ghz),
        }

    def names(self) -> set[str]:
        return set(self.preference) | set(self.group_overrides.values())

    def check_against(self, profiles: Mapping[str, ExecutorProfile]) -> None:
        missing = sorted(self.names() - set(profiles))
        if missing:
            raise PolicyError(f"policy names unknown executor(s): {missing}")


def load_policy(path: Union[str, Path, None] = None, builtin: str = "policy-hybrid.json") -> RoutingPolicy:
    if path is None:
        text = resources.files("caasflow.data").joinpath(builtin).read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise PolicyError(f"policy: syntax error at line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise PolicyError("policy: expected an object")
    return RoutingPolicy.from_dict(doc)


def estimated_duration_s(profile: ExecutorProfile, task: Task, policy: RoutingPolicy) -> Fraction:
    """Compute-time estimate at the policy's reference clock."""
    alloc = allocation_for(profile, task)
    if task.work_gcs == 0:
        return Fraction(0)
    return task.work_gcs / (policy.estimate_clock_ghz * min(alloc.vcpu, task.parallelism))


def fit_failures(profile: ExecutorProfile, task: Task, policy: RoutingPolicy) -> list[str]:
    """Constraints ``task`` violates on ``profile``; empty when it fits."""
    if task.memory_mb > profile.memory_mb_max:
        return [f"memory {task.memory_mb} MB > {profile.memory_mb_max} MB"]
    failures = []
    try:
        alloc = allocation_for(profile, task)
    except ProfileError as exc:
        return [str(exc)]
    quota = profile.disk_quota_mb(alloc.memory_mb)
    if task.disk_mb > quota:
        failures.append(f"disk {task.disk_mb} MB > {quota} MB")
    if profile.max_exec_s is not None:
        est = estimated_duration_s(profile, task, policy)
        budget = profile.max_exec_s * policy.duration_safety_factor
        if est > budget:
            failures.append(f"estimated {float(est):.1f} s > {float(budget):.1f} s")
    return failures


def fits(profile: ExecutorProfile, task: Task, policy: RoutingPolicy) -> bool:
    return not fit_failures(profile, task, policy)


def route(policy: RoutingPolicy, task: Task, profiles: Mapping[str, ExecutorProfile]) -> str:
    """Executor for ``task``: a fitting hint, then a fitting group override,
    then the first fitting profile in preference order."""
    candidates: list[str] = []
    if task.executor_hint is not None:
        if task.executor_hint not in profiles:
            raise PolicyError(f"task {task.id!r}: executor_hint names unknown executor {task.executor_hint!r}")
        candidates.append(task.executor_hint)
    override = policy.group_overrides.get(task.group)
    if override is not None:
        candidates.append(override)
    candidates.extend(policy.preference)

    reasons: dict[str, list[str]] = {}
    for name in candidates:
        if name in reasons:
            continue
        if name not in profiles:
            raise PolicyError(f"policy names unknown executor {name!r}")
        failures = fit_failures(profiles[name], task, policy)
        if not failures:
            return name
        reasons[name] = failures
    raise NoFit(task.id, reasons)


def route_all(policy: RoutingPolicy, tasks: Sequence[Task], profiles: Mapping[str, ExecutorProfile]) -> dict[str, str]:
    # routing only looks at the resource shape, so identical shapes share a decision
    decided: dict[tuple, str] = {}
    out = {}
    for t in tasks:
        key = (t.executor_hint, t.group, t.work_gcs, t.parallelism, t.memory_mb, t.disk_mb)
        if key not in decided:
            decided[key] = route(policy, t, profiles)
        out[t.id] = decided[key]
    return out
