"""Simulated serverless backends (FaaS and CaaS).

A profile holds the static limits and overheads of a platform; an
ExecutorState is the mutable admission state the engine drives: running
containers, the burst token bucket and the warm pool.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import MISSING, dataclass, fields, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Mapping, NamedTuple, Union

from .pricing import BillingScheme
from .rational import Number, format_rational, quantize_micros, to_fraction
from .workflow import Task

FAAS = "faas"
CAAS = "caas"


class ProfileError(ValueError):
    pass


_RATIONAL_FIELDS = (
    "vcpu_min", "vcpu_max", "mem_per_vcpu_mb", "max_exec_s", "burst_refill_per_s",
    "cold_start_s_min", "cold_start_s_max", "clock_ghz", "staging_bandwidth_mbps",
    "staging_latency_s", "alloc_vcpu",
)


@dataclass(frozen=True)
class ExecutorProfile:
    name: str
    kind: str
    memory_mb_min: int
    memory_mb_max: int
    vcpu_min: Fraction
    vcpu_max: Fraction
    mem_per_vcpu_mb: Fraction
    max_exec_s: Fraction | None  # None = unbounded
    max_concurrency: int
    burst_capacity: int
    burst_refill_per_s: Fraction
    cold_start_s_min: Fraction
    cold_start_s_max: Fraction
    clock_ghz: Fraction
    disk_mb: int
    reusable: bool
    staging_bandwidth_mbps: Fraction
    staging_latency_s: Fraction
    billing: BillingScheme
    # disk quota is the allocated memory (in-memory filesystem)
    disk_from_memory: bool = False
    # container size used for every task; None = size memory to the task
    alloc_memory_mb: int | None = None
    alloc_vcpu: Fraction | None = None
    # False: admissions served from the warm pool skip the token bucket
    throttle_warm: bool = True

    def __post_init__(self):
        for name in _RATIONAL_FIELDS:
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, to_fraction(value, f"{self.name}.{name}"))
        if isinstance(self.billing, Mapping):
            object.__setattr__(self, "billing", BillingScheme.from_dict(self.billing))
        problems = []
        if self.kind not in (FAAS, CAAS):
            problems.append(f"kind must be {FAAS!r} or {CAAS!r}")
        if not 0 < self.memory_mb_min <= self.memory_mb_max:
            problems.append("memory range is empty")
        if not 0 < self.vcpu_min <= self.vcpu_max:
            problems.append("vcpu range is empty")
        if self.mem_per_vcpu_mb <= 0:
            problems.append("mem_per_vcpu_mb must be positive")
        if not 0 <= self.cold_start_s_min <= self.cold_start_s_max:
            problems.append("cold start range is invalid")
        if self.max_exec_s is not None and self.max_exec_s <= 0:
            problems.append("max_exec_s must be positive")
        if self.max_concurrency < 1 or self.burst_capacity < 1:
            problems.append("max_concurrency and burst_capacity must be at least 1")
        if self.burst_refill_per_s < 0:
            problems.append("burst_refill_per_s must be non-negative")
        if self.clock_ghz <= 0 or self.staging_bandwidth_mbps <= 0:
            problems.append("clock_ghz and staging_bandwidth_mbps must be positive")
        if self.staging_latency_s < 0 or self.disk_mb < 0:
            problems.append("staging latency and disk must be non-negative")
        if self.kind == FAAS and self.alloc_vcpu is not None:
            problems.append("faas profiles derive vCPU from memory; alloc_vcpu must be unset")
        if problems:
            raise ProfileError(f"profile {self.name!r}: " + "; ".join(problems))

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExecutorProfile":
        known = {f.name for f in fields(cls)}
        missing = {f.name for f in fields(cls) if f.default is MISSING} - set(d)
        if missing:
            raise ProfileError(f"profile {d.get('name')!r}: missing field(s) {sorted(missing)}")
        unknown = set(d) - known
        if unknown:
            raise ProfileError(f"profile {d.get('name')!r}: unknown field(s) {sorted(unknown)}")
        return cls(**dict(d))

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Fraction):
                v = format_rational(v)
            elif isinstance(v, BillingScheme):
                v = v.to_dict()
            out[f.name] = v
        return out

    def disk_quota_mb(self, memory_mb: int) -> int:
        return memory_mb if self.disk_from_memory else self.disk_mb


def load_profiles(path: Union[str, Path, None] = None) -> dict[str, ExecutorProfile]:
    """Read profiles from a JSON list (or {"profiles": [...]}) keeping file order."""
    if path is None:
        text = resources.files("caasflow.data").joinpath("profiles.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        doc = json.loads(text, parse_float=Fraction)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"profiles: syntax error at line {exc.lineno} column {exc.colno}") from None
    if isinstance(doc, dict):
        doc = doc.get("profiles")
    if not isinstance(doc, list):
        raise ProfileError("profiles: expected a list of profile objects")
    out: dict[str, ExecutorProfile] = {}
    for d in doc:
        try:
            p = ExecutorProfile.from_dict(d)
        except TypeError as exc:
            raise ProfileError(f"profile {d.get('name')!r}: {exc}") from None
        if p.name in out:
            raise ProfileError(f"duplicate profile name {p.name!r}")
        out[p.name] = p
    return out


def profiles_hash(profiles: Mapping[str, ExecutorProfile]) -> str:
    canon = json.dumps([profiles[k].to_dict() for k in sorted(profiles)], sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def override_profile(profile: ExecutorProfile, **changes) -> ExecutorProfile:
    return replace(profile, **changes)


# --------------------------------------------------------------------------
# Resource model
# --------------------------------------------------------------------------


class AllocationRequest(NamedTuple):
    memory_mb: int
    vcpu: Number | None = None


@dataclass(frozen=True)
class Allocation:
    memory_mb: int
    vcpu: Fraction  # effective


def effective_vcpu(profile: ExecutorProfile, requested: AllocationRequest) -> Fraction:
    """FaaS: CPU share proportional to memory (capped); CaaS: clamp the request."""
    if not profile.memory_mb_min <= requested.memory_mb <= profile.memory_mb_max:
        raise ProfileError(
            f"{profile.name}: memory {requested.memory_mb} MB outside "
            f"[{profile.memory_mb_min}, {profile.memory_mb_max}]"
        )
    if profile.kind == FAAS:
        return min(Fraction(requested.memory_mb) / profile.mem_per_vcpu_mb, profile.vcpu_max)
    if requested.vcpu is None:
        raise ProfileError(f"{profile.name}: container profiles need an explicit vCPU request")
    return min(max(to_fraction(requested.vcpu), profile.vcpu_min), profile.vcpu_max)


def allocation_for(profile: ExecutorProfile, task: Task) -> Allocation:
    memory = max(task.memory_mb, profile.alloc_memory_mb or profile.memory_mb_min)
    vcpu = None
    if profile.kind == CAAS:
        vcpu = profile.alloc_vcpu if profile.alloc_vcpu is not None else profile.vcpu_min
    return Allocation(memory, effective_vcpu(profile, AllocationRequest(memory, vcpu)))


def compute_time_s(profile: ExecutorProfile, task: Task, alloc: Allocation) -> Fraction:
    if task.work_gcs == 0:
        return Fraction(0)
    cores = min(alloc.vcpu, task.parallelism)
    return task.work_gcs / (profile.clock_ghz * cores)


def staging_time_s(profile: ExecutorProfile, total_bytes: int) -> Fraction:
    if total_bytes < 0:
        raise ValueError("total_bytes must be non-negative")
    return profile.staging_latency_s + Fraction(total_bytes * 8) / (
        profile.staging_bandwidth_mbps * 1_000_000
    )


def sample_cold_start_s(profile: ExecutorProfile, rng: random.Random) -> Fraction:
    lo, hi = profile.cold_start_s_min, profile.cold_start_s_max
    if lo == hi:
        return lo
    draw = quantize_micros(rng.uniform(float(lo), float(hi)))
    return min(max(draw, lo), hi)


# --------------------------------------------------------------------------
# Admission state
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Admitted:
    cold: bool


@dataclass(frozen=True)
class Throttled:
    retry_after_s: Fraction | None  # None: the bucket never refills


@dataclass(frozen=True)
class CapacityFull:
    pass


AdmissionResult = Union[Admitted, Throttled, CapacityFull]


@dataclass
class ExecutorState:
    profile: ExecutorProfile
    running: int = 0
    burst_tokens: Fraction = None  # type: ignore[assignment]
    last_refill_t: Fraction = Fraction(0)
    warm_pool: int = 0
    admitted: int = 0
    throttled: int = 0
    capacity_full: int = 0
    cold_starts: int = 0
    warm_starts: int = 0
    released: int = 0

    def __post_init__(self):
        if self.burst_tokens is None:
            self.burst_tokens = Fraction(self.profile.burst_capacity)

    def begin_run(self) -> None:
        """Start a new run in the same session: the clock restarts at 0 and the
        bucket is full again after the idle gap; the warm pool is kept."""
        if self.running:
            raise RuntimeError(f"{self.profile.name}: {self.running} containers still running")
        self.burst_tokens = Fraction(self.profile.burst_capacity)
        self.last_refill_t = Fraction(0)

    def counters(self) -> dict[str, int]:
        return {
            "admitted": self.admitted,
            "throttled": self.throttled,
            "capacity_full": self.capacity_full,
            "cold_starts": self.cold_starts,
            "warm_starts": self.warm_starts,
            "released": self.released,
        }


def refill(state: ExecutorState, now: Fraction) -> None:
    if now < state.last_refill_t:
        raise ValueError(f"time went backwards: {now} < {state.last_refill_t}")
    p = state.profile
    if now > state.last_refill_t and state.burst_tokens < p.burst_capacity:
        state.burst_tokens = min(
            Fraction(p.burst_capacity),
            state.burst_tokens + (now - state.last_refill_t) * p.burst_refill_per_s,
        )
    state.last_refill_t = now


def try_admit(state: ExecutorState, now: Fraction) -> AdmissionResult:
    p = state.profile
    refill(state, now)
    if state.running >= p.max_concurrency:
        state.capacity_full += 1
        return CapacityFull()
    warm = state.warm_pool > 0
    if not (warm and not p.throttle_warm):
        if state.burst_tokens < 1:
            state.throttled += 1
            if p.burst_refill_per_s == 0:
                return Throttled(None)
            return Throttled((1 - state.burst_tokens) / p.burst_refill_per_s)
        state.burst_tokens -= 1
    state.running += 1
    state.admitted += 1
    if warm:
        state.warm_pool -= 1
        state.warm_starts += 1
    else:
        state.cold_starts += 1
    return Admitted(cold=not warm)


def release(state: ExecutorState, now: Fraction, outcome: str = "success") -> None:
    if state.running < 1:
        raise RuntimeError(f"{state.profile.name}: release with no running container")
    state.running -= 1
    state.released += 1
    if state.profile.reusable:
        state.warm_pool += 1


def new_states(profiles: Mapping[str, ExecutorProfile]) -> dict[str, ExecutorState]:
    return {name: ExecutorState(p) for name, p in profiles.items()}
