"""Shared test builders and brute-force oracles (independent of the package's own graph code)."""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

from caasflow.executors import ExecutorProfile
from caasflow.pricing import BillingScheme
from caasflow.routing import RoutingPolicy
from caasflow.workflow import DataItem, Task, Workflow

CAAS_FREE = BillingScheme(kind="caas_seconds")


def make_profile(name: str = "ideal", **overrides) -> ExecutorProfile:
    """A zero-overhead container profile: 1 GHz, 1 vCPU, no cold start, no staging cost."""
    base = dict(
        name=name,
        kind="caas",
        memory_mb_min=128,
        memory_mb_max=65536,
        vcpu_min=Fraction(1),
        vcpu_max=Fraction(1),
        mem_per_vcpu_mb=Fraction(1024),
        max_exec_s=None,
        max_concurrency=10_000,
        burst_capacity=10_000,
        burst_refill_per_s=Fraction(1000),
        cold_start_s_min=Fraction(0),
        cold_start_s_max=Fraction(0),
        clock_ghz=Fraction(1),
        disk_mb=1_000_000,
        reusable=False,
        staging_bandwidth_mbps=Fraction(10**12),
        staging_latency_s=Fraction(0),
        billing=CAAS_FREE,
        alloc_memory_mb=None,
        alloc_vcpu=Fraction(1),
    )
    base.update(overrides)
    return ExecutorProfile(**base)


def task(tid, inputs=(), outputs=(), **kw) -> Task:
    kw.setdefault("group", "g")
    return Task(id=tid, name=tid, inputs=tuple(inputs), outputs=tuple(outputs), **kw)


def workflow(tasks, data_ids=None, sizes=None, name="w") -> Workflow:
    """Build a workflow declaring every data id referenced by ``tasks``."""
    sizes = sizes or {}
    if data_ids is None:
        data_ids = sorted({d for t in tasks for d in (*t.inputs, *t.outputs)})
    data = tuple(DataItem(d, d, sizes.get(d, 0)) for d in data_ids)
    return Workflow(name=name, tasks=tuple(tasks), data=data)


def diamond() -> Workflow:
    return workflow([
        task("A", ["in"], ["a"]),
        task("B", ["a"], ["b"]),
        task("C", ["a"], ["c"]),
        task("D", ["b", "c"], ["d"]),
    ])


# --------------------------------------------------------------------------
# oracles
# --------------------------------------------------------------------------


def direct_producers(w: Workflow) -> dict[str, set[str]]:
    """task -> tasks producing any of its inputs, by scanning every pair."""
    out = {}
    for t in w.tasks:
        out[t.id] = {p.id for p in w.tasks if set(p.outputs) & set(t.inputs)}
    return out


def ancestors_closure(w: Workflow) -> dict[str, set[str]]:
    """Transitive closure of the producer relation by naive fixpoint iteration."""
    direct = direct_producers(w)
    anc = {tid: set(ps) for tid, ps in direct.items()}
    changed = True
    while changed:
        changed = False
        for tid in anc:
            extra = set()
            for p in anc[tid]:
                extra |= anc[p]
            if not extra <= anc[tid]:
                anc[tid] |= extra
                changed = True
    return anc


def brute_ready(w: Workflow, completed: set[str]) -> list[str]:
    produced = {d for t in w.tasks for d in t.outputs}
    done_outputs = {d for t in w.tasks if t.id in completed for d in t.outputs}
    return sorted(
        t.id for t in w.tasks
        if t.id not in completed and all(d not in produced or d in done_outputs for d in t.inputs)
    )


def transitive_reduction(nodes, edges: set[tuple[str, str]]) -> set[tuple[str, str]]:
    """Drop every edge implied by a longer path (brute force, small graphs)."""
    def reach(src, dst, skip):
        stack, seen = [src], {src}
        while stack:
            u = stack.pop()
            for a, b in edges:
                if a == u and (a, b) != skip and b not in seen:
                    if b == dst:
                        return True
                    seen.add(b)
                    stack.append(b)
        return False

    return {e for e in edges if not reach(e[0], e[1], e)}


def longest_path(w: Workflow, weight) -> Fraction:
    """Longest weighted path through the DAG by exhaustive relaxation."""
    anc = direct_producers(w)
    best: dict[str, Fraction] = {}
    pending = [t.id for t in w.tasks]
    while pending:
        for tid in list(pending):
            if all(p in best for p in anc[tid]):
                base = max((best[p] for p in anc[tid]), default=Fraction(0))
                best[tid] = base + weight(w.task_by_id[tid])
                pending.remove(tid)
    return max(best.values(), default=Fraction(0))


def max_overlap(intervals: list[tuple[Fraction, Fraction]]) -> int:
    """Clique number of half-open intervals: the most intervals sharing a point."""
    points = {s for s, _ in intervals}
    return max((sum(1 for s, e in intervals if s <= p < e) for p in points), default=0)


def batch_makespan(n: int, c: int, d) -> Fraction:
    return math.ceil(Fraction(n, c)) * Fraction(d)


def pairs(xs):
    return itertools.combinations(xs, 2)


def random_profile(rng, name: str, bounded: bool | None = None) -> ExecutorProfile:
    """Random but valid profile; every task in generate_random fits its resources."""
    kind = rng.choice(["faas", "caas"])
    cold_lo = Fraction(rng.randrange(0, 5))
    if bounded is None:
        bounded = rng.random() < 0.5
    return make_profile(
        name,
        kind=kind,
        vcpu_min=Fraction(1, 4),
        vcpu_max=Fraction(4),
        mem_per_vcpu_mb=Fraction(rng.choice([256, 1024])),
        alloc_vcpu=None if kind == "faas" else Fraction(rng.choice([1, 2, 4]), rng.choice([1, 2])),
        max_exec_s=Fraction(rng.choice([20, 60, 200])) if bounded else None,
        max_concurrency=rng.randint(1, 20),
        burst_capacity=rng.randint(1, 10),
        burst_refill_per_s=Fraction(rng.randint(1, 10), 2),
        cold_start_s_min=cold_lo,
        cold_start_s_max=cold_lo + rng.randrange(0, 10),
        clock_ghz=Fraction(rng.choice([1, 2, 3])),
        reusable=rng.random() < 0.5,
        throttle_warm=rng.random() < 0.5,
        staging_bandwidth_mbps=Fraction(rng.choice([10, 100, 1000])),
        staging_latency_s=Fraction(rng.randrange(0, 3), 10),
    )


def random_setup(rng, n_profiles: int | None = None):
    """(profiles, policy) with an unbounded profile last so every task routes."""
    k = n_profiles or rng.randint(1, 3)
    profiles = {}
    for i in range(k):
        name = f"p{i}"
        profiles[name] = random_profile(rng, name, bounded=None if i < k - 1 else False)
    return profiles, RoutingPolicy(tuple(profiles))


def dependency_violations(w: Workflow, trace) -> list[str]:
    """Every attempt must start executing after all its ancestors succeeded."""
    anc = ancestors_closure(w)
    ok_end = {a.task_id: a.end_t for a in trace.attempts if a.outcome == "success"}
    bad = []
    for a in trace.attempts:
        for p in anc[a.task_id]:
            if p not in ok_end:
                bad.append(f"{a.task_id}#{a.attempt_no} ran although {p} never succeeded")
            elif a.exec_start_t < ok_end[p]:
                bad.append(f"{a.task_id}#{a.attempt_no} started at {a.exec_start_t} before {p} ended")
    return bad
