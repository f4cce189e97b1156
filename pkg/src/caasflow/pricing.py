"""Exact billing: FaaS block pricing and CaaS per-second pricing with a floor."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Mapping

from .rational import Number, fixed, format_rational, to_fraction

if TYPE_CHECKING:
    from .engine import ExecutionTrace

FAAS_BLOCKS = "faas_blocks"
CAAS_SECONDS = "caas_seconds"


class BillingError(ValueError):
    pass


@dataclass(frozen=True)
class BillingScheme:
    kind: str
    block_ms: int = 100
    rate_per_gb_block: Fraction = Fraction(0)
    rate_per_vcpu_s: Fraction = Fraction(0)
    rate_per_gb_s: Fraction = Fraction(0)
    min_billable_s: Fraction = Fraction(0)
    per_request_fee: Fraction = Fraction(0)

    def __post_init__(self):
        if self.kind not in (FAAS_BLOCKS, CAAS_SECONDS):
            raise BillingError(f"unknown billing kind {self.kind!r}")
        if self.block_ms < 1:
            raise BillingError("block_ms must be at least 1")
        for name in ("rate_per_gb_block", "rate_per_vcpu_s", "rate_per_gb_s",
                     "min_billable_s", "per_request_fee"):
            value = to_fraction(getattr(self, name), name)
            if value < 0:
                raise BillingError(f"{name} must be non-negative")
            object.__setattr__(self, name, value)

    @classmethod
    def from_dict(cls, d: Mapping) -> "BillingScheme":
        return cls(**dict(d))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "block_ms": self.block_ms,
            "rate_per_gb_block": format_rational(self.rate_per_gb_block),
            "rate_per_vcpu_s": format_rational(self.rate_per_vcpu_s),
            "rate_per_gb_s": format_rational(self.rate_per_gb_s),
            "min_billable_s": format_rational(self.min_billable_s),
            "per_request_fee": format_rational(self.per_request_fee),
        }


def billable_blocks(duration_ms: Number, block_ms: int) -> int:
    """Number of started blocks; zero only for a zero duration."""
    if duration_ms < 0:
        raise BillingError("duration must be non-negative")
    return math.ceil(Fraction(duration_ms) / block_ms)


def bill_faas(scheme: BillingScheme, duration_ms: Number, memory_mb: Number) -> Fraction:
    if scheme.kind != FAAS_BLOCKS:
        raise BillingError(f"bill_faas needs a {FAAS_BLOCKS} scheme, got {scheme.kind}")
    blocks = billable_blocks(duration_ms, scheme.block_ms)
    return scheme.per_request_fee + blocks * Fraction(memory_mb) / 1024 * scheme.rate_per_gb_block


def billed_seconds(scheme: BillingScheme, duration_s: Number) -> Fraction:
    # each started second first, then the minimum charge
    return max(Fraction(math.ceil(Fraction(duration_s))), scheme.min_billable_s)


def bill_caas(scheme: BillingScheme, duration_s: Number, vcpu: Number, memory_gb: Number) -> Fraction:
    if scheme.kind != CAAS_SECONDS:
        raise BillingError(f"bill_caas needs a {CAAS_SECONDS} scheme, got {scheme.kind}")
    if duration_s < 0:
        raise BillingError("duration must be non-negative")
    unit = Fraction(vcpu) * scheme.rate_per_vcpu_s + Fraction(memory_gb) * scheme.rate_per_gb_s
    return scheme.per_request_fee + billed_seconds(scheme, duration_s) * unit


@dataclass(frozen=True)
class AttemptCost:
    task_id: str
    attempt_no: int
    executor: str
    billed_duration: Fraction  # ms for FaaS, seconds for CaaS (before rounding)
    cost: Fraction


@dataclass
class CostReport:
    per_attempt: list[AttemptCost] = field(default_factory=list)
    per_task: dict[str, Fraction] = field(default_factory=dict)
    per_executor: dict[str, Fraction] = field(default_factory=dict)
    grand_total: Fraction = Fraction(0)
    currency_label: str = "USD"
    notes: tuple[str, ...] = ("storage and data-transfer costs are not included",)

    def to_dict(self) -> dict:
        return {
            "currency_label": self.currency_label,
            "notes": list(self.notes),
            "grand_total": fixed(self.grand_total),
            "grand_total_exact": format_rational(self.grand_total),
            "per_task": [
                {"task_id": tid, "cost": fixed(c)} for tid, c in sorted(self.per_task.items())
            ],
            "per_executor": {k: fixed(v) for k, v in sorted(self.per_executor.items())},
            "per_attempt": [
                {
                    "task_id": a.task_id,
                    "attempt_no": a.attempt_no,
                    "executor": a.executor,
                    "cost": fixed(a.cost),
                }
                for a in self.per_attempt
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


def attempt_cost(scheme: BillingScheme, attempt) -> AttemptCost:
    """Cost of one container lifecycle plus any throttled submission fees.

    CaaS bills the container from admission to release; FaaS bills only the
    function's measured run (command start to completion).
    """
    alloc = attempt.allocation
    if scheme.kind == FAAS_BLOCKS:
        duration = (attempt.end_t - attempt.exec_start_t) * 1000
        cost = bill_faas(scheme, duration, alloc.memory_mb)
    else:
        duration = attempt.end_t - attempt.setup_start_t
        cost = bill_caas(scheme, duration, alloc.vcpu, Fraction(alloc.memory_mb) / 1024)
    cost += attempt.throttle_events * scheme.per_request_fee
    return AttemptCost(attempt.task_id, attempt.attempt_no, attempt.executor, duration, cost)


def cost_report(
    trace: "ExecutionTrace",
    schemes: Mapping[str, BillingScheme],
    currency_label: str = "USD",
) -> CostReport:
    report = CostReport(currency_label=currency_label)
    per_task: dict[str, Fraction] = defaultdict(Fraction)
    per_exec: dict[str, Fraction] = defaultdict(Fraction)
    for a in trace.attempts:
        if a.executor not in schemes:
            raise BillingError(f"no billing scheme for executor {a.executor!r}")
        ac = attempt_cost(schemes[a.executor], a)
        report.per_attempt.append(ac)
        per_task[a.task_id] += ac.cost
        per_exec[a.executor] += ac.cost
    report.per_task = dict(per_task)
    report.per_executor = dict(per_exec)
    report.grand_total = sum((ac.cost for ac in report.per_attempt), Fraction(0))
    return report
