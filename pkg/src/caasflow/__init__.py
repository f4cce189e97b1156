"""Serverless workflow enactment and FaaS/CaaS platform simulation."""

from .dax import convert_dax, convert_dax_with_report
from .engine import EngineConfig, ExecutionTrace, TaskAttempt, lifecycle, retry_decision, run
from .executors import (
    Allocation,
    AllocationRequest,
    ExecutorProfile,
    ExecutorState,
    compute_time_s,
    effective_vcpu,
    load_profiles,
    new_states,
    release,
    sample_cold_start_s,
    staging_time_s,
    try_admit,
)
from .generators import Stage, TaskTemplate, generate_bag, generate_fan, generate_pipeline
from .metrics import concurrency_timeline, export_gantt_csv, group_stats, measure_burst
from .pricing import BillingScheme, CostReport, bill_caas, bill_faas, billable_blocks, cost_report
from .routing import NoFit, RoutingPolicy, fits, load_policy, route
from .workflow import (
    DataItem,
    Task,
    Workflow,
    parse_workflow,
    ready_tasks,
    serialize_workflow,
    validate_workflow,
)

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "AllocationRequest",
    "BillingScheme",
    "CostReport",
    "DataItem",
    "EngineConfig",
    "ExecutionTrace",
    "ExecutorProfile",
    "ExecutorState",
    "NoFit",
    "RoutingPolicy",
    "Stage",
    "Task",
    "TaskAttempt",
    "TaskTemplate",
    "Workflow",
    "bill_caas",
    "bill_faas",
    "billable_blocks",
    "compute_time_s",
    "concurrency_timeline",
    "convert_dax",
    "convert_dax_with_report",
    "cost_report",
    "effective_vcpu",
    "export_gantt_csv",
    "fits",
    "generate_bag",
    "generate_fan",
    "generate_pipeline",
    "group_stats",
    "lifecycle",
    "load_policy",
    "load_profiles",
    "measure_burst",
    "new_states",
    "parse_workflow",
    "ready_tasks",
    "release",
    "retry_decision",
    "route",
    "run",
    "sample_cold_start_s",
    "serialize_workflow",
    "staging_time_s",
    "try_admit",
    "validate_workflow",
]
