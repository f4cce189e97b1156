import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caasflow.engine import ExecutionTrace, TaskAttempt
from caasflow.executors import Allocation
from caasflow.pricing import (
    BillingError,
    BillingScheme,
    bill_caas,
    bill_faas,
    billable_blocks,
    cost_report,
)

F = Fraction
FAAS = BillingScheme(kind="faas_blocks", block_ms=100, rate_per_gb_block=F("0.002"))
CAAS = BillingScheme(kind="caas_seconds", rate_per_vcpu_s=F("0.01"), rate_per_gb_s=F("0.001"),
                     min_billable_s=F(60))


def attempt(tid="t", n=1, executor="c", setup_start=0, exec_start=0, end=10, mem=2048, vcpu=1,
            throttles=0, outcome="success"):
    return TaskAttempt(tid, n, executor, "g", F(0), F(setup_start), F(exec_start), F(end),
                       outcome, True, Allocation(mem, F(vcpu)), throttles)


@pytest.mark.parametrize("ms,blocks", [(0, 0), (101, 2), (100, 1), (F(1, 1000), 1)])
def test_billable_blocks(ms, blocks):
    assert billable_blocks(ms, 100) == blocks


def test_bill_faas_examples():
    assert bill_faas(FAAS, 0, 1024) == 0
    assert bill_faas(FAAS, 250, 1024) == F("0.006")
    assert bill_faas(FAAS, 250, 2048) == 2 * bill_faas(FAAS, 250, 1024)


def test_bill_caas_examples():
    unit = F("0.01") + 2 * F("0.001")
    assert bill_caas(CAAS, 10, 1, 2) == 60 * unit
    no_floor = BillingScheme(kind="caas_seconds", rate_per_vcpu_s=F("0.01"), rate_per_gb_s=F("0.001"))
    assert bill_caas(no_floor, 120, 1, 2) == F("1.44")
    assert bill_caas(CAAS, F("60.5"), 1, 2) == 61 * unit


def test_wrong_scheme_kind():
    with pytest.raises(BillingError):
        bill_faas(CAAS, 1, 1024)
    with pytest.raises(BillingError):
        bill_caas(FAAS, 1, 1, 1)
    with pytest.raises(BillingError):
        BillingScheme(kind="caas_seconds", rate_per_gb_s=F(-1))


@settings(max_examples=100, deadline=None)
@given(d1=st.fractions(0, 5000), d2=st.fractions(0, 5000), m=st.integers(128, 10240),
       v=st.fractions(F(1, 4), 4))
def test_monotone_in_duration_memory_vcpu(d1, d2, m, v):
    lo, hi = sorted((d1, d2))
    assert bill_faas(FAAS, lo, m) <= bill_faas(FAAS, hi, m)
    assert bill_faas(FAAS, hi, m) <= bill_faas(FAAS, hi, m + 1)
    assert bill_caas(CAAS, lo, v, F(m, 1024)) <= bill_caas(CAAS, hi, v, F(m, 1024))
    assert bill_caas(CAAS, hi, v, F(m, 1024)) <= bill_caas(CAAS, hi, v + 1, F(m + 1, 1024))


@settings(max_examples=100, deadline=None)
@given(d=st.fractions(0, 5000), k=st.integers(1, 8), v=st.fractions(F(1, 4), 4), g=st.fractions(0, 30))
def test_linearity_and_floor(d, k, v, g):
    assert bill_faas(FAAS, d, 128 * k) == k * bill_faas(FAAS, d, 128)
    assert bill_caas(CAAS, d, k * v, k * g) == k * bill_caas(CAAS, d, v, g)
    assert bill_caas(CAAS, d, v, g) >= 60 * (v * CAAS.rate_per_vcpu_s + g * CAAS.rate_per_gb_s)


def test_empty_trace_costs_nothing():
    r = cost_report(ExecutionTrace("w", 0), {})
    assert r.grand_total == 0
    assert json.loads(r.to_json())["grand_total"] == "0.000000"


def test_identical_attempts_add_up():
    one = cost_report(ExecutionTrace("w", 0, [attempt()]), {"c": CAAS}).grand_total
    two = cost_report(ExecutionTrace("w", 0, [attempt("a"), attempt("b")]), {"c": CAAS}).grand_total
    assert two == 2 * one


def test_throttled_retry_fixture():
    """One task throttled twice then admitted at t=3; container lives 3 -> 8.5 s.

    Hand computation, CaaS with a 0.0005 request fee and no floor:
    5.5 s rounds up to 6 s; 6 * (2 vCPU * 0.01 + 2 GB * 0.001) = 0.132;
    fees: 2 throttled submissions + 1 admitted request = 3 * 0.0005 = 0.0015.
    """
    scheme = BillingScheme(kind="caas_seconds", rate_per_vcpu_s=F("0.01"), rate_per_gb_s=F("0.001"),
                           per_request_fee=F("0.0005"))
    a = attempt(setup_start=3, exec_start=4, end=F("8.5"), mem=2048, vcpu=2, throttles=2)
    r = cost_report(ExecutionTrace("w", 0, [a]), {"c": scheme})
    assert r.grand_total == F("0.1335")
    free = BillingScheme(kind="caas_seconds", rate_per_vcpu_s=F("0.01"), rate_per_gb_s=F("0.001"))
    assert cost_report(ExecutionTrace("w", 0, [a]), {"c": free}).grand_total == F("0.132")


def test_faas_bills_exec_span_caas_bills_lifetime():
    a = attempt(executor="f", setup_start=0, exec_start=F(3), end=F("3.25"), mem=1024)
    assert cost_report(ExecutionTrace("w", 0, [a]), {"f": FAAS}).grand_total == F("0.006")
    b = attempt(setup_start=0, exec_start=50, end=F("70.2"), mem=1024, vcpu=1)
    assert cost_report(ExecutionTrace("w", 0, [b]), {"c": CAAS}).grand_total == 71 * (F("0.01") + F("0.001"))


def test_report_totals_and_serialization():
    atts = [attempt("a", 1, "c"), attempt("a", 2, "c", end=100, outcome="success"),
            attempt("b", 1, "f", exec_start=0, end=F("0.25"), mem=1024)]
    r = cost_report(ExecutionTrace("w", 0, atts), {"c": CAAS, "f": FAAS})
    assert r.grand_total == sum(a.cost for a in r.per_attempt)
    assert r.grand_total == sum(r.per_task.values()) == sum(r.per_executor.values())
    doc = json.loads(r.to_json())
    assert doc["currency_label"] == "USD"
    assert F(doc["grand_total_exact"]) == r.grand_total
    assert doc["grand_total"] == f"{float(r.grand_total):.6f}"
    assert any("storage" in n for n in doc["notes"])
    with pytest.raises(BillingError, match="no billing scheme"):
        cost_report(ExecutionTrace("w", 0, atts), {"c": CAAS})
