"""Converter for the job/uses/child-parent subset of Pegasus DAX documents."""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from fractions import Fraction

from .rational import to_fraction
from .workflow import DataItem, Task, Workflow, WorkflowError

log = logging.getLogger(__name__)

DEFAULT_MEMORY_MB = 512


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _reachable(edges: dict[str, set[str]], src: str, dst: str) -> bool:
    stack, seen = [src], {src}
    while stack:
        node = stack.pop()
        if node == dst:
            return True
        for nxt in edges.get(node, ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


def convert_dax_with_report(xml_text: str, name: str | None = None) -> tuple[Workflow, list[str]]:
    """Convert a DAX document; return the workflow and the list of skipped constructs.

    Jobs become tasks and files become data items. A declared child/parent
    edge that no shared file (or chain of dependencies) already implies gets
    a synthetic zero-byte data item.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise WorkflowError(f"malformed XML: {exc}") from None

    report: list[str] = []
    jobs: list[dict] = []
    job_ids: set[str] = set()
    files: dict[str, int] = {}
    declared: list[tuple[str, str]] = []  # (parent, child)

    for el in root:
        tag = _local(el.tag)
        if tag == "job":
            jid = el.get("id")
            if not jid:
                raise WorkflowError("job element without id")
            if jid in job_ids:
                raise WorkflowError(f"duplicate job id {jid!r}")
            job_ids.add(jid)
            job = {
                "id": jid,
                "name": el.get("name") or jid,
                "runtime": el.get("runtime"),
                "inputs": [],
                "outputs": [],
            }
            for use in el:
                utag = _local(use.tag)
                if utag != "uses":
                    report.append(f"job {jid}: unsupported element <{utag}> skipped")
                    continue
                fname = use.get("name") or use.get("file")
                link = (use.get("link") or "").lower()
                if not fname or link not in ("input", "output"):
                    report.append(f"job {jid}: <uses> with name={fname!r} link={link!r} skipped")
                    continue
                size = use.get("size")
                files.setdefault(fname, 0)
                if size and size.isdigit():
                    files[fname] = max(files[fname], int(size))
                job["inputs" if link == "input" else "outputs"].append(fname)
            jobs.append(job)
        elif tag == "child":
            child = el.get("ref")
            for par in el:
                if _local(par.tag) != "parent":
                    report.append(f"child {child}: unsupported element <{_local(par.tag)}> skipped")
                    continue
                declared.append((par.get("ref"), child))
        else:
            report.append(f"unsupported element <{tag}> skipped")

    for parent, child in declared:
        if child not in job_ids:
            raise WorkflowError(f"child/parent edge references undeclared job {child!r}")
        if parent not in job_ids:
            raise WorkflowError(f"job {child!r} references undeclared parent {parent!r}")

    producer: dict[str, str] = {}
    for job in jobs:
        for f in job["outputs"]:
            if f in producer and producer[f] != job["id"]:
                raise WorkflowError(f"file {f!r} produced by both {producer[f]!r} and {job['id']!r}")
            producer[f] = job["id"]

    # dependency edges already realised by files
    succ: dict[str, set[str]] = {}
    for job in jobs:
        for f in job["inputs"]:
            p = producer.get(f)
            if p is not None and p != job["id"]:
                succ.setdefault(p, set()).add(job["id"])

    full: dict[str, set[str]] = {p: set(cs) for p, cs in succ.items()}
    for parent, child in declared:
        if parent == child:
            raise WorkflowError(f"job {child!r} lists itself as parent")
        full.setdefault(parent, set()).add(child)

    by_id = {j["id"]: j for j in jobs}
    synthetic: list[DataItem] = []
    for parent, child in dict.fromkeys(declared):
        if child in succ.get(parent, ()):
            continue
        # transitively implied by another path: no extra data item needed
        if any(_reachable(full, s, child) for s in full[parent] if s != child):
            continue
        did = f"dep__{parent}__{child}"
        synthetic.append(DataItem(did, did, 0))
        by_id[parent]["outputs"].append(did)
        by_id[child]["inputs"].append(did)

    data = [DataItem(f, f, size) for f, size in sorted(files.items())] + synthetic
    tasks = []
    for job in jobs:
        runtime = job["runtime"]
        work = to_fraction(runtime, "runtime") if runtime else Fraction(0)
        tasks.append(
            Task(
                id=job["id"],
                name=job["name"],
                group=job["name"],
                work_gcs=work,
                parallelism=1,
                memory_mb=DEFAULT_MEMORY_MB,
                disk_mb=0,
                inputs=tuple(dict.fromkeys(job["inputs"])),
                outputs=tuple(dict.fromkeys(job["outputs"])),
            )
        )
    wf_name = name or root.get("name") or "dax"
    return Workflow(name=wf_name, tasks=tuple(tasks), data=tuple(data)), report


def convert_dax(xml_text: str, name: str | None = None) -> Workflow:
    """Convert a DAX document, logging any skipped constructs."""
    wf, report = convert_dax_with_report(xml_text, name)
    for line in report:
        log.warning("dax: %s", line)
    return wf
