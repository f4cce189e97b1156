"""Command-line interface: generate, validate, run, report, burst-bench.

Exit codes: 0 success, 2 configuration or usage error, 3 execution incomplete.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import fields, replace
from fractions import Fraction
from pathlib import Path

from . import __version__
from .dax import convert_dax
from .engine import EngineConfig, ExecutionTrace, run
from .executors import ExecutorProfile, ProfileError, load_profiles, new_states
from .generators import Stage, TaskTemplate, generate_bag, generate_fan, generate_pipeline
from .metrics import export_gantt_csv, measure_burst, stats_document
from .pricing import cost_report
from .routing import NoFit, PolicyError, RoutingPolicy, load_policy
from .workflow import Workflow, WorkflowError, parse_workflow, serialize_workflow, validate_workflow

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INCOMPLETE = 3

log = logging.getLogger("caasflow")

ENGINE_KEYS = [f.name for f in fields(EngineConfig)]
TEMPLATE_KEYS = [f.name for f in fields(TaskTemplate)]
KINC_TEMPLATE = TaskTemplate(group="kinc", work_gcs=Fraction(1200), parallelism=2, memory_mb=2048)


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _scalar(raw: str):
    """Parse a command-line value: JSON literal when possible (exact decimals)."""
    try:
        return json.loads(raw, parse_float=Fraction)
    except json.JSONDecodeError:
        return raw


def _key_values(items, what: str) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"{what}: expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _write_atomic(files: dict[Path, str]) -> None:
    """Write every file to a temp name first, then rename them all."""
    temps = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            temps.append((tmp, path))
    except BaseException:
        for tmp, _ in temps:
            os.unlink(tmp)
        raise
    for tmp, path in temps:
        os.replace(tmp, path)


def _template_from_args(args, base: TaskTemplate | None = None) -> TaskTemplate:
    changes = {}
    for key in TEMPLATE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            changes[key] = value
    return TaskTemplate.of(base, **changes)


def parse_stage(text: str) -> Stage:
    """``group:width[:pattern]``"""
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"stage must be group:width[:pattern], got {text!r}")
    try:
        width = int(parts[1])
    except ValueError:
        raise UsageError(f"stage {text!r}: width must be an integer") from None
    pattern = parts[2] if len(parts) == 3 else "all"
    return Stage(parts[0], width, None, pattern)


def workflow_from_generator(spec: str) -> Workflow:
    """Build a workflow from ``kind:key=value,...``.

    Keys: n (bag), width (fan), stages=g*w/g*w[*matched] (pipeline), name,
    input_bytes, plus any task-template field.
    """
    kind, _, rest = spec.partition(":")
    params = {k: _scalar(v) for k, v in _key_values([p for p in rest.split(",") if p], "generator").items()}
    name = str(params.pop("name", kind))
    input_bytes = int(params.pop("input_bytes", 0))
    if kind == "bag":
        n = int(params.pop("n", 0))
        return generate_bag(n, TaskTemplate.of(None, **params), name=name, input_bytes=input_bytes)
    if kind == "fan":
        width = int(params.pop("width", 0))
        return generate_fan(width, TaskTemplate.of(None, **params), name=name, input_bytes=input_bytes)
    if kind == "pipeline":
        raw = str(params.pop("stages", ""))
        tpl = TaskTemplate.of(None, **params)
        stages = []
        for chunk in filter(None, raw.split("/")):
            bits = chunk.split("*")
            stages.append(Stage(bits[0], int(bits[1]), tpl, bits[2] if len(bits) > 2 else "all"))
        return generate_pipeline(stages, name=name, input_bytes=input_bytes)
    raise UsageError(f"unknown generator kind {kind!r} (expected bag, fan or pipeline)")


def load_workflow(path: str) -> Workflow:
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() in (".xml", ".dax"):
        return convert_dax(text, name=p.stem)
    return parse_workflow(text)


def load_profiles_with_overrides(path, overrides: dict[str, str], only: str | None = None):
    profiles = load_profiles(path)
    if only is not None and only not in profiles:
        raise UsageError(f"unknown profile {only!r} (known: {', '.join(profiles)})")
    if overrides:
        targets = [only] if only else list(profiles)
        for name in targets:
            d = profiles[name].to_dict()
            for k, v in overrides.items():
                if k not in d:
                    raise UsageError(f"unknown profile field {k!r}")
                d[k] = _scalar(v)
            profiles[name] = ExecutorProfile.from_dict(d)
    return profiles


def _split_engine_flags(argv: list[str]) -> tuple[list[str], dict[str, str]]:
    rest, engine = [], {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--engine."):
            body = tok[len("--engine."):]
            if "=" in body:
                k, v = body.split("=", 1)
            else:
                if i + 1 >= len(argv):
                    raise UsageError(f"{tok} needs a value")
                k, v = body, argv[i + 1]
                i += 1
            engine[k] = v
        else:
            rest.append(tok)
        i += 1
    return rest, engine


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_generate(args) -> int:
    tpl = _template_from_args(args)
    if args.kind == "bag":
        w = generate_bag(args.n, tpl, name=args.name or "bag", input_bytes=args.input_bytes)
    elif args.kind == "fan":
        w = generate_fan(args.width, tpl, name=args.name or "fan", input_bytes=args.input_bytes)
    else:
        if not args.stage:
            raise UsageError("pipeline needs at least one --stage")
        stages = [parse_stage(s)._replace(template=tpl) for s in args.stage]
        w = generate_pipeline(stages, name=args.name or "pipeline", input_bytes=args.input_bytes)
    text = serialize_workflow(w) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        _write_atomic({Path(args.out): text})
        print(f"wrote {len(w.tasks)} tasks to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args) -> int:
    w = load_workflow(args.workflow)
    problems = validate_workflow(w)
    for p in problems:
        print(p)
    if problems:
        return EXIT_CONFIG
    print(f"ok: {len(w.tasks)} tasks, {len(w.data)} data items")
    return EXIT_OK


def _outputs(trace: ExecutionTrace, profiles, out: Path, gantt_mode: str, with_trace: bool) -> dict:
    schemes = {name: p.billing for name, p in profiles.items()}
    files = {
        out / "gantt.csv": export_gantt_csv(trace, gantt_mode),
        out / "cost.json": cost_report(trace, schemes).to_json(),
        out / "stats.json": json.dumps(stats_document(trace), indent=1) + "\n",
    }
    if with_trace:
        files = {out / "trace.jsonl": trace.to_jsonl(), **files}
    return files


def cmd_run(args, engine_overrides: dict[str, str]) -> int:
    if bool(args.workflow) == bool(args.generator):
        raise UsageError("give exactly one of --workflow or --generator")
    w = load_workflow(args.workflow) if args.workflow else workflow_from_generator(args.generator)
    profiles = load_profiles_with_overrides(args.profiles, _key_values(args.set, "--set"))
    if args.executor:
        if args.executor not in profiles:
            raise UsageError(f"unknown executor {args.executor!r}")
        policy = RoutingPolicy.single(args.executor)
    else:
        policy = load_policy(args.policy)
    cfg = EngineConfig(seed=args.seed).with_overrides(engine_overrides)
    try:
        trace = run(w, policy, new_states(profiles), cfg)
    except NoFit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    out = Path(args.out)
    _write_atomic(_outputs(trace, profiles, out, args.gantt_mode, with_trace=True))
    print(
        f"{w.name}: {len(trace.attempts)} attempts, makespan {float(trace.makespan_s):.3f} s, "
        f"outputs in {out}",
        file=sys.stderr,
    )
    if not trace.complete:
        print(f"incomplete: {len(trace.incomplete)} task(s) did not finish", file=sys.stderr)
        return EXIT_INCOMPLETE
    return EXIT_OK


def cmd_report(args) -> int:
    trace = ExecutionTrace.from_jsonl(Path(args.trace).read_text())
    profiles = load_profiles(args.profiles)
    out = Path(args.out) if args.out else Path(args.trace).parent
    _write_atomic(_outputs(trace, profiles, out, args.gantt_mode, with_trace=False))
    print(f"reports written to {out}", file=sys.stderr)
    return EXIT_OK


def burst_bench(profile: ExecutorProfile, n: int, repeats: int, seed: int,
                template: TaskTemplate = KINC_TEMPLATE, cfg: EngineConfig | None = None) -> list[int]:
    """Submit a bag of ``n`` tasks ``repeats`` times in one session and measure
    the burst each time. Repeats share executor state, so warm pools carry over."""
    if n < 1 or repeats < 1:
        raise UsageError("n and repeats must be at least 1")
    cfg = cfg or EngineConfig()
    states = new_states({profile.name: profile})
    policy = RoutingPolicy.single(profile.name)
    w = generate_bag(n, template, name=f"burst-{profile.name}")
    bursts = []
    for r in range(repeats):
        trace = run(w, policy, states, replace(cfg, seed=seed + r))
        bursts.append(measure_burst(trace, profile.name))
    return bursts


def cmd_burst_bench(args) -> int:
    profiles = load_profiles_with_overrides(args.profiles, _key_values(args.set, "--set"), only=args.profile)
    tpl = _template_from_args(args, KINC_TEMPLATE)
    try:
        bursts = burst_bench(profiles[args.profile], args.n, args.repeats, args.seed, tpl)
    except NoFit as exc:
        raise UsageError(str(exc)) from None
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["repeat", "burst"])
    for i, b in enumerate(bursts):
        writer.writerow([i, b])
    if args.out in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        _write_atomic({Path(args.out): buf.getvalue()})
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _add_template_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("task template")
    g.add_argument("--group", help="task group of generated tasks")
    g.add_argument("--work-gcs", dest="work_gcs", type=Fraction, help="compute demand in GHz-seconds")
    g.add_argument("--parallelism", type=int, help="max cores a task can use")
    g.add_argument("--memory-mb", dest="memory_mb", type=int)
    g.add_argument("--disk-mb", dest="disk_mb", type=int)
    g.add_argument("--output-bytes", dest="output_bytes", type=int, help="size of each task's output")
    g.add_argument("--executor-hint", dest="executor_hint")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caasflow",
        description="Simulate scientific workflows on serverless FaaS/CaaS platforms.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug messages")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic workflow JSON")
    g.add_argument("kind", choices=["bag", "fan", "pipeline"])
    g.add_argument("--n", type=int, default=0, help="bag size")
    g.add_argument("--width", type=int, default=0, help="fan width")
    g.add_argument("--stage", action="append", metavar="GROUP:WIDTH[:PATTERN]",
                   help="pipeline stage (repeatable); PATTERN is all (default) or matched")
    g.add_argument("--name", help="workflow name")
    g.add_argument("--input-bytes", dest="input_bytes", type=int, default=0,
                   help="size of the shared workflow input")
    g.add_argument("--out", help="output path (default stdout)")
    _add_template_flags(g)

    v = sub.add_parser("validate", help="check a workflow (JSON, or DAX with .xml/.dax suffix)")
    v.add_argument("--workflow", required=True)

    engine_help = "engine settings: " + ", ".join(f"--engine.{k}=VALUE" for k in ENGINE_KEYS)
    r = sub.add_parser("run", help="simulate a workflow and write trace, gantt, cost and stats",
                       epilog=engine_help)
    r.add_argument("--workflow", help="workflow JSON or DAX file")
    r.add_argument("--generator", metavar="SPEC",
                   help="generate instead of reading, e.g. bag:n=200,group=kinc,work_gcs=1200")
    r.add_argument("--profiles", help="executor profiles JSON (default: built-in)")
    r.add_argument("--policy", help="routing policy JSON (default: built-in hybrid policy)")
    r.add_argument("--executor", help="route every task to this executor instead of using a policy")
    r.add_argument("--set", action="append", metavar="FIELD=VALUE",
                   help="override a field on every profile (repeatable)")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--gantt-mode", choices=["flattened", "per_task"], default="flattened")

    rep = sub.add_parser("report", help="recompute gantt, cost and stats from a trace.jsonl")
    rep.add_argument("--trace", required=True)
    rep.add_argument("--profiles", help="executor profiles JSON (default: built-in)")
    rep.add_argument("--out", help="output directory (default: next to the trace)")
    rep.add_argument("--gantt-mode", choices=["flattened", "per_task"], default="flattened")

    b = sub.add_parser("burst-bench", help="measure admission bursts over repeated bag submissions")
    b.add_argument("--profile", required=True, help="executor profile name")
    b.add_argument("--n", type=int, default=200, help="tasks submitted per repeat")
    b.add_argument("--repeats", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--profiles", help="executor profiles JSON (default: built-in)")
    b.add_argument("--set", action="append", metavar="FIELD=VALUE",
                   help="override a profile field, e.g. burst_refill_per_s=0")
    b.add_argument("--out", help="CSV output path (default stdout)")
    _add_template_flags(b)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv, engine_overrides = _split_engine_flags(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if engine_overrides and args.command != "run":
        print("error: --engine.* flags apply to the run command only", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "run":
            return cmd_run(args, engine_overrides)
        if args.command == "report":
            return cmd_report(args)
        return cmd_burst_bench(args)
    except (UsageError, WorkflowError, ProfileError, PolicyError, ValueError, TypeError,
            KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
