"""``entityflow compile|run|bench|overhead``.

Exit codes: 0 success; 1 compile errors, failed invocations or malformed
script lines (``run``), or violated exactly-once accounting (``bench``);
2 usage errors or unreadable inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Any, TextIO

from .cluster import ClusterConfig, LatencyModel, start_cluster
from .compiler import compile_files, program_path
from .ir import DataflowIR, IRError, dataflow_to_dot, deserialize_ir, serialize_ir
from .runtime.client import ClientBase, InvocationError
from .runtime.local import LocalRuntime
from .runtime.report import build_report
from .splitter import machine_to_dot
from .values import canonical_json, decode, encode

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
HOTEL_ENDPOINTS = ("login", "search", "reserve", "recommend")


class UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------


def load_ir(spec: str) -> DataflowIR:
    """An IR from a serialized ``.json`` file, a ``.sf`` source, or a bundled program name."""
    path = Path(spec)
    if not path.exists():
        bundled = program_path(spec)
        if not bundled.exists():
            raise UsageError(f"no such IR or program: {spec}")
        path = bundled
    if path.suffix == ".json":
        try:
            return deserialize_ir(path.read_bytes())
        except IRError as exc:
            raise UsageError(f"{path}: {exc}") from None
    result = compile_files([path])
    for d in result.diagnostics:
        print(d, file=sys.stderr)
    if not result.ok:
        raise UsageError(f"{path}: compilation failed")
    return result.ir


def _write_json(path: str, data: Any) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n")


def _parse_key(token: str) -> Any:
    try:
        value = json.loads(token)
    except ValueError:
        return token
    return value if isinstance(value, (int, str)) and not isinstance(value, bool) else token


def parse_script_line(line: str) -> tuple[str, Any, str, list] | None:
    """``class key method json-args`` → tuple; None for blank/comment lines; ValueError if malformed."""
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    parts = text.split(None, 3)
    if len(parts) < 3:
        raise ValueError("expected: class key method [json-args]")
    cls, key, method = parts[0], _parse_key(parts[1]), parts[2]
    args: Any = []
    if len(parts) == 4:
        try:
            args = json.loads(parts[3])
        except ValueError as exc:
            raise ValueError(f"arguments are not JSON: {exc}") from None
        if not isinstance(args, list):
            raise ValueError("arguments must be a JSON array")
        args = [decode(a) for a in args]  # {"@ref": [cls, key]} passes a handle
    return cls, key, method, args


def _set_seed(seed: int | None) -> None:
    if seed is not None:
        os.environ["ENTITYFLOW_SEED"] = str(seed)


def _latency(text: str | None) -> LatencyModel | None:
    if text is None:
        return None
    try:
        return LatencyModel.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- commands -----------------------------------------------------------------


def cmd_compile(args: argparse.Namespace) -> int:
    missing = [s for s in args.sources if not Path(s).exists()]
    if missing:
        raise UsageError(f"no such file: {missing[0]}")
    result = compile_files(args.sources)
    for d in result.diagnostics:
        print(d, file=sys.stderr)
    if not result.ok:
        errors = sum(1 for d in result.diagnostics if d.is_error)
        print(f"compilation failed: {errors} error(s)", file=sys.stderr)
        return EXIT_FAIL
    ir = result.ir
    if args.ir:
        Path(args.ir).write_bytes(serialize_ir(ir))
    if args.emit_dot:
        out = Path(args.emit_dot)
        out.mkdir(parents=True, exist_ok=True)
        (out / "dataflow.dot").write_text(dataflow_to_dot(ir))
        for mid, machine in sorted(ir.machines.items()):
            (out / f"{mid}.dot").write_text(machine_to_dot(machine))
    print(f"ok: {len(ir.operators)} operator(s), {len(ir.machines)} split method(s)")
    return EXIT_OK


def _make_runtime(ir: DataflowIR, args: argparse.Namespace) -> ClientBase:
    if args.partitions is None and args.workers is None:
        return LocalRuntime(ir, key_lock=not args.no_key_lock, strict_reentry=args.strict_reentry)
    p = args.partitions or 1
    w = args.workers or 1
    config = ClusterConfig(
        partitions=p,
        workers=min(w, p) if args.workers is None else w,
        key_lock=not args.no_key_lock,
        strict_reentry=args.strict_reentry,
        backend=args.backend,
        latency=_latency(args.latency) or LatencyModel.none(),
    )
    try:
        return start_cluster(ir, config)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def run_script(client: ClientBase, lines: TextIO, out: TextIO) -> int:
    """Execute each script line in order; one JSON line per invocation."""
    failed = False
    for lineno, line in enumerate(lines, 1):
        try:
            parsed = parse_script_line(line)
        except ValueError as exc:
            out.write(json.dumps({"error": f"line {lineno}: malformed: {exc}"}) + "\n")
            failed = True
            continue
        if parsed is None:
            continue
        cls, key, method, call_args = parsed
        try:
            value = client.client_invoke(cls, key, method, call_args)
        except InvocationError as exc:
            out.write(json.dumps({"error": f"line {lineno}: {exc}"}) + "\n")
            failed = True
            continue
        out.write(canonical_json(encode(value)).decode() + "\n")
        out.flush()
    return EXIT_FAIL if failed else EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    _set_seed(args.seed)
    ir = load_ir(args.ir)
    script: TextIO
    if args.script and args.script != "-":
        try:
            script = open(args.script)
        except OSError as exc:
            raise UsageError(str(exc)) from None
    else:
        script = sys.stdin
    client = _make_runtime(ir, args)
    try:
        code = run_script(client, script, sys.stdout)
    finally:
        if script is not sys.stdin:
            script.close()
        if isinstance(client, LocalRuntime):
            client.close()
            report = build_report(client, client.metrics, {}, runtime="local")
        else:
            report = client.shutdown(drain=True)
    if args.report:
        _write_json(args.report, report)
    return code


def _check_hotel(ir: DataflowIR) -> None:
    user = ir.classes.get("User")
    missing = [e for e in HOTEL_ENDPOINTS if user is None or user.method(e) is None]
    for cls in ("Hotel", "Geo", "Rate", "Profile"):
        if cls not in ir.classes:
            missing.append(cls)
    if missing:
        raise UsageError(f"IR lacks the hotel entities/endpoints: {', '.join(missing)}")


def _report_paths(report_path: str) -> tuple[Path, Path]:
    base = Path(report_path)
    stem = base.with_suffix("")
    return stem.with_name(stem.name + "_latency.csv"), stem


def cmd_bench(args: argparse.Namespace) -> int:
    from .bench.hotel import DEFAULT_MIX, WorkloadSpec, parse_mix
    from .bench.runner import run_hotel, scaling_experiment

    _set_seed(args.seed)
    if args.experiment == "scaling":
        result = scaling_experiment(requests=args.requests or 2000, seed=args.seed or 0)
        summary = {k: result[k] for k in ("p1w1_rps", "p4w4_rps", "speedup", "cpus")}
        summary["meets_1.5x"] = result["speedup"] >= 1.5
        print(json.dumps(summary, indent=2))
        if args.report:
            _write_json(args.report, result)
        return EXIT_OK
    ir = load_ir(args.ir)
    _check_hotel(ir)
    try:
        mix = parse_mix(args.mix) if args.mix else dict(DEFAULT_MIX)
        spec = WorkloadSpec(mix=mix, rate=args.rate, duration=args.duration, seed=args.seed or 0, requests=args.requests)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.partitions is not None and args.workers is None:
        workers = min(args.partitions, os.cpu_count() or 1)
    else:
        workers = args.workers or 1
    try:
        result = run_hotel(
            spec,
            partitions=args.partitions or 1,
            workers=workers,
            key_lock=not args.no_key_lock,
            strict_reentry=args.strict_reentry,
            latency=_latency(args.latency),
            ir=ir,
            backend=args.backend,
            window=args.window,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = result.report
    eo = report["exactly_once"]
    summary = {
        "requests": report["workload"]["requests"],
        "throughput_rps": round(report["throughput_rps"], 2),
        "latency_ms": report["latency_ms"],
        "endpoints": {k: {"count": v["count"], "p50": v["p50"], "p99": v["p99"]} for k, v in report["endpoints"].items()},
        "rate_unachievable": report["workload"]["rate_unachievable"],
        "exactly_once_ok": eo["replies_balanced"] and eo["blocks_balanced"],
    }
    print(json.dumps(summary, indent=2))
    if report["workload"]["rate_unachievable"]:
        print(f"note: target rate {spec.rate} rps was not achievable (offered {report['workload']['offered_rps']:.1f} rps)", file=sys.stderr)
    if args.report:
        _write_json(args.report, report)
        csv_path, stem = _report_paths(args.report)
        csv_path.write_text(result.latency_csv)
        from .bench.figures import latency_cdf, stage_breakdown

        latency_cdf(result.series, stem.with_name(stem.name + "_latency.png"))
        stage_breakdown(report["stages_ns"], stem.with_name(stem.name + "_stages.png"))
    return EXIT_OK if summary["exactly_once_ok"] else EXIT_FAIL


def cmd_overhead(args: argparse.Namespace) -> int:
    from .bench.overhead import overhead_experiment

    try:
        sizes = [float(x) for x in args.sizes.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --sizes {args.sizes!r}") from None
    if any(s < 0 for s in sizes) or args.events < 1:
        raise UsageError("sizes must be >= 0 and events >= 1")
    report = overhead_experiment(sizes, args.events, seed=args.seed or 0)
    print(f"{'size_kb':>8} {'events':>7} {'compiler%':>9}  per-event µs (" + ", ".join(report["rows"][0]["per_event_us"]) + ")" if report["rows"] else "no sizes")
    for r in report["rows"]:
        per = ", ".join(f"{v:.1f}" for v in r["per_event_us"].values())
        print(f"{r['state_size_kb']:>8g} {r['events']:>7} {r['compiler_fraction'] * 100:>8.2f}%  {per}")
    if args.report:
        _write_json(args.report, report)
        stem = Path(args.report).with_suffix("")
        with open(stem.with_name(stem.name + ".csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["state_size_kb", "state_bytes", "events", "compiler_fraction", *report["rows"][0]["per_event_us"]] if report["rows"] else [])
            for r in report["rows"]:
                w.writerow([r["state_size_kb"], r["state_bytes"], r["events"], f"{r['compiler_fraction']:.6f}", *(f"{v:.3f}" for v in r["per_event_us"].values())])
        if report["rows"]:
            from .bench.figures import overhead_bars

            overhead_bars(report, stem.with_name(stem.name + ".png"))
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------


def _runtime_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--partitions", type=int, help="partition count P (selects the cluster runtime)")
    p.add_argument("--workers", type=int, help="worker count W (selects the cluster runtime)")
    p.add_argument("--no-key-lock", action="store_true", help="disable per-key locking of split invocations")
    p.add_argument("--strict-reentry", action="store_true", help="route every continuation through the ingress topic")
    p.add_argument("--backend", choices=("process", "thread"), default="process", help="cluster worker backend")
    p.add_argument("--latency", help="bus hop latency: none | fixed:<us> | uniform:<lo_us>:<hi_us>")
    p.add_argument("--seed", type=int, help="seed for workloads and latency models (sets ENTITYFLOW_SEED)")
    p.add_argument("--report", help="write the JSON run report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entityflow", description="Compile and run stateful entity programs as dataflows.")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile sources to IR")
    c.add_argument("sources", nargs="+")
    c.add_argument("--ir", help="write the serialized IR here")
    c.add_argument("--emit-dot", metavar="DIR", help="write DOT files for the dataflow graph and every state machine")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("run", help="run an invocation script (class key method json-args per line)")
    r.add_argument("script", nargs="?", help="script file (default: stdin)")
    r.add_argument("--ir", required=True, help="IR .json, .sf source, or bundled program name")
    _runtime_flags(r)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="hotel workload benchmark (or --experiment scaling)")
    b.add_argument("--ir", default="hotel", help="IR with the hotel entities (default: bundled hotel program)")
    b.add_argument("--experiment", choices=("hotel", "scaling"), default="hotel")
    b.add_argument("--rate", type=float, default=100.0, help="target requests/second (0 = as fast as possible)")
    b.add_argument("--duration", type=float, default=10.0, help="seconds of requests to generate")
    b.add_argument("--requests", type=int, help="request count (overrides rate × duration)")
    b.add_argument("--mix", help="endpoint mix, e.g. search=0.6,recommend=0.39,login=0.005,reserve=0.005")
    b.add_argument("--window", type=int, default=256, help="max invocations in flight")
    _runtime_flags(b)
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("overhead", help="§4 overhead experiment on the local runtime")
    o.add_argument("--sizes", default="50,100,200", help="state sizes in kb, comma separated")
    o.add_argument("--events", type=int, default=10_000, help="events per state size")
    o.add_argument("--seed", type=int)
    o.add_argument("--report", help="write the JSON report here (plus .csv and .png)")
    o.set_defaults(func=cmd_overhead)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"entityflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
