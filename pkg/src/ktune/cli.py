"""Command-line frontend.

Exit codes: 0 success, 1 domain error (bad space, failed tuning, malformed
trace), 2 usage error (bad flags, unreadable files). With ``--json`` every
subcommand prints exactly one JSON document on stdout; diagnostics go to
stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bench import KINDS, bench_space, dynamic_demo, make_bench
from .errors import KtuneError
from .executors import CommandExecutor, KernelDefinition, ReplayExecutor
from .experiments import replay_search
from .model import (DEVICES, DeviceSpec, amortization_report, efficiency, invocations_to_amortize,
                    portability_matrix, portability_matrix_from_performance, steps_for_probability)
from .search import SearcherKind
from .space import load_space, space_cardinality
from .trace import read_trace
from .tuner import ConfigBudget, Exhaustive, PerformanceThreshold, TimeBudget, Tuner


class UsageError(Exception):
    """Bad invocation detected after argument parsing (exit code 2)."""


def _emit(args, doc: dict, text: str) -> None:
    if args.json:
        json.dump(doc, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        print(text)


def _read_space(path: str):
    if not Path(path).is_file():
        raise UsageError(f"cannot read space file {path}")
    return load_space(path)


def _read_trace(path: str):
    if not Path(path).is_file():
        raise UsageError(f"cannot read trace file {path}")
    return read_trace(path)


def _fmt_cfg(cfg) -> str:
    return " ".join(f"{k}={v}" for k, v in cfg.items())


# -- space ------------------------------------------------------------------------

def cmd_space(args) -> int:
    space = _read_space(args.file)
    if args.action == "count":
        n = space_cardinality(space)
        _emit(args, {"cardinality": n, "space_sha256": space.sha256()}, str(n))
    else:
        n = space.cardinality()
        doc = {"valid": True, "parameters": list(space.names), "constraints": len(space.constraints),
               "cardinality": n, "raw_cardinality": space.raw_cardinality, "space_sha256": space.sha256()}
        _emit(args, doc, f"ok: {len(space.names)} parameters, {n} of {space.raw_cardinality} "
                         f"configurations valid")
    return 0


# -- tune ------------------------------------------------------------------------------

def _searcher_kind(args) -> SearcherKind:
    return SearcherKind(args.searcher, args.sa_temp, args.sa_cool)


def _build_executor(args):
    """``((tuner, handle), essential bytes)`` for the ``--exec`` argument."""
    kind, _, rest = args.exec.partition(":")
    if kind == "bench":
        bench = rest.replace("-", "_")
        if bench not in KINDS:
            raise UsageError(f"unknown bench {rest!r} (choose from {', '.join(KINDS)})")
        sizes = dict(_kv(s) for s in args.size)
        binding = make_bench(bench, sizes, args.seed)
        space = _read_space(args.space) if args.space else bench_space(bench)
        binding.space = space
        return binding.tuner(_searcher_kind(args), args.seed, args.device), binding.problem.mem_bytes
    if not args.space:
        raise UsageError("--space is required unless --exec bench:KIND")
    space = _read_space(args.space)
    if kind == "replay":
        if not rest:
            raise UsageError("replay executor needs a trace path: replay:TRACE")
        executor = ReplayExecutor(_read_trace(rest), args.noise, args.seed)
        source = ""
    elif kind == "cmd":
        compile_cmd, sep, run_cmd = rest.partition(",")
        if not sep:
            compile_cmd, run_cmd = "", rest
        if not run_cmd:
            raise UsageError("cmd executor needs a run command: cmd:COMPILE,RUN")
        executor = CommandExecutor(compile_cmd or None, run_cmd, args.workdir, repeats=args.repeats,
                                   timeout=args.timeout)
        source = ""
        if args.source:
            if not Path(args.source).is_file():
                raise UsageError(f"cannot read source file {args.source}")
            source = Path(args.source).read_text()
    else:
        raise UsageError(f"unknown executor {args.exec!r} (use cmd:..., replay:... or bench:...)")
    tuner = Tuner(space, executor, _searcher_kind(args), args.seed, args.device)
    handle = tuner.add_kernel(KernelDefinition("kernel", source))
    return (tuner, handle), args.mem_bytes


def _kv(text: str) -> tuple[str, int]:
    key, sep, value = text.partition("=")
    if not sep:
        raise UsageError(f"expected NAME=VALUE, got {text!r}")
    try:
        return key, int(value)
    except ValueError:
        raise UsageError(f"size {key} must be an integer") from None


def _stop_condition(args, mem_bytes):
    stops = []
    if args.stop_configs is not None:
        stops.append(ConfigBudget(args.stop_configs))
    if args.stop_time is not None:
        stops.append(TimeBudget(args.stop_time))
    if args.stop_threshold is not None:
        if args.device_mem is None or not mem_bytes:
            raise UsageError("--stop-threshold needs --device-mem and --mem-bytes")
        dev = DeviceSpec("cli", 1.0, args.device_mem)
        stops.append(PerformanceThreshold(args.stop_threshold, dev, mem_ops=mem_bytes))
    if not stops:
        return Exhaustive()
    stop = stops[0]
    for s in stops[1:]:
        stop = stop | s
    return stop


def cmd_tune(args) -> int:
    for flag, value in (("--stop-configs", args.stop_configs), ("--repeats", args.repeats)):
        if value is not None and value < 1:
            raise UsageError(f"{flag} must be >= 1")
    (tuner, handle), mem_bytes = _build_executor(args)
    stop = _stop_condition(args, mem_bytes)
    store = tuner.tune(handle, stop)
    if args.out:
        store.to_trace().write(args.out)
    best = store.best
    doc = {"space_sha256": store.space_sha256, "steps": len(store), "searcher": args.searcher,
           "seed": args.seed, "trace": args.out,
           "best": None if best is None else {"configuration": best.configuration.as_dict(),
                                               "runtime_ns": best.runtime_ns}}
    if best is None:
        doc["error"] = store.warning
        _emit(args, doc, f"error: {store.warning} ({len(store)} tried)")
        return 1
    _emit(args, doc, f"best: {_fmt_cfg(best.configuration)}  runtime {best.runtime_ns} ns  "
                     f"({len(store)} configurations tried)")
    return 0


# -- replay-search ---------------------------------------------------------------------

def cmd_replay_search(args) -> int:
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    trace = _read_trace(args.trace)
    reports = []
    for tag in args.searcher or ["random"]:
        kind = SearcherKind(tag, args.sa_temp, args.sa_cool)
        stats = replay_search(trace, kind, args.reps, args.well, args.p, args.seed, args.max_steps)
        reports.append(stats.to_json())
    doc = {"trace": args.trace, "space_sha256": trace.space_sha256, "well_threshold": args.well,
           "p": args.p, "strategies": reports}
    lines = [f"{'searcher':<10} {'reps':>6} {'pred s':>7} {'P(<=s)':>7} {'median':>7} {'missed':>7}"]
    for r in reports:
        med = "-" if r["median_steps"] is None else f"{r['median_steps']:.1f}"
        lines.append(f"{r['searcher']:<10} {r['reps']:>6} {r['predicted_steps']:>7} "
                     f"{100 * r['p_within_predicted']:>6.1f}% {med:>7} {r['not_found']:>7}")
    _emit(args, doc, "\n".join(lines))
    return 0


# -- analyze ----------------------------------------------------------------------------

def _device(args) -> DeviceSpec:
    if args.device:
        if args.device not in DEVICES:
            raise UsageError(f"unknown device {args.device!r} (known: {', '.join(DEVICES)})")
        return DEVICES[args.device]
    if args.mem_peak is None and args.alu_peak is None:
        raise UsageError("give --device or --mem-peak/--alu-peak")
    return DeviceSpec("custom", args.alu_peak or 1.0, args.mem_peak or 1.0)


def analyze_efficiency(args) -> int:
    dev = _device(args)
    if (args.runtime_ns is None) == (args.trace is None):
        raise UsageError("give exactly one of --runtime-ns or --trace")
    if args.trace:
        trace = _read_trace(args.trace)
        ok = [r.runtime_ns for r in trace.rows if r.runtime_ns]
        if not ok:
            raise KtuneError("trace has no successful measurement")
        runtime = min(ok)
    else:
        runtime = args.runtime_ns
    eff = efficiency(runtime, args.mem_bytes or 0, args.flops or 0, dev)
    doc = {"device": dev.name, "runtime_ns": runtime, "mem_bytes": args.mem_bytes,
           "flops": args.flops, "efficiency_percent": eff}
    _emit(args, doc, f"{dev.name}: {eff:.1f}% of peak")
    return 0


def analyze_portability(args) -> int:
    if args.trace and args.perf:
        raise UsageError("give either --trace or --perf entries, not both")
    if args.trace:
        traces = {}
        for item in args.trace:
            name, sep, path = item.partition("=")
            if not sep:
                raise UsageError(f"expected DEVICE=TRACE, got {item!r}")
            traces[name] = _read_trace(path)
        hashes = {t.space_sha256 for t in traces.values()}
        if len(hashes) > 1:
            raise KtuneError("traces were recorded over different tuning spaces")
        names = {name: frozenset(t.rows[0].cfg) if t.rows else frozenset() for name, t in traces.items()}
        if len(set(names.values())) > 1:
            raise KtuneError("traces assign different parameter sets")
        matrix = portability_matrix(traces)
    elif args.perf:
        perf = {}
        for item in args.perf:
            pair, sep, value = item.partition("=")
            tuned, sep2, run = pair.partition(":")
            if not sep or not sep2:
                raise UsageError(f"expected TUNED:RUN=VALUE, got {item!r}")
            perf[(tuned, run)] = None if value.upper() == "FAILED" else float(value)
        devices = {d for pair in perf for d in pair}
        missing = [d for d in sorted(devices) if (d, d) not in perf]
        if missing:
            raise KtuneError(f"inconsistent device set: no native performance for {', '.join(missing)}")
        matrix = portability_matrix_from_performance(perf)
    else:
        raise UsageError("portability needs --trace DEVICE=FILE or --perf TUNED:RUN=VALUE entries")
    width = max(12, *(len(d) + 2 for d in matrix.devices))
    lines = ["tuned on \\ run on".ljust(width) + "".join(d.rjust(width) for d in matrix.devices)]
    for dev, row in zip(matrix.devices, matrix.values):
        cells = "".join(("FAILED" if v is None else f"{v:.1f}%").rjust(width) for v in row)
        lines.append(dev.ljust(width) + cells)
    s = matrix.summary()
    if s["mean"] is not None:
        lines.append(f"mean {s['mean']:.1f}%  stdev {s['stdev']:.1f}  worst {s['worst']:.1f}%  "
                     f"failed {s['failed']}")
    _emit(args, matrix.to_json(), "\n".join(lines))
    return 0


def analyze_amortize(args) -> int:
    doc: dict = {}
    if args.trace:
        rep = amortization_report(_read_trace(args.trace), args.well, args.p, args.rp)
        doc = rep.to_json()
        text = (f"r={100 * rep.r:.1f}%  s={rep.s}  t_avg={rep.t_avg / 1e6:.3f} ms  "
                f"t_well={rep.t_well / 1e6:.3f} ms  n={rep.n}")
    else:
        s = args.s
        if args.r is not None:
            s = steps_for_probability(args.r, args.p)
            doc.update({"r": args.r, "p": args.p, "s": s})
        elif s is None:
            raise UsageError("amortize needs --trace, --r or --s")
        else:
            doc["s"] = s
        text = f"s={s}"
        if args.t_avg is not None or args.t_well is not None:
            if args.t_avg is None or args.t_well is None:
                raise UsageError("--t-avg and --t-well go together")
            n = invocations_to_amortize(args.rp, s, args.t_avg, args.t_well)
            doc.update({"rp": args.rp, "t_avg": args.t_avg, "t_well": args.t_well, "n": n})
            text += f"  n={n}"
    _emit(args, doc, text)
    return 0


def cmd_analyze(args) -> int:
    return {"efficiency": analyze_efficiency, "portability": analyze_portability,
            "amortize": analyze_amortize}[args.mode](args)


# -- demo --------------------------------------------------------------------------------

def cmd_demo(args) -> int:
    if args.bench.replace("-", "_") != "batched_gemm":
        raise UsageError("the dynamic demo supports --bench batched-gemm only")
    if args.epochs < 1 or (args.iters is not None and args.iters < 1):
        raise UsageError("--epochs and --iters must be >= 1")
    if args.device not in DEVICES:
        raise UsageError(f"unknown device {args.device!r}")
    stop = None
    if args.stop_configs is not None:
        stop = ConfigBudget(args.stop_configs)
    report = dynamic_demo(args.epochs, args.iters, stop, args.seed, args.executor, args.device,
                          args.noise, args.epoch_seconds, searcher=args.searcher)
    doc = report.to_json()
    if args.report:
        Path(args.report).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    lines = [f"{'epoch':>5} {'i,j,k':>10} {'steps':>6} {'kernel GB/s':>12} {'incl. GB/s':>11}"]
    for e in report.epochs:
        dims = f"{e.sizes['i']},{e.sizes['j']},{e.sizes['k']}"
        lines.append(f"{e.epoch:>5} {dims:>10} {e.steps:>6} {e.kernel_only_gbps:>12.1f} "
                     f"{e.with_overhead_gbps:>11.1f}")
    _emit(args, doc, "\n".join(lines))
    return 0


# -- parser --------------------------------------------------------------------------------

def _add_searcher_flags(p, multiple=False):
    choices = SearcherKind.TAGS
    if multiple:
        p.add_argument("--searcher", action="append", choices=choices,
                       help="search strategy; repeat to compare several (default random)")
    else:
        p.add_argument("--searcher", default="random", choices=choices)
    p.add_argument("--sa-temp", type=float, default=None, help="initial annealing temperature")
    p.add_argument("--sa-cool", type=float, default=0.95, help="annealing cooling factor")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print one JSON document on stdout")

    parser = argparse.ArgumentParser(prog="ktune", description="Kernel autotuning engine.")
    parser.add_argument("--version", action="version", version=f"ktune {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("space", parents=[common], help="inspect a tuning-space file")
    p.add_argument("action", choices=("count", "validate"))
    p.add_argument("file")
    p.set_defaults(func=cmd_space)

    p = sub.add_parser("tune", parents=[common], help="tune offline and write a trace")
    p.add_argument("--space", help="space definition (JSON); optional for bench executors")
    p.add_argument("--exec", required=True, metavar="SPEC",
                   help="cmd:COMPILE,RUN | replay:TRACE | bench:KIND")
    _add_searcher_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stop-configs", type=int)
    p.add_argument("--stop-time", type=float, metavar="SEC")
    p.add_argument("--stop-threshold", type=float, metavar="FRAC",
                   help="stop at this fraction of peak bandwidth")
    p.add_argument("--device-mem", type=float, metavar="GBPS", help="peak memory bandwidth")
    p.add_argument("--mem-bytes", type=float, help="essential bytes per run (threshold stop)")
    p.add_argument("--device", default="unknown", help="device label stored in the trace")
    p.add_argument("--out", metavar="TRACE", help="write the tuning trace (JSON Lines)")
    p.add_argument("--repeats", type=int, default=1, help="runs per configuration (median kept)")
    p.add_argument("--timeout", type=float, default=60.0, help="per-command timeout in seconds")
    p.add_argument("--workdir", default=".", help="working directory for cmd executors")
    p.add_argument("--source", help="kernel source template for cmd executors")
    p.add_argument("--noise", type=float, default=0.0, help="relative noise for replay executors")
    p.add_argument("--size", action="append", default=[], metavar="NAME=N",
                   help="bench problem size, e.g. n=1048576")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("replay-search", parents=[common],
                       help="measure steps-to-well-performing over a recorded trace")
    p.add_argument("--trace", required=True)
    _add_searcher_flags(p, multiple=True)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--well", type=float, default=0.95, help="well-performing threshold")
    p.add_argument("--p", type=float, default=0.9, help="target probability for the prediction")
    p.add_argument("--seed", type=int, default=0, help="seed of the first repetition")
    p.add_argument("--max-steps", type=int)
    p.set_defaults(func=cmd_replay_search)

    p = sub.add_parser("analyze", parents=[common], help="efficiency, portability, amortization")
    p.add_argument("mode", choices=("efficiency", "portability", "amortize"))
    p.add_argument("--trace", action="append", help="trace file (portability: DEVICE=FILE, repeatable)")
    p.add_argument("--perf", action="append", metavar="TUNED:RUN=VALUE",
                   help="measured performance of a configuration tuned on one device, run on another")
    p.add_argument("--device", help=f"known device ({', '.join(DEVICES)})")
    p.add_argument("--mem-peak", type=float, metavar="GBPS")
    p.add_argument("--alu-peak", type=float, metavar="GFLOPS")
    p.add_argument("--runtime-ns", type=float)
    p.add_argument("--mem-bytes", type=float)
    p.add_argument("--flops", type=float)
    p.add_argument("--r", type=float, help="fraction of well-performing configurations")
    p.add_argument("--p", type=float, default=0.9)
    p.add_argument("--s", type=int, help="tuning steps")
    p.add_argument("--rp", "--target", dest="rp", type=float, default=0.9,
                   help="target relative performance")
    p.add_argument("--t-avg", type=float)
    p.add_argument("--t-well", type=float)
    p.add_argument("--well", type=float, default=0.95)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("demo", parents=[common], help="dynamic tuning with changing input sizes")
    p.add_argument("--bench", default="batched-gemm")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--iters", type=int, default=500, help="iterations per epoch")
    p.add_argument("--epoch-seconds", type=float, help="wall-clock epochs instead of --iters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--executor", choices=("replay", "native"), default="replay")
    p.add_argument("--device", default="gtx1070")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--searcher", default="random", choices=SearcherKind.TAGS)
    p.add_argument("--stop-configs", type=int, help="replace the default stop rule by a config budget")
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "analyze" and args.mode != "portability" and args.trace:
        if len(args.trace) > 1:
            parser.error("only one --trace for this mode")
        args.trace = args.trace[0]
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ktune: error: {exc}", file=sys.stderr)
        return 2
    except (KtuneError, ValueError) as exc:
        print(f"ktune: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
