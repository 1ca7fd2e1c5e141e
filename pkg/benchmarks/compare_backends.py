"""Time the compiled kernels against the numpy fallback on every bench configuration.

    python3 benchmarks/compare_backends.py [--reps 3] [--json out.json]
"""
import argparse
import json
import statistics

from ktune.bench import BACKENDS, KINDS, make_bench

SIZES = {
    "reduction": {"n": 1 << 20},
    "transpose": {"a": 1024},
    "batched_gemm": {"i": 16, "j": 16, "k": 16, "batch": 4096},
}


def time_backend(kind, backend, reps):
    binding = make_bench(kind, SIZES[kind], seed=0, backend=backend)
    tuner, handle = binding.tuner()
    times = {}
    for cfg in binding.space.configurations():
        runs = [tuner.execute_configuration(handle, cfg).measurement.runtime_ns for _ in range(reps)]
        times[cfg] = statistics.median(runs)
    return times


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--json", help="write per-kind summary here")
    args = ap.parse_args()
    if "cython" not in BACKENDS:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    summary = {}
    print(f"{'kind':<13} {'best cython':>12} {'best python':>12} {'speedup':>8} {'spread cy':>10} {'spread py':>10}")
    for kind in KINDS:
        cy = time_backend(kind, "cython", args.reps)
        py = time_backend(kind, "python", args.reps)
        row = {
            "best_cython_ns": min(cy.values()),
            "best_python_ns": min(py.values()),
            "speedup_best": min(py.values()) / min(cy.values()),
            "spread_cython": max(cy.values()) / min(cy.values()),
            "spread_python": max(py.values()) / min(py.values()),
            "best_cython_cfg": min(cy, key=cy.get).as_dict(),
            "best_python_cfg": min(py, key=py.get).as_dict(),
        }
        summary[kind] = row
        print(f"{kind:<13} {row['best_cython_ns'] / 1e6:>10.2f}ms {row['best_python_ns'] / 1e6:>10.2f}ms "
              f"{row['speedup_best']:>7.1f}x {row['spread_cython']:>9.1f}x {row['spread_python']:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(summary, fh, indent=2, default=str)


if __name__ == "__main__":
    main()
