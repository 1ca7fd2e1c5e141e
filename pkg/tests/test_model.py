import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from ktune.model import (DEVICES, DeviceSpec, WorkloadSpec, amortization_report, boundedness,
                         efficiency, invocations_raw, invocations_to_amortize, ops_for_workload,
                         portability, portability_matrix, portability_matrix_from_performance,
                         relative_perf, relative_performance, steps_for_probability)
from ktune.search import Status
from ktune.trace import Trace, TraceRow

MS = 1_000_000


def trace_of(runtimes_ms, device="d", statuses=None):
    statuses = statuses or [Status.OK] * len(runtimes_ms)
    return Trace(device, "h", [TraceRow({"X": i}, int(rt * MS) if s is Status.OK else None, 0, s)
                               for i, (rt, s) in enumerate(zip(runtimes_ms, statuses))])


class TestDevices:
    @pytest.mark.parametrize("key,alu,mem", [
        ("e5-2650x2", 512, 102), ("5110p", 2022, 320), ("k20", 3524, 208), ("gtx750", 1044, 80),
        ("gtx1070", 5783, 256), ("vega56", 8286, 410), ("rtx2080ti", 11750, 616)])
    def test_peaks(self, key, alu, mem):
        assert (DEVICES[key].alu_peak, DEVICES[key].mem_peak) == (alu, mem)

    def test_invalid_peak(self):
        with pytest.raises(ValueError):
            DeviceSpec("x", 0, 1)


class TestOps:
    def test_reduction(self):
        assert ops_for_workload(WorkloadSpec("reduction", {"n": 10**6})) == (4_000_000, 0)

    def test_gemm(self):
        assert ops_for_workload(WorkloadSpec("gemm", {"a": 2})) == (0, 16)

    def test_turing_variants(self):
        assert ops_for_workload(WorkloadSpec("nbody", {"n": 10}, "turing")) == (0, 1900)
        assert ops_for_workload(WorkloadSpec("coulomb3d", {"a": 2, "k": 3}, "turing")) == (0, 270)

    @pytest.mark.parametrize("bench,params,expected", [
        ("bicg", {"a": 10}, (400, 0)), ("coulomb3d", {"a": 2, "k": 3}, (0, 324)),
        ("gemm_batched", {"n": 3, "a": 4}, (576, 0)), ("hotspot", {"i": 2, "a": 5}, (200, 0)),
        ("transpose", {"a": 3}, (72, 0)), ("nbody", {"n": 10}, (0, 2000))])
    def test_table(self, bench, params, expected):
        assert ops_for_workload(WorkloadSpec(bench, params)) == expected

    def test_unknown(self):
        with pytest.raises(ValueError):
            ops_for_workload(WorkloadSpec("fft", {"n": 1}))
        with pytest.raises(ValueError):
            boundedness("fft")

    def test_size_checks(self):
        with pytest.raises(ValueError):
            WorkloadSpec("reduction", {"n": 0})
        with pytest.raises(ValueError, match="missing size"):
            ops_for_workload(WorkloadSpec("reduction", {}))


class TestEfficiency:
    def test_saturation(self):
        dev = DEVICES["gtx1070"]
        assert efficiency(1000, 256_000, 0, dev) == pytest.approx(100.0)

    def test_zero_ops(self):
        assert efficiency(1000, 0, 0, DEVICES["k20"]) == 0.0

    def test_gtx1070_example(self):
        # 4e9 bytes in 20 ms is 200 GB/s, 200/256 of peak
        assert efficiency(20 * MS, 4e9, 0, DEVICES["gtx1070"]) == pytest.approx(78.125)

    def test_compute_bound_side(self):
        dev = DeviceSpec("d", 100, 1000)
        assert efficiency(1000, 0, 50_000, dev) == pytest.approx(50.0)

    @settings(max_examples=100)
    @given(st.floats(1, 1e9), st.floats(0, 1e12), st.floats(0, 1e12), st.floats(0.1, 100))
    def test_scale_invariant(self, rt, mem, alu, k):
        dev = DEVICES["vega56"]
        assert efficiency(rt * k, mem * k, alu * k, dev) == pytest.approx(efficiency(rt, mem, alu, dev), rel=1e-9)


class TestPortability:
    def test_bicg_values(self):
        # configuration tuned on the 2080Ti run on the 750, and the 750's configuration on the 2080Ti
        assert portability(65, 54.6) == pytest.approx(84.0, abs=0.05)
        assert portability(544, 381) == pytest.approx(70.0, abs=0.05)

    def test_matrix_from_performance(self):
        m = portability_matrix_from_performance({
            ("gtx750", "gtx750"): 65, ("rtx2080ti", "rtx2080ti"): 544,
            ("rtx2080ti", "gtx750"): 54.6, ("gtx750", "rtx2080ti"): 381})
        assert round(m.entry("rtx2080ti", "gtx750"), 1) == 84.0
        assert round(m.entry("gtx750", "rtx2080ti"), 1) == 70.0
        assert m.entry("gtx750", "gtx750") == 100.0

    def test_identical_traces(self):
        t = trace_of([3, 1, 2])
        m = portability_matrix({"a": t, "b": t})
        assert m.values == ((100.0, 100.0), (100.0, 100.0))

    def test_cross_runtime_ratio(self):
        a = trace_of([1, 2, 4])  # best X=0
        b = trace_of([5, 4, 2])  # best X=2
        m = portability_matrix({"a": a, "b": b})
        assert m.entry("a", "b") == pytest.approx(100 * 2 / 5)
        assert m.entry("b", "a") == pytest.approx(100 * 1 / 4)

    def test_failed_entry(self):
        a = trace_of([1, 2])
        b = trace_of([1, 2], statuses=[Status.RUN_FAILED, Status.OK])
        m = portability_matrix({"a": a, "b": b})
        assert m.entry("a", "b") is None and m.failed == 1
        assert m.to_json()["matrix"][0][1] == "FAILED"

    def test_missing_config_is_failed(self):
        a = trace_of([1, 2, 3])
        b = Trace("b", "h", [TraceRow({"X": 1}, 5, 0, Status.OK)])
        assert portability_matrix({"a": a, "b": b}).entry("a", "b") is None

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.integers(1, 100), min_size=4, max_size=4), min_size=1, max_size=4))
    def test_diagonal(self, runtimes):
        m = portability_matrix({f"d{i}": trace_of(r) for i, r in enumerate(runtimes)})
        assert all(m.values[i][i] == 100.0 for i in range(len(runtimes)))
        assert all(v is None or 0 < v <= 100.0 for row in m.values for v in row)


class TestAmortization:
    def test_worked_invocations(self):
        assert invocations_to_amortize(0.9, 100, 10 * MS, 5 * MS) == 900

    def test_worked_steps(self):
        assert steps_for_probability(0.01, 0.9) == 230

    def test_hand_cases(self):
        assert invocations_to_amortize(0.5, 10, 2.0, 1.0) == 10
        assert invocations_to_amortize(0.9, 50, 5.0, 5.0) == 0
        assert steps_for_probability(0.5, 0.5) == 1
        assert steps_for_probability(0.1, 0.99) == 44
        assert steps_for_probability(0.05, 0.9) == 45
        assert steps_for_probability(1.0, 0.9) == 1

    def test_relative_perf_as_printed(self):
        assert relative_perf(100, 10, 5, 900) == pytest.approx(1.1111111, rel=1e-6)
        assert relative_perf(0, 10, 5, 900) == 1.0
        assert relative_perf(30, 5, 5, 90) == 1.0

    def test_consistent_pair(self):
        assert relative_performance(100, 10, 5, 900) == pytest.approx(0.9)
        assert relative_performance(100, 10, 5, 900) == pytest.approx(1 / relative_perf(100, 10, 5, 900))

    def test_errors(self):
        with pytest.raises(ValueError, match="unreachable target"):
            invocations_to_amortize(1.0, 10, 2, 1)
        with pytest.raises(ValueError):
            relative_perf(1, 1, 1, 0)
        with pytest.raises(ValueError):
            steps_for_probability(0, 0.9)
        with pytest.raises(ValueError):
            steps_for_probability(0.5, 1.0)
        with pytest.raises(ValueError):
            invocations_to_amortize(0.9, 10, 1, 2)

    def test_round_trip_random(self):
        rng = random.Random(0)
        for _ in range(200):
            s = rng.randint(1, 500)
            t_well = rng.uniform(0.1, 100)
            t_avg = t_well * rng.uniform(1.0001, 50)
            rp = rng.uniform(0.01, 0.999)
            n = invocations_raw(rp, s, t_avg, t_well)
            assert relative_performance(s, t_avg, t_well, n) == pytest.approx(rp, rel=1e-9)

    @settings(max_examples=200)
    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999), st.floats(0.001, 0.999))
    def test_steps_monotone(self, r, p, q):
        lo, hi = sorted((p, q))
        assert steps_for_probability(r, lo) <= steps_for_probability(r, hi)
        r2 = min(0.999, r * 1.5)
        assert steps_for_probability(r2, p) <= steps_for_probability(r, p)

    def test_steps_grid_monotone(self):
        grid = [i / 50 for i in range(1, 50)]
        for p in grid:
            row = [steps_for_probability(r, p) for r in grid]
            assert row == sorted(row, reverse=True)

    def test_steps_is_smallest_sufficient(self):
        for r in (0.01, 0.05, 0.1, 0.3):
            for p in (0.5, 0.9, 0.99):
                s = steps_for_probability(r, p)
                assert 1 - (1 - r) ** s >= p - 1e-12
                assert s == 1 or 1 - (1 - r) ** (s - 1) < p


class TestReport:
    def test_ten_row_example(self):
        rep = amortization_report(trace_of([10] * 9 + [5]))
        t_well = 5 * MS / 0.95
        assert rep.r == pytest.approx(0.1)
        assert rep.t_well == pytest.approx(t_well)
        assert rep.s == 22
        assert rep.t_avg == pytest.approx(9.5 * MS)
        assert rep.n == math.ceil(0.9 * 22 * (9.5 * MS / t_well - 1) / 0.1)

    def test_all_equal(self):
        rep = amortization_report(trace_of([4, 4, 4]))
        assert (rep.r, rep.s, rep.n) == (1.0, 1, 0)

    def test_single_config(self):
        rep = amortization_report(trace_of([7]))
        assert (rep.r, rep.s, rep.n) == (1.0, 1, 0)

    def test_failures_excluded(self):
        rep = amortization_report(trace_of([10, 5, 1], statuses=[Status.OK, Status.OK, Status.RUN_FAILED]))
        assert rep.configurations == 2 and rep.t_avg == pytest.approx(7.5 * MS)

    def test_no_ok(self):
        with pytest.raises(ValueError):
            amortization_report(trace_of([1], statuses=[Status.RUN_FAILED]))

    def test_bundled_trace(self, data_dir):
        from ktune.trace import read_trace
        rep = amortization_report(read_trace(data_dir / "reduction_synthetic.jsonl"))
        assert rep.configurations == 175
        assert rep.s == steps_for_probability(rep.r, 0.9)
