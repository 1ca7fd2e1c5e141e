import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ktune.errors import KtuneError
from ktune.executors import (ArgumentDescriptor, CallableExecutor, CommandExecutor, ExecutionResult,
                             KernelDefinition, ReferenceSpec, ReplayExecutor, execute_command,
                             execute_replay, render_source, translate_parallelism, validate_output)
from ktune.search import Measurement, Status
from ktune.space import ParameterDomain, TuningSpace
from ktune.trace import Trace, TraceRow

PY = sys.executable


@pytest.fixture
def tile_space():
    return TuningSpace([ParameterDomain("TILE", [8, 16]), ParameterDomain("A", [1])])


def cfg_of(space, **kw):
    return space.configuration(kw)


class TestRender:
    def test_substitution(self):
        space = TuningSpace([ParameterDomain("TILE", [16])])
        assert render_source("x[${TILE}]", cfg_of(space, TILE=16)) == "#define TILE 16\nx[16]"

    def test_definition_block_only(self):
        space = TuningSpace([ParameterDomain("A", [1])])
        assert render_source("body", cfg_of(space, A=1)) == "#define A 1\nbody"

    def test_declaration_order(self, tile_space):
        out = render_source("", cfg_of(tile_space, TILE=8, A=1))
        assert out.splitlines()[:2] == ["#define TILE 8", "#define A 1"]

    def test_unresolved(self):
        space = TuningSpace([ParameterDomain("A", [1])])
        with pytest.raises(KtuneError, match="unresolved placeholder FOO"):
            render_source("${FOO}", cfg_of(space, A=1))

    @settings(max_examples=50, deadline=None)
    @given(st.text(alphabet="ab ${}TILE\n", max_size=40))
    def test_fixed_point(self, body):
        space = TuningSpace([ParameterDomain("TILE", [16])])
        cfg = cfg_of(space, TILE=16)
        try:
            once = render_source(body, cfg)
        except KtuneError:
            return
        block = "#define TILE 16\n"
        assert once.startswith(block)
        rest = once[len(block):]
        assert render_source(rest, cfg) == block + rest


class TestParallelism:
    def k(self, g, l, conv="flat_global"):
        return KernelDefinition("k", global_size=g, local_size=l, dims_convention=conv)

    def test_flat_to_blocks(self):
        assert translate_parallelism(self.k(1024, 128), "blocks_threads") == ((8, 1, 1), (128, 1, 1))

    def test_blocks_to_flat(self):
        k = self.k((8, 1, 1), (128, 1, 1), "blocks_threads")
        assert translate_parallelism(k, "flat_global") == ((1024, 1, 1), (128, 1, 1))

    def test_ceil(self):
        blocks, _ = translate_parallelism(self.k(1000, 128), "blocks_threads")
        assert blocks == (8, 1, 1) and blocks[0] * 128 >= 1000

    def test_zero_local(self):
        with pytest.raises(ValueError):
            translate_parallelism(self.k(1000, 0), "blocks_threads")

    @settings(max_examples=100, deadline=None)
    @given(st.tuples(*[st.integers(1, 5000)] * 3), st.tuples(*[st.integers(1, 300)] * 3))
    def test_round_trip(self, g, l):
        blocks, threads = translate_parallelism(self.k(g, l), "blocks_threads")
        back, _ = translate_parallelism(self.k(blocks, threads, "blocks_threads"), "flat_global")
        for orig, new, loc in zip(g, back, l):
            assert new >= orig
            if orig % loc == 0:
                assert new == orig


class TestCommand:
    def test_compile_failure(self, tmp_path, tile_space):
        r = execute_command(cfg_of(tile_space, TILE=8, A=1), "exit 1", "true", tmp_path)
        assert r.status is Status.COMPILE_FAILED and r.outputs == {}

    def test_run_failure(self, tmp_path, tile_space):
        r = execute_command(cfg_of(tile_space, TILE=8, A=1), None, "exit 3", tmp_path)
        assert r.status is Status.RUN_FAILED

    def test_timeout(self, tmp_path, tile_space):
        r = execute_command(cfg_of(tile_space, TILE=8, A=1), None, "sleep 5", tmp_path, timeout=0.2)
        assert r.status is Status.RUN_FAILED and "timeout" in r.measurement.detail

    def test_reported_time_wins(self, tmp_path, tile_space):
        r = execute_command(cfg_of(tile_space, TILE=8, A=1), None,
                            "sleep 0.05; echo KTUNE_TIME_NS=5000000", tmp_path)
        assert r.measurement.runtime_ns == 5_000_000

    def test_wall_time_without_report(self, tmp_path, tile_space):
        r = execute_command(cfg_of(tile_space, TILE=8, A=1), None, "sleep 0.05", tmp_path)
        assert r.measurement.runtime_ns >= 50_000_000

    def test_parameters_reach_child(self, tmp_path, tile_space):
        script = 'import os; print("KTUNE_TIME_NS=%d" % (int(os.environ["KTUNE_P_TILE"]) * 1000))'
        r = execute_command(cfg_of(tile_space, TILE=16, A=1), None, f"{PY} -c '{script}'", tmp_path)
        assert r.measurement.runtime_ns == 16_000

    def test_template_placeholders_and_source(self, tmp_path, tile_space):
        r = execute_command(cfg_of(tile_space, TILE=16, A=1), "cp ${SRC} built_${TILE}.txt",
                            "echo KTUNE_TIME_NS=${TILE}", tmp_path, source="tile=${TILE}")
        assert r.measurement.runtime_ns == 16
        assert (tmp_path / "built_16.txt").read_text() == "#define TILE 16\n#define A 1\ntile=16"

    def test_output_file_captured(self, tmp_path, tile_space):
        r = execute_command(cfg_of(tile_space, TILE=8, A=1), None, "printf 'hello' > out.bin", tmp_path,
                            output_files={"out": "out.bin"})
        assert r.status is Status.OK
        assert r.outputs["out"].tobytes() == b"hello"

    def test_input_and_typed_output(self, tmp_path, tile_space):
        script = tmp_path / "double.py"
        script.write_text("import numpy as np\n"
                          "x = np.fromfile('in.bin', dtype=np.int32)\n"
                          "(2 * x).astype(np.int32).tofile('out.bin')\n")
        ex = CommandExecutor(None, f"{PY} {script}", tmp_path, input_files={"x": "in.bin"},
                             output_files={"y": "out.bin"})
        args = {"x": ArgumentDescriptor("x", "input", np.arange(5, dtype=np.int32)),
                "y": ArgumentDescriptor("y", "output", np.zeros(5, dtype=np.int32))}
        r = ex.execute(KernelDefinition("k"), cfg_of(tile_space, TILE=8, A=1), args)
        np.testing.assert_array_equal(r.outputs["y"], [0, 2, 4, 6, 8])

    def test_repeats_take_median(self, tmp_path, tile_space):
        counter = tmp_path / "n"
        counter.write_text("0")
        script = tmp_path / "t.py"
        script.write_text(f"p = {str(counter)!r}\n"
                          "n = int(open(p).read()) + 1\nopen(p, 'w').write(str(n))\n"
                          "print('KTUNE_TIME_NS=%d' % [0, 300, 100, 200][n])\n")
        ex = CommandExecutor(None, f"{PY} {script}", tmp_path, repeats=3)
        r = ex.execute(KernelDefinition("k"), cfg_of(tile_space, TILE=8, A=1), {})
        assert r.measurement.runtime_ns == 200


class TestReplay:
    @pytest.fixture
    def trace(self, tile_space):
        return Trace("t", tile_space.sha256(), [
            TraceRow({"TILE": 8, "A": 1}, 10_000_000, 5, Status.OK),
            TraceRow({"TILE": 16, "A": 1}, None, None, Status.RUN_FAILED)])

    def test_recorded_runtime(self, trace, tile_space):
        r = execute_replay(cfg_of(tile_space, TILE=8, A=1), trace)
        assert r.measurement.runtime_ns == 10_000_000 and r.outputs == {}

    def test_zero_noise_exact(self, trace, tile_space):
        r = execute_replay(cfg_of(tile_space, TILE=8, A=1), trace, noise=0.0, seed=3)
        assert r.measurement.runtime_ns == 10_000_000

    def test_failed_row(self, trace, tile_space):
        assert execute_replay(cfg_of(tile_space, TILE=16, A=1), trace).status is Status.RUN_FAILED

    def test_missing_row(self, trace):
        other = TuningSpace([ParameterDomain("TILE", [32]), ParameterDomain("A", [1])])
        r = execute_replay(other.configuration(TILE=32, A=1), trace)
        assert r.status is Status.RUN_FAILED and r.measurement.detail == "not in trace"

    def test_noise_is_seeded(self, trace, tile_space):
        cfg = cfg_of(tile_space, TILE=8, A=1)
        a = [ReplayExecutor(trace, 0.1, 7).execute(KernelDefinition("k"), cfg, {}) for _ in range(1)]
        ex1, ex2 = ReplayExecutor(trace, 0.1, 7), ReplayExecutor(trace, 0.1, 7)
        s1 = [ex1.execute(KernelDefinition("k"), cfg, {}).measurement for _ in range(20)]
        s2 = [ex2.execute(KernelDefinition("k"), cfg, {}).measurement for _ in range(20)]
        assert s1 == s2
        assert len({m.runtime_ns for m in s1}) > 1
        assert a[0].measurement == s1[0]

    def test_noise_mean_one(self, trace, tile_space):
        ex = ReplayExecutor(trace, 0.2, 1)
        cfg = cfg_of(tile_space, TILE=8, A=1)
        rts = [ex.execute(KernelDefinition("k"), cfg, {}).measurement.runtime_ns for _ in range(4000)]
        assert np.mean(rts) == pytest.approx(10_000_000, rel=0.02)
        assert np.std(rts) / 10_000_000 == pytest.approx(0.2, rel=0.1)


def result_with(tile_space, **outputs):
    m = Measurement(tile_space.configuration(TILE=8, A=1), Status.OK, 1)
    return ExecutionResult(m, {k: np.asarray(v) for k, v in outputs.items()})


class TestValidate:
    def test_identical_ints(self, tile_space):
        x = np.arange(10, dtype=np.int32)
        assert validate_output(result_with(tile_space, x=x), ReferenceSpec(golden={"x": x.copy()}))

    def test_float_within_tolerance(self, tile_space):
        x = np.ones(4, dtype=np.float32)
        ref = ReferenceSpec(golden={"x": x + 1e-7}, abs_tol=1e-6)
        assert validate_output(result_with(tile_space, x=x), ref)

    def test_first_mismatch_index(self, tile_space):
        x = np.arange(8, dtype=np.float32)
        bad = x.copy()
        bad[3] += 1
        bad[5] += 1
        v = validate_output(result_with(tile_space, x=bad), ReferenceSpec(golden={"x": x}, abs_tol=1e-3))
        assert not v and v.index == 3 and "x[3]" in v.detail

    def test_integer_must_be_exact(self, tile_space):
        x = np.arange(4, dtype=np.int64)
        v = validate_output(result_with(tile_space, x=x + np.array([0, 0, 1, 0])),
                            ReferenceSpec(golden={"x": x}, abs_tol=10))
        assert not v and v.index == 2

    def test_length_mismatch(self, tile_space):
        v = validate_output(result_with(tile_space, x=np.zeros(3)), ReferenceSpec(golden={"x": np.zeros(4)}))
        assert not v and "length mismatch" in v.detail

    def test_missing_output(self, tile_space):
        assert not validate_output(result_with(tile_space), ReferenceSpec(golden={"x": np.zeros(1)}))

    def test_producer(self, tile_space):
        ref = ReferenceSpec(producer=lambda inp: {"y": inp["x"] * 2})
        r = result_with(tile_space, y=np.array([2, 4]))
        assert validate_output(r, ref, inputs={"x": np.array([1, 2])})

    def test_rel_tolerance(self, tile_space):
        ref = ReferenceSpec(golden={"x": np.array([1000.0])}, rel_tol=1e-3)
        assert validate_output(result_with(tile_space, x=np.array([1000.9])), ref)
        assert not validate_output(result_with(tile_space, x=np.array([1001.1])), ref)

    def test_negative_tolerance_rejected(self):
        with pytest.raises(ValueError):
            ReferenceSpec(golden={}, abs_tol=-1)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(width=32), max_size=20),
           st.sampled_from(["f32", "f64", "i32"]))
    def test_reflexive(self, values, kind):
        dtype = {"f32": np.float32, "f64": np.float64, "i32": np.int32}[kind]
        x = np.array([0 if kind == "i32" else v for v in values], dtype=dtype)
        space = TuningSpace([ParameterDomain("TILE", [8]), ParameterDomain("A", [1])])
        assert validate_output(result_with(space, x=x), ReferenceSpec(golden={"x": x.copy()}))


class TestCallable:
    def test_reported_runtime_and_outputs(self, tile_space):
        def k(cfg, buf):
            buf["y"][:] = cfg["TILE"]
            return 1234

        ex = CallableExecutor({"k": k})
        args = {"y": ArgumentDescriptor("y", "output", np.zeros(3, dtype=np.int32))}
        r = ex.execute(KernelDefinition("k"), cfg_of(tile_space, TILE=16, A=1), args)
        assert r.measurement.runtime_ns == 1234
        np.testing.assert_array_equal(r.outputs["y"], [16, 16, 16])

    def test_exception_is_run_failure(self, tile_space):
        ex = CallableExecutor(lambda cfg, buf: 1 / 0)
        r = ex.execute(KernelDefinition("k"), cfg_of(tile_space, TILE=16, A=1), {})
        assert r.status is Status.RUN_FAILED and "ZeroDivisionError" in r.measurement.detail


class TestArguments:
    def test_bytes_payload(self):
        a = ArgumentDescriptor("b", "input", b"\x01\x02")
        assert a.element_kind == "bytes" and a.payload.tolist() == [1, 2]

    def test_bad_role(self):
        with pytest.raises(ValueError):
            ArgumentDescriptor("b", "weird", np.zeros(1))

    def test_copy_is_deep(self):
        a = ArgumentDescriptor("a", "output", np.zeros(2))
        b = a.copy()
        b.payload[0] = 1
        assert a.payload[0] == 0
