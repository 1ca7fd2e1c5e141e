import json
import sys

import pytest

from ktune.cli import main
from ktune.experiments import planted_trace, valley_trace
from ktune.space import load_space, space_cardinality
from ktune.trace import Trace, TraceRow, read_trace
from ktune.search import Status

from conftest import DATA

EXAMPLE = str(DATA / "example_space.json")
REDUCTION = str(DATA / "reduction_space.json")

FIXTURE = """\
import os
x = int(os.environ["KTUNE_P_WG_X"])
y = int(os.environ["KTUNE_P_WG_Y"])
print("KTUNE_TIME_NS=%d" % (1_000_000 + 10_000 * abs(x - 32) + 50_000 * abs(y - 2)))
"""


def fixture_runtime(cfg):
    return 1_000_000 + 10_000 * abs(cfg["WG_X"] - 32) + 50_000 * abs(cfg["WG_Y"] - 2)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    return code, json.loads(out), err


@pytest.fixture
def cmd_exec(tmp_path):
    script = tmp_path / "kernel.py"
    script.write_text(FIXTURE)
    return f"cmd:,{sys.executable} {script}"


class TestSpaceCommand:
    @pytest.mark.parametrize("path", [EXAMPLE, REDUCTION])
    def test_count_matches_library(self, capsys, path):
        code, out, _ = run(capsys, "space", "count", path)
        assert code == 0 and int(out) == space_cardinality(load_space(path))

    def test_known_counts(self, capsys):
        assert run(capsys, "space", "count", EXAMPLE)[1].strip() == "9"
        assert run(capsys, "space", "count", REDUCTION)[1].strip() == "175"

    def test_validate_json(self, capsys):
        code, doc, _ = run_json(capsys, "space", "validate", EXAMPLE)
        assert code == 0 and doc["valid"] and doc["cardinality"] == 9 and doc["raw_cardinality"] == 12
        assert doc["space_sha256"] == load_space(EXAMPLE).sha256()

    def test_missing_file(self, capsys):
        code, out, err = run(capsys, "space", "count", "nope.json")
        assert code == 2 and "usage:" in err and out == ""

    def test_bad_space_is_domain_error(self, capsys, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"parameters": [{"name": "A", "values": [1]}], "constraints": ["B > 1"]}')
        assert run(capsys, "space", "count", p)[0] == 1

    def test_empty_space_counts_zero(self, capsys, tmp_path):
        p = tmp_path / "empty.json"
        p.write_text('{"parameters": [{"name": "A", "values": [1, 2]}], "constraints": ["A > 5"]}')
        code, out, _ = run(capsys, "space", "count", p)
        assert code == 0 and out.strip() == "0"

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as e:
            main(["space", "count", EXAMPLE, "--frobnicate"])
        assert e.value.code == 2


class TestTune:
    def test_exhaustive_command_executor(self, capsys, tmp_path, cmd_exec):
        out = tmp_path / "trace.jsonl"
        code, text, _ = run(capsys, "tune", "--space", EXAMPLE, "--exec", cmd_exec, "--out", out,
                            "--workdir", tmp_path)
        assert code == 0
        assert "WG_X=32 WG_Y=2" in text and "1000000 ns" in text
        lines = out.read_text().splitlines()
        assert json.loads(lines[0])["kind"] == "ktune-trace"
        rows = [json.loads(line) for line in lines[1:]]
        assert len(rows) == 9
        space = load_space(EXAMPLE)
        assert {tuple(sorted(r["cfg"].items())) for r in rows} == \
            {tuple(sorted(c.as_dict().items())) for c in space.configurations()}
        for r in rows:
            assert r["status"] == "ok" and r["runtime_ns"] == fixture_runtime(r["cfg"])

    def test_stop_configs_one(self, capsys, tmp_path, cmd_exec):
        out = tmp_path / "trace.jsonl"
        code, doc, _ = run_json(capsys, "tune", "--space", EXAMPLE, "--exec", cmd_exec, "--out", out,
                                "--stop-configs", 1, "--workdir", tmp_path)
        assert code == 0 and doc["steps"] == 1
        assert len(read_trace(out)) == 1

    def test_replay_trace(self, capsys, tmp_path, wg_trace):
        src = tmp_path / "src.jsonl"
        wg_trace.write(src)
        code, doc, _ = run_json(capsys, "tune", "--space", EXAMPLE, "--exec", f"replay:{src}",
                                "--searcher", "annealing", "--seed", 4)
        assert code == 0 and doc["best"]["configuration"] == {"WG_X": 32, "WG_Y": 2}
        assert doc["space_sha256"] == load_space(EXAMPLE).sha256()

    def test_bench_executor(self, capsys, tmp_path):
        out = tmp_path / "t.jsonl"
        code, doc, _ = run_json(capsys, "tune", "--exec", "bench:reduction", "--size", "n=4096",
                                "--stop-configs", 5, "--out", out)
        assert code == 0 and doc["steps"] == 5 and len(read_trace(out)) == 5

    def test_all_failed_is_domain_error(self, capsys, tmp_path):
        code, doc, _ = run_json(capsys, "tune", "--space", EXAMPLE, "--exec", "cmd:,exit 3",
                                "--workdir", tmp_path)
        assert code == 1 and doc["best"] is None and doc["error"]

    @pytest.mark.parametrize("argv", [
        ["--space", "missing.json", "--exec", "cmd:,true"],
        ["--space", EXAMPLE, "--exec", "gpu:foo"],
        ["--space", EXAMPLE, "--exec", "replay:missing.jsonl"],
        ["--exec", "bench:fft"],
        ["--exec", "cmd:,true"],
        ["--space", EXAMPLE, "--exec", "cmd:,true", "--stop-configs", "0"],
        ["--space", EXAMPLE, "--exec", "cmd:,true", "--stop-threshold", "0.5"],
    ])
    def test_usage_errors(self, capsys, argv):
        code, out, err = run(capsys, "tune", *argv)
        assert code == 2 and out == "" and "usage:" in err

    def test_bad_replay_trace_line(self, capsys, tmp_path, wg_trace):
        p = tmp_path / "t.jsonl"
        p.write_text(wg_trace.dumps() + "{oops\n")
        code, _, err = run(capsys, "tune", "--space", EXAMPLE, "--exec", f"replay:{p}")
        assert code == 1 and "line 11" in err


class TestReplaySearch:
    def test_planted_half(self, capsys, tmp_path):
        p = tmp_path / "planted.jsonl"
        planted_trace(20, 10, seed=1).write(p)
        code, doc, _ = run_json(capsys, "replay-search", "--trace", p, "--reps", 10_000)
        assert code == 0
        (r,) = doc["strategies"]
        assert r["searcher"] == "random" and r["reps"] == 10_000
        assert abs(r["p_within_1"] - 0.5) <= 0.02

    def test_single_config(self, capsys, tmp_path):
        p = tmp_path / "one.jsonl"
        Trace("d", "", [TraceRow({"X": 7}, 500, 0, Status.OK)]).write(p)
        for searcher in ("random", "annealing", "mcmc"):
            code, doc, _ = run_json(capsys, "replay-search", "--trace", p, "--reps", 50, "--searcher", searcher)
            r = doc["strategies"][0]
            assert code == 0 and r["p_within_1"] == 1.0 and r["max_steps"] == 1 and r["not_found"] == 0

    def test_annealing_vs_random(self, capsys, tmp_path):
        p = tmp_path / "valley.jsonl"
        valley_trace(200, 57).write(p)
        code, doc, _ = run_json(capsys, "replay-search", "--trace", p, "--reps", 50,
                                "--searcher", "annealing", "--searcher", "random")
        assert code == 0
        assert [r["searcher"] for r in doc["strategies"]] == ["annealing", "random"]
        for r in doc["strategies"]:
            assert isinstance(r["median_steps"], (int, float)) and r["predicted_steps"] >= 1

    def test_text_table(self, capsys, tmp_path, wg_trace):
        p = tmp_path / "t.jsonl"
        wg_trace.write(p)
        code, out, _ = run(capsys, "replay-search", "--trace", p, "--reps", 20)
        assert code == 0 and out.splitlines()[0].split()[0] == "searcher" and "%" in out

    def test_malformed_line(self, capsys, tmp_path, wg_trace):
        p = tmp_path / "t.jsonl"
        lines = wg_trace.dumps().splitlines()
        lines[4] = '{"cfg": {"WG_X": 16}, "runtime_ns": -5, "status": "ok"}'
        p.write_text("\n".join(lines) + "\n")
        code, out, err = run(capsys, "replay-search", "--trace", p, "--json")
        assert code == 1 and "line 5" in err and out == ""

    def test_bad_reps(self, capsys, wg_trace, tmp_path):
        p = tmp_path / "t.jsonl"
        wg_trace.write(p)
        assert run(capsys, "replay-search", "--trace", p, "--reps", 0)[0] == 2


class TestAnalyze:
    def test_amortize_direct(self, capsys):
        code, doc, _ = run_json(capsys, "analyze", "amortize", "--r", 0.01, "--p", 0.9)
        assert code == 0 and doc["s"] == 230

    def test_amortize_invocations(self, capsys):
        code, out, _ = run(capsys, "analyze", "amortize", "--s", 100, "--rp", 0.9,
                           "--t-avg", 10, "--t-well", 5)
        assert code == 0 and out.strip() == "s=100  n=900"

    def test_amortize_trace(self, capsys, tmp_path, wg_trace):
        p = tmp_path / "t.jsonl"
        wg_trace.write(p)
        code, doc, _ = run_json(capsys, "analyze", "amortize", "--trace", p)
        assert code == 0 and {"r", "s", "t_avg", "t_well", "n"} <= set(doc)

    def test_amortize_needs_input(self, capsys):
        assert run(capsys, "analyze", "amortize")[0] == 2
        assert run(capsys, "analyze", "amortize", "--s", 10, "--t-avg", 1)[0] == 2

    def test_efficiency_saturating(self, capsys):
        code, out, _ = run(capsys, "analyze", "efficiency", "--mem-peak", 100, "--runtime-ns", 1e6,
                           "--mem-bytes", 1e8)
        assert code == 0 and out.strip() == "custom: 100.0% of peak"

    def test_efficiency_from_trace(self, capsys, tmp_path, wg_trace):
        p = tmp_path / "t.jsonl"
        wg_trace.write(p)
        code, doc, _ = run_json(capsys, "analyze", "efficiency", "--trace", p, "--mem-peak", 1,
                                "--mem-bytes", 1e6)
        assert code == 0 and doc["runtime_ns"] == 1_000_000 and doc["efficiency_percent"] == pytest.approx(100.0)

    def test_efficiency_known_device(self, capsys):
        code, doc, _ = run_json(capsys, "analyze", "efficiency", "--device", "gtx1070", "--runtime-ns", 1e6,
                                "--mem-bytes", 1e3)
        assert code == 0 and doc["device"] == "GeForce GTX 1070"
        assert run(capsys, "analyze", "efficiency", "--device", "abacus", "--runtime-ns", 1)[0] == 2

    def test_portability_identical(self, capsys, tmp_path, wg_trace):
        p = tmp_path / "t.jsonl"
        wg_trace.write(p)
        code, doc, _ = run_json(capsys, "analyze", "portability", "--trace", f"a={p}", "--trace", f"b={p}")
        assert code == 0 and doc["devices"] == ["a", "b"]
        assert doc["matrix"] == [[100.0, 100.0], [100.0, 100.0]]

    def test_portability_perf(self, capsys):
        code, out, _ = run(capsys, "analyze", "portability", "--perf", "k20:k20=65",
                           "--perf", "k20:gtx750=381", "--perf", "gtx750:gtx750=544",
                           "--perf", "gtx750:k20=54.6")
        assert code == 0 and "84.0%" in out and "70.0%" in out

    def test_portability_inconsistent_devices(self, capsys):
        code, _, err = run(capsys, "analyze", "portability", "--perf", "a:a=10", "--perf", "a:b=5")
        assert code == 1 and "b" in err

    def test_portability_space_mismatch(self, capsys, tmp_path, wg_trace):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        wg_trace.write(a)
        Trace("x", "f" * 64, wg_trace.rows).write(b)
        assert run(capsys, "analyze", "portability", "--trace", f"a={a}", "--trace", f"b={b}")[0] == 1

    def test_portability_needs_input(self, capsys):
        assert run(capsys, "analyze", "portability")[0] == 2


class TestDemo:
    def test_json_and_report(self, capsys, tmp_path):
        rep = tmp_path / "demo.json"
        code, doc, _ = run_json(capsys, "demo", "--epochs", 3, "--iters", 40, "--report", rep)
        assert code == 0 and len(doc["epochs"]) == 3
        assert json.loads(rep.read_text()) == doc

    def test_text(self, capsys):
        code, out, _ = run(capsys, "demo", "--epochs", 2, "--iters", 30, "--stop-configs", 5)
        assert code == 0 and len(out.splitlines()) == 3

    @pytest.mark.parametrize("argv", [["--bench", "transpose"], ["--epochs", "0"], ["--device", "abacus"]])
    def test_usage_errors(self, capsys, argv):
        assert run(capsys, "demo", *argv)[0] == 2


@pytest.mark.parametrize("argv", [
    ["space", "count", EXAMPLE],
    ["analyze", "amortize", "--r", "0.05"],
    ["analyze", "portability", "--perf", "a:a=1"],
    ["demo", "--epochs", "1", "--iters", "10"],
])
def test_json_is_single_document(capsys, argv):
    code, out, err = run(capsys, *argv, "--json")
    assert code == 0
    json.loads(out)
    assert err == ""
