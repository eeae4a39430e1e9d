import json
import subprocess
import sys

import jsonschema
import pytest

from dpmarginal import bundled
from dpmarginal.cli import RunConfig, bench, main

from corpus import GAME

OUTPUT_SCHEMA = {
    "type": "object",
    "required": ["distribution", "totalMass", "stats"],
    "properties": {
        "distribution": {"type": "array", "items": {
            "type": "object", "required": ["value", "prob"], "additionalProperties": False,
            "properties": {"value": {"type": "string"}, "prob": {"type": "number", "minimum": 0}},
        }},
        "totalMass": {"type": "number", "minimum": 0},
        "stats": {"type": "object"},
        "artifact": {"type": "string"},
    },
    "additionalProperties": False,
}

STATS_SCHEMA = {
    "type": "object",
    "required": ["nodes", "edges", "roots", "nodesByKind", "tasks", "solver", "timings"],
    "properties": {
        "solver": {"type": "object", "required": ["sccCount", "sccSizes", "components", "maxResidual"]},
        "timings": {"type": "object", "required": ["parse", "compile", "solve"]},
    },
}

ERROR_SCHEMA = {
    "type": "object",
    "required": ["error", "message"],
    "properties": {"error": {"type": "string"}, "message": {"type": "string"}},
}


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1, out
    return code, json.loads(out[0])


@pytest.fixture
def program(tmp_path):
    def write(text, name="prog.scm"):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return str(p)
    return write


def test_game_file(capsys, program):
    code, doc = run_cli(capsys, program(GAME))
    assert code == 0
    jsonschema.validate(doc, OUTPUT_SCHEMA)
    probs = {d["value"]: d["prob"] for d in doc["distribution"]}
    assert probs["#t"] == pytest.approx(0.2375, abs=1e-9)
    assert probs["#f"] == pytest.approx(0.7625, abs=1e-9)
    assert [d["value"] for d in doc["distribution"]] == ["#f", "#t"]


def test_stats(capsys):
    code, doc = run_cli(capsys, "--example", "game", "--stats", "--solver", "newton")
    assert code == 0
    jsonschema.validate(doc, OUTPUT_SCHEMA)
    jsonschema.validate(doc["stats"], STATS_SCHEMA)
    assert doc["stats"]["roots"] == 3
    assert doc["stats"]["solver"]["sccCount"] == 4


def test_list_examples(capsys):
    code, doc = run_cli(capsys, "--list-examples")
    assert code == 0 and doc["examples"] == sorted(bundled.EXAMPLES)


@pytest.mark.parametrize("name", sorted(bundled.EXAMPLES))
def test_every_example_runs(capsys, name):
    code, doc = run_cli(capsys, "--example", name)
    assert code == 0
    jsonschema.validate(doc, OUTPUT_SCHEMA)
    assert doc["totalMass"] == pytest.approx(1.0, abs=1e-9)


def test_emit_dot(capsys, program, tmp_path):
    path = program("(flip 0.6)")
    code, doc = run_cli(capsys, path, "--emit", "dot")
    assert code == 0
    dot = (tmp_path / "prog.dot").read_text()
    assert doc["artifact"].endswith("prog.dot")
    assert 'label="0.6"' in dot


def test_emit_json_to_path(capsys, program, tmp_path):
    target = tmp_path / "net.json"
    code, doc = run_cli(capsys, program(GAME), "--emit", "fspn-json", "--emit-path", str(target))
    assert code == 0
    net = json.loads(target.read_text())
    assert net["globalRoot"] == 0 and len(net["nodes"]) > 0


def test_normalize(capsys, program):
    code, doc = run_cli(capsys, program("(query (define a (flip .2)) (define b (flip .2)) a (or a b))"),
                        "--normalize")
    assert code == 0
    assert sum(d["prob"] for d in doc["distribution"]) == pytest.approx(1.0)


# ------------------------------------------------------------ exit codes

def test_infinite_support_exit_2(capsys, program):
    code, doc = run_cli(capsys, program("(define (g) (if (flip .5) 0 (+ 1 (g)))) (g)"),
                        "--task-budget", "1000")
    assert code == 2
    jsonschema.validate(doc, ERROR_SCHEMA)
    assert doc["error"] == "BudgetExceeded"


def test_syntax_error_exit_1(capsys, program):
    code, doc = run_cli(capsys, program("(if (flip .5) 1"))
    assert code == 1
    assert doc["error"] == "SyntaxError" and doc["line"] == 1


def test_runtime_error_exit_1(capsys, program):
    code, doc = run_cli(capsys, program("(flip .5)\n(+ 1 'a)"))
    assert code == 1
    assert doc["error"] == "RuntimeError" and doc["line"] == 2


def test_no_convergence_exit_3(capsys, program):
    code, doc = run_cli(capsys, program(GAME), "--max-iter", "2")
    assert code == 3
    assert doc["error"] == "NoConvergence" and doc["iterations"] == 2


def test_zero_mass_exit_4(capsys, program):
    code, doc = run_cli(capsys, program("(query (define a (flip .5)) a (and a (not a)))"), "--normalize")
    assert code == 4
    assert doc["error"] == "ZeroMass"


def test_missing_file_exit_1(capsys, tmp_path):
    code, doc = run_cli(capsys, str(tmp_path / "nope.scm"))
    assert code == 1


@pytest.mark.parametrize("argv", [
    [],
    ["--tol", "0", "--example", "game"],
    ["--solver", "gauss"],
    ["--bench-depths", "1,x"],
    ["a.scm", "--example", "game"],
])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 64


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(input_path="x", tol=-1)
    with pytest.raises(ValueError):
        RunConfig(input_path="x", task_budget=0)


def test_module_entry_point(tmp_path):
    p = tmp_path / "coin.scm"
    p.write_text("(flip 0.25)")
    out = subprocess.run([sys.executable, "-m", "dpmarginal", str(p)], capture_output=True, text=True, check=True)
    doc = json.loads(out.stdout)
    assert doc["distribution"] == [{"value": "#f", "prob": 0.75}, {"value": "#t", "prob": 0.25}]


# ----------------------------------------------------------------- bench

def test_bench_single_depth():
    (row,) = bench([0])
    assert row["depth"] == 0 and row["nodes"] > 0


def test_bench_deterministic_counts():
    a = bench([1, 2])
    b = bench([1, 2])
    keys = ("nodes", "edges", "roots", "sccCount")
    assert [[r[k] for k in keys] for r in a] == [[r[k] for k in keys] for r in b]


def test_bench_cli(capsys):
    code, doc = run_cli(capsys, "--bench-depths", "0,1")
    assert code == 0 and [r["depth"] for r in doc["bench"]] == [0, 1]
