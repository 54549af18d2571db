import io
import json

from poaps.cli import main
from poaps.planner import ValueTable


def _main(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


def test_compile_reports_observed_counters(tmp_path):
    path = tmp_path / "vote.txt"
    code, text = _main("compile", "--program", "vote", "--entry", "vote-better?", "--out", str(path))
    assert code == 0
    assert "arg c0: Observed (observable)" in text and "arg c1: Observed (observable)" in text
    assert path.read_text() == text


def test_compile_program_file(tmp_path):
    src = tmp_path / "f.poaps"
    src.write_text("(define (f x) (choose (c-imp x) x))\n")
    code, text = _main("compile", "--program", str(src))
    assert code == 0 and "Choice" in text


def test_run_identity():
    code, text = _main("run", "--program", "identity", "--args", '"hello"')
    assert code == 0
    assert text.splitlines() == ['return: "hello"', "cost: 0 cents", "goal achieved: true"]


def test_identical_argv_gives_identical_traces(tmp_path):
    paths = [tmp_path / "a.jsonl", tmp_path / "b.jsonl"]
    outs = []
    for p in paths:
        outs.append(_main("run", "--program", "vote", "--args", '"q" "a0" "a1" 0 0', "--goal-accuracy", "0.9",
                          "--simulations", "40", "--particles", "200", "--seed", "7", "--trace", str(p)))
    assert outs[0] == outs[1] and outs[0][0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    header = json.loads(paths[0].read_text().splitlines()[0])
    assert header["seed"] == 7 and header["version"] == 1


def test_plan_writes_table(tmp_path):
    path = tmp_path / "vote.table"
    code, text = _main("plan", "--program", "vote", "--args", '"q" "a0" "a1" 0 0', "--goal-accuracy", "0.9",
                       "--simulations", "50", "--particles", "200", "--out", str(path))
    assert code == 0 and "Q(action 0)" in text and "Q(action 1)" in text
    table = ValueTable.load(path)
    assert f"table entries: {len(table)}" in text
    # warm start from the saved table
    code, _ = _main("run", "--program", "vote", "--args", '"q" "a0" "a1" 0 0', "--goal-accuracy", "0.9",
                    "--simulations", "10", "--particles", "200", "--table", str(path))
    assert code == 0


def test_experiment_summary(tmp_path):
    path = tmp_path / "summary.json"
    argv = ("experiment", "voting", "--n", "20", "--simulations", "20", "--particles", "200",
            "--goal-accuracy", "0.9", "--seed", "7", "--out", str(path))
    code, text = _main(*argv)
    assert code == 0
    assert "live crowd reference 0.8773" in text and "live crowd reference 4.33" in text
    assert [line.split(":")[0] for line in text.splitlines()[3:]] == ["fixed k=1", "fixed k=3", "fixed k=5"]
    summary = json.loads(path.read_text())
    assert summary["n"] == 20 and 0.0 <= summary["accuracy"] <= 1.0
    first = path.read_bytes()
    assert _main(*argv)[0] == 0 and path.read_bytes() == first


def test_parse_errors_exit_1(tmp_path):
    bad = tmp_path / "bad.poaps"
    bad.write_text("(define (f x) (g x")
    assert _main("compile", "--program", str(bad))[0] == 1
    unresolved = tmp_path / "unresolved.poaps"
    unresolved.write_text("(define (f x) (g x))")
    assert _main("compile", "--program", str(unresolved))[0] == 1
    assert _main("compile", "--program", "no-such-program")[0] == 1
    assert _main("run", "--program", "identity", "--args", "(")[0] == 1
    assert _main("run", "--program", "identity", "--entry", "missing")[0] == 1


def test_flag_errors_exit_1():
    assert _main("compile")[0] == 1
    assert _main("bogus")[0] == 1
    assert _main("run", "--program", "identity", "--threads", "0")[0] == 1
    assert _main("run", "--program", "vote", "--goal-accuracy", "0.3")[0] == 1


def test_runtime_errors_exit_2(tmp_path):
    # a literal text has no hidden quality in the simulated world
    src = tmp_path / "lit.poaps"
    src.write_text('(define (f) (c-imp "x"))')
    assert _main("run", "--program", str(src), "--simulations", "5")[0] == 2


def test_help_exits_0(capsys):
    assert _main("--help")[0] == 0
