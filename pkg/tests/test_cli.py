import json

import pytest

from subtasknav.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_dataset_generate_and_invariant_summary(tmp_path, capsys):
    out = tmp_path / "d.jsonl"
    code, stdout, _ = run(capsys, "dataset", "generate", "--scene", "two-room", "--action", "exit", "--count", 100, "--seed", 1, "--out", out)
    assert code == 0
    assert "100 pass invariants, 0 fail" in stdout
    lines = out.read_text().splitlines()
    assert json.loads(lines[0])["count"] == 100 and len(lines) == 101


def test_dataset_count_zero(tmp_path, capsys):
    out = tmp_path / "d.jsonl"
    assert run(capsys, "dataset", "generate", "--scene", "two-room", "--action", "goto", "--count", 0, "--out", out)[0] == 0
    assert len(out.read_text().splitlines()) == 1


def test_sampling_failure_exit_code(capsys):
    code, _, err = run(capsys, "dataset", "generate", "--scene", "corridor", "--action", "gothrough", "--count", 3)
    assert code == 2 and "ResourceUnavailable" in err


def test_global_flags_before_or_after_the_command(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run(capsys, "--seed", 4, "dataset", "generate", "--scene", "two-room", "--action", "goto", "--count", 3, "--out", a)
    run(capsys, "dataset", "generate", "--scene", "two-room", "--action", "goto", "--count", 3, "--seed", 4, "--out", b)
    assert a.read_text() == b.read_text()
    assert json.loads(a.read_text().splitlines()[0])["seed"] == 4


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# defaults\nseed = 9\nmax-attempts=50\n")
    out = tmp_path / "d.jsonl"
    run(capsys, "--config", cfg, "dataset", "generate", "--scene", "two-room", "--action", "goto", "--count", 1, "--out", out)
    assert json.loads(out.read_text().splitlines()[0])["seed"] == 9
    run(capsys, "--config", cfg, "--seed", 2, "dataset", "generate", "--scene", "two-room", "--action", "goto", "--count", 1, "--out", out)
    assert json.loads(out.read_text().splitlines()[0])["seed"] == 2
    cfg.write_text("bogus=1\n")
    code, _, err = run(capsys, "--config", cfg, "parse", "--instruction", "Exit the bedroom")
    assert code == 1 and "bogus" in err


def test_parse_commands(capsys):
    code, out, _ = run(capsys, "parse", "--instruction", "Exit the bedroom", "--parser", "heuristic")
    assert code == 0 and out.strip() == "(Exit, bedroom)"
    code, out, _ = run(capsys, "parse", "--instruction", "Go past the sofa", "--parser", "llm", "--llm-fixtures", "builtin")
    assert code == 0 and out.strip() == "(GoPast, sofa)"
    code, out, _ = run(capsys, "parse", "--corpus", "--parser", "llm", "--llm-fixtures", "builtin", "--style", "Examples")
    assert code == 0 and out.splitlines()[-1] == "exact-match: 20/20 = 100.0%"


def test_llm_failures_exit_3(monkeypatch, tmp_path, capsys):
    monkeypatch.delenv("A2NAV_LLM_ENDPOINT", raising=False)
    assert run(capsys, "parse", "--instruction", "Exit the bedroom", "--parser", "llm")[0] == 3
    empty = tmp_path / "f.jsonl"
    empty.write_text("")
    code, _, err = run(capsys, "parse", "--instruction", "Exit the bedroom", "--parser", "llm", "--llm-fixtures", empty)
    assert code == 3 and "FixtureMiss" in err


def test_eval_csr_of_two_reports(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text('{"SR": 35.0}')
    b.write_text('{"aggregate": {"SR": 10.0}}')
    code, out, _ = run(capsys, "eval", "--report-a", a, "--report-b", b)
    assert code == 0 and "CSR 28.6%" in out


def test_run_eval_plot_pipeline(tmp_path, capsys):
    data, trace, svg, report = (tmp_path / n for n in ("d.jsonl", "t.jsonl", "t.svg", "r.json"))
    run(capsys, "dataset", "generate", "--scene", "two-room", "--action", "gointo", "--count", 5, "--out", data)
    code, out, _ = run(capsys, "run", "--scene", "two-room", "--dataset", data, "--episode-id", 2, "--out", trace)
    assert code == 0 and "status AllSubtasksDone" in out
    assert run(capsys, "plot", trace, "--out", svg)[0] == 0
    assert svg.read_text().startswith("<svg")
    code, out, _ = run(capsys, "eval", "--scene", "two-room", "--dataset", data, "--out", report)
    assert code == 0 and json.loads(report.read_text())["aggregate"]["count"] == 5


def test_run_with_inline_subtasks(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    code, out, _ = run(capsys, "run", "--scene", "two-room", "--subtasks", "(Exit, bedroom); (Go to, sofa)", "--start", "1.125,2.125", "--out", trace)
    assert code == 0
    header = json.loads(trace.read_text().splitlines()[0])
    assert [s["action"] for s in header["subtasks"]] == ["Exit", "GoTo"]


def test_run_needs_exactly_one_source(capsys):
    assert run(capsys, "run", "--scene", "two-room", "--start", "1,1")[0] == 1


def test_plot_errors_exit_4(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("garbage\n")
    assert run(capsys, "plot", bad)[0] == 4
    assert run(capsys, "plot", tmp_path / "missing.jsonl")[0] == 4


def test_plot_scene_mismatch_exit_4(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    run(capsys, "run", "--scene", "two-room", "--subtasks", "(Go to, sofa)", "--start", "1.125,2.125", "--out", trace)
    assert run(capsys, "plot", trace, "--scene", "corridor")[0] == 4


def test_scene_validate_and_fixture_generate(tmp_path, capsys):
    path = tmp_path / "s.json"
    assert run(capsys, "fixture", "generate", "--name", "four-room-ring", "--out", path)[0] == 0
    code, out, _ = run(capsys, "scene", "validate", path)
    assert code == 0 and "4 regions" in out
    path.write_text('{"id": "x", "grid": ["..", ".x"]}')
    assert run(capsys, "scene", "validate", path)[0] == 1


@pytest.mark.parametrize("command", [["dataset", "generate", "--scene", "four-room-ring", "--action", "gopast", "--count", 30, "--seed", 6]])
def test_outputs_are_byte_identical(tmp_path, capsys, command):
    outs = []
    for k in range(2):
        out = tmp_path / f"{k}.jsonl"
        run(capsys, *command, "--out", out)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
