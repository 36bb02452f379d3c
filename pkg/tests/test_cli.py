import io
import json
import re
import subprocess
import sys

import pytest

from cachepersist.baseline import CMustDomain
from cachepersist.cli import EXIT_INPUT, EXIT_OK, EXIT_UNSOUND, EXIT_USAGE, build_parser, main
from cachepersist.solver import DOMAINS, register_domain

from support import DATA


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


def rows(text, scope):
    """{block: [verdicts]} for one scope of a text report."""
    lines = text.splitlines()
    start = next(i for i, ln in enumerate(lines) if ln.startswith(f"scope {scope} "))
    out = {}
    for ln in lines[start + 2:]:
        if not ln.startswith("  "):
            break
        cells = ln.split()
        out[cells[0]] = cells[3:]
    return out


def test_analyze_fig1():
    code, text = run("analyze", DATA / "fig1.cfg", "-k", 2, "-d", "exact")
    assert code == EXIT_OK
    assert rows(text, "loop1") == {"x": ["Persistent"], "y": ["Persistent"]}


def test_analyze_fig6_only_exact_proves_v():
    code, text = run("analyze", DATA / "fig6.cfg", "-k", 3, "-d", "exact,cmust,blockcs,product")
    assert code == EXIT_OK
    program = rows(text, "program")
    assert program["v"] == ["Persistent", "NotPersistent", "NotPersistent", "NotPersistent"]


def test_analyze_json():
    code, text = run("analyze", DATA / "fig1.cfg", "-k", 2, "--format", "json-like",
                     "--constraints")
    data = json.loads(text)
    assert code == EXIT_OK and data["format_version"] == 1
    assert "m_x_loop1 <= entries_loop1;" in data["constraints"]


def test_analyze_is_deterministic():
    argv = ("analyze", DATA / "fig4.cfg", "-k", 3, "-d", ",".join(DOMAINS))
    assert run(*argv) == run(*argv)


def test_dump_zdd_dot(tmp_path):
    path = tmp_path / "out.dot"
    code, _ = run("analyze", DATA / "fig1.cfg", "-k", 2, "--dump-zdd-dot", path)
    assert code == EXIT_OK and path.read_text().startswith("digraph")
    code, _ = run("analyze", DATA / "fig1.cfg", "-d", "cmust", "--dump-zdd-dot", path)
    assert code == EXIT_USAGE


def test_usage_errors():
    assert run("analyze", DATA / "fig1.cfg", "-k", 0)[0] == EXIT_USAGE
    assert run("analyze", DATA / "fig1.cfg", "-d", "lru")[0] == EXIT_USAGE
    assert run("frobnicate")[0] == EXIT_USAGE
    assert run()[0] == EXIT_USAGE


def test_input_errors(tmp_path):
    assert run("analyze", tmp_path / "missing.cfg")[0] == EXIT_INPUT
    bad = tmp_path / "bad.cfg"
    bad.write_text("entry a; edge a -> ;")
    assert run("analyze", bad)[0] == EXIT_INPUT
    assert run("oracle-check", DATA / "fig1.cfg", "nope")[0] == EXIT_INPUT


def test_compare_examples():
    code, text = run("compare", DATA / "fig2.cfg", "-k", 2, "-d", "blockcs")
    assert code == EXIT_OK
    assert re.findall(r"precision gap: (\w+)", text) == ["v"]
    code, text = run("compare", DATA / "fig3.cfg", "-k", 2, "-d", "cmust")
    assert code == EXIT_OK
    assert sorted(re.findall(r"precision gap: (\w+)", text)) == ["x", "y"]
    code, text = run("compare", DATA / "fig3.cfg", "-k", 2, "-d", "exact-explicit-0")
    assert code == EXIT_OK and "gaps: 0 block(s), violations: 0 block(s)" in text


class OffByOneCMust(CMustDomain):
    reset = 0


def test_compare_exits_3_on_mutant():
    register_domain("cmust-mutant", OffByOneCMust)
    try:
        code, text = run("compare", DATA / "fig3.cfg", "-k", 1, "-d", "cmust-mutant")
    finally:
        del DOMAINS["cmust-mutant"]
    assert code == EXIT_UNSOUND
    assert "SOUNDNESS VIOLATION: x" in text and text.endswith("verdict: UNSOUND\n")


def test_oracle_check():
    code, text = run("oracle-check", DATA / "fig1.cfg", "x", "-k", 1)
    assert code == EXIT_OK
    assert text.splitlines()[0] == "NOT-PERSISTENT" and "trace: x y x" in text
    code, text = run("oracle-check", DATA / "fig1.cfg", "x", "-k", 2)
    assert text == "PERSISTENT\n"
    code, text = run("oracle-check", DATA / "fig1.cfg", "x", "-k", 1, "--format", "json")
    assert json.loads(text)["miss_positions"] == [0, 4]
    assert run("oracle-check", DATA / "fig1.cfg", "x", "--budget", 1)[0] == EXIT_INPUT


def test_gen_hamiltonian_round_trip(tmp_path):
    code, text = run("gen", "hamiltonian", "--graph", DATA / "fig9.edges")
    assert code == EXIT_OK
    path = tmp_path / "h.cfg"
    path.write_text(text)
    code, verdict = run("oracle-check", path, "b", "-k", 4)
    assert verdict.startswith("NOT-PERSISTENT")


def test_gen_random_deterministic():
    a = run("gen", "random", "--seed", 4, "--nodes", 6, "--many-rate", 0.2)
    assert a == run("gen", "random", "--seed", 4, "--nodes", 6, "--many-rate", 0.2)
    assert run("gen", "random", "--seed", 4, "--loop-prob", 2)[0] == EXIT_USAGE


def test_stdin_input():
    text = (DATA / "fig1.cfg").read_text()
    proc = subprocess.run([sys.executable, "-m", "cachepersist.cli", "analyze", "-", "-k", "2"],
                          input=text, capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "scope loop1" in proc.stdout


def _flags(parser):
    flags = set()
    for action in parser._actions:
        flags.update(action.option_strings)
        if hasattr(action, "choices") and isinstance(action.choices, dict):
            for sub in action.choices.values():
                flags |= _flags(sub)
    return flags


@pytest.mark.parametrize("command", [["analyze"], ["compare"], ["oracle-check"],
                                     ["gen", "hamiltonian"], ["gen", "random"]])
def test_help_lists_every_flag(command, capsys):
    parser = build_parser()
    sub = parser
    for word in command:
        sub = next(a for a in sub._actions if isinstance(a.choices, dict)).choices[word]
    assert main([*command, "--help"]) == EXIT_OK
    help_text = capsys.readouterr().out
    for flag in _flags(sub):
        assert flag in help_text


def test_documented_flags_exist():
    flags = _flags(build_parser())
    for flag in ("-k", "--assoc", "--sets", "--line-size", "-d", "--domains", "--scopes",
                 "--format", "--budget", "--seed", "--dump-zdd-dot"):
        assert flag in flags
