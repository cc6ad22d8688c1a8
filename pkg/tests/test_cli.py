import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from oracles import GRAMMARS, signature_a
from tfsc.cli import main
from tfsc.tfs import from_json, parse_avm

SIG_A = str(GRAMMARS / "sig_a.sig")
SIG_B = str(GRAMMARS / "sig_b.sig")
FINITENESS = str(GRAMMARS / "finiteness.pl")
GOLDEN = Path(__file__).parent / "golden"


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out)
    return code, out.getvalue()


@pytest.fixture
def empty_grammar(tmp_path):
    p = tmp_path / "empty.pl"
    p.write_text("% no principles\n")
    return str(p)


class TestValidate:
    def test_signature_a(self):
        code, out = run("validate", "--signature", SIG_A)
        assert code == 0
        assert "types: 7" in out and "  f: a" in out
        assert out.strip().endswith("deranged: a (2 safe products)")

    def test_signature_b(self):
        code, out = run("validate", "--signature", SIG_B)
        assert code == 0 and "deranged: none" in out

    def test_duplicate_introducer(self, tmp_path, capsys):
        bad = tmp_path / "bad.sig"
        bad.write_text("bot sub [t1, t2, u]. t1 intro [h:u]. t2 intro [h:u].")
        assert run("validate", "--signature", str(bad))[0] == 2
        assert "unique introducer" in capsys.readouterr().err

    def test_syntax_error_position(self, tmp_path, capsys):
        bad = tmp_path / "bad.sig"
        bad.write_text("bot sub [a].\na sub b.\n")
        assert run("validate", "--signature", str(bad))[0] == 2
        assert "line 2" in capsys.readouterr().err


class TestCompile:
    def test_dump_golden(self):
        code, out = run("compile", "--signature", SIG_B, "--grammar", FINITENESS, "--dump")
        assert code == 0
        assert out == (GOLDEN / "finiteness.dump").read_text()

    def test_empty_grammar(self, empty_grammar):
        assert run("compile", "--signature", SIG_B, "--grammar", empty_grammar, "--dump") == (0, "")

    def test_antecedent_variable(self, tmp_path, capsys):
        g = tmp_path / "g.pl"
        g.write_text("f:X ==> g:X.\n")
        assert run("compile", "--signature", SIG_A, "--grammar", str(g), "--dump")[0] == 2
        assert "shared/antecedent variables unsupported" in capsys.readouterr().err

    def test_dropped_principle_warns(self, tmp_path, capsys):
        g = tmp_path / "g.pl"
        g.write_text("(plus, minus) ==> a.\n")
        assert run("compile", "--signature", SIG_A, "--grammar", str(g), "--dump")[0] == 0
        assert "principle dropped" in capsys.readouterr().err

    def test_cache_written_and_invalidated(self, tmp_path):
        g = tmp_path / "g.pl"
        g.write_text("verb ==> vform:bse.\n")
        cache = tmp_path / "g.json"
        assert run("compile", "--signature", SIG_B, "--grammar", str(g), "--output", str(cache))[0] == 0
        data = json.loads(cache.read_text())
        assert data["version"] == 1 and len(data["hash"]) == 64
        code, out = run("query", "--signature", SIG_B, "--grammar", str(g), "--cache", str(cache),
                        "synsem:loc:cat:head:verb")
        assert code == 0 and "vform:bse" in out
        g.write_text("% principle removed\n")
        code, out = run("query", "--signature", SIG_B, "--grammar", str(g), "--cache", str(cache),
                        "synsem:loc:cat:head:verb")
        assert code == 0 and "vform:bse" not in out


class TestQuery:
    def test_finiteness(self):
        code, out = run("query", "--signature", SIG_B, "--grammar", FINITENESS,
                        "synsem:loc:cat:(head:verb, marking:fin)")
        assert code == 0
        assert out.count("answer ") == 1 and "vform:bse" in out and "residue: 0" in out

    def test_unsatisfiable(self, empty_grammar):
        code, out = run("query", "--signature", SIG_A, "--grammar", empty_grammar, "f:X, g:X")
        assert code == 1 and "no answers" in out

    def test_maximize(self):
        code, out = run("query", "--signature", SIG_B, "--grammar", FINITENESS,
                        "synsem:loc:cat:head:verb", "--maximize")
        assert code == 0 and out.count("answer ") == 2
        assert "marking:fin" in out and "marking:unmarked" in out

    def test_parse_error(self, empty_grammar, capsys):
        assert run("query", "--signature", SIG_A, "--grammar", empty_grammar, "f:(plus")[0] == 2
        assert "error" in capsys.readouterr().err

    def test_bound_exceeded(self):
        code, _ = run("query", "--signature", SIG_B, "--grammar", FINITENESS,
                      "synsem:loc:cat:head:verb", "--maximize", "--extension-depth", "1")
        assert code == 3

    def test_json_round_trip(self, empty_grammar):
        code, out = run("query", "--signature", SIG_A, "--grammar", empty_grammar,
                        "(f:plus ; a)", "--json")
        assert code == 0
        answers = json.loads(out)
        assert [a["residue"] for a in answers] == [0, 1]
        assert set(answers[0]) == {"type", "features", "tags", "residue"}
        sig = signature_a()
        assert from_json(sig, answers[0]).isomorphic(parse_avm(sig, "a[f:plus, g:minus]"))

    def test_trace_on_stderr(self, capsys):
        main(["query", "--signature", SIG_B, "--grammar", FINITENESS,
              "synsem:loc:cat:head:verb", "--trace"], io.StringIO())
        assert "suspend s0 typewhen(verb)" in capsys.readouterr().err

    @pytest.mark.parametrize("desc", ["a", "f:plus", "(f:X, g:X)", "plus ; a", "g:minus ; f:minus", "bot"])
    def test_maximize_matches_oracle(self, empty_grammar, desc):
        _, q = run("query", "--signature", SIG_A, "--grammar", empty_grammar, desc,
                   "--maximize", "--limit", "1000")
        _, o = run("oracle", "--signature", SIG_A, desc)
        answers = {line.split(": ", 1)[1] for line in q.splitlines() if line.startswith("answer ")}
        oracle = set(o.splitlines()[:-1])
        assert answers == oracle


class TestOracle:
    @pytest.mark.parametrize("desc, count", [("a", 2), ("(f:X, g:X)", 0), ("plus", 1)])
    def test_counts(self, desc, count):
        code, out = run("oracle", "--signature", SIG_A, desc)
        assert code == 0
        assert out.splitlines()[-1].split()[0] == str(count)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tfsc", "validate", "--signature", SIG_A],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "deranged: a" in proc.stdout
