"""Acceptance criteria, one test each.

Each test records a PASS/FAIL line, shown in pytest's terminal summary.
Running this file directly prints the same lines.
"""

import io
import itertools
import random
import time

import acceptance_report
from oracles import (
    GRAMMARS, brute_maximal_extensions, descriptions, enumerate_structures,
    interpret_principle, random_principles, signature_a, signature_b, state_hash,
)
from tfsc.cli import main
from tfsc.compiler import Farg, Seq, TypeWhen, UnifySlotDesc, compile_grammar, trigger
from tfsc.desclang import format_desc, parse_description, parse_goal, parse_grammar, resolve, resolve_goal
from tfsc.engine import Engine, QueryConfig, apply_grammar, solve_query
from tfsc.satisfier import satisfies
from tfsc.signature import load_signature
from tfsc.tfs import FeatureStructure, Graph, format_avm, maximal_extensions, parse_avm, subsumes


def check(number, title, limit=None):
    """Decorator: time the body, record a verdict line, then assert."""
    def wrap(body):
        def test():
            start = time.perf_counter()
            ok, detail = body()
            seconds = time.perf_counter() - start
            if limit is not None and seconds >= limit:
                ok, detail = False, f"{detail}; over the {limit:g}s limit"
            print(acceptance_report.record(number, title, ok, detail, seconds))
            assert ok, detail
        test.__name__ = body.__name__
        return test
    return wrap


def query(grammar, text, **cfg):
    return solve_query(grammar, resolve(parse_description(text), grammar.sig), QueryConfig(**cfg))


# -- 1 ------------------------------------------------------------------------

@check(1, "finiteness marking end to end")
def test_finiteness_end_to_end():
    sig = signature_b()
    grammar = compile_grammar(sig, parse_grammar((GRAMMARS / "finiteness.pl").read_text()))
    failures, slowest = [], 0.0
    cases = [("synsem:loc:cat:(head:verb, marking:fin)", "bse"),
             ("synsem:loc:cat:(head:verb, marking:unmarked)", "vform")]
    for text, vform in cases:
        start = time.perf_counter()
        answers = query(grammar, text).answers
        slowest = max(slowest, time.perf_counter() - start)
        if len(answers) != 1:
            failures.append(f"{text}: {len(answers)} answers")
            continue
        got = answers[0].fs.type_at("synsem:loc:cat:head:vform")
        if got != vform or answers[0].residue:
            failures.append(f"{text}: vform {got}, residue {answers[0].residue}")
    if slowest >= 1.0:
        failures.append(f"slowest query {slowest:.2f}s")
    return not failures, "; ".join(failures) or f"both queries correct, slowest {slowest * 1000:.1f}ms"


# -- 2 ------------------------------------------------------------------------

# The expected simplified program, with independently chosen slot names.
EXPECTED_PROGRAM = [
    ("farg", "synsem", "X", "SynVal"),
    ("farg", "loc", "SynVal", "LocVal"),
    ("farg", "cat", "LocVal", "CatVal"),
    ("farg", "head", "CatVal", "HdVal"),
    ("typewhen", "verb", "HdVal", [
        ("farg", "marking", "CatVal", "MkVal"),
        ("typewhen", "fin", "MkVal", [
            ("unify", "X", "synsem:loc:cat:head:vform:bse"),
        ]),
    ]),
]


def flatten(ir):
    """IR as a nested list of constructs, in the layout of EXPECTED_PROGRAM."""
    if isinstance(ir, Farg):
        return [("farg", ir.feature, ir.slot, ir.new_slot)] + flatten(ir.body)
    if isinstance(ir, TypeWhen):
        return [("typewhen", ir.type, ir.slot, flatten(ir.body))]
    if isinstance(ir, UnifySlotDesc):
        return [("unify", ir.slot, format_desc(ir.desc))]
    if isinstance(ir, Seq):
        return flatten(ir.first) + flatten(ir.second)
    return [(type(ir).__name__,)]


def same_up_to_slot_renaming(got, want, mapping):
    if len(got) != len(want):
        return False
    for g, w in zip(got, want):
        if len(g) != len(w) or g[0] != w[0]:
            return False
        if g[0] == "farg":
            pairs = [(g[2], w[2]), (g[3], w[3])]
            fixed = [(g[1], w[1])]
        elif g[0] == "typewhen":
            pairs, fixed = [(g[2], w[2])], [(g[1], w[1])]
        else:
            pairs, fixed = [(g[1], w[1])], [(g[2], w[2])]
        if any(a != b for a, b in fixed):
            return False
        for a, b in pairs:
            if mapping.setdefault(a, b) != b:
                return False
        if g[0] == "typewhen" and not same_up_to_slot_renaming(g[3], w[3], mapping):
            return False
    return len(set(mapping.values())) == len(mapping)


@check(2, "golden compile dump of the finiteness principle")
def test_golden_compile_dump():
    out = io.StringIO()
    code = main(["compile", "--signature", str(GRAMMARS / "sig_b.sig"),
                 "--grammar", str(GRAMMARS / "finiteness.pl"), "--dump"], out)
    sig = signature_b()
    grammar = compile_grammar(sig, parse_grammar((GRAMMARS / "finiteness.pl").read_text()))
    [c] = grammar.constraints
    structural = same_up_to_slot_renaming(flatten(c.program), EXPECTED_PROGRAM, {})
    listing = out.getvalue().splitlines()
    typewhens = [line.strip() for line in listing if line.strip().startswith("typewhen")]
    eliminated = [t for t in ("sign", "syntax_semantics", "local", "category")
                  if any(line.startswith(f"typewhen({t},") for line in typewhens)]
    ok = (code == 0 and c.trigger == "sign" and "trigger: sign" in listing and structural
          and len(typewhens) == 2 and not eliminated)
    detail = (f"{len(listing)} dump lines, {len(typewhens)} typewhens kept, "
              f"structure {'matches' if structural else 'differs'}")
    return ok, detail


# -- 3 ------------------------------------------------------------------------

@check(3, "subtype covering agrees with the maximal-extension oracle", limit=1.0)
def test_subtype_covering_vs_oracle():
    sig = signature_a()
    grammar = compile_grammar(sig, [])
    structures = enumerate_structures(sig, 2, root_types=["a"])
    problems, verdicts = [], {}
    for fs in structures:
        oracle = maximal_extensions(fs)
        keys = {e.key() for e in oracle}
        if keys != brute_maximal_extensions(fs):
            problems.append(f"oracle disagrees with brute force on {fs}")
        engine = Engine(grammar)
        root = parse_avm(sig, format_avm(fs), engine.graph).root
        verdict, _ = engine.cover_verdict("a", root)
        verdicts[verdict] = verdicts.get(verdict, 0) + 1
        answers = apply_grammar(grammar, fs).answers
        n = len(oracle)
        if n == 0:
            good = verdict == "failure" and not answers
        elif n == 1:
            good = (verdict in ("extend", "dismissed") and len(answers) == 1
                    and not answers[0].residue
                    and {e.key() for e in maximal_extensions(answers[0].fs)} == keys)
        else:
            good = (verdict == "resuspended" and len(answers) == 1
                    and answers[0].residue == ["cover(a) on <root>, f, g"]
                    and answers[0].fs.isomorphic(fs))
        if not good:
            problems.append(f"{fs}: oracle {n}, engine {verdict}")
    shared = parse_avm(sig, "a[f:#1=polarity, g:#1]")
    if not any(s.isomorphic(shared) for s in structures):
        problems.append("re-entrant case missing from the enumeration")
    detail = f"{len(structures)} structures, verdicts {dict(sorted(verdicts.items()))}"
    return not problems, "; ".join(problems[:3]) or detail


# -- 4 ------------------------------------------------------------------------

@check(4, "trigger soundness", limit=60.0)
def test_trigger_soundness():
    checked = satisfied = 0
    violations = []
    for sig in (signature_a(), signature_b()):
        structures = enumerate_structures(sig, 2)
        for d in descriptions(sig, max_depth=4, cap=5000, seed=0):
            t = trigger(sig, d)
            cache = {}
            for fs in structures:
                checked += 1
                if satisfies(fs, d, cache):
                    satisfied += 1
                    if t is None or not sig.leq(t, fs.type):
                        violations.append(f"{format_desc(d)} on {fs}")
    detail = f"{checked} pairs, {satisfied} satisfied, {len(violations)} violations"
    return not violations, detail


# -- 5 ------------------------------------------------------------------------

@check(5, "compiled principles agree with direct interpretation", limit=120.0)
def test_compiler_interpreter_equivalence():
    mismatches, outcomes, runs = [], {}, 0
    for sig, depth, seed in ((signature_a(), 2, 1), (signature_b(), 5, 2)):
        structures = enumerate_structures(sig, depth, maximal_only=True)
        for p in random_principles(sig, 250, seed=seed):
            grammar = compile_grammar(sig, [p])
            for fs in structures:
                runs += 1
                want = interpret_principle(p, fs)
                result = apply_grammar(grammar, fs, QueryConfig(answer_limit=1000))
                got = {a.fs.key() for a in result.answers}
                kind = "fail" if not want else "unchanged" if want == {fs.key()} else "refined"
                outcomes[kind] = outcomes.get(kind, 0) + 1
                if got != want:
                    mismatches.append(f"{format_desc(p.antecedent)} ==> "
                                      f"{format_desc(p.consequent)} on {fs}")
    detail = f"500 principles, {runs} runs, outcomes {dict(sorted(outcomes.items()))}"
    return not mismatches, "; ".join(mismatches[:3]) or detail


# -- 6 ------------------------------------------------------------------------

@check(6, "lattice and kernel laws")
def test_lattice_and_kernel_laws():
    sig = signature_a()
    problems = []
    ts = sorted(sig.types)
    for x, y in itertools.product(ts, ts):
        if sig.join(x, y) != sig.join(y, x) or sig.meet(x, y) != sig.meet(y, x):
            problems.append(f"commutativity {x} {y}")
    for x in ts:
        if sig.join(x, x) != x or sig.meet(x, x) != x:
            problems.append(f"idempotence {x}")
    for x, y, z in itertools.product(ts, ts, ts):
        if sig.meet(sig.meet(x, y), z) != sig.meet(x, sig.meet(y, z)):
            problems.append(f"meet associativity {x} {y} {z}")
        xy, yz = sig.join(x, y), sig.join(y, z)
        if xy is not None and yz is not None and sig.join(xy, z) != sig.join(x, yz):
            problems.append(f"join associativity {x} {y} {z}")

    structures = enumerate_structures(sig, 2)
    pairs = 0
    for x, y in itertools.product(structures, structures):
        pairs += 1
        g = Graph(sig)
        a = parse_avm(sig, format_avm(x), g).root
        b = parse_avm(sig, format_avm(y), g).root
        uppers = [z for z in structures if subsumes(x, z) and subsumes(y, z)]
        if not g.unify(a, b):
            if uppers:
                problems.append(f"unify failed but {x} and {y} have an upper bound")
            continue
        u = FeatureStructure(g, a).copy()
        if not (subsumes(x, u) and subsumes(y, u) and all(subsumes(u, z) for z in uppers)):
            problems.append(f"unify of {x} and {y} is not the least upper bound")

    rng = random.Random(2024)
    failures = 0
    while failures < 1000:
        x, y = rng.choice(structures), rng.choice(structures)
        g = Graph(sig)
        a = parse_avm(sig, format_avm(x), g).root
        b = parse_avm(sig, format_avm(y), g).root
        nodes = g.reachable(a)
        if len(nodes) > 1 and rng.random() < 0.5:
            g.add_inequation(*rng.sample(nodes, 2))
        before = state_hash(g)
        if not g.unify(a, b):
            failures += 1
            if state_hash(g) != before:
                problems.append(f"trail not restored after failing {x} with {y}")
    detail = f"{len(ts)} types, {pairs} unification pairs, {failures} failed unifications restored"
    return not problems, "; ".join(problems[:3]) or detail


# -- 7 ------------------------------------------------------------------------

ONCE_SIG = """
bot sub [t, polarity].
polarity sub [plus, minus].
t intro [f:polarity, g:polarity].
"""
ONCE_GRAMMAR = """
(f:plus ; g:minus) ==> f:X goal mark(X).
mark(_).
"""


def guarded_runs(grammar, steps, via_goal=False):
    """Calls of the guarded goal after refining a fresh t node by *steps*."""
    lines = []
    engine = Engine(grammar, QueryConfig(cover=False), trace=lines.append)
    held = []
    if via_goal:
        goal = resolve_goal(parse_goal(
            "X = t, fswhen((X = f:plus ; X = g:minus), mark(X))"), grammar.sig)
        gen = engine.solve_goal(goal)
        root = next(gen)["X"]
    else:
        gen = engine.load(FeatureStructure.of_type(grammar.sig, "t"))
        root = next(gen)
    held.append(gen)
    fs = FeatureStructure(engine.graph, root)
    for path, t in steps:
        step = engine.unify(fs.node(path), engine.graph.new_node(t))
        next(step)
        held.append(step)
    return sum(line.startswith("call mark") for line in lines)


@check(7, "once-only disjunction")
def test_once_only_disjunction():
    sig = load_signature(ONCE_SIG)
    grammar = compile_grammar(sig, parse_grammar(ONCE_GRAMMAR))
    both = [("f", "plus"), ("g", "minus")]
    scenarios = {
        "f then g": (both, 1),
        "g then f": (both[::-1], 1),
        "f only": (both[:1], 1),
        "g only": (both[1:], 1),
        "neither": ([], 0),
        "disabled side": ([("f", "minus"), ("g", "plus")], 0),
    }
    # the goal form uses a grammar without the principle, so only fswhen can call mark
    relation_only = compile_grammar(sig, parse_grammar("mark(_)."))
    problems, runs = [], 0
    for via_goal in (False, True):
        for name, (steps, want) in scenarios.items():
            runs += 1
            got = guarded_runs(relation_only if via_goal else grammar, steps, via_goal)
            if got != want:
                problems.append(f"{name}{' (goal)' if via_goal else ''}: ran {got}x, want {want}")
    at_once = query(grammar, "f:plus, g:minus", cover=False).answers
    if len(at_once) != 1:
        problems.append(f"simultaneous satisfaction gave {len(at_once)} answers")
    return not problems, "; ".join(problems) or f"{runs + 1} interleavings"


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            try:
                fn()
            except AssertionError:
                pass
    for line in acceptance_report.lines():
        print(line)
