"""Runtime: constraint store, wake-ups, SLD resolution and maximisation.

One :class:`Engine` is one unit of work: it owns a graph, the suspension
store and the trail they share.  All search is done with generators; a
generator leaves its changes in place while the consumer holds a solution
and undoes them before producing the next one.

Compiled constraints are universally quantified: whenever a node's type
reaches a constraint's trigger type the program is posted on that node,
once per (constraint, node) pair.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterator

from .compiler import (Both, CallRel, Choice, CompiledGrammar, Done, Fail, Farg,
                       GoalIR, IdentWhen, IneqSlots, OnceGuard, Seq, TypeWhen,
                       UnifySlotDesc, Compiler)
from .desclang import Description, Goal, GrammarError
from .satisfier import unify_with_desc
from .signature import BOT
from .tfs import FeatureStructure, Graph, iter_paths, subsumes

sys.setrecursionlimit(max(sys.getrecursionlimit(), 20000))

SUSPENDED, FIRED, DISMISSED = "suspended", "fired", "dismissed"


@dataclass
class QueryConfig:
    maximize: bool = False
    extension_depth: int = 64
    sld_depth: int = 200
    answer_limit: int = 100
    cover: bool = True

    def __post_init__(self):
        for name in ("extension_depth", "sld_depth", "answer_limit"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Suspension:
    id: int
    kind: str          # 'typewhen', 'identwhen' or 'cover'
    watched: tuple
    payload: object    # type name, other node, or deranged type
    body: GoalIR | None = None
    env: dict | None = field(default=None, compare=False)


@dataclass
class Answer:
    fs: FeatureStructure
    residue: list[str]


@dataclass
class QueryResult:
    answers: list[Answer]
    truncated: bool = False
    depth_exceeded: bool = False

    @property
    def bound_exceeded(self) -> bool:
        return self.truncated or self.depth_exceeded


class Engine:
    def __init__(self, grammar: CompiledGrammar, config: QueryConfig | None = None,
                 trace: Callable[[str], None] | None = None):
        self.grammar = grammar
        self.sig = grammar.sig
        self.config = config or QueryConfig()
        self.graph = Graph(self.sig)
        self.trace = trace
        self.susp: list[Suspension] = []
        self.status: dict[int, str] = {}
        self.watch: dict[int, list[int]] = {}
        self.posted: dict[int, frozenset] = {}
        self.cells: dict[tuple, bool] = {}
        self.agenda: list[tuple] = []
        self.head = {"next": 0}
        self.patterns: dict[str, FeatureStructure] = {}
        self.postings = itertools.count(1)
        self.truncated = False
        self.depth_exceeded = False
        self.cover_rules = grammar.cover if self.config.cover else {}

    def log(self, line: str) -> None:
        if self.trace is not None:
            self.trace(line)

    # -- unification with wake-up ---------------------------------------------

    def unify(self, x: int, y: int) -> Iterator[None]:
        g = self.graph
        mark = g.mark()
        if not g.unify(x, y):
            self.log(f"fail unify n{g.find(x)} n{g.find(y)}")
            return
        yield from self._propagate()
        g.undo(mark)

    def _propagate(self) -> Iterator[None]:
        self._collect()
        nxt = self.head["next"]
        if nxt >= len(self.agenda):
            yield
            return
        item = self.agenda[nxt]
        self.graph.tset(self.head, "next", nxt + 1)
        for _ in self._execute(item):
            yield from self._propagate()

    def _schedule(self, item: tuple) -> None:
        self.graph.tappend(self.agenda, item)

    def _collect(self) -> None:
        g = self.graph
        if not g.events:
            return
        events, g.events = g.events, []
        touched: dict[int, None] = {}
        size = len(g.parent)
        for ev in events:
            if ev[0] == "bind":
                kept, merged = ev[1], ev[2]
                if kept >= size or merged >= size:
                    continue
                self._merge_store(g.find(kept), merged)
                touched[g.find(kept)] = None
            else:
                n = ev[-1]
                if n < size:
                    touched[g.find(n)] = None
        woken: set[int] = set()
        for rep in touched:
            for sid in self.watch.get(rep, ()):
                if self.status[sid] == SUSPENDED:
                    woken.add(sid)
        for sid in sorted(woken):
            self._schedule(("wake", sid))
        for rep in touched:
            self._post_triggers(rep)

    def _merge_store(self, kept: int, merged: int) -> None:
        g = self.graph
        if merged in self.watch:
            for sid in self.watch[merged]:
                self._watch(kept, sid)
        if merged in self.posted:
            both = self.posted.get(kept, frozenset()) | self.posted[merged]
            g.tset(self.posted, kept, both)

    def _watch(self, rep: int, sid: int) -> None:
        if rep not in self.watch:
            self.graph.tset(self.watch, rep, [sid])
        elif sid not in self.watch[rep]:
            self.graph.tappend(self.watch[rep], sid)

    def _post_triggers(self, rep: int) -> None:
        g, sig = self.graph, self.sig
        t = g.types[rep]
        done = self.posted.get(rep, frozenset())
        new = []
        for i, c in enumerate(self.grammar.constraints):
            if i not in done and sig.leq(c.trigger, t):
                new.append(i)
                self._schedule(("post", i, rep))
        if t in self.cover_rules and ("cover", t) not in done:
            new.append(("cover", t))
            self._schedule(("cover", t, rep))
        if new:
            g.tset(self.posted, rep, done | frozenset(new))

    # -- agenda items -----------------------------------------------------------

    def _execute(self, item: tuple) -> Iterator[None]:
        kind = item[0]
        if kind == "post":
            _, i, rep = item
            c = self.grammar.constraints[i]
            self.log(f"post c{i + 1} n{self.graph.find(rep)}")
            env = {c.root_slot: rep, "$$post": next(self.postings)}
            for _ in self.run(c.program, env):
                yield
        elif kind == "cover":
            _, t, rep = item
            if self.graph.type_of(rep) != t:
                yield
                return
            rule = self.cover_rules[t]
            watched = (rep,) + tuple(self.graph.value(rep, f) for f in rule.features)
            sid = self._suspend("cover", watched, t, None, {"$$root": rep})
            yield from self._cover(sid)
        elif kind == "wake":
            yield from self._wake(item[1])
        else:
            raise ValueError(f"unknown agenda item {item!r}")

    def _suspend(self, kind, watched, payload, body, env) -> int:
        g = self.graph
        sid = len(self.susp)
        g.tappend(self.susp, Suspension(sid, kind, tuple(watched), payload, body, env))
        g.tset(self.status, sid, SUSPENDED)
        for w in watched:
            self._watch(g.find(w), sid)
        self.log(f"suspend s{sid} {kind}({payload}) on "
                 + " ".join(f"n{g.find(w)}" for w in watched))
        return sid

    def _set_status(self, sid: int, status: str) -> None:
        self.graph.tset(self.status, sid, status)
        self.log(f"{'fire' if status == FIRED else 'dismiss'} s{sid}")

    def _wake(self, sid: int) -> Iterator[None]:
        if self.status[sid] != SUSPENDED:
            yield
            return
        s = self.susp[sid]
        self.log(f"wake s{sid}")
        if s.kind == "cover":
            yield from self._cover(sid)
            return
        if s.kind == "typewhen":
            state = self._typewhen_state(s.payload, s.watched[0])
        else:
            state = self._ident_state(s.watched[0], s.watched[1])
        if state == "fire":
            self._set_status(sid, FIRED)
            for _ in self.run(s.body, s.env):
                yield
        else:
            if state == "dismiss":
                self._set_status(sid, DISMISSED)
            yield

    def _pattern(self, t: str) -> FeatureStructure:
        if t not in self.patterns:
            self.patterns[t] = FeatureStructure.of_type(self.sig, t)
        return self.patterns[t]

    def _typewhen_state(self, t: str, node: int) -> str:
        g = self.graph
        rep = g.find(node)
        if subsumes(self._pattern(t), FeatureStructure(g, rep)):
            return "fire"
        if self.sig.join(g.types[rep], t) is None:
            return "dismiss"
        return "wait"

    def _trial(self, pairs) -> bool:
        """Whether all pairs unify structurally; leaves no trace."""
        g = self.graph
        mark, nevents = g.mark(), len(g.events)
        ok = True
        for x, y in pairs:
            x = x if isinstance(x, int) else g.new_node(x)
            y = y if isinstance(y, int) else g.new_node(y)
            if not g.unify(x, y):
                ok = False
                break
        g.undo(mark)
        del g.events[nevents:]
        return ok

    def _ident_state(self, a: int, b: int) -> str:
        g = self.graph
        if g.find(a) == g.find(b):
            return "fire"
        if not self._trial([(a, b)]):
            return "dismiss"
        return "wait"

    # -- subtype covering -------------------------------------------------------

    def cover_verdict(self, t: str, root: int):
        """Classify a covering check: ('dismissed'|'failure'|'extend'|'resuspended', products)."""
        g, sig = self.graph, self.sig
        rep = g.find(root)
        if g.types[rep] != t:
            return "dismissed", []
        rule = self.cover_rules[t]
        values = [g.value(rep, f) for f in rule.features]
        for prod in rule.products:
            if all(sig.leq(p, g.types[v]) for p, v in zip(prod, values)):
                return "dismissed", [prod]
        consistent = [prod for prod in rule.products if self._trial(list(zip(values, prod)))]
        if not consistent:
            return "failure", []
        if len(consistent) == 1:
            return "extend", consistent
        return "resuspended", consistent

    def _cover(self, sid: int) -> Iterator[None]:
        s = self.susp[sid]
        root = s.watched[0]
        verdict, prods = self.cover_verdict(s.payload, root)
        if verdict == "dismissed":
            self._set_status(sid, DISMISSED)
            yield
        elif verdict == "failure":
            self.log(f"fail s{sid} cover({s.payload}) has no maximal extension")
        elif verdict == "extend":
            self._set_status(sid, FIRED)
            g = self.graph
            rule = self.cover_rules[s.payload]
            values = [g.value(root, f) for f in rule.features]
            mark = g.mark()
            pairs = [(v, g.new_node(p)) for v, p in zip(values, prods[0])]
            yield from self._unify_all(pairs)
            g.undo(mark)
        else:
            yield

    def _unify_all(self, pairs) -> Iterator[None]:
        if not pairs:
            yield
            return
        (x, y), rest = pairs[0], pairs[1:]
        for _ in self.unify(x, y):
            yield from self._unify_all(rest)

    # -- program execution ------------------------------------------------------

    def _node(self, env: dict, name: str) -> tuple[dict, int]:
        if name in env:
            return env, env[name]
        n = self.graph.new_node(BOT)
        return {**env, name: n}, n

    def run(self, ir: GoalIR, env: dict) -> Iterator[dict]:
        """Execute goal IR; yields the environment of each solution."""
        g = self.graph
        if isinstance(ir, Done):
            yield env
        elif isinstance(ir, Fail):
            return
        elif isinstance(ir, Seq) or isinstance(ir, Both):
            first, second = (ir.first, ir.second) if isinstance(ir, Seq) else (ir.left, ir.right)
            for e in self.run(first, env):
                yield from self.run(second, e)
        elif isinstance(ir, Choice):
            yield from self.run(ir.left, env)
            yield from self.run(ir.right, env)
        elif isinstance(ir, TypeWhen):
            mark = g.mark()
            env2, node = self._node(env, ir.slot)
            state = self._typewhen_state(ir.type, node)
            if state == "fire":
                yield from self.run(ir.body, env2)
            elif state == "dismiss":
                self.log(f"dismiss typewhen({ir.type}) n{g.find(node)}")
                yield env2
            else:
                self._suspend("typewhen", (node,), ir.type, ir.body, env2)
                yield env2
            g.undo(mark)
        elif isinstance(ir, Farg):
            node = env[ir.slot]
            value = g.value(node, ir.feature)
            if value is None:
                wait = TypeWhen(self.sig.intro[ir.feature], ir.slot, ir)
                yield from self.run(wait, env)
            else:
                yield from self.run(ir.body, {**env, ir.new_slot: value})
        elif isinstance(ir, IdentWhen):
            mark = g.mark()
            env2, a = self._node(env, ir.slot)
            env2, b = self._node(env2, ir.other)
            state = self._ident_state(a, b)
            if state == "fire":
                yield from self.run(ir.body, env2)
            else:
                if state == "wait":
                    self._suspend("identwhen", (a, b), ir.other, ir.body, env2)
                yield env2
            g.undo(mark)
        elif isinstance(ir, OnceGuard):
            key = (env.get("$$post"), ir.cell)
            if key in self.cells:
                yield env
                return
            mark = g.mark()
            g.tset(self.cells, key, True)
            self.log(f"once {ir.cell} p{key[0]}")
            yield from self.run(ir.body, env)
            g.undo(mark)
        elif isinstance(ir, UnifySlotDesc):
            mark = g.mark()
            env2, node = self._node(env, ir.slot)
            yield from unify_with_desc(self, node, ir.desc, env2)
            g.undo(mark)
        elif isinstance(ir, CallRel):
            yield from self._call(ir, env)
        elif isinstance(ir, IneqSlots):
            mark = g.mark()
            env2, a = self._node(env, ir.left)
            env2, b = self._node(env2, ir.right)
            if g.add_inequation(a, b):
                yield env2
            g.undo(mark)
        else:
            raise TypeError(f"not goal IR: {ir!r}")

    def _call(self, ir: CallRel, env: dict) -> Iterator[dict]:
        depth = env.get("$$depth", 0)
        if depth >= self.config.sld_depth:
            self.depth_exceeded = True
            self.log(f"fail call {ir.relation}: depth bound {self.config.sld_depth} exceeded")
            return
        clauses = self.grammar.relations.get(ir.relation)
        if clauses is None:
            raise GrammarError(f"undefined relation {ir.relation}/{len(ir.args)}")
        g = self.graph
        self.log(f"call {ir.relation} depth {depth + 1}")
        mark = g.mark()
        args = [g.new_node(BOT) for _ in ir.args]
        for caller_env in self._bind_args(args, ir.args, env):
            for formals, body in clauses:
                callee = {"$$depth": depth + 1, "$$post": next(self.postings)}
                for callee_env in self._bind_args(args, formals, callee):
                    for _ in self.run(body, callee_env):
                        yield caller_env
        g.undo(mark)

    def _bind_args(self, nodes, descs, env) -> Iterator[dict]:
        if not nodes:
            yield env
            return
        for e in unify_with_desc(self, nodes[0], descs[0], env):
            yield from self._bind_args(nodes[1:], descs[1:], e)

    # -- entry points ---------------------------------------------------------

    def post(self, program: GoalIR, root: int, root_slot: str = "$X") -> Iterator[dict]:
        env = {root_slot: root, "$$post": next(self.postings)}
        for e in self.run(program, env):
            for _ in self._propagate():
                yield e

    def solve(self, d: Description) -> Iterator[int]:
        g = self.graph
        mark = g.mark()
        root = g.new_node(BOT)
        for _ in self._propagate():
            for _ in unify_with_desc(self, root, d, {"$$post": next(self.postings)}):
                yield root
        g.undo(mark)

    def solve_goal(self, goal: Goal) -> Iterator[dict]:
        ir = Compiler(self.sig).compile_goal(goal)
        for env in self.run(ir, {"$$post": next(self.postings)}):
            for _ in self._propagate():
                yield env

    def load(self, fs: FeatureStructure) -> Iterator[int]:
        """Copy *fs* into this engine and apply every constraint to it."""
        g = self.graph
        mark = g.mark()
        src = fs.copy().graph
        base = len(g.parent)
        for i in range(len(src.parent)):
            g.tappend(g.parent, base + i)
            g.tappend(g.types, src.types[i])
            g.tappend(g.feats, {f: base + v for f, v in src.feats[i].items()})
            g.events.append(("new", base + i))
        for a, b in src.ineqs:
            g.tappend(g.ineqs, (base + a, base + b))
        for _ in self._propagate():
            yield base
        g.undo(mark)

    def residual(self, root: int | None = None) -> list[Suspension]:
        g = self.graph
        live = [s for s in self.susp if self.status[s.id] == SUSPENDED]
        if root is None:
            return live
        reach = set(g.reachable(root))
        return [s for s in live if any(g.find(w) in reach for w in s.watched)]

    def describe(self, s: Suspension, root: int) -> str:
        paths = {n: p for p, n in iter_paths(FeatureStructure(self.graph, root))}
        where = ", ".join(paths.get(self.graph.find(w), "?") or "<root>" for w in s.watched)
        return f"{s.kind}({s.payload}) on {where}"

    def maximize(self, root: int, depth: int = 0) -> Iterator[None]:
        """Promote nodes through immediate subtypes until every node is maximal.

        Nodes watched by residual suspensions are promoted first (in
        suspension order), then the remaining reachable nodes in canonical
        order.  Suspensions fire or are dismissed as promotions land.
        """
        g, sig = self.graph, self.sig
        order: dict[int, None] = {}
        for s in self.residual(root):
            for w in s.watched:
                order[g.find(w)] = None
        for n in g.reachable(root):
            order[n] = None
        pending = [n for n in order if not sig.is_maximal(g.types[n])]
        if not pending:
            yield
            return
        if depth >= self.config.extension_depth:
            self.truncated = True
            self.log("maximize: extension depth bound exceeded")
            return
        node = pending[0]
        for sub in sig.subtypes[g.types[node]]:
            mark = g.mark()
            self.log(f"maximize n{node} -> {sub}")
            for _ in self.unify(node, g.new_node(sub)):
                yield from self.maximize(root, depth + 1)
            g.undo(mark)


def _collect_answers(engine: Engine, roots: Iterator[int]) -> QueryResult:
    cfg = engine.config
    answers: list[Answer] = []
    keys: set = set()

    def emit(root: int) -> bool:
        fs = FeatureStructure(engine.graph, root).copy()
        if cfg.maximize:
            k = fs.key()
            if k in keys:
                return True
            keys.add(k)
        residue = [engine.describe(s, root) for s in engine.residual(root)]
        answers.append(Answer(fs, residue))
        return len(answers) < cfg.answer_limit

    for root in roots:
        if cfg.maximize:
            stop = False
            for _ in engine.maximize(root):
                if not emit(root):
                    stop = True
                    break
            if stop:
                break
        elif not emit(root):
            break
    return QueryResult(answers, engine.truncated, engine.depth_exceeded)


def solve_query(grammar: CompiledGrammar, d: Description, config: QueryConfig | None = None,
                trace: Callable[[str], None] | None = None) -> QueryResult:
    engine = Engine(grammar, config, trace)
    return _collect_answers(engine, engine.solve(d))


def maximize(grammar: CompiledGrammar, fs: FeatureStructure, config: QueryConfig | None = None,
             trace: Callable[[str], None] | None = None) -> QueryResult:
    """Fully resolve a structure: apply the grammar to it, then maximise."""
    config = config or QueryConfig()
    config = QueryConfig(True, config.extension_depth, config.sld_depth,
                         config.answer_limit, config.cover)
    engine = Engine(grammar, config, trace)
    return _collect_answers(engine, engine.load(fs))


def apply_grammar(grammar: CompiledGrammar, fs: FeatureStructure,
                  config: QueryConfig | None = None) -> QueryResult:
    """Every solution of applying the grammar's constraints to *fs*."""
    engine = Engine(grammar, config)
    return _collect_answers(engine, engine.load(fs))


def sld_resolve(grammar: CompiledGrammar, goal: Goal, config: QueryConfig | None = None
                ) -> tuple[list[dict[str, FeatureStructure]], bool]:
    """Solve a relational goal; returns (variable bindings per answer, depth_exceeded)."""
    engine = Engine(grammar, config)
    out = []
    for env in engine.solve_goal(goal):
        out.append({k: FeatureStructure(engine.graph, v).copy()
                    for k, v in env.items() if not k.startswith("$")})
        if len(out) >= engine.config.answer_limit:
            break
    return out, engine.depth_exceeded
