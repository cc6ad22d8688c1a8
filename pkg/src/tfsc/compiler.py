"""Compile principles into trigger-keyed suspension programs.

A principle ``A ==> C goal R`` becomes a program posted on every node whose
type reaches ``trigger(A)``.  The program waits (``typewhen``) until the
node is subsumed by the antecedent and then applies the consequent.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field
from typing import Union

from . import desclang as dl
from .desclang import (And, AtomicCond, CondAnd, CondOr, Description, Feat, Or,
                       Principle, RelationClause, Type, Var, format_arg,
                       parse_description, vars_of)
from .signature import BOT, DerangementReport, TypeSignature
from .tfs import FeatureStructure

ROOT_SLOT = "$X"


# -- goal IR ------------------------------------------------------------------

@dataclass(frozen=True)
class Done:
    pass


@dataclass(frozen=True)
class Fail:
    pass


@dataclass(frozen=True)
class TypeWhen:
    type: str
    slot: str
    body: "GoalIR"


@dataclass(frozen=True)
class Farg:
    feature: str
    slot: str
    new_slot: str
    body: "GoalIR"


@dataclass(frozen=True)
class IdentWhen:
    slot: str
    other: str
    body: "GoalIR"


@dataclass(frozen=True)
class OnceGuard:
    cell: int
    body: "GoalIR"


@dataclass(frozen=True)
class UnifySlotDesc:
    slot: str
    desc: Description


@dataclass(frozen=True)
class Seq:
    first: "GoalIR"
    second: "GoalIR"


@dataclass(frozen=True)
class Both:
    left: "GoalIR"
    right: "GoalIR"


@dataclass(frozen=True)
class Choice:
    left: "GoalIR"
    right: "GoalIR"


@dataclass(frozen=True)
class CallRel:
    relation: str
    args: tuple


@dataclass(frozen=True)
class IneqSlots:
    left: str
    right: str


GoalIR = Union[Done, Fail, TypeWhen, Farg, IdentWhen, OnceGuard, UnifySlotDesc,
               Seq, Both, Choice, CallRel, IneqSlots]


@dataclass(frozen=True)
class CompiledConstraint:
    trigger: str
    program: GoalIR
    root_slot: str = ROOT_SLOT
    source: str = ""


@dataclass(frozen=True)
class SubtypeCoverRule:
    type: str
    features: tuple
    products: tuple

    def display(self, sig: TypeSignature) -> list[str]:
        t = self.type
        lines = [f"subtype_cover({t}, FS) <=> true & (type_index(FS, T), T \\== {t}) | true."]
        for prod in self.products:
            kids = ", ".join(str(FeatureStructure.of_type(sig, p).encode()) for p in prod)
            lines.append(f"subtype_cover({t}, {t}({kids}, _)) <=> true.")
        lines.append(f"subtype_cover({t}, FS) <=> true & stc_unify_test({t}, FS, N)"
                     f" | (N == 0 -> fail ; stc_unify_product({t}, FS)).")
        return lines


@dataclass
class CompiledGrammar:
    sig: TypeSignature
    constraints: list[CompiledConstraint] = field(default_factory=list)
    relations: dict = field(default_factory=dict)  # name -> [(args, body IR)]
    cover: dict = field(default_factory=dict)      # deranged type -> SubtypeCoverRule
    warnings: list[str] = field(default_factory=list)


# -- trigger ------------------------------------------------------------------

def trigger(sig: TypeSignature, d: Description) -> str | None:
    """The most specific type every satisfier of *d* must have at its root.

    None means the description is unsatisfiable at the type level.
    """
    if isinstance(d, Var):
        return BOT
    if isinstance(d, Type):
        return d.name
    if isinstance(d, Feat):
        return sig.intro[d.feature]
    left, right = trigger(sig, d.left), trigger(sig, d.right)
    if isinstance(d, And):
        if left is None or right is None:
            return None
        return sig.join(left, right)
    if left is None:
        return right
    if right is None:
        return left
    return sig.meet(left, right)


# -- reduction ----------------------------------------------------------------

def dnf(d: Description) -> list[Description]:
    """Disjunction-free alternatives of *d*, left to right."""
    if isinstance(d, (Var, Type)):
        return [d]
    if isinstance(d, Feat):
        return [Feat(d.feature, x) for x in dnf(d.value)]
    if isinstance(d, And):
        return [And(x, y) for x in dnf(d.left) for y in dnf(d.right)]
    return dnf(d.left) + dnf(d.right)


def cond_vars(c) -> set[str]:
    if isinstance(c, AtomicCond):
        return {c.var, *vars_of(c.desc)}
    return cond_vars(c.left) | cond_vars(c.right)


class Compiler:
    def __init__(self, sig: TypeSignature):
        self.sig = sig
        self.cells = itertools.count(1)
        self.slots: dict[str, int] = {}
        self.warnings: list[str] = []

    def fresh_slot(self, feature: str) -> str:
        base = "$" + "".join(p.capitalize() for p in feature.split("_")) + "Val"
        n = self.slots.get(base, 0) + 1
        self.slots[base] = n
        return base if n == 1 else f"{base}{n}"

    def reduce(self, c, goal: GoalIR, seen: frozenset = frozenset()) -> GoalIR:
        if isinstance(c, CondAnd):
            inner = self.reduce(c.right, goal, seen | cond_vars(c.left))
            return self.reduce(c.left, inner, seen)
        if isinstance(c, CondOr):
            cell = next(self.cells)
            return Both(self.reduce(c.left, OnceGuard(cell, goal), seen),
                        self.reduce(c.right, OnceGuard(cell, goal), seen))
        alternatives = dnf(c.desc)
        if len(alternatives) > 1:
            lifted = AtomicCond(c.var, alternatives[0])
            for alt in alternatives[1:]:
                lifted = CondOr(lifted, AtomicCond(c.var, alt))
            return self.reduce(lifted, goal, seen)
        return self.desc_reduce(c.desc, c.var, goal, seen | {c.var})

    def desc_reduce(self, d: Description, slot: str, goal: GoalIR,
                    seen: frozenset = frozenset()) -> GoalIR:
        if isinstance(d, Var):
            if d.name in seen:
                return IdentWhen(slot, d.name, goal)
            return Seq(UnifySlotDesc(slot, d), goal)
        if isinstance(d, Type):
            return TypeWhen(d.name, slot, goal)
        if isinstance(d, Feat):
            new = self.fresh_slot(d.feature)
            return TypeWhen(self.sig.intro[d.feature], slot,
                            Farg(d.feature, slot, new, self.desc_reduce(d.value, new, goal, seen)))
        if isinstance(d, And):
            inner = self.desc_reduce(d.right, slot, goal, seen | set(vars_of(d.left)))
            return self.desc_reduce(d.left, slot, inner, seen)
        raise ValueError("desc_reduce needs a disjunction-free description")

    def compile_goal(self, g) -> GoalIR:
        if isinstance(g, dl.TrueGoal):
            return Done()
        if isinstance(g, dl.FailGoal):
            return Fail()
        if isinstance(g, dl.Conj):
            return _seq(self.compile_goal(g.left), self.compile_goal(g.right))
        if isinstance(g, dl.Disj):
            return Choice(self.compile_goal(g.left), self.compile_goal(g.right))
        if isinstance(g, dl.Call):
            return CallRel(g.relation, tuple(g.args))
        if isinstance(g, dl.UnifyDesc):
            return UnifySlotDesc(g.var, g.desc)
        if isinstance(g, dl.Ineq):
            return IneqSlots(g.left, g.right)
        if isinstance(g, dl.FsWhen):
            return self.reduce(g.cond, self.compile_goal(g.goal))
        raise TypeError(f"not a goal: {g!r}")

    def simplify(self, ir: GoalIR, static: dict[str, str] | None = None) -> GoalIR:
        """Drop typewhens already guaranteed by the statically known slot types."""
        sig = self.sig
        static = static or {}
        if isinstance(ir, TypeWhen):
            known = static.get(ir.slot, BOT)
            if sig.leq(ir.type, known):
                return self.simplify(ir.body, static)
            joined = sig.join(ir.type, known)
            if joined is None:
                self.warnings.append(
                    f"typewhen({ir.type}, {ir.slot}) never fires: slot is {known}")
                return Done()
            return TypeWhen(ir.type, ir.slot, self.simplify(ir.body, {**static, ir.slot: joined}))
        if isinstance(ir, Farg):
            value_type = sig.approp[static.get(ir.slot, BOT)].get(ir.feature, BOT)
            return Farg(ir.feature, ir.slot, ir.new_slot,
                        self.simplify(ir.body, {**static, ir.new_slot: value_type}))
        if isinstance(ir, IdentWhen):
            return IdentWhen(ir.slot, ir.other, self.simplify(ir.body, static))
        if isinstance(ir, OnceGuard):
            return OnceGuard(ir.cell, self.simplify(ir.body, static))
        if isinstance(ir, Seq):
            return _seq(self.simplify(ir.first, static), self.simplify(ir.second, static))
        if isinstance(ir, Both):
            left, right = self.simplify(ir.left, static), self.simplify(ir.right, static)
            if isinstance(left, Done):
                return right
            if isinstance(right, Done):
                return left
            return Both(left, right)
        if isinstance(ir, Choice):
            return Choice(self.simplify(ir.left, static), self.simplify(ir.right, static))
        if isinstance(ir, UnifySlotDesc) and isinstance(ir.desc, Type):
            if sig.leq(ir.desc.name, static.get(ir.slot, BOT)):
                return Done()
        return ir

    def compile_principle(self, p: Principle) -> CompiledConstraint | None:
        trig = trigger(self.sig, p.antecedent)
        source = dl.format_item(p)
        if trig is None:
            self.warnings.append(f"antecedent unsatisfiable; principle dropped: {source}")
            return None
        self.slots = {}
        body = _seq(UnifySlotDesc(ROOT_SLOT, p.consequent), self.compile_goal(p.goal))
        program = self.reduce(AtomicCond(ROOT_SLOT, p.antecedent), body)
        program = self.simplify(program, {ROOT_SLOT: trig})
        return CompiledConstraint(trig, program, ROOT_SLOT, source)


def _seq(a: GoalIR, b: GoalIR) -> GoalIR:
    if isinstance(a, Done):
        return b
    if isinstance(b, Done):
        return a
    return Seq(a, b)


def reduce(sig: TypeSignature, cond, goal: GoalIR) -> GoalIR:
    return Compiler(sig).reduce(cond, goal)


def desc_reduce(sig: TypeSignature, d: Description, slot: str, goal: GoalIR,
                seen=frozenset()) -> GoalIR:
    return Compiler(sig).desc_reduce(d, slot, goal, frozenset(seen))


def simplify(sig: TypeSignature, ir: GoalIR, static: dict | None = None) -> GoalIR:
    return Compiler(sig).simplify(ir, static)


def compile_principle(sig: TypeSignature, p: Principle) -> CompiledConstraint | None:
    return Compiler(sig).compile_principle(p)


def compile_subtype_cover(report: DerangementReport) -> dict[str, SubtypeCoverRule]:
    return {t: SubtypeCoverRule(t, report.features[t], tuple(sorted(report.safe_products[t])))
            for t in sorted(report.deranged)}


def compile_grammar(sig: TypeSignature, items, cover: bool = True) -> CompiledGrammar:
    """Resolve and compile parsed grammar items against *sig*."""
    comp = Compiler(sig)
    grammar = CompiledGrammar(sig)
    for item in items:
        if isinstance(item, Principle):
            dl.resolve(item.antecedent, sig)
            dl.resolve(item.consequent, sig)
            dl.resolve_goal(item.goal, sig)
            c = comp.compile_principle(item)
            if c is not None:
                grammar.constraints.append(c)
        elif isinstance(item, RelationClause):
            for a in item.args:
                dl.resolve(a, sig)
            dl.resolve_goal(item.body, sig)
            body = comp.simplify(comp.compile_goal(item.body))
            grammar.relations.setdefault(item.name, []).append((item.args, body))
    for item in items:
        body = item.body if isinstance(item, RelationClause) else item.goal
        for call in dl.calls_of(body):
            if call.relation not in grammar.relations:
                raise dl.GrammarError(f"line {item.line}: undefined relation "
                                      f"{call.relation}/{len(call.args)}")
    if cover:
        grammar.cover = compile_subtype_cover(sig.derangement_analysis())
    grammar.warnings = comp.warnings
    return grammar


# -- textual dump -------------------------------------------------------------

def dump_ir(ir: GoalIR, indent: int = 0) -> list[str]:
    pad = "  " * indent
    if isinstance(ir, Done):
        return [pad + "true"]
    if isinstance(ir, Fail):
        return [pad + "fail"]
    if isinstance(ir, TypeWhen):
        return [f"{pad}typewhen({ir.type}, {ir.slot})"] + dump_ir(ir.body, indent + 1)
    if isinstance(ir, Farg):
        return [f"{pad}farg({ir.feature}, {ir.slot}, {ir.new_slot})"] + dump_ir(ir.body, indent)
    if isinstance(ir, IdentWhen):
        return [f"{pad}identwhen({ir.slot}, {ir.other})"] + dump_ir(ir.body, indent + 1)
    if isinstance(ir, OnceGuard):
        return [f"{pad}once({ir.cell})"] + dump_ir(ir.body, indent + 1)
    if isinstance(ir, UnifySlotDesc):
        return [f"{pad}{ir.slot} = {format_arg(ir.desc)}"]
    if isinstance(ir, Seq):
        return dump_ir(ir.first, indent) + dump_ir(ir.second, indent)
    if isinstance(ir, (Both, Choice)):
        head, sep = ("both", "also") if isinstance(ir, Both) else ("choice", "or")
        return ([pad + head] + dump_ir(ir.left, indent + 1)
                + [pad + sep] + dump_ir(ir.right, indent + 1))
    if isinstance(ir, CallRel):
        args = ", ".join(format_arg(a) for a in ir.args)
        return [f"{pad}call({ir.relation}({args}))" if args else f"{pad}call({ir.relation})"]
    if isinstance(ir, IneqSlots):
        return [f"{pad}{ir.left} =\\= {ir.right}"]
    raise TypeError(f"not goal IR: {ir!r}")


def dump_grammar(grammar: CompiledGrammar) -> str:
    lines = []
    for i, c in enumerate(grammar.constraints, 1):
        lines.append(f"principle {i}: {c.source}")
        lines.append(f"trigger: {c.trigger}")
        lines.extend(dump_ir(c.program, 1))
    for name, clauses in grammar.relations.items():
        for args, body in clauses:
            head = f"{name}({', '.join(format_arg(a) for a in args)})" if args else name
            lines.append(f"relation {head}:")
            lines.extend(dump_ir(body, 1))
    for rule in grammar.cover.values():
        lines.extend(rule.display(grammar.sig))
    return "\n".join(lines)


# -- JSON (compiled-grammar cache) --------------------------------------------

_IR_CLASSES = {cls.__name__: cls for cls in
               (Done, Fail, TypeWhen, Farg, IdentWhen, OnceGuard, UnifySlotDesc,
                Seq, Both, Choice, CallRel, IneqSlots)}


def ir_to_json(ir: GoalIR):
    out = {"op": type(ir).__name__}
    for f in dataclasses.fields(ir):
        v = getattr(ir, f.name)
        if f.name == "desc":
            v = dl.format_desc(v)
        elif f.name == "args":
            v = [dl.format_desc(a) for a in v]
        elif dataclasses.is_dataclass(v):
            v = ir_to_json(v)
        out[f.name] = v
    return out


def ir_from_json(data) -> GoalIR:
    cls = _IR_CLASSES[data["op"]]
    kwargs = {}
    for f in dataclasses.fields(cls):
        v = data[f.name]
        if f.name == "desc":
            v = parse_description(v)
        elif f.name == "args":
            v = tuple(parse_description(a) for a in v)
        elif isinstance(v, dict):
            v = ir_from_json(v)
        kwargs[f.name] = v
    return cls(**kwargs)


def grammar_to_json(grammar: CompiledGrammar) -> dict:
    return {
        "constraints": [{"trigger": c.trigger, "root_slot": c.root_slot,
                         "source": c.source, "program": ir_to_json(c.program)}
                        for c in grammar.constraints],
        "relations": {name: [{"args": [dl.format_desc(a) for a in args],
                              "body": ir_to_json(body)} for args, body in clauses]
                      for name, clauses in grammar.relations.items()},
        "cover": [{"type": r.type, "features": list(r.features),
                   "products": [list(p) for p in r.products]} for r in grammar.cover.values()],
        "warnings": list(grammar.warnings),
    }


def grammar_from_json(sig: TypeSignature, data: dict) -> CompiledGrammar:
    g = CompiledGrammar(sig)
    g.constraints = [CompiledConstraint(c["trigger"], ir_from_json(c["program"]),
                                        c["root_slot"], c["source"])
                     for c in data["constraints"]]
    g.relations = {name: [(tuple(parse_description(a) for a in cl["args"]),
                           ir_from_json(cl["body"])) for cl in clauses]
                   for name, clauses in data["relations"].items()}
    g.cover = {r["type"]: SubtypeCoverRule(r["type"], tuple(r["features"]),
                                           tuple(tuple(p) for p in r["products"]))
               for r in data["cover"]}
    g.warnings = list(data["warnings"])
    return g
