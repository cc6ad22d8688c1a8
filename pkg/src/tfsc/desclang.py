"""Surface syntax: signatures, descriptions, principles and relation clauses.

Descriptions use ``:`` for feature paths, ``,`` for conjunction and ``;``
for disjunction (tightest first).  Types and features are lowercase
identifiers, variables are capitalised (or start with ``_``).  Re-entrancy
is written with a repeated variable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)


class GrammarError(Exception):
    """A grammar that parses but is rejected (arity, antecedent variables...)."""


# -- descriptions -------------------------------------------------------------

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Type:
    name: str


@dataclass(frozen=True)
class Feat:
    feature: str
    value: "Description"


@dataclass(frozen=True)
class And:
    left: "Description"
    right: "Description"


@dataclass(frozen=True)
class Or:
    left: "Description"
    right: "Description"


Description = Union[Var, Type, Feat, And, Or]


# -- goals and conditionals ---------------------------------------------------

@dataclass(frozen=True)
class TrueGoal:
    pass


@dataclass(frozen=True)
class FailGoal:
    pass


@dataclass(frozen=True)
class Conj:
    left: "Goal"
    right: "Goal"


@dataclass(frozen=True)
class Disj:
    left: "Goal"
    right: "Goal"


@dataclass(frozen=True)
class Call:
    relation: str
    args: tuple = ()


@dataclass(frozen=True)
class UnifyDesc:
    var: str
    desc: Description


@dataclass(frozen=True)
class FsWhen:
    cond: "Conditional"
    goal: "Goal"


@dataclass(frozen=True)
class Ineq:
    left: str
    right: str


Goal = Union[TrueGoal, FailGoal, Conj, Disj, Call, UnifyDesc, FsWhen, Ineq]


@dataclass(frozen=True)
class AtomicCond:
    var: str
    desc: Description


@dataclass(frozen=True)
class CondAnd:
    left: "Conditional"
    right: "Conditional"


@dataclass(frozen=True)
class CondOr:
    left: "Conditional"
    right: "Conditional"


Conditional = Union[AtomicCond, CondAnd, CondOr]


@dataclass(frozen=True)
class Principle:
    antecedent: Description
    consequent: Description
    goal: Goal = TrueGoal()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RelationClause:
    name: str
    args: tuple
    body: Goal = TrueGoal()
    line: int = field(default=0, compare=False)

    @property
    def arity(self) -> int:
        return len(self.args)


# -- signature declarations ---------------------------------------------------

@dataclass
class TypeDecl:
    name: str
    subtypes: list[str]
    intro: list[tuple[str, str]]
    line: int = 0
    column: int = 0


# -- tokenizer ----------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<arrow>==>)
  | (?P<neq>=\\=)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[:,;()\[\]=.])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str  # 'var', 'atom', 'punct' or 'eof'
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        col = pos - line_start + 1
        if kind == "name":
            tokens.append(Token("var" if value[0].isupper() or value[0] == "_" else "atom",
                                value, line, col))
        elif kind in ("arrow", "neq", "punct"):
            tokens.append(Token("punct", value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, offset: int = 1) -> Token:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def error(self, message: str) -> ParseError:
        t = self.tok
        found = t.text or "end of input"
        return ParseError(f"{message} (found {found!r})", t.line, t.column)

    def at(self, text: str) -> bool:
        return self.tok.kind == "punct" and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise self.error(f"expected {what}")
        t = self.tok
        self.i += 1
        return t

    def at_keyword(self, word: str) -> bool:
        return self.tok.kind == "atom" and self.tok.text == word

    # descriptions

    def description(self) -> Description:
        d = self.conjunction()
        while self.accept(";"):
            d = Or(d, self.conjunction())
        return d

    def conjunction(self) -> Description:
        d = self.path()
        while self.accept(","):
            d = And(d, self.path())
        return d

    def path(self) -> Description:
        t = self.tok
        if t.kind == "var":
            self.i += 1
            return Var(t.text)
        if t.kind == "atom":
            self.i += 1
            if self.accept(":"):
                return Feat(t.text, self.path())
            return Type(t.text)
        if self.accept("("):
            d = self.description()
            self.expect(")")
            return d
        raise self.error("expected a description")

    # goals

    def goal(self) -> Goal:
        g = self.goal_conj()
        while self.accept(";"):
            g = Disj(g, self.goal_conj())
        return g

    def goal_conj(self) -> Goal:
        g = self.goal_atom()
        while self.accept(","):
            g = Conj(g, self.goal_atom())
        return g

    def goal_atom(self) -> Goal:
        t = self.tok
        if self.accept("("):
            g = self.goal()
            self.expect(")")
            return g
        if t.kind == "var":
            self.i += 1
            if self.accept("="):
                return UnifyDesc(t.text, self.path())
            if self.accept("=\\="):
                other = self.expect_kind("var", "a variable")
                return Ineq(t.text, other.text)
            raise self.error("expected '=' or '=\\=' after variable")
        if t.kind == "atom":
            self.i += 1
            if t.text == "true":
                return TrueGoal()
            if t.text == "fail":
                return FailGoal()
            if t.text == "fswhen":
                self.expect("(")
                cond = self.cond_disj(allow_comma=False)
                self.expect(",")
                body = self.goal()
                self.expect(")")
                return FsWhen(cond, body)
            return Call(t.text, self.arguments())
        raise self.error("expected a goal")

    def arguments(self) -> tuple:
        args = []
        if self.accept("("):
            args.append(self.path())
            while self.accept(","):
                args.append(self.path())
            self.expect(")")
        return tuple(args)

    def cond_disj(self, allow_comma: bool = True) -> Conditional:
        c = self.cond_conj(allow_comma)
        while self.accept(";"):
            c = CondOr(c, self.cond_conj(allow_comma))
        return c

    def cond_conj(self, allow_comma: bool) -> Conditional:
        c = self.cond_atom()
        while allow_comma and self.accept(","):
            c = CondAnd(c, self.cond_atom())
        return c

    def cond_atom(self) -> Conditional:
        if self.accept("("):
            c = self.cond_disj()
            self.expect(")")
            return c
        v = self.expect_kind("var", "a variable")
        self.expect("=")
        return AtomicCond(v.text, self.path())


def parse_description(text: str) -> Description:
    p = _Parser(text)
    d = p.description()
    if p.tok.kind != "eof":
        raise p.error("trailing input after description")
    return d


def parse_goal(text: str) -> Goal:
    p = _Parser(text)
    g = p.goal()
    if p.tok.kind != "eof":
        raise p.error("trailing input after goal")
    return g


def parse_signature(text: str) -> list[TypeDecl]:
    """Parse ``<type> sub [<t1>, ...] intro [<f>:<t>, ...].`` clauses."""
    p = _Parser(text)
    decls = []
    while p.tok.kind != "eof":
        head = p.expect_kind("atom", "a type name")
        decl = TypeDecl(head.text, [], [], head.line, head.column)
        if p.at_keyword("sub"):
            p.i += 1
            p.expect("[")
            if not p.at("]"):
                decl.subtypes.append(p.expect_kind("atom", "a type name").text)
                while p.accept(","):
                    decl.subtypes.append(p.expect_kind("atom", "a type name").text)
            p.expect("]")
        if p.at_keyword("intro"):
            p.i += 1
            p.expect("[")
            if not p.at("]"):
                while True:
                    f = p.expect_kind("atom", "a feature name").text
                    p.expect(":")
                    decl.intro.append((f, p.expect_kind("atom", "a type name").text))
                    if not p.accept(","):
                        break
            p.expect("]")
        p.expect(".")
        decls.append(decl)
    return decls


def parse_grammar(text: str) -> list[Principle | RelationClause]:
    """Parse principles (``D ==> D [goal G].``) and clauses (``r(D..) [if G].``)."""
    p = _Parser(text)
    items: list[Principle | RelationClause] = []
    while p.tok.kind != "eof":
        start = p.tok
        if _clause_is_principle(p):
            ante = p.description()
            p.expect("==>")
            cons = p.description()
            goal: Goal = TrueGoal()
            if p.at_keyword("goal"):
                p.i += 1
                goal = p.goal()
            p.expect(".")
            if vars_of(ante):
                raise GrammarError(
                    f"line {start.line}: shared/antecedent variables unsupported "
                    f"({', '.join(vars_of(ante))})")
            items.append(Principle(ante, cons, goal, start.line))
        else:
            name = p.expect_kind("atom", "a relation name")
            args = p.arguments()
            body: Goal = TrueGoal()
            if p.at_keyword("if"):
                p.i += 1
                body = p.goal()
            p.expect(".")
            items.append(RelationClause(name.text, args, body, start.line))
    check_arities(items)
    return items


def _clause_is_principle(p: _Parser) -> bool:
    depth = 0
    for t in p.toks[p.i:]:
        if t.kind == "eof":
            return False
        if t.kind != "punct":
            continue
        if t.text in "([":
            depth += 1
        elif t.text in ")]":
            depth -= 1
        elif t.text == "==>" and depth == 0:
            return True
        elif t.text == "." and depth == 0:
            return False
    return False


def check_arities(items) -> dict[str, int]:
    arities: dict[str, int] = {}

    def note(name: str, n: int, line: int) -> None:
        if arities.setdefault(name, n) != n:
            raise GrammarError(
                f"line {line}: relation {name} used with arity {n}, "
                f"expected {arities[name]}")

    for item in items:
        if isinstance(item, RelationClause):
            note(item.name, item.arity, item.line)
    for item in items:
        body = item.body if isinstance(item, RelationClause) else item.goal
        for call in calls_of(body):
            note(call.relation, len(call.args), item.line)
    return arities


def calls_of(goal: Goal) -> Iterator[Call]:
    if isinstance(goal, Call):
        yield goal
    elif isinstance(goal, (Conj, Disj)):
        yield from calls_of(goal.left)
        yield from calls_of(goal.right)
    elif isinstance(goal, FsWhen):
        yield from calls_of(goal.goal)


def vars_of(d: Description) -> list[str]:
    """Variables of *d* in first-occurrence order."""
    out: list[str] = []

    def walk(x):
        if isinstance(x, Var):
            if x.name not in out:
                out.append(x.name)
        elif isinstance(x, Feat):
            walk(x.value)
        elif isinstance(x, (And, Or)):
            walk(x.left)
            walk(x.right)

    walk(d)
    return out


def resolve(d: Description, sig) -> Description:
    """Check that every type and feature in *d* is declared in *sig*."""
    if isinstance(d, Type):
        if d.name not in sig.types:
            raise GrammarError(f"unknown type {d.name}")
    elif isinstance(d, Feat):
        if d.feature not in sig.intro:
            raise GrammarError(f"unknown feature {d.feature}")
        resolve(d.value, sig)
    elif isinstance(d, (And, Or)):
        resolve(d.left, sig)
        resolve(d.right, sig)
    return d


def resolve_goal(g: Goal, sig) -> Goal:
    if isinstance(g, (Conj, Disj)):
        resolve_goal(g.left, sig)
        resolve_goal(g.right, sig)
    elif isinstance(g, Call):
        for a in g.args:
            resolve(a, sig)
    elif isinstance(g, UnifyDesc):
        resolve(g.desc, sig)
    elif isinstance(g, FsWhen):
        resolve_cond(g.cond, sig)
        resolve_goal(g.goal, sig)
    return g


def resolve_cond(c: Conditional, sig) -> Conditional:
    if isinstance(c, AtomicCond):
        resolve(c.desc, sig)
    else:
        resolve_cond(c.left, sig)
        resolve_cond(c.right, sig)
    return c


# -- printing -----------------------------------------------------------------

def format_desc(d: Description) -> str:
    return _fmt(d, 0)


# precedence levels: 0 = disjunction, 1 = conjunction, 2 = path/atom
def _fmt(d: Description, level: int) -> str:
    if isinstance(d, Var):
        return d.name
    if isinstance(d, Type):
        return d.name
    if isinstance(d, Feat):
        return f"{d.feature}:{_fmt(d.value, 2)}"
    if isinstance(d, And):
        s = f"{_fmt(d.left, 1)}, {_fmt(d.right, 2)}"
        return s if level <= 1 else f"({s})"
    if isinstance(d, Or):
        s = f"{_fmt(d.left, 0)} ; {_fmt(d.right, 1)}"
        return s if level == 0 else f"({s})"
    raise TypeError(f"not a description: {d!r}")


def format_arg(d: Description) -> str:
    s = format_desc(d)
    return f"({s})" if isinstance(d, (And, Or)) else s


def format_goal(g: Goal) -> str:
    return _fmt_goal(g, 0)


def _fmt_goal(g: Goal, level: int) -> str:
    if isinstance(g, TrueGoal):
        return "true"
    if isinstance(g, FailGoal):
        return "fail"
    if isinstance(g, Call):
        if not g.args:
            return g.relation
        return f"{g.relation}({', '.join(format_arg(a) for a in g.args)})"
    if isinstance(g, UnifyDesc):
        return f"{g.var} = {format_arg(g.desc)}"
    if isinstance(g, Ineq):
        return f"{g.left} =\\= {g.right}"
    if isinstance(g, FsWhen):
        return f"fswhen({_fmt_cond(g.cond, 0, top=True)}, {_fmt_goal(g.goal, 0)})"
    if isinstance(g, Conj):
        s = f"{_fmt_goal(g.left, 1)}, {_fmt_goal(g.right, 2)}"
        return s if level <= 1 else f"({s})"
    if isinstance(g, Disj):
        s = f"{_fmt_goal(g.left, 0)} ; {_fmt_goal(g.right, 1)}"
        return s if level == 0 else f"({s})"
    raise TypeError(f"not a goal: {g!r}")


def _fmt_cond(c: Conditional, level: int, top: bool = False) -> str:
    if isinstance(c, AtomicCond):
        return f"{c.var} = {format_arg(c.desc)}"
    if isinstance(c, CondAnd):
        s = f"{_fmt_cond(c.left, 1)}, {_fmt_cond(c.right, 2)}"
        return s if level <= 1 and not top else f"({s})"
    s = f"{_fmt_cond(c.left, 0)} ; {_fmt_cond(c.right, 1)}"
    return s if level == 0 else f"({s})"


def format_item(item: Principle | RelationClause) -> str:
    if isinstance(item, Principle):
        s = f"{format_desc(item.antecedent)} ==> {format_desc(item.consequent)}"
        if not isinstance(item.goal, TrueGoal):
            s += f" goal {format_goal(item.goal)}"
        return s + "."
    head = item.name
    if item.args:
        head += f"({', '.join(format_arg(a) for a in item.args)})"
    if isinstance(item.body, TrueGoal):
        return head + "."
    return f"{head} if {format_goal(item.body)}."
