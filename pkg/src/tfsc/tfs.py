"""Typed feature structures as union-find graphs with a backtracking trail.

A :class:`Graph` owns every node of one unit of work.  Node identity is
kept with union-find (no path compression, so every mutation is a plain
trailed assignment).  ``unify`` is destructive; on failure it restores the
state it started from, and callers that want to retract a success take a
``mark()`` beforehand and ``undo()`` to it.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterator

from .signature import SignatureError, TypeSignature

class AppropriatenessLoop(SignatureError):
    """Appropriateness demands an infinite most general satisfier."""


class AVMSyntaxError(ValueError):
    pass


class Graph:
    def __init__(self, sig: TypeSignature):
        self.sig = sig
        self.parent: list[int] = []
        self.types: list[str] = []
        self.feats: list[dict[str, int]] = []
        self.ineqs: list[tuple[int, int]] = []
        self.trail: list[tuple] = []
        # ('new', n) | ('promote', n) | ('feature', f, n) | ('bind', kept, merged)
        self.events: list[tuple] = []

    # -- trail ----------------------------------------------------------------

    def mark(self) -> int:
        return len(self.trail)

    def undo(self, mark: int) -> None:
        trail = self.trail
        while len(trail) > mark:
            op, container, key, old = trail.pop()
            if op == "set":
                container[key] = old
            elif op == "del":
                del container[key]
            elif op == "append":
                container.pop()
            elif op == "add":
                container.discard(key)

    def tset(self, container, key, value) -> None:
        """Trailed ``container[key] = value`` for lists and dicts."""
        if isinstance(container, dict) and key not in container:
            self.trail.append(("del", container, key, None))
        else:
            self.trail.append(("set", container, key, container[key]))
        container[key] = value

    def tappend(self, lst: list, value) -> None:
        self.trail.append(("append", lst, None, None))
        lst.append(value)

    def tadd(self, s: set, value) -> None:
        if value not in s:
            self.trail.append(("add", s, value, None))
            s.add(value)

    # -- nodes ----------------------------------------------------------------

    def find(self, n: int) -> int:
        parent = self.parent
        while parent[n] != n:
            n = parent[n]
        return n

    def type_of(self, n: int) -> str:
        return self.types[self.find(n)]

    def value(self, n: int, feature: str) -> int | None:
        v = self.feats[self.find(n)].get(feature)
        return None if v is None else self.find(v)

    def new_node(self, t: str, _chain: tuple = ()) -> int:
        """Create the most general satisfier of type ``t``; return its root."""
        if t in _chain:
            raise AppropriatenessLoop(
                "appropriateness loop: " + " -> ".join(_chain + (t,)))
        n = len(self.parent)
        self.tappend(self.parent, n)
        self.tappend(self.types, t)
        self.tappend(self.feats, {})
        self.events.append(("new", n))
        approp = self.sig.approp[t]
        for f in self.sig.features(t):
            self.feats[n][f] = self.new_node(approp[f], _chain + (t,))
        return n

    def add_inequation(self, x: int, y: int) -> bool:
        if self.find(x) == self.find(y):
            return False
        self.tappend(self.ineqs, (x, y))
        return True

    def inequated(self, x: int, y: int) -> bool:
        x, y = self.find(x), self.find(y)
        return any({self.find(a), self.find(b)} == {x, y} for a, b in self.ineqs)

    # -- unification ----------------------------------------------------------

    def unify(self, x: int, y: int) -> bool:
        mark, nevents = self.mark(), len(self.events)
        if self._unify(x, y) and all(self.find(a) != self.find(b) for a, b in self.ineqs):
            return True
        self.undo(mark)
        del self.events[nevents:]
        return False

    def _unify(self, x: int, y: int) -> bool:
        sig = self.sig
        stack = [(x, y)]
        while stack:
            a, b = stack.pop()
            a, b = self.find(a), self.find(b)
            if a == b:
                continue
            t = sig.join(self.types[a], self.types[b])
            if t is None:
                return False
            self.tset(self.parent, b, a)
            self.events.append(("bind", a, b))
            if t != self.types[a]:
                self.tset(self.types, a, t)
                self.events.append(("promote", a))
            fa = self.feats[a]
            for f, v in self.feats[b].items():
                if f in fa:
                    stack.append((fa[f], v))
                else:
                    self.tset(fa, f, v)
                    self.events.append(("feature", f, a))
            approp = sig.approp[t]
            for f in sig.features(t):
                r = approp[f]
                if f not in fa:
                    self.tset(fa, f, self.new_node(r))
                    self.events.append(("feature", f, a))
                elif not sig.leq(r, self.types[self.find(fa[f])]):
                    stack.append((fa[f], self.new_node(r)))
        return True

    def reachable(self, root: int) -> list[int]:
        """Representatives reachable from ``root``, canonical depth-first order."""
        seen: dict[int, None] = {}
        stack = [self.find(root)]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen[n] = None
            fs = self.feats[n]
            for f in reversed(sorted(fs)):
                stack.append(self.find(fs[f]))
        return list(seen)

    def audit(self, root: int) -> list[str]:
        """Return total well-typedness violations below ``root`` (empty if none)."""
        sig, problems = self.sig, []
        for n in self.reachable(root):
            t = self.types[n]
            if set(self.feats[n]) != set(sig.approp[t]):
                problems.append(f"node {n} of type {t} has features {sorted(self.feats[n])}")
            for f, v in self.feats[n].items():
                r = sig.approp[t].get(f)
                if r is not None and not sig.leq(r, self.type_of(v)):
                    problems.append(f"node {n}: {f} value {self.type_of(v)} not below {r}")
        for a, b in self.ineqs:
            if self.find(a) == self.find(b):
                problems.append(f"inequated nodes {a} and {b} merged")
        return problems


class FeatureStructure:
    """A rooted view into a :class:`Graph`."""

    def __init__(self, graph: Graph, root: int):
        self.graph = graph
        self.root = root

    @classmethod
    def of_type(cls, sig: TypeSignature, t: str) -> "FeatureStructure":
        g = Graph(sig)
        return cls(g, g.new_node(t))

    @property
    def sig(self) -> TypeSignature:
        return self.graph.sig

    @property
    def type(self) -> str:
        return self.graph.type_of(self.root)

    def node(self, path: str = "") -> int:
        n = self.graph.find(self.root)
        for f in filter(None, path.split(":")):
            n = self.graph.value(n, f)
            if n is None:
                raise KeyError(path)
        return n

    def type_at(self, path: str) -> str:
        return self.graph.types[self.node(path)]

    def copy(self) -> "FeatureStructure":
        """Compact copy of the reachable part, nodes numbered canonically."""
        src = self.graph
        order = src.reachable(self.root)
        index = {n: i for i, n in enumerate(order)}
        g = Graph(src.sig)
        g.parent = list(range(len(order)))
        g.types = [src.types[n] for n in order]
        g.feats = [{f: index[src.find(v)] for f, v in src.feats[n].items()} for n in order]
        for a, b in src.ineqs:
            a, b = src.find(a), src.find(b)
            if a in index and b in index:
                pair = tuple(sorted((index[a], index[b])))
                if pair not in g.ineqs:
                    g.ineqs.append(pair)
        g.ineqs.sort()
        return FeatureStructure(g, 0)

    def key(self) -> tuple:
        """Canonical key: equal keys iff isomorphic structures."""
        c = self.copy()
        g = c.graph
        return (tuple(g.types),
                tuple(tuple(sorted(fs.items())) for fs in g.feats),
                tuple(g.ineqs))

    def isomorphic(self, other: "FeatureStructure") -> bool:
        return self.key() == other.key()

    def subsumes(self, other: "FeatureStructure") -> bool:
        return subsumes(self, other)

    def encode(self) -> "Term":
        return encode(self)

    def __str__(self) -> str:
        return format_avm(self)

    def __repr__(self) -> str:
        return f"<FeatureStructure {format_avm(self)}>"


def mgsat_type(sig: TypeSignature, t: str) -> FeatureStructure:
    """Most general totally well-typed structure of type ``t``."""
    return FeatureStructure.of_type(sig, t)


# -- subsumption --------------------------------------------------------------

def subsumes(general: FeatureStructure, specific: FeatureStructure) -> bool:
    """True iff ``general`` is at most as informative as ``specific``.

    Looks for a root-preserving, type-monotone, feature-commuting map from
    general's nodes to specific's nodes.  Two distinct general nodes may map
    to one specific node, but not the other way round; distinct nodes of the
    same type are never identified by the check itself.
    """
    g, s = general.graph, specific.graph
    sig = g.sig
    h: dict[int, int] = {}
    stack = [(g.find(general.root), s.find(specific.root))]
    while stack:
        a, b = stack.pop()
        if a in h:
            if h[a] != b:
                return False
            continue
        h[a] = b
        if not sig.leq(g.types[a], s.types[b]):
            return False
        sf = s.feats[b]
        for f, v in g.feats[a].items():
            if f not in sf:
                return False
            stack.append((g.find(v), s.find(sf[f])))
    for x, y in g.ineqs:
        x, y = g.find(x), g.find(y)
        if x in h and y in h and not s.inequated(h[x], h[y]):
            return False
    return True


# -- AVM text -----------------------------------------------------------------

def _shared_nodes(fs: FeatureStructure) -> set[int]:
    g = fs.graph
    nodes = g.reachable(fs.root)
    indegree = {n: 0 for n in nodes}
    for n in nodes:
        for v in g.feats[n].values():
            indegree[g.find(v)] += 1
    shared = {n for n, d in indegree.items() if d > 1}
    root = g.find(fs.root)
    if indegree[root] > 0:
        shared.add(root)
    for a, b in g.ineqs:
        a, b = g.find(a), g.find(b)
        if a in indegree and b in indegree:
            shared.update((a, b))
    return shared


def format_avm(fs: FeatureStructure) -> str:
    g = fs.graph
    shared = _shared_nodes(fs)
    tags: dict[int, int] = {}

    def fmt(n: int) -> str:
        n = g.find(n)
        if n in tags:
            return f"#{tags[n]}"
        prefix = ""
        if n in shared:
            tags[n] = len(tags) + 1
            prefix = f"#{tags[n]}="
        fs_ = g.feats[n]
        if not fs_:
            return prefix + g.types[n]
        inner = ", ".join(f"{f}:{fmt(fs_[f])}" for f in sorted(fs_))
        return f"{prefix}{g.types[n]}[{inner}]"

    text = fmt(fs.root)
    pairs = []
    for a, b in g.ineqs:
        a, b = g.find(a), g.find(b)
        if a in tags and b in tags:
            pairs.append(tuple(sorted((tags[a], tags[b]))))
    if pairs:
        text += " {" + ", ".join(f"#{a} =\\= #{b}" for a, b in sorted(set(pairs))) + "}"
    return text


_AVM_TOKEN = re.compile(r"\s*(#\d+|[A-Za-z_][A-Za-z0-9_]*|=\\=|[\[\]:,=}{])")


def parse_avm(sig: TypeSignature, text: str, graph: Graph | None = None) -> FeatureStructure:
    """Build a totally well-typed structure from AVM text such as
    ``a[f:#1=polarity, g:#1] {#1 =\\= #2}``.  Missing features are filled
    with most general values."""
    toks, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _AVM_TOKEN.match(text, pos)
        if not m:
            raise AVMSyntaxError(f"bad AVM syntax at {text[pos:]!r}")
        toks.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    toks.append("")
    g = graph if graph is not None else Graph(sig)
    tags: dict[str, int] = {}
    i = 0

    def expect(tok):
        nonlocal i
        if toks[i] != tok:
            raise AVMSyntaxError(f"expected {tok!r}, found {toks[i]!r}")
        i += 1

    def node() -> int:
        nonlocal i
        tag = None
        if toks[i].startswith("#"):
            tag = toks[i]
            i += 1
            if toks[i] != "=":
                if tag not in tags:
                    tags[tag] = g.new_node("bot")
                return tags[tag]
            i += 1
        t = toks[i]
        if t not in sig:
            raise AVMSyntaxError(f"unknown type {t!r}")
        i += 1
        n = g.new_node(t)
        if tag is not None:
            if tag in tags and not g.unify(tags[tag], n):
                raise AVMSyntaxError(f"inconsistent tag {tag}")
            tags.setdefault(tag, n)
        if toks[i] == "[":
            i += 1
            while toks[i] != "]":
                f = toks[i]
                i += 1
                expect(":")
                child = node()
                v = g.value(n, f)
                if v is None:
                    raise AVMSyntaxError(f"feature {f} not appropriate to {g.type_of(n)}")
                if not g.unify(v, child):
                    raise AVMSyntaxError(f"value of {f} inconsistent with appropriateness")
                if toks[i] == ",":
                    i += 1
            i += 1
        return n

    root = node()
    if toks[i] == "{":
        i += 1
        while toks[i] != "}":
            a = toks[i]
            i += 1
            expect("=\\=")
            b = toks[i]
            i += 1
            if a not in tags or b not in tags or not g.add_inequation(tags[a], tags[b]):
                raise AVMSyntaxError(f"bad inequation {a} =\\= {b}")
            if toks[i] == ",":
                i += 1
        i += 1
    if toks[i] != "":
        raise AVMSyntaxError(f"trailing input {toks[i]!r}")
    g.events.clear()
    return FeatureStructure(g, root)


# -- term encoding ------------------------------------------------------------

@dataclass(frozen=True)
class Ref:
    tag: str

    def __str__(self) -> str:
        return self.tag


@dataclass(frozen=True)
class Term:
    """Display encoding: functor = type, children = feature values in
    canonical order, then one intensionality placeholder."""
    functor: str
    children: tuple
    tag: str | None = None

    def __str__(self) -> str:
        args = ", ".join(str(c) for c in self.children)
        head = f"{self.tag}={self.functor}" if self.tag else self.functor
        return f"{head}({args})"

    def to_json(self):
        out = {"functor": self.functor,
               "children": [c.to_json() if isinstance(c, Term) else str(c)
                            for c in self.children]}
        if self.tag:
            out["tag"] = self.tag
        return out

    @classmethod
    def from_json(cls, data) -> "Term":
        kids = []
        for c in data["children"]:
            if isinstance(c, dict):
                kids.append(cls.from_json(c))
            elif c == PLACEHOLDER:
                kids.append(PLACEHOLDER)
            else:
                kids.append(Ref(c))
        return cls(data["functor"], tuple(kids), data.get("tag"))


PLACEHOLDER = "_"


def encode(fs: FeatureStructure) -> Term:
    g = fs.graph
    shared = _shared_nodes(fs)
    tags: dict[int, str] = {}

    def enc(n: int):
        n = g.find(n)
        if n in tags:
            return Ref(tags[n])
        tag = None
        if n in shared:
            tag = tags[n] = f"#{len(tags) + 1}"
        kids = tuple(enc(g.feats[n][f]) for f in sorted(g.feats[n]))
        return Term(g.types[n], kids + (PLACEHOLDER,), tag)

    return enc(fs.root)


def decode(sig: TypeSignature, term: Term) -> FeatureStructure:
    g = Graph(sig)
    tags: dict[str, int] = {}

    def dec(t) -> int:
        if isinstance(t, Ref):
            return tags[t.tag]
        n = len(g.parent)
        g.parent.append(n)
        g.types.append(t.functor)
        g.feats.append({})
        if t.tag:
            tags[t.tag] = n
        feats = sig.features(t.functor)
        values = [c for c in t.children if c != PLACEHOLDER]
        if len(values) != len(feats):
            raise ValueError(f"arity mismatch for {t.functor}")
        for f, c in zip(feats, values):
            g.feats[n][f] = dec(c)
        return n

    return FeatureStructure(g, dec(term))


def encode_json(fs: FeatureStructure) -> str:
    return json.dumps(encode(fs).to_json())


# -- maximal extensions -------------------------------------------------------

class Extensions(list):
    """A list of structures with a ``truncated`` flag."""
    truncated = False


def maximal_extensions(fs: FeatureStructure, limit: int = 1000) -> Extensions:
    """Every extension in which all nodes carry maximal types.

    Only types are refined; free node pairs are neither merged nor
    inequated.  Branching is over the first non-maximal node in canonical
    order and its maximal subtypes in declaration order.
    """
    work = fs.copy()
    g, sig = work.graph, work.sig
    out = Extensions()
    seen: set = set()

    def search() -> bool:
        for n in g.reachable(work.root):
            if not sig.is_maximal(g.types[n]):
                break
        else:
            k = work.key()
            if k not in seen:
                if len(out) >= limit:
                    out.truncated = True
                    return False
                seen.add(k)
                out.append(work.copy())
            return True
        for m in sig.maximal_subtypes(g.types[n]):
            mark = g.mark()
            if g.unify(n, g.new_node(m)):
                if not search():
                    g.undo(mark)
                    return False
            g.undo(mark)
        return True

    search()
    return out


def iter_paths(fs: FeatureStructure) -> Iterator[tuple[str, int]]:
    """(path, node) pairs in canonical order; each node once, at its first path."""
    g = fs.graph
    seen = set()

    def walk(n, path):
        n = g.find(n)
        if n in seen:
            return
        seen.add(n)
        yield path, n
        for f in sorted(g.feats[n]):
            yield from walk(g.feats[n][f], f"{path}:{f}" if path else f)

    yield from walk(fs.root, "")


# -- JSON answers -------------------------------------------------------------

def to_json(fs: FeatureStructure) -> dict:
    """``{"type", "features", "tags"}``; shared nodes carry ``"tag"`` at
    their first occurrence and appear as ``{"ref": tag}`` afterwards."""
    g = fs.graph
    shared = _shared_nodes(fs)
    tags: dict[int, str] = {}
    paths: dict[str, list[str]] = {}

    def enc(n: int, path: str) -> dict:
        n = g.find(n)
        if n in tags:
            paths[tags[n]].append(path)
            return {"ref": tags[n]}
        out: dict = {"type": g.types[n]}
        if n in shared:
            tags[n] = out["tag"] = f"#{len(tags) + 1}"
            paths[tags[n]] = [path]
        out["features"] = {f: enc(g.feats[n][f], f"{path}:{f}" if path else f)
                           for f in sorted(g.feats[n])}
        return out

    data = enc(fs.root, "")
    data["tags"] = paths
    ineqs = []
    for a, b in g.ineqs:
        a, b = g.find(a), g.find(b)
        if a in tags and b in tags:
            ineqs.append(sorted((tags[a], tags[b])))
    if ineqs:
        data["inequations"] = sorted(ineqs)
    return data


def from_json(sig: TypeSignature, data: dict) -> FeatureStructure:
    g = Graph(sig)
    tags: dict[str, int] = {}

    def dec(d: dict) -> int:
        if "ref" in d:
            return tags[d["ref"]]
        n = len(g.parent)
        g.parent.append(n)
        g.types.append(d["type"])
        g.feats.append({})
        if "tag" in d:
            tags[d["tag"]] = n
        for f, v in d.get("features", {}).items():
            g.feats[n][f] = dec(v)
        return n

    root = dec(data)
    for a, b in data.get("inequations", []):
        g.ineqs.append((tags[a], tags[b]))
    return FeatureStructure(g, root)
