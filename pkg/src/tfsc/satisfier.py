"""Adding descriptions to nodes, and most general satisfiers.

``unify_with_desc`` is a generator: each yielded binding is one solution
branch, left disjuncts first.  The state is left in place while the
consumer holds a solution and restored before the next one; once the
generator is exhausted the graph is back where it started.

The unifier is pluggable: plain graph unification by default, or an
engine that runs woken constraints after every unification.
"""

from __future__ import annotations

from typing import Iterator

from .desclang import And, Description, Feat, Or, Type, Var
from .signature import BOT, TypeSignature
from .tfs import FeatureStructure, Graph, subsumes

Binding = dict


class PlainUnifier:
    """Graph unification with no constraint store."""

    def __init__(self, graph: Graph):
        self.graph = graph

    def unify(self, x: int, y: int) -> Iterator[None]:
        g = self.graph
        mark = g.mark()
        if g.unify(x, y):
            g.events.clear()
            yield
            g.undo(mark)


def unify_with_desc(ctx, x: int, d: Description, b: Binding) -> Iterator[Binding]:
    g: Graph = ctx.graph
    mark = g.mark()
    if isinstance(d, Var):
        if d.name in b:
            for _ in ctx.unify(b[d.name], x):
                yield b
        else:
            yield {**b, d.name: x}
    elif isinstance(d, Type):
        if not g.sig.leq(d.name, g.type_of(x)):
            for _ in ctx.unify(x, g.new_node(d.name)):
                yield b
        else:
            yield b
    elif isinstance(d, Feat):
        if g.value(x, d.feature) is not None:
            yield from unify_with_desc(ctx, g.value(x, d.feature), d.value, b)
        else:
            for _ in ctx.unify(x, g.new_node(g.sig.intro[d.feature])):
                yield from unify_with_desc(ctx, g.value(x, d.feature), d.value, b)
    elif isinstance(d, And):
        for b1 in unify_with_desc(ctx, x, d.left, b):
            yield from unify_with_desc(ctx, x, d.right, b1)
    elif isinstance(d, Or):
        yield from unify_with_desc(ctx, x, d.left, b)
        yield from unify_with_desc(ctx, x, d.right, b)
    else:
        raise TypeError(f"not a description: {d!r}")
    g.undo(mark)


def mgsats(sig: TypeSignature, d: Description) -> list[FeatureStructure]:
    """Most general satisfiers, one per satisfiable disjunct branch."""
    g = Graph(sig)
    root = g.new_node(BOT)
    out: list[FeatureStructure] = []
    for _ in unify_with_desc(PlainUnifier(g), root, d, {}):
        fs = FeatureStructure(g, root).copy()
        if not any(subsumes(fs, o) and subsumes(o, fs) for o in out):
            out.append(fs)
    return out


def satisfies(fs: FeatureStructure, d: Description, cache: dict | None = None) -> bool:
    if cache is not None:
        if d not in cache:
            cache[d] = mgsats(fs.sig, d)
        candidates = cache[d]
    else:
        candidates = mgsats(fs.sig, d)
    return any(subsumes(m, fs) for m in candidates)
