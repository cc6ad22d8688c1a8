"""Type signatures: the type hierarchy, appropriateness and derangement."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .desclang import TypeDecl, parse_signature

BOT = "bot"


class SignatureError(Exception):
    pass


@dataclass(frozen=True)
class DerangementReport:
    deranged: frozenset
    # deranged type -> (canonical feature order, set of value-type products)
    features: dict = field(default_factory=dict)
    safe_products: dict = field(default_factory=dict)


class TypeSignature:
    """A validated, immutable type signature.

    ``t1 <= t2`` in the type order means t1 is more general than t2
    (``bot`` is the least element).  ``approp[t]`` is the full, inherited
    appropriateness table of ``t``; ``intro[f]`` the unique introducer of f.
    """

    def __init__(self, types, subtypes, approp, intro):
        self.types: tuple[str, ...] = tuple(types)
        self.subtypes: dict[str, tuple[str, ...]] = subtypes
        self.approp: dict[str, dict[str, str]] = approp
        self.intro: dict[str, str] = intro
        self.supertypes: dict[str, tuple[str, ...]] = {t: () for t in self.types}
        for t, subs in subtypes.items():
            for s in subs:
                self.supertypes[s] += (t,)
        # descendants (upward closure, including t itself)
        self.up: dict[str, frozenset] = {}
        for t in reversed(self._topological()):
            self.up[t] = frozenset({t}.union(*(self.up[s] for s in subtypes[t])))
        self.down: dict[str, frozenset] = {t: frozenset(u for u in self.types if t in self.up[u])
                                           for t in self.types}
        self.maximal: tuple[str, ...] = tuple(t for t in self.types if not subtypes[t])
        self._join_cache: dict = {}
        self._meet_cache: dict = {}

    def _topological(self) -> list[str]:
        order, seen = [], set()

        def visit(t):
            if t in seen:
                return
            seen.add(t)
            for s in self.supertypes[t]:
                visit(s)
            order.append(t)

        for t in self.types:
            visit(t)
        return order

    def __contains__(self, t: str) -> bool:
        return t in self.up

    def leq(self, general: str, specific: str) -> bool:
        """True iff ``general`` subsumes ``specific`` in the type order."""
        return specific in self.up[general]

    def join(self, t1: str, t2: str) -> str | None:
        """Least upper bound, or None when the two types are inconsistent."""
        key = (t1, t2)
        if key not in self._join_cache:
            self._join_cache[key] = _least(self, self.up[t1] & self.up[t2], t1, t2)
        return self._join_cache[key]

    def meet(self, t1: str, t2: str) -> str:
        key = (t1, t2)
        if key not in self._meet_cache:
            self._meet_cache[key] = _greatest(self, self.down[t1] & self.down[t2], t1, t2)
        return self._meet_cache[key]

    def is_maximal(self, t: str) -> bool:
        return not self.subtypes[t]

    def maximal_subtypes(self, t: str) -> list[str]:
        """Maximal types above ``t``, in declaration order."""
        return [m for m in self.types if m in self.up[t] and not self.subtypes[m]]

    def features(self, t: str) -> list[str]:
        """Features appropriate at ``t`` in canonical (lexicographic) order."""
        return sorted(self.approp[t])

    def derangement_analysis(self) -> DerangementReport:
        return derangement_analysis(self)


def _least(sig: TypeSignature, bounds, t1, t2):
    if not bounds:
        return None
    least = [b for b in bounds if all(b in sig.down[o] for o in bounds)]
    if len(least) != 1:
        raise SignatureError(f"no least upper bound for {t1} and {t2}")
    return least[0]


def _greatest(sig: TypeSignature, bounds, t1, t2):
    greatest = [b for b in bounds if all(b in sig.up[o] for o in bounds)]
    if len(greatest) != 1:
        raise SignatureError(f"no greatest lower bound for {t1} and {t2}")
    return greatest[0]


def load_signature(text: str) -> TypeSignature:
    return validate(parse_signature(text))


def validate(decls: list[TypeDecl]) -> TypeSignature:
    """Check raw declarations and build a :class:`TypeSignature`.

    Raises :class:`SignatureError` on cycles, missing meets or joins,
    features without a unique introducer, and restrictions that widen at a
    subtype.
    """
    if not decls or decls[0].name != BOT:
        raise SignatureError("the first declaration must be for bot")
    types: list[str] = []
    subtypes: dict[str, list[str]] = {}
    local: dict[str, dict[str, str]] = {}

    def declare(t):
        if t not in subtypes:
            types.append(t)
            subtypes[t] = []
            local[t] = {}

    for d in decls:
        declare(d.name)
        for s in d.subtypes:
            declare(s)
            if s in subtypes[d.name]:
                raise SignatureError(f"line {d.line}: {s} listed twice under {d.name}")
            if s == BOT:
                raise SignatureError(f"line {d.line}: bot cannot be a subtype")
            subtypes[d.name].append(s)
        for f, r in d.intro:
            if f in local[d.name]:
                raise SignatureError(f"line {d.line}: feature {f} declared twice at {d.name}")
            local[d.name][f] = r
    for d in decls:
        for _, r in d.intro:
            if r not in subtypes:
                raise SignatureError(f"line {d.line}: unknown value type {r}")

    _check_acyclic(types, subtypes)
    orphans = [t for t in types if t != BOT and not any(t in s for s in subtypes.values())]
    if orphans:
        raise SignatureError(f"types not reachable from bot: {', '.join(orphans)}")

    sig = TypeSignature(types, {t: tuple(s) for t, s in subtypes.items()}, {}, {})
    for t1, t2 in itertools.combinations(types, 2):
        sig.meet(t1, t2)
        sig.join(t1, t2)

    approp: dict[str, dict[str, str]] = {}
    for t in sig._topological():
        inherited: dict[str, str] = {}
        for parent in sig.supertypes[t]:
            for f, r in approp[parent].items():
                if f in inherited:
                    j = sig.join(inherited[f], r)
                    if j is None:
                        raise SignatureError(
                            f"inconsistent inherited restrictions for {f} at {t}")
                    r = j
                inherited[f] = r
        for f, r in local[t].items():
            if f in inherited and not sig.leq(inherited[f], r):
                raise SignatureError(
                    f"restriction {f}:{r} at {t} does not narrow inherited {f}:{inherited[f]}")
            inherited[f] = r
        approp[t] = inherited

    intro: dict[str, str] = {}
    for f in sorted({f for a in approp.values() for f in a}):
        carriers = [t for t in types if f in approp[t]]
        minimal = [t for t in carriers if not any(o != t and sig.leq(o, t) for o in carriers)]
        if len(minimal) != 1:
            raise SignatureError(
                f"feature {f} has no unique introducer ({', '.join(minimal)})")
        intro[f] = minimal[0]

    sig.approp = approp
    sig.intro = intro
    return sig


def _check_acyclic(types, subtypes):
    state: dict[str, int] = {}

    def visit(t, path):
        if state.get(t) == 1:
            raise SignatureError("cycle in subtyping: " + " < ".join(path + [t]))
        if state.get(t) == 2:
            return
        state[t] = 1
        for s in subtypes[t]:
            visit(s, path + [t])
        state[t] = 2

    for t in types:
        visit(t, [])


def derangement_analysis(sig: TypeSignature) -> DerangementReport:
    """Find non-maximal types whose maximal subtypes fail to cover all value products.

    For a type t with features F1..Fn (canonical order) restricted to
    r1..rn, every tuple of maximal types (x1..xn) with ri <= xi must be
    covered by some maximal subtype m of t whose own restrictions are all
    <= the xi.  An uncovered tuple is a well-typed structure of type t with
    no maximal extension, so t is deranged.
    """
    deranged = set()
    features, products = {}, {}
    for t in sig.types:
        if sig.is_maximal(t):
            continue
        feats = sig.features(t)
        safe = {tuple(sig.approp[m][f] for f in feats) for m in sig.maximal_subtypes(t)}
        choices = [sig.maximal_subtypes(sig.approp[t][f]) for f in feats]
        for combo in itertools.product(*choices):
            if not any(all(sig.leq(p, x) for p, x in zip(prod, combo)) for prod in safe):
                deranged.add(t)
                features[t] = tuple(feats)
                products[t] = frozenset(safe)
                break
    return DerangementReport(frozenset(deranged), features, products)
