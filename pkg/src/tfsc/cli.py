"""Command-line interface.

Exit status: 0 success, 1 query unsatisfiable, 2 compile or validation
error, 3 a runtime bound was exceeded.  Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from .compiler import compile_grammar, dump_grammar, grammar_from_json, grammar_to_json
from .desclang import GrammarError, ParseError, parse_description, parse_grammar, resolve
from .engine import QueryConfig, solve_query
from .satisfier import mgsats
from .signature import SignatureError, load_signature
from .tfs import format_avm, maximal_extensions, to_json

EXIT_OK, EXIT_UNSAT, EXIT_ERROR, EXIT_BOUND = 0, 1, 2, 3
CACHE_FORMAT = "tfsc-compiled-grammar"
CACHE_VERSION = 1


class UsageError(Exception):
    pass


def content_hash(sig_text: str, grammar_text: str) -> str:
    h = hashlib.sha256()
    h.update(sig_text.encode())
    h.update(b"\0")
    h.update(grammar_text.encode())
    return h.hexdigest()


def default_cache_path(grammar_path: str) -> Path:
    return Path(grammar_path + ".compiled.json")


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from e


def _load(args):
    sig_text = _read(args.signature)
    sig = load_signature(sig_text)
    if getattr(args, "grammar", None) is None:
        return sig, None, sig_text, ""
    grammar_text = _read(args.grammar)
    return sig, grammar_text, sig_text, grammar_text


def load_grammar(sig, sig_text: str, grammar_text: str, cache: Path | None = None,
                 cover: bool = True):
    """Compile, reusing a cache file whose content hash still matches."""
    digest = content_hash(sig_text, grammar_text)
    if cache is not None and cache.exists():
        try:
            data = json.loads(cache.read_text(encoding="utf-8"))
            if (data.get("format") == CACHE_FORMAT and data.get("version") == CACHE_VERSION
                    and data.get("hash") == digest):
                grammar = grammar_from_json(sig, data["grammar"])
                if not cover:
                    grammar.cover = {}
                return grammar
        except (ValueError, KeyError):
            pass
    return compile_grammar(sig, parse_grammar(grammar_text), cover=cover)


def cmd_validate(args, out) -> int:
    sig, *_ = _load(args)
    report = sig.derangement_analysis()
    print(f"types: {len(sig.types)}", file=out)
    print("intro:", file=out)
    for f in sorted(sig.intro):
        print(f"  {f}: {sig.intro[f]}", file=out)
    if report.deranged:
        parts = [f"{t} ({len(report.safe_products[t])} safe products)"
                 for t in sorted(report.deranged)]
        print("deranged: " + ", ".join(parts), file=out)
    else:
        print("deranged: none", file=out)
    return EXIT_OK


def cmd_compile(args, out) -> int:
    sig, grammar_text, sig_text, _ = _load(args)
    grammar = compile_grammar(sig, parse_grammar(grammar_text))
    for w in grammar.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.dump:
        text = dump_grammar(grammar)
        if text:
            print(text, file=out)
        return EXIT_OK
    target = Path(args.output) if args.output else default_cache_path(args.grammar)
    payload = {"format": CACHE_FORMAT, "version": CACHE_VERSION,
               "hash": content_hash(sig_text, grammar_text),
               "grammar": grammar_to_json(grammar)}
    target.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    print(f"wrote {target} ({len(grammar.constraints)} constraints)", file=out)
    return EXIT_OK


def cmd_query(args, out) -> int:
    sig, grammar_text, sig_text, _ = _load(args)
    cache = Path(args.cache) if args.cache else default_cache_path(args.grammar)
    grammar = load_grammar(sig, sig_text, grammar_text, cache, cover=not args.no_cover)
    desc = resolve(parse_description(args.description), sig)
    config = QueryConfig(maximize=args.maximize, answer_limit=args.limit,
                         extension_depth=args.extension_depth, sld_depth=args.sld_depth,
                         cover=not args.no_cover)
    trace = (lambda line: print(line, file=sys.stderr)) if args.trace else None
    result = solve_query(grammar, desc, config, trace)
    if args.json:
        payload = []
        for a in result.answers:
            data = to_json(a.fs)
            data["residue"] = len(a.residue)
            payload.append(data)
        print(json.dumps(payload, indent=1), file=out)
    else:
        for i, a in enumerate(result.answers, 1):
            print(f"answer {i}: {format_avm(a.fs)}", file=out)
            print(f"residue: {len(a.residue)}", file=out)
            for r in a.residue:
                print(f"  {r}", file=out)
    if not result.answers:
        print("no answers", file=sys.stderr if args.json else out)
    if result.bound_exceeded:
        print("error: runtime bound exceeded; answers may be incomplete", file=sys.stderr)
        return EXIT_BOUND
    return EXIT_OK if result.answers else EXIT_UNSAT


def cmd_oracle(args, out) -> int:
    sig, *_ = _load(args)
    desc = resolve(parse_description(args.description), sig)
    total, truncated = 0, False
    for m in mgsats(sig, desc):
        exts = maximal_extensions(m, args.limit - total)
        truncated |= exts.truncated
        for e in exts:
            total += 1
            print(format_avm(e), file=out)
        if total >= args.limit:
            break
    print(f"{total} maximal extension{'s' if total != 1 else ''}", file=out)
    return EXIT_BOUND if truncated else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tfsc", description="Typed feature structure constraint compiler and engine.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a signature and report deranged types")
    p.add_argument("--signature", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compile", help="compile a grammar")
    p.add_argument("--signature", required=True)
    p.add_argument("--grammar", required=True)
    p.add_argument("--dump", action="store_true", help="print triggers and programs")
    p.add_argument("--output", help="compiled grammar file (default: GRAMMAR.compiled.json)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("query", help="solve a description under a grammar")
    p.add_argument("--signature", required=True)
    p.add_argument("--grammar", required=True)
    p.add_argument("description")
    p.add_argument("--maximize", action="store_true")
    p.add_argument("--limit", type=int, default=100)
    p.add_argument("--extension-depth", type=int, default=64)
    p.add_argument("--sld-depth", type=int, default=200)
    p.add_argument("--json", action="store_true")
    p.add_argument("--trace", action="store_true", help="log store events to stderr")
    p.add_argument("--no-cover", action="store_true", help="disable subtype covering")
    p.add_argument("--cache", help="compiled grammar file to reuse if still current")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("oracle", help="list maximal extensions of a description")
    p.add_argument("--signature", required=True)
    p.add_argument("description")
    p.add_argument("--limit", type=int, default=1000)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (SignatureError, ParseError, GrammarError, UsageError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
