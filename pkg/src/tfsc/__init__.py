"""Typed feature structures with compiled implicational constraints."""

from .compiler import CompiledGrammar, compile_grammar, compile_principle
from .desclang import parse_description, parse_goal, parse_grammar, parse_signature
from .engine import Engine, QueryConfig, QueryResult, solve_query
from .satisfier import mgsats, satisfies
from .signature import BOT, SignatureError, TypeSignature, load_signature
from .tfs import FeatureStructure, decode, encode, parse_avm, subsumes

__all__ = [
    "BOT", "CompiledGrammar", "Engine", "FeatureStructure", "QueryConfig", "QueryResult",
    "SignatureError", "TypeSignature", "compile_grammar", "compile_principle", "decode",
    "encode", "load_signature", "mgsats", "parse_avm", "parse_description", "parse_goal",
    "parse_grammar", "parse_signature", "satisfies", "solve_query", "subsumes",
]
