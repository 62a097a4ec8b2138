"""Textual DSL for models, actions, trees, goal lists, checks and CBF scenarios."""

from .document import CbfDecl, CheckDecl, Document, DocumentError, GoalsDecl, ModelDecl, TreeDecl
from .printer import serialize, serialize_node
from .syntax import Diagnostic, ParseResult, Span, parse, tokenize

__all__ = [
    "CbfDecl",
    "CheckDecl",
    "Diagnostic",
    "Document",
    "DocumentError",
    "GoalsDecl",
    "ModelDecl",
    "ParseResult",
    "Span",
    "TreeDecl",
    "parse",
    "serialize",
    "serialize_node",
    "tokenize",
]
