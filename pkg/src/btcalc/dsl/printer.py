"""Canonical text form of documents; ``parse(serialize(d))`` equals ``d``."""

from __future__ import annotations

from ..expr import Expr
from ..state import FALSE, ActionSpec, Assign, Predicate, Value
from ..tree import Condition, Fallback, Leaf, Node, Sequence
from .document import CbfDecl, CheckDecl, Document

INDENT = "  "


def _lit(value: Value | None) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def quote(text: str) -> str:
    body = text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return f'"{body}"'


def _num(value: float) -> str:
    return repr(float(value))


def _assign(a: Assign) -> str:
    if a.condition is None:
        return f"{a.var} := {_lit(a.value)}"
    return f"{a.var} := if {a.condition.to_text()} then {_lit(a.value)} else {_lit(a.otherwise)}"


def serialize_action(action: ActionSpec) -> str:
    lines = [f"action {action.id} {{"]
    for p in action.preconditions:
        lines.append(f"{INDENT}pre: {p.to_text()};")
    if action.assignments:
        lines.append(f"{INDENT}effect: {', '.join(_assign(a) for a in action.assignments)};")
    if action.post is not None:
        lines.append(f"{INDENT}post: {action.post.to_text()};")
    lines.append("}")
    return "\n".join(lines)


def serialize_node(node: Node, depth: int = 0) -> str:
    pad = INDENT * depth
    prefix = ""
    if node.name is not None:
        prefix += "name " + quote(node.name) + " "
    if node.expanded:
        prefix += "expanded "
    if isinstance(node, (Sequence, Fallback)):
        head = "seq" if isinstance(node, Sequence) else "fall"
        kids = ",\n".join(serialize_node(k, depth + 1) for k in node.children)
        return f"{pad}{prefix}{head}(\n{kids}\n{pad})"
    if isinstance(node, Condition):
        return f"{pad}{prefix}cond({node.predicate.to_text()})"
    args = [node.action]
    if node.success is not None:
        args.append(f"S={node.success.to_text()}")
    if node.failure != FALSE:
        args.append(f"F={node.failure.to_text()}")
    return f"{pad}{prefix}act({', '.join(args)})"


def _preds(preds: tuple[Predicate, ...]) -> str:
    return ", ".join(p.to_text() for p in preds)


def _exprs(exprs: tuple[Expr, ...]) -> str:
    return ", ".join(e.to_text() for e in exprs)


def serialize_check(c: CheckDecl) -> str:
    lines = [f"check {c.name} {{", f"{INDENT}tree: {c.tree};"]
    if c.level is not None:
        lines.append(f"{INDENT}level: {', '.join(map(str, c.level))};")
    if c.labeling is not None:
        lines.append(f"{INDENT}labeling: {', '.join(map(str, c.labeling))};")
    if c.cbar is not None:
        lines.append(f"{INDENT}cbar: {c.cbar.to_text()};")
    lines.append("}")
    return "\n".join(lines)


def serialize_cbf(c: CbfDecl) -> str:
    lines = [f"cbf {c.name} {{", f"{INDENT}dim: {c.n}, {c.m};"]
    if len(set(c.u_lo)) == 1 and len(set(c.u_hi)) == 1:
        box = [c.u_lo[0], c.u_hi[0]]
    else:
        box = [v for pair in zip(c.u_lo, c.u_hi) for v in pair]
    lines.append(f"{INDENT}box: {', '.join(_num(v) for v in box)};")
    if c.x0 is not None:
        lines.append(f"{INDENT}x0: {', '.join(_num(v) for v in c.x0)};")
    if c.drift is not None:
        lines.append(f"{INDENT}drift: {_exprs(c.drift)};")
    if c.input is not None:
        lines.append(f"{INDENT}input: {_exprs(c.input)};")
    for h in c.barriers:
        lines.append(f"{INDENT}barrier: {h.to_text()};")
    lines.append(f"{INDENT}alpha: {_num(c.alpha)};")
    lines.append(f"{INDENT}nominal: {_exprs(c.nominal)};")
    lines.append("}")
    return "\n".join(lines)


def serialize(doc: Document) -> str:
    """Canonical text: model, actions, trees, goals, checks, then scenarios."""
    blocks = []
    if doc.model is not None:
        lines = [f"model {doc.model.name} {{"]
        for v in doc.model.variables:
            kind = "bool" if v.is_bool else "enum { " + ", ".join(map(str, v.values)) + " }"
            lines.append(f"{INDENT}{v.name}: {kind};")
        lines.append("}")
        blocks.append("\n".join(lines))
    blocks.extend(serialize_action(a) for a in doc.actions)
    blocks.extend(f"tree {t.name} =\n{serialize_node(t.root, 1)}" for t in doc.trees)
    blocks.extend(f"goals {g.name} = [{_preds(g.goals)}]" for g in doc.goals)
    blocks.extend(serialize_check(c) for c in doc.checks)
    blocks.extend(serialize_cbf(c) for c in doc.cbfs)
    return "\n\n".join(blocks) + "\n" if blocks else ""
