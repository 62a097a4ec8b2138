"""Deterministic Graphviz DOT export for trees, decision structures and decompositions."""

from __future__ import annotations

from typing import Callable, Hashable, Iterable

from .decision import DecisionStructure, Decomposition
from .tree import Condition, Fallback, Leaf, Sequence, Tree

SEQ_SYMBOL = "→"
FALL_SYMBOL = "?"


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def tree_to_dot(tree: Tree, collapse: Iterable[int] = ()) -> str:
    """Nodes in preorder; ``collapse`` hides the subtrees below the given ids.

    Interior nodes show their symbol and id; conditions are ovals; expanded
    (double-stroked) nodes get a second outline.
    """
    hidden: set[int] = set()
    folded = set(collapse)
    for i in sorted(folded):
        hidden.update(j for j in tree.subtree(i) if j != i)
    lines = [f"digraph {_q(tree.name)} {{", "  node [fontname=\"Helvetica\"];", "  ordering=out;"]
    for i, node in enumerate(tree.nodes):
        if i in hidden:
            continue
        attrs: list[str] = []
        if isinstance(node, (Sequence, Fallback)):
            symbol = SEQ_SYMBOL if isinstance(node, Sequence) else FALL_SYMBOL
            label = f"{symbol} {i}"
            if node.name is not None:
                label += f"\n{node.name}"
            attrs += ["shape=box"]
        elif isinstance(node, Condition):
            label = f"{tree.display_name(i)} ({i})"
            attrs += ["shape=ellipse"]
        else:
            assert isinstance(node, Leaf)
            label = f"{tree.display_name(i)} ({i})"
            attrs += ["shape=box", "style=rounded"]
        if i in folded and tree.children[i]:
            label += "\n..."
            attrs.append("style=dashed")
        if node.expanded:
            attrs.append("peripheries=2")
        attrs.insert(0, f"label={_q(label)}")
        lines.append(f"  n{i} [{', '.join(attrs)}];")
    for i in range(len(tree)):
        if i in hidden or i in folded:
            continue
        for k in tree.children[i]:
            lines.append(f"  n{i} -> n{k};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def ds_to_dot(
    ds: DecisionStructure,
    name: str = "ds",
    label: Callable[[Hashable], str] = str,
) -> str:
    """Nodes in index order, arcs sorted; the source has a bold outline."""
    lines = [f"digraph {_q(name)} {{", "  node [fontname=\"Helvetica\", shape=box];"]
    lines += _ds_body(ds, "d", label, "  ")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _ds_body(ds: DecisionStructure, prefix: str, label, pad: str) -> list[str]:
    out = []
    for i, node in enumerate(ds.nodes):
        extra = ", style=bold" if i == ds.source else ""
        out.append(f"{pad}{prefix}{i} [label={_q(label(node))}{extra}];")
    for u, lbl, v in sorted(ds.edges):
        out.append(f"{pad}{prefix}{u} -> {prefix}{v} [label={_q(lbl)}];")
    return out


def decomposition_to_dot(
    dec: Decomposition,
    name: str = "decomposition",
    label: Callable[[Hashable], str] = str,
) -> str:
    """One cluster per quotient graph, visited depth first."""
    lines = [f"digraph {_q(name)} {{", "  node [fontname=\"Helvetica\", shape=box];"]
    counter = 0

    def block_label(block: Hashable) -> str:
        members = block if isinstance(block, tuple) else (block,)
        return "{" + ", ".join(label(m) for m in members) + "}"

    def visit(d: Decomposition) -> None:
        nonlocal counter
        if d.quotient is None:
            return
        k = counter
        counter += 1
        lines.append(f"  subgraph cluster_{k} {{")
        lines.append(f"    label={_q('quotient ' + str(k))};")
        lines.extend(_ds_body(d.quotient, f"q{k}_", block_label, "    "))
        lines.append("  }")
        for child in d.children:
            visit(child)

    visit(dec)
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(obj, **kwargs) -> str:
    """Dispatch on the object type."""
    if isinstance(obj, Tree):
        return tree_to_dot(obj, **kwargs)
    if isinstance(obj, DecisionStructure):
        return ds_to_dot(obj, **kwargs)
    if isinstance(obj, Decomposition):
        return decomposition_to_dot(obj, **kwargs)
    raise TypeError(f"cannot export {type(obj).__name__} to DOT")
