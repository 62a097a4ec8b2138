"""JSON-ready views of analysis results, with a pinned schema tag."""

from __future__ import annotations

import json
from typing import Any

from .convergence import ConvergenceCertificate, MonteCarloResult, ProbabilisticBounds
from .regions import PartitionReport, RegionMap
from .state import State, WorldModel
from .tree import Trace, Tree, explain

SCHEMA = "btcalc/1"


def envelope(kind: str, payload: dict[str, Any], source_hash: str | None = None) -> dict[str, Any]:
    out = {"schema": SCHEMA, "kind": kind, **payload}
    if source_hash is not None:
        out["input_sha256"] = source_hash
    return out


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def state_dict(model: WorldModel, state: State | None) -> dict[str, Any] | None:
    return None if state is None else model.unpack(state)


def _kind(tree: Tree, i: int) -> str:
    return type(tree.nodes[i]).__name__.lower()


def regions_to_dict(rmap: RegionMap, report: PartitionReport, states: bool = False) -> dict[str, Any]:
    tree = rmap.tree
    nodes = []
    for i in range(len(tree)):
        row: dict[str, Any] = {
            "id": i,
            "name": tree.display_name(i),
            "kind": _kind(tree, i),
            "S": len(rmap.S(i)),
            "F": len(rmap.F(i)),
            "R": len(rmap.R(i)),
            "I": len(rmap.I(i)),
            "omega": len(rmap.omega(i)),
        }
        if states:
            row["omega_states"] = list(rmap.omega(i))
        nodes.append(row)
    return {
        "tree": tree.name,
        "states": tree.model.size,
        "nodes": nodes,
        "partition": {
            "ok": report.ok,
            "triples_ok": report.triples_ok,
            "parent_child_ok": report.parent_child_ok,
            "leaf_ok": report.leaf_ok,
            "violations": [
                {
                    "kind": v.kind,
                    "node": v.node,
                    "count": v.count,
                    "state": state_dict(tree.model, v.state),
                    "detail": v.detail,
                }
                for v in report.violations
            ],
        },
    }


def certificate_to_dict(cert: ConvergenceCertificate) -> dict[str, Any]:
    prob = cert.problem
    tree = prob.tree
    model = tree.model
    rows = []
    for label, node in enumerate(prob.labeling, start=1):
        inv = next(r for r in cert.invariance if r.node == node)
        dw = next(r for r in cert.dwell if r.node == node)
        rows.append(
            {
                "label": label,
                "node": node,
                "name": tree.display_name(node),
                "C_states": len(cert.c_sets[node]),
                "invariance": {
                    "ok": inv.ok,
                    "checked": inv.checked,
                    "witness": None
                    if inv.witness is None
                    else {"state": model.unpack(inv.witness[0]), "successor": model.unpack(inv.witness[1])},
                },
                "dwell": {
                    "ok": dw.ok,
                    "tau": dw.tau,
                    "cycle": None if dw.cycle is None else [model.unpack(s) for s in dw.cycle],
                },
            }
        )
    sim = cert.simulation
    return {
        "tree": tree.name,
        "verdict": cert.verdict,
        "regions": rows,
        "exits": [
            {
                "node": e.node,
                "kind": e.kind,
                "target": e.target,
                "state": model.unpack(e.state),
                "successor": model.unpack(e.successor),
            }
            for e in cert.exits
        ],
        "bound": {"sum_tau": cert.step_bound, "n_max_tau": cert.uniform_bound},
        "simulation": None
        if sim is None
        else {
            "ok": sim.ok,
            "starts": sim.starts,
            "reached": sim.reached,
            "max_steps_used": sim.max_steps_used,
            "counterexample": state_dict(model, sim.counterexample),
            "detail": sim.detail,
        },
        "notes": list(cert.notes),
    }


def trace_to_dict(tree: Tree, trace: Trace, with_explain: bool = False) -> dict[str, Any]:
    model = tree.model
    steps = []
    for st in trace.steps:
        row: dict[str, Any] = {
            "state": model.unpack(st.state),
            "status": st.status.value,
            "leaf": st.leaf,
            "action": None if st.leaf is None else tree.nodes[st.leaf].action,
        }
        if with_explain and st.leaf is not None:
            row["explain"] = explain(tree, st.state)
        steps.append(row)
    return {"tree": tree.name, "reason": trace.reason.value, "transitions": trace.transitions, "steps": steps}


def montecarlo_to_dict(result: MonteCarloResult, bounds: ProbabilisticBounds, seed: int) -> dict[str, Any]:
    return {
        "n": bounds.n,
        "p": bounds.p,
        "seed": seed,
        "mode": result.mode,
        "trials": result.trials,
        "mean_transitions": result.mean_transitions,
        "stderr": result.stderr,
        "expected_bound": bounds.expected_bound,
        "gamma": bounds.gamma,
        "bound_holds": result.bound_holds,
        "p_k": [
            {"k": k, "empirical": v, "formula": bounds.P(k)} for k, v in enumerate(result.p_k)
        ],
    }
