"""Region calculus, convergence checking, synthesis and safety filtering for behavior trees."""

from __future__ import annotations

from .convergence import ConvergenceCertificate, ConvergenceProblem, check_theorem
from .decision import DecisionStructure, compile_to_ds, essential_complexity, is_bt_equivalent
from .dsl import Document, parse, serialize
from .regions import RegionMap, analyze, verify_partition
from .state import ActionSpec, Assign, Predicate, Region, Variable, WorldModel
from .synthesis import backchain
from .tree import Condition, Fallback, Leaf, Sequence, Status, Tree, simulate, tick

__version__ = "0.1.0"

__all__ = [
    "ActionSpec",
    "Assign",
    "Condition",
    "ConvergenceCertificate",
    "ConvergenceProblem",
    "DecisionStructure",
    "Document",
    "Fallback",
    "Leaf",
    "Predicate",
    "Region",
    "RegionMap",
    "Sequence",
    "Status",
    "Tree",
    "Variable",
    "WorldModel",
    "analyze",
    "backchain",
    "check_theorem",
    "compile_to_ds",
    "essential_complexity",
    "is_bt_equivalent",
    "parse",
    "serialize",
    "simulate",
    "tick",
    "verify_partition",
]
