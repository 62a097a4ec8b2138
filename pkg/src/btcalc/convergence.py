"""Exhaustive convergence checking of behavior trees on finite models.

Given a level of abstraction ``L`` with an ordering, the sets

    C_i = ((union of Omega_j, j in L, j >= i) | S_0) & Cbar

must be invariant under the subtree controller ``u_i`` and no state may
stay in ``Omega_i`` forever.  On a finite deterministic model both hypotheses
are decidable: invariance is a one-step check over ``Omega_i & C_i`` and the
dwell bound is the longest path of the closed loop inside ``Omega_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .regions import RegionMap, analyze, validate_level
from .state import Region, State, intersect_all, union_all
from .tree import Fallback, Status, Tree
from .tree import Sequence as SeqNode
from .tree import simulate, tick


class ConvergenceError(ValueError):
    """The problem statement itself is invalid (bad level, labeling, ...)."""


@dataclass(frozen=True)
class ConvergenceProblem:
    """A tree, a level of abstraction, its ordering, and the region ``Cbar``.

    ``labeling`` lists the nodes of ``level`` in the order they receive the
    labels 1..N.
    """

    tree: Tree
    level: tuple[int, ...]
    labeling: tuple[int, ...]
    cbar: Region

    def __post_init__(self) -> None:
        if sorted(self.labeling) != sorted(self.level) or len(set(self.level)) != len(self.level):
            raise ConvergenceError("labeling must be a bijection onto the level")
        if not self.cbar:
            raise ConvergenceError("the external constraint region must be nonempty")

    @classmethod
    def make(
        cls,
        tree: Tree,
        labeling: Iterable[int],
        cbar: Region | None = None,
        level: Iterable[int] | None = None,
    ) -> "ConvergenceProblem":
        labeling = tuple(labeling)
        level = tuple(level) if level is not None else labeling
        return cls(tree, level, labeling, tree.model.full if cbar is None else cbar)

    @property
    def n(self) -> int:
        return len(self.labeling)


def _closed_loop(tree: Tree, node: int, states: Iterable[State]) -> dict[State, State]:
    """Successor of each state under the controller of subtree ``node``."""
    model = tree.model
    out = {}
    for x in states:
        status, leaf = tick(tree, x, node)
        if status is Status.RUNNING:
            out[x] = model.apply(tree.nodes[leaf].action, x)
    return out


def _regions(problem: ConvergenceProblem, rmap: RegionMap | None) -> RegionMap:
    return analyze(problem.tree) if rmap is None else rmap


def build_Ci(problem: ConvergenceProblem, rmap: RegionMap | None = None) -> dict[int, Region]:
    """The sets to keep invariant, keyed by node id, in labeling order."""
    rmap = _regions(problem, rmap)
    check = validate_level(rmap, problem.level)
    if not check.ok:
        raise ConvergenceError(f"not a level of abstraction: {check.reason} (state {check.witness})")
    out: dict[int, Region] = {}
    tail = rmap.S(0)
    for node in reversed(problem.labeling):
        tail = tail | rmap.omega(node)
        out[node] = tail & problem.cbar
    return {node: out[node] for node in problem.labeling}


@dataclass(frozen=True, slots=True)
class InvarianceResult:
    node: int
    ok: bool
    checked: int
    witness: tuple[State, State] | None = None


@dataclass(frozen=True, slots=True)
class DwellResult:
    node: int
    ok: bool
    tau: int | None
    cycle: tuple[State, ...] | None = None


@dataclass(frozen=True, slots=True)
class ExitViolation:
    """A one-step transition leaving the allowed forward regions."""

    node: int
    state: State
    successor: State
    kind: str  # "backward", "failure", "outside-cbar", "unlisted"
    target: int | None = None


def check_invariance(
    problem: ConvergenceProblem,
    i: int,
    rmap: RegionMap | None = None,
    c_sets: dict[int, Region] | None = None,
) -> InvarianceResult:
    """One-step invariance of ``C_i`` under ``u_i`` from every state of ``Omega_i & C_i``."""
    rmap = _regions(problem, rmap)
    c_sets = build_Ci(problem, rmap) if c_sets is None else c_sets
    c_i = c_sets[i]
    start = rmap.omega(i) & c_i
    succ = _closed_loop(problem.tree, i, start)
    for x in start:
        y = succ[x]
        if y not in c_i:
            return InvarianceResult(i, False, len(start), (x, y))
    return InvarianceResult(i, True, len(start))


def check_dwell(problem: ConvergenceProblem, i: int, rmap: RegionMap | None = None) -> DwellResult:
    """Longest stay in ``Omega_i`` under ``u_i``, or a cycle trapped inside it.

    ``tau`` counts steps: a state that leaves at once has ``tau = 1``.
    """
    rmap = _regions(problem, rmap)
    omega = rmap.omega(i)
    succ = _closed_loop(problem.tree, i, omega)
    inside = {x: y for x, y in succ.items() if y in omega}

    depth: dict[State, int] = {}
    for x0 in omega:
        if x0 in depth:
            continue
        path: list[State] = []
        on_path: dict[State, int] = {}
        x = x0
        while x not in depth:
            if x in on_path:
                return DwellResult(i, False, None, tuple(path[on_path[x]:]))
            on_path[x] = len(path)
            path.append(x)
            if x not in inside:
                break
            x = inside[x]
        d = depth.get(x, 0) if x not in on_path else 0
        for y in reversed(path):
            d += 1
            depth[y] = d
    tau = max(depth.values(), default=0)
    return DwellResult(i, True, tau)


def check_monotone_exit(
    problem: ConvergenceProblem,
    i: int,
    rmap: RegionMap | None = None,
) -> list[ExitViolation]:
    """Transitions from ``Omega_i & C_i`` that do not go forward or into ``S_0``."""
    rmap = _regions(problem, rmap)
    labels = {node: k for k, node in enumerate(problem.labeling)}
    c_i = build_Ci(problem, rmap)[i]
    start = rmap.omega(i) & c_i
    succ = _closed_loop(problem.tree, i, start)
    out = []
    for x in start:
        y = succ[x]
        if y not in problem.cbar:
            out.append(ExitViolation(i, x, y, "outside-cbar"))
        elif y in rmap.S(0):
            continue
        elif y in rmap.F(0):
            out.append(ExitViolation(i, x, y, "failure"))
        else:
            owner = next((j for j in problem.labeling if y in rmap.omega(j)), None)
            if owner is None:
                out.append(ExitViolation(i, x, y, "unlisted"))
            elif labels[owner] < labels[i]:
                out.append(ExitViolation(i, x, y, "backward", owner))
    return out


@dataclass(frozen=True)
class SimulationEvidence:
    starts: int
    reached: int
    max_steps_used: int
    counterexample: State | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.counterexample is None and self.reached == self.starts


@dataclass(frozen=True)
class ConvergenceCertificate:
    problem: ConvergenceProblem
    c_sets: dict[int, Region]
    invariance: tuple[InvarianceResult, ...]
    dwell: tuple[DwellResult, ...]
    exits: tuple[ExitViolation, ...]
    simulation: SimulationEvidence | None
    notes: tuple[str, ...] = field(default=())

    @property
    def hypotheses_hold(self) -> bool:
        return (
            all(r.ok for r in self.invariance)
            and all(r.ok for r in self.dwell)
            and not self.exits
        )

    @property
    def proven(self) -> bool:
        return self.hypotheses_hold and self.simulation is not None and self.simulation.ok

    @property
    def verdict(self) -> str:
        return "proven" if self.proven else "not-proven"

    @property
    def step_bound(self) -> int:
        """Sum of per-region dwell bounds."""
        return sum(r.tau or 0 for r in self.dwell)

    @property
    def uniform_bound(self) -> int:
        """``N * max tau_i``, the coarser form of the same bound."""
        taus = [r.tau or 0 for r in self.dwell]
        return len(taus) * max(taus, default=0)


def check_theorem(problem: ConvergenceProblem, rmap: RegionMap | None = None) -> ConvergenceCertificate:
    """Check every hypothesis and, if they hold, model-check the conclusion."""
    rmap = _regions(problem, rmap)
    c_sets = build_Ci(problem, rmap)
    invariance = tuple(check_invariance(problem, i, rmap, c_sets) for i in problem.labeling)
    dwell = tuple(check_dwell(problem, i, rmap) for i in problem.labeling)
    exits = tuple(v for i in problem.labeling for v in check_monotone_exit(problem, i, rmap))
    notes = []
    first = problem.labeling[0]
    if c_sets[first] == problem.cbar:
        notes.append("C_1 equals Cbar: the first region carries no constraint of its own")
    cert = ConvergenceCertificate(problem, c_sets, invariance, dwell, exits, None, tuple(notes))
    if not cert.hypotheses_hold:
        return cert
    evidence = _simulate_conclusion(problem, rmap, c_sets, cert.step_bound)
    return ConvergenceCertificate(problem, c_sets, invariance, dwell, exits, evidence, tuple(notes))


def _simulate_conclusion(
    problem: ConvergenceProblem,
    rmap: RegionMap,
    c_sets: dict[int, Region],
    bound: int,
) -> SimulationEvidence:
    """Run the root tree from every state of ``C_1`` and check that it converges."""
    tree = problem.tree
    model = tree.model
    labels = {node: k for k, node in enumerate(problem.labeling)}
    s0 = rmap.S(0)
    c1 = c_sets[problem.labeling[0]]
    starts = reached = used = 0
    for x0 in c1:
        starts += 1
        trace = simulate(model, tree, x0, max(bound, 1))
        if trace.steps[-1].status is not Status.SUCCESS or trace.transitions > bound:
            return SimulationEvidence(starts, reached, used, x0, f"ended with {trace.reason.value}")
        current = 0
        for st in trace.steps:
            if st.state not in problem.cbar:
                return SimulationEvidence(starts, reached, used, x0, "left Cbar")
            if st.state in s0:
                break
            owner = next((j for j in problem.labeling if st.state in rmap.omega(j)), None)
            if owner is None or labels[owner] < current:
                return SimulationEvidence(starts, reached, used, x0, "moved backward")
            current = labels[owner]
        reached += 1
        used = max(used, trace.transitions)
    return SimulationEvidence(starts, reached, used)


# ---------------------------------------------------------------------------
# closed forms for sequences and implicit sequences


@dataclass(frozen=True, slots=True)
class SequenceRow:
    label: int
    node: int
    I: Region
    omega: Region
    C: Region


def standard_sequence_sets(tree: Tree, cbar: Region | None = None) -> list[SequenceRow]:
    """Closed-form I_i, Omega_i, C_i for a root Sequence, labels left to right."""
    if not isinstance(tree.root, SeqNode):
        raise ConvergenceError("standard sequence sets need a Sequence root")
    model = tree.model
    cbar = model.full if cbar is None else cbar
    rmap = analyze(tree)
    s0 = rmap.S(0)
    rows = []
    prefix = model.full
    for label, node in enumerate(tree.children[0], start=1):
        inf = prefix & rmap.I(0)
        rows.append(SequenceRow(label, node, inf, inf & rmap.R(node), (prefix | s0) & cbar))
        prefix = prefix & rmap.S(node)
    return rows


@dataclass(frozen=True, slots=True)
class ImplicitRow:
    label: int
    node: int
    I: Region
    omega: Region
    C_hat: Region
    C: Region
    cover_witness: int | None  # label j > i with S_j | R_j covering S_i


@dataclass(frozen=True)
class ImplicitSequenceResult:
    rows: tuple[ImplicitRow, ...]
    hypothesis_ok: bool
    violations: tuple[int, ...]  # labels i < N lacking a covering j
    subset_ok: bool  # C_hat_i is contained in C_i for every i


def implicit_sequence_sets(tree: Tree, cbar: Region | None = None) -> ImplicitSequenceResult:
    """Closed-form sets for a root Fallback numbered right to left."""
    if not isinstance(tree.root, Fallback):
        raise ConvergenceError("implicit sequence sets need a Fallback root")
    model = tree.model
    cbar = model.full if cbar is None else cbar
    rmap = analyze(tree)
    kids = tree.children[0]
    n = len(kids)
    by_label = {n - pos: node for pos, node in enumerate(kids)}
    labeling = [by_label[k] for k in range(1, n + 1)]
    c_sets = build_Ci(ConvergenceProblem(tree, tuple(labeling), tuple(labeling), cbar), rmap)

    rows = []
    violations = []
    subset_ok = True
    for i in range(1, n + 1):
        node = by_label[i]
        inf = intersect_all(model, (rmap.F(by_label[j]) for j in range(i + 1, n + 1))) & rmap.I(0)
        witness = None
        if i < n:
            s_i = rmap.S(node)
            for j in range(i + 1, n + 1):
                if s_i <= (rmap.S(by_label[j]) | rmap.R(by_label[j])):
                    witness = j
                    break
            if witness is None:
                violations.append(i)
        c_hat = (rmap.R(node) | rmap.S(node)) & cbar
        subset_ok &= c_hat <= c_sets[node]
        rows.append(ImplicitRow(i, node, inf, inf & rmap.R(node), c_hat, c_sets[node], witness))
    return ImplicitSequenceResult(tuple(rows), not violations, tuple(violations), subset_ok)


# ---------------------------------------------------------------------------
# probabilistic transitions


@dataclass(frozen=True, slots=True)
class ProbabilisticBounds:
    n: int
    p: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("N must be at least 1")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")

    @property
    def gamma(self) -> float:
        return 1.0 - self.p**self.n

    @property
    def expected_bound(self) -> float:
        return self.n / self.p**self.n

    def P(self, k: int | float) -> float:
        """Probability of reaching the goal after at most ``k`` setbacks."""
        if k == math.inf:
            return 1.0
        return 1.0 - self.gamma ** (k + 1)


def probabilistic_bounds(n: int, p: float) -> ProbabilisticBounds:
    return ProbabilisticBounds(n, p)


@dataclass(frozen=True)
class ProbabilisticChain:
    """Ordered regions 1..N; region ``i`` advances with probability ``probs[i-1]``."""

    probs: tuple[float, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.probs:
            raise ValueError("the chain needs at least one region")
        if not all(0.0 < q <= 1.0 for q in self.probs):
            raise ValueError("advance probabilities must lie in (0, 1]")

    @classmethod
    def uniform(cls, n: int, p: float, seed: int = 0) -> "ProbabilisticChain":
        return cls((p,) * n, seed)

    @property
    def n(self) -> int:
        return len(self.probs)

    @property
    def p(self) -> float:
        return min(self.probs)


@dataclass(frozen=True)
class MonteCarloResult:
    trials: int
    mean_transitions: float
    stderr: float
    expected_bound: float
    p_k: tuple[float, ...]  # empirical P(setbacks <= k), k = 0, 1, ...
    mode: str

    @property
    def bound_holds(self) -> bool:
        return self.mean_transitions <= self.expected_bound + 3.0 * self.stderr


def monte_carlo_chain(
    chain: ProbabilisticChain,
    trials: int,
    mode: str = "uniform",
    k_max: int = 20,
) -> MonteCarloResult:
    """Simulate the region chain until every trial reaches the goal.

    A failed step in region ``i`` is a setback: it regresses to a uniformly
    drawn earlier region (``mode="uniform"``) or to region 1
    (``mode="worst"``); in region 1 it stays put.  ``T`` counts all steps.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if mode not in ("uniform", "worst"):
        raise ValueError(f"unknown regression mode {mode!r}")
    rng = np.random.default_rng(chain.seed)
    n = chain.n
    probs = np.asarray(chain.probs)
    pos = np.ones(trials, dtype=np.int64)  # 1..n, n+1 = goal
    steps = np.zeros(trials, dtype=np.int64)
    setbacks = np.zeros(trials, dtype=np.int64)
    active = np.ones(trials, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        here = pos[idx]
        steps[idx] += 1
        advance = rng.random(idx.size) < probs[here - 1]
        fail = idx[~advance]
        setbacks[fail] += 1
        if mode == "worst":
            back = np.ones(fail.size, dtype=np.int64)
        else:
            upper = np.maximum(pos[fail] - 1, 1)
            back = 1 + (rng.random(fail.size) * upper).astype(np.int64)
        pos[fail] = back
        pos[idx[advance]] += 1
        active[idx[advance]] = pos[idx[advance]] <= n
    mean = float(steps.mean())
    stderr = float(steps.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    counts = np.bincount(setbacks, minlength=k_max + 1)
    cdf = np.cumsum(counts)[: k_max + 1] / trials
    return MonteCarloResult(
        trials, mean, stderr, n / chain.p**n, tuple(float(v) for v in cdf), mode
    )


@dataclass(frozen=True, slots=True)
class PkCheck:
    k: int
    empirical: float
    formula: float
    sigma: float
    ok: bool


def pk_checks(result: MonteCarloResult, bounds: ProbabilisticBounds, z: float = 3.0) -> list[PkCheck]:
    """Compare empirical ``P(setbacks <= k)`` with the closed form.

    ``sigma`` is the binomial standard error at the formula value.  Under
    worst-case regression the formula is exact, so the test is two sided;
    under uniform regression it is a lower bound and only a shortfall counts.
    """
    out = []
    for k, emp in enumerate(result.p_k):
        f = bounds.P(k)
        sigma = math.sqrt(max(f * (1.0 - f), 0.0) / result.trials)
        tol = z * sigma + 1e-12
        ok = abs(emp - f) <= tol if result.mode == "worst" else emp >= f - tol
        out.append(PkCheck(k, emp, f, sigma, ok))
    return out


def all_c_union(rmap: RegionMap, nodes: Sequence[int]) -> Region:
    return union_all(rmap.tree.model, (rmap.omega(j) for j in nodes))


__all__ = [
    "ConvergenceError",
    "ConvergenceProblem",
    "ConvergenceCertificate",
    "ProbabilisticBounds",
    "ProbabilisticChain",
    "PkCheck",
    "pk_checks",
    "MonteCarloResult",
    "build_Ci",
    "check_invariance",
    "check_dwell",
    "check_monotone_exit",
    "check_theorem",
    "standard_sequence_sets",
    "implicit_sequence_sets",
    "probabilistic_bounds",
    "monte_carlo_chain",
]
