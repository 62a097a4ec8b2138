"""Prioritised control barrier function filter for control-affine systems.

Dynamics are ``xdot = g0(x) + G(x) u`` with a box on ``u``.  Barrier ``h_i``
admits the controls ``U_i = {u in box : grad h_i . (g0 + G u) >= -kappa h_i}``,
which is one halfspace in ``u``.  The filter keeps the longest feasible
priority prefix of these sets and projects the nominal control onto it.

Both the feasibility test and the projection enumerate active sets exactly;
with ``m <= 3`` controls and a handful of constraints that is a few dozen
tiny linear solves, batched through numpy.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, TextIO

import numpy as np

from .expr import ONE, ZERO, Expr, compile_vector, gradient

FEAS_TOL = 1e-9
MAX_STATE_DIM = 4
MAX_CONTROL_DIM = 3


class CbfError(ValueError):
    """Invalid barrier problem."""


class SafetyInfeasible(RuntimeError):
    """Even the top-priority admissible set is empty at this state."""

    def __init__(self, message: str, state: Sequence[float], trace: "ContinuousTrace | None" = None):
        super().__init__(message)
        self.state = tuple(state)
        self.trace = trace


@dataclass(frozen=True)
class CbfProblem:
    """Control-affine system, box, prioritised barriers and a nominal control.

    ``barriers[0]`` has the highest priority.  ``nominal`` holds ``m``
    expressions in the state.  ``alpha(s) = kappa * s``.
    """

    n: int
    m: int
    drift: tuple[Expr, ...]
    input: tuple[tuple[Expr, ...], ...]
    u_lo: tuple[float, ...]
    u_hi: tuple[float, ...]
    barriers: tuple[Expr, ...]
    kappa: float
    nominal: tuple[Expr, ...]
    name: str = "cbf"

    def __post_init__(self) -> None:
        if not (1 <= self.n <= MAX_STATE_DIM and 1 <= self.m <= MAX_CONTROL_DIM):
            raise CbfError(f"dimensions must satisfy n <= {MAX_STATE_DIM}, m <= {MAX_CONTROL_DIM}")
        if len(self.drift) != self.n or len(self.input) != self.n:
            raise CbfError("drift and input need one entry per state coordinate")
        if any(len(row) != self.m for row in self.input):
            raise CbfError("each input row needs one entry per control")
        if len(self.u_lo) != self.m or len(self.u_hi) != self.m:
            raise CbfError("box bounds need one entry per control")
        if any(lo > hi for lo, hi in zip(self.u_lo, self.u_hi)):
            raise CbfError("control box is empty")
        if not self.kappa > 0:
            raise CbfError("kappa must be positive")
        if not self.barriers:
            raise CbfError("at least one barrier is required")
        if len(self.nominal) != self.m:
            raise CbfError("the nominal controller needs one expression per control")
        exprs = [*self.drift, *itertools.chain(*self.input), *self.barriers, *self.nominal]
        for e in exprs:
            if any(not 1 <= k <= self.n for k in e.symbols()):
                raise CbfError(f"expression {e} uses a symbol beyond x{self.n}")

    @classmethod
    def integrator(
        cls,
        n: int,
        barriers: Sequence[Expr],
        nominal: Sequence[Expr],
        bound: float,
        kappa: float,
        name: str = "cbf",
    ) -> "CbfProblem":
        """``xdot = u`` with a symmetric box."""
        rows = tuple(tuple(ONE if r == c else ZERO for c in range(n)) for r in range(n))
        return cls(
            n, n, (ZERO,) * n, rows, (-bound,) * n, (bound,) * n,
            tuple(barriers), kappa, tuple(nominal), name,
        )

    @property
    def k(self) -> int:
        return len(self.barriers)

    @cached_property
    def _fns(self):
        grads = [e for h in self.barriers for e in gradient(h, self.n)]
        return (
            compile_vector(self.barriers),
            compile_vector(grads),
            compile_vector(self.drift),
            compile_vector(list(itertools.chain(*self.input))),
            compile_vector(self.nominal),
        )

    def h(self, x: Sequence[float]) -> np.ndarray:
        return np.asarray(self._fns[0](x), dtype=float)

    def grad_h(self, x: Sequence[float]) -> np.ndarray:
        return np.asarray(self._fns[1](x), dtype=float).reshape(self.k, self.n)

    def g0(self, x: Sequence[float]) -> np.ndarray:
        return np.asarray(self._fns[2](x), dtype=float)

    def G(self, x: Sequence[float]) -> np.ndarray:
        return np.asarray(self._fns[3](x), dtype=float).reshape(self.n, self.m)

    def w(self, x: Sequence[float]) -> np.ndarray:
        return np.asarray(self._fns[4](x), dtype=float)

    def xdot(self, x: Sequence[float], u: np.ndarray) -> np.ndarray:
        return self.g0(x) + self.G(x) @ u


@dataclass(frozen=True)
class HalfspaceSet:
    """``{u : A u >= b, lo <= u <= hi}``; rows of ``A`` follow barrier priority."""

    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """All constraints as ``A u >= b``, box included."""
        eye = np.eye(len(self.lo))
        return np.vstack([self.A, eye, -eye]), np.concatenate([self.b, self.lo, -self.hi])

    def contains(self, u: np.ndarray, tol: float = FEAS_TOL) -> bool:
        a, b = self.rows()
        return bool(np.all(a @ u >= b - tol * (1.0 + np.abs(b))))

    def prefix(self, j: int) -> "HalfspaceSet":
        return HalfspaceSet(self.A[:j], self.b[:j], self.lo, self.hi)


def _constraints(problem: CbfProblem, x: Sequence[float]) -> HalfspaceSet:
    grad = problem.grad_h(x)
    a = grad @ problem.G(x)
    b = -problem.kappa * problem.h(x) - grad @ problem.g0(x)
    return HalfspaceSet(a, b, np.asarray(problem.u_lo, float), np.asarray(problem.u_hi, float))


def uinv_halfspaces(problem: CbfProblem, x: Sequence[float], i: int) -> HalfspaceSet:
    """Admissible set of barrier ``i`` (1-based) at ``x``, box included."""
    if not 1 <= i <= problem.k:
        raise CbfError(f"barrier index {i} out of range 1..{problem.k}")
    full = _constraints(problem, x)
    return HalfspaceSet(full.A[i - 1 : i], full.b[i - 1 : i], full.lo, full.hi)


_COMBOS: dict[tuple[int, int], np.ndarray] = {}


def _combos(k: int, s: int) -> np.ndarray:
    key = (k, s)
    if key not in _COMBOS:
        _COMBOS[key] = np.array(list(itertools.combinations(range(k), s)), dtype=np.intp).reshape(-1, s)
    return _COMBOS[key]


def _feasible(a: np.ndarray, b: np.ndarray, points: np.ndarray) -> np.ndarray:
    slack = points @ a.T - b
    return np.all(slack >= -FEAS_TOL * (1.0 + np.abs(b)), axis=-1)


def is_nonempty(hs: HalfspaceSet, hint: np.ndarray | None = None) -> bool:
    """Exact emptiness test by vertex enumeration (the box keeps it bounded)."""
    a, b = hs.rows()
    m = a.shape[1]
    if hint is not None and _feasible(a, b, hint[None, :])[0]:
        return True
    idx = _combos(len(b), m)
    sub_a = a[idx]
    det = np.linalg.det(sub_a)
    ok = np.abs(det) > 1e-12
    if not ok.any():
        return False
    verts = np.linalg.solve(sub_a[ok], b[idx[ok]][..., None])[..., 0]
    return bool(_feasible(a, b, verts).any())


@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    active: tuple[int, ...]  # indices into ``HalfspaceSet.rows()``
    multipliers: np.ndarray


def project(w: np.ndarray, hs: HalfspaceSet) -> QpSolution:
    """Exact minimiser of ``|u - w|^2`` over ``hs`` by active-set enumeration.

    Candidate active sets are tried by size; the first candidate meeting all
    KKT conditions is the unique optimum.
    """
    a, b = hs.rows()
    m = a.shape[1]
    w = np.asarray(w, dtype=float)
    if _feasible(a, b, w[None, :])[0]:
        return QpSolution(w.copy(), (), np.zeros(0))
    for s in range(1, m + 1):
        idx = _combos(len(b), s)
        sub_a = a[idx]
        gram = sub_a @ np.swapaxes(sub_a, 1, 2)
        ok = np.abs(np.linalg.det(gram)) > 1e-12
        if not ok.any():
            continue
        idx, sub_a, gram = idx[ok], sub_a[ok], gram[ok]
        rhs = b[idx] - sub_a @ w
        lam = np.linalg.solve(gram, rhs[..., None])[..., 0]
        u = w + np.einsum("csm,cs->cm", sub_a, lam)
        good = np.all(lam >= -1e-12, axis=1) & _feasible(a, b, u)
        if good.any():
            c = int(np.flatnonzero(good)[0])
            return QpSolution(u[c], tuple(int(v) for v in idx[c]), lam[c])
    raise SafetyInfeasible("projection found no feasible point", w)


def feasible_prefix(
    problem: CbfProblem, x: Sequence[float], upto: int | None = None, hint: np.ndarray | None = None
) -> tuple[int, HalfspaceSet]:
    """Largest ``j <= upto`` with the first ``j`` admissible sets intersecting."""
    upto = problem.k if upto is None else upto
    full = _constraints(problem, x)
    best = 0
    for j in range(1, upto + 1):
        if not is_nonempty(full.prefix(j), hint):
            break
        best = j
    if best == 0:
        raise SafetyInfeasible("the top-priority barrier admits no control in the box", x)
    return best, full.prefix(best)


@dataclass(frozen=True)
class FilterResult:
    u: np.ndarray
    prefix: int
    nominal: np.ndarray
    solution: QpSolution


def filter_step(problem: CbfProblem, x: Sequence[float], i: int | None = None) -> FilterResult:
    w = problem.w(x)
    j, hs = feasible_prefix(problem, x, i, hint=w)
    sol = project(w, hs)
    return FilterResult(sol.u, j, w, sol)


def filter_control(problem: CbfProblem, x: Sequence[float], i: int | None = None) -> np.ndarray:
    """Closest control to the nominal one within the feasible prefix of ``1..i``."""
    return filter_step(problem, x, i).u


@dataclass
class ContinuousTrace:
    """Uniform-grid rollout; every array has one row per grid point."""

    dt: float
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    h: np.ndarray
    prefix: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    def min_h(self) -> np.ndarray:
        return self.h.min(axis=0)

    def columns(self) -> list[str]:
        n, m, k = self.x.shape[1], self.u.shape[1], self.h.shape[1]
        return (
            ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
            + [f"h{i + 1}" for i in range(k)] + ["prefix"]
        )

    def write_csv(self, out: TextIO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns())
        for r in range(len(self.t)):
            writer.writerow(
                [repr(float(self.t[r]))]
                + [repr(float(v)) for v in (*self.x[r], *self.u[r], *self.h[r])]
                + [int(self.prefix[r])]
            )

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "t": self.t.tolist(),
            "x": self.x.tolist(),
            "u": self.u.tolist(),
            "h": self.h.tolist(),
            "prefix": self.prefix.tolist(),
            "min_h": self.min_h().tolist(),
            **({"meta": self.meta} if self.meta else {}),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def integrate(
    problem: CbfProblem,
    x0: Sequence[float],
    T: float,
    dt: float,
    i: int | None = None,
) -> ContinuousTrace:
    """Explicit Euler rollout applying the filter at every grid point."""
    if not dt > 0 or not T >= dt:
        raise CbfError("need dt > 0 and T >= dt")
    if len(x0) != problem.n:
        raise CbfError(f"x0 needs {problem.n} coordinates")
    steps = int(math.floor(T / dt + 1e-9))
    t = np.arange(steps + 1) * dt
    xs = np.zeros((steps + 1, problem.n))
    us = np.zeros((steps + 1, problem.m))
    hs = np.zeros((steps + 1, problem.k))
    pre = np.zeros(steps + 1, dtype=np.int64)
    x = np.asarray(x0, dtype=float)
    for r in range(steps + 1):
        xs[r] = x
        hs[r] = problem.h(x)
        try:
            res = filter_step(problem, x, i)
        except SafetyInfeasible as exc:
            partial = ContinuousTrace(dt, t[:r], xs[:r], us[:r], hs[:r], pre[:r])
            raise SafetyInfeasible(str(exc), x, partial) from None
        us[r] = res.u
        pre[r] = res.prefix
        x = x + dt * problem.xdot(x, res.u)
    return ContinuousTrace(dt, t, xs, us, hs, pre)
