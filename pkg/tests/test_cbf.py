from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from btcalc.cbf import (
    CbfError,
    CbfProblem,
    HalfspaceSet,
    SafetyInfeasible,
    feasible_prefix,
    filter_control,
    integrate,
    is_nonempty,
    project,
    uinv_halfspaces,
)
from btcalc.expr import ONE, ZERO, Num, Sym, gradient, mul, neg, sub

X1 = Sym(1)


def wall(kappa: float = 1.0, nominal=ZERO) -> CbfProblem:
    """``xdot = u`` on the line with ``h = 1 - x``."""
    return CbfProblem.integrator(1, [sub(ONE, X1)], [nominal], 5.0, kappa)


def test_single_barrier_halfspace():
    p = wall()
    hs = uinv_halfspaces(p, [0.0], 1)
    assert hs.contains(np.array([1.0])) and not hs.contains(np.array([1.01]))
    hs1 = uinv_halfspaces(p, [1.0], 1)
    assert hs1.contains(np.array([0.0])) and not hs1.contains(np.array([0.01]))
    with pytest.raises(CbfError):
        uinv_halfspaces(p, [0.0], 2)


def test_prefix_drops_conflicting_barrier():
    # h1 = x asks u >= 0 at the origin; h2 = -1 - x asks u <= -1
    p = CbfProblem.integrator(1, [X1, sub(neg(ONE), X1)], [ZERO], 5.0, 1.0)
    j, _ = feasible_prefix(p, [0.0])
    assert j == 1
    assert filter_control(p, [0.0])[0] == pytest.approx(0.0)


def test_prefix_keeps_compatible_barriers():
    # h1 = 1 - x and h2 = 2 + x bracket the origin
    p = CbfProblem.integrator(1, [sub(ONE, X1), sub(Num(2.0), neg(X1))], [ZERO], 5.0, 1.0)
    j, hs = feasible_prefix(p, [0.0])
    assert j == 2 and hs.A.shape == (2, 1)


def test_top_barrier_infeasible_in_box():
    p = CbfProblem.integrator(1, [sub(ONE, X1)], [ZERO], 0.1, 1.0)
    with pytest.raises(SafetyInfeasible):
        feasible_prefix(p, [3.0])


def test_projection_onto_box():
    hs = HalfspaceSet(np.zeros((0, 2)), np.zeros(0), -np.ones(2), np.ones(2))
    sol = project(np.array([2.0, 0.5]), hs)
    assert np.allclose(sol.u, [1.0, 0.5])
    assert len(sol.active) == 1


def test_projection_onto_halfspace():
    hs = HalfspaceSet(np.array([[1.0, 1.0]]), np.array([1.0]), -5 * np.ones(2), 5 * np.ones(2))
    sol = project(np.zeros(2), hs)
    assert np.allclose(sol.u, [0.5, 0.5])
    assert sol.multipliers[0] == pytest.approx(0.5)


def test_nonempty_detection():
    box = (-np.ones(2), np.ones(2))
    assert is_nonempty(HalfspaceSet(np.array([[1.0, 0.0]]), np.array([0.5]), *box))
    assert not is_nonempty(HalfspaceSet(np.array([[1.0, 0.0]]), np.array([1.5]), *box))


def test_stationary_trace():
    p = wall()
    tr = integrate(p, [0.25], 1.0, 0.1)
    assert len(tr) == 11
    assert np.allclose(tr.x, 0.25) and np.allclose(tr.u, 0.0)
    assert np.all(tr.prefix == 1)


def test_barrier_stops_the_nominal_push():
    p = wall(kappa=5.0, nominal=Num(1.0))
    tr = integrate(p, [0.0], 3.0, 0.01)
    assert tr.x[-1, 0] == pytest.approx(1.0, abs=1e-3)
    assert tr.min_h()[0] >= -1e-9


def test_integrate_arguments():
    with pytest.raises(CbfError):
        integrate(wall(), [0.0], 1.0, 0.0)
    with pytest.raises(CbfError):
        integrate(wall(), [0.0, 1.0], 1.0, 0.1)


def test_problem_validation():
    with pytest.raises(CbfError):
        CbfProblem.integrator(5, [X1], [ZERO] * 5, 1.0, 1.0)
    with pytest.raises(CbfError):
        CbfProblem.integrator(1, [Sym(2)], [ZERO], 1.0, 1.0)
    with pytest.raises(CbfError):
        CbfProblem.integrator(1, [X1], [ZERO], 1.0, 0.0)
    with pytest.raises(CbfError):
        CbfProblem.integrator(1, [], [ZERO], 1.0, 1.0)


def test_csv_and_json_output():
    tr = integrate(wall(nominal=Num(0.5)), [0.0], 0.2, 0.1)
    rows = list(csv.reader(io.StringIO(tr.to_csv())))
    assert rows[0] == ["t", "x1", "u1", "h1", "prefix"]
    assert len(rows) == 1 + len(tr)
    assert float(rows[2][1]) == pytest.approx(0.05)
    data = json.loads(tr.to_json())
    assert data["min_h"] == tr.min_h().tolist() and data["dt"] == 0.1


def test_disk_scenario(cbf_doc):
    decl = cbf_doc.cbf("disk")
    tr = integrate(decl.problem(), decl.x0, 10.0, 1e-3)
    assert tr.min_h()[0] >= -1e-6
    assert np.linalg.norm(tr.x[-1]) == pytest.approx(1.0, abs=1e-2)


def test_charger_scenario_keeps_the_disk(cbf_doc):
    decl = cbf_doc.cbf("charger")
    tr = integrate(decl.problem(), decl.x0, 20.0, 1e-3)
    assert tr.min_h()[0] >= -1e-6
    # the charger lies outside the safe disk, so barrier 2 is given up
    assert tr.prefix[-1] == 1
    assert tr.x[-1, 0] == pytest.approx(1.0, abs=1e-3)


def test_gradient_of_quadratic():
    h = sub(ONE, mul(X1, X1))
    (d,) = gradient(h, 1)
    assert d.evaluate([3.0]) == pytest.approx(-6.0)


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.lists(st.floats(-1, 1), min_size=2, max_size=2),
    st.lists(st.floats(-3, 3), min_size=2, max_size=2),
)
def test_projection_matches_general_solver(a_flat, b, w):
    a = np.array(a_flat).reshape(2, 2)
    hs = HalfspaceSet(a, np.array(b), -np.ones(2), np.ones(2))
    w = np.array(w)
    if not is_nonempty(hs):
        return
    sol = project(w, hs)
    assert hs.contains(sol.u, 1e-7)
    rows, rhs = hs.rows()
    ref = minimize(
        lambda u: float(np.sum((u - w) ** 2)),
        np.clip(w, -1, 1),
        jac=lambda u: 2 * (u - w),
        constraints=[{"type": "ineq", "fun": lambda u: rows @ u - rhs, "jac": lambda u: rows}],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 500},
    )
    if ref.success:
        assert np.sum((sol.u - w) ** 2) <= np.sum((ref.x - w) ** 2) + 1e-6
