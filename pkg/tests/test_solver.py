import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from glap.errors import SolverError
from glap.mesh import interval_mesh, rectangle_mesh
from glap.solver import (DiscreteProblem, direct_solve, energy, find_positive_solution,
                         inner_solve, nehari_amplitude, residual, torsion_bump)
from glap.source import ScalarLaw, SourceTerm, lane_emden
from glap.young import YoungFunction
from oracles import lane_emden_1d, plap_closed_form

QUAD = YoungFunction.power(2)
CUBE = YoungFunction.power(3)
SLACK = 1e-13


def poisson_1d(h, yf=QUAD, **kw):
    return DiscreteProblem(interval_mesh(0, 1, h), yf, **kw)


def observed_orders(errs):
    return [math.log2(a / b) for a, b in zip(errs, errs[1:])]


# ---------------------------------------------------------------------------
# problem container

def test_problem_validation():
    m = interval_mesh(0, 1, 0.25)
    with pytest.raises(ValueError):
        DiscreteProblem(m, QUAD, epsilon=0.1)
    with pytest.raises(ValueError):
        DiscreteProblem(m, QUAD, lam=-1)
    assert DiscreteProblem(m, QUAD).replace(lam=2.0).lam == 2.0


# ---------------------------------------------------------------------------
# residual

def test_residual_vanishes_at_zero():
    dp = DiscreteProblem(rectangle_mesh(0, 1, 0, 1, 0.25), CUBE, L=3.0)
    n = dp.mesh.n_vertices
    np.testing.assert_array_equal(residual(dp, np.zeros(n), np.zeros(n)), 0.0)


def test_linear_case_matches_hand_assembled_system():
    h = 0.25
    dp = poisson_1d(h)
    # interior stiffness (1/h) tridiag(-1, 2, -1) and lumped load h * 1
    K = (np.diag([2.0] * 3) - np.diag([1.0] * 2, 1) - np.diag([1.0] * 2, -1)) / h
    ref = np.linalg.solve(K, np.full(3, h))
    u, rep = inner_solve(dp, np.ones(5), tol=1e-12)
    assert rep.converged
    np.testing.assert_allclose(u.values[1:-1], ref, rtol=1e-10)
    assert np.abs(residual(dp, u, np.ones(5))).max() <= 1e-10


def test_residual_boundary_rows_carry_values():
    dp = poisson_1d(0.25)
    u = np.array([0.5, 1.0, 1.0, 1.0, -0.25])
    r = residual(dp, u)
    assert (r[0], r[-1]) == (0.5, -0.25)


def test_residual_rejects_nonfinite():
    dp = poisson_1d(0.25)
    psi = np.array([0, 0, np.inf, 0, 0.0])
    with pytest.raises(SolverError) as exc:
        residual(dp, np.zeros(5), psi)
    assert exc.value.node == 2


# ---------------------------------------------------------------------------
# inner solver

def test_inner_zero_load_is_immediate():
    u, rep = inner_solve(DiscreteProblem(rectangle_mesh(0, 1, 0, 1, 0.25), CUBE), 0.0 * np.ones(41))
    assert rep.converged and rep.iterations <= 1
    assert u.sup() == 0.0


def test_inner_manufactured_sine_second_order():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        dp = poisson_1d(h)
        x = dp.mesh.vertices[:, 0]
        u, rep = inner_solve(dp, np.pi ** 2 * np.sin(np.pi * x), tol=1e-12)
        assert rep.converged
        errs.append(np.abs(u.values - np.sin(np.pi * x)).max())
    assert min(observed_orders(errs)) >= 1.8


def test_inner_p3_torsion_maximum():
    dp = DiscreteProblem(interval_mesh(-1, 1, 1 / 512), CUBE)
    u, rep = inner_solve(dp, np.ones(dp.mesh.n_vertices), tol=1e-10)
    assert rep.converged
    assert u.sup() == pytest.approx(2 / 3, abs=1e-3)


def test_inner_p3_convergence_in_h():
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        dp = DiscreteProblem(interval_mesh(-1, 1, h), CUBE)
        x = dp.mesh.vertices[:, 0]
        u, _ = inner_solve(dp, np.ones_like(x), tol=1e-10)
        errs.append(np.abs(u.values - plap_closed_form(x, 3.0)).max())
    assert min(observed_orders(errs)) >= 1.0


@pytest.mark.parametrize("yf,L", [(CUBE, 0.0), (YoungFunction.power(1.5), 1.0),
                                  (YoungFunction.plog(2, 1), 2.0),
                                  (YoungFunction.double_power(2, 3), 0.5)])
def test_inner_energy_descent(yf, L):
    dp = DiscreteProblem(rectangle_mesh(0, 1, 0, 1, 0.125), yf, L=L)
    x, y = dp.mesh.vertices.T
    u, rep = inner_solve(dp, 20 * np.sin(3 * x) * (1 + y), tol=1e-10)
    assert rep.converged
    e = np.asarray(rep.energy_history)
    assert np.all(np.diff(e) <= SLACK * (1 + np.abs(e[:-1])))
    assert rep.residual_history[-1] <= 1e-10 * max(1.0, np.linalg.norm(
        (dp.mesh.vertex_masses * 20 * np.sin(3 * x) * (1 + y))[dp.mesh.free]))
    assert energy(dp, u, 20 * np.sin(3 * x) * (1 + y)) == pytest.approx(e[-1], rel=1e-14)


MESH_2D = rectangle_mesh(0, 1, 0, 1, 0.25)


@settings(max_examples=25)
@given(arrays(float, MESH_2D.n_vertices, elements=st.floats(0, 50)),
       st.sampled_from([QUAD, CUBE, YoungFunction.plog(2, 1)]), st.floats(0, 5))
def test_inner_solution_is_nonnegative_for_nonnegative_load(psi, yf, L):
    u, rep = inner_solve(DiscreteProblem(MESH_2D, yf, L=L), psi, tol=1e-10)
    assert rep.converged
    assert u.values.min() >= -1e-10


def test_inner_epsilon_robustness():
    sups = []
    for eps in (1e-6, 5e-7):
        dp = DiscreteProblem(interval_mesh(-1, 1, 1 / 64), CUBE, epsilon=eps)
        u, _ = inner_solve(dp, np.ones(dp.mesh.n_vertices), tol=1e-12)
        sups.append(u.sup())
    assert abs(sups[0] - sups[1]) <= 1e-6


def test_inner_nonfinite_load_rejected():
    dp = poisson_1d(0.25)
    with pytest.raises(SolverError):
        inner_solve(dp, np.array([0, 1, np.nan, 1, 0.0]))


# ---------------------------------------------------------------------------
# direct solver

def test_direct_trivial_problem_from_any_start():
    dp = poisson_1d(1 / 16)
    x = dp.mesh.vertices[:, 0]
    u, rep = direct_solve(dp, 5 * np.sin(np.pi * x) + x * (1 - x) * 30)
    assert rep.converged and u.sup() <= 1e-8


def test_direct_poisson_maximum():
    dp = poisson_1d(1 / 32, lam=1.0)
    u, rep = direct_solve(dp, np.zeros(dp.mesh.n_vertices))
    assert rep.converged
    assert u.sup() == pytest.approx(1 / 8, rel=1e-12)


def test_direct_p3_closed_form():
    dp = DiscreteProblem(interval_mesh(-1, 1, 1 / 256), CUBE, lam=1.0)
    x = dp.mesh.vertices[:, 0]
    u, rep = direct_solve(dp, 0.5 * (1 - x * x))
    assert rep.converged
    assert np.abs(u.values - plap_closed_form(x, 3.0)).max() <= 2e-3


def test_direct_lane_emden_against_shooting():
    dp = DiscreteProblem(interval_mesh(0, 1, 1 / 256), QUAD, source=lane_emden(4))
    u, rep = find_positive_solution(dp, tol=1e-10)
    assert rep.converged and rep.residual_history[-1] <= 1e-8
    _, oracle = lane_emden_1d(4.0, 1.0)
    x = dp.mesh.vertices[:, 0]
    assert np.abs(u.values - oracle(x)).max() <= 1e-3
    assert u.values.min() >= 0


def test_direct_escape_flag():
    dp = DiscreteProblem(interval_mesh(0, 1, 1 / 32), QUAD, source=lane_emden(4))
    u, rep = direct_solve(dp, 1e7 * torsion_bump(dp.mesh))
    assert rep.escaped and not rep.converged


def test_direct_matches_inner_with_frozen_source():
    # B(x, u, p) := psi(x) - L g(u) turns the direct problem into the inner one
    L = 2.0
    dp_in = DiscreteProblem(interval_mesh(0, 1, 1 / 64), CUBE, L=L)
    x = dp_in.mesh.vertices[:, 0]
    psi = 5 + 3 * np.cos(2 * x)
    src = SourceTerm(lambda X, t, p: 5 + 3 * np.cos(2 * X[:, 0]) - L * t * np.abs(t),
                     ScalarLaw("power", 2.0), 3.0,
                     dt=lambda X, t, p: -2 * L * np.abs(t))
    dp_dir = DiscreteProblem(dp_in.mesh, CUBE, source=src)
    u_in, _ = inner_solve(dp_in, psi, tol=1e-12)
    u_dir, rep = direct_solve(dp_dir, np.zeros_like(x), tol=1e-12)
    assert rep.converged
    assert np.abs(u_in.values - u_dir.values).max() <= 1e-8


def test_nehari_amplitude_balances_energy():
    dp = DiscreteProblem(interval_mesh(0, 1, 1 / 64), QUAD, source=lane_emden(4))
    a = nehari_amplitude(dp, torsion_bump(dp.mesh))
    # for B = u^3 the Nehari scaling is exact: a^2 = |w'|^2 / int w^4
    w = torsion_bump(dp.mesh)
    m = dp.mesh
    gr = np.diff(w) / np.diff(m.vertices[:, 0])
    ref = math.sqrt(np.sum(m.element_measures * gr ** 2) / np.sum(m.vertex_masses * w ** 4))
    assert a == pytest.approx(ref, rel=1e-10)
    assert nehari_amplitude(poisson_1d(1 / 8), torsion_bump(interval_mesh(0, 1, 1 / 8))) is None
