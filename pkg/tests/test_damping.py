"""Constrained quadratic minimisation of the control cost."""

import numpy as np
import pytest

from treedamp.piecewise import PiecewisePoly
from treedamp.trees import interval, star
from treedamp.expressions import CoefficientError, CoefficientSet, energy
from treedamp.damping import (
    Control,
    IndefiniteGramError,
    assemble,
    default_mesh,
    energy_dominance_check,
    optimality_check,
    solve_damping,
    weak_residual_symbolic,
)
from treedamp.meshing import Basis, history_lift


def _first_order_interval(T=3.0, tau=1.0):
    tr = interval(T)
    cs = CoefficientSet.build(tr, 1, tau, b={(1, 1): 1.0}, c={})
    return tr, cs


def test_degenerate_interval_linear_decay():
    # pure derivative cost: the optimum decays linearly over the active
    # window and the P1 space contains it, so the energy is exact at q = 1
    tr, cs = _first_order_interval(T=3.0, tau=1.0)
    phi = PiecewisePoly.constant(-1.0, 0.0, 1.0)
    for q in (1, 4):
        sol = solve_damping(tr, cs, phi, q=q)
        assert sol.energy == pytest.approx(0.5, rel=1e-12)
        assert sol.y.component(1).eval(1.0) == pytest.approx(0.5, abs=1e-10)
    # whole-interval rest: T = 2 leaves only [0, 1] active
    tr2, cs2 = _first_order_interval(T=2.0, tau=1.0)
    sol2 = solve_damping(tr2, cs2, PiecewisePoly.constant(-1.0, 0.0, 1.0), q=2)
    assert sol2.energy == pytest.approx(1.0, rel=1e-12)


def test_degenerate_star_balances_flux():
    # equal-length star with derivative cost: vertex value 1/5, energy 2/5
    tr = star([2.0, 2.0, 2.0])
    cs = CoefficientSet.build(tr, 1, 1.0, b={(1, j): 1.0 for j in range(1, 4)}, c={})
    phi = PiecewisePoly.constant(-1.0, 0.0, 1.0)
    sol = solve_damping(tr, cs, phi, q=2)
    assert sol.energy == pytest.approx(0.4, rel=1e-12)
    assert sol.y.component(1).left_limit(2.0) == pytest.approx(0.2, abs=1e-10)
    # flux balance at the vertex: y_1' = y_2' + y_3'
    out = sum(sol.y.component(j).right_limit(0.0, 1) for j in (2, 3))
    assert sol.y.component(1).left_limit(2.0, 1) == pytest.approx(out, abs=1e-9)


def test_energy_identity_through_gram_system():
    # J(lift + w) = J(lift) - Re(x^H f) at the Gram solution
    tr = interval(3.0)
    cs = CoefficientSet.build(
        tr, 1, 1.0, b={(1, 1): 1.0, (0, 1): 0.5}, c={(1, 1): 0.3, (0, 1): -0.2}
    )
    phi = PiecewisePoly.from_global_coefs(-1.0, 0.0, [1.0, 0.5])
    sol = solve_damping(tr, cs, phi, q=4)
    J_lift = energy(sol.lift, cs)
    J_pred = J_lift - float(np.real(np.vdot(sol.dofs, sol.gram.rhs)))
    assert sol.energy == pytest.approx(J_pred, rel=1e-11)
    assert sol.energy == pytest.approx(energy(sol.y, cs), rel=1e-12)


def test_solution_is_admissible_up_to_history():
    tr = star([2.0, 2.0, 2.0])
    cs = CoefficientSet.build(
        tr, 1, 0.5,
        b={(1, j): 1.0 for j in range(1, 4)} | {(0, 2): 0.4},
        c={(1, 1): 0.25, (0, 3): 0.6},
    )
    phi = PiecewisePoly.from_global_coefs(-0.5, 0.0, [1.0, -1.0])
    sol = solve_damping(tr, cs, phi, q=4)
    assert sol.y.history_defect() < 1e-10
    assert sol.y.vertex_defect() < 1e-10
    for j in (2, 3):
        Tj = tr.length(j)
        tail = sol.y.component(j).restrict(Tj - 0.5, Tj)
        assert np.sqrt(tail.l2_norm_sq()) < 1e-12


def test_energy_decreases_under_refinement():
    tr = interval(3.0)
    cs = CoefficientSet.build(
        tr, 1, 1.0, b={(1, 1): 1.0, (0, 1): 1.0}, c={(1, 1): 0.5, (0, 1): 0.25}
    )
    phi = PiecewisePoly.from_global_coefs(-1.0, 0.0, [1.0, 1.0])
    energies = [solve_damping(tr, cs, phi, q=q).energy for q in (1, 2, 4, 8)]
    for a, b in zip(energies, energies[1:]):
        assert b <= a + 1e-12
    assert energies[-1] > 0.0


def test_optimality_residual_is_small():
    tr = star([2.0, 2.0, 2.0])
    cs = CoefficientSet.build(
        tr, 1, 0.5,
        b={(1, j): 1.0 for j in range(1, 4)} | {(0, 1): 0.3},
        c={(1, 2): 0.4, (0, 1): 0.2},
    )
    phi = PiecewisePoly.from_global_coefs(-0.5, 0.0, [1.0, 0.5])
    sol = solve_damping(tr, cs, phi, q=4)
    opt = optimality_check(sol)
    assert opt["max_rel"] < 1e-10
    dom = energy_dominance_check(sol, trials=50, seed=3)
    assert dom["ok"], dom


def test_weak_residual_agrees_with_grid_route():
    tr = interval(3.0)
    cs = CoefficientSet.build(
        tr, 1, 1.0, b={(1, 1): 1.0, (0, 1): 0.7}, c={(1, 1): 0.2, (0, 1): 0.4}
    )
    phi = PiecewisePoly.from_global_coefs(-1.0, 0.0, [1.0, 1.0])
    sol = solve_damping(tr, cs, phi, q=3)
    grid_route = optimality_check(sol)
    weak_route = weak_residual_symbolic(sol.y, sol.basis, sol.coeffs)
    assert np.allclose(
        weak_route["per_basis"], grid_route["per_basis"], atol=1e-12
    )


def test_gram_matrix_is_hermitian_positive_definite():
    rng = np.random.default_rng(42)
    tr = star([2.0, 2.0, 2.0])
    for _ in range(5):
        coefs = {}
        for j in range(1, 4):
            coefs[(1, j)] = 1.0 + 0.5 * abs(rng.standard_normal())
        bmap = dict(coefs)
        bmap[(0, 1)] = rng.standard_normal()
        cmap = {(1, 2): 0.5 * rng.standard_normal(), (0, 3): rng.standard_normal()}
        cs = CoefficientSet.build(tr, 1, 0.6, b=bmap, c=cmap)
        mesh = default_mesh(tr, cs, 2)
        basis = Basis(mesh, 1)
        lift = history_lift(mesh, 1, PiecewisePoly.constant(-0.6, 0.0, 1.0))
        gram = assemble(basis, lift, cs)
        assert gram.hermiticity_defect() < 1e-12
        # PD: Cholesky succeeds and the diagonal is positive
        L = np.linalg.cholesky(gram.matrix)
        assert np.min(np.diag(L).real) > 0.0


def test_leading_coefficient_zero_is_rejected_at_build():
    tr = interval(3.0)
    dip = PiecewisePoly(
        np.array([0.0, 1.0, 1.5, 3.0]),
        [np.array([1.0]), np.array([0.0]), np.array([1.0])],
    )
    with pytest.raises(CoefficientError, match="away from zero"):
        CoefficientSet.build(tr, 1, 1.0, b={(1, 1): dip}, c={})


def test_degenerate_operator_raises_indefinite_gram():
    # forging a coefficient set past validation (leading term identically
    # zero) must surface as the dedicated factorisation error, not junk
    tr, cs = _first_order_interval()
    zero = PiecewisePoly.zero(0.0, 3.0)
    bad = object.__new__(CoefficientSet)
    for name, val in (
        ("tree", cs.tree), ("n", cs.n), ("tau", cs.tau),
        ("b", ((zero,), (zero,))), ("c", cs.c),
    ):
        object.__setattr__(bad, name, val)
    phi = PiecewisePoly.constant(-1.0, 0.0, 1.0)
    with pytest.raises(IndefiniteGramError):
        solve_damping(tr, bad, phi, q=2)


def test_quadrature_floor_does_not_change_energy():
    tr = interval(3.0)
    cs = CoefficientSet.build(
        tr, 1, 1.0, b={(1, 1): 1.0, (0, 1): 0.5}, c={(0, 1): 0.25}
    )
    phi = PiecewisePoly.from_global_coefs(-1.0, 0.0, [1.0, 0.5])
    base = solve_damping(tr, cs, phi, q=3)
    bumped = solve_damping(tr, cs, phi, q=3, min_points=12)
    assert bumped.energy == pytest.approx(base.energy, rel=1e-13)
    assert len(bumped.gram.grid.flat_weights) > len(base.gram.grid.flat_weights)


def test_damping_is_linear_in_history():
    tr, cs0 = _first_order_interval()
    cs = CoefficientSet.build(
        tr, 1, 1.0, b={(1, 1): 1.0, (0, 1): 0.3}, c={(1, 1): 0.6, (0, 1): -0.1}
    )
    phi1 = PiecewisePoly.from_global_coefs(-1.0, 0.0, [1.0, 1.0])
    phi2 = PiecewisePoly.from_global_coefs(-1.0, 0.0, [0.5, 0.0, -1.0])
    s1 = solve_damping(tr, cs, phi1, q=3)
    s2 = solve_damping(tr, cs, phi2, q=3)
    s12 = solve_damping(tr, cs, phi1 + phi2, q=3)
    diff = s12.y.component(1) - s1.y.component(1) - s2.y.component(1)
    assert np.sqrt(diff.l2_norm_sq()) < 1e-10
    sd = solve_damping(tr, cs, phi1 * 2.0, q=3)
    assert sd.energy == pytest.approx(4.0 * s1.energy, rel=1e-11)


def test_short_boundary_edge_warns():
    tr = interval(1.5)
    cs = CoefficientSet.build(tr, 1, 1.0, b={(1, 1): 1.0}, c={})
    phi = PiecewisePoly.constant(-1.0, 0.0, 1.0)
    with pytest.warns(UserWarning, match="two delay spans"):
        solve_damping(tr, cs, phi, q=2)


def test_default_mesh_seeds_vertex_wavefronts():
    tr = star([2.0, 2.0, 2.0])
    cs = CoefficientSet.build(tr, 1, 0.8, b={(1, j): 1.0 for j in range(1, 4)}, c={})
    mesh = default_mesh(tr, cs, 1)
    for j in (2, 3):
        xs = mesh.nodes[j - 1]
        # images of the branching instant T_1 = 2: local 0.8, 1.6
        for t in (0.8, 1.6):
            assert np.min(np.abs(xs - t)) < 1e-9


def test_second_order_problem_runs_and_is_optimal():
    tr = interval(4.0)
    cs = CoefficientSet.build(tr, 2, 1.0, b={(2, 1): 1.0}, c={(1, 1): 1.0})
    phi = PiecewisePoly.from_global_coefs(-1.0, 0.0, [1.0, 1.0, 0.5])
    sol = solve_damping(tr, cs, phi, q=3)
    assert sol.energy > 0.0
    assert optimality_check(sol)["max_rel"] < 1e-9
    assert sol.y.smoothness_defect() < 1e-9  # C^1 trial space
