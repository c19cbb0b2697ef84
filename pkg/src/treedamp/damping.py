"""Energy-optimal damping by constrained quadratic minimisation.

The optimal trajectory minimises the control cost over ``lift + V_h`` where
``V_h`` is the discrete perturbation space; equivalently it solves the
normal equations ``G x = f`` with the Gram matrix of the energy product on
basis pairs and the right side driven by the history lift.  ``G`` is
Hermitian positive definite whenever the leading coefficients stay away
from zero, so the solve is a single Cholesky factorisation.

Assembly evaluates every ``L w_p`` once, symbolically, then integrates on a
shared Gauss grid whose cells refine all breakpoints involved, which makes
the quadrature exact for the polynomial integrands at hand.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .expressions import (
    CoefficientSet,
    TreeFunction,
    apply_operator,
    energy,
    energy_product_reindexed,
    operator_components,
)
from .meshing import Basis, DelayMesh, build_mesh, history_lift
from .piecewise import PiecewisePoly, merge_breaks
from .trees import Tree


class IndefiniteGramError(np.linalg.LinAlgError):
    """The Gram matrix failed the positive-definite factorisation.

    With admissible data this signals coefficient degeneracy, typically a
    leading instantaneous coefficient passing through zero."""


@dataclass
class Control:
    """Per-edge control inputs as piecewise polynomials on ``[0, T_j]``."""

    tree: Tree
    components: tuple

    def __post_init__(self):
        if len(self.components) != self.tree.m:
            raise ValueError("one control component per edge required")

    def component(self, j: int) -> PiecewisePoly:
        return self.components[j - 1]

    @classmethod
    def zero(cls, tree: Tree) -> "Control":
        return cls(tree, tuple(PiecewisePoly.zero(0.0, tree.length(j)) for j in range(1, tree.m + 1)))

    def norm_sq(self) -> float:
        return sum(p.l2_norm_sq() for p in self.components)


class _QuadGrid:
    """Shared per-edge Gauss grids refining a family of breakpoint sets."""

    def __init__(self, tree: Tree, break_sets: list, max_degree: int, min_points: int = 0):
        self.points = []
        self.weights = []
        npts = max(max_degree + 1, min_points)
        gx, gw = np.polynomial.legendre.leggauss(npts)
        for j in range(1, tree.m + 1):
            tol = 1e-12 * max(1.0, tree.length(j))
            cells = merge_breaks(break_sets[j - 1], tol)
            a = cells[:-1]
            h = np.diff(cells)
            pts = (a[:, None] + 0.5 * h[:, None] * (gx[None, :] + 1.0)).ravel()
            wts = (0.5 * h[:, None] * gw[None, :]).ravel()
            self.points.append(pts)
            self.weights.append(wts)
        self.flat_weights = np.concatenate(self.weights)

    def eval_edges(self, polys: list) -> np.ndarray:
        return np.concatenate([p.values(pts) for p, pts in zip(polys, self.points)])


@dataclass
class GramSystem:
    """Normal equations of the discrete minimisation.

    ``matrix[p, r]`` is the energy product of basis function ``r`` against
    basis function ``p``; ``rhs[p]`` is minus the product of the lift
    against basis function ``p``.  The evaluation grid and the basis-image
    values are kept for reuse by the optimality diagnostics.
    """

    matrix: np.ndarray
    rhs: np.ndarray
    basis: Basis
    grid: _QuadGrid
    basis_values: np.ndarray  # ndof x nquad values of L w_p
    lift_values: np.ndarray  # nquad values of L lift

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def solve(self) -> np.ndarray:
        if self.matrix.size == 0:
            # fully clamped space: the lift is the only candidate
            return np.zeros(0, dtype=complex)
        try:
            cf = scipy.linalg.cho_factor(self.matrix, lower=False)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteGramError(
                "Gram matrix is not positive definite; check that the leading "
                "instantaneous coefficients stay away from zero"
            ) from exc
        return scipy.linalg.cho_solve(cf, self.rhs)


def assemble(
    basis: Basis, lift: TreeFunction, coeffs: CoefficientSet, min_points: int = 0
) -> GramSystem:
    """Build the Gram system on the given basis around the given lift.

    The Gauss grid carries one point more than the largest integrand degree
    per cell, so every entry is integrated exactly; ``min_points`` can only
    raise that count (useful for demonstrating grid independence), never
    lower it.
    """
    tree = basis.mesh.tree
    ells = [operator_components(basis.unit(p), coeffs) for p in range(basis.ndof)]
    lift_ell = operator_components(lift, coeffs)

    break_sets = []
    max_deg = 0
    for j in range(1, tree.m + 1):
        sets = [lift_ell[j - 1].breaks]
        max_deg = max(max_deg, lift_ell[j - 1].max_degree)
        for row in ells:
            sets.append(row[j - 1].breaks)
            max_deg = max(max_deg, row[j - 1].max_degree)
        break_sets.append(sets)

    grid = _QuadGrid(tree, break_sets, max_deg, min_points)
    L = np.empty((basis.ndof, len(grid.flat_weights)), dtype=complex)
    for p, row in enumerate(ells):
        L[p] = grid.eval_edges(row)
    Lphi = grid.eval_edges(lift_ell)
    w = grid.flat_weights

    Lw = L.conj() * w[None, :]
    G = Lw @ L.T
    f = -(Lw @ Lphi)
    return GramSystem(matrix=G, rhs=f, basis=basis, grid=grid, basis_values=L, lift_values=Lphi)


@dataclass
class DampingSolution:
    """Output of :func:`solve_damping`."""

    y: TreeFunction
    control: Control
    energy: float
    dofs: np.ndarray
    basis: Basis
    lift: TreeFunction
    gram: GramSystem
    coeffs: CoefficientSet

    @property
    def mesh(self) -> DelayMesh:
        return self.basis.mesh


def default_mesh(tree: Tree, coeffs: CoefficientSet, q: int) -> DelayMesh:
    """Mesh used by the solvers: wavefronts from the initial instant and
    from every branching vertex, coefficient breakpoints pinned to nodes."""
    sources = {0.0}
    for j in range(1, tree.d + 1):
        sources.add(tree.depth_offset(j) + tree.length(j))
    local = {j: coeffs.breakpoints(j) for j in range(1, tree.m + 1)}
    return build_mesh(tree, coeffs.tau, q, sources=tuple(sorted(sources)), local_points=local)


def solve_damping(
    tree: Tree,
    coeffs: CoefficientSet,
    phi: PiecewisePoly,
    q: int = 8,
    mesh: DelayMesh | None = None,
    min_points: int = 0,
) -> DampingSolution:
    """Minimise the control cost subject to history and rest constraints.

    The trajectory is the history lift plus the Gram-system solution in the
    constrained Hermite space; the induced control is the edge operator
    applied to the trajectory, and the reported energy is its squared norm.
    """
    for j in range(tree.d + 1, tree.m + 1):
        if tree.length(j) < 2 * coeffs.tau:
            warnings.warn(
                f"boundary edge {j} is shorter than two delay spans; the rest "
                "window consumes most of it and the problem may be stiff",
                stacklevel=2,
            )
    if mesh is None:
        mesh = default_mesh(tree, coeffs, q)
    basis = Basis(mesh, coeffs.n)
    lift = history_lift(mesh, coeffs.n, phi)
    gram = assemble(basis, lift, coeffs, min_points)
    x = gram.solve()
    y = lift + basis.tree_function(x)
    u = Control(tree, tuple(apply_operator(y, coeffs, j) for j in range(1, tree.m + 1)))
    return DampingSolution(
        y=y,
        control=u,
        energy=u.norm_sq(),
        dofs=x,
        basis=basis,
        lift=lift,
        gram=gram,
        coeffs=coeffs,
    )


def optimality_check(sol: DampingSolution, basis: Basis | None = None, coeffs: CoefficientSet | None = None) -> dict:
    """First-variation residual of the solution against every basis function.

    Evaluates the energy product of the trajectory with each basis function
    on the assembly grid and reports the largest value, in absolute terms
    and relative to the natural scale (trajectory norm times basis-function
    norm).  At the discrete optimum, exact arithmetic would give zero.
    """
    basis = basis or sol.basis
    coeffs = coeffs or sol.coeffs
    if basis.ndof == 0:
        return {
            "max_abs": 0.0,
            "max_rel": 0.0,
            "argmax": -1,
            "per_basis": np.zeros(0, dtype=complex),
            "worst_dof": None,
        }
    grid = sol.gram.grid
    u_vals = grid.eval_edges(list(sol.control.components))
    w = grid.flat_weights
    resid = (sol.gram.basis_values.conj() * w[None, :]) @ u_vals
    norms = np.sqrt(np.abs(np.diag(sol.gram.matrix).real))
    ynorm = np.sqrt(max(sol.energy, 0.0))
    scale = norms * ynorm
    rel = np.abs(resid) / np.where(scale > 0, scale, 1.0)
    p = int(np.argmax(np.abs(resid)))
    return {
        "max_abs": float(np.max(np.abs(resid))),
        "max_rel": float(np.max(rel)),
        "argmax": int(np.argmax(rel)),
        "per_basis": resid,
        "worst_dof": basis.dof_location(p),
    }


def energy_dominance_check(
    sol: DampingSolution,
    trials: int = 100,
    seed: int = 0,
    amplitude: float = 1.0,
) -> dict:
    """Random second-order check that the solution is a true minimiser.

    Draws random admissible perturbations ``v`` and verifies the cost of
    ``y + v`` never undercuts the cost of ``y`` beyond roundoff.  The margin
    reported is the minimum of ``J(y+v) - J(y)`` over the trials, together
    with the tolerance ``1e-10 * scale`` it is compared against.
    """
    rng = np.random.default_rng(seed)
    J = sol.energy
    worst = np.inf
    worst_scale = 1.0
    basis = sol.basis
    for _ in range(trials):
        z = rng.standard_normal(basis.ndof) + 1j * rng.standard_normal(basis.ndof)
        v = basis.tree_function(amplitude * z)
        Jv = energy(v, sol.coeffs)
        Jyv = energy(sol.y + v, sol.coeffs)
        margin = Jyv - J
        scale = max(1.0, J + Jv)
        if margin / scale < worst / worst_scale:
            worst, worst_scale = margin, scale
    return {
        "min_margin": float(worst),
        "scale": float(worst_scale),
        "ok": bool(worst >= -1e-10 * worst_scale),
        "trials": trials,
    }


def weak_residual_symbolic(y: TreeFunction, basis: Basis, coeffs: CoefficientSet) -> dict:
    """First-variation residual through the re-indexed integrals.

    Independent route from :func:`optimality_check`: no quadrature grid, the
    products are integrated piece by piece after moving every delayed read
    of the test function back to its home edge.  Used by the diagnostics
    layer; the two routes must agree to roundoff.
    """
    if basis.ndof == 0:
        return {"max_abs": 0.0, "max_rel": 0.0, "per_basis": np.zeros(0, dtype=complex)}
    vals = np.array(
        [energy_product_reindexed(y, basis.unit(p), coeffs) for p in range(basis.ndof)]
    )
    norms = np.array([np.sqrt(max(energy(basis.unit(p), coeffs), 0.0)) for p in range(basis.ndof)])
    ynorm = np.sqrt(max(energy(y, coeffs), 0.0))
    scale = norms * ynorm
    rel = np.abs(vals) / np.where(scale > 0, scale, 1.0)
    return {
        "max_abs": float(np.max(np.abs(vals))),
        "max_rel": float(np.max(rel)),
        "per_basis": vals,
    }
