"""Quasi-derivative diagnostics for damping trajectories.

At the optimum, the trajectory solves a self-adjoint boundary value problem
of order ``2n`` whose higher quasi-derivatives are built from the variation
weights by the descending recursion

    y^<n>   = (weight of conj(w^(n))),
    y^<n+l> = (weight of conj(w^(n-l))) - d/dt y^<n+l-1>,

with absolutely continuous orders ``n..2n-1``, a vanishing order ``2n``,
and a balance at every branching vertex: the outgoing value of each order
equals the sum over the child edges of their incoming values.  None of this
is imposed by the discrete minimisation, which is what makes these
quantities diagnostics: their jumps, vertex defects, and weak residuals all
measure how far the computed trajectory is from the optimality structure,
and they collapse under refinement exactly when the solver is right.

Differentiation here is symbolic on each polynomial piece.  Jumps at piece
boundaries are never differentiated; they are recorded, which is the whole
point: a persistent jump that refinement does not remove reproduces the
loss-of-smoothness phenomenon of histories with limited regularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .damping import DampingSolution, weak_residual_symbolic
from .expressions import (
    CoefficientSet,
    TreeFunction,
    operator_components,
    reduced_length,
    variation_integrand,
)
from .meshing import Basis
from .piecewise import PiecewisePoly


@dataclass(frozen=True)
class QuasiDerivativeSet:
    """Quasi-derivatives of orders ``n..2n`` per edge, with jump tables.

    ``functions[k]`` maps the order ``k`` to the per-edge piecewise
    polynomials on the active windows ``[0, l_j]``.  ``jump_table[(k, j)]``
    lists ``(t, gap)`` for every interior breakpoint, where ``gap`` is the
    right minus the left limit.
    """

    tree: object
    n: int
    functions: dict
    jump_table: dict

    def function(self, k: int, j: int) -> PiecewisePoly:
        return self.functions[k][j - 1]


def quasi_derivatives(y: TreeFunction, coeffs: CoefficientSet) -> QuasiDerivativeSet:
    """Build the quasi-derivative family of a trajectory.

    Runs the descending recursion on the variation weights, one edge at a
    time, purely symbolically.
    """
    tree = y.tree
    n = coeffs.n
    ells = operator_components(y, coeffs)
    functions: dict = {}
    jumps: dict = {}
    per_edge_weights = []
    for j in range(1, tree.m + 1):
        per_edge_weights.append(
            [variation_integrand(y, coeffs, k, j, ells) for k in range(n + 1)]
        )
    for k in range(n, 2 * n + 1):
        row = []
        for j in range(1, tree.m + 1):
            w = per_edge_weights[j - 1]
            if k == n:
                qd = w[n]
            else:
                qd = w[2 * n - k] - functions[k - 1][j - 1].derivative()
            row.append(qd)
            jumps[(k, j)] = qd.jumps()
        functions[k] = row
    return QuasiDerivativeSet(tree=tree, n=n, functions=functions, jump_table=jumps)


def g_recursion(weights: list) -> list:
    """Descending recursion on an explicit weight table for one edge.

    ``weights[k]`` is the coefficient of ``conj(w^(k))`` for ``k = 0..n``;
    the return value lists the orders ``n..2n`` in that order.  Kept as a
    separate, generic implementation so the inline recursion in
    :func:`quasi_derivatives` can be cross-checked against it.
    """
    n = len(weights) - 1
    out = [weights[n]]
    for l in range(1, n + 1):
        out.append(weights[n - l] - out[-1].derivative())
    return out


def kirchhoff_residual(qd: QuasiDerivativeSet) -> dict:
    """Vertex-balance defects of the quasi-derivatives.

    For every branching vertex ``j`` and order ``k = n..2n-1``, the modulus
    of outgoing value minus the sum of incoming child values, both taken as
    one-sided limits.  Zero for the exact optimum.
    """
    tree = qd.tree
    out = {}
    for j in range(1, tree.d + 1):
        lj = qd.function(qd.n, j).domain[1]
        for k in range(qd.n, 2 * qd.n):
            left = qd.function(k, j).left_limit(lj)
            right = sum(qd.function(k, nu).right_limit(0.0) for nu in tree.children_of(j))
            out[(j, k)] = abs(left - right)
    out["max"] = max((v for key, v in out.items() if key != "max"), default=0.0)
    return out


def continuity_report(qd: QuasiDerivativeSet, threshold: float = 0.0) -> dict:
    """Jump summary per order ``k = n..2n-1``.

    For each order: the largest absolute jump, where it sits, and the full
    list of ``(edge, t, |gap|)`` above ``threshold``.  These are the
    absolute-continuity proxies: under refinement they vanish at the true
    optimum except where the data itself obstructs smoothness.
    """
    report = {}
    for k in range(qd.n, 2 * qd.n):
        entries = []
        for j in range(1, qd.tree.m + 1):
            for t, gap in qd.jump_table[(k, j)]:
                if abs(gap) > threshold:
                    entries.append((j, t, abs(gap)))
        if entries:
            worst = max(entries, key=lambda e: e[2])
            report[k] = {"max_jump": worst[2], "location": (worst[0], worst[1]), "jumps": entries}
        else:
            report[k] = {"max_jump": 0.0, "location": None, "jumps": []}
    return report


def equation_residual(qd: QuasiDerivativeSet) -> float:
    """Sup estimate of the order-``2n`` quasi-derivative over the tree.

    The exact optimum satisfies ``y^<2n> = 0`` pointwise; the discrete
    trajectory does not, and this quantity decays only weakly.  Reported
    for inspection, not as a convergence criterion.
    """
    return max(qd.function(2 * qd.n, j).max_abs() for j in range(1, qd.tree.m + 1))


def weak_bvp_residual(y: TreeFunction, basis: Basis, coeffs: CoefficientSet) -> dict:
    """Weak residual of the optimality system against every basis function.

    Same quantity as the assembly-grid optimality check, evaluated through
    the symbolic re-indexed route; agreement of the two routes to roundoff
    is itself one of the structural checks.
    """
    return weak_residual_symbolic(y, basis, coeffs)


def match_jump(entries: list, location: tuple, tol: float) -> float:
    """Magnitude of the jump at (edge, t) in a continuity entry list, 0 if absent."""
    j0, t0 = location
    for j, t, mag in entries:
        if j == j0 and abs(t - t0) <= tol:
            return mag
    return 0.0


def detect_persistent_jump(
    levels: list,
    location: tuple | None = None,
    tol: float = 1e-9,
    exclude_radius: float = 0.0,
) -> dict:
    """Classify a candidate persistent jump across a refinement study.

    ``levels`` holds one continuity entry per refinement level (the dict
    returned by :func:`continuity_report` for a single order), coarse to
    fine.  The jump at ``location`` (edge, t), defaulting to the dominant
    jump of the finest level, is matched by position in the next-coarser
    level; it is flagged persistent when it changed by less than 10 percent
    between those two levels while exceeding ten times every competing jump
    on the finest level.

    ``exclude_radius`` removes same-edge jumps within that distance of the
    candidate from the competition.  This is the localization scale of the
    discretization: an element of class C^{n-1} can place a classical
    derivative jump only at a node, so a discontinuity strictly inside an
    element is rendered as the exact data-induced jump at its true location
    plus aliased node jumps at the ends of the containing element.  Passing
    one element width treats those aliases as part of the same discrete
    feature instead of as independent jumps.
    """
    last = levels[-1]
    if not last["jumps"]:
        return {"persistent": False, "magnitude": 0.0, "location": None}
    loc = location if location is not None else last["location"]
    mag = match_jump(last["jumps"], loc, tol)
    if mag == 0.0:
        return {"persistent": False, "magnitude": 0.0, "location": loc}
    prev = match_jump(levels[-2]["jumps"], loc, tol) if len(levels) > 1 else 0.0
    change = abs(mag - prev) / mag
    radius = max(tol, exclude_radius)
    others = [m for j, t, m in last["jumps"] if j != loc[0] or abs(t - loc[1]) > radius]
    separation = mag / max(others) if others else np.inf
    return {
        "persistent": bool(change < 0.10 and separation >= 10.0),
        "location": loc,
        "magnitude": mag,
        "change": change,
        "separation": separation,
    }


def solution_report(sol: DampingSolution) -> dict:
    """One-call diagnostic bundle for a damping solution."""
    qd = quasi_derivatives(sol.y, sol.coeffs)
    cont = continuity_report(qd)
    return {
        "energy": sol.energy,
        "kirchhoff": kirchhoff_residual(qd),
        "continuity": {k: v["max_jump"] for k, v in cont.items()},
        "equation_sup": equation_residual(qd),
        "hermiticity": sol.gram.hermiticity_defect(),
    }
