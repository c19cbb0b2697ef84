"""Forward simulation of the controlled system by the method of steps.

On each edge the delayed argument refers either to the prescribed history
(root edge), to the tail of the parent trajectory (near the start), or to a
part of the same edge that lies at least one delay span in the past.  With
elements no wider than the delay, sweeping the elements of an edge from
left to right therefore always has fully known delayed data, and edges in
canonical order always have their parent finished first.

Each element is integrated by collocation: the restriction of the solution
is one polynomial matched to the running state at the left end and to the
differential relation at interior Gauss points.  Polynomial data of degree
at most the collocation degree is reproduced exactly, which is what makes
control round trips (damp, then resimulate) reproduce the variational
trajectory to roundoff.
"""

from __future__ import annotations

import bisect
import math

import numpy as np

from .damping import Control
from .expressions import CoefficientSet, TreeFunction
from .meshing import DelayMesh
from .piecewise import PiecewisePoly, _poly_der, _poly_val
from .trees import Tree


class _GrowingPiecewise:
    """Append-only piecewise polynomial with pointwise queries."""

    def __init__(self, start: float):
        self.breaks = [start]
        self.coefs = []

    def append(self, right: float, coefs: np.ndarray):
        self.breaks.append(right)
        self.coefs.append(coefs)

    def eval(self, t: float, deriv: int = 0) -> complex:
        i = bisect.bisect_right(self.breaks, t) - 1
        i = min(max(i, 0), len(self.coefs) - 1)
        c = self.coefs[i]
        for _ in range(deriv):
            c = _poly_der(c)
        return complex(_poly_val(c, t - self.breaks[i]))

    def finish(self) -> PiecewisePoly:
        return PiecewisePoly(np.array(self.breaks), self.coefs)


def solve_cauchy(
    tree: Tree,
    coeffs: CoefficientSet,
    phi: PiecewisePoly,
    control: Control,
    mesh: DelayMesh,
    collocation_points: int | None = None,
) -> TreeFunction:
    """Integrate the controlled system forward from the history ``phi``.

    Parameters
    ----------
    mesh : DelayMesh
        Supplies the element partition of every edge; element widths never
        exceed the delay, which the stepping argument relies on.
    collocation_points : int, optional
        Gauss points per element; defaults to ``max(3, n + 1)``.  The local
        polynomial degree is ``n + collocation_points - 1``.
    """
    n = coeffs.n
    tau = coeffs.tau
    g = collocation_points or max(3, n + 1)
    if g < n:
        raise ValueError(f"need at least {n} collocation points for an order-{n} system")
    gauss, _ = np.polynomial.legendre.leggauss(g)

    built: list[_GrowingPiecewise] = []
    for j in range(1, tree.m + 1):
        Tj = tree.length(j)
        if j == 1:
            state = [phi.left_limit(0.0, k) for k in range(n)]
        else:
            p = tree.parent_of(j)
            Tp = tree.length(p)
            state = [built[p - 1].eval(Tp, k) for k in range(n)]

        def delayed(t: float, k: int) -> complex:
            s = t - tau
            if s >= 0.0:
                return cur.eval(s, k)
            if j == 1:
                return phi.eval(s, k)
            par = tree.parent_of(j)
            return built[par - 1].eval(s + tree.length(par), k)

        cur = _GrowingPiecewise(0.0)
        uj = control.component(j)
        b_row = [coeffs.b[k][j - 1] for k in range(n + 1)]
        c_row = [coeffs.c[k][j - 1] for k in range(n + 1)]
        deg = n + g  # number of local coefficients
        for a, b_ in zip(mesh.nodes[j - 1][:-1], mesh.nodes[j - 1][1:]):
            h = b_ - a
            A = np.zeros((deg, deg), dtype=complex)
            rhs = np.zeros(deg, dtype=complex)
            # running state pins the first n scaled derivatives at sigma = 0
            for k in range(n):
                A[k, k] = math.factorial(k) / h**k
                rhs[k] = state[k]
            sc = 0.5 * (gauss + 1.0)  # collocation abscissae in sigma
            for row, sig in enumerate(sc, start=n):
                t = a + sig * h
                for i in range(deg):
                    for k in range(n + 1):
                        if i >= k:
                            fall = math.factorial(i) / math.factorial(i - k)
                            A[row, i] += b_row[k].eval(t) * fall * sig ** (i - k) / h**k
                val = uj.eval(t)
                for k in range(n + 1):
                    ck = c_row[k].eval(t)
                    if ck != 0.0:
                        val -= ck * delayed(t, k)
                rhs[row] = val
            sol = np.linalg.solve(A, rhs)
            local = sol / h ** np.arange(deg)  # back to powers of (t - a)
            cur.append(b_, local)
            dstate = local.copy()
            for k in range(n):
                dstate = dstate if k == 0 else _poly_der(dstate)
                state[k] = complex(_poly_val(dstate, h))
        built.append(cur)

    comps = tuple(gp.finish() for gp in built)
    return TreeFunction(tree, n, comps, phi)


def residual_ell(y: TreeFunction, coeffs: CoefficientSet, control: Control) -> dict:
    """Per-edge L2 distance between the applied operator and the control."""
    from .expressions import apply_operator

    per_edge = []
    for j in range(1, y.tree.m + 1):
        diff = apply_operator(y, coeffs, j) - control.component(j)
        per_edge.append(math.sqrt(diff.l2_norm_sq()))
    return {"per_edge": per_edge, "total": math.sqrt(sum(r * r for r in per_edge))}


def trajectory_distance(y: TreeFunction, z: TreeFunction) -> float:
    """Total L2 distance between two trajectories over the tree."""
    total = 0.0
    for j in range(1, y.tree.m + 1):
        total += (y.component(j) - z.component(j)).l2_norm_sq()
    return math.sqrt(total)
