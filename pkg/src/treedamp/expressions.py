"""Differential-delay expressions on a metric tree.

The controlled system applies, on every edge ``j``, an operator of order
``n`` acting on the trajectory and on its delayed values,

    (L_j y)(t) = sum_k [ b_kj(t) y_j^(k)(t) + c_kj(t) y_j^(k)(t - tau) ],

where the delayed value is read through the parent edge when ``t < tau``
(and from the prescribed history on the root edge).  This module holds the
data types for coefficient families and trajectories plus the exact algebra
on them: applying ``L_j``, the quadratic control cost, its polarisation, and
the re-indexed integrands of the first variation that the variational and
diagnostic layers are built on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .piecewise import PiecewisePoly, merge_breaks
from .trees import Tree


class CoefficientError(ValueError):
    """Raised when a coefficient family fails validation."""


def reduced_length(tree: Tree, tau: float, j: int) -> float:
    """Length of the active window of edge ``j``.

    Boundary edges are forced to rest on their final delay window, so only
    ``[0, T_j - tau]`` carries unknowns there; internal edges stay active to
    the far vertex.
    """
    Tj = tree.length(j)
    return Tj if j <= tree.d else Tj - tau


@dataclass(frozen=True)
class CoefficientSet:
    """Operator coefficients ``b_kj``, ``c_kj`` for ``k=0..n``, edges ``1..m``.

    ``b[k][j-1]`` and ``c[k][j-1]`` are piecewise polynomials on
    ``[0, T_j]``.  The leading instantaneous coefficient ``b_nj`` must stay
    away from zero on every edge; the leading delayed coefficient ``c_nj``
    may vanish (retarded system) or not (neutral system).
    """

    tree: Tree
    n: int
    tau: float
    b: tuple
    c: tuple

    MIN_LEADING = 1e-12

    def __post_init__(self):
        if self.n < 1:
            raise CoefficientError(f"operator order must be >= 1, got {self.n}")
        if not (self.tau > 0.0):
            raise CoefficientError(f"delay must be positive, got {self.tau}")
        Tmin = min(self.tree.lengths)
        if not (self.tau < Tmin):
            raise CoefficientError(
                f"delay {self.tau} must be smaller than the shortest edge {Tmin}"
            )
        for table, name in ((self.b, "b"), (self.c, "c")):
            if len(table) != self.n + 1:
                raise CoefficientError(f"{name} must have rows k=0..{self.n}")
            for k, row in enumerate(table):
                if len(row) != self.tree.m:
                    raise CoefficientError(f"{name}[{k}] must cover all {self.tree.m} edges")
                for j, p in enumerate(row, start=1):
                    a0, a1 = p.domain
                    Tj = self.tree.length(j)
                    if abs(a0) > 1e-12 or abs(a1 - Tj) > 1e-12 * max(1.0, Tj):
                        raise CoefficientError(
                            f"{name}[{k}] on edge {j} has domain [{a0}, {a1}], expected [0, {Tj}]"
                        )
        for j in range(1, self.tree.m + 1):
            lead = self.b[self.n][j - 1].min_abs()
            if lead < self.MIN_LEADING:
                raise CoefficientError(
                    f"leading coefficient b_{self.n} on edge {j} reaches |.| = {lead:.3e}; "
                    "it must stay away from zero"
                )

    @classmethod
    def build(cls, tree: Tree, n: int, tau: float, b: dict, c: dict) -> "CoefficientSet":
        """Assemble from sparse ``{(k, j): PiecewisePoly | scalar}`` maps.

        Missing entries default to zero; ``b[(n, j)]`` is required for every
        edge.  Scalars are promoted to constants on ``[0, T_j]``.
        """

        def promote(val, j):
            if isinstance(val, PiecewisePoly):
                return val
            return PiecewisePoly.constant(0.0, tree.length(j), complex(val))

        def table(src, name):
            rows = []
            for k in range(n + 1):
                row = []
                for j in range(1, tree.m + 1):
                    if (k, j) in src:
                        row.append(promote(src[(k, j)], j))
                    elif name == "b" and k == n:
                        raise CoefficientError(f"b[({n}, {j})] is required")
                    else:
                        row.append(PiecewisePoly.zero(0.0, tree.length(j)))
                rows.append(tuple(row))
            return tuple(rows)

        return cls(tree=tree, n=n, tau=tau, b=table(b, "b"), c=table(c, "c"))

    def breakpoints(self, j: int) -> np.ndarray:
        """Union of interior coefficient breakpoints on edge ``j``."""
        arrays = []
        for k in range(self.n + 1):
            arrays.append(self.b[k][j - 1].breaks)
            arrays.append(self.c[k][j - 1].breaks)
        pts = merge_breaks(arrays, 1e-12 * max(1.0, self.tree.length(j)))
        return pts[1:-1]


@dataclass(frozen=True)
class TreeFunction:
    """A trajectory: one piecewise polynomial per edge plus root history.

    ``components[j-1]`` lives on ``[0, T_j]``; ``history`` lives on
    ``[-tau, 0]`` and belongs to the root edge.  The delay on any other edge
    is served by the tail of the parent component, so no history is stored
    there.
    """

    tree: Tree
    n: int
    components: tuple
    history: PiecewisePoly

    def __post_init__(self):
        if len(self.components) != self.tree.m:
            raise ValueError("one component per edge required")
        for j, p in enumerate(self.components, start=1):
            a0, a1 = p.domain
            Tj = self.tree.length(j)
            if abs(a0) > 1e-12 or abs(a1 - Tj) > 1e-12 * max(1.0, Tj):
                raise ValueError(
                    f"component {j} has domain [{a0}, {a1}], expected [0, {Tj}]"
                )
        h0, h1 = self.history.domain
        if abs(h1) > 1e-12 or not h0 < 0:
            raise ValueError(f"history must live on [-tau, 0], got [{h0}, {h1}]")

    @property
    def tau(self) -> float:
        return -self.history.domain[0]

    def component(self, j: int) -> PiecewisePoly:
        return self.components[j - 1]

    @classmethod
    def zero(cls, tree: Tree, n: int, tau: float) -> "TreeFunction":
        comps = tuple(PiecewisePoly.zero(0.0, tree.length(j)) for j in range(1, tree.m + 1))
        return cls(tree, n, comps, PiecewisePoly.zero(-tau, 0.0))

    def smoothness_defect(self) -> float:
        """Largest jump of any derivative of order < n at interior breaks.

        Zero (up to roundoff) for trajectories in the natural energy space;
        reported rather than enforced because discrete objects carry rounding.
        """
        worst = 0.0
        for p in self.components + (self.history,):
            for k in range(self.n):
                dp = p.derivative(k)
                for _, gap in dp.jumps():
                    worst = max(worst, abs(gap))
        return worst

    def vertex_defect(self) -> float:
        """Largest mismatch of derivatives of order < n across any vertex."""
        worst = 0.0
        for j in range(2, self.tree.m + 1):
            p = self.tree.parent_of(j)
            Tp = self.tree.length(p)
            for k in range(self.n):
                a = self.component(j).right_limit(0.0, k)
                b = self.component(p).left_limit(Tp, k)
                worst = max(worst, abs(a - b))
        return worst

    def history_defect(self) -> float:
        """Mismatch between the history end and the root edge start."""
        worst = 0.0
        for k in range(self.n):
            a = self.history.left_limit(0.0, k)
            b = self.component(1).right_limit(0.0, k)
            worst = max(worst, abs(a - b))
        return worst

    def __add__(self, other: "TreeFunction") -> "TreeFunction":
        comps = tuple(p + q for p, q in zip(self.components, other.components))
        return TreeFunction(self.tree, self.n, comps, self.history + other.history)

    def __sub__(self, other: "TreeFunction") -> "TreeFunction":
        comps = tuple(p - q for p, q in zip(self.components, other.components))
        return TreeFunction(self.tree, self.n, comps, self.history - other.history)

    def __mul__(self, scalar) -> "TreeFunction":
        comps = tuple(p * scalar for p in self.components)
        return TreeFunction(self.tree, self.n, comps, self.history * scalar)

    __rmul__ = __mul__


def eval_delayed(y: TreeFunction, j: int, t: float, k: int = 0) -> complex:
    """Value of ``y_j^(k)(t)`` for ``t`` in ``[-tau, T_j]``.

    Negative times dereference through the parent edge (or the history on
    the root edge); since ``tau`` is shorter than every edge, one hop always
    suffices.
    """
    if t >= 0.0:
        return y.component(j).eval(t, k)
    if j == 1:
        return y.history.eval(t, k)
    p = y.tree.parent_of(j)
    return y.component(p).eval(t + y.tree.length(p), k)


def delayed_part(y: TreeFunction, j: int, k: int = 0) -> PiecewisePoly:
    """The delayed read ``t -> y_j^(k)(t - tau)`` as a function on ``[0, T_j]``."""
    tau = y.tau
    Tj = y.tree.length(j)
    if j == 1:
        head = y.history.derivative(k).shift(tau)
    else:
        p = y.tree.parent_of(j)
        Tp = y.tree.length(p)
        head = y.component(p).derivative(k).restrict(Tp - tau, Tp).shift(tau - Tp)
    main = y.component(j).derivative(k).restrict(0.0, Tj - tau).shift(tau)
    return head.concat(main)


def apply_operator(y: TreeFunction, coeffs: CoefficientSet, j: int) -> PiecewisePoly:
    """The edge operator ``L_j y`` on ``[0, T_j]``."""
    acc = PiecewisePoly.zero(0.0, y.tree.length(j))
    for k in range(coeffs.n + 1):
        b = coeffs.b[k][j - 1]
        c = coeffs.c[k][j - 1]
        if b.max_degree > 0 or any(np.any(p != 0) for p in b.coefs):
            acc = acc + b * y.component(j).derivative(k)
        if c.max_degree > 0 or any(np.any(p != 0) for p in c.coefs):
            acc = acc + c * delayed_part(y, j, k)
    return acc


def operator_components(y: TreeFunction, coeffs: CoefficientSet) -> list:
    """``[L_1 y, ..., L_m y]`` computed once for reuse."""
    return [apply_operator(y, coeffs, j) for j in range(1, y.tree.m + 1)]


def energy(y: TreeFunction, coeffs: CoefficientSet) -> float:
    """Total control cost: the squared L2 norm of ``L y`` over the tree."""
    return sum(p.l2_norm_sq() for p in operator_components(y, coeffs))


def energy_product(y: TreeFunction, w: TreeFunction, coeffs: CoefficientSet) -> complex:
    """Polarisation of the cost: integral of ``L y`` against ``conj(L w)``.

    Sesquilinear (conjugate-linear in ``w``); its real part drives the
    quadratic expansion of the cost around a candidate trajectory.
    """
    total = 0.0 + 0.0j
    for j in range(1, y.tree.m + 1):
        total += apply_operator(y, coeffs, j).inner(apply_operator(w, coeffs, j))
    return complex(total)


def variation_integrand(
    y: TreeFunction,
    coeffs: CoefficientSet,
    k: int,
    j: int,
    ells: list | None = None,
) -> PiecewisePoly:
    """Weight of ``conj(w_j^(k))`` in the re-indexed first variation.

    After moving every delayed test-function read back to its home edge, the
    first variation becomes a sum of integrals over the active windows
    ``[0, l_j]`` of products (weight) * conj(w_j^(k)); this returns that
    weight.  On ``(0, T_j - tau)`` the advanced read of ``L_j y`` appears; on
    the final window of an internal edge the advanced reads come from the
    child edges instead.

    Passing ``ells`` (the precomputed ``operator_components``) avoids
    recomputing ``L y``.
    """
    if ells is None:
        ells = operator_components(y, coeffs)
    tree = y.tree
    tau = coeffs.tau
    Tj = tree.length(j)
    ell_j = ells[j - 1]

    # common instantaneous term, first on the early window
    early_b = coeffs.b[k][j - 1].restrict(0.0, Tj - tau).conj() * ell_j.restrict(0.0, Tj - tau)
    adv_c = coeffs.c[k][j - 1].restrict(tau, Tj).shift(-tau).conj()
    early = early_b + adv_c * ell_j.restrict(tau, Tj).shift(-tau)

    if j > tree.d:
        return early

    late_b = coeffs.b[k][j - 1].restrict(Tj - tau, Tj).conj() * ell_j.restrict(Tj - tau, Tj)
    late = late_b
    for nu in tree.children_of(j):
        c_nu = coeffs.c[k][nu - 1].restrict(0.0, tau).shift(Tj - tau).conj()
        late = late + c_nu * ells[nu - 1].restrict(0.0, tau).shift(Tj - tau)
    return early.concat(late)


def energy_product_reindexed(
    y: TreeFunction, w: TreeFunction, coeffs: CoefficientSet
) -> complex:
    """The energy product written through the re-indexed variation weights.

    Valid when ``w`` is an admissible perturbation (zero history, matched
    vertices, resting tails); agrees with :func:`energy_product` up to
    roundoff and serves as an independent implementation for cross-checks.
    """
    ells = operator_components(y, coeffs)
    total = 0.0 + 0.0j
    for j in range(1, y.tree.m + 1):
        lj = reduced_length(y.tree, coeffs.tau, j)
        for k in range(coeffs.n + 1):
            weight = variation_integrand(y, coeffs, k, j, ells)
            wk = w.component(j).derivative(k).restrict(0.0, lj)
            total += weight.inner(wk)
    return complex(total)
