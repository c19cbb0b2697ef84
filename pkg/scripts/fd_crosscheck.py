#!/usr/bin/env python3
"""Cross-check the variational solver against a dense finite-difference
minimisation on a single interval with constant coefficients.

The FD side discretises the same quadratic program directly: midpoint
differences for the operator, history and rest rows pinned, least-squares
solve for the interior values, energy = h * ||residual||^2.  It shares no
code with the package, which is the point.

    python3 scripts/fd_crosscheck.py
    python3 scripts/fd_crosscheck.py --steps 32,64,128,256 --q 8,16,32,64
"""

import argparse
import time

import numpy as np

from treedamp.trees import interval
from treedamp.expressions import CoefficientSet
from treedamp.piecewise import PiecewisePoly
from treedamp.damping import solve_damping


def fd_energy(a, b, c, tau, T, steps_per_tau, phi):
    M = steps_per_tau
    h = tau / M
    nT = round(T / tau) * M
    nfree = nT - M - 1
    fixed = {}
    for i in range(-M, 1):
        fixed[i] = phi(i * h)
    for i in range(nT - M, nT + 1):
        fixed[i] = 0.0

    def col(i):
        return i - 1 if 1 <= i <= nT - M - 1 else None

    A = np.zeros((nT, nfree))
    rhs = np.zeros(nT)

    def add(row, i, w):
        j = col(i)
        if j is None:
            rhs[row] -= w * fixed[i]
        else:
            A[row, j] += w

    for i in range(nT):
        add(i, i + 1, 1.0 / h + b / 2)
        add(i, i, -1.0 / h + b / 2)
        add(i, i + 1 - M, a / h + c / 2)
        add(i, i - M, -a / h + c / 2)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    r = A @ sol - rhs
    return h * float(r @ r)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", type=float, default=0.5, help="neutral delay coefficient")
    ap.add_argument("--b", type=float, default=1.0, help="undelayed zero-order coefficient")
    ap.add_argument("--c", type=float, default=0.25, help="delayed zero-order coefficient")
    ap.add_argument("--tau", type=float, default=1.0)
    ap.add_argument("--T", type=float, default=3.0, help="edge length, a multiple of tau")
    ap.add_argument("--steps", default="32,64,128,256",
                    help="FD steps per delay span, comma separated")
    ap.add_argument("--q", default="8,16,32,64",
                    help="variational elements per delay span, comma separated")
    args = ap.parse_args()

    phi = lambda t: 1.0 + t

    print(f"# interval T={args.T}, tau={args.tau}, "
          f"(a, b, c) = ({args.a}, {args.b}, {args.c}), phi(t) = 1 + t")
    print()
    print("finite-difference ladder")
    print(f"{'M':>6} {'J_fd':>18} {'seconds':>8}")
    J_fd = None
    for M in (int(s) for s in args.steps.split(",")):
        t0 = time.time()
        J_fd = fd_energy(args.a, args.b, args.c, args.tau, args.T, M, phi)
        print(f"{M:>6} {J_fd:>18.12f} {time.time() - t0:>8.2f}")

    tree = interval(args.T)
    coeffs = CoefficientSet.build(
        tree, 1, args.tau,
        b={(1, 1): 1.0, (0, 1): args.b},
        c={(1, 1): args.a, (0, 1): args.c},
    )
    hist = PiecewisePoly.from_global_coefs(-args.tau, 0.0, [1.0, 1.0])

    print()
    print("variational ladder")
    print(f"{'q':>6} {'J':>18} {'seconds':>8}")
    J = None
    for q in (int(s) for s in args.q.split(",")):
        t0 = time.time()
        J = solve_damping(tree, coeffs, hist, q=q).energy
        print(f"{q:>6} {J:>18.12f} {time.time() - t0:>8.2f}")

    print()
    print(f"relative gap at the finest levels: {abs(J - J_fd) / J_fd:.3e}")


if __name__ == "__main__":
    main()
