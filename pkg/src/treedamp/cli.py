"""Command-line front end.

Four workflows over JSON problem files: ``simulate`` integrates the system
forward under a given control, ``damp`` computes the energy-minimal
control, ``verify`` recomputes a stored solution and checks it, and
``convergence`` runs a refinement ladder.  Results land in an output
directory as CSV (trajectory, control samples), an exact piecewise control
exchange file, and a JSON summary.

Exit codes: 0 success, 2 invalid input (parse or validation), 3 numerical
failure (indefinite or singular system), 4 failed verification or a broken
convergence assertion.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cauchy import residual_ell, solve_cauchy
from .config import ConfigError, ProblemConfig, _num, _num_out
from .damping import (
    Control,
    IndefiniteGramError,
    default_mesh,
    optimality_check,
    solve_damping,
)
from .diagnostics import (
    continuity_report,
    equation_residual,
    kirchhoff_residual,
    quasi_derivatives,
)
from .expressions import CoefficientError
from .meshing import MeshError
from .piecewise import PiecewisePoly
from .trees import TreeStructureError

_VALIDATION_ERRORS = (ConfigError, CoefficientError, MeshError, TreeStructureError)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _sample_times(p: PiecewisePoly, per_piece: int = 4) -> np.ndarray:
    """Piece endpoints plus equispaced interior points, for plot-ready CSV."""
    ts = [p.breaks]
    for i in range(p.npieces):
        a, b = p.breaks[i], p.breaks[i + 1]
        ts.append(a + (b - a) * np.arange(1, per_piece) / per_piece)
    return np.unique(np.concatenate(ts))


def _write_trajectory_csv(path: Path, cfg: ProblemConfig, y) -> None:
    n = cfg.n
    header = ["edge", "t"]
    for k in range(n):
        header += [f"re_y{k}", f"im_y{k}"]
    lines = [",".join(header)]
    for j in range(1, cfg.tree.m + 1):
        comp = y.component(j)
        ders = [comp.derivative(k) if k else comp for k in range(n)]
        times = _sample_times(comp)
        for t in times:
            vals = []
            for d in ders:
                v = d.left_limit(t) if t >= comp.domain[1] else complex(d.values(np.array([t]))[0])
                vals += [_fmt(v.real), _fmt(v.imag)]
            lines.append(",".join([str(cfg.edge_ids[j - 1]), _fmt(float(t))] + vals))
    path.write_text("\n".join(lines) + "\n")


def _write_control_csv(path: Path, cfg: ProblemConfig, control: Control) -> None:
    lines = ["edge,t,re_u,im_u"]
    for j in range(1, cfg.tree.m + 1):
        u = control.components[j - 1]
        for t in _sample_times(u):
            v = u.left_limit(t) if t >= u.domain[1] else complex(u.values(np.array([t]))[0])
            lines.append(",".join([str(cfg.edge_ids[j - 1]), _fmt(float(t)), _fmt(v.real), _fmt(v.imag)]))
    path.write_text("\n".join(lines) + "\n")


def _control_to_dict(cfg: ProblemConfig, control: Control) -> dict:
    edges = []
    for j in range(1, cfg.tree.m + 1):
        u = control.components[j - 1]
        edges.append({
            "id": cfg.edge_ids[j - 1],
            "breaks": [float(x) for x in u.breaks],
            "pieces": [[_num_out(z) for z in cs] for cs in u.coefs],
        })
    return {"edges": edges}


def _control_from_file(path, cfg: ProblemConfig) -> Control:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(d, dict) or "edges" not in d:
        raise ConfigError(f"{path}: expected an object with an 'edges' list")
    by_id = {}
    for i, e in enumerate(d["edges"]):
        p = f"control.edges[{i}]"
        for key in ("id", "breaks", "pieces"):
            if key not in e:
                raise ConfigError(f"{p}: missing key {key!r}")
        coefs = [np.array([_num(z, f"{p}.pieces[{r}][{s}]") for s, z in enumerate(piece)])
                 for r, piece in enumerate(e["pieces"])]
        by_id[e["id"]] = PiecewisePoly(np.array([float(x) for x in e["breaks"]]), coefs)
    comps = []
    for j in range(1, cfg.tree.m + 1):
        eid = cfg.edge_ids[j - 1]
        if eid not in by_id:
            raise ConfigError(f"control file lacks edge id {eid}")
        u = by_id[eid]
        Tj = cfg.tree.length(j)
        if abs(u.domain[0]) > 1e-9 or abs(u.domain[1] - Tj) > 1e-9 * max(1.0, Tj):
            raise ConfigError(f"control for edge id {eid} must cover [0, {Tj}]")
        comps.append(u)
    return Control(cfg.tree, tuple(comps))


def _diagnostics_record(cfg: ProblemConfig, sol) -> dict:
    qd = quasi_derivatives(sol.y, sol.coeffs)
    kr = kirchhoff_residual(qd)
    cont = continuity_report(qd)
    opt = optimality_check(sol)
    return {
        "optimality": opt["max_rel"],
        "hermiticity": sol.gram.hermiticity_defect(),
        "equation_sup": equation_residual(qd),
        "kirchhoff": [
            {"vertex": cfg.edge_ids[key[0] - 1], "order": key[1], "residual": v}
            for key, v in kr.items() if key != "max"
        ],
        "kirchhoff_max": kr["max"],
        "continuity": {str(k): rep["max_jump"] for k, rep in cont.items()},
    }


def cmd_simulate(args) -> int:
    cfg = ProblemConfig.from_file(args.config)
    control = _control_from_file(args.control, cfg)
    mesh = default_mesh(cfg.tree, cfg.coeffs, args.q or cfg.solver.q)
    y = solve_cauchy(cfg.tree, cfg.coeffs, cfg.history, control, mesh)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_trajectory_csv(out / "trajectory.csv", cfg, y)
    res = residual_ell(y, cfg.coeffs, control)
    summary = {
        "command": "simulate",
        "q": args.q or cfg.solver.q,
        "residual_per_edge": {str(cfg.edge_ids[j - 1]): res["per_edge"][j - 1]
                              for j in range(1, cfg.tree.m + 1)},
        "residual_total": res["total"],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"simulated {cfg.tree.m} edges, equation residual {res['total']:.3e}")
    return 0


def cmd_damp(args) -> int:
    cfg = ProblemConfig.from_file(args.config)
    q = args.q or cfg.solver.q
    sol = solve_damping(cfg.tree, cfg.coeffs, cfg.history, q=q,
                        min_points=cfg.solver.quadrature_order)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_trajectory_csv(out / "trajectory.csv", cfg, sol.y)
    _write_control_csv(out / "control.csv", cfg, sol.control)
    (out / "control.json").write_text(
        json.dumps(_control_to_dict(cfg, sol.control), indent=2) + "\n")
    diag = _diagnostics_record(cfg, sol)
    tol = args.tol or cfg.solver.tolerance
    summary = {
        "command": "damp",
        "order": cfg.n,
        "delay": cfg.tau,
        "q": q,
        "tolerance": tol,
        "ndof": int(sol.dofs.size),
        "energy": sol.energy,
        **diag,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"energy J = {sol.energy:.12g}  (ndof {sol.dofs.size}, q {q})")
    print(f"optimality residual {diag['optimality']:.3e}, "
          f"Kirchhoff max {diag['kirchhoff_max']:.3e}")
    for k, v in diag["continuity"].items():
        print(f"max jump of quasi-derivative order {k}: {v:.3e}")
    return 0


def cmd_verify(args) -> int:
    cfg = ProblemConfig.from_file(args.config)
    sol_dir = Path(args.solution)
    try:
        summary = json.loads((sol_dir / "summary.json").read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read solution summary: {exc}") from exc
    q = summary.get("q", cfg.solver.q)
    tol = cfg.solver.tolerance
    sol = solve_damping(cfg.tree, cfg.coeffs, cfg.history, q=q,
                        min_points=cfg.solver.quadrature_order)
    failures = []

    stored = summary.get("energy")
    if stored is None:
        failures.append("summary has no energy record")
    else:
        gap = abs(sol.energy - stored) / max(1.0, abs(stored))
        if gap > tol:
            failures.append(f"energy mismatch: stored {stored!r}, recomputed {sol.energy!r}")
        else:
            print(f"energy matches to {gap:.3e}")

    control_path = sol_dir / "control.json"
    if control_path.exists():
        stored_u = _control_from_file(control_path, cfg)
        scale = max(np.sqrt(stored_u.norm_sq()), 1.0)
        dist = np.sqrt(sum(
            (stored_u.components[j] - sol.control.components[j]).l2_norm_sq()
            for j in range(cfg.tree.m)))
        if dist > tol * scale:
            failures.append(f"control mismatch: L2 distance {dist:.3e}")
        else:
            print(f"control matches to {dist:.3e}")
    else:
        failures.append("control.json missing from solution directory")

    diag = _diagnostics_record(cfg, sol)
    print(f"optimality residual {diag['optimality']:.3e}, "
          f"Kirchhoff max {diag['kirchhoff_max']:.3e}, "
          f"hermiticity defect {diag['hermiticity']:.3e}")
    if diag["optimality"] > 1e-8:
        failures.append(f"optimality residual {diag['optimality']:.3e} above 1e-8")

    if failures:
        for f in failures:
            print("FAIL:", f, file=sys.stderr)
        return 4
    print("verification passed")
    return 0


def cmd_convergence(args) -> int:
    cfg = ProblemConfig.from_file(args.config)
    try:
        qs = [int(x) for x in args.q.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--q expects a comma-separated integer list, got {args.q!r}")
    if not qs or any(q < 1 for q in qs):
        raise ConfigError(f"--q entries must be positive integers, got {args.q!r}")
    tol = cfg.solver.tolerance
    orders = list(range(cfg.n, 2 * cfg.n))
    header = ["q", "ndof", "energy", "optimality", "kirchhoff_max"]
    header += [f"jump_{k}" for k in orders]
    print(",".join(header))
    rows = []
    for q in qs:
        sol = solve_damping(cfg.tree, cfg.coeffs, cfg.history, q=q,
                            min_points=cfg.solver.quadrature_order)
        qd = quasi_derivatives(sol.y, sol.coeffs)
        kr = kirchhoff_residual(qd)
        cont = continuity_report(qd)
        opt = optimality_check(sol)
        row = {
            "q": q,
            "ndof": int(sol.dofs.size),
            "energy": sol.energy,
            "optimality": opt["max_rel"],
            "kirchhoff_max": kr["max"],
            "jumps": [cont[k]["max_jump"] for k in orders],
        }
        rows.append(row)
        cells = [str(q), str(row["ndof"]), _fmt(row["energy"]),
                 f"{row['optimality']:.6e}", f"{row['kirchhoff_max']:.6e}"]
        cells += [f"{v:.6e}" for v in row["jumps"]]
        print(",".join(cells))

    if len(rows) < 2:
        return 0
    code = 0
    for a, b in zip(rows, rows[1:]):
        if b["energy"] > a["energy"] + tol * max(1.0, abs(a["energy"])):
            print(f"ASSERTION FAILED: energy increased from q={a['q']} to q={b['q']}",
                  file=sys.stderr)
            code = 4
    for row in rows:
        if row["optimality"] > 1e-8:
            print(f"ASSERTION FAILED: optimality residual {row['optimality']:.3e} "
                  f"at q={row['q']}", file=sys.stderr)
            code = 4
    first_k, last_k = rows[0]["kirchhoff_max"], rows[-1]["kirchhoff_max"]
    if cfg.tree.d > 0 and last_k > max(0.7 * first_k, tol):
        print("ASSERTION FAILED: Kirchhoff residual did not decay "
              f"({first_k:.3e} -> {last_k:.3e})", file=sys.stderr)
        code = 4
    top = orders[-1]
    first_j, last_j = rows[0]["jumps"][-1], rows[-1]["jumps"][-1]
    if last_j > 0.5 * first_j and last_j > tol:
        print(f"smoothness loss detected: order-{top} quasi-derivative jump "
              f"stays at {last_j:.3e} under refinement")
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="treedamp",
        description="Energy-optimal damping of delay systems on metric trees.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate forward under a given control")
    p.add_argument("--config", required=True, help="problem file (JSON)")
    p.add_argument("--control", required=True, help="piecewise control file (JSON)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--q", type=int, default=0, help="override mesh density")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("damp", help="compute the energy-minimal damping control")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=int, default=0)
    p.add_argument("--tol", type=float, default=0.0)
    p.set_defaults(fn=cmd_damp)

    p = sub.add_parser("verify", help="recompute a stored solution and compare")
    p.add_argument("--config", required=True)
    p.add_argument("--solution", required=True, help="directory written by damp")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("convergence", help="run a refinement ladder")
    p.add_argument("--config", required=True)
    p.add_argument("--q", required=True, help="comma-separated q list, e.g. 1,2,4,8")
    p.set_defaults(fn=cmd_convergence)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IndefiniteGramError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
