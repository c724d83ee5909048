"""Scenario-driven command line.

Commands: prox-check | compat-check | sde-sim | solve | cauchy | field | report.
Every run derives all randomness from the scenario seed; artifacts are CSV
files written with a fixed float format so reruns are byte-identical.  Exit
codes: 0 success, 2 validation failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .convex import check_compatibility, make_convex, prox_property_suite, validate_weights
from .drivers import generate_paths
from .field import FieldGrid, boundary_residual, continuity_diagnostic, interior_residual, sample_field
from .reflected import local_time_identity_residual, simulate_reflected
from .scenarios import Scenario, ScenarioError, load_scenario
from .solver import (
    SolverConfig,
    cauchy_study,
    penalization_diagnostics,
    solve_penalized,
    verify_vi_inclusion,
    weighted_norms,
)

__all__ = ["main", "run"]

_FMT = "%.17g"


def _write_csv(path, header, rows):
    """Deterministic CSV: fixed float format, '\\n' line endings."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_FMT % v if isinstance(v, float) else str(v) for v in row) + "\n")


def _emit(lines, out_dir, name, quiet):
    os.makedirs(out_dir, exist_ok=True)
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, name), "w", newline="") as fh:
        fh.write(text)
    if not quiet:
        sys.stdout.write(text)


def _build_run(scn: Scenario):
    """Noise bundle plus optional reflected state ensemble for a scenario."""
    if scn.domain is not None:
        noise = generate_paths(scn.grid, scn.domain.d, scn.n_paths, scn.seed, shared_backward=True)
        x0 = np.asarray(scn.raw.get("start", np.zeros(scn.domain.d)), dtype=float).reshape(-1)
        state = simulate_reflected(scn.domain, scn.drift, scn.sigma, (scn.grid.t0, x0), scn.grid, noise)
        return noise, state
    d = int(scn.raw.get("dim", 1))
    if scn.a_process == "time":
        a_spec = lambda t: np.asarray(t, dtype=float)
    elif scn.a_process == "none":
        a_spec = lambda t: np.zeros_like(np.asarray(t, dtype=float))
    else:
        from .drivers import load_a_table

        a_spec = load_a_table(scn.a_process)
    return generate_paths(scn.grid, d, scn.n_paths, scn.seed, a_spec=a_spec), None


def _status(ok):
    return "PASS" if ok else "FAIL"


def cmd_prox_check(scn: Scenario, out_dir: str, quiet: bool) -> int:
    """Resolvent/gradient law suite over the built-in catalog plus the
    scenario's own (phi, psi)."""
    names = ["zero", "quadratic(1.0)", "abs", "indicator_box(-1,1)", "hinge_sq"]
    tol = 1e-9
    lines = ["prox-check: resolvent nonexpansiveness, gradient Lipschitz/monotone laws,"
             " cross-eps product bound, envelope sandwich, subgradient membership"]
    rows = []
    all_ok = True
    for i, name in enumerate(names):
        theta = make_convex(name)
        worst = prox_property_suite(theta, n_samples=2000, seed=scn.seed + i)
        for prop, v in worst.items():
            rows.append((name, prop, float(v)))
        ok = max(worst.values()) <= tol
        all_ok &= ok
        lines.append(f"{_status(ok)} {name}: worst violation {max(worst.values()):.3e} (tol {tol:.0e})")
    _write_csv(os.path.join(out_dir, "prox_check.csv"), ["function", "property", "worst_violation"], rows)
    _emit(lines, out_dir, "prox_check.txt", quiet)
    return 0 if all_ok else 3


def cmd_compat_check(scn: Scenario, out_dir: str, quiet: bool) -> int:
    """Coupling inequalities between (phi, psi) and (f, g) on a sample grid."""
    ladder = scn.eps_ladder or [1e-1, 1e-2, 1e-3]
    rng = np.random.default_rng(scn.seed)
    samples = [(0.5, y, z) for y, z in zip(rng.uniform(-3, 3, 64), rng.uniform(-3, 3, 64))]
    f = lambda t, y, z: scn.coeffs.f(t, None, np.atleast_1d(y)[None, :], np.atleast_1d(z)[None, :, None])[0]
    g = lambda t, y: scn.coeffs.g(t, None, np.atleast_1d(y)[None, :])[0]
    rep = check_compatibility(scn.phi, scn.psi, f, g, ladder, samples)
    lines = [
        "compat-check: gradient-product positivity and the two one-sided"
        " coupling bounds between the convex pair and (f, g)",
        f"{_status(rep.ok)} gradient product >= 0: worst {rep.worst_i:.3e}",
        f"{_status(rep.ok)} phi-gradient vs g bound: worst {rep.worst_ii:.3e}",
        f"{_status(rep.ok)} psi-gradient vs f bound: worst {rep.worst_iii:.3e}",
    ]
    _write_csv(os.path.join(out_dir, "compat_check.csv"),
               ["inequality", "worst_violation"],
               [("grad_product", rep.worst_i), ("phi_vs_g", rep.worst_ii), ("psi_vs_f", rep.worst_iii)])
    _emit(lines, out_dir, "compat_check.txt", quiet)
    return 0 if rep.ok else 3


def cmd_sde_sim(scn: Scenario, out_dir: str, quiet: bool) -> int:
    """Reflected-diffusion ensemble with containment and local-time checks."""
    if scn.domain is None:
        raise ScenarioError("sde-sim needs a domain section")
    noise, state = _build_run(scn)
    lv = scn.domain.level(state.X)
    contained = float(np.min(lv))
    res = local_time_identity_residual(state, scn.domain, scn.drift, scn.sigma)
    rows = []
    for j, t in enumerate(scn.grid.nodes):
        rows.append((float(t),
                     float(np.mean(lv[:, j])), float(np.min(lv[:, j])),
                     float(np.mean(state.A[:, j])), float(np.max(state.A[:, j]))))
    _write_csv(os.path.join(out_dir, "sde_sim.csv"),
               ["t", "mean_level", "min_level", "mean_A", "max_A"], rows)
    ok = contained >= -1e-12
    lines = [
        "sde-sim: projection-Euler reflected ensemble",
        f"{_status(ok)} containment in the closed domain: min level {contained:.3e}",
        f"local-time reconstruction residual: rms {res['rms']:.3e}, max {res['max']:.3e}",
    ]
    _emit(lines, out_dir, "sde_sim.txt", quiet)
    return 0 if ok else 3


def _solve_scenario(scn: Scenario):
    noise, state = _build_run(scn)
    sol = solve_penalized(scn.coeffs, scn.phi, scn.psi, scn.solver, noise, state)
    return noise, state, sol


def cmd_solve(scn: Scenario, out_dir: str, quiet: bool) -> int:
    noise, state, sol = _solve_scenario(scn)
    A = state.A if state is not None else noise.A
    rows = []
    for j, t in enumerate(scn.grid.nodes):
        rows.append((float(t),
                     float(np.mean(sol.Y[:, j, 0])), float(np.std(sol.Y[:, j, 0])),
                     float(np.mean(np.linalg.norm(sol.Z[:, j, 0], axis=-1))),
                     float(np.mean(sol.U[:, j, 0])), float(np.mean(sol.V[:, j, 0])),
                     float(np.mean(A[:, j]))))
    _write_csv(os.path.join(out_dir, "solve.csv"),
               ["t", "mean_Y", "std_Y", "mean_abs_Z", "mean_U", "mean_V", "mean_A"], rows)
    lines = [f"solve: scenario {scn.name!r}, scheme {scn.solver.scheme}, eps {scn.solver.eps:g}",
             f"Y at the initial node: mean {np.mean(sol.Y[:, 0, 0]):.10g}, std {np.std(sol.Y[:, 0, 0]):.3e}"]
    if not callable(scn.coeffs.terminal):
        xi = float(np.atleast_1d(scn.coeffs.terminal)[0])
        term_ok = float(np.max(np.abs(sol.Y[:, -1, 0] - xi))) <= 1e-15
        lines.append(f"{_status(term_ok)} terminal exactness: max |Y_T - xi| = "
                     f"{float(np.max(np.abs(sol.Y[:, -1, 0] - xi))):.3e}")
    if scn.weight_warning:
        lines.append(f"WARN {scn.weight_warning}")
    _emit(lines, out_dir, "solve.txt", quiet)
    return 0


def cmd_cauchy(scn: Scenario, out_dir: str, quiet: bool) -> int:
    """Coupled eps-ladder convergence study; the rate exponent of the
    weighted sup gap in (eps + delta) should sit near one."""
    if len(scn.eps_ladder) < 2:
        raise ScenarioError("cauchy needs an eps_ladder with at least two entries")
    noise, state = _build_run(scn)
    rep = cauchy_study(scn.coeffs, scn.phi, scn.psi, scn.solver, scn.eps_ladder, noise, state,
                       lam=scn.coeffs.constants.lam, mu=scn.coeffs.constants.mu)
    rows = [(float(a), float(b), float(g)) for (a, b), g in zip(rep.eps_pairs, rep.gaps_sq)]
    _write_csv(os.path.join(out_dir, "cauchy.csv"), ["eps", "delta", "sup_gap_sq"], rows)
    ok = 0.75 <= rep.slope <= 1.25
    lines = [
        "cauchy: weighted sup-gap between coupled penalized runs along the eps ladder",
        f"fitted log-log slope of the sup gap vs (eps + delta): {rep.slope:.4f}",
        f"{_status(ok)} slope within [0.75, 1.25]",
    ]
    _emit(lines, out_dir, "cauchy.txt", quiet)
    return 0 if ok else 3


def cmd_field(scn: Scenario, out_dir: str, quiet: bool) -> int:
    if scn.domain is None or scn.lattice is None:
        raise ScenarioError("field needs domain and lattice sections")
    lat = scn.lattice
    nt = int(lat.get("times", 5))
    npts = int(lat.get("points", 5))
    draws = int(lat.get("draws", 1))
    idx = np.linspace(0, scn.grid.n_steps, nt).round().astype(int)
    times = scn.grid.nodes[idx]
    lo, hi = scn.domain.bounding_box
    pts = np.linspace(float(lo[0]), float(hi[0]), npts)[:, None]
    if scn.domain.d != 1:
        raise ScenarioError("field lattices are one-dimensional")
    fgrid = FieldGrid.build(scn.domain, times, pts)
    est = sample_field(scn.domain, scn.coeffs, scn.phi, scn.psi, scn.solver, fgrid,
                       n_paths=scn.n_paths, seed=scn.seed, sigma=scn.sigma, b=scn.drift,
                       n_b_draws=draws)
    rows = []
    for i, t in enumerate(times):
        for j in range(npts):
            rows.append((float(t), float(pts[j, 0]), float(est.values[i, j]), float(est.stderr[i, j])))
    _write_csv(os.path.join(out_dir, "field.csv"), ["t", "x", "u", "stderr"], rows)
    cont = continuity_diagnostic(est)
    lines = ["field: Monte-Carlo value field on the space-time lattice",
             f"{_status(not cont['blowup'])} continuity modulus stable across strides "
             f"(fine {cont['worst_fine']:.3g}, coarse {cont['worst_coarse']:.3g})"]
    _emit(lines, out_dir, "field.txt", quiet)
    return 0 if not cont["blowup"] else 3


def cmd_report(scn: Scenario, out_dir: str, quiet: bool) -> int:
    """Full diagnostic pass: solve, weighted norms, penalization energies,
    and the subgradient-inequality audit."""
    noise, state, sol = _solve_scenario(scn)
    c = scn.coeffs.constants
    wr = validate_weights(c)
    norms = weighted_norms(sol, c.lam, c.mu, A=(state.A if state is not None else noise.A))
    diag = penalization_diagnostics(sol, scn.phi, scn.psi, max(scn.solver.eps, 1e-12), c.lam, c.mu)
    test_points = scn.raw.get("vi_test_points", [-1.0, 0.0, 0.25, 0.5])
    vi = verify_vi_inclusion(sol, scn.phi, scn.psi, test_points)
    lines = [
        f"report: scenario {scn.name!r}",
        f"{_status(wr.ok)} weight exponents beyond the sufficient bounds "
        f"(lam margin {wr.lam_margin:.3g}, mu margin {wr.mu_margin:.3g})",
        "weighted norms (exponential weight in t and A):",
    ]
    for key, v in norms.items():
        lines.append(f"  {key} = {v:.6g}")
    lines.append("penalization energies at the run eps:")
    for key, v in diag.items():
        lines.append(f"  {key} = {v:.6g}")
    lines.append(f"subgradient-inequality audit: worst dt-violation {vi['worst_phi']:.3e}, "
                 f"worst dA-violation {vi['worst_psi']:.3e}")
    rows = ([("norm:" + key, float(v)) for key, v in norms.items()]
            + [("penalization:" + key, float(v)) for key, v in diag.items()]
            + [("vi:worst_phi", float(vi["worst_phi"])), ("vi:worst_psi", float(vi["worst_psi"]))])
    _write_csv(os.path.join(out_dir, "report.csv"), ["quantity", "value"], rows)
    _emit(lines, out_dir, "report.txt", quiet)
    return 0


_COMMANDS = {
    "prox-check": cmd_prox_check,
    "compat-check": cmd_compat_check,
    "sde-sim": cmd_sde_sim,
    "solve": cmd_solve,
    "cauchy": cmd_cauchy,
    "field": cmd_field,
    "report": cmd_report,
}


def _parser():
    p = argparse.ArgumentParser(prog="bdsvi", description=__doc__)
    p.add_argument("command", choices=sorted(_COMMANDS))
    p.add_argument("--scenario", required=True, help="path to a YAML scenario file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--eps", default=None, help="eps override; a comma list replaces the ladder")
    p.add_argument("--quiet", action="store_true")
    return p


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = {"seed": args.seed, "paths": args.paths, "steps": args.steps}
    if args.eps is not None:
        vals = [float(v) for v in str(args.eps).split(",") if v.strip()]
        if len(vals) == 1:
            overrides["eps"] = vals[0]
        else:
            overrides["eps_ladder"] = vals
            overrides["eps"] = vals[-1]
    try:
        scn = load_scenario(args.scenario, overrides)
        if scn.weight_warning and not args.quiet:
            sys.stderr.write(f"WARN {scn.weight_warning}\n")
        return _COMMANDS[args.command](scn, args.out, args.quiet)
    except (ScenarioError, KeyError, FileNotFoundError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": "validation", "detail": str(exc)}) + "\n")
        return 2
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(json.dumps({"error": "numerical", "detail": str(exc)}) + "\n")
        return 3


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
