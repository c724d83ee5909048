"""Monte-Carlo sampling of the value field u(t, x) on a space-time lattice.

Each lattice node launches a reflected ensemble from (t, x); its boundary
local time feeds the backward solver as the increasing weight process, and
the field value is the ensemble estimate of the solution at the initial node.
One backward-noise draw defines one field sample (the field is a random
object of the backward noise); the reported field averages the per-draw
fields and keeps them available.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .convex import ConvexFunction, yosida_gradient
from .drivers import PathBundle, TimeGrid, _substream, generate_paths
from .reflected import DomainSpec, simulate_reflected
from .solver import BdsdeSolution, CoefficientSet, SolverConfig, solve_penalized

__all__ = [
    "FieldGrid",
    "FieldEstimate",
    "sample_field",
    "manufactured_field",
    "continuity_diagnostic",
    "interior_residual",
    "boundary_residual",
]

_TOL = 1e-9


@dataclass(frozen=True)
class FieldGrid:
    """Evaluation lattice: times in [0, T] and points in the closure."""

    times: np.ndarray          # (nt,)
    points: np.ndarray         # (npts, d)
    boundary_mask: np.ndarray  # (npts,) True where |level| <= tol

    @classmethod
    def build(cls, domain: DomainSpec, times, points, tol: float = 1e-7) -> "FieldGrid":
        times = np.asarray(times, dtype=float)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != domain.d:
            points = points.reshape(-1, domain.d)
        lv = domain.level(points)
        if np.any(lv < -_TOL):
            raise ValueError("lattice point outside the closure of the domain")
        return cls(times, points, np.abs(lv) <= tol)


@dataclass
class FieldEstimate:
    grid: FieldGrid
    values: np.ndarray          # (nt, npts), mean over backward draws
    stderr: np.ndarray          # (nt, npts)
    per_draw: np.ndarray        # (n_draws, nt, npts)
    n_paths: int
    config: Optional[SolverConfig] = None


def manufactured_field(u: Callable, fgrid: FieldGrid) -> FieldEstimate:
    """Exact field injected from an analytic u(t, x); zero standard error.
    Used to verify the residual stencils on manufactured solutions."""
    nt, npts = fgrid.times.size, fgrid.points.shape[0]
    vals = np.empty((nt, npts))
    for i, t in enumerate(fgrid.times):
        for j in range(npts):
            vals[i, j] = float(u(float(t), fgrid.points[j]))
    return FieldEstimate(fgrid, vals, np.zeros_like(vals), vals[None], n_paths=0)


def sample_field(
    domain: DomainSpec,
    coeffs: CoefficientSet,
    phi: ConvexFunction,
    psi: ConvexFunction,
    config: SolverConfig,
    fgrid: FieldGrid,
    n_paths: int,
    seed: int,
    sigma=1.0,
    b=0.0,
    n_b_draws: int = 1,
) -> FieldEstimate:
    """Estimate u(t, x) at every lattice node.

    Lattice times are snapped to the master grid of the solver config.  The
    backward increments of one draw are generated once on the master grid and
    shared by every path and lattice node (common noise); the forward noise
    gets an independent substream per node.  The terminal slice is the exact
    terminal map.
    """
    master = config.grid
    nodes = master.nodes
    nt, npts = fgrid.times.size, fgrid.points.shape[0]
    if not callable(coeffs.terminal):
        xi = float(np.atleast_1d(np.asarray(coeffs.terminal, dtype=float))[0])
        coeffs = CoefficientSet(coeffs.f, coeffs.g, coeffs.h,
                                lambda x: np.full(x.shape[:-1], xi), coeffs.constants)
    per_draw = np.empty((n_b_draws, nt, npts))
    per_draw_se = np.empty((n_b_draws, nt, npts))
    d = domain.d

    t_index = np.searchsorted(nodes, fgrid.times - 1e-12)
    sqdt = np.sqrt(master.dt)[:, None]
    for draw in range(n_b_draws):
        db_master = _substream(seed, 2**63 + draw).standard_normal((master.n_steps, d)) * sqdt
        for it, j0 in enumerate(t_index):
            t = float(nodes[j0])
            for jp in range(npts):
                x = fgrid.points[jp]
                if j0 == master.n_steps:
                    per_draw[draw, it, jp] = float(np.atleast_1d(coeffs.terminal(x[None, :]))[0])
                    per_draw_se[draw, it, jp] = 0.0
                    continue
                sub = TimeGrid(nodes[j0:])
                sub_seed = (seed * 1000003 + draw * 262147 + it * 9176 + jp * 31 + 7) % (2**63)
                bundle = generate_paths(sub, d, n_paths, sub_seed)
                bundle = PathBundle(sub, d, n_paths, bundle.dW,
                                    np.broadcast_to(db_master[j0:], (n_paths, sub.n_steps, d)).copy(),
                                    bundle.A, sub_seed, a_attached=False)
                ens = simulate_reflected(domain, b, sigma, (t, x), sub, bundle)
                cfg = SolverConfig(sub, eps=config.eps, scheme=config.scheme,
                                   regression=config.regression, tolerance=config.tolerance)
                sol = solve_penalized(coeffs, phi, psi, cfg, bundle, state=ens)
                y0 = sol.Y[:, 0, 0]
                per_draw[draw, it, jp] = float(np.mean(y0))
                per_draw_se[draw, it, jp] = float(np.std(y0, ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0
    values = np.mean(per_draw, axis=0)
    within = np.sqrt(np.mean(per_draw_se ** 2, axis=0) / n_b_draws)
    across = np.std(per_draw, axis=0, ddof=1) / np.sqrt(n_b_draws) if n_b_draws > 1 else 0.0
    stderr = np.sqrt(within ** 2 + np.square(across))
    return FieldEstimate(fgrid, values, stderr, per_draw, n_paths, config)


def continuity_diagnostic(fld: FieldEstimate) -> dict:
    """Empirical continuity moduli |du| / (|dt|^{1/2} + |dx|) between lattice
    neighbours at stride 1 and stride 2; flags blow-up when the fine-scale
    worst ratio exceeds ten times the coarse-scale worst ratio."""
    u = fld.values
    times = fld.grid.times
    pts = fld.grid.points

    def ratios(stride):
        out = []
        if times.size > stride:
            dt = times[stride:] - times[:-stride]
            du = np.abs(u[stride:] - u[:-stride])
            out.append((du / np.sqrt(dt)[:, None]).ravel())
        if pts.shape[0] > stride:
            dx = np.linalg.norm(pts[stride:] - pts[:-stride], axis=1)
            du = np.abs(u[:, stride:] - u[:, :-stride])
            out.append((du / dx[None, :]).ravel())
        if not out:
            raise ValueError("lattice too small for continuity pairs")
        return np.concatenate(out)

    fine = ratios(1)
    coarse = ratios(2)
    worst_fine = float(np.max(fine))
    worst_coarse = float(np.max(coarse))
    return {
        "worst_fine": worst_fine,
        "worst_coarse": worst_coarse,
        "blowup": worst_fine > 10.0 * max(worst_coarse, 1e-12),
    }


def _require_line_lattice(fld: FieldEstimate):
    pts = fld.grid.points
    if pts.shape[1] != 1:
        raise ValueError("residual stencils support one-dimensional lattices")
    x = pts[:, 0]
    if np.any(np.diff(x) <= 0):
        raise ValueError("lattice points must be sorted")
    if x.size < 3 or fld.grid.times.size < 2:
        raise ValueError("lattice too coarse for the stencil")
    return x


def interior_residual(fld: FieldEstimate, coeffs: CoefficientSet, phi: ConvexFunction,
                      eps: float, domain: DomainSpec, sigma=1.0, b=0.0) -> dict:
    """Finite-difference residual of the penalized interior equation

        du/dt + 0.5 sigma^2 u_xx + b u_x + f(t, x, u, sigma u_x)
              - grad phi_eps(u)

    on interior lattice nodes (deterministic reduction, backward noise off)."""
    x = _require_line_lattice(fld)
    times = fld.grid.times
    u = fld.values
    interior = ~fld.grid.boundary_mask
    interior[0] = interior[-1] = False
    if not np.any(interior):
        raise ValueError("no interior nodes on the lattice")
    sig = float(sigma(x[:1]) if callable(sigma) else sigma)
    bv = float(b(x[:1]) if callable(b) else b)
    res = np.full((times.size - 1, x.size), np.nan)
    for i in range(times.size - 1):
        dt = times[i + 1] - times[i]
        u_t = (u[i + 1] - u[i]) / dt
        u_x = np.gradient(u[i], x, edge_order=2)
        u_xx = np.gradient(u_x, x, edge_order=2)
        y = u[i][:, None]
        z = (sig * u_x)[:, None, None]
        fv = np.asarray(coeffs.f(float(times[i]), x[:, None], y, z), dtype=float).reshape(-1)
        pen = yosida_gradient(phi, eps, y)[:, 0] if eps > 0 else 0.0
        res[i] = u_t + 0.5 * sig * sig * u_xx + bv * u_x + fv - pen
    worst = float(np.nanmax(np.abs(res[:, interior])))
    return {"max_abs": worst, "residual": res, "interior_mask": interior}


def boundary_residual(fld: FieldEstimate, coeffs: CoefficientSet, psi: ConvexFunction,
                      eps: float, domain: DomainSpec) -> dict:
    """One-sided residual of the penalized boundary relation

        <grad level(x), grad u> + g(t, x, u) - grad psi_eps(u)

    at boundary-tagged lattice nodes."""
    x = _require_line_lattice(fld)
    times = fld.grid.times
    u = fld.values
    bmask = fld.grid.boundary_mask
    if not np.any(bmask):
        raise ValueError("no boundary nodes on the lattice")
    worst = 0.0
    res = np.full((times.size, x.size), np.nan)
    for i, t in enumerate(times):
        u_x = np.gradient(u[i], x, edge_order=2)
        for j in np.nonzero(bmask)[0]:
            xq = x[j: j + 1]
            n_in = float(domain.gradient(xq[:, None])[0, 0])
            y = np.array([[u[i, j]]])
            gv = float(np.asarray(coeffs.g(float(t), xq[:, None], y)).reshape(-1)[0])
            pen = float(yosida_gradient(psi, eps, y)[0, 0]) if eps > 0 else 0.0
            res[i, j] = n_in * u_x[j] + gv - pen
            worst = max(worst, abs(res[i, j]))
    return {"max_abs": worst, "residual": res}
