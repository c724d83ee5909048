"""Backward solver for the Yosida-penalized doubly stochastic equation.

The recursion runs from the terminal node to the start.  At each step the
next value plus the dt, dA and backward-noise contributions is projected onto
the chosen conditional-expectation estimator, the Z component is extracted
from the correlation with the forward increments, and the penalization is
applied either explicitly (Yosida gradient step) or implicitly (resolvent
step, the stable surrogate of the small-eps limit).

Conditional expectations:

* ``sample-mean`` is meant for the non-Markov regime with a deterministic
  terminal value and state-free coefficients.  There the running value is
  measurable with respect to the backward noise, which is *known* at the
  current time under the two-sided filtration, so the value update is exact
  pathwise; only the Z extraction averages across paths (where the forward
  expectation genuinely acts).
* ``poly``/``partition`` regress on the Markov state.  They assume the
  ensemble shares one backward-noise draw (common noise), which is how the
  field sampler builds its ensembles.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .convex import AssumptionConstants, ConvexFunction, prox, yosida_gradient
from .drivers import PathBundle, TimeGrid
from .reflected import ReflectedPath

__all__ = [
    "CoefficientSet",
    "SolverConfig",
    "BdsdeSolution",
    "solve_penalized",
    "weighted_norms",
    "penalization_diagnostics",
    "cauchy_study",
    "verify_vi_inclusion",
]


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficient maps of the backward equation.

    f(t, x, y, z) -> (n, k);  g(t, x, y) -> (n, k);  h(t, x, y, z) -> (n, k, d).
    x is the Markov state (n, d) or None in the state-free regime.
    terminal is a constant xi (scalar or length-k) or a map chi(x_T).
    """

    f: Callable
    g: Callable
    h: Callable
    terminal: Union[float, np.ndarray, Callable]
    constants: AssumptionConstants = field(default_factory=AssumptionConstants)

    def spot_check(self, rng: np.random.Generator, k: int = 1, d: int = 1, n: int = 64) -> dict:
        """Sampled validation of monotonicity/Lipschitz structure:
        monotonicity of f and g in y, Lipschitz of f in z, and the
        contraction bound ||dh||^2 <= K|dy|^2 + alpha||dz||^2."""
        c = self.constants
        t = 0.3
        y = rng.normal(size=(n, k))
        y2 = rng.normal(size=(n, k))
        z = rng.normal(size=(n, k, d))
        z2 = rng.normal(size=(n, k, d))
        worst = {"f_mono": -np.inf, "f_lip_z": -np.inf, "g_mono": -np.inf, "h_contract": -np.inf}
        dy = y - y2
        df = self.f(t, None, y, z) - self.f(t, None, y2, z)
        worst["f_mono"] = float(np.max(np.sum(dy * df, axis=-1) - c.beta1 * np.sum(dy * dy, axis=-1)))
        dfz = self.f(t, None, y, z) - self.f(t, None, y, z2)
        dz = np.sqrt(np.sum((z - z2) ** 2, axis=(-2, -1)))
        worst["f_lip_z"] = float(np.max(np.sqrt(np.sum(dfz ** 2, axis=-1)) - c.K * dz))
        dg = self.g(t, None, y) - self.g(t, None, y2)
        worst["g_mono"] = float(np.max(np.sum(dy * dg, axis=-1) - c.beta2 * np.sum(dy * dy, axis=-1)))
        dh = self.h(t, None, y, z) - self.h(t, None, y2, z2)
        lhs = np.sum(dh ** 2, axis=(-2, -1))
        rhs = c.K * np.sum(dy * dy, axis=-1) + c.alpha * dz ** 2
        worst["h_contract"] = float(np.max(lhs - rhs))
        return worst


@dataclass(frozen=True)
class SolverConfig:
    grid: TimeGrid
    eps: float = 1e-3
    scheme: str = "implicit-prox"  # or "explicit-yosida"
    regression: Union[str, tuple] = "sample-mean"  # or ("poly", degree) / ("partition", cells)
    tolerance: float = 0.0

    def __post_init__(self):
        if self.scheme not in ("explicit-yosida", "implicit-prox"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "explicit-yosida" and self.eps <= 0.0:
            raise ValueError("explicit scheme needs eps > 0")


@dataclass
class BdsdeSolution:
    grid: TimeGrid
    Y: np.ndarray  # (n_paths, n_nodes, k)
    Z: np.ndarray  # (n_paths, n_nodes, k, d)
    U: np.ndarray  # (n_paths, n_nodes, k)
    V: np.ndarray  # (n_paths, n_nodes, k)
    dA: np.ndarray  # (n_paths, n_steps)
    config: SolverConfig
    condition_numbers: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def A(self) -> np.ndarray:
        n_paths = self.dA.shape[0]
        return np.concatenate([np.zeros((n_paths, 1)), np.cumsum(self.dA, axis=1)], axis=1)


def _poly_features(x: np.ndarray, degree: int) -> np.ndarray:
    n, d = x.shape
    cols = [np.ones(n)]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            col = np.ones(n)
            for j in combo:
                col = col * x[:, j]
            cols.append(col)
    return np.stack(cols, axis=1)


class _Regressor:
    """Projects per-path targets onto the conditional-expectation estimator."""

    def __init__(self, spec):
        self.spec = spec
        self.last_cond = None

    def project(self, x_state: Optional[np.ndarray], targets: np.ndarray, pathwise_exact: bool) -> np.ndarray:
        """targets: (n_paths, m).  pathwise_exact marks targets already
        measurable at the current time (value updates under sample-mean)."""
        if self.spec == "sample-mean":
            if pathwise_exact:
                return targets
            return np.broadcast_to(np.mean(targets, axis=0), targets.shape).copy()
        if x_state is None:
            raise ValueError("state-based regression needs a Markov state ensemble")
        kind = self.spec[0]
        if kind == "poly":
            phi = _poly_features(x_state, int(self.spec[1]))
            coef, _, _, sv = np.linalg.lstsq(phi, targets, rcond=None)
            self.last_cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
            return phi @ coef
        if kind == "partition":
            cells = int(self.spec[1])
            d = x_state.shape[1]
            per_dim = max(1, int(round(cells ** (1.0 / d))))
            ids = np.zeros(x_state.shape[0], dtype=int)
            for j in range(d):
                qs = np.quantile(x_state[:, j], np.linspace(0, 1, per_dim + 1)[1:-1])
                ids = ids * per_dim + np.searchsorted(qs, x_state[:, j])
            out = np.empty_like(targets)
            for cid in np.unique(ids):
                mask = ids == cid
                out[mask] = np.mean(targets[mask], axis=0)
            return out
        raise ValueError(f"unknown regression spec {self.spec!r}")


def _terminal_values(coeffs: CoefficientSet, n_paths: int, state: Optional[ReflectedPath]):
    if callable(coeffs.terminal):
        if state is None:
            raise ValueError("terminal map chi needs a state ensemble")
        xi = np.asarray(coeffs.terminal(state.X[:, -1]), dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
    else:
        xi = np.atleast_1d(np.asarray(coeffs.terminal, dtype=float))
        xi = np.broadcast_to(xi, (n_paths, xi.size)).copy()
    return xi


def solve_penalized(
    coeffs: CoefficientSet,
    phi: ConvexFunction,
    psi: ConvexFunction,
    config: SolverConfig,
    noise: PathBundle,
    state: Optional[ReflectedPath] = None,
) -> BdsdeSolution:
    """Backward recursion for the penalized equation.

    Per step i:
      (a) Z_i from the regression of Y_{i+1} dW_i^T / dt_i;
      (b) Ytil_i = E_i[Y_{i+1} + f dt + g dA + h dB] (coefficients at the
          right endpoint in (t, x, y), current Z);
      (c) explicit-yosida:  Y_i = Ytil - grad phi_eps(Ytil) dt
                                        - grad psi_eps(Ytil) dA,
          with U_i = grad phi_eps(Y_i), V_i = grad psi_eps(Y_i);
          implicit-prox:    Y_i = J^psi_dA(J^phi_dt(Ytil)), with the
          multipliers read off the resolvent gaps (V_i = 0 when dA_i = 0).
    """
    grid = config.grid
    if noise.grid.n_steps != grid.n_steps:
        raise ValueError("noise bundle and solver grid disagree")
    n_paths = noise.n_paths
    d = noise.d
    if state is not None:
        dA = np.diff(state.A, axis=1)
        X = state.X
    else:
        dA = noise.dA
        X = None
    if np.any(dA < -1e-12):
        raise ValueError("encountered a negative dA increment")
    dA = np.maximum(dA, 0.0)

    xi = _terminal_values(coeffs, n_paths, state)
    k = xi.shape[1]
    n_nodes = grid.n_steps + 1

    Y = np.empty((n_paths, n_nodes, k))
    Z = np.zeros((n_paths, n_nodes, k, d))
    U = np.zeros((n_paths, n_nodes, k))
    V = np.zeros((n_paths, n_nodes, k))
    Y[:, -1] = xi
    explicit = config.scheme == "explicit-yosida"
    eps = config.eps
    if explicit:
        U[:, -1] = yosida_gradient(phi, eps, xi)
        V[:, -1] = yosida_gradient(psi, eps, xi)

    reg = _Regressor(config.regression)
    conds = []
    for i in range(grid.n_steps - 1, -1, -1):
        dt = float(grid.dt[i])
        dw = noise.dW[:, i]
        db = noise.dB[:, i]
        da = dA[:, i]
        y_next = Y[:, i + 1]
        x_here = X[:, i] if X is not None else None
        x_next = X[:, i + 1] if X is not None else None
        t_next = float(grid.nodes[i + 1])

        z_target = (y_next[:, :, None] * dw[:, None, :] / dt).reshape(n_paths, k * d)
        z_i = reg.project(x_here, z_target, pathwise_exact=False).reshape(n_paths, k, d)
        if reg.last_cond is not None:
            conds.append(reg.last_cond)

        fv = np.asarray(coeffs.f(t_next, x_next, y_next, z_i), dtype=float).reshape(n_paths, k)
        gv = np.asarray(coeffs.g(t_next, x_next, y_next), dtype=float).reshape(n_paths, k)
        hv = np.asarray(coeffs.h(t_next, x_next, y_next, z_i), dtype=float).reshape(n_paths, k, d)
        target = y_next + fv * dt + gv * da[:, None] + np.einsum("pkd,pd->pk", hv, db)
        y_til = reg.project(x_here, target, pathwise_exact=True)

        if explicit:
            gp = yosida_gradient(phi, eps, y_til)
            gq = yosida_gradient(psi, eps, y_til)
            y_i = y_til - gp * dt - gq * da[:, None]
            Y[:, i] = y_i
            U[:, i] = yosida_gradient(phi, eps, y_i)
            V[:, i] = yosida_gradient(psi, eps, y_i)
        else:
            j_phi = prox(phi, dt, y_til)
            U[:, i] = (y_til - j_phi) / dt
            active = da > 0.0
            y_i = j_phi.copy()
            if np.any(active):
                j_psi = prox(psi, da[active], j_phi[active])
                V[active, i] = (j_phi[active] - j_psi) / da[active, None]
                y_i[active] = j_psi
            Y[:, i] = y_i
        Z[:, i] = z_i

    return BdsdeSolution(grid, Y, Z, U, V, dA, config, conds)


def _weights(grid: TimeGrid, A: np.ndarray, lam: float, mu: float) -> np.ndarray:
    return np.exp(lam * grid.nodes[None, :] + mu * A)


def _m_norm2(grid: TimeGrid, w: np.ndarray, q2: np.ndarray) -> float:
    """E int w |q|^2 dt by trapezoid.  q2: (n_paths, n_nodes) squared norms."""
    return float(np.mean(np.trapezoid(w * q2, grid.nodes, axis=1)))


def _mbar_norm2(w: np.ndarray, q2: np.ndarray, dA: np.ndarray) -> float:
    v = w * q2
    return float(np.mean(np.sum(0.5 * (v[:, :-1] + v[:, 1:]) * dA, axis=1)))


def weighted_norms(sol: BdsdeSolution, lam: float, mu: float, A: Optional[np.ndarray] = None) -> dict:
    """Monte-Carlo weighted norms with weight exp(lam*t + mu*A_t)."""
    A = sol.A if A is None else np.asarray(A, dtype=float)
    w = _weights(sol.grid, A, lam, mu)
    y2 = np.sum(sol.Y ** 2, axis=-1)
    z2 = np.sum(sol.Z ** 2, axis=(-2, -1))
    u2 = np.sum(sol.U ** 2, axis=-1)
    v2 = np.sum(sol.V ** 2, axis=-1)
    dA = np.diff(A, axis=1)
    return {
        "Y_M2": _m_norm2(sol.grid, w, y2),
        "Y_Mbar2": _mbar_norm2(w, y2, dA),
        "Y_S2": float(np.mean(np.max(w * y2, axis=1))),
        "Z_M2": _m_norm2(sol.grid, w, z2),
        "U_M2": _m_norm2(sol.grid, w, u2),
        "V_Mbar2": _mbar_norm2(w, v2, dA),
    }


def estimate_lambda(coeffs: CoefficientSet, phi, psi, noise: PathBundle,
                    state: Optional[ReflectedPath], lam: float, mu: float) -> float:
    """Monte-Carlo estimate of the weighted integrability functional that
    normalizes the a-priori bounds: terminal data plus coefficient magnitudes
    at the origin under the exponential weight."""
    grid = noise.grid
    A = state.A if state is not None else noise.A
    n_paths = noise.n_paths
    xi = _terminal_values(coeffs, n_paths, state)
    k = xi.shape[1]
    wT = np.exp(lam * grid.T + mu * A[:, -1])
    phi_xi = phi.evaluate(xi)
    psi_xi = psi.evaluate(xi)
    head = float(np.mean(wT * (np.sum(xi ** 2, axis=-1) + phi_xi + psi_xi)))
    w = _weights(grid, A, lam, mu)
    y0 = np.zeros((n_paths, k))
    z0 = np.zeros((n_paths, k, noise.d))
    f2 = np.empty((n_paths, grid.nodes.size))
    h2 = np.empty_like(f2)
    g2 = np.empty_like(f2)
    X = state.X if state is not None else None
    for j, t in enumerate(grid.nodes):
        xj = X[:, j] if X is not None else None
        f2[:, j] = np.sum(np.asarray(coeffs.f(float(t), xj, y0, z0)).reshape(n_paths, k) ** 2, axis=-1)
        h2[:, j] = np.sum(np.asarray(coeffs.h(float(t), xj, y0, z0)).reshape(n_paths, k, -1) ** 2, axis=(-2, -1))
        g2[:, j] = np.sum(np.asarray(coeffs.g(float(t), xj, y0)).reshape(n_paths, k) ** 2, axis=-1)
    return head + _m_norm2(grid, w, f2 + h2) + _mbar_norm2(w, g2, np.diff(A, axis=1))


def penalization_diagnostics(sol: BdsdeSolution, phi: ConvexFunction, psi: ConvexFunction,
                             eps: float, lam: float = 0.0, mu: float = 0.0) -> dict:
    """Penalization energies of a solved run: gradient energies, envelope
    integrals at the resolvent points, the weighted distance to the resolvent
    (sup over time of its expectation), and pointwise envelope expectations."""
    A = sol.A
    w = _weights(sol.grid, A, lam, mu)
    dA = sol.dA
    j_phi = prox(phi, eps, sol.Y)
    j_psi = prox(psi, eps, sol.Y)
    gp2 = np.sum(yosida_gradient(phi, eps, sol.Y) ** 2, axis=-1)
    gq2 = np.sum(yosida_gradient(psi, eps, sol.Y) ** 2, axis=-1)
    phi_j = phi.evaluate(j_phi)
    psi_j = psi.evaluate(j_psi)
    dist_phi = np.sum((sol.Y - j_phi) ** 2, axis=-1)
    dist_psi = np.sum((sol.Y - j_psi) ** 2, axis=-1)
    return {
        "grad_energy": _m_norm2(sol.grid, w, gp2) + _mbar_norm2(w, gq2, dA),
        "envelope_integral": _m_norm2(sol.grid, w, phi_j) + _mbar_norm2(w, psi_j, dA),
        "sup_resolvent_dist": float(np.max(np.mean(w * (dist_phi + dist_psi), axis=0))),
        "sup_envelope": float(np.max(np.mean(w * (phi_j + psi_j), axis=0))),
    }


@dataclass
class CauchyReport:
    eps_pairs: list
    gaps_sq: list      # weighted expected sup of the squared gap, per pair
    slope: float       # log(sup-gap) vs log(eps + delta) least-squares slope
    limit: BdsdeSolution


def cauchy_study(
    coeffs: CoefficientSet,
    phi: ConvexFunction,
    psi: ConvexFunction,
    base_config: SolverConfig,
    eps_ladder,
    noise: PathBundle,
    state: Optional[ReflectedPath] = None,
    lam: float = 0.0,
    mu: float = 0.0,
) -> CauchyReport:
    """Coupled-run convergence study along a decreasing eps ladder.

    All runs share the noise and grid.  For consecutive (eps, delta) the
    weighted expected sup of the squared gap is estimated and the rate
    exponent is fitted as the slope of log(gap) vs log(eps + delta), where
    gap is the square root of the estimate.
    """
    ladder = [float(e) for e in eps_ladder]
    if len(ladder) < 2:
        raise ValueError("eps ladder needs at least two entries")
    if any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("eps ladder must be strictly decreasing")
    sols = []
    for e in ladder:
        cfg = SolverConfig(base_config.grid, eps=e, scheme="explicit-yosida",
                           regression=base_config.regression, tolerance=base_config.tolerance)
        sols.append(solve_penalized(coeffs, phi, psi, cfg, noise, state))
    A = sols[0].A
    w = _weights(base_config.grid, A, lam, mu)
    pairs, gaps = [], []
    for (ea, sa), (eb, sb) in zip(zip(ladder, sols), zip(ladder[1:], sols[1:])):
        diff2 = np.sum((sa.Y - sb.Y) ** 2, axis=-1)
        gaps.append(float(np.mean(np.max(w * diff2, axis=1))))
        pairs.append((ea, eb))
    x = np.log([a + b for a, b in pairs])
    y = 0.5 * np.log(gaps)  # log of the unsquared weighted sup gap
    slope = float(np.polyfit(x, y, 1)[0])
    return CauchyReport(pairs, gaps, slope, sols[-1])


def verify_vi_inclusion(sol: BdsdeSolution, phi: ConvexFunction, psi: ConvexFunction,
                        test_points) -> dict:
    """Worst violation of the subgradient inequality

        <U_t, r - Y_t> + phi(Y_t) - phi(r) <= 0

    over nodes, paths and test points r, plus the dA-weighted analogue for
    (V, psi) restricted to nodes with positive dA, and counts of
    finiteness failures phi(Y) = +inf (dt nodes) / psi(Y) = +inf (dA nodes).
    """
    Y = sol.Y
    phi_y = phi.evaluate(Y)
    psi_y = psi.evaluate(Y)
    active = np.concatenate([sol.dA > 0.0, np.zeros((Y.shape[0], 1), dtype=bool)], axis=1)
    worst_phi = -np.inf
    worst_psi = -np.inf
    for r in test_points:
        r = np.atleast_1d(np.asarray(r, dtype=float))
        phi_r = float(phi.evaluate(r))
        psi_r = float(psi.evaluate(r))
        vio_phi = np.sum(sol.U * (r - Y), axis=-1) + phi_y - phi_r
        worst_phi = max(worst_phi, float(np.max(vio_phi)))
        if np.any(active):
            vio_psi = np.sum(sol.V * (r - Y), axis=-1) + psi_y - psi_r
            worst_psi = max(worst_psi, float(np.max(vio_psi[active])))
    return {
        "worst_phi": worst_phi,
        "worst_psi": worst_psi,
        "phi_infinite_nodes": int(np.sum(~np.isfinite(phi_y))),
        "psi_infinite_nodes": int(np.sum(~np.isfinite(psi_y[active]))) if np.any(active) else 0,
    }
