"""Convex functions, proximal maps, and Moreau-Yosida smoothing.

Points live in R^k and are passed as arrays whose last axis has length k;
any number of batch axes in front is allowed.  +inf is the out-of-domain
sentinel (numpy's inf already saturates under ordering and addition).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ConvexFunction",
    "AssumptionConstants",
    "prox",
    "moreau_envelope",
    "yosida_gradient",
    "grid_prox_oracle",
    "one_sided_derivatives",
    "prox_property_suite",
    "check_compatibility",
    "CompatibilityReport",
    "validate_weights",
    "WeightReport",
    "make_convex",
    "CATALOG",
]

# h-ladder for one-sided derivative extrapolation
_H_LADDER = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class ConvexFunction:
    """A proper l.s.c. convex function theta with theta(0) = 0, theta >= 0.

    evaluate maps arrays of shape (..., k) to values of shape (...),
    with +inf encoding points outside the effective domain.
    prox_oracle(eps, x), when supplied, must return
    argmin_y 0.5|x-y|^2 + eps*theta(y); eps may be a scalar or an array
    broadcastable against the batch axes of x.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    prox_oracle: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    domain_hint: Optional[tuple] = None  # (lo, hi) arrays of length k
    label: str = ""

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class AssumptionConstants:
    """Structural constants of the coefficient triple (f, g, h).

    beta1, beta2 are the one-sided monotonicity constants of f and g in y,
    K the Lipschitz/growth constant, alpha in (0,1) the z-contraction factor
    of h, and (lam, mu) the exponential weight exponents.
    """

    beta1: float = 0.0
    beta2: float = 0.0
    K: float = 0.0
    alpha: float = 0.5
    lam: float = 3.0
    mu: float = 1.5


@dataclass(frozen=True)
class WeightReport:
    ok: bool
    lam_margin: float
    mu_margin: float
    lam_bound: float
    mu_bound: float


def validate_weights(c: AssumptionConstants) -> WeightReport:
    """Check the strict weight inequalities

        lam > 2 + 2(beta1+beta2) + K(3-alpha+2K)/(1-alpha),   mu > 1 + 2*beta2.

    Returns margins (positive means satisfied with room).
    """
    if not (0.0 < c.alpha < 1.0):
        raise ValueError(f"alpha must lie in (0,1), got {c.alpha}")
    lam_bound = 2.0 + 2.0 * (c.beta1 + c.beta2) + c.K * (3.0 - c.alpha + 2.0 * c.K) / (1.0 - c.alpha)
    mu_bound = 1.0 + 2.0 * c.beta2
    return WeightReport(
        ok=(c.lam > lam_bound) and (c.mu > mu_bound),
        lam_margin=c.lam - lam_bound,
        mu_margin=c.mu - mu_bound,
        lam_bound=lam_bound,
        mu_bound=mu_bound,
    )


def _check_prox_args(eps, x):
    x = np.asarray(x, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("prox input x must be finite")
    if np.any(eps < 0.0) or not np.all(np.isfinite(eps)):
        raise ValueError("eps must be finite and >= 0")
    return eps, x


def prox(theta: ConvexFunction, eps, x) -> np.ndarray:
    """Resolvent J_eps(x) = (I + eps * dtheta)^{-1}(x).

    Minimizer of y -> 0.5|x-y|^2 + eps*theta(y).  Uses the closed-form
    oracle when available, otherwise the lattice oracle over domain_hint.
    eps = 0 is the identity.
    """
    eps, x = _check_prox_args(eps, x)
    if np.all(eps == 0.0):
        return x.copy()
    if theta.prox_oracle is not None:
        return np.asarray(theta.prox_oracle(eps, x), dtype=float)
    return grid_prox_oracle(theta, eps, x)


def moreau_envelope(theta: ConvexFunction, eps, x) -> np.ndarray:
    """theta_eps(x) = 0.5|x - J_eps(x)|^2 + eps*theta(J_eps(x))."""
    eps, x = _check_prox_args(eps, x)
    j = prox(theta, eps, x)
    return 0.5 * np.sum((x - j) ** 2, axis=-1) + eps * theta.evaluate(j)


def yosida_gradient(theta: ConvexFunction, eps, x) -> np.ndarray:
    """grad theta_eps(x) = (x - J_eps(x)) / eps, an element of dtheta(J_eps(x))."""
    eps, x = _check_prox_args(eps, x)
    if np.any(eps == 0.0):
        raise ValueError("yosida_gradient requires eps > 0")
    j = prox(theta, eps, x)
    return (x - j) / np.asarray(eps)[..., None] if np.ndim(eps) else (x - j) / eps


def grid_prox_oracle(theta: ConvexFunction, eps, x, resolution: float = 1e-8) -> np.ndarray:
    """Lattice minimizer of 0.5|x-y|^2 + eps*theta(y) over domain_hint.

    Restricted to k <= 2.  The lattice is refined in stages (each stage keeps
    a window of a few coarse cells around the current minimizer); for a convex
    objective this reaches the same lattice minimizer as a single exhaustive
    sweep at the final resolution, with error <= resolution.
    """
    eps, x = _check_prox_args(eps, x)
    if theta.domain_hint is None:
        raise ValueError(f"grid oracle for {theta.label!r} needs a domain_hint")
    k = x.shape[-1]
    if k > 2:
        raise ValueError(f"grid oracle supports k <= 2, got k={k}")
    lo = np.broadcast_to(np.asarray(theta.domain_hint[0], dtype=float), (k,)).copy()
    hi = np.broadcast_to(np.asarray(theta.domain_hint[1], dtype=float), (k,)).copy()
    batch = x.shape[:-1]
    lo_b = np.broadcast_to(lo, batch + (k,)).copy()
    hi_b = np.broadcast_to(hi, batch + (k,)).copy()
    eps_b = np.broadcast_to(eps, batch)

    n_pts = 65 if k == 1 else 17
    step = np.max(hi - lo)
    while True:
        if k == 1:
            grid = lo_b[..., 0, None] + (hi_b[..., 0, None] - lo_b[..., 0, None]) * np.linspace(0.0, 1.0, n_pts)
            vals = 0.5 * (x[..., 0, None] - grid) ** 2 + eps_b[..., None] * theta.evaluate(grid[..., None])
            idx = np.argmin(vals, axis=-1)
            best = np.take_along_axis(grid, idx[..., None], axis=-1)[..., 0]
            step = np.max((hi_b[..., 0] - lo_b[..., 0]) / (n_pts - 1))
            if step <= resolution:
                return best[..., None]
            half = 2.0 * (hi_b[..., 0] - lo_b[..., 0]) / (n_pts - 1)
            lo_b[..., 0] = np.maximum(lo[0], best - half)
            hi_b[..., 0] = np.minimum(hi[0], best + half)
        else:
            t = np.linspace(0.0, 1.0, n_pts)
            g0 = lo_b[..., 0, None] + (hi_b[..., 0, None] - lo_b[..., 0, None]) * t
            g1 = lo_b[..., 1, None] + (hi_b[..., 1, None] - lo_b[..., 1, None]) * t
            y0 = g0[..., :, None]
            y1 = g1[..., None, :]
            pts = np.stack(np.broadcast_arrays(y0, y1), axis=-1)
            dist = (x[..., 0, None, None] - y0) ** 2 + (x[..., 1, None, None] - y1) ** 2
            vals = 0.5 * dist + eps_b[..., None, None] * theta.evaluate(pts)
            flat = vals.reshape(batch + (n_pts * n_pts,))
            idx = np.argmin(flat, axis=-1)
            i0, i1 = np.unravel_index(idx, (n_pts, n_pts))
            best0 = np.take_along_axis(g0, i0[..., None], axis=-1)[..., 0]
            best1 = np.take_along_axis(g1, i1[..., None], axis=-1)[..., 0]
            step = max(
                np.max((hi_b[..., 0] - lo_b[..., 0]) / (n_pts - 1)),
                np.max((hi_b[..., 1] - lo_b[..., 1]) / (n_pts - 1)),
            )
            if step <= resolution:
                return np.stack([best0, best1], axis=-1)
            for dim, best in ((0, best0), (1, best1)):
                half = 2.0 * (hi_b[..., dim] - lo_b[..., dim]) / (n_pts - 1)
                lo_b[..., dim] = np.maximum(lo[dim], best - half)
                hi_b[..., dim] = np.minimum(hi[dim], best + half)


def one_sided_derivatives(theta: ConvexFunction, y: float) -> tuple[float, float]:
    """Left and right derivatives of a one-dimensional theta at y.

    Difference quotients over a fixed h-ladder; by convexity the left
    quotients increase and the right quotients decrease as h shrinks, so the
    smallest finite-h quotient is taken.  Returns -inf/+inf sentinels at
    domain boundaries.  Raises if y itself is outside Dom(theta).
    """
    y = float(y)
    val = float(theta.evaluate(np.array([y])))
    if not np.isfinite(val):
        raise ValueError(f"{y} lies outside Dom({theta.label or 'theta'})")
    left = -np.inf
    right = np.inf
    for h in _H_LADDER:
        vl = float(theta.evaluate(np.array([y - h])))
        vr = float(theta.evaluate(np.array([y + h])))
        ql = (val - vl) / h  # -inf when y-h is outside the domain
        qr = (vr - val) / h  # +inf when y+h is outside the domain
        left = ql
        right = qr
    return left, right


def prox_property_suite(
    theta: ConvexFunction,
    n_samples: int,
    seed: int,
    span: float = 3.0,
    eps_range: tuple = (1e-3, 1.0),
    k: int = 1,
) -> dict:
    """Worst violations of the resolvent/gradient laws on random samples.

    Checks, for random x, y in [-span, span]^k and log-uniform eps, delta:
      nonexpansive     |J_eps(x) - J_eps(y)| <= |x - y|
      lipschitz        |grad theta_eps(x) - grad theta_eps(y)| <= |x-y|/eps
      monotone         <grad theta_eps(x) - grad theta_eps(y), x-y> >= 0
      cross_eps        <grad theta_eps(x) - grad theta_delta(y), x-y>
                         >= -(eps+delta) <grad theta_eps(x), grad theta_delta(y)>
      sandwich_lower   (1/(2 eps))|x - J_eps(x)|^2 <= theta_eps(x)/eps
      sandwich_upper   theta_eps(x)/eps <= theta(x)   (finite theta(x) only)
      subgradient      <grad theta_eps(x), r - J_eps(x)> + theta(J_eps(x)) <= theta(r)
      grad_at_zero     |grad theta_eps(0)| = 0

    Returns a dict of worst signed violations (<= 0 means the law holds).
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-span, span, (n_samples, k))
    y = rng.uniform(-span, span, (n_samples, k))
    lo, hi = np.log10(eps_range[0]), np.log10(eps_range[1])
    eps = 10.0 ** rng.uniform(lo, hi, n_samples)
    delta = 10.0 ** rng.uniform(lo, hi, n_samples)

    jx = prox(theta, eps, x)
    jy = prox(theta, eps, y)
    gx = (x - jx) / eps[:, None]
    gy = (y - jy) / eps[:, None]
    gyd = yosida_gradient(theta, delta, y)
    dxy = np.sqrt(np.sum((x - y) ** 2, axis=-1))

    worst = {}
    worst["nonexpansive"] = float(np.max(np.sqrt(np.sum((jx - jy) ** 2, -1)) - dxy))
    worst["lipschitz"] = float(np.max(np.sqrt(np.sum((gx - gy) ** 2, -1)) - dxy / eps))
    worst["monotone"] = float(np.max(-np.sum((gx - gy) * (x - y), -1)))
    worst["cross_eps"] = float(np.max(
        -(np.sum((gx - gyd) * (x - y), -1) + (eps + delta) * np.sum(gx * gyd, -1))
    ))
    env = moreau_envelope(theta, eps, x)
    worst["sandwich_lower"] = float(np.max(0.5 * np.sum((x - jx) ** 2, -1) - env))
    tx = theta.evaluate(x)
    finite = np.isfinite(tx)
    worst["sandwich_upper"] = float(np.max(env[finite] / eps[finite] - tx[finite])) if np.any(finite) else 0.0
    sub = -np.inf
    t_jx = theta.evaluate(jx)
    for r in (np.full(k, -0.5 * span), np.zeros(k), np.full(k, 0.5 * span)):
        tr = float(theta.evaluate(r))
        vio = np.sum(gx * (r - jx), -1) + t_jx - tr
        sub = max(sub, float(np.max(vio)))
    worst["subgradient"] = sub
    g0 = yosida_gradient(theta, eps, np.zeros((n_samples, k)))
    worst["grad_at_zero"] = float(np.max(np.abs(g0)))
    return worst


@dataclass(frozen=True)
class CompatibilityReport:
    ok: bool
    worst_i: float
    worst_ii: float
    worst_iii: float
    tolerance: float

    @property
    def worst(self) -> float:
        return max(self.worst_i, self.worst_ii, self.worst_iii)


def check_compatibility(
    phi: ConvexFunction,
    psi: ConvexFunction,
    f: Callable,
    g: Callable,
    eps_ladder,
    samples,
    tolerance: float = 1e-9,
) -> CompatibilityReport:
    """Sampled validator of the three coupling inequalities between phi, psi
    and the coefficients:

        (i)   <grad phi_eps(y), grad psi_eps(y)> >= 0
        (ii)  <grad phi_eps(y), g(t,y)>  <= <grad psi_eps(y), g(t,y)>^+
        (iii) <grad psi_eps(y), f(t,y,z)> <= <grad phi_eps(y), f(t,y,z)>^+

    samples is an iterable of (t, y, z) with y, z arrays of shape (k,),
    (k, d).  Worst positive violations are reported; pass iff all are within
    tolerance.  This is a spot check on the given samples, not a proof.
    """
    worst = [0.0, 0.0, 0.0]
    for eps in eps_ladder:
        for (t, y, z) in samples:
            y = np.atleast_1d(np.asarray(y, dtype=float))
            gp = yosida_gradient(phi, eps, y)
            gq = yosida_gradient(psi, eps, y)
            worst[0] = max(worst[0], -float(np.dot(gp, gq)))
            gv = np.atleast_1d(np.asarray(g(t, y), dtype=float))
            lhs = float(np.dot(gp, gv))
            rhs = max(float(np.dot(gq, gv)), 0.0)
            worst[1] = max(worst[1], lhs - rhs)
            fv = np.atleast_1d(np.asarray(f(t, y, z), dtype=float))
            lhs = float(np.dot(gq, fv))
            rhs = max(float(np.dot(gp, fv)), 0.0)
            worst[2] = max(worst[2], lhs - rhs)
    return CompatibilityReport(
        ok=max(worst) <= tolerance,
        worst_i=worst[0],
        worst_ii=worst[1],
        worst_iii=worst[2],
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# built-in catalog
# ---------------------------------------------------------------------------

def _zero() -> ConvexFunction:
    return ConvexFunction(
        evaluate=lambda x: np.zeros(x.shape[:-1]),
        prox_oracle=lambda eps, x: x.copy(),
        domain_hint=(-10.0, 10.0),
        label="zero",
    )


def _quadratic(a: float = 1.0) -> ConvexFunction:
    if a < 0:
        raise ValueError("quadratic coefficient must be >= 0")

    def ev(x):
        return 0.5 * a * np.sum(x * x, axis=-1)

    def px(eps, x):
        return x / (1.0 + np.asarray(eps)[..., None] * a) if np.ndim(eps) else x / (1.0 + eps * a)

    return ConvexFunction(ev, px, (-10.0, 10.0), f"quadratic({a})")


def _abs() -> ConvexFunction:
    def ev(x):
        return np.sum(np.abs(x), axis=-1)

    def px(eps, x):
        e = np.asarray(eps)[..., None] if np.ndim(eps) else eps
        return np.sign(x) * np.maximum(np.abs(x) - e, 0.0)

    return ConvexFunction(ev, px, (-10.0, 10.0), "abs")


def _indicator_box(lo, hi) -> ConvexFunction:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > 0.0) or np.any(hi < 0.0):
        raise ValueError("indicator box must contain 0 (normalization theta(0)=0)")

    def ev(x):
        inside = np.all((x >= lo) & (x <= hi), axis=-1)
        return np.where(inside, 0.0, np.inf)

    def px(eps, x):
        return np.clip(x, lo, hi)

    glo = np.where(np.isfinite(lo), lo, -10.0) - 1.0
    ghi = np.where(np.isfinite(hi), hi, 10.0) + 1.0
    return ConvexFunction(ev, px, (glo, ghi), f"indicator_box({lo},{hi})")


def _hinge_sq() -> ConvexFunction:
    def ev(x):
        return np.sum(np.maximum(x, 0.0) ** 2, axis=-1)

    def px(eps, x):
        e = np.asarray(eps)[..., None] if np.ndim(eps) else eps
        return np.where(x > 0.0, x / (1.0 + 2.0 * e), x)

    return ConvexFunction(ev, px, (-10.0, 10.0), "hinge_sq")


CATALOG = {
    "zero": _zero,
    "quadratic": _quadratic,
    "abs": _abs,
    "indicator_box": _indicator_box,
    "hinge_sq": _hinge_sq,
}

_NAME_RE = re.compile(r"^\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*(?:\(([^)]*)\))?\s*$")


def make_convex(name: str) -> ConvexFunction:
    """Build a catalog function from a config string.

    Examples: "zero", "abs", "quadratic(2.0)", "indicator_box(-inf,0.5)".
    """
    m = _NAME_RE.match(name)
    if m is None or m.group(1) not in CATALOG:
        raise KeyError(f"unknown convex function {name!r}")
    fn = CATALOG[m.group(1)]
    args = []
    if m.group(2):
        args = [float(a) for a in m.group(2).split(",")]
    return fn(*args)
