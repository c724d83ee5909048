"""Pathwise flow of the backward noise coefficient and coefficient transforms.

The scalar flow eta(t, x, y) solves, in the Stratonovich sense and backward
in time (y is the value at the terminal end),

    eta(t, x, y) = y + int_t^T h(s, x, eta(s, x, y)) o dB_s,

with x frozen.  Under bounded smooth h the map y -> eta is an increasing
diffeomorphism; its derivative is integrated alongside by differentiating the
discrete Heun update exactly, and the y-inverse is obtained by Newton on the
forward flow rather than by integrating the inverse-flow equation (the
round-trip identity certifies it).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .convex import ConvexFunction, yosida_gradient
from .reflected import DomainSpec

__all__ = [
    "FlowSpec",
    "FlowSample",
    "flow",
    "flow_inverse",
    "transform_coefficients",
    "transform_penalized",
]


@dataclass(frozen=True)
class FlowSpec:
    """Scalar noise coefficient h(t, x, u) with an optional derivative oracle
    d_u h; the derivative falls back to central differences."""

    h: Callable
    d_u: Optional[Callable] = None
    fd_step: float = 1e-6

    def du(self, t, x, u):
        if self.d_u is not None:
            return self.d_u(t, x, u)
        e = self.fd_step
        return (self.h(t, x, u + e) - self.h(t, x, u - e)) / (2.0 * e)


@dataclass(frozen=True)
class FlowSample:
    eta: np.ndarray
    d_y_eta: np.ndarray


def flow(spec: FlowSpec, x, y, times: np.ndarray, B: np.ndarray) -> FlowSample:
    """Heun integration of the flow from the terminal node down to times[0].

    times: node times covering [t, T]; B: backward-Brownian values at those
    nodes (both one-dimensional).  y may be a scalar or an array (batched).
    The y-derivative is propagated by the exact derivative of the discrete
    update, so it is the Jacobian of the computed map, positive for any
    step size when h is smooth enough.
    """
    times = np.asarray(times, dtype=float)
    B = np.asarray(B, dtype=float)
    if times.size != B.size or times.size < 2:
        raise ValueError("times and B must align with at least two nodes")
    eta = np.asarray(y, dtype=float) + 0.0
    dy = np.ones_like(eta)
    for j in range(times.size - 2, -1, -1):
        db = B[j + 1] - B[j]
        t1 = times[j + 1]
        t0 = times[j]
        h1 = spec.h(t1, x, eta)
        d1 = spec.du(t1, x, eta)
        pred = eta + h1 * db
        h2 = spec.h(t0, x, pred)
        d2 = spec.du(t0, x, pred)
        eta = eta + 0.5 * (h1 + h2) * db
        dy = dy * (1.0 + 0.5 * (d1 + d2 * (1.0 + d1 * db)) * db)
    if np.any(dy <= 0.0):
        raise RuntimeError("flow derivative lost positivity; refine the integration grid")
    return FlowSample(eta=eta, d_y_eta=dy)


def flow_inverse(spec: FlowSpec, x, target, times, B, tol: float = 1e-11, max_iter: int = 100):
    """Solve eta(t, x, y) = target for y by Newton on the monotone flow."""
    target = np.asarray(target, dtype=float)
    y = target + 0.0
    for _ in range(max_iter):
        s = flow(spec, x, y, times, B)
        resid = s.eta - target
        if np.max(np.abs(resid)) <= tol:
            return y
        y = y - resid / s.d_y_eta
    s = flow(spec, x, y, times, B)
    if np.max(np.abs(s.eta - target)) <= 1e-10:
        return y
    raise RuntimeError("flow inversion did not converge")


def _flow_derivatives(spec: FlowSpec, x, y, times, B, fd_step: float):
    """Flow value plus first/second derivatives in x and y at one point.

    Spatial derivatives come from central differences of the flow on the same
    noise path; the pure y-derivative comes from the variational recursion.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.size
    h = fd_step
    base = flow(spec, x, y, times, B)

    eta_xp = np.empty(d)
    eta_xm = np.empty(d)
    dy_xp = np.empty(d)
    dy_xm = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        sp = flow(spec, x + e, y, times, B)
        sm = flow(spec, x - e, y, times, B)
        eta_xp[i], dy_xp[i] = float(sp.eta), float(sp.d_y_eta)
        eta_xm[i], dy_xm[i] = float(sm.eta), float(sm.d_y_eta)
    d_x = (eta_xp - eta_xm) / (2.0 * h)
    d_xy = (dy_xp - dy_xm) / (2.0 * h)

    d_xx = np.empty((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        d_xx[i, i] = (eta_xp[i] - 2.0 * float(base.eta) + eta_xm[i]) / (h * h)
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            spp = flow(spec, x + ei + ej, y, times, B).eta
            spm = flow(spec, x + ei - ej, y, times, B).eta
            smp = flow(spec, x - ei + ej, y, times, B).eta
            smm = flow(spec, x - ei - ej, y, times, B).eta
            d_xx[i, j] = d_xx[j, i] = float(spp - spm - smp + smm) / (4.0 * h * h)

    syp = flow(spec, x, y + h, times, B)
    sym = flow(spec, x, y - h, times, B)
    d_yy = (float(syp.d_y_eta) - float(sym.d_y_eta)) / (2.0 * h)
    return base, d_x, d_xx, d_xy, d_yy


def transform_coefficients(
    spec: FlowSpec,
    f: Callable,
    g: Callable,
    domain: DomainSpec,
    sigma,
    b,
    point,
    times,
    B,
    fd_step: float = 1e-4,
) -> tuple[float, float]:
    """Transformed drift and boundary coefficients at point = (t, x, y, z).

    With eta = eta(t,x,y), Dy = d eta/dy > 0, and L_x the generator acting on
    the frozen-y flow:

      f~ = (1/Dy) [ f(t, x, eta, sigma^T Dx_eta + Dy z)
                    - 0.5 (h d_u h)(t, x, eta) + L_x eta
                    + <sigma^T Dxy_eta, z> + 0.5 Dyy_eta |z|^2 ]
      g~ = (1/Dy) ( g(t, x, eta) - <grad level(x), Dx_eta> )
    """
    t, x, y, z = point
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    d = x.size
    sig = sigma(x) if callable(sigma) else np.asarray(sigma, dtype=float)
    if np.ndim(sig) == 0:
        sig = float(sig) * np.eye(d)
    bv = b(x) if callable(b) else np.broadcast_to(np.asarray(b, dtype=float), (d,))

    base, d_x, d_xx, d_xy, d_yy = _flow_derivatives(spec, x, y, times, B, fd_step)
    eta = float(base.eta)
    dy = float(base.d_y_eta)
    if dy <= 1e-12:
        raise RuntimeError("degenerate flow derivative")

    l_x = 0.5 * float(np.trace(sig @ sig.T @ d_xx)) + float(np.dot(bv, d_x))
    hu = spec.h(t, x, eta) * spec.du(t, x, eta)
    z_arg = sig.T @ d_x + dy * z
    f_tilde = (f(t, x, eta, z_arg) - 0.5 * hu + l_x
               + float(np.dot(sig.T @ d_xy, z)) + 0.5 * d_yy * float(np.dot(z, z))) / dy
    g_tilde = (g(t, x, eta) - float(np.dot(domain.gradient(x), d_x))) / dy
    return float(f_tilde), float(g_tilde)


def transform_penalized(
    spec: FlowSpec,
    f: Callable,
    g: Callable,
    phi: ConvexFunction,
    psi: ConvexFunction,
    delta: float,
    domain: DomainSpec,
    sigma,
    b,
    point,
    times,
    B,
    fd_step: float = 1e-4,
) -> tuple[float, float]:
    """Penalized transforms: subtract the Yosida gradients at eta, scaled by
    the flow derivative."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    t, x, y, z = point
    f_tilde, g_tilde = transform_coefficients(spec, f, g, domain, sigma, b, point, times, B, fd_step)
    s = flow(spec, np.atleast_1d(np.asarray(x, dtype=float)), y, times, B)
    eta = np.atleast_1d(np.asarray(s.eta, dtype=float))
    dy = float(s.d_y_eta)
    gp = float(yosida_gradient(phi, delta, eta)[0])
    gq = float(yosida_gradient(psi, delta, eta)[0])
    return f_tilde - gp / dy, g_tilde - gq / dy
