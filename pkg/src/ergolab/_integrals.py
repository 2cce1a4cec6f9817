"""Quadrature over MH proposal components with kink splitting.

A proposal from ``x`` is broken into components, each a density on a finite
parameter interval ``[lo, hi]`` mapped to landing points ``y = to_y(t)``.
Gaussian components are truncated at eight standard deviations; the
neglected mass (< 1.3e-15) is treated as rejected.
"""

import math
from dataclasses import dataclass

import numpy as np

from .kernels import (CounterexampleProposal, GwmKernel, RwmProposal,
                      counterexample_weight, mh_log_acceptance)
from .numerics import integrate, integrate_log, sign_changes
from .errors import UsageError

Z_CUT = 8.0
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class Component:
    lo: float
    hi: float
    #: log proposal density in the integration variable (weight included)
    log_q: object
    to_y: object
    #: extra non-smooth points in the integration variable
    points: tuple = ()


def _identity(t):
    return t


def components(kernel, x, p=None, side=None):
    """Proposal components of ``kernel`` from ``x`` (momentum ``p`` if lifted).

    ``side`` restricts a random-walk proposal to ``'up'`` (``y >= x``) or
    ``'down'`` (``y <= x``).
    """
    if isinstance(kernel, RwmProposal):
        eps = kernel.eps
        lo, hi = x - Z_CUT * eps, x + Z_CUT * eps
        if side == "up":
            lo = x
        elif side == "down":
            hi = x

        def log_q(y):
            return -0.5 * ((y - x) / eps) ** 2 - _LOG_SQRT_2PI - math.log(eps)

        return [Component(lo, hi, log_q, _identity)]

    if isinstance(kernel, GwmKernel):
        if p not in (-1, 1):
            raise UsageError("guided walk components need p in {-1, +1}")
        eps = kernel.eps
        lo, hi = (x, x + Z_CUT * eps) if p > 0 else (x - Z_CUT * eps, x)

        def log_q(y):
            return math.log(2.0) - 0.5 * ((y - x) / eps) ** 2 - _LOG_SQRT_2PI - math.log(eps)

        return [Component(lo, hi, log_q, _identity)]

    if isinstance(kernel, CounterexampleProposal):
        w = float(counterexample_weight(x))
        m = 0.5 * x
        log_w_normal = math.log1p(-w)

        def log_q_normal(y):
            return log_w_normal - 0.5 * (y - m) ** 2 - _LOG_SQRT_2PI

        # landing points whose own jump interval contains x: alpha jumps there
        pts = []
        if x > 1.0:
            for s in (math.sqrt(max(math.log(x - 1.0), 0.0)), math.sqrt(math.log(x))):
                pts.extend((s, -s))
        comps = [Component(m - Z_CUT, m + Z_CUT, log_q_normal, _identity, tuple(pts))]
        x2 = x * x
        if x2 < 709.0:
            base = math.exp(x2)
            log_w = math.log(w)
            comps.append(Component(0.0, 1.0, lambda u: np.full_like(u, log_w),
                                   lambda u, base=base: base + u))
        # beyond double range every jump is rejected: contributes nothing accepted
        return comps

    raise UsageError(f"unsupported kernel {kernel!r}")


def log_alpha_fn(kernel, target, x):
    """Vectorized ``y -> log alpha(x, y)``."""
    if isinstance(kernel, (RwmProposal, GwmKernel)):
        lx = target.logpdf_scalar(x)
        return lambda y: np.minimum(0.0, target._logpdf(y) - lx)
    return lambda y: mh_log_acceptance(target, kernel, x, y)


def _log_r_fn(kernel, target, x):
    if isinstance(kernel, (RwmProposal, GwmKernel)):
        lx = target.logpdf_scalar(x)
        return lambda y: target._logpdf(y) - lx
    prop = kernel

    def log_r(y):
        y = np.asarray(y, dtype=float)
        num = target._logpdf(y) + np.asarray(prop.log_q(y, x))
        den = target.logpdf_scalar(x) + np.asarray(prop.log_q(x, y))
        with np.errstate(invalid="ignore"):
            return np.where(np.isfinite(num), num - den, -np.inf)

    return log_r


def split_points(comp, kernel, target, x, extra_y=()):
    """Panel edges for ``comp``: acceptance boundaries, target kinks, extras."""
    log_r = _log_r_fn(kernel, target, x)
    pts = list(comp.points)
    if comp.to_y is _identity:
        ys = list(target.breakpoints) + list(extra_y)
        pts.extend(y for y in ys if comp.lo < y < comp.hi)
        pts.extend(sign_changes(log_r, comp.lo, comp.hi))
    else:
        pts.extend(sign_changes(lambda t: log_r(comp.to_y(t)), comp.lo, comp.hi))
    return sorted(set(pts))


def log_integral(kernel, target, x, log_h, p=None, side=None, tol=1e-10,
                 extra_y=(), comps=None):
    """``log int exp(log_h(y)) Q(x, dy)`` in log space, summed over components.

    ``log_h`` receives landing points ``y`` (vectorized). Returns ``-inf``
    when the integrand vanishes.
    """
    if comps is None:
        comps = components(kernel, x, p, side)
    logs = []
    for comp in comps:
        if not comp.lo < comp.hi:
            continue
        pts = split_points(comp, kernel, target, x, extra_y)

        def g(t, comp=comp):
            y = comp.to_y(t)
            return log_h(y) + comp.log_q(t)

        logs.append(integrate_log(g, comp.lo, comp.hi, rtol=tol, points=pts))
    if not logs:
        return -np.inf
    return float(np.logaddexp.reduce(logs))


def linear_integral(kernel, target, x, h, p=None, side=None, tol=1e-10, extra_y=()):
    """``int h(y) Q(x, dy)`` in linear space (``h`` vectorized, may change sign)."""
    total = 0.0
    for comp in components(kernel, x, p, side):
        if not comp.lo < comp.hi:
            continue
        pts = split_points(comp, kernel, target, x, extra_y)

        def f(t, comp=comp):
            return h(comp.to_y(t)) * np.exp(comp.log_q(t))

        total += integrate(f, comp.lo, comp.hi, tol=tol, points=pts)
    return total


def acceptance(kernel, target, x, p=None, side=None, tol=1e-10):
    """``int alpha(x, y) Q(x, dy)``, optionally over one side of ``x``."""
    la = log_alpha_fn(kernel, target, x)
    val = log_integral(kernel, target, x, la, p=p, side=side, tol=tol)
    return math.exp(val) if val > -np.inf else 0.0


def restricted_components(kernel, x, p, lo_y, hi_y, outside=True):
    """Components clipped to landing points outside (or inside) ``[lo_y, hi_y]``.

    Only identity-mapped components are clipped exactly; mapped components
    (the far jump) are kept whole when they lie entirely outside.
    """
    out = []
    for comp in components(kernel, x, p):
        if comp.to_y is _identity:
            if outside:
                if comp.lo < lo_y:
                    out.append(Component(comp.lo, min(comp.hi, lo_y), comp.log_q, comp.to_y, comp.points))
                if comp.hi > hi_y:
                    out.append(Component(max(comp.lo, hi_y), comp.hi, comp.log_q, comp.to_y, comp.points))
            else:
                lo, hi = max(comp.lo, lo_y), min(comp.hi, hi_y)
                if lo < hi:
                    out.append(Component(lo, hi, comp.log_q, comp.to_y, comp.points))
        else:
            y_lo, y_hi = comp.to_y(comp.lo), comp.to_y(comp.hi)
            fully_out = y_lo >= hi_y or y_hi <= lo_y
            if fully_out == outside:
                out.append(comp)
            elif not fully_out and outside:
                # jump interval straddles the grid edge
                t0 = max(comp.lo, hi_y - (y_lo - comp.lo))
                if t0 < comp.hi:
                    out.append(Component(t0, comp.hi, comp.log_q, comp.to_y, comp.points))
    return [c for c in out if c.lo < c.hi]
