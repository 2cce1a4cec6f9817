"""Shared numerical primitives: adaptive quadrature, log-domain sums,
power-law regression and reproducible random streams."""

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import NumericFailure, UsageError

__all__ = [
    "RateFit",
    "RngStream",
    "rng_stream",
    "integrate",
    "integrate_log",
    "log_sum_exp",
    "fit_power_law",
    "sign_changes",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)

DEFAULT_TOL = 1e-10
MAX_PANELS = 20000


def _gl_panel(f, a, b):
    half = 0.5 * (b - a)
    y = np.asarray(f(a + half * (_GL_NODES + 1.0)), dtype=float)
    return half * float(np.dot(_GL_WEIGHTS, y))


def _initial_panels(a, b, points):
    edges = [a, b]
    if points is not None:
        edges.extend(p for p in points if a < p < b)
    return sorted(set(edges))


def integrate(f, a, b, tol=DEFAULT_TOL, points=None, full_output=False):
    """Integrate ``f`` over ``[a, b]`` with adaptive 15-point Gauss-Legendre.

    Panels are bisected, largest error first, until the summed error
    estimate drops below ``tol``. Each panel's error is the difference
    between its own rule and the rule applied to its two halves.

    Parameters
    ----------
    f : callable
        Vectorized integrand, ``f(ndarray) -> ndarray``.
    a, b : float
        Finite limits with ``a < b``.
    tol : float
        Absolute error target.
    points : iterable of float, optional
        Known non-smooth points; used as initial panel edges.
    full_output : bool
        If true return ``(value, error_estimate)``.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise UsageError(f"integrate needs finite a < b, got [{a}, {b}]")
    if not tol > 0:
        raise UsageError("tol must be positive")

    edges = _initial_panels(a, b, points)
    heap = [_scored_panel(f, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]
    heapq.heapify(heap)
    total_err = sum(-item[0] for item in heap)
    n_panels = len(heap)

    while total_err > tol:
        if n_panels >= MAX_PANELS:
            value = math.fsum(item[3] for item in heap)
            raise NumericFailure(
                f"quadrature did not reach tol={tol:g} (error {total_err:.3g})",
                best_estimate=value,
                error=total_err,
            )
        neg_err, lo, hi, _, halves = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # panel can no longer be split in double precision
            value = math.fsum(item[3] for item in heap) + sum(halves)
            raise NumericFailure("quadrature panel collapsed", best_estimate=value,
                                 error=total_err)
        left = _scored_panel(f, lo, mid, coarse=halves[0])
        right = _scored_panel(f, mid, hi, coarse=halves[1])
        heapq.heappush(heap, left)
        heapq.heappush(heap, right)
        n_panels += 1
        total_err = total_err + neg_err - left[0] - right[0]
        if total_err < 0:
            total_err = sum(-item[0] for item in heap)

    value = math.fsum(item[3] for item in heap)
    if not np.isfinite(value):
        raise NumericFailure("integrand produced non-finite values", best_estimate=value)
    if full_output:
        return value, max(total_err, 0.0)
    return value


def _scored_panel(f, lo, hi, coarse=None):
    if coarse is None:
        coarse = _gl_panel(f, lo, hi)
    mid = 0.5 * (lo + hi)
    halves = (_gl_panel(f, lo, mid), _gl_panel(f, mid, hi))
    fine = halves[0] + halves[1]
    err = abs(fine - coarse)
    if not np.isfinite(err):
        raise NumericFailure("integrand produced non-finite values",
                             best_estimate=float("nan"), interval=(lo, hi))
    # heap entries: (-error, lo, hi, value, halves)
    return (-err, lo, hi, fine, halves)


def _log_gl_panel(logf, a, b):
    half = 0.5 * (b - a)
    g = np.asarray(logf(a + half * (_GL_NODES + 1.0)), dtype=float)
    if np.any(np.isnan(g)) or np.any(g == np.inf):
        raise NumericFailure("log-integrand produced nan/+inf", best_estimate=float("nan"),
                             interval=(a, b))
    m = g.max()
    if m == -np.inf:
        return -np.inf
    s = float(np.dot(_GL_WEIGHTS, np.exp(g - m)))
    if s <= 0.0:
        return -np.inf
    return m + math.log(s) + math.log(half)


def _log_abs_diff(u, v):
    hi, lo = max(u, v), min(u, v)
    if hi == -np.inf:
        return -np.inf
    if lo == -np.inf:
        return hi
    d = hi - lo
    if d == 0.0:
        return -np.inf
    return hi + math.log(-math.expm1(-d))


def integrate_log(logf, a, b, rtol=DEFAULT_TOL, points=None, full_output=False):
    """Log of ``int_a^b exp(logf(y)) dy`` for integrands spanning many e-folds.

    Same panel scheme as :func:`integrate`, but each panel is evaluated as
    ``max + log(sum w exp(g - max))`` and panels are combined with
    :func:`log_sum_exp`, so values like ``exp(1e7)`` never appear in linear
    space. ``rtol`` bounds the relative error of the integral.

    Returns ``-inf`` when the integrand vanishes on the whole interval.
    """
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise UsageError(f"integrate_log needs finite a < b, got [{a}, {b}]")
    if not rtol > 0:
        raise UsageError("rtol must be positive")

    def score(lo, hi, coarse=None):
        if coarse is None:
            coarse = _log_gl_panel(logf, lo, hi)
        mid = 0.5 * (lo + hi)
        halves = (_log_gl_panel(logf, lo, mid), _log_gl_panel(logf, mid, hi))
        fine = np.logaddexp(*halves)
        lerr = _log_abs_diff(fine, coarse)
        return (-lerr, lo, hi, fine, halves)

    edges = _initial_panels(a, b, points)
    heap = [score(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])]
    heapq.heapify(heap)
    n_panels = len(heap)
    log_tol = math.log(rtol)

    while True:
        total = log_sum_exp([item[3] for item in heap])
        log_err = log_sum_exp([-item[0] for item in heap])
        if total == -np.inf or log_err - total <= log_tol:
            break
        if n_panels >= MAX_PANELS:
            raise NumericFailure(
                f"log-domain quadrature did not reach rtol={rtol:g}",
                best_estimate=total,
                log_relative_error=log_err - total,
            )
        _, lo, hi, _, halves = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise NumericFailure("quadrature panel collapsed", best_estimate=total)
        heapq.heappush(heap, score(lo, mid, halves[0]))
        heapq.heappush(heap, score(mid, hi, halves[1]))
        n_panels += 1

    if full_output:
        rel = math.exp(log_err - total) if total > -np.inf else 0.0
        return total, rel
    return total


def log_sum_exp(values):
    """Overflow-safe ``log(sum(exp(values)))``.

    Entries may be ``-inf`` (zero weight). An empty input is an error.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise UsageError("log_sum_exp of an empty sequence")
    if np.any(np.isnan(v)) or np.any(v == np.inf):
        raise UsageError("log_sum_exp entries must lie in [-inf, inf)")
    m = v.max()
    if m == -np.inf:
        return -np.inf
    return float(m + math.log(np.sum(np.exp(v - m))))


def sign_changes(g, a, b, n=256, xtol=1e-12):
    """Locate the points in ``(a, b)`` where ``g`` changes sign.

    ``g`` is sampled on an ``n``-point grid and each bracketed sign change is
    refined by Brent's method to ``xtol``. ``g`` may return ``-inf``; it must
    be vectorized. Used to find acceptance boundaries ``log r(x, y) = 0``.
    """
    xs = np.linspace(a, b, n)
    gs = np.asarray(g(xs), dtype=float)
    if np.any(np.isnan(gs)):
        raise NumericFailure("sign_changes: function returned nan", best_estimate=None)
    s = np.sign(gs)
    roots = [xs[k] for k in range(1, n - 1) if s[k] == 0 and s[k - 1] * s[k + 1] < 0]
    for k in np.nonzero(s[:-1] * s[1:] < 0)[0]:
        lo, hi = xs[k], xs[k + 1]
        if np.isfinite(gs[k]) and np.isfinite(gs[k + 1]):
            roots.append(brentq(lambda t: float(g(np.array([t]))[0]), lo, hi, xtol=xtol))
        else:
            # bisect on sign only; brentq needs finite values
            glo = s[k]
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if hi - lo <= xtol:
                    break
                if np.sign(float(g(np.array([mid]))[0])) == glo:
                    lo = mid
                else:
                    hi = mid
            roots.append(0.5 * (lo + hi))
    return sorted(roots)


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ``log y = intercept + slope * log x``.

    Attributes
    ----------
    slope : float
    intercept : float
    r_squared : float
        Coefficient of determination, clipped to ``[0, 1]``.
    window : tuple of float
        Abscissa range ``(lo, hi)`` used for the fit.
    n_points : int
    """

    slope: float
    intercept: float
    r_squared: float
    window: tuple
    n_points: int = 0

    def as_dict(self):
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "n_points": self.n_points,
        }


def fit_power_law(xs, ys, window):
    """Fit a power law to ``(xs, ys)`` restricted to ``window = (lo, hi)``.

    Ordinary least squares of ``log ys`` on ``log xs``; at least five points
    must fall inside the window.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    lo, hi = window
    if not 0 < lo < hi:
        raise UsageError(f"window must satisfy 0 < lo < hi, got {window}")
    if xs.shape != ys.shape:
        raise UsageError("xs and ys must have the same shape")
    mask = (xs >= lo) & (xs <= hi)
    if mask.sum() < 5:
        raise UsageError(f"need >= 5 points inside window {window}, got {int(mask.sum())}")
    x, y = xs[mask], ys[mask]
    if np.any(x <= 0) or np.any(y <= 0):
        raise UsageError("fit_power_law needs strictly positive data")
    lx, ly = np.log(x), np.log(y)
    lx_c = lx - lx.mean()
    ly_c = ly - ly.mean()
    sxx = float(np.dot(lx_c, lx_c))
    if sxx == 0.0:
        raise UsageError("all in-window abscissae coincide")
    slope = float(np.dot(lx_c, ly_c)) / sxx
    intercept = float(ly.mean() - slope * lx.mean())
    ss_res = float(np.sum((ly_c - slope * lx_c) ** 2))
    ss_tot = float(np.dot(ly_c, ly_c))
    r2 = 1.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return RateFit(slope, intercept, min(max(r2, 0.0), 1.0), (float(lo), float(hi)), int(mask.sum()))


@dataclass
class RngStream:
    """Counter-based random stream identified by ``(seed, stream_id)``.

    Backed by Philox keyed on the pair, so distinct pairs give independent
    streams and the same pair reproduces its sequence exactly.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = int(getattr(self, name))
            if not 0 <= v < 2**64:
                raise UsageError(f"{name} must be an unsigned 64-bit integer")
            setattr(self, name, v)
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def draw_normal(self, size=None):
        return self.generator.standard_normal(size)

    def draw_uniform(self, size=None):
        return self.generator.random(size)

    def spawn(self, stream_id):
        """A fresh stream sharing this seed; use one per replicate or block."""
        return RngStream(self.seed, stream_id)


def rng_stream(seed, stream_id=0):
    return RngStream(seed, stream_id)
