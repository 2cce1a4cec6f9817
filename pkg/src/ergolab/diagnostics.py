"""Numerical probes of ergodicity properties.

Quadrature probes (drift ratios, acceptance integrals, the guided-walk
polynomial drift certificate) are deterministic and evaluated in log space
with acceptance-boundary splitting. Monte Carlo probes (coupling, hitting
times, displacement, reachability) are vectorized over trials and split
into fixed-size blocks, each with its own random stream, so results do
not depend on the number of worker threads.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _integrals
from .errors import CheckFailed, UsageError
from .kernels import (CounterexampleProposal, GwmKernel, RwmProposal,
                      _counterexample_candidate, gwm_transition, mh_log_acceptance,
                      rwm_transition)
from .numerics import RngStream, fit_power_law, log_sum_exp
from .operator import geometric_schedule
from .targets import ConvexPotentialTarget, PolyTailTarget

__all__ = [
    "LyapunovSpec",
    "DriftReport",
    "drift_ratio",
    "log_drift_components",
    "theorem3_D",
    "gwm_polynomial_drift_check",
    "one_sided_acceptance",
    "total_acceptance",
    "acceptance_components",
    "coupled_rwm_lazy_gwm",
    "displacement_exponent",
    "hitting_time_ratio",
    "lemma_a2_audit",
]

BLOCK = 10_000


# ---------------------------------------------------------------------------
# Lyapunov functions

@dataclass(frozen=True)
class LyapunovSpec:
    """Lyapunov function family.

    ``kind`` is one of

    * ``"exp_quadratic"``: ``V(x) = exp(c x^2)``;
    * ``"guided_poly"``: ``V(x, p) = exp(delta sgn(x) p) pi(x)^(-beta)`` for a
      polynomial-tailed target, needing ``1/(r+1) < beta < 1`` and
      ``exp(-2 delta) < 1 - beta``;
    * ``"constant"``: ``V = value >= 1``.
    """

    kind: str
    c: float = None
    delta: float = None
    beta: float = None
    value: float = 1.0

    def __post_init__(self):
        if self.kind == "exp_quadratic":
            if self.c is None or not self.c > 0:
                raise UsageError("exp_quadratic needs c > 0")
        elif self.kind == "guided_poly":
            if self.delta is None or self.beta is None or not self.delta > 0:
                raise UsageError("guided_poly needs delta > 0 and beta")
            if not 0 < self.beta < 1:
                raise UsageError("guided_poly needs 0 < beta < 1")
            if not math.exp(-2.0 * self.delta) < 1.0 - self.beta:
                raise UsageError(
                    f"guided_poly needs exp(-2 delta) < 1 - beta; got delta={self.delta}, beta={self.beta}")
        elif self.kind == "constant":
            if not self.value >= 1.0:
                raise UsageError("constant Lyapunov function must be >= 1")
        else:
            raise UsageError(f"unknown Lyapunov kind {self.kind!r}")

    def check_target(self, target):
        if self.kind == "guided_poly":
            if not isinstance(target, PolyTailTarget):
                raise UsageError("guided_poly is defined for polynomial-tailed targets")
            if not 1.0 / (target.r + 1.0) < self.beta:
                raise UsageError(f"guided_poly needs beta > 1/(r+1) = {1 / (target.r + 1):.4g}")

    def log_v(self, target, y, p=None):
        """Vectorized ``log V(y, p)``."""
        y = np.asarray(y, dtype=float)
        if self.kind == "exp_quadratic":
            return self.c * np.square(y)
        if self.kind == "constant":
            return np.full(y.shape, math.log(self.value)) if y.ndim else math.log(self.value)
        if p is None:
            raise UsageError("guided_poly needs a momentum")
        log_pi = target._logpdf(y) - target.log_norm_const()
        return self.delta * np.sign(y) * p - self.beta * log_pi

    @property
    def breakpoints(self):
        return (0.0,) if self.kind == "guided_poly" else ()

    def alpha_star(self, r):
        """Drift exponent ``((r+1) beta - 1) / ((r+1) beta)``."""
        rb = (r + 1.0) * self.beta
        return (rb - 1.0) / rb


def _check_v_at_x(V, target, x, p):
    lv = float(V.log_v(target, x, p))
    if lv < -1e-12:
        raise UsageError(f"Lyapunov function is below 1 at x={x} (log V = {lv:.4g})")
    return lv


def _as_mh_kernel(kernel):
    if isinstance(kernel, (RwmProposal, GwmKernel, CounterexampleProposal)):
        return kernel
    raise UsageError(f"unsupported kernel {kernel!r}")


# ---------------------------------------------------------------------------
# drift ratios

def log_drift_components(kernel, target, V, x, p=None, metropolized=False, tol=1e-10):
    """Per-component ``log int V(y)/V(x) [alpha(x, y)] Q_k(x, dy)``.

    Returns a dict keyed by component (``"walk"`` for single-component
    kernels, ``"normal"`` and ``"jump"`` for the mixture). With
    ``metropolized=False`` the raw proposal is integrated, which is how the
    mixture's jump term can reach ``exp(1e7)`` and beyond.
    """
    kernel = _as_mh_kernel(kernel)
    V.check_target(target)
    lvx = float(V.log_v(target, x, p))
    la = _integrals.log_alpha_fn(kernel, target, x)
    names = ["normal", "jump"] if isinstance(kernel, CounterexampleProposal) else ["walk"]
    out = {}
    comps = _integrals.components(kernel, x, p)
    for name, comp in zip(names, comps):
        if metropolized:
            def log_h(y):
                return V.log_v(target, y, p) - lvx + la(y)
        else:
            def log_h(y):
                return V.log_v(target, y, p) - lvx
        out[name] = _integrals.log_integral(kernel, target, x, log_h, p=p, tol=tol,
                                            extra_y=V.breakpoints, comps=[comp])
    for name in names[len(comps):]:
        # jump landing beyond double range: accepted contribution is zero, raw
        # contribution diverges
        out[name] = -np.inf if metropolized else np.inf
    return out


def drift_ratio(kernel, target, V, x, p=None, metropolized=True, tol=1e-10, log=False):
    """``PV(x) / V(x)`` by log-space quadrature.

    For an MH kernel ``PV/V = int V(y)/V(x) alpha Q(x, dy) + (1 - int alpha Q)``.
    For the guided walk the rejection term is weighted by ``V(x, -p)/V(x, p)``
    and a lazy hold contributes ``lazy`` directly. ``metropolized=False``
    evaluates ``QV/V`` for the bare proposal. With ``log=True`` the log of the
    ratio is returned (useful when it overflows).
    """
    kernel = _as_mh_kernel(kernel)
    V.check_target(target)
    lvx = _check_v_at_x(V, target, x, p)
    terms = log_drift_components(kernel, target, V, x, p, metropolized, tol)
    log_moved = log_sum_exp(list(terms.values()))
    if not metropolized:
        return log_moved if log else _exp(log_moved)
    acc = _integrals.acceptance(kernel, target, x, p=p, tol=tol)
    reject = max(0.0, 1.0 - acc)
    if isinstance(kernel, GwmKernel):
        log_flip = float(V.log_v(target, x, -p)) - lvx
        parts = [math.log(kernel.lazy) if kernel.lazy > 0 else -np.inf]
        log_move = math.log1p(-kernel.lazy) if kernel.lazy < 1 else -np.inf
        parts.append(log_move + log_moved)
        parts.append(log_move + log_flip + (math.log(reject) if reject > 0 else -np.inf))
        val = log_sum_exp(parts)
    else:
        val = log_sum_exp([log_moved, math.log(reject) if reject > 0 else -np.inf])
    return val if log else _exp(val)


def _exp(v):
    return math.exp(v) if v < 709.0 else float("inf")


def theorem3_D(kernel, target, V, x, p=None, tol=1e-10):
    """``D(x) = int V(y)/V(x) (alpha(x, y) - 1) Q(x, dy)`` (always <= 0)."""
    kernel = _as_mh_kernel(kernel)
    V.check_target(target)
    lvx = _check_v_at_x(V, target, x, p)
    la = _integrals.log_alpha_fn(kernel, target, x)

    def log_h(y):
        a = np.asarray(la(y), dtype=float)
        with np.errstate(divide="ignore"):
            log_reject = np.where(a < 0, np.log(-np.expm1(np.minimum(a, 0.0))), -np.inf)
        return V.log_v(target, y, p) - lvx + log_reject

    comps = _integrals.components(kernel, x, p)
    val = _integrals.log_integral(kernel, target, x, log_h, p=p, tol=tol,
                                  extra_y=V.breakpoints, comps=comps)
    if isinstance(kernel, CounterexampleProposal) and x * x >= 709.0:
        # the jump component is rejected outright but cannot be integrated
        return -np.inf
    return -_exp(val) if val > -np.inf else 0.0


@dataclass
class DriftReport:
    """Polynomial drift certificate for the guided walk.

    ``margin = (PV - V) / V^alpha_star`` per grid point and momentum; the
    check passes when every margin is negative, and ``c = -max(margin)``.
    """

    x: np.ndarray
    p: np.ndarray
    log_ratio: np.ndarray
    margin: np.ndarray
    passed: np.ndarray
    alpha_star: float
    c: float
    check_passed: bool
    smallest_negative_x: float
    params: dict = field(default_factory=dict)

    def rows(self):
        return [(float(a), int(b), float(math.exp(c)), float(d))
                for a, b, c, d in zip(self.x, self.p, self.log_ratio, self.margin)]


def _relative_drift_direct(kernel, target, V, x, p, tol):
    """``(PV - V) / V`` for the guided walk, integrated directly in linear space.

    Independent of :func:`drift_ratio`: the integrand is
    ``(V(y,p)/V(x,p) - 1) alpha + (V(x,-p)/V(x,p) - 1)(1 - alpha)`` against
    the half-normal increment density, so no cancellation against 1 occurs
    after integration.
    """
    lvx = float(V.log_v(target, x, p))
    flip = math.expm1(float(V.log_v(target, x, -p)) - lvx)
    la = _integrals.log_alpha_fn(kernel, target, x)

    def h(y):
        a = np.exp(la(y))
        moved = np.expm1(V.log_v(target, y, p) - lvx)
        return moved * a + flip * (1.0 - a)

    val = _integrals.linear_integral(kernel, target, x, h, p=p, tol=tol, extra_y=V.breakpoints)
    return (1.0 - kernel.lazy) * val


def gwm_polynomial_drift_check(target, eps, delta, beta, x_lo, x_hi, grid=46, lazy=0.0,
                               tol=1e-10):
    """Check ``PV - V <= -c V^alpha_star`` for the guided walk on a polynomial tail.

    Uses ``V(x, p) = exp(delta sgn(x) p) pi(x)^(-beta)`` and evaluates the
    normalized margin on ``grid`` points spanning ``[x_lo, x_hi]`` for both
    momenta. A positive margin does not raise; it is reported through
    ``check_passed``.
    """
    if not isinstance(target, PolyTailTarget):
        raise UsageError("the guided-walk polynomial drift check needs a PolyTailTarget")
    V = LyapunovSpec("guided_poly", delta=delta, beta=beta)
    V.check_target(target)
    if not target.K < x_lo < x_hi:
        raise UsageError(f"need K < x_lo < x_hi (K={target.K})")
    kernel = GwmKernel(eps, lazy)
    a_star = V.alpha_star(target.r)
    xs = np.linspace(x_lo, x_hi, int(grid))
    rows_x, rows_p, logs, margins = [], [], [], []
    for x in xs:
        for p in (1, -1):
            rel = _relative_drift_direct(kernel, target, V, x, p, tol)
            lv = float(V.log_v(target, x, p))
            margins.append(rel * math.exp((1.0 - a_star) * lv))
            logs.append(drift_ratio(kernel, target, V, x, p, tol=tol, log=True))
            rows_x.append(x)
            rows_p.append(p)
    margins = np.array(margins)
    passed = margins < 0
    worst_by_x = margins.reshape(-1, 2).max(axis=1)
    negative_from = len(xs)
    for k in range(len(xs) - 1, -1, -1):
        if worst_by_x[k] < 0:
            negative_from = k
        else:
            break
    smallest = float(xs[negative_from]) if negative_from < len(xs) else float("nan")
    return DriftReport(
        x=np.array(rows_x), p=np.array(rows_p), log_ratio=np.array(logs), margin=margins,
        passed=passed, alpha_star=a_star, c=float(-margins.max()),
        check_passed=bool(passed.all()), smallest_negative_x=smallest,
        params={"r": target.r, "K": target.K, "eps": eps, "delta": delta, "beta": beta,
                "lazy": lazy, "x_lo": x_lo, "x_hi": x_hi, "grid": int(grid), "tol": tol},
    )


# ---------------------------------------------------------------------------
# acceptance integrals

def one_sided_acceptance(target, eps, x, side, tol=1e-10):
    """RWM acceptance restricted to proposals on one side of ``x``.

    ``side="away_from_origin"`` integrates ``alpha(x, x + eps z) phi(z)`` over
    ``z`` pointing away from 0; ``"toward_origin"`` over the other half.
    """
    if side not in ("away_from_origin", "toward_origin"):
        raise UsageError("side must be 'away_from_origin' or 'toward_origin'")
    outward = "up" if x >= 0 else "down"
    inward = "down" if outward == "up" else "up"
    half = outward if side == "away_from_origin" else inward
    return _integrals.acceptance(RwmProposal(eps), target, x, side=half, tol=tol)


def acceptance_components(kernel, target, x, p=None, tol=1e-10):
    """Accepted probability per proposal component (see :func:`log_drift_components`)."""
    kernel = _as_mh_kernel(kernel)
    la = _integrals.log_alpha_fn(kernel, target, x)
    comps = _integrals.components(kernel, x, p)
    names = ["normal", "jump"] if isinstance(kernel, CounterexampleProposal) else ["walk"]
    out = {name: 0.0 for name in names}
    for name, comp in zip(names, comps):
        v = _integrals.log_integral(kernel, target, x, la, p=p, tol=tol, comps=[comp])
        out[name] = math.exp(v) if v > -np.inf else 0.0
    return out


def total_acceptance(kernel, target, x, p=None, tol=1e-10):
    """``int alpha(x, y) Q(x, dy)``."""
    return float(sum(acceptance_components(kernel, target, x, p, tol).values()))


# ---------------------------------------------------------------------------
# Monte Carlo probes

def _blocks(total, size=BLOCK):
    out, start = [], 0
    while start < total:
        out.append((start, min(size, total - start)))
        start += size
    return out


def _block_stream(rng, b):
    return RngStream(rng.seed, (rng.stream_id << 32) + b)


def _map_blocks(fn, total, rng, threads=1, size=BLOCK):
    jobs = [(b, m, _block_stream(rng, b)) for b, (_, m) in enumerate(_blocks(total, size))]
    if threads is None or threads <= 1 or len(jobs) == 1:
        return [fn(m, s) for _, m, s in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(job[1], job[2]), jobs))


@dataclass
class CouplingEstimate:
    x0: float
    n: int
    p_decouple: float
    stderr: float
    trials: int

    def row(self):
        return (self.x0, self.n, self.p_decouple, self.stderr)


def coupled_rwm_lazy_gwm(target, x0, n, eps, trials, rng, threads=1):
    """Synchronous coupling of RWM with the 1/2-lazy guided walk.

    Both chains start at ``x0``; the guided walk with momentum
    ``-sgn(x0)``. Each step shares one Gaussian ``Z`` and one uniform ``U``:
    the random walk proposes ``X + eps P Z`` and the lazy guided walk
    ``W + eps P max(Z, 0)`` (staying put, momentum kept, when ``Z <= 0``),
    where ``P`` is the guided walk's current momentum. Returns the fraction
    of trials with ``X_n != W_n``, an upper bound on the TV distance between
    the two laws at step ``n``.
    """
    if not isinstance(target, ConvexPotentialTarget):
        raise UsageError("the coupling probe is defined for convex-potential targets")
    if x0 == 0:
        raise UsageError("x0 must be non-zero")
    if n < 0 or trials < 1:
        raise UsageError("need n >= 0 and trials >= 1")
    p_start = -int(np.sign(x0))
    lazy_half = GwmKernel(eps, 0.5)

    def block(m, stream):
        x = np.full(m, float(x0))
        w = np.full(m, float(x0))
        p = np.full(m, p_start)
        apart = np.zeros(m, dtype=bool)
        for _ in range(int(n)):
            z = stream.draw_normal(m)
            u = stream.draw_uniform(m)
            x, _ = rwm_transition(x, target, eps, p * z, u)
            # z <= 0 maps to a hold variate below the 1/2 laziness
            w, p, _, _ = gwm_transition(w, p, target, lazy_half, z, u,
                                        hold=np.where(z > 0, 1.0, 0.0))
            apart |= x != w
        return apart

    results = _map_blocks(block, int(trials), rng, threads) if n > 0 else [np.zeros(int(trials), bool)]
    apart = np.concatenate(results)
    phat = float(apart.mean())
    return CouplingEstimate(float(x0), int(n), phat,
                            math.sqrt(max(phat * (1 - phat), 0.0) / len(apart)), int(trials))


def _vector_stepper(kernel, target):
    """``(x, p, stream) -> (x, p)`` advancing a vector of independent chains."""
    if hasattr(kernel, "vector_step"):
        return kernel.vector_step
    if isinstance(kernel, RwmProposal):
        def step(x, p, s):
            m = len(x)
            xn, _ = rwm_transition(x, target, kernel.eps, s.draw_normal(m), s.draw_uniform(m))
            return xn, p
        return step
    if isinstance(kernel, GwmKernel):
        def step(x, p, s):
            m = len(x)
            hold = s.draw_uniform(m) if kernel.lazy > 0 else None
            z, u = s.draw_normal(m), s.draw_uniform(m)
            xn, pn, _, _ = gwm_transition(x, p, target, kernel, z, u, hold)
            return xn, pn
        return step
    if isinstance(kernel, CounterexampleProposal):
        def step(x, p, s):
            m = len(x)
            mix, z, uj, u = s.draw_uniform(m), s.draw_normal(m), s.draw_uniform(m), s.draw_uniform(m)
            y = _counterexample_candidate(x, mix, z, uj)
            la = mh_log_acceptance(target, kernel, x, y)
            with np.errstate(divide="ignore"):
                acc = (la >= 0) | (np.log(u) < la)
            return np.where(acc, y, x), p
        return step
    raise UsageError(f"unsupported kernel {kernel!r}")


@dataclass
class DisplacementReport:
    fit: object
    t: np.ndarray
    mean_abs_disp: np.ndarray
    stderr: np.ndarray
    replicates: int

    def rows(self):
        return [(int(a), float(b), float(c)) for a, b, c in zip(self.t, self.mean_abs_disp, self.stderr)]


def displacement_exponent(kernel, target, x0, T, replicates, window, rng, p0=None,
                          per_decade=20, threads=1):
    """Estimate ``E|X_t - x0| ~ t^a`` by Monte Carlo and fit ``a`` over ``window``.

    ``replicates`` independent chains are advanced together; the guided walk
    defaults to ``p0 = -sgn(x0)`` (heading toward the mode).
    """
    lo, hi = window
    if T < 10 * lo:
        raise UsageError("need T >= 10 * window[0]")
    if hi > T:
        raise UsageError("window must end by T")
    if replicates < 100:
        raise UsageError("need at least 100 replicates")
    if p0 is None:
        p0 = -1 if x0 > 0 else 1
    ts = geometric_schedule(1, T, per_decade)
    step = _vector_stepper(kernel, target)

    def block(m, stream):
        x = np.full(m, float(x0))
        p = np.full(m, int(p0))
        out = np.empty((len(ts), m))
        k = 0
        for t in range(1, int(T) + 1):
            x, p = step(x, p, stream)
            if k < len(ts) and t == ts[k]:
                out[k] = np.abs(x - x0)
                k += 1
        return out

    disp = np.concatenate(_map_blocks(block, int(replicates), rng, threads, size=1000), axis=1)
    mean = disp.mean(axis=1)
    se = disp.std(axis=1, ddof=1) / math.sqrt(disp.shape[1])
    inside = (ts >= lo) & (ts <= hi)
    if np.any(mean[inside] <= 0):
        raise CheckFailed("chains never moved inside the fit window",
                          report={"t": ts.tolist(), "mean_abs_disp": mean.tolist()})
    fit = fit_power_law(ts, mean, window)
    return DisplacementReport(fit, ts, mean, se, int(replicates))


@dataclass
class HittingReport:
    ratio: float
    stderr: float
    mean_numerator: float
    mean_gwm: float
    excluded: int
    trials: int


def _hitting_times(stepper, x0, p0, radius, cap, m, stream):
    x = np.full(m, float(x0))
    p = np.full(m, int(p0))
    hit = np.full(m, -1, dtype=np.int64)
    active = np.ones(m, dtype=bool)
    for t in range(1, cap + 1):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        xn, pn = stepper(x[idx], p[idx], stream)
        x[idx], p[idx] = xn, pn
        done = np.abs(xn) <= radius
        hit[idx[done]] = t
        active[idx[done]] = False
    return hit


def hitting_time_ratio(target, x0, radius, eps, trials, rng, numerator="rwm", step_cap=None,
                       threads=1):
    """Mean entry time into ``[-radius, radius]``: RWM over non-lazy GWM.

    The guided walk starts at ``(x0, -sgn(x0))``. ``numerator="gwm"`` runs
    the guided walk against an independent copy of itself (ratio ~ 1).
    Trials exceeding ``step_cap`` are excluded; more than 1% exclusions
    raise :class:`CheckFailed`.
    """
    if not abs(x0) > radius:
        raise UsageError("x0 must lie outside [-radius, radius]")
    if step_cap is None:
        step_cap = int(50 * abs(x0) / eps) + 1000
    p0 = -1 if x0 > 0 else 1
    gwm = _vector_stepper(GwmKernel(eps), target)
    num = {"rwm": _vector_stepper(RwmProposal(eps), target), "gwm": gwm}[numerator]

    def block(m, stream):
        a = _hitting_times(num, x0, p0, radius, step_cap, m, stream)
        b = _hitting_times(gwm, x0, p0, radius, step_cap, m, stream)
        return np.stack([a, b])

    h = np.concatenate(_map_blocks(block, int(trials), rng, threads, size=1000), axis=1)
    ok_a, ok_b = h[0] > 0, h[1] > 0
    excluded = int((~ok_a).sum() + (~ok_b).sum())
    ta, tb = h[0][ok_a].astype(float), h[1][ok_b].astype(float)
    report = HittingReport(float("nan"), float("nan"), float("nan"), float("nan"), excluded, int(trials))
    if excluded > 0.01 * 2 * trials or ta.size < 2 or tb.size < 2:
        raise CheckFailed(f"{excluded} trials exceeded the step cap {step_cap}", report=report)
    ma, mb = ta.mean(), tb.mean()
    ratio = ma / mb
    # delta method for a ratio of independent means
    se = ratio * math.sqrt(ta.var(ddof=1) / ta.size / ma**2 + tb.var(ddof=1) / tb.size / mb**2)
    return HittingReport(float(ratio), float(se), float(ma), float(mb), excluded, int(trials))


@dataclass
class ReachAudit:
    reach_estimate: float
    reach_stderr: float
    reach_bound: float
    pi_An: float
    tv_lower_bound: float
    tv_lower_bound_analytic: float
    params: dict


def lemma_a2_audit(r, K, k, n, eps, trials, rng, threads=1):
    """Tail-set lower bound on the guided walk's TV distance after ``n`` steps.

    Started from ``(0, +1)``, the chain can only be beyond ``k n`` if the
    increments sum past it: ``P^n(A_n) <= P(sum |z_i| > k n)``. The Monte
    Carlo estimate and the sub-Gaussian bound
    ``exp(-n (k - mu)^2 / (2 sigma_H^2))`` of that probability are compared
    against the exact ``pi(A_n) = C0 / (r (k n)^r)``.
    """
    target = PolyTailTarget(r, K)
    if not k * n > K:
        raise UsageError(f"need k * n > K; got k*n = {k * n}, K = {K}")
    thresh = k * n

    def block(m, stream):
        s = np.zeros(m)
        for _ in range(int(n)):
            s += np.abs(stream.draw_normal(m))
        return s * eps > thresh

    hits = np.concatenate(_map_blocks(block, int(trials), rng, threads, size=100_000))
    phat = float(hits.mean())
    se = math.sqrt(max(phat * (1 - phat), 0.0) / hits.size)
    mu = eps * math.sqrt(2.0 / math.pi)
    var_h = eps**2 * (1.0 - 2.0 / math.pi)
    bound = math.exp(-n * (k - mu) ** 2 / (2.0 * var_h)) if k > mu else 1.0
    pi_an = target.tail_mass(thresh)
    return ReachAudit(phat, se, bound, pi_an, max(0.0, pi_an - phat), max(0.0, pi_an - bound),
                      {"r": r, "K": K, "k": k, "n": n, "eps": eps, "trials": int(trials)})
