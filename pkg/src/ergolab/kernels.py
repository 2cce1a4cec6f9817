"""Proposal kernels and Metropolis-Hastings steppers.

Three samplers are provided:

* random walk Metropolis (RWM) with ``N(x, eps^2)`` proposals;
* guided walk Metropolis (GWM), a lifted chain on ``R x {-1, +1}`` that
  proposes ``x + eps * p * |Z|`` and flips ``p`` on rejection, optionally
  made lazy with hold probability ``lazy``;
* an MH chain driven by a two-component mixture proposal, a Normal
  ``N(x/2, 1)`` step mixed with a rare jump to ``Uniform(e^{x^2}, e^{x^2}+1)``
  at weight ``1 / (2 + |x|)``.

Randomness convention: every step draws its variates up front (hold
uniform when lazy, Gaussian increment, acceptance uniform) so two chains
fed from one stream stay aligned. A move with ``log alpha >= 0`` is
accepted without consulting its uniform.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericFailure, UsageError

__all__ = [
    "RwmProposal",
    "GwmKernel",
    "CounterexampleProposal",
    "GuidedState",
    "Trajectory",
    "mh_log_acceptance",
    "rwm_transition",
    "rwm_step",
    "gwm_transition",
    "gwm_step",
    "counterexample_transition",
    "counterexample_propose",
    "counterexample_log_q",
    "counterexample_weight",
    "run_chain",
    "make_kernel",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _normal_logpdf(z):
    return -0.5 * np.square(z) - _LOG_SQRT_2PI


@dataclass(frozen=True)
class RwmProposal:
    """Gaussian random walk proposal ``y = x + eps * Z``."""

    eps: float = 1.0
    name = "rwm"
    lifted = False

    def __post_init__(self):
        if not self.eps > 0:
            raise UsageError(f"eps must be positive, got {self.eps}")

    def log_q(self, x, y):
        z = (np.asarray(y, dtype=float) - x) / self.eps
        out = _normal_logpdf(z) - math.log(self.eps)
        return float(out) if np.ndim(out) == 0 else out

    def describe(self):
        return {"name": self.name, "eps": self.eps}


@dataclass(frozen=True)
class GwmKernel:
    """Guided walk kernel; ``lazy`` is the hold probability in ``[0, 1]``."""

    eps: float = 1.0
    lazy: float = 0.0
    name = "gwm"
    lifted = True

    def __post_init__(self):
        if not self.eps > 0:
            raise UsageError(f"eps must be positive, got {self.eps}")
        if not 0.0 <= self.lazy <= 1.0:
            raise UsageError(f"lazy must lie in [0, 1], got {self.lazy}")

    def log_q_increment(self, p, x, y):
        """Log-density of landing at ``y`` from ``(x, p)`` (half-normal in direction p)."""
        d = p * (np.asarray(y, dtype=float) - x) / self.eps
        out = np.where(d >= 0, math.log(2.0) + _normal_logpdf(d) - math.log(self.eps), -np.inf)
        return float(out) if np.ndim(out) == 0 else out

    def describe(self):
        return {"name": self.name, "eps": self.eps, "lazy": self.lazy}


@dataclass(frozen=True)
class CounterexampleProposal:
    """Mixture ``(1 - w(x)) N(x/2, 1) + w(x) U(e^{x^2}, e^{x^2} + 1)``, ``w(x) = 1/(2+|x|)``."""

    name = "counterexample"
    lifted = False

    def log_q(self, x, y):
        return counterexample_log_q(x, y)

    def describe(self):
        return {"name": self.name}


def counterexample_weight(x):
    """Jump-component weight ``1 / (2 + |x|)``."""
    return 1.0 / (2.0 + np.abs(x))


def _jump_support(x, y):
    """Whether ``y`` lies in ``(e^{x^2}, e^{x^2} + 1)``.

    Compared in linear space while ``e^{x^2}`` is representable, on
    ``log y`` beyond that.
    """
    x2 = np.square(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    small = x2 < 700.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        base = np.exp(np.where(small, x2, 0.0))
        linear = (y > base) & (y < base + 1.0)
        log_y = np.log(np.where(y > 0, y, np.nan))
        logged = (log_y > x2) & (log_y < np.logaddexp(x2, 0.0))
    return np.where(small, linear, logged & np.isfinite(y))


def counterexample_log_q(x, y):
    """Log mixture density of proposing ``y`` from ``x``.

    The uniform component contributes ``log w(x)`` on its support. The
    support test works on ``log y`` so ``exp(x^2)`` is never formed for
    large ``|x|``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = counterexample_weight(x)
    with np.errstate(over="ignore", invalid="ignore"):
        normal = np.where(np.isfinite(y), np.log1p(-w) + _normal_logpdf(y - 0.5 * x), -np.inf)
    with np.errstate(divide="ignore"):
        jump = np.where(_jump_support(x, y), np.log(w), -np.inf)
    out = np.logaddexp(normal, jump)
    return float(out) if np.ndim(out) == 0 else out


def counterexample_propose(x, rng):
    """Draw one proposal. Jumps beyond double range come back as ``inf``."""
    mix, z, uj = rng.draw_uniform(), rng.draw_normal(), rng.draw_uniform()
    return _counterexample_candidate(x, mix, z, uj)


def _counterexample_candidate(x, mix, z, uj):
    x = np.asarray(x, dtype=float)
    jump = mix < counterexample_weight(x)
    with np.errstate(over="ignore"):
        far = np.exp(np.square(x)) + uj
    y = np.where(jump, far, 0.5 * x + z)
    return float(y) if np.ndim(y) == 0 else y


def _safe_log_target(target, y):
    y = np.asarray(y, dtype=float)
    finite = np.isfinite(y)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.where(finite, target._logpdf(np.where(finite, y, 0.0)), -np.inf)
    return out


def mh_log_acceptance(target, proposal, x, y, return_support=False):
    """``log alpha(x, y) = min(0, log r(x, y))`` for the MH acceptance.

    ``r(x, y) = pi(y) q(y, x) / (pi(x) q(x, y))``. When ``pi(x) q(x, y) = 0``
    (``y`` outside the proposal support) the acceptance is zero and ``-inf``
    is returned; with ``return_support=True`` the pair
    ``(log_alpha, in_support)`` is returned instead.

    For a :class:`GwmKernel` the half-normal increment density cancels and
    the ratio reduces to ``pi(y) / pi(x)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lp_x = _safe_log_target(target, x)
    lp_y = _safe_log_target(target, y)
    if isinstance(proposal, GwmKernel):
        lq_xy = np.zeros(np.broadcast(x, y).shape)
        lq_yx = lq_xy
    else:
        lq_xy = np.asarray(proposal.log_q(x, y), dtype=float)
        lq_yx = np.asarray(proposal.log_q(y, x), dtype=float)
    support = np.isfinite(lq_xy) & np.isfinite(lp_x)
    num = lp_y + lq_yx
    with np.errstate(invalid="ignore"):
        log_r = np.where(support & np.isfinite(num), num - np.where(support, lp_x + lq_xy, 0.0), -np.inf)
    out = np.minimum(0.0, log_r)
    if np.ndim(out) == 0:
        out = float(out)
        support = bool(support)
    if return_support:
        return out, support
    return out


def _accept(log_alpha, u):
    # alpha == 1 accepts without looking at u
    with np.errstate(divide="ignore"):
        return (log_alpha >= 0.0) | (np.log(u) < log_alpha)


def rwm_transition(x, target, eps, z, u):
    """Deterministic RWM update from given variates; vectorized over ``x``."""
    x = np.asarray(x, dtype=float)
    y = x + eps * np.asarray(z, dtype=float)
    log_alpha = np.minimum(0.0, target._logpdf(y) - target._logpdf(x))
    acc = _accept(log_alpha, np.asarray(u, dtype=float))
    return np.where(acc, y, x), acc


def rwm_step(x, target, eps, rng):
    """One RWM step; returns ``(x_new, accepted)``. ``x`` may be an array."""
    shape = np.shape(x)
    z = rng.draw_normal(shape or None)
    u = rng.draw_uniform(shape or None)
    x_new, acc = rwm_transition(x, target, eps, z, u)
    if not shape:
        return float(x_new), bool(acc)
    return x_new, acc


@dataclass(frozen=True)
class GuidedState:
    """Position-momentum pair of the lifted chain."""

    x: float
    p: int

    def __post_init__(self):
        if self.p not in (-1, 1):
            raise UsageError(f"momentum must be -1 or +1, got {self.p}")


def gwm_transition(x, p, target, kernel, z, u, hold=None):
    """Deterministic GWM update from given variates; vectorized.

    ``hold`` is the lazy-hold uniform; the chain stays put (momentum kept)
    when ``hold < kernel.lazy``. Returns ``(x_new, p_new, accepted, held)``.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p)
    if hold is None:
        held = np.zeros(np.broadcast(x, p).shape, dtype=bool) | (kernel.lazy >= 1.0)
    else:
        held = np.asarray(hold) < kernel.lazy
    y = x + kernel.eps * p * np.abs(np.asarray(z, dtype=float))
    log_alpha = np.minimum(0.0, target._logpdf(y) - target._logpdf(x))
    acc = _accept(log_alpha, np.asarray(u, dtype=float)) & ~held
    x_new = np.where(acc, y, x)
    p_new = np.where(acc | held, p, -p)
    return x_new, p_new, acc, held


def _gwm_draws(kernel, rng, shape):
    hold = rng.draw_uniform(shape) if kernel.lazy > 0.0 else None
    return hold, rng.draw_normal(shape), rng.draw_uniform(shape)


def gwm_step(state, target, kernel, rng):
    """One guided-walk step from a :class:`GuidedState`."""
    hold, z, u = _gwm_draws(kernel, rng, None)
    x, p, _, _ = gwm_transition(state.x, state.p, target, kernel, z, u, hold)
    return GuidedState(float(x), int(p))


def counterexample_transition(x, target, mix, z, uj, u):
    """MH update with the mixture proposal from given variates.

    Returns ``(x_new, accepted)``. A jump accepted beyond double range
    raises :class:`NumericFailure`.
    """
    x = np.asarray(x, dtype=float)
    y = _counterexample_candidate(x, mix, z, uj)
    log_alpha = mh_log_acceptance(target, CounterexampleProposal(), x, y)
    acc = _accept(np.asarray(log_alpha), np.asarray(u, dtype=float))
    if np.any(acc & ~np.isfinite(y)):
        raise NumericFailure("accepted a jump outside double-precision range")
    return np.where(acc, y, x), acc


@dataclass
class Trajectory:
    """Recorded chain path.

    ``states[i]`` is the position after ``i`` steps; ``momenta`` is ``None``
    for unlifted chains. ``accepted[i]`` and ``held[i]`` describe step
    ``i -> i + 1``.
    """

    states: np.ndarray
    accepted: np.ndarray
    momenta: np.ndarray = None
    held: np.ndarray = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.states) - 1
        if len(self.accepted) != n:
            raise UsageError("accepted flags must have one entry per step")
        if self.momenta is not None and len(self.momenta) != n + 1:
            raise UsageError("momenta must have one entry per state")
        if self.held is None:
            self.held = np.zeros(n, dtype=bool)

    @property
    def n_steps(self):
        return len(self.accepted)

    def acceptance_rate(self):
        moves = ~self.held
        return float(self.accepted[moves].mean()) if moves.any() else float("nan")

    def write_csv(self, path):
        """Columns ``step, x, p, accepted``; ``p`` blank when unlifted, and
        ``accepted`` blank on the initial row."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "x", "p", "accepted"])
            for i, x in enumerate(self.states):
                p = "" if self.momenta is None else int(self.momenta[i])
                acc = "" if i == 0 else int(self.accepted[i - 1])
                w.writerow([i, repr(float(x)), p, acc])


_BLOCK = 1 << 15


def run_chain(kernel, target, x0, n, rng, p0=None):
    """Run ``n`` steps of ``kernel`` targeting ``target`` from ``x0``.

    ``p0`` is required for the guided walk. Variates are drawn in blocks
    from ``rng``; the result depends only on ``(seed, stream_id)``.
    """
    if n < 0:
        raise UsageError("n must be non-negative")
    n = int(n)
    states = np.empty(n + 1)
    states[0] = x0
    accepted = np.zeros(n, dtype=bool)
    held = np.zeros(n, dtype=bool)
    momenta = None
    logpdf_s = target.logpdf_scalar

    if isinstance(kernel, GwmKernel):
        if p0 is None:
            raise UsageError("guided walk needs an initial momentum p0")
        GuidedState(float(x0), int(p0))
        momenta = np.empty(n + 1, dtype=np.int8)
        momenta[0] = p0
        x, p = float(x0), int(p0)
        lx = logpdf_s(x)
        eps, lazy = kernel.eps, kernel.lazy
        for start in range(0, n, _BLOCK):
            m = min(_BLOCK, n - start)
            hold, z, u = _gwm_draws(kernel, rng, m)
            ys_step = eps * np.abs(z)
            for k in range(m):
                i = start + k
                if hold is not None and hold[k] < lazy:
                    held[i] = True
                else:
                    y = x + p * ys_step[k]
                    ly = logpdf_s(y)
                    la = ly - lx
                    if la >= 0.0 or math.log(u[k]) < la:
                        x, lx = y, ly
                        accepted[i] = True
                    else:
                        p = -p
                states[i + 1] = x
                momenta[i + 1] = p
    elif isinstance(kernel, RwmProposal):
        x = float(x0)
        lx = logpdf_s(x)
        eps = kernel.eps
        for start in range(0, n, _BLOCK):
            m = min(_BLOCK, n - start)
            z = rng.draw_normal(m)
            u = rng.draw_uniform(m)
            ys = eps * z
            lus = np.log(u)
            for k in range(m):
                i = start + k
                y = x + ys[k]
                ly = logpdf_s(y)
                la = ly - lx
                if la >= 0.0 or lus[k] < la:
                    x, lx = y, ly
                    accepted[i] = True
                states[i + 1] = x
    elif isinstance(kernel, CounterexampleProposal):
        x = float(x0)
        for start in range(0, n, _BLOCK):
            m = min(_BLOCK, n - start)
            mix, z, uj, u = (rng.draw_uniform(m), rng.draw_normal(m),
                             rng.draw_uniform(m), rng.draw_uniform(m))
            for k in range(m):
                i = start + k
                xn, acc = counterexample_transition(x, target, mix[k], z[k], uj[k], u[k])
                x = float(xn)
                accepted[i] = bool(acc)
                states[i + 1] = x
    else:
        raise UsageError(f"unsupported kernel {kernel!r}")

    config = {
        "kernel": kernel.describe(),
        "target": target.describe(),
        "x0": float(x0),
        "p0": None if p0 is None else int(p0),
        "n": n,
        "seed": getattr(rng, "seed", None),
        "stream_id": getattr(rng, "stream_id", None),
    }
    return Trajectory(states, accepted, momenta, held, config)


def make_kernel(name, eps=None, lazy=0.0):
    """Build a kernel from its config name."""
    if name == "rwm":
        if eps is None:
            raise UsageError("kernel.eps is required for rwm")
        return RwmProposal(float(eps))
    if name == "gwm":
        if eps is None:
            raise UsageError("kernel.eps is required for gwm")
        return GwmKernel(float(eps), float(lazy))
    if name == "counterexample":
        return CounterexampleProposal()
    raise UsageError(f"unknown kernel {name!r}; choose from ['counterexample', 'gwm', 'rwm']")

