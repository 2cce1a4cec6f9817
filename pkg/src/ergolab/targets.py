"""One-dimensional target densities.

Each target exposes an unnormalized log-density, its log normalizing
constant, exact interval masses (used to discretize onto grids) and the
points where the density is not smooth.
"""

import math

import numpy as np
from scipy.special import erfc, gammaincc, gammaln

from .errors import UsageError

__all__ = [
    "Target",
    "PolyTailTarget",
    "ConvexPotentialTarget",
    "SquaredGaussianTarget",
    "make_target",
]


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise UsageError("target evaluated at a non-finite point")
    return x


class Target:
    """Base class. Subclasses implement ``_logpdf`` and ``survival``."""

    name = "target"
    #: points where the density has a kink (used to split quadrature panels)
    breakpoints = ()

    def _logpdf(self, x):
        raise NotImplementedError

    def logpdf_scalar(self, x):
        """Fast unnormalized log-density of a Python float (no validation)."""
        return float(self._logpdf(np.float64(x)))

    def log_density(self, x):
        """Unnormalized log-density ``log pi~(x)``."""
        out = self._logpdf(_check_finite(x))
        return float(out) if np.ndim(out) == 0 else out

    def log_norm_const(self):
        raise NotImplementedError

    def log_pdf(self, x):
        """Normalized log-density."""
        return self.log_density(x) - self.log_norm_const()

    def log_ratio(self, x, y):
        """``log pi(y) - log pi(x)`` without the normalizing constant."""
        out = self._logpdf(_check_finite(y)) - self._logpdf(_check_finite(x))
        return float(out) if np.ndim(out) == 0 else out

    def survival(self, x):
        """``P(X > x)`` for ``x >= 0`` (vectorized)."""
        raise NotImplementedError

    def interval_mass(self, a, b):
        """Exact probability of ``(a, b)``, vectorized, accurate in both tails."""
        a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
        out = np.empty(a.shape)
        right = a >= 0
        left = b <= 0
        mid = ~(right | left)
        out[right] = self.survival(a[right]) - self.survival(b[right])
        out[left] = self.survival(-b[left]) - self.survival(-a[left])
        out[mid] = 1.0 - self.survival(-a[mid]) - self.survival(b[mid])
        return out

    def outside_mass(self, lo, hi):
        """Probability of the complement of ``[lo, hi]`` (``lo <= 0 <= hi``)."""
        return float(self.survival(np.array([-lo]))[0] + self.survival(np.array([hi]))[0])

    def params(self):
        return {}

    def describe(self):
        return {"name": self.name, **self.params()}


class PolyTailTarget(Target):
    """Density with a flat core and exact power-law tails.

    ``pi(x) = C0 * K**-(1+r)`` for ``|x| <= K`` and ``C0 * |x|**-(1+r)``
    beyond, with ``C0 = r K**r / (2 (r + 1))`` so the density integrates to one.
    """

    name = "poly_tail"

    def __init__(self, r=2.0, K=1.0):
        if not (r > 0 and K > 0):
            raise UsageError(f"PolyTail needs r > 0 and K > 0, got r={r}, K={K}")
        self.r = float(r)
        self.K = float(K)
        self.C0 = self.r * self.K**self.r / (2.0 * (self.r + 1.0))
        self.breakpoints = (-self.K, self.K)

    def _logpdf(self, x):
        return -(1.0 + self.r) * np.log(np.maximum(np.abs(x), self.K))

    def logpdf_scalar(self, x):
        return -(1.0 + self.r) * math.log(max(abs(x), self.K))

    def log_norm_const(self):
        return -math.log(self.C0)

    def tail_mass(self, a):
        """Exact mass of ``[a, inf)`` for ``a >= K``: ``C0 / (r a**r)``."""
        if a < self.K:
            raise UsageError(f"tail_mass needs a >= K={self.K}, got {a}")
        return self.C0 / (self.r * a**self.r)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        core = 0.5 - self.C0 * self.K ** -(1.0 + self.r) * np.minimum(x, self.K)
        tail = self.C0 / (self.r * np.maximum(x, self.K) ** self.r)
        return np.where(x >= self.K, tail, core)

    def params(self):
        return {"r": self.r, "K": self.K}

    def __repr__(self):
        return f"PolyTailTarget(r={self.r:g}, K={self.K:g})"


class ConvexPotentialTarget(Target):
    """``pi(x) ∝ exp(-a |x|**p)`` with ``p > 1``."""

    name = "convex_potential"

    def __init__(self, p=2.0, a=1.0):
        if not (p > 1 and a > 0):
            raise UsageError(f"ConvexPotential needs p > 1 and a > 0, got p={p}, a={a}")
        self.p = float(p)
        self.a = float(a)

    def _logpdf(self, x):
        return -self.a * np.abs(x) ** self.p

    def logpdf_scalar(self, x):
        return -self.a * abs(x) ** self.p

    def log_norm_const(self):
        # Z = 2 a^(-1/p) Gamma(1 + 1/p)
        return math.log(2.0) - math.log(self.a) / self.p + gammaln(1.0 + 1.0 / self.p)

    def potential(self, x):
        out = self.a * np.abs(_check_finite(x)) ** self.p
        return float(out) if np.ndim(out) == 0 else out

    def potential_prime(self, x):
        x = _check_finite(x)
        out = self.a * self.p * np.sign(x) * np.abs(x) ** (self.p - 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * gammaincc(1.0 / self.p, self.a * np.abs(x) ** self.p)

    def params(self):
        return {"p": self.p, "a": self.a}

    def __repr__(self):
        return f"ConvexPotentialTarget(p={self.p:g}, a={self.a:g})"


class SquaredGaussianTarget(ConvexPotentialTarget):
    """``pi(x) ∝ exp(-x**2)``, i.e. ``N(0, 1/2)``."""

    name = "squared_gaussian"

    def __init__(self):
        super().__init__(p=2.0, a=1.0)

    def _logpdf(self, x):
        return -np.square(x)

    def logpdf_scalar(self, x):
        return -x * x

    def log_norm_const(self):
        return 0.5 * math.log(math.pi)

    def survival(self, x):
        return 0.5 * erfc(np.asarray(x, dtype=float))

    def params(self):
        return {}

    def __repr__(self):
        return "SquaredGaussianTarget()"


_REGISTRY = {
    "poly_tail": PolyTailTarget,
    "convex_potential": ConvexPotentialTarget,
    "squared_gaussian": SquaredGaussianTarget,
}


def make_target(name, **params):
    """Build a target from its config name and parameters."""
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise UsageError(f"unknown target {name!r}; choose from {sorted(_REGISTRY)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise UsageError(f"bad parameters for target {name!r}: {exc}") from None
