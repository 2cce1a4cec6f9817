"""Grid discretization of Metropolis-Hastings kernels.

The real line is truncated to ``N`` cells of width ``delta`` centred on a
uniform grid over ``[-L, L]``; the covered domain is
``[-L - delta/2, L + delta/2]``. Each cell carries its exact target mass.

Transitions are a Metropolis chain on the cells: the proposal probability
``Q_ij`` is the exact mass the continuous proposal from node ``i`` puts on
cell ``j`` and the move is accepted with ``min(1, pi_j Q_ji / (pi_i Q_ij))``.
This makes the discretized chain exactly reversible (skew-reversible for the
guided walk) with respect to the cell masses, so stationarity and detailed
balance hold to rounding error.

Gaussian increments are spread over cells with a scale ``sigma`` chosen so
that the discrete increment law keeps the continuous moment that governs
transport: the variance for the random walk, the mean step length for the
guided walk. Without this the cell rounding inflates the variance by about
``delta**2 / 12`` and the TV curves carry an O(delta**2) bias.

Proposals that leave the domain are evaluated with the continuous
acceptance. The accepted part of that mass is recorded per state in
``leaked``; it is held on the diagonal for unlifted chains and sent to the
momentum-flipped twin for the guided walk (the guided walk's rejection
destination), which keeps the lifted invariant measure exact.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.special import ndtr

from . import _integrals
from .errors import NumericFailure, UsageError
from .kernels import CounterexampleProposal, GwmKernel, RwmProposal, counterexample_weight
from .numerics import fit_power_law

__all__ = [
    "GridOperator",
    "build_grid_operator",
    "evolve",
    "tv_to_target",
    "tv_curve",
    "estimate_polynomial_rate",
    "spectral_gap",
    "TvCurve",
    "is_reversible",
    "geometric_schedule",
]


@dataclass
class GridOperator:
    """Row-stochastic transition matrix on a truncated grid.

    For lifted chains state ``2 i`` is ``(x_i, +1)`` and ``2 i + 1`` is
    ``(x_i, -1)``.

    Attributes
    ----------
    L, N : float, int
        Truncation radius and node count.
    nodes : ndarray
    lifted : bool
    matrix : scipy.sparse.csr_matrix
    leaked : ndarray
        Accepted probability per state that was proposed outside the domain.
    pi_grid : ndarray
        Stationary law of the grid chain (normalized cell masses).
    pi_cells : ndarray
        True target mass of each cell (sums to ``1 - tail_mass``).
    tail_mass : float
        Target mass outside the covered domain.
    """

    L: float
    N: int
    nodes: np.ndarray
    lifted: bool
    matrix: sp.csr_matrix
    leaked: np.ndarray
    pi_grid: np.ndarray
    pi_cells: np.ndarray
    tail_mass: float
    description: dict = field(default_factory=dict)
    _transpose: sp.csr_matrix = field(default=None, repr=False)

    @property
    def delta(self):
        return self.nodes[1] - self.nodes[0] if self.N > 1 else 0.0

    @property
    def n_states(self):
        return self.matrix.shape[0]

    @property
    def transpose(self):
        if self._transpose is None:
            self._transpose = self.matrix.T.tocsr()
        return self._transpose

    def state_index(self, x, p=None):
        """Index of the state whose node is nearest to ``x``."""
        if self.N > 1:
            i = int(round((x - self.nodes[0]) / self.delta))
        else:
            i = 0
        if not 0 <= i < self.N:
            raise UsageError(f"x={x} lies outside the grid [-{self.L}, {self.L}]")
        if not self.lifted:
            return i
        if p not in (-1, 1):
            raise UsageError("lifted operator needs a start momentum p in {-1, +1}")
        return 2 * i + (0 if p > 0 else 1)

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    @classmethod
    def from_matrix(cls, matrix, pi):
        """Wrap an explicit stochastic matrix (nodes are ``0..n-1``)."""
        m = sp.csr_matrix(matrix, dtype=float)
        pi = np.asarray(pi, dtype=float)
        n = m.shape[0]
        return cls(L=float(n - 1), N=n, nodes=np.arange(n, dtype=float), lifted=False,
                   matrix=m, leaked=np.zeros(n), pi_grid=pi / pi.sum(), pi_cells=pi / pi.sum(),
                   tail_mass=0.0, description={"kernel": "explicit"})


def _gauss_cells(a, b):
    """Standard normal mass of ``(a, b)`` accurate in both tails."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.where(a >= 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def _leak_mass(kernel, target, x, p, lo_y, hi_y, tol):
    """Accepted mass of the continuous proposal from ``x`` landing outside ``[lo_y, hi_y]``."""
    comps = _integrals.restricted_components(kernel, x, p, lo_y, hi_y, outside=True)
    if not comps:
        return 0.0
    la = _integrals.log_alpha_fn(kernel, target, x)
    val = _integrals.log_integral(kernel, target, x, la, p=p, tol=tol, comps=comps)
    return math.exp(val) if val > -np.inf else 0.0


def _increment_cells(eps, delta, sigma, one_sided):
    """Lattice offsets ``k`` and their probabilities for a ``N(0, sigma^2)`` increment.

    One-sided laws are the half-normal ``|Z| sigma``; offset 0 then holds the
    mass of ``[0, delta/2)``.
    """
    cut = _integrals.Z_CUT
    B = int(math.ceil(cut * sigma / delta))
    if one_sided:
        ks = np.arange(0, B + 1)
        a = np.clip((ks - 0.5) * delta / sigma, 0.0, cut)
        b = np.clip((ks + 0.5) * delta / sigma, 0.0, cut)
        return ks, 2.0 * _gauss_cells(a, b)
    ks = np.arange(-B, B + 1)
    a = np.clip((ks - 0.5) * delta / sigma, -cut, cut)
    b = np.clip((ks + 0.5) * delta / sigma, -cut, cut)
    return ks, _gauss_cells(a, b)


def matched_scale(eps, delta, one_sided):
    """Scale ``sigma`` whose lattice increment law matches the continuous one.

    Two-sided: ``sum (k delta)^2 q_k = eps^2``. One-sided: ``sum k delta h_k =
    eps sqrt(2/pi)``. Falls back to ``eps`` if no root is bracketed.
    """
    if one_sided:
        goal = eps * math.sqrt(2.0 / math.pi)

        def moment(sig):
            ks, h = _increment_cells(eps, delta, sig, True)
            return float(np.sum(ks * delta * h))
    else:
        goal = eps * eps

        def moment(sig):
            ks, q = _increment_cells(eps, delta, sig, False)
            return float(np.sum((ks * delta) ** 2 * q))

    lo, hi = 1e-3 * eps, 2.0 * (eps + delta)
    if not (moment(lo) < goal < moment(hi)):
        return eps
    return brentq(lambda sig: moment(sig) - goal, lo, hi, xtol=1e-14 * eps, rtol=1e-14)


def build_grid_operator(kernel, target, L, N, leak_tol=1.0, tol=1e-10, moment_match=True):
    """Discretize ``kernel`` targeting ``target`` on ``N`` nodes over ``[-L, L]``.

    Parameters
    ----------
    kernel : RwmProposal, GwmKernel or CounterexampleProposal
    target : Target
    L : float
        Truncation radius.
    N : int
        Odd node count >= 101 (a node sits at 0).
    leak_tol : float
        Largest allowed per-state leaked mass; exceeding it raises
        :class:`NumericFailure`.
    tol : float
        Quadrature tolerance for the out-of-domain acceptance integrals.
    moment_match : bool
        Rescale Gaussian increments so the lattice law keeps the continuous
        variance (random walk) or mean step (guided walk); see module notes.
    """
    if not L > 0:
        raise UsageError("L must be positive")
    if N < 101 or N % 2 == 0:
        raise UsageError(f"N must be odd and >= 101, got {N}")
    nodes = np.linspace(-L, L, N)
    delta = nodes[1] - nodes[0]
    edges = np.concatenate([nodes - 0.5 * delta, [nodes[-1] + 0.5 * delta]])
    lo_y, hi_y = edges[0], edges[-1]
    pi_cells = target.interval_mass(edges[:-1], edges[1:])
    tail = target.outside_mass(lo_y, hi_y)
    if np.any(pi_cells <= 0):
        raise NumericFailure("target mass underflows on the grid; reduce L")

    if isinstance(kernel, RwmProposal):
        sigma = matched_scale(kernel.eps, delta, False) if moment_match else kernel.eps
        mat, leaked = _build_rwm(kernel, target, nodes, delta, pi_cells, lo_y, hi_y, tol, sigma)
        lifted = False
        pi_grid = pi_cells / pi_cells.sum()
        cells = pi_cells
    elif isinstance(kernel, GwmKernel):
        sigma = matched_scale(kernel.eps, delta, True) if moment_match else kernel.eps
        mat, leaked = _build_gwm(kernel, target, nodes, delta, pi_cells, lo_y, hi_y, tol, sigma)
        lifted = True
        pi_grid = np.repeat(pi_cells / pi_cells.sum(), 2) * 0.5
        cells = np.repeat(pi_cells, 2) * 0.5
    elif isinstance(kernel, CounterexampleProposal):
        mat, leaked = _build_counterexample(target, nodes, edges, pi_cells, lo_y, hi_y, tol)
        sigma = None
        lifted = False
        pi_grid = pi_cells / pi_cells.sum()
        cells = pi_cells
    else:
        raise UsageError(f"unsupported kernel {kernel!r}")

    worst = int(np.argmax(leaked))
    if leaked[worst] > leak_tol:
        raise NumericFailure(
            f"leaked mass {leaked[worst]:.3g} at state {worst} exceeds leak_tol={leak_tol:g}",
            best_estimate=float(leaked[worst]),
            row=worst,
        )
    return GridOperator(
        L=float(L), N=int(N), nodes=nodes, lifted=lifted, matrix=mat, leaked=leaked,
        pi_grid=pi_grid, pi_cells=cells, tail_mass=tail,
        description={"kernel": kernel.describe(), "target": target.describe(),
                     "L": float(L), "N": int(N), "sigma": sigma},
    )


def _ratio(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den > 0, num / den, 1.0)


def _edge_rows(nodes, reach, lo_y, hi_y):
    return np.nonzero((nodes - reach < lo_y) | (nodes + reach > hi_y))[0]


def _build_rwm(kernel, target, nodes, delta, pi_cells, lo_y, hi_y, tol, sigma):
    N = len(nodes)
    eps = kernel.eps
    cut = _integrals.Z_CUT
    ks, qk = _increment_cells(eps, delta, sigma, False)

    rows, cols, vals = [], [], []
    for k, q in zip(ks, qk):
        if k == 0 or q == 0.0:
            continue
        i = np.arange(max(0, -k), min(N, N - k))
        j = i + k
        acc = q * np.minimum(1.0, _ratio(pi_cells[j], pi_cells[i]))
        rows.append(i)
        cols.append(j)
        vals.append(acc)

    leaked = np.zeros(N)
    for i in _edge_rows(nodes, cut * eps, lo_y, hi_y):
        leaked[i] = _leak_mass(kernel, target, nodes[i], None, lo_y, hi_y, tol)
    return _assemble(N, rows, cols, vals, diag_extra=None), leaked


def _build_gwm(kernel, target, nodes, delta, pi_cells, lo_y, hi_y, tol, sigma):
    N = len(nodes)
    eps, lazy = kernel.eps, kernel.lazy
    cut = _integrals.Z_CUT
    ks, hk = _increment_cells(eps, delta, sigma, True)
    move = 1.0 - lazy

    rows, cols, vals = [], [], []
    flip = np.zeros(2 * N)  # mass sent to the momentum twin
    idx = np.arange(N)
    for p, off in ((1, 0), (-1, 1)):
        state = 2 * idx + off
        in_grid_mass = np.zeros(N)
        for k, h in zip(ks[1:], hk[1:]):
            if h == 0.0:
                continue
            j = idx + p * k
            ok = (j >= 0) & (j < N)
            i_ok, j_ok = idx[ok], j[ok]
            acc = move * h * np.minimum(1.0, _ratio(pi_cells[j_ok], pi_cells[i_ok]))
            rows.append(2 * i_ok + off)
            cols.append(2 * j_ok + off)
            vals.append(acc)
            in_grid_mass[i_ok] += move * h
            flip[2 * i_ok + off] += move * h - acc
        # self-cell increments count as accepted moves back to the same state;
        # everything not yet assigned (out-of-domain, beyond the cut) flips
        stay = lazy + move * hk[0]
        rest = 1.0 - stay - in_grid_mass
        flip[state] += rest
    leaked = np.zeros(2 * N)
    for i in _edge_rows(nodes, cut * eps, lo_y, hi_y):
        for p, off in ((1, 0), (-1, 1)):
            leaked[2 * i + off] = move * _leak_mass(kernel, target, nodes[i], p, lo_y, hi_y, tol)
    n = 2 * N
    mat = _assemble(n, rows, cols, vals, diag_extra=None, twin_flip=flip)
    return mat, leaked


def _build_counterexample(target, nodes, edges, pi_cells, lo_y, hi_y, tol):
    N = len(nodes)
    x = nodes[:, None]
    w = counterexample_weight(nodes)[:, None]
    normal = (1.0 - w) * _gauss_cells(edges[None, :-1] - 0.5 * x, edges[None, 1:] - 0.5 * x)
    # uniform jump component: overlap of (e^{x^2}, e^{x^2}+1) with each cell
    with np.errstate(over="ignore"):
        base = np.exp(np.square(nodes))[:, None]
    overlap = np.clip(np.minimum(edges[None, 1:], base + 1.0) - np.maximum(edges[None, :-1], base), 0.0, None)
    Q = normal + w * overlap
    np.fill_diagonal(Q, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        back = pi_cells[None, :] * Q.T / pi_cells[:, None]
    A = np.minimum(Q, back)
    A = np.where(Q > 0, A, 0.0)
    kernel = CounterexampleProposal()
    leaked = np.array([_leak_mass(kernel, target, xi, None, lo_y, hi_y, tol) for xi in nodes])
    i, j = np.nonzero(A)
    return _assemble(N, [i], [j], [A[i, j]], diag_extra=None), leaked


def _assemble(n, rows, cols, vals, diag_extra=None, twin_flip=None):
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
    v = np.concatenate(vals) if vals else np.zeros(0)
    off = sp.csr_matrix((v, (r, c)), shape=(n, n))
    off.sum_duplicates()
    if twin_flip is not None:
        states = np.arange(n)
        twins = states ^ 1
        off = off + sp.csr_matrix((twin_flip, (states, twins)), shape=(n, n))
    # whatever is not moved elsewhere stays put
    diag = 1.0 - np.asarray(off.sum(axis=1)).ravel()
    if np.any(diag < -1e-12):
        raise NumericFailure("negative holding probability while assembling operator",
                             best_estimate=float(diag.min()), row=int(np.argmin(diag)))
    mat = off + sp.diags(np.maximum(diag, 0.0), format="csr")
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return mat.tocsr()


def evolve(op, x0, n, p0=None):
    """Law after ``n`` steps started from the node nearest ``x0`` (and ``p0``)."""
    if n < 0:
        raise UsageError("n must be non-negative")
    dist = np.zeros(op.n_states)
    dist[op.state_index(x0, p0)] = 1.0
    mt = op.transpose
    for _ in range(int(n)):
        dist = mt @ dist
    return dist


def tv_to_target(dist, op):
    """Total variation between ``dist`` (on grid states) and the target.

    ``0.5 * (sum_j |dist_j - pi(cell_j)| + pi(outside))``: the target mass
    outside the grid is counted as entirely missed, so this is the exact TV
    between the cell-valued law and the untruncated target.
    """
    dist = np.asarray(dist, dtype=float)
    if dist.shape != op.pi_cells.shape:
        raise UsageError("distribution does not live on the operator's state space")
    return 0.5 * (float(np.abs(dist - op.pi_cells).sum()) + op.tail_mass)


@dataclass
class TvCurve:
    n: np.ndarray
    tv: np.ndarray
    leaked_bound: np.ndarray
    tail_mass: float
    #: first scheduled n inside a fit window where TV < 10x truncation error
    unresolved_n: int = None

    def rows(self):
        return [(int(a), float(b), float(c)) for a, b, c in zip(self.n, self.tv, self.leaked_bound)]


def tv_curve(op, x0, n_schedule, p0=None):
    """TV to the target along an increasing schedule of step counts.

    ``leaked_bound[k]`` is the expected leaked mass accumulated over the
    first ``n_schedule[k]`` steps, a bound on the truncation error of the
    grid law at that time.
    """
    sched = np.asarray(n_schedule, dtype=int)
    if sched.ndim != 1 or sched.size == 0 or np.any(np.diff(sched) <= 0) or sched[0] < 0:
        raise UsageError("n_schedule must be a strictly increasing sequence of step counts")
    dist = np.zeros(op.n_states)
    dist[op.state_index(x0, p0)] = 1.0
    mt = op.transpose
    leaked = op.leaked
    tvs, bounds = [], []
    acc_leak = 0.0
    step = 0
    for target_n in sched:
        while step < target_n:
            acc_leak += float(leaked @ dist)
            dist = mt @ dist
            step += 1
        tvs.append(tv_to_target(dist, op))
        bounds.append(acc_leak)
    return TvCurve(sched, np.array(tvs), np.array(bounds), op.tail_mass)


def geometric_schedule(lo, hi, per_decade=10):
    """Distinct integers spaced geometrically over ``[lo, hi]``."""
    k = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.unique(np.round(np.geomspace(lo, hi, k)).astype(int))


def estimate_polynomial_rate(op, x0, n_schedule, window, p0=None, return_curve=False,
                             strict=True):
    """Fit ``log TV(P^n(start, .), pi)`` against ``log n`` over ``window``.

    If, inside the window, the TV drops below ten times the truncation error
    (tail mass plus accumulated leak) the rate is not fully resolvable on
    this grid. With ``strict=True`` that raises :class:`NumericFailure`;
    otherwise the fit proceeds and the first such ``n`` is stored as
    ``curve.unresolved_n``.
    """
    lo, hi = window
    sched = np.asarray(n_schedule)
    if lo < sched.min() or hi > sched.max():
        raise UsageError("window must lie inside the schedule")
    curve = tv_curve(op, x0, sched, p0)
    inside = (curve.n >= lo) & (curve.n <= hi)
    trunc = curve.tail_mass + curve.leaked_bound
    bad = inside & (curve.tv < 10.0 * trunc)
    if np.any(bad):
        n_bad = int(curve.n[np.argmax(bad)])
        curve.unresolved_n = n_bad
    if np.any(bad) and strict:
        raise NumericFailure(
            f"TV falls below 10x truncation error at n={n_bad}; rate not resolvable at L={op.L}",
            best_estimate=None, n=n_bad, curve=curve,
        )
    fit = fit_power_law(curve.n, curve.tv, window)
    if return_curve:
        return fit, curve
    return fit


def is_reversible(op, rtol=1e-9):
    """Detailed balance ``pi_i M_ij = pi_j M_ji`` relative to row flux."""
    if op.lifted:
        return False
    flux = sp.diags(op.pi_grid) @ op.matrix
    diff = abs(flux - flux.T)
    scale = np.maximum(op.pi_grid, 1e-300)
    worst = np.asarray(diff.max(axis=1).todense()).ravel() / scale
    return bool(np.all(worst <= rtol))


def spectral_gap(op, rtol=1e-9):
    """``1 - |lambda_2|`` of a reversible operator.

    The matrix is symmetrized as ``D^{1/2} M D^{-1/2}`` with ``D = diag(pi)``
    and diagonalized densely (sparse Lanczos above 4000 states).
    """
    if op.lifted:
        raise UsageError("spectral_gap needs a reversible (unlifted) operator")
    if not is_reversible(op, rtol):
        raise UsageError("operator is not reversible with respect to pi_grid")
    s = np.sqrt(op.pi_grid)
    sym = sp.diags(s) @ op.matrix @ sp.diags(1.0 / s)
    sym = 0.5 * (sym + sym.T)
    n = sym.shape[0]
    if n <= 4000:
        lam = np.linalg.eigvalsh(sym.toarray())
    else:
        from scipy.sparse.linalg import eigsh
        lam = eigsh(sym.tocsc(), k=6, which="LM", return_eigenvectors=False)
    mags = np.sort(np.abs(lam))[::-1]
    if mags.size < 2:
        return 1.0
    return float(min(max(1.0 - mags[1], 0.0), 1.0))
