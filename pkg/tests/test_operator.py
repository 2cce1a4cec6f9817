import math

import numpy as np
import pytest
import scipy.sparse as sp

from ergolab import _integrals
from ergolab.errors import NumericFailure, UsageError
from ergolab.kernels import CounterexampleProposal, GwmKernel, RwmProposal
from ergolab.operator import (GridOperator, build_grid_operator, estimate_polynomial_rate,
                              evolve, geometric_schedule, is_reversible, matched_scale,
                              spectral_gap, tv_curve, tv_to_target)
from ergolab.targets import PolyTailTarget, SquaredGaussianTarget

SG = SquaredGaussianTarget()
PT = PolyTailTarget(2, 1)


@pytest.fixture(scope="module")
def rwm_sg():
    return build_grid_operator(RwmProposal(1.0), SG, 8, 801)


@pytest.fixture(scope="module")
def gwm_sg():
    return build_grid_operator(GwmKernel(1.0, lazy=0.2), SG, 8, 801)


@pytest.fixture(scope="module")
def gwm_pt():
    return build_grid_operator(GwmKernel(1.0), PT, 200, 401)


def test_rows_are_stochastic(rwm_sg, gwm_sg, gwm_pt):
    for op in (rwm_sg, gwm_sg, gwm_pt):
        assert np.max(np.abs(op.row_sums() - 1.0)) < 1e-9
        assert op.matrix.min() >= 0
        assert np.all(op.leaked >= 0)


def test_rwm_detailed_balance(rwm_sg):
    flux = sp.diags(rwm_sg.pi_grid) @ rwm_sg.matrix
    diff = abs(flux - flux.T).max()
    assert diff <= 1e-9 * rwm_sg.pi_grid.max()
    assert is_reversible(rwm_sg)


def test_rwm_bandwidth(rwm_sg):
    coo = rwm_sg.matrix.tocoo()
    band = np.max(np.abs(coo.row - coo.col))
    assert band <= math.ceil(8 * 1.0 / rwm_sg.delta) + 1


def test_gwm_skew_detailed_balance(gwm_sg):
    # mu(x,p) M((x,p)->(y,p)) = mu(y,-p) M((y,-p)->(x,-p)) for moves
    M = gwm_sg.matrix.tocsr()
    mu = gwm_sg.pi_grid
    coo = M.tocoo()
    moves = (coo.row // 2 != coo.col // 2)
    i, j, v = coo.row[moves], coo.col[moves], coo.data[moves]
    back = np.asarray(M[j ^ 1, i ^ 1]).ravel()
    lhs = mu[i] * v
    rhs = mu[j ^ 1] * back
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * mu.max()
    assert not is_reversible(gwm_sg)


def test_gwm_rejection_goes_to_twin():
    op = build_grid_operator(GwmKernel(1.0), SG, 8, 801)
    i = op.state_index(3.0, 1)  # outward from x = 3: mostly rejected
    row = op.matrix.getrow(i).toarray().ravel()
    twin = i ^ 1
    # continuous rejection probability from (3, +1), by quadrature
    reject = 1 - _integrals.acceptance(GwmKernel(1.0), SG, 3.0, p=1)
    assert row[twin] == pytest.approx(reject, abs=1e-3)
    # no mass lands on the opposite momentum except at the twin
    others = row[1::2] if i % 2 == 0 else row[0::2]
    assert np.count_nonzero(others) == 1


def test_evolve_basics(rwm_sg):
    d0 = evolve(rwm_sg, 0.0, 0)
    assert d0.sum() == 1.0 and d0[rwm_sg.state_index(0.0)] == 1.0
    d1 = evolve(rwm_sg, 0.5, 1)
    assert np.array_equal(d1, rwm_sg.matrix.getrow(rwm_sg.state_index(0.5)).toarray().ravel())


def test_stationarity(rwm_sg, gwm_sg, gwm_pt):
    for op in (rwm_sg, gwm_sg, gwm_pt):
        moved = op.transpose @ op.pi_grid
        assert 0.5 * np.abs(moved - op.pi_grid).sum() < 1e-8


def test_tv_of_grid_target_is_tail_mass(gwm_pt, rwm_sg):
    for op in (gwm_pt, rwm_sg):
        assert tv_to_target(op.pi_grid, op) == pytest.approx(op.tail_mass, abs=1e-15)


def test_tv_of_point_mass(rwm_sg):
    d = evolve(rwm_sg, 0.0, 0)
    i = rwm_sg.state_index(0.0)
    assert tv_to_target(d, rwm_sg) >= 1 - rwm_sg.pi_cells[i] - 1e-15


def test_tv_non_increasing(gwm_pt):
    curve = tv_curve(gwm_pt, 0.0, np.arange(0, 400, 7), p0=1)
    assert np.all(np.diff(curve.tv) <= 1e-10)
    assert np.all(np.diff(curve.leaked_bound) >= 0)


def test_tv_rejects_foreign_vector(rwm_sg):
    with pytest.raises(UsageError):
        tv_to_target(np.ones(3), rwm_sg)


def test_grid_validation():
    with pytest.raises(UsageError):
        build_grid_operator(RwmProposal(1.0), SG, 8, 800)
    with pytest.raises(UsageError):
        build_grid_operator(RwmProposal(1.0), SG, 8, 51)
    with pytest.raises(NumericFailure):
        build_grid_operator(RwmProposal(1.0), SG, 8, 801, leak_tol=1e-6)


def test_matched_scale_moments():
    from ergolab.operator import _increment_cells
    for delta in (1.0, 0.5, 0.1):
        s2 = matched_scale(1.0, delta, False)
        ks, q = _increment_cells(1.0, delta, s2, False)
        assert np.sum((ks * delta) ** 2 * q) == pytest.approx(1.0, rel=1e-12)
        s1 = matched_scale(1.0, delta, True)
        ks, h = _increment_cells(1.0, delta, s1, True)
        assert np.sum(ks * delta * h) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-12)
    # fine grids need no correction
    assert matched_scale(1.0, 0.01, False) == pytest.approx(1.0, abs=1e-4)


def test_spectral_gap_two_state():
    op = GridOperator.from_matrix([[0.7, 0.3], [0.3, 0.7]], [0.5, 0.5])
    assert spectral_gap(op) == pytest.approx(0.6, abs=1e-12)


def test_spectral_gap_identity():
    op = GridOperator.from_matrix(np.eye(5), np.ones(5))
    assert spectral_gap(op) == pytest.approx(0.0, abs=1e-12)


def test_spectral_gap_rejects_lifted(gwm_sg):
    with pytest.raises(UsageError):
        spectral_gap(gwm_sg)


def test_light_tail_decay_is_geometric(rwm_sg):
    sched = np.arange(5, 80, 5)
    curve = tv_curve(rwm_sg, 3.0, sched)
    gap = spectral_gap(rwm_sg)
    logs = np.log(curve.tv)
    # log TV is linear in n with slope ~ log(1 - gap), not in log n
    slope_n = np.polyfit(sched[4:], logs[4:], 1)[0]
    assert slope_n == pytest.approx(math.log(1 - gap), rel=0.1)
    # a power law fits the same curve badly
    fit = estimate_polynomial_rate(rwm_sg, 3.0, sched, (5, 75))
    assert fit.r_squared < 0.95


def test_rate_non_strict_records_unresolved():
    op = build_grid_operator(GwmKernel(1.0), PT, 100, 201)
    sched = geometric_schedule(10, 3000)
    with pytest.raises(NumericFailure):
        estimate_polynomial_rate(op, 0.0, sched, (10, 3000), p0=1)
    fit, curve = estimate_polynomial_rate(op, 0.0, sched, (10, 3000), p0=1,
                                          return_curve=True, strict=False)
    assert curve.unresolved_n is not None and fit.n_points >= 5


def test_counterexample_operator_small():
    op = build_grid_operator(CounterexampleProposal(), SG, 4, 201)
    assert np.max(np.abs(op.row_sums() - 1)) < 1e-9
    assert is_reversible(op)
    assert 0 < spectral_gap(op) < 1


def test_n_refinement_polytail():
    # doubling N on a reduced polynomial-tail grid moves TV by < 5%
    sched = geometric_schedule(20, 400, 6)
    tvs = []
    for N in (401, 801):
        op = build_grid_operator(GwmKernel(1.0), PT, 200, N)
        tvs.append(tv_curve(op, 0.0, sched, p0=1).tv)
    assert np.max(np.abs(tvs[1] / tvs[0] - 1)) < 0.05
