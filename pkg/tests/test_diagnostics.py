import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergolab import _integrals
from ergolab.diagnostics import (LyapunovSpec, acceptance_components, coupled_rwm_lazy_gwm,
                                 displacement_exponent, drift_ratio, gwm_polynomial_drift_check,
                                 hitting_time_ratio, lemma_a2_audit, log_drift_components,
                                 one_sided_acceptance, theorem3_D, total_acceptance)
from ergolab.errors import CheckFailed, UsageError
from ergolab.kernels import CounterexampleProposal, GwmKernel, RwmProposal
from ergolab.numerics import rng_stream
from ergolab.targets import ConvexPotentialTarget, PolyTailTarget, SquaredGaussianTarget

SG = SquaredGaussianTarget()
PT = PolyTailTarget(2, 1)
CP = ConvexPotentialTarget(2, 1)
CONST = LyapunovSpec("constant")
CE = CounterexampleProposal()


class FlatTarget(SquaredGaussianTarget):
    """Improper flat density: every move is accepted."""

    def _logpdf(self, x):
        return np.zeros(np.shape(x))

    def logpdf_scalar(self, x):
        return 0.0


# -- Lyapunov specs -------------------------------------------------------------

def test_lyapunov_guards():
    with pytest.raises(UsageError):
        LyapunovSpec("guided_poly", delta=0.1, beta=0.8)
    with pytest.raises(UsageError):
        LyapunovSpec("constant", value=0.5)
    with pytest.raises(UsageError):
        LyapunovSpec("cubic")
    V = LyapunovSpec("guided_poly", delta=1.0, beta=0.2)
    with pytest.raises(UsageError):
        V.check_target(PT)  # beta below 1/(r+1)


def test_alpha_star():
    V = LyapunovSpec("guided_poly", delta=1.0, beta=0.8)
    assert V.alpha_star(2) == pytest.approx(7 / 12, abs=1e-15)


# -- drift ratio ----------------------------------------------------------------

@pytest.mark.parametrize("kernel,target,x,p", [
    (RwmProposal(1.0), PT, 3.0, None),
    (RwmProposal(0.5), CP, -4.0, None),
    (GwmKernel(1.0, 0.3), CP, 2.0, 1),
    (GwmKernel(2.0), PT, -50.0, -1),
    (CE, SG, 3.0, None),
    (CE, SG, 30.0, None),
])
def test_drift_ratio_constant_is_one(kernel, target, x, p):
    assert drift_ratio(kernel, target, CONST, x, p) == pytest.approx(1.0, abs=1e-12)


def _mixture_density(x, y):
    # independent restatement: (1 - w) N(y; x/2, 1) + w U[e^{x^2}, e^{x^2} + 1]
    w = 1 / (2 + abs(x))
    lo = math.exp(min(x * x, 700.0))
    jump = w if lo <= y <= lo + 1 else 0.0
    return (1 - w) * math.exp(-0.5 * (y - x / 2) ** 2) / math.sqrt(2 * math.pi) + jump


def test_counterexample_drift_ratio_at_six():
    # oracle by scipy quadrature: PV/V = 1 - acc + int alpha q V(y)/V(x) dy; the
    # jump component sits near e^36 where pi(y) underflows, so only the normal
    # component contributes
    from scipy.integrate import quad
    x = 6.0
    w = 1 / (2 + x)

    def alpha(y):
        num = math.exp(-y * y) * _mixture_density(y, x)
        den = math.exp(-x * x) * _mixture_density(x, y)
        return min(1.0, num / den)

    def qn(y):
        return (1 - w) * math.exp(-0.5 * (y - x / 2) ** 2) / math.sqrt(2 * math.pi)

    pts = [-1.339, -1.269, 1.269, 1.339, 3.0]
    acc = quad(lambda y: alpha(y) * qn(y), -20, 20, points=pts, limit=400, epsabs=1e-13)[0]
    moved = quad(lambda y: alpha(y) * qn(y) * math.exp((y * y - x * x) / 4), -20, 20,
                 points=pts, limit=400, epsabs=1e-13)[0]
    V = LyapunovSpec("exp_quadratic", c=0.25)
    assert total_acceptance(CE, SG, x) == pytest.approx(acc, abs=1e-8)
    assert drift_ratio(CE, SG, V, x) == pytest.approx(1 - acc + moved, abs=1e-8)


def test_counterexample_raw_jump_term_at_three():
    V = LyapunovSpec("exp_quadratic", c=0.25)
    comps = log_drift_components(CE, SG, V, 3.0)
    # closed form over the jump interval: log w + log int_0^1 exp((e^9+u)^2/4) du - 9/4
    base = math.exp(9.0)
    lead = math.log(1 / 5) + (base + 1) ** 2 / 4 - 9 / 4
    # int_0^1 exp(g(u)) with g' ~ (base+1)/2 at the top: subtract log g'
    approx = lead - math.log((base + 1) / 2)
    assert comps["jump"] > 1e6
    assert comps["jump"] == pytest.approx(approx, rel=1e-9)
    assert drift_ratio(CE, SG, V, 3.0, metropolized=False, log=True) == pytest.approx(
        comps["jump"], rel=1e-12)


def test_drift_integrand_examples():
    assert theorem3_D(RwmProposal(1.0), FlatTarget(), CONST, 2.0) == 0.0
    d = theorem3_D(RwmProposal(1.0), PT, CONST, 1e4)
    assert d == pytest.approx(total_acceptance(RwmProposal(1.0), PT, 1e4) - 1, abs=1e-12)
    assert abs(d) < 0.05
    assert theorem3_D(RwmProposal(1.0), CP, CONST, 20.0) == pytest.approx(-0.49, abs=0.01)


@settings(max_examples=25, deadline=None)
@given(st.floats(-30, 30), st.sampled_from([0.3, 1.0, 3.0]))
def test_drift_integrand_non_positive(x, eps):
    V = LyapunovSpec("exp_quadratic", c=0.1)
    assert theorem3_D(RwmProposal(eps), CP, V, x) <= 1e-12


def test_gwm_drift_certificate():
    rep = gwm_polynomial_drift_check(PT, 1.0, 1.0, 0.8, 50, 500, grid=10)
    assert rep.check_passed and rep.c > 0
    assert rep.alpha_star == pytest.approx(7 / 12)
    assert rep.smallest_negative_x == 50.0
    # margins rescaled by V^(alpha* - 1) reproduce drift_ratio - 1
    V = LyapunovSpec("guided_poly", delta=1.0, beta=0.8)
    lv = np.array([float(V.log_v(PT, x, p)) for x, p in zip(rep.x, rep.p)])
    lhs = rep.margin * np.exp((rep.alpha_star - 1) * lv)
    assert np.max(np.abs(lhs - np.expm1(rep.log_ratio))) <= 2e-10


def test_gwm_drift_check_guards():
    with pytest.raises(UsageError):
        gwm_polynomial_drift_check(PT, 1.0, 0.1, 0.8, 50, 500)
    with pytest.raises(UsageError):
        gwm_polynomial_drift_check(CP, 1.0, 1.0, 0.8, 50, 500)
    with pytest.raises(UsageError):
        gwm_polynomial_drift_check(PT, 1.0, 1.0, 0.8, 0.5, 500)


# -- acceptance integrals -------------------------------------------------------

def test_one_sided_acceptance_convex():
    vals = [one_sided_acceptance(CP, 1.0, x, "away_from_origin") for x in (5, 10, 20, 40)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[2] < 0.011
    # Gaussian oracle: alpha = exp(-(2xz + z^2)) for outward z > 0; completing
    # the square gives erfcx(w) / (2 sqrt 3) with w = 2x / sqrt(6)
    from scipy.special import erfcx
    x = 20.0
    s = math.sqrt(3.0)
    oracle = 0.5 / s * erfcx(2 * x / (s * math.sqrt(2)))
    assert vals[2] == pytest.approx(oracle, rel=1e-9)


def test_one_sided_acceptance_flat_tail():
    assert one_sided_acceptance(PT, 1.0, 1e4, "away_from_origin") == pytest.approx(0.5, abs=0.01)


def test_one_sided_sum_is_total():
    for x in (0.0, 2.5, -7.0):
        a = one_sided_acceptance(CP, 1.0, x, "away_from_origin")
        b = one_sided_acceptance(CP, 1.0, x, "toward_origin")
        assert a + b == pytest.approx(total_acceptance(RwmProposal(1.0), CP, x), abs=2e-10)
    with pytest.raises(UsageError):
        one_sided_acceptance(CP, 1.0, 1.0, "left")


def test_total_acceptance_counterexample():
    vals = [total_acceptance(CE, SG, x) for x in (3.0, 6.0, 10.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] >= 0.9
    assert acceptance_components(CE, SG, 10.0)["jump"] < 1e-6


def test_total_acceptance_small_eps():
    assert total_acceptance(RwmProposal(1e-4), CP, 1.0) > 0.999


def test_rwm_acceptance_gaussian_closed_form():
    # E min(1, exp(-Z^2)) at the mode of exp(-x^2) with eps = 1 is 1/sqrt(3)
    assert _integrals.acceptance(RwmProposal(1.0), SG, 0.0) == pytest.approx(1 / math.sqrt(3),
                                                                           abs=1e-10)


# -- Monte Carlo probes ---------------------------------------------------------

def test_coupling_zero_steps():
    est = coupled_rwm_lazy_gwm(CP, 5.0, 0, 1.0, 1000, rng_stream(0))
    assert est.p_decouple == 0.0


def test_coupling_monotone_in_x0_and_n():
    ps = [coupled_rwm_lazy_gwm(CP, x0, 5, 1.0, 20_000, rng_stream(1)) for x0 in (5, 20, 100)]
    for a, b in zip(ps, ps[1:]):
        assert b.p_decouple <= a.p_decouple + 2 * math.hypot(a.stderr, b.stderr)
    by_n = [coupled_rwm_lazy_gwm(CP, 20.0, n, 1.0, 20_000, rng_stream(2)) for n in (1, 3, 6)]
    for a, b in zip(by_n, by_n[1:]):
        assert b.p_decouple >= a.p_decouple - 2 * math.hypot(a.stderr, b.stderr)


def test_coupling_first_step_oracle():
    # one step from x0 > 0 with p = -1: chains split only when Z < 0 (RWM moves
    # outward, GWM holds) and the outward move is accepted
    x0 = 5.0
    est = coupled_rwm_lazy_gwm(CP, x0, 1, 1.0, 200_000, rng_stream(3))
    oracle = one_sided_acceptance(CP, 1.0, x0, "away_from_origin")
    assert abs(est.p_decouple - oracle) < 4 * est.stderr + 1e-4


def test_coupling_guards():
    with pytest.raises(UsageError):
        coupled_rwm_lazy_gwm(CP, 0.0, 5, 1.0, 10, rng_stream(0))
    with pytest.raises(UsageError):
        coupled_rwm_lazy_gwm(PT, 5.0, 5, 1.0, 10, rng_stream(0))


def test_coupling_thread_independent():
    a = coupled_rwm_lazy_gwm(CP, 5.0, 5, 1.0, 25_000, rng_stream(4), threads=1)
    b = coupled_rwm_lazy_gwm(CP, 5.0, 5, 1.0, 25_000, rng_stream(4), threads=3)
    assert a == b


class UnitDrift:
    def vector_step(self, x, p, stream):
        stream.draw_normal(len(x))
        return x + 1.0, p


def test_displacement_unit_drift():
    rep = displacement_exponent(UnitDrift(), PT, 0.0, 1000, 100, (10, 1000), rng_stream(0))
    assert rep.fit.slope == pytest.approx(1.0, abs=1e-12)


def test_displacement_rwm_and_gwm():
    r = displacement_exponent(RwmProposal(1.0), PT, 1e3, 2000, 200, (10, 200), rng_stream(5))
    g = displacement_exponent(GwmKernel(1.0), PT, 1e3, 2000, 200, (10, 200), rng_stream(5))
    assert 0.4 <= r.fit.slope <= 0.6
    assert 0.85 <= g.fit.slope <= 1.05


def test_displacement_guards():
    with pytest.raises(UsageError):
        displacement_exponent(RwmProposal(1.0), PT, 0.0, 50, 200, (10, 50), rng_stream(0))
    with pytest.raises(UsageError):
        displacement_exponent(RwmProposal(1.0), PT, 0.0, 1000, 50, (10, 100), rng_stream(0))


def test_displacement_stuck_chain_fails():
    class Stuck:
        def vector_step(self, x, p, stream):
            return x, p

    with pytest.raises(CheckFailed):
        displacement_exponent(Stuck(), PT, 0.0, 1000, 100, (10, 1000), rng_stream(0))


def test_hitting_ratio_gwm_vs_itself():
    h = hitting_time_ratio(CP, 100.0, 10.0, 1.0, 400, rng_stream(6), numerator="gwm")
    assert abs(h.ratio - 1.0) < 4 * h.stderr


def test_hitting_ratio_invariant_under_doubling():
    a = hitting_time_ratio(CP, 100.0, 10.0, 1.0, 400, rng_stream(7))
    b = hitting_time_ratio(CP, 200.0, 10.0, 1.0, 400, rng_stream(7))
    assert abs(a.ratio - b.ratio) < 4 * math.hypot(a.stderr, b.stderr)
    assert 1.8 <= a.ratio <= 2.2


def test_hitting_ratio_step_cap():
    with pytest.raises(CheckFailed):
        hitting_time_ratio(CP, 100.0, 10.0, 1.0, 100, rng_stream(8), step_cap=20)


def test_tail_reach_audit():
    rep = lemma_a2_audit(2, 1, 3, 20, 1.0, 100_000, rng_stream(9))
    assert rep.pi_An == pytest.approx(1 / 21600, rel=1e-14)
    assert rep.reach_bound < 1e-6
    assert rep.tv_lower_bound > 0
    with pytest.raises(UsageError):
        lemma_a2_audit(2, 100, 3, 20, 1.0, 10, rng_stream(0))


def test_tail_reach_when_likely():
    # k below the half-normal mean: the sum almost surely passes k n
    rep = lemma_a2_audit(2, 1, 0.5, 20, 1.0, 20_000, rng_stream(10))
    assert rep.reach_estimate > 0.99
