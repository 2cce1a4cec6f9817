"""Displacement growth and hitting times for the two walks.

The random walk spreads like t^(1/2) while the guided walk, which keeps its
direction until a rejection, travels like t. On a light-tailed target the
guided walk behaves like a half-lazy random walk running downhill, so it needs
about half as many steps as the random walk to reach the mode, and a
synchronous coupling of the two rarely separates far from the mode.
"""

from ergolab.diagnostics import coupled_rwm_lazy_gwm, displacement_exponent, hitting_time_ratio
from ergolab.kernels import GwmKernel, RwmProposal
from ergolab.numerics import rng_stream
from ergolab.targets import ConvexPotentialTarget, PolyTailTarget


def main():
    heavy, light = PolyTailTarget(2, 1), ConvexPotentialTarget(2, 1)
    for name, kernel in (("random walk", RwmProposal(1.0)), ("guided walk", GwmKernel(1.0))):
        rep = displacement_exponent(kernel, heavy, 1e3, 10_000, 200, (10, 1000), rng_stream(1))
        print(f"{name:12s} E|X_t - x0| ~ t^{rep.fit.slope:.3f}")
    h = hitting_time_ratio(light, 500.0, 10.0, 1.0, 1000, rng_stream(2))
    print(f"hitting-time ratio random/guided from 500: {h.ratio:.3f} +- {h.stderr:.3f}")
    for x0 in (5.0, 20.0, 100.0):
        est = coupled_rwm_lazy_gwm(light, x0, 5, 1.0, 100_000, rng_stream(3))
        print(f"x0={x0:5.0f}  P(chains differ after 5 steps) = {est.p_decouple:.4f}")


if __name__ == "__main__":
    main()
