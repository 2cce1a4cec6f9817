"""A proposal that is accepted often yet admits no geometric drift certificate.

The mixture proposal halves the current point with high probability and
otherwise jumps far into the tail. Acceptance rises towards one and the
discretised chain has a large spectral gap. Even so, the rare jumps make the
proposal's own drift of V(x) = exp(x^2 / 4) explode.
"""

from ergolab.diagnostics import (LyapunovSpec, acceptance_components, drift_ratio,
                                 log_drift_components)
from ergolab.kernels import CounterexampleProposal
from ergolab.operator import build_grid_operator, spectral_gap
from ergolab.targets import SquaredGaussianTarget


def main():
    target, kernel = SquaredGaussianTarget(), CounterexampleProposal()
    V = LyapunovSpec("exp_quadratic", c=0.25)
    for x in (3.0, 6.0, 10.0):
        comps = acceptance_components(kernel, target, x)
        print(f"x={x:4.1f}  acceptance {sum(comps.values()):.4f}  "
              f"PV/V {drift_ratio(kernel, target, V, x):.4f}  "
              f"log QV/V jump part {log_drift_components(kernel, target, V, x)['jump']:.3e}")
    op = build_grid_operator(kernel, target, 6.0, 1201)
    print(f"spectral gap on [-6, 6]: {spectral_gap(op):.4f}")


if __name__ == "__main__":
    main()
