#!/usr/bin/env python3
"""Run the summability-condition checkers on a gallery of small models and
print one verdict line per (model, condition) pair.

This is the analytic side of the toolkit: no sampling, every term exact or
certified by a tail bound.
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from lilab.filtration import hanbis_check, projection_norms  # noqa: E402
from lilab.operators import (  # noqa: E402
    FourierObservable, cond_ddm, cond_dynsys, markov_condition,
    phi_mixing_coeffs)
from lilab.processes import (  # noqa: E402
    InnovationSpec, LinearProcess, MarkovChainFn)


def show(name: str, report) -> None:
    total = getattr(report, "total", None)
    extra = f" total = {total:.6f}" if total is not None else ""
    print(f"{name:44s} {report.verdict:12s}{extra}")


def main() -> int:
    lin = LinearProcess.scalar([1.0, 0.5], InnovationSpec("rademacher"))
    chain = MarkovChainFn(np.array([[0.75, 0.25], [0.25, 0.75]]),
                          np.array([0.5, 0.5]), np.array([1.0, -1.0]))
    circ = np.roll(np.eye(3), 1, axis=1)
    uni3 = np.ones(3) / 3
    f3 = np.array([1.0, -0.5, -0.5])

    show("linear(1, 0.5): projection summability",
         projection_norms(lin, 2.0))
    show("linear(1, 0.5): two-sided tail condition", hanbis_check(lin, 64))
    show("2-state chain: projection summability",
         projection_norms(chain, 2.0, horizon=64))
    show("2-state chain: sum ||P^n f|| / sqrt(n)",
         markov_condition(chain.kernel, chain.stationary, chain.f[:, 0],
                          "sqrt_sum", 64))
    show("3-cycle chain: sum ||P^n f|| / sqrt(n)",
         markov_condition(circ, uni3, f3, "sqrt_sum", 16))
    phi = phi_mixing_coeffs(chain.kernel, chain.stationary, chain.f[:, 0], 32)
    show("2-state chain: phi-mixing criterion (p = 2)", cond_ddm(phi, 2.0))
    obs = FourierObservable.from_table({(2 ** j,): 2.0 ** -j
                                        for j in range(6)}, torus_dim=1)
    show("doubling map, dyadic observable", cond_dynsys(obs, 10))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
