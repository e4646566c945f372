"""Compare the numba kernels with their numpy reference implementations.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]

Each kernel is run once to trigger compilation and then timed ``repeat``
times per backend. The maximum deviation between the two backends is
reported next to the timings.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from robust_consensus import kernels
from robust_consensus.gpc import GpcBasis, default_moments, project_initial
from robust_consensus.model import Gaussian, ModelParams, Uniform, UncertaintySpec
from robust_consensus.riccati import solve_finite_n_gains
from robust_consensus.sim import draw_inputs, mode_system


def best_of(fn, repeat: int) -> tuple[float, object]:
    times, result = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return min(times), result


def max_dev(a, b) -> float:
    if isinstance(a, tuple):
        return max(max_dev(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def cases(quick: bool):
    unc = UncertaintySpec([Gaussian(0.0, 5.0), Uniform(-5.0, 5.0)])
    rng = np.random.default_rng(0)

    n = 100
    params = ModelParams(n_agents=n, p_bar=1.0, nu=0.01, z=2)
    gains = solve_finite_n_gains(params)
    basis = GpcBasis(unc, 10)
    system = mode_system(params, unc, basis, gains, "feedback", default_moments(basis))
    x = project_initial(rng.uniform(10, 20, (n, 1)), basis).data
    steps = 100 if quick else 1000
    modes_args = (x, system.a_self, system.a_mean, system.forcing, system.b_self, system.b_mean,
                  system.b_const, 1e-3, steps)
    yield "advance_modes (N=100, P=121, %d steps)" % steps, kernels._advance_modes_nb, kernels._advance_modes_np, modes_args

    samples = 2000 if quick else 20000
    theta = draw_inputs(unc, samples, 1, seed=0).sum(axis=1)
    ext = np.zeros((100, 4, n, 1))
    samp_args = (np.ascontiguousarray(rng.uniform(10, 20, (n, 1))), theta, 1.0, 0.01, gains.k_d, gains.k_o,
                 True, ext, 0.0, 1e-2, 100, 10, kernels.SAMPLE_CHUNK)
    yield "sampled_moments (%d samples, 100 steps)" % samples, kernels._sampled_moments_nb, kernels._sampled_moments_np, samp_args

    particles = 2000 if quick else 10000
    xs = rng.normal(size=(particles, basis.n_modes))
    nodes = np.array(np.meshgrid(np.linspace(-3, 3, 10), np.linspace(-5, 5, 10))).reshape(2, -1).T
    phi = basis.eval_modes(nodes)
    yield "node_histograms (%d particles, 100 nodes)" % particles, kernels._node_histograms_nb, kernels._node_histograms_np, (xs, phi, -20.0, 20.0, 50)


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = parser.parse_args(argv)
    print(f"{'kernel':48s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max dev':>10s}")
    for name, nb, npy, fargs in cases(args.quick):
        nb(*fargs)  # compile
        t_nb, r_nb = best_of(lambda: nb(*fargs), args.repeat)
        t_np, r_np = best_of(lambda: npy(*fargs), args.repeat)
        print(f"{name:48s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {max_dev(r_nb, r_np):10.2e}")


if __name__ == "__main__":
    main()
