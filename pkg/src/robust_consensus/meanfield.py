"""Particle approximation of the mean-field density with chaos in the random space.

A cloud of ``N_s`` particles carries stochastic Galerkin coefficients.
At every output time the realizations at the tensor Gauss nodes are
histogrammed and the node histograms are combined into the mean and the
standard deviation of the density with respect to the inputs.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, EmptyInput
from .gpc import GpcBasis, default_moments, project_initial
from .model import ModelParams, UncertaintySpec
from .quadrature import QuadratureRule, rule_for
from .riccati import RiccatiGains
from .sim import CONTROLS, mode_system, time_grid

logger = logging.getLogger(__name__)

WEIGHT_CONVENTIONS = ("probability", "density_times_weight")


@dataclass(frozen=True)
class Histogram:
    """Density-normalized histogram: ``sum(mass * widths) == 1``."""

    edges: np.ndarray
    mass: np.ndarray

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def integral(self) -> float:
        return float(np.sum(self.mass * self.widths))

    def first_moment(self) -> float:
        return float(np.sum(self.centers * self.mass * self.widths))


@dataclass(frozen=True)
class DensityMoments:
    """Mean and standard deviation of the density over the inputs.

    ``mean_density`` and ``std_density`` have shape ``(T, bins)`` on the
    fixed ``edges``; ``particle_mean`` is the first moment of the density
    taken directly from the chaos coefficients (mean of the zero mode over
    particles), ``clipped`` the number of node realizations that fell
    outside the histogram range.
    """

    times: np.ndarray
    edges: np.ndarray
    mean_density: np.ndarray
    std_density: np.ndarray
    particle_mean: np.ndarray
    clipped: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def mean_histogram(self, index: int) -> Histogram:
        return Histogram(edges=self.edges, mass=self.mean_density[index])

    def mass(self) -> np.ndarray:
        """Bin integral of the mean density at every output time."""
        return self.mean_density.sum(axis=1) * self.width

    def first_moment(self) -> np.ndarray:
        """First moment of the mean density at every output time."""
        return (self.mean_density * self.centers).sum(axis=1) * self.width


def histogram(samples, bins: int, range: tuple[float, float]) -> Histogram:
    """Density histogram on equal bins; samples outside ``range`` go to the end bins."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise EmptyInput("histogram of an empty sample")
    lo, hi = map(float, range)
    if bins < 1 or not np.isfinite(lo) or not np.isfinite(hi) or not lo < hi:
        raise ValueError(f"invalid histogram geometry bins={bins}, range={range}")
    width = (hi - lo) / bins
    idx = np.clip(np.floor((samples - lo) / width), 0, bins - 1).astype(np.int64)
    counts = np.bincount(idx, minlength=bins)
    return Histogram(edges=np.linspace(lo, hi, bins + 1), mass=counts / (samples.size * width))


def tensor_nodes(rules: Sequence[QuadratureRule], convention: str = "probability", components=None):
    """Tensor-product nodes ``(n_nodes, Z)`` and their combination weights.

    With ``"probability"`` the weights are products of the probability
    weights of each rule and sum to one. ``"density_times_weight"``
    additionally multiplies by the input densities at the nodes, a literal
    reading of the combination formula that double counts the density; it
    is kept only to demonstrate that discrepancy and needs ``components``.
    """
    if convention not in WEIGHT_CONVENTIONS:
        raise ConfigError(f"unknown weight convention {convention!r}")
    nodes = np.array(list(itertools.product(*[r.nodes for r in rules])))
    weights = np.array([np.prod(w) for w in itertools.product(*[r.weights for r in rules])])
    if convention == "density_times_weight":
        if components is None:
            raise ConfigError("density weights need the input distributions")
        for j, c in enumerate(components):
            weights = weights * c.pdf(nodes[:, j])
    return nodes, weights


def density_moments(node_densities: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and standard deviation over nodes, bin by bin.

    Parameters
    ----------
    node_densities : (n_nodes, bins)
    weights : (n_nodes,)

    Returns
    -------
    mean, std : arrays of shape (bins,); the variance is clamped at zero
    before the square root.
    """
    node_densities = np.asarray(node_densities, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if node_densities.shape[0] != weights.shape[0]:
        raise ValueError("one weight per node histogram is required")
    mean = weights @ node_densities
    second = weights @ (node_densities * node_densities)
    var = second - mean * mean
    return mean, np.sqrt(np.maximum(var, 0.0))


def histogram_range(values: np.ndarray, pad: float = 3.0) -> tuple[float, float]:
    """``[min - pad * spread, max + pad * spread]`` with ``spread = max - min``."""
    lo, hi = float(np.min(values)), float(np.max(values))
    spread = hi - lo
    if spread <= 0:
        spread = max(1.0, abs(lo))
    return lo - pad * spread, hi + pad * spread


def run_mc_sg(
    params: ModelParams,
    unc: UncertaintySpec,
    basis: GpcBasis,
    gains: RiccatiGains,
    control: str,
    T: float,
    dt: float,
    bins: int,
    v0,
    L: int,
    n_snapshots: int = 10,
    convention: str = "probability",
) -> DensityMoments:
    """Monte-Carlo particles with chaos coefficients, histogrammed at Gauss nodes.

    ``params.n_agents`` is the particle count ``N_s`` and ``v0`` the sampled
    initial positions. Only scalar states (``d = 1``) are supported.
    """
    unc.check(params)
    if params.dim != 1:
        raise ConfigError("the density reconstruction needs a scalar state (dim = 1)")
    if control not in CONTROLS:
        raise ConfigError(f"unknown control {control!r}")
    if tuple(basis.components) != tuple(unc.components):
        raise ConfigError("chaos basis does not match the uncertainty specification")
    if bins < 1 or L < 1:
        raise ConfigError(f"bins and L must be positive, got bins={bins}, L={L}")
    v0 = np.asarray(v0, dtype=float).reshape(params.n_agents, 1)

    moments = default_moments(basis)
    system = mode_system(params, unc, basis, gains, control, moments)
    rules = [rule_for(c, L) for c in unc.components]
    nodes, weights = tensor_nodes(rules, convention, unc.components)
    phi = basis.eval_modes(nodes)
    lo, hi = histogram_range(v0)
    edges = np.linspace(lo, hi, bins + 1)

    n_steps, stride, h = time_grid(T, dt, n_snapshots)
    x = project_initial(v0, basis).data
    means, stds, firsts, clipped = [], [], [], []
    for snap in range(n_snapshots + 1):
        if snap:
            x = kernels.advance_modes(x, system, h, stride)
        dens, clip = kernels.node_histograms(x[:, :, 0], phi, lo, hi, bins)
        m, s = density_moments(dens, weights)
        means.append(m)
        stds.append(s)
        firsts.append(float(x[:, 0, 0].mean()))
        clipped.append(int(clip.sum()))
        if clip.sum():
            logger.info("t=%.4g: %d node realizations clipped into the end bins", snap * stride * h, clip.sum())
    return DensityMoments(
        times=np.linspace(0.0, n_steps * h, n_snapshots + 1),
        edges=edges,
        mean_density=np.array(means),
        std_density=np.array(stds),
        particle_mean=np.array(firsts),
        clipped=np.array(clipped),
    )
