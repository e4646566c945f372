"""Tensor-product polynomial chaos and the Galerkin-projected agent dynamics.

Gaussian inputs use probabilists' Hermite polynomials ``He_k`` of
``xi = (theta - mu) / sigma``; uniform inputs use Legendre polynomials
``P_k`` of ``eta = (2 theta - a - b) / (b - a)``. Neither family is
normalized, so moments carry the factors ``E[Phi_k^2]``.

Coefficients are stored as arrays of shape ``(N, P, d)`` where ``P =
(M+1)^Z`` enumerates multi-indices in C order, i.e. the last input
dimension varies fastest (see :meth:`GpcBasis.multi_indices`).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .model import Gaussian, ModelParams, UncertaintySpec, Uniform, apply_gain_matrix
from .quadrature import BasisMoments, basis_moments, rule_for
from .riccati import RiccatiGains


@dataclass(frozen=True)
class GpcBasis:
    """Tensor-product chaos basis of maximal degree ``order`` per dimension."""

    components: tuple
    order: int

    def __init__(self, components: Sequence, order: int):
        comps = tuple(components.components if isinstance(components, UncertaintySpec) else components)
        for c in comps:
            if not isinstance(c, (Gaussian, Uniform)):
                raise TypeError(f"no chaos family for {c!r}")
        if order < 0:
            raise ValueError(f"order must be >= 0, got {order}")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "order", int(order))

    @property
    def z(self) -> int:
        return len(self.components)

    @property
    def n_modes(self) -> int:
        return (self.order + 1) ** self.z

    def family(self, j: int) -> str:
        return "Hermite" if isinstance(self.components[j], Gaussian) else "Legendre"

    @cached_property
    def multi_indices(self) -> np.ndarray:
        """``(P, Z)`` integer array of multi-indices, last dimension fastest."""
        grid = itertools.product(range(self.order + 1), repeat=self.z)
        return np.array(list(grid), dtype=np.int64).reshape(-1, self.z)

    def canonical(self, j: int, theta) -> np.ndarray:
        """Pull input values back to the reference variable of dimension ``j``."""
        c = self.components[j]
        theta = np.asarray(theta, dtype=float)
        if isinstance(c, Gaussian):
            return (theta - c.mu) / c.std
        return (2.0 * theta - c.a - c.b) / (c.b - c.a)

    def eval_all(self, j: int, theta) -> np.ndarray:
        """``Phi_0 .. Phi_M`` of dimension ``j``; result has shape ``theta.shape + (M+1,)``."""
        x = self.canonical(j, theta)
        out = np.empty(x.shape + (self.order + 1,))
        out[..., 0] = 1.0
        if self.order >= 1:
            out[..., 1] = x
        hermite = isinstance(self.components[j], Gaussian)
        for k in range(1, self.order):
            if hermite:
                out[..., k + 1] = x * out[..., k] - k * out[..., k - 1]
            else:
                out[..., k + 1] = ((2 * k + 1) * x * out[..., k] - k * out[..., k - 1]) / (k + 1)
        return out

    def eval_basis(self, j: int, k: int, theta):
        """Single basis polynomial ``Phi_k`` of dimension ``j`` at ``theta``."""
        if not 0 <= k <= self.order:
            raise ValueError(f"degree {k} outside 0..{self.order}")
        val = self.eval_all(j, theta)[..., k]
        return float(val) if np.ndim(val) == 0 else val

    def eval_modes(self, theta) -> np.ndarray:
        """Products ``prod_j Phi_{k_j}(theta_j)`` for every multi-index.

        ``theta`` has shape ``(..., Z)``; the result has shape ``(..., P)``.
        """
        theta = np.asarray(theta, dtype=float)
        idx = self.multi_indices
        out = np.ones(theta.shape[:-1] + (len(idx),))
        for j in range(self.z):
            vals = self.eval_all(j, theta[..., j])
            out *= vals[..., idx[:, j]]
        return out


@dataclass(frozen=True)
class GpcCoefficients:
    """Chaos coefficients ``v_hat[i, p, c]`` of agent ``i``, mode ``p``, coordinate ``c``."""

    data: np.ndarray
    basis: GpcBasis

    def tensor(self) -> np.ndarray:
        """View with one axis per input dimension, ``(N, M+1, ..., M+1, d)``."""
        n, _, d = self.data.shape
        return self.data.reshape((n,) + (self.basis.order + 1,) * self.basis.z + (d,))

    def replace(self, data: np.ndarray) -> "GpcCoefficients":
        return GpcCoefficients(data=data, basis=self.basis)


def default_moments(basis: GpcBasis, L: int | None = None) -> BasisMoments:
    """Basis moments from Gauss rules with ``max(L, M+1)`` points."""
    points = max(basis.order + 1, L or 0)
    return basis_moments(basis, [rule_for(c, points) for c in basis.components])


def mode_norms(moments: BasisMoments, basis: GpcBasis) -> np.ndarray:
    """``prod_j E[Phi_{k_j}^2]`` for every multi-index, shape ``(P,)``."""
    idx = basis.multi_indices
    out = np.ones(len(idx))
    for j in range(basis.z):
        out *= moments.m2[j, idx[:, j]]
    return out


def mode_means(moments: BasisMoments, basis: GpcBasis) -> np.ndarray:
    """``prod_j E[Phi_{k_j}]`` for every multi-index, shape ``(P,)``."""
    idx = basis.multi_indices
    out = np.ones(len(idx))
    for j in range(basis.z):
        out *= moments.m0[j, idx[:, j]]
    return out


def forcing_vector(moments: BasisMoments, basis: GpcBasis) -> np.ndarray:
    """Projection of ``sum_l theta_l`` on every mode, shape ``(P,)``.

    ``sum_l E[theta_l Phi_{k_l}] prod_{j != l} E[Phi_{k_j}]``, divided by the
    mode norm so that the result is an expansion coefficient.
    """
    idx = basis.multi_indices
    total = np.zeros(len(idx))
    for l in range(basis.z):
        term = moments.m1[l, idx[:, l]].copy()
        for j in range(basis.z):
            if j != l:
                term *= moments.m0[j, idx[:, j]]
        total += term
    return total / mode_norms(moments, basis)


def project_initial(v0: np.ndarray, basis: GpcBasis) -> GpcCoefficients:
    """Deterministic initial data: only the all-zero mode is populated."""
    v0 = np.asarray(v0, dtype=float)
    if v0.ndim == 1:
        v0 = v0[:, None]
    data = np.zeros((v0.shape[0], basis.n_modes, v0.shape[1]))
    data[:, 0, :] = v0
    return GpcCoefficients(data=data, basis=basis)


@dataclass(frozen=True)
class LinearModeSystem:
    """Coefficients of the projected right-hand side.

    For every mode ``p``, agent ``i`` and coordinate ``c``::

        rhs = a_self x_i + a_mean mean_h(x_h) + forcing[p]
              + [p == 0] (b_self x_i + b_mean mean_h(x_h) + b_const)

    Both control laws produce this shape, which is what the integration
    kernels consume.
    """

    a_self: float
    a_mean: float
    forcing: np.ndarray
    b_self: float = 0.0
    b_mean: float = 0.0
    b_const: float = 0.0

    def apply(self, x: np.ndarray) -> np.ndarray:
        mean = x.mean(axis=0, keepdims=True)
        out = self.a_self * x + self.a_mean * mean + self.forcing[None, :, None]
        out[:, 0, :] += self.b_self * x[:, 0, :] + self.b_mean * mean[:, 0, :] + self.b_const
        return out


def feedback_system(
    params: ModelParams,
    gains: RiccatiGains,
    moments: BasisMoments,
    basis: GpcBasis,
    corrected: bool = False,
) -> LinearModeSystem:
    """Projected generator under the state feedback.

    The state feedback is linear in ``v``, so each mode evolves under the
    same closed-loop consensus operator as the agents themselves.
    """
    n, nu = params.n_agents, params.nu
    mean_inputs = float(np.sum(moments.input_means))
    return LinearModeSystem(
        a_self=-params.p_bar - (gains.k_d - gains.k_o / n) / nu,
        a_mean=params.p_bar - gains.k_o / nu,
        forcing=forcing_vector(moments, basis),
        b_const=-mean_inputs if corrected else 0.0,
    )


def averaged_system(
    params: ModelParams,
    gains: RiccatiGains,
    s: float,
    moments: BasisMoments,
    basis: GpcBasis,
) -> LinearModeSystem:
    """Projected generator under the averaged control.

    The control is deterministic, so after projection it acts only through
    ``prod_j E[Phi_{k_j}] / prod_j E[Phi_{k_j}^2]``, which is 1 on the
    zero mode and 0 elsewhere.
    """
    n, nu = params.n_agents, params.nu
    weight = mode_means(moments, basis) / mode_norms(moments, basis)
    if not (np.isclose(weight[0], 1.0) and np.allclose(weight[1:], 0.0, atol=1e-12)):
        raise ValueError("basis moments are not orthogonal against the constant mode")
    mean_inputs = float(np.sum(moments.input_means))
    return LinearModeSystem(
        a_self=-params.p_bar,
        a_mean=params.p_bar,
        forcing=forcing_vector(moments, basis),
        b_self=-(gains.k_d - gains.k_o / n) / nu,
        b_mean=-gains.k_o / nu,
        b_const=-s * mean_inputs / nu,
    )


def rhs_feedback(
    coeffs: GpcCoefficients,
    params: ModelParams,
    gains: RiccatiGains,
    moments: BasisMoments,
    corrected: bool = False,
) -> GpcCoefficients:
    """Time derivative of the coefficients under the state feedback."""
    system = feedback_system(params, gains, moments, coeffs.basis, corrected=corrected)
    return coeffs.replace(system.apply(coeffs.data))


def rhs_averaged(
    coeffs: GpcCoefficients,
    params: ModelParams,
    gains: RiccatiGains,
    s: float,
    moments: BasisMoments,
) -> GpcCoefficients:
    """Time derivative of the coefficients under the averaged control.

    Written out literally: consensus interaction on every mode, the control
    ``-(1/nu)(k_d x_i0 + (k_o/N) sum_{h != i} x_h0 + s sum_j mu_j)`` scaled
    by the mode weight, plus the input forcing.
    """
    basis = coeffs.basis
    x = coeffs.data
    n = params.n_agents
    interaction = (params.p_bar / n) * (x.sum(axis=0, keepdims=True) - n * x)
    weight = mode_means(moments, basis) / mode_norms(moments, basis)
    mean_inputs = float(np.sum(moments.input_means))
    ctrl0 = -(apply_gain_matrix(x[:, 0, :], gains.k_d, gains.k_o) + s * mean_inputs) / params.nu
    control = weight[None, :, None] * ctrl0[:, None, :]
    return coeffs.replace(interaction + control + forcing_vector(moments, basis)[None, :, None])


def reconstruct_moments(coeffs: GpcCoefficients, moments: BasisMoments) -> tuple[np.ndarray, np.ndarray]:
    """Mean and variance of every agent coordinate, each of shape ``(N, d)``."""
    x = coeffs.data
    norms = mode_norms(moments, coeffs.basis)
    mean = x[:, 0, :].copy()
    variance = np.einsum("ipc,p->ic", x[:, 1:, :] ** 2, norms[1:])
    return mean, variance


def normalize_coefficients(coeffs: GpcCoefficients, moments: BasisMoments) -> np.ndarray:
    """Coefficients with respect to the orthonormal basis ``Phi_p / ||Phi_p||``."""
    return coeffs.data * np.sqrt(mode_norms(moments, coeffs.basis))[None, :, None]


def variance_orthonormal(normalized: np.ndarray) -> np.ndarray:
    """``sum_p v_p^2 - v_0^2`` for coefficients of an orthonormal basis."""
    return np.sum(normalized**2, axis=1) - normalized[:, 0, :] ** 2


def evaluate_realization(coeffs: GpcCoefficients, theta, basis: GpcBasis | None = None) -> np.ndarray:
    """Agent states ``(N, d)`` for one input value.

    ``theta`` is a ``Z``-vector applied to every coordinate, or a ``(Z, d)``
    array with one value per coordinate.
    """
    basis = basis or coeffs.basis
    theta = np.asarray(theta, dtype=float)
    x = coeffs.data
    if theta.ndim == 1:
        phi = basis.eval_modes(theta)
        return np.einsum("ipc,p->ic", x, phi)
    phi = basis.eval_modes(theta.T)  # (d, P)
    return np.einsum("ipc,cp->ic", x, phi)
