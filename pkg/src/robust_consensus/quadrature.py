"""Gauss rules for the input distributions and the basis moments they feed.

Rules are probability-normalized: the weights integrate against the density
itself, so they sum to one. Nodes come from the Golub-Welsch eigenproblem of
the Jacobi matrix and are then polished by Newton on the orthonormal
recurrence; weights use the Christoffel formula, which keeps the tiny tail
weights of high-order Hermite rules accurate in a relative sense.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .model import Gaussian, Uniform

if TYPE_CHECKING:
    from .gpc import GpcBasis


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes in input space and probability weights."""

    nodes: np.ndarray
    weights: np.ndarray
    family: str

    def __len__(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class BasisMoments:
    """Per-dimension moments of the chaos basis, arrays of shape ``(Z, M+1)``.

    ``m0[j, k] = E[Phi_k]``, ``m1[j, k] = E[theta_j Phi_k]`` and
    ``m2[j, k] = E[Phi_k^2]``.
    """

    m0: np.ndarray
    m1: np.ndarray
    m2: np.ndarray

    @property
    def order(self) -> int:
        return self.m0.shape[1] - 1

    @property
    def input_means(self) -> np.ndarray:
        """``E[theta_j]``, recovered as ``m1[j, 0]``."""
        return self.m1[:, 0]


def hermite_recurrence(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Monic recurrence ``(a_k, b_k)`` of probabilists' Hermite polynomials, ``k < n``."""
    return np.zeros(n), np.arange(n, dtype=float)


def legendre_recurrence(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Monic recurrence of Legendre polynomials for the uniform law on ``[-1, 1]``."""
    k = np.arange(n, dtype=float)
    b = k * k / (4.0 * k * k - 1.0)
    b[0] = 1.0
    return np.zeros(n), b


def _orthonormal_values(x: np.ndarray, a: np.ndarray, b: np.ndarray, n: int):
    """Values and derivatives of the orthonormal polynomials ``q_0..q_n`` at ``x``."""
    q = np.zeros((n + 1,) + x.shape)
    dq = np.zeros_like(q)
    q[0] = 1.0
    sb = np.sqrt(b)
    if n >= 1:
        q[1] = (x - a[0]) / sb[1]
        dq[1] = 1.0 / sb[1]
    for k in range(1, n):
        q[k + 1] = ((x - a[k]) * q[k] - sb[k] * q[k - 1]) / sb[k + 1]
        dq[k + 1] = (q[k] + (x - a[k]) * dq[k] - sb[k] * dq[k - 1]) / sb[k + 1]
    return q, dq


def golub_welsch(a: np.ndarray, b: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n``-point Gauss rule for the probability measure with recurrence ``(a, b)``.

    ``a`` and ``b`` need at least ``n + 1`` entries; ``b[0]`` is unused.
    """
    jac = np.diag(a[:n]) + np.diag(np.sqrt(b[1:n]), 1) + np.diag(np.sqrt(b[1:n]), -1)
    x = np.linalg.eigvalsh(jac)
    for _ in range(3):
        q, dq = _orthonormal_values(x, a, b, n)
        x = x - q[n] / dq[n]
    q, _ = _orthonormal_values(x, a, b, n - 1)
    w = 1.0 / np.sum(q * q, axis=0)
    return x, w


def gauss_hermite(L: int, mu: float = 0.0, sigma2: float = 1.0) -> QuadratureRule:
    """Gauss rule exact for ``N(mu, sigma2)`` moments up to degree ``2L - 1``."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    a, b = hermite_recurrence(L + 1)
    x, w = golub_welsch(a, b, L)
    return QuadratureRule(nodes=mu + np.sqrt(sigma2) * x, weights=w, family="GaussHermite")


def gauss_legendre(L: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    """Gauss rule exact for ``U(a, b)`` moments up to degree ``2L - 1``."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    ra, rb = legendre_recurrence(L + 1)
    x, w = golub_welsch(ra, rb, L)
    return QuadratureRule(nodes=0.5 * (a + b) + 0.5 * (b - a) * x, weights=w, family="GaussLegendre")


def rule_for(component, L: int) -> QuadratureRule:
    """Gauss rule matching an uncertainty component."""
    if isinstance(component, Gaussian):
        return gauss_hermite(L, component.mu, component.sigma2)
    if isinstance(component, Uniform):
        return gauss_legendre(L, component.a, component.b)
    raise TypeError(f"no Gauss rule for {component!r}")


def expect(rule: QuadratureRule, f: Callable[[np.ndarray], np.ndarray]) -> float:
    """Quadrature estimate of ``E[f(theta)]``."""
    return float(np.dot(rule.weights, f(rule.nodes)))


def basis_moments(basis: "GpcBasis", rules: Sequence[QuadratureRule]) -> BasisMoments:
    """Moments ``E[Phi_k]``, ``E[theta Phi_k]``, ``E[Phi_k^2]`` for every input dimension.

    Each rule must be built for the matching input and have at least
    ``M + 1`` points so that all three moments are integrated exactly.
    """
    if len(rules) != basis.z:
        raise ValueError(f"{len(rules)} rules for {basis.z} basis dimensions")
    m = basis.order
    m0 = np.zeros((basis.z, m + 1))
    m1 = np.zeros_like(m0)
    m2 = np.zeros_like(m0)
    for j, rule in enumerate(rules):
        expected = "GaussHermite" if isinstance(basis.components[j], Gaussian) else "GaussLegendre"
        if rule.family != expected:
            raise ValueError(f"dimension {j}: rule {rule.family} does not match {expected}")
        if len(rule) < m + 1:
            raise ValueError(f"dimension {j}: need L >= M + 1 = {m + 1}, got {len(rule)}")
        phi = basis.eval_all(j, rule.nodes)  # (L, M+1)
        w = rule.weights
        m0[j] = w @ phi
        m1[j] = (w * rule.nodes) @ phi
        m2[j] = w @ (phi * phi)
    return BasisMoments(m0=m0, m1=m1, m2=m2)
