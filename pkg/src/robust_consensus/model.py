"""Agent system, uncertainty description and the control laws.

States are arrays of shape ``(..., N, d)``: leading axes (if any) index
independent realizations, axis ``-2`` indexes agents and axis ``-1`` the
state coordinates. Every operation acts identically on each coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np

from .errors import ConfigError

if TYPE_CHECKING:
    from .riccati import RiccatiGains


@dataclass(frozen=True)
class ModelParams:
    """Scalars defining the controlled agent system.

    Parameters
    ----------
    n_agents : int
        Number of agents ``N`` (at least 2).
    dim : int
        State dimension ``d`` of each agent.
    p_bar : float
        Interaction strength of the all-to-all attraction.
    nu : float
        Control penalization, strictly positive.
    r : float
        Discount rate of the infinite-horizon cost.
    z : int
        Number of additive random inputs.
    """

    n_agents: int
    dim: int = 1
    p_bar: float = 1.0
    nu: float = 1.0
    r: float = 0.0
    z: int = 1

    def __post_init__(self):
        if int(self.n_agents) != self.n_agents or self.n_agents < 2:
            raise ConfigError(f"n_agents must be an integer >= 2, got {self.n_agents}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ConfigError(f"dim must be a positive integer, got {self.dim}")
        if int(self.z) != self.z or self.z < 1:
            raise ConfigError(f"z must be a positive integer, got {self.z}")
        if not self.nu > 0:
            raise ConfigError(f"nu must be > 0, got {self.nu}")
        if not self.r >= 0:
            raise ConfigError(f"r must be >= 0, got {self.r}")
        if not self.p_bar >= 0:
            raise ConfigError(f"p_bar must be >= 0, got {self.p_bar}")

    @property
    def alpha(self) -> float:
        """``(N - 1) / N``."""
        return (self.n_agents - 1) / self.n_agents


@dataclass(frozen=True)
class Gaussian:
    """Normal input ``N(mu, sigma2)``; ``sigma2`` is the variance."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigError(f"Gaussian sigma2 must be > 0, got {self.sigma2}")

    @property
    def mean(self) -> float:
        return float(self.mu)

    @property
    def variance(self) -> float:
        return float(self.sigma2)

    @property
    def std(self) -> float:
        return float(np.sqrt(self.sigma2))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.mu + self.std * rng.standard_normal(size)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x - self.mu) ** 2 / self.sigma2) / np.sqrt(2 * np.pi * self.sigma2)


@dataclass(frozen=True)
class Uniform:
    """Uniform input on ``[a, b]``."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigError(f"Uniform needs a < b, got a={self.a}, b={self.b}")

    @property
    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def variance(self) -> float:
        return (self.b - self.a) ** 2 / 12.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.a + (self.b - self.a) * rng.random(size)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)


Distribution = Union[Gaussian, Uniform]


@dataclass(frozen=True)
class UncertaintySpec:
    """The ``Z`` independent distributions of the additive inputs."""

    components: tuple

    def __init__(self, components: Sequence[Distribution]):
        comps = tuple(components)
        if not comps:
            raise ConfigError("at least one uncertainty component is required")
        for c in comps:
            if not isinstance(c, (Gaussian, Uniform)):
                raise ConfigError(f"unsupported uncertainty component {c!r}")
        object.__setattr__(self, "components", comps)

    def __len__(self) -> int:
        return len(self.components)

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components])

    @property
    def variances(self) -> np.ndarray:
        return np.array([c.variance for c in self.components])

    @property
    def mean_sum(self) -> float:
        """``sum_k mu_k``, the expected total input per coordinate."""
        return float(np.sum(self.means))

    def check(self, params: ModelParams) -> None:
        if len(self) != params.z:
            raise ConfigError(f"{len(self)} uncertainty components but z={params.z}")

    def sample(self, rng: np.random.Generator, n_samples: int, dim: int) -> np.ndarray:
        """Draw ``(n_samples, Z, dim)`` inputs; coordinates are independent."""
        out = np.empty((n_samples, len(self), dim))
        for k, c in enumerate(self.components):
            out[:, k, :] = c.sample(rng, (n_samples, dim))
        return out


@dataclass(frozen=True)
class InteractionMatrix:
    """Entries of the mean-field consensus matrix ``A``."""

    a_d: float
    a_o: float
    n: int

    def dense(self) -> np.ndarray:
        a = np.full((self.n, self.n), self.a_o)
        np.fill_diagonal(a, self.a_d)
        return a

    def row_sum(self) -> float:
        return self.a_d + (self.n - 1) * self.a_o


def build_interaction_matrix(params: ModelParams) -> InteractionMatrix:
    n = params.n_agents
    return InteractionMatrix(a_d=params.p_bar * (1 - n) / n, a_o=params.p_bar / n, n=n)


def apply_gain_matrix(v: np.ndarray, k_d: float, k_o: float) -> np.ndarray:
    """``(K v)_i = k_d v_i + (k_o / N) sum_{j != i} v_j`` for scaled gains."""
    v = np.asarray(v, dtype=float)
    n = v.shape[-2]
    total = v.sum(axis=-2, keepdims=True)
    return k_d * v + (k_o / n) * (total - v)


def apply_gain_matrix_full_sum(v: np.ndarray, k_d: float, k_o: float) -> np.ndarray:
    """Same product written with the sum over all agents.

    ``(k_d - k_o/N) v_i + (k_o/N) sum_j v_j``; algebraically identical to
    :func:`apply_gain_matrix`.
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[-2]
    return (k_d - k_o / n) * v + (k_o / n) * v.sum(axis=-2, keepdims=True)


def feedback_control(v: np.ndarray, gains: "RiccatiGains", params: ModelParams) -> np.ndarray:
    """State feedback ``u = -(1/nu) K v`` evaluated per realization."""
    return -apply_gain_matrix(v, gains.k_d, gains.k_o) / params.nu


def feedback_control_corrected(
    v: np.ndarray, gains: "RiccatiGains", params: ModelParams, unc: UncertaintySpec
) -> np.ndarray:
    """Feedback control shifted by the known input means, ``- sum_k mu_k``."""
    return feedback_control(v, gains, params) - unc.mean_sum


def averaged_control(
    mean_state: np.ndarray, gains: "RiccatiGains", params: ModelParams, unc: UncertaintySpec
) -> np.ndarray:
    """Deterministic control computed from ``E[v]`` and the input means.

    ``u_i = -(1/nu) (k_d E[v_i] + (k_o/N) sum_{j != i} E[v_j] + s sum_k mu_k)``;
    with the infinite-horizon value ``s = nu`` the last term is ``-sum_k mu_k``.
    """
    return -(apply_gain_matrix(mean_state, gains.k_d, gains.k_o) + gains.s * unc.mean_sum) / params.nu


def drift(v: np.ndarray, theta_sample: np.ndarray, control: np.ndarray, params: ModelParams) -> np.ndarray:
    """Right-hand side of the agent dynamics.

    ``dv_i/dt = (p_bar/N) sum_j (v_j - v_i) + u_i + sum_k theta_k``. The
    interaction is evaluated through the agent mean, so ``A`` is never formed.

    Parameters
    ----------
    v : ndarray, shape (..., N, d)
    theta_sample : ndarray, shape (..., Z, d)
        One constant-in-time input draw per realization.
    control : ndarray, broadcastable to ``v``
    """
    v = np.asarray(v, dtype=float)
    theta_total = np.asarray(theta_sample, dtype=float).sum(axis=-2, keepdims=True)
    mean = v.mean(axis=-2, keepdims=True)
    return params.p_bar * (mean - v) + control + theta_total
