"""H-infinity robustness certificates for the controlled consensus system.

Two layers live here:

* the structured certificate: the Riccati matrix ``X`` is sought with a
  common diagonal entry, which reduces the matrix equation to the scalar
  quadratic ``lambda^2 - 2 gamma c_N lambda + 1 = 0``;
* generic small-system validators for ``(A, B, C, D)``: a frequency sweep
  of the transfer function, the bounded-real LMI and its Riccati form,
  with a Newton solver for the latter.

Dense linear algebra uses LAPACK through numpy/scipy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DegenerateBound, InfeasibleGamma, NonConvergence, SingularMiddleBlock, UnstableSystem
from .model import ModelParams, build_interaction_matrix
from .riccati import RiccatiGains, limit_gains

NORMS = ("max", "row_sum", "fro")


@dataclass(frozen=True)
class HinfCertificate:
    """Structured certificate ``X = x_d I + (x_o_tilde / sqrt(N)) (J - I)``."""

    gamma: float
    c_n: float
    x_d: float
    x_o_tilde: float
    lambda_minus: float
    lambda_plus: float
    positive_definite: bool
    residual_norm: float

    def to_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "c_n": self.c_n,
            "x_d": self.x_d,
            "x_o_tilde": self.x_o_tilde,
            "lambda_minus": self.lambda_minus,
            "lambda_plus": self.lambda_plus,
            "positive_definite": self.positive_definite,
            "residual_norm": self.residual_norm,
        }


@dataclass(frozen=True)
class StateSpaceSystem:
    """``x' = a x + b w``, ``y = c x + d w``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        n = self.a.shape[0]
        if self.a.shape != (n, n):
            raise ValueError(f"a must be square, got {self.a.shape}")
        if self.b.shape[0] != n or self.c.shape[1] != n:
            raise ValueError("b rows and c columns must match the state size")
        if self.d.shape != (self.c.shape[0], self.b.shape[1]):
            raise ValueError(f"d must have shape {(self.c.shape[0], self.b.shape[1])}, got {self.d.shape}")

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    def is_stable(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.a).real < 0))

    def transfer(self, omega: float) -> np.ndarray:
        """``D + C (i omega I - A)^{-1} B``."""
        n = self.n_states
        resolvent_b = np.linalg.solve(1j * omega * np.eye(n) - self.a, self.b)
        return self.d + self.c @ resolvent_b

    def gain(self, omega: float) -> float:
        """Largest singular value of the transfer matrix at ``omega``."""
        return float(np.linalg.norm(self.transfer(omega), 2))


# ---------------------------------------------------------------------------
# structured certificate


def compute_c_n(params: ModelParams, gains: RiccatiGains) -> float:
    """``c_N = p_bar + (k_d - k_o / N) / nu`` for scaled gains."""
    return params.p_bar + (gains.k_d - gains.k_o / params.n_agents) / params.nu


def gamma_lower_bound(p_bar: float, nu: float, r: float = 0.0) -> float:
    """Mean-field lower bound ``sqrt(nu) / (sqrt((p_bar + r/2)^2 nu + 1) - r sqrt(nu) / 2)``.

    Equals ``1 / (p_bar + k_d / nu)`` with the limit gain ``k_d``; at
    ``r = 0`` this is ``sqrt(nu / (p_bar^2 nu + 1))``.
    """
    if not nu > 0:
        raise DegenerateBound(f"nu must be positive, got {nu}")
    sq = math.sqrt(nu)
    denom = math.sqrt((p_bar + 0.5 * r) ** 2 * nu + 1.0) - 0.5 * r * sq
    if not denom > 0:
        raise DegenerateBound(f"non-positive denominator {denom} for p_bar={p_bar}, nu={nu}, r={r}")
    return sq / denom


def limit_c(p_bar: float, nu: float, r: float = 0.0) -> float:
    """Mean-field constant ``c = p_bar + k_d / nu`` from the limit gains."""
    k_d, _ = limit_gains(p_bar, nu, r)
    return p_bar + k_d / nu


def lambda_branches(gamma: float, c_n: float) -> tuple[float, float]:
    """Roots ``lambda_-`` and ``lambda_+`` of ``lambda^2 - 2 gamma c_N lambda + 1 = 0``.

    Raises InfeasibleGamma when the roots are complex. A discriminant that
    is negative only at rounding level is treated as zero, so that
    ``gamma = 1 / c_N`` yields the double root 1.
    """
    b = gamma * c_n
    disc = b * b - 1.0
    if disc < 0:
        if disc < -8 * np.finfo(float).eps:
            raise InfeasibleGamma(gamma, 1.0 / c_n if c_n > 0 else math.inf)
        disc = 0.0
    root = math.sqrt(disc)
    plus = b + root
    return 1.0 / plus, plus  # product of the roots is 1


def structured_x(n: int, x_d: float, x_o_tilde: float = 0.0) -> np.ndarray:
    """Dense ``X`` with diagonal ``x_d`` and off-diagonal ``x_o_tilde / sqrt(N)``."""
    x = np.full((n, n), x_o_tilde / math.sqrt(n))
    np.fill_diagonal(x, x_d)
    return x


def gain_matrix(params: ModelParams, gains: RiccatiGains) -> np.ndarray:
    """Dense ``K`` with diagonal ``k_d`` and off-diagonal ``k_o / N``."""
    n = params.n_agents
    k = np.full((n, n), gains.k_o / n)
    np.fill_diagonal(k, gains.k_d)
    return k


def closed_loop_matrix(params: ModelParams, gains: RiccatiGains) -> np.ndarray:
    """``A - K / nu``."""
    return build_interaction_matrix(params).dense() - gain_matrix(params, gains) / params.nu


def matrix_norm(m: np.ndarray, norm: str = "max") -> float:
    """Entrywise max, max row sum or Frobenius norm."""
    if norm == "max":
        return float(np.max(np.abs(m)))
    if norm == "row_sum":
        return float(np.max(np.abs(m).sum(axis=1)))
    if norm == "fro":
        return float(np.linalg.norm(m, "fro"))
    raise ValueError(f"unknown norm {norm!r}; expected one of {NORMS}")


def are_residual_matrix(x_d: float, x_o_tilde: float, params: ModelParams, gains: RiccatiGains, gamma: float):
    """``A^T X + X A - K^T X / nu - X K / nu + X X / gamma + I / gamma`` as a dense matrix."""
    n = params.n_agents
    x = structured_x(n, x_d, x_o_tilde)
    a_cl = closed_loop_matrix(params, gains)
    return a_cl.T @ x + x @ a_cl + (x @ x + np.eye(n)) / gamma


def are_residual(
    x_d: float, x_o_tilde: float, params: ModelParams, gains: RiccatiGains, gamma: float, norm: str = "max"
) -> float:
    """Norm of the structured Riccati residual.

    With ``X = lambda I`` the residual is the rank-one matrix
    ``(2 lambda (p_bar - k_o/nu) / N) J``: every entry is O(1/N) while its
    row sums and Frobenius norm stay O(1). The default entrywise max norm
    is therefore the one in which the residual vanishes as ``N`` grows.
    """
    return matrix_norm(are_residual_matrix(x_d, x_o_tilde, params, gains, gamma), norm)


def certify(params: ModelParams, gains: RiccatiGains, gamma: float, norm: str = "max") -> HinfCertificate:
    """Structured certificate for the closed-loop consensus system.

    Picks ``x_o_tilde = 0`` and builds ``X`` from the smaller root
    ``lambda_-``. Raises InfeasibleGamma (carrying ``gamma_min = 1/c_N``)
    when ``gamma < 1/c_N``.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    c_n = compute_c_n(params, gains)
    if not c_n > 0:
        raise InfeasibleGamma(gamma, math.inf)
    lam_minus, lam_plus = lambda_branches(gamma, c_n)
    return HinfCertificate(
        gamma=float(gamma),
        c_n=c_n,
        x_d=lam_minus,
        x_o_tilde=0.0,
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        positive_definite=bool(c_n > 0 and lam_minus > 0),
        residual_norm=are_residual(lam_minus, 0.0, params, gains, gamma, norm),
    )


def consensus_system(params: ModelParams, gains: RiccatiGains, z: int | None = None, inputs: str = "broadcast"):
    """Closed-loop system from the disturbance to the full state.

    ``inputs="broadcast"`` routes each of the ``Z`` inputs to every agent
    (``B = ones(N, Z)``), which is how the random inputs enter the agent
    dynamics; ``inputs="identity"`` uses ``B = I``, the channel implied by
    the ``X X / gamma`` term of the structured Riccati equation.
    """
    n = params.n_agents
    z = params.z if z is None else z
    if inputs == "broadcast":
        b = np.ones((n, z))
    elif inputs == "identity":
        b = np.eye(n)
    else:
        raise ValueError(f"unknown input channel {inputs!r}")
    return StateSpaceSystem(a=closed_loop_matrix(params, gains), b=b, c=np.eye(n), d=np.zeros((n, b.shape[1])))


# ---------------------------------------------------------------------------
# generic validators


def log_grid(lo: float = 1e-3, hi: float = 1e3, n: int = 2000) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _golden_max(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200) -> tuple[float, float]:
    """Golden-section search for a local maximum of ``f`` on ``[a, b]``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def hinf_norm_sweep(
    sys: StateSpaceSystem,
    omega_grid: Sequence[float] | None = None,
    refine: bool = True,
    include_zero: bool = True,
) -> float:
    """Largest singular value of the transfer function over a frequency grid.

    The default grid is 2000 log-spaced points on ``[1e-3, 1e3]``; with
    ``include_zero`` the static gain at ``omega = 0`` is added. The grid maximum is refined by golden-section search between the
    neighbours of the best grid point. The result is a lower bound of the
    true norm that becomes tight as the grid is refined.
    """
    if not sys.is_stable():
        raise UnstableSystem("state matrix has an eigenvalue with non-negative real part")
    omegas = np.sort(np.abs(np.asarray(log_grid() if omega_grid is None else omega_grid, dtype=float)))
    if omegas.size == 0:
        raise ValueError("empty frequency grid")
    if include_zero and omegas[0] != 0.0:
        omegas = np.concatenate([[0.0], omegas])
    if not np.any(sys.b) or not np.any(sys.c):
        return float(np.linalg.norm(sys.d, 2)) if sys.d.size else 0.0
    gains = np.array([sys.gain(w) for w in omegas])
    k = int(np.argmax(gains))
    best = float(gains[k])
    if refine and omegas.size > 1:
        lo = omegas[max(k - 1, 0)]
        hi = omegas[min(k + 1, omegas.size - 1)]
        if hi > lo:
            _, val = _golden_max(sys.gain, lo, hi)
            best = max(best, val)
    return best


def lmi_matrix(sys: StateSpaceSystem, gamma: float, x: np.ndarray) -> np.ndarray:
    """Bounded-real block ``[[A^T X + X A, X B], [B^T X, -gamma I]] + (1/gamma) [C D]^T [C D]``."""
    a, b, c, d = sys.a, sys.b, sys.c, sys.d
    m = b.shape[1]
    top = np.hstack([a.T @ x + x @ a, x @ b])
    bottom = np.hstack([b.T @ x, -gamma * np.eye(m)])
    cd = np.hstack([c, d])
    return np.vstack([top, bottom]) + cd.T @ cd / gamma


def lmi_feasible(sys: StateSpaceSystem, gamma: float, x_candidate: np.ndarray) -> bool:
    """True iff the bounded-real block is negative definite at ``x_candidate``.

    A certificate also needs ``x_candidate`` positive definite; a candidate
    that is not symmetric positive definite is rejected.
    """
    x = np.asarray(x_candidate, dtype=float)
    if not np.allclose(x, x.T, rtol=0, atol=1e-12 * max(1.0, np.abs(x).max())):
        return False
    if np.linalg.eigvalsh(0.5 * (x + x.T)).min() <= 0:
        return False
    m = lmi_matrix(sys, gamma, x)
    return bool(np.linalg.eigvalsh(0.5 * (m + m.T)).max() < 0)


def _riccati_terms(sys: StateSpaceSystem, gamma: float):
    """``(R, S, Q)`` with ``R = -gamma I + D^T D / gamma``, ``S = C^T D / gamma``, ``Q = C^T C / gamma``."""
    c, d = sys.c, sys.d
    r = -gamma * np.eye(d.shape[1]) + d.T @ d / gamma
    try:
        cond = np.linalg.cond(r)
    except np.linalg.LinAlgError:
        cond = math.inf
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularMiddleBlock(f"-gamma I + D^T D / gamma is singular (cond={cond:.3g})")
    return r, c.T @ d / gamma, c.T @ c / gamma


def are_residual_generic_matrix(sys: StateSpaceSystem, gamma: float, x: np.ndarray) -> np.ndarray:
    """``A^T X + X A - (X B + S) R^{-1} (B^T X + S^T) + Q`` (Schur complement of the LMI block)."""
    r, s, q = _riccati_terms(sys, gamma)
    a, b = sys.a, sys.b
    xb = x @ b + s
    return a.T @ x + x @ a - xb @ np.linalg.solve(r, xb.T) + q


def are_residual_generic(sys: StateSpaceSystem, gamma: float, x: np.ndarray, norm: str = "max") -> float:
    return matrix_norm(are_residual_generic_matrix(sys, gamma, np.asarray(x, dtype=float)), norm)


def solve_bounded_real_are(
    sys: StateSpaceSystem,
    gamma: float,
    eps: float = 0.0,
    x0: np.ndarray | None = None,
    tol: float = 1e-11,
    max_iter: int = 100,
) -> np.ndarray:
    """Stabilizing solution of the bounded-real Riccati equation by Newton's method.

    Solves ``A^T X + X A - (X B + S) R^{-1} (B^T X + S^T) + Q + eps I = 0``
    starting from ``x0`` (default ``1e-8 I``). Each step solves the
    Lyapunov equation of the current closed loop
    ``A_k = A - B R^{-1} (B^T X_k + S^T)``. Raises NonConvergence when a
    closed loop loses stability or the residual does not reach ``tol``
    (relative to ``|Q| + eps``), which happens when ``gamma`` does not
    exceed the H-infinity norm.
    """
    if not sys.is_stable():
        raise UnstableSystem("state matrix has an eigenvalue with non-negative real part")
    r, s, q = _riccati_terms(sys, gamma)
    n = sys.n_states
    q = q + eps * np.eye(n)
    a, b = sys.a, sys.b
    x = 1e-8 * np.eye(n) if x0 is None else np.array(x0, dtype=float)
    scale = max(1.0, float(np.abs(q).max()))
    for _ in range(max_iter):
        gain = np.linalg.solve(r, b.T @ x + s.T)
        a_k = a - b @ gain
        if np.any(np.linalg.eigvals(a_k).real >= 0):
            raise NonConvergence("Newton closed loop lost stability; gamma is not above the norm")
        res = a.T @ x + x @ a - (x @ b + s) @ gain + q
        if np.abs(res).max() <= tol * scale:
            return 0.5 * (x + x.T)
        delta = scipy.linalg.solve_continuous_lyapunov(a_k.T, -res)
        x = x + 0.5 * (delta + delta.T)
        if not np.all(np.isfinite(x)):
            break
    raise NonConvergence(f"bounded-real Riccati Newton did not converge in {max_iter} iterations")


def find_certificate(sys: StateSpaceSystem, gamma: float, eps: float | None = None) -> np.ndarray | None:
    """A positive definite ``X`` passing :func:`lmi_feasible`, or None.

    The Riccati equation is solved with ``Q + eps I`` so that the Schur
    complement equals ``-eps I``, which makes the LMI strict.
    """
    scale = max(1.0, float(np.abs(sys.c).max()) ** 2 / gamma)
    for e in ([eps] if eps is not None else [1e-6 * scale, 1e-4 * scale, 1e-2 * scale]):
        try:
            x = solve_bounded_real_are(sys, gamma, eps=e)
        except (NonConvergence, SingularMiddleBlock):
            continue
        if lmi_feasible(sys, gamma, x):
            return x
    return None
