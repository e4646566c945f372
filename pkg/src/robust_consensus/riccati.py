"""Reduced Riccati equations for the consensus feedback gains.

The structured solution ``K`` of the matrix Riccati equation has a common
diagonal entry and a common off-diagonal entry. All gains here are in the
scaled convention ``k_d <- N k_d``, ``k_o <- N^2 k_o`` in which they stay
bounded as ``N -> infinity``. See ``docs/riccati_reduction.md`` for the
derivation of the finite-horizon equations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import NonConvergence
from .model import ModelParams

Schedule = Union[float, Callable[[float], float]]


@dataclass(frozen=True)
class RiccatiGains:
    """Scaled feedback gains plus the averaged-control coefficient ``s``."""

    k_d: float
    k_o: float
    s: float
    convention: str = "scaled"


@dataclass(frozen=True)
class FiniteHorizonGains:
    """Gain trajectories on ``[0, T]`` (ascending ``times``)."""

    times: np.ndarray
    k_d: np.ndarray
    k_o: np.ndarray
    s: np.ndarray

    def at(self, t: float) -> RiccatiGains:
        """Gains linearly interpolated at time ``t``."""
        return RiccatiGains(
            k_d=float(np.interp(t, self.times, self.k_d)),
            k_o=float(np.interp(t, self.times, self.k_o)),
            s=float(np.interp(t, self.times, self.s)),
        )


def _positive_root(b: float, c: float) -> float:
    """Root ``-b + sqrt(b^2 + c)`` of ``x^2 + 2 b x - c = 0`` without cancellation (c >= 0)."""
    disc = np.sqrt(b * b + c)
    if b > 0:
        return c / (b + disc)
    return -b + disc


def limit_gains(p_bar: float, nu: float, r: float = 0.0) -> tuple[float, float]:
    """Stabilizing gains of the ``N -> infinity`` reduced system.

    Solves ``k_d^2/nu + (2 p_bar + r) k_d - 1 = 0`` and
    ``k_o^2/nu + (2 k_d/nu + r) k_o - 2 p_bar k_d = 0`` on the ``+`` branch.

    Returns
    -------
    (k_d, k_o) : tuple of float
        ``k_d > 0`` and ``k_o >= 0``.
    """
    if not nu > 0:
        raise ValueError(f"nu must be > 0, got {nu}")
    # k_d = nu * x with x^2 + 2 (p_bar + r/2) x - 1/nu = 0
    k_d = nu * _positive_root(p_bar + 0.5 * r, 1.0 / nu)
    # k_o solves y^2 + 2 (k_d + nu r/2) y - 2 nu p_bar k_d = 0
    k_o = _positive_root(k_d + 0.5 * nu * r, 2.0 * nu * p_bar * k_d)
    return float(k_d), float(k_o)


def limit_gains_all_roots(p_bar: float, nu: float, r: float = 0.0) -> dict[tuple[str, str], tuple[float, complex]]:
    """All four root pairs of the limit system, keyed by ``(k_d branch, k_o branch)``.

    The ``k_o`` roots are complex when the discriminant for a given ``k_d``
    branch is negative. Only ``("+", "+")`` is stabilizing.
    """
    b = p_bar + 0.5 * r
    kd_roots = {"+": limit_gains(p_bar, nu, r)[0], "-": nu * (-b - np.sqrt(b * b + 1.0 / nu))}
    roots = {}
    for sd, kd in kd_roots.items():
        c = kd + 0.5 * nu * r
        disc = np.sqrt(complex(c * c + 2.0 * nu * p_bar * kd))
        for so, ko in (("+", -c + disc), ("-", -c - disc)):
            roots[(sd, so)] = (float(kd), ko.real if ko.imag == 0 else ko)
    roots[("+", "+")] = limit_gains(p_bar, nu, r)
    return roots


def residual_kd_ko(k_d: float, k_o: float, params: ModelParams) -> tuple[float, float]:
    """Right-hand sides of the scaled reduced Riccati system at ``(k_d, k_o)``."""
    n, p, nu, r, a = params.n_agents, params.p_bar, params.nu, params.r, params.alpha
    r1 = -r * k_d - 2.0 * p * a * (k_d - k_o / n) - (k_d * k_d + (a / n) * k_o * k_o) / nu + 1.0
    r2 = -r * k_o + 2.0 * p * (k_d - k_o / n) - (2.0 * k_d * k_o + a * k_o * k_o - k_o * k_o / n) / nu
    return float(r1), float(r2)


def residual_kd_ko_unscaled(k_d: float, k_o: float, params: ModelParams) -> tuple[float, float]:
    """Right-hand sides of the unscaled reduced system (entries of ``K`` itself)."""
    n, p, nu, r = params.n_agents, params.p_bar, params.nu, params.r
    r1 = -r * k_d - 2.0 * p * (n - 1) / n * (k_d - k_o) - (n / nu) * (k_d * k_d + (n - 1) * k_o * k_o) + 1.0 / n
    r2 = -r * k_o + 2.0 * p / n * (k_d - k_o) - (n / nu) * (2.0 * k_d * k_o + (n - 2) * k_o * k_o)
    return float(r1), float(r2)


def unscale_gains(k_d: float, k_o: float, n: int) -> tuple[float, float]:
    """Map scaled gains back to the entries of ``K``."""
    return k_d / n, k_o / (n * n)


def _jacobian(k_d: float, k_o: float, params: ModelParams) -> np.ndarray:
    n, p, nu, r, a = params.n_agents, params.p_bar, params.nu, params.r, params.alpha
    return np.array(
        [
            [-r - 2.0 * p * a - 2.0 * k_d / nu, 2.0 * p * a / n - 2.0 * a * k_o / (n * nu)],
            [2.0 * p - 2.0 * k_o / nu, -r - 2.0 * p / n - 2.0 * (k_d + a * k_o - k_o / n) / nu],
        ]
    )


def solve_finite_n_gains(
    params: ModelParams,
    *,
    tol: float = 1e-12,
    max_iter: int = 100,
    damping: float = 0.5,
) -> RiccatiGains:
    """Solve the scaled reduced system at finite ``N`` by damped Newton.

    The iteration starts from :func:`limit_gains`, so it follows the
    stabilizing branch. A Newton step is shortened by ``damping`` until the
    max-norm residual decreases.

    Raises
    ------
    NonConvergence
        If the residual is still above ``tol`` after ``max_iter`` iterations.
    """
    k = np.array(limit_gains(params.p_bar, params.nu, params.r))
    res = np.array(residual_kd_ko(k[0], k[1], params))
    for _ in range(max_iter):
        err = np.max(np.abs(res))
        if err <= tol:
            break
        step = np.linalg.solve(_jacobian(k[0], k[1], params), -res)
        lam = 1.0
        for _ in range(60):
            trial = k + lam * step
            trial_res = np.array(residual_kd_ko(trial[0], trial[1], params))
            if np.max(np.abs(trial_res)) < err:
                break
            lam *= damping
        else:
            # no decrease even for tiny steps: we sit at rounding level
            break
        k, res = trial, trial_res
    if np.max(np.abs(res)) > tol:
        raise NonConvergence(
            f"reduced Riccati Newton stalled at residual {np.max(np.abs(res)):.3e} for {params}"
        )
    return RiccatiGains(k_d=float(k[0]), k_o=float(k[1]), s=float(params.nu))


def _finite_horizon_rhs(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """Backward-time derivative ``d/dtau (k_d, k_o, s)`` with ``tau = T - t``.

    The terminal-value problem carries no discount, so ``r`` is ignored.
    """
    k_d, k_o, s = y
    n, p, nu, a = params.n_agents, params.p_bar, params.nu, params.alpha
    dkd = -2.0 * p * a * (k_d - k_o / n) - (k_d * k_d + (a / n) * k_o * k_o) / nu + 1.0
    dko = 2.0 * p * (k_d - k_o / n) - (2.0 * k_d * k_o + a * k_o * k_o - k_o * k_o / n) / nu
    g = k_d + a * k_o
    ds = g - s * g / nu
    return np.array([dkd, dko, ds])


def _n_steps(T: float, dt: float) -> int:
    if not T > 0 or not dt > 0:
        raise ValueError(f"T and dt must be positive, got T={T}, dt={dt}")
    return max(1, int(round(T / dt)))


def solve_finite_horizon_gains(params: ModelParams, T: float, dt: float) -> FiniteHorizonGains:
    """Integrate the reduced differential Riccati equations backward from ``K(T) = 0``.

    Uses classical RK4 in ``tau = T - t`` with ``round(T/dt)`` equal steps.
    The coefficient ``s(t)`` of the averaged control is integrated jointly.
    """
    n_steps = _n_steps(T, dt)
    h = T / n_steps
    ys = np.zeros((n_steps + 1, 3))
    y = np.zeros(3)
    for i in range(n_steps):
        k1 = _finite_horizon_rhs(y, params)
        k2 = _finite_horizon_rhs(y + 0.5 * h * k1, params)
        k3 = _finite_horizon_rhs(y + 0.5 * h * k2, params)
        k4 = _finite_horizon_rhs(y + h * k3, params)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[i + 1] = y
    # row i holds tau = i h, i.e. t = T - i h; flip to ascending t
    ys = ys[::-1]
    times = np.linspace(0.0, T, n_steps + 1)
    return FiniteHorizonGains(times=times, k_d=ys[:, 0].copy(), k_o=ys[:, 1].copy(), s=ys[:, 2].copy())


def solve_s(
    params: ModelParams,
    k_d: Schedule,
    k_o: Schedule,
    mode: str = "algebraic",
    T: float | None = None,
    dt: float | None = None,
):
    """Coefficient ``s`` of the mean-input term in the averaged control.

    In ``"algebraic"`` mode this is exactly ``nu``. In ``"finite_horizon"``
    mode ``-ds/dt = g - (s/nu) g`` with ``g = k_d + alpha(N) k_o`` is
    integrated backward from ``s(T) = 0``; the gains may be constants or
    callables of ``t``.

    Returns
    -------
    float or (times, s)
    """
    if mode == "algebraic":
        return float(params.nu)
    if mode != "finite_horizon":
        raise ValueError(f"unknown mode {mode!r}")
    if T is None or dt is None:
        raise ValueError("finite_horizon mode needs T and dt")
    kd_of = k_d if callable(k_d) else (lambda t, c=float(k_d): c)
    ko_of = k_o if callable(k_o) else (lambda t, c=float(k_o): c)
    a, nu = params.alpha, params.nu

    def rhs(tau, s):
        t = T - tau
        g = kd_of(t) + a * ko_of(t)
        return g - s * g / nu

    n_steps = _n_steps(T, dt)
    h = T / n_steps
    out = np.zeros(n_steps + 1)
    s = 0.0
    for i in range(n_steps):
        tau = i * h
        q1 = rhs(tau, s)
        q2 = rhs(tau + 0.5 * h, s + 0.5 * h * q1)
        q3 = rhs(tau + 0.5 * h, s + 0.5 * h * q2)
        q4 = rhs(tau + h, s + h * q3)
        s = s + (h / 6.0) * (q1 + 2 * q2 + 2 * q3 + q4)
        out[i + 1] = s
    return np.linspace(0.0, T, n_steps + 1), out[::-1].copy()
