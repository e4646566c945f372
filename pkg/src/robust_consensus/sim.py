"""Time integration of the uncertain agent system and the plotted statistics."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import ConfigError
from .gpc import (
    GpcBasis,
    averaged_system,
    default_moments,
    feedback_system,
    project_initial,
    reconstruct_moments,
)
from .model import ModelParams, UncertaintySpec, averaged_control, drift
from .quadrature import BasisMoments
from .riccati import RiccatiGains

CONTROLS = ("feedback", "feedback_corrected", "averaged")


@dataclass(frozen=True)
class MomentSeries:
    """Per-agent mean and variance at the output times.

    ``mean`` and ``variance`` have shape ``(T, N, d)``; the band arrays have
    shape ``(T, d)`` and are filled by :func:`confidence_band`.
    """

    times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    band_low: Optional[np.ndarray] = None
    band_high: Optional[np.ndarray] = None
    n_samples: Optional[int] = None

    @property
    def agent_mean(self) -> np.ndarray:
        """Mean over agents, ``(T, d)``."""
        return self.mean.mean(axis=1)

    @property
    def band_width(self) -> np.ndarray:
        if self.band_low is None:
            raise ValueError("confidence band not computed")
        return self.band_high - self.band_low


def rk4_step(rhs: Callable, y, dt: float, t: float = 0.0):
    """One classical Runge-Kutta step for ``y' = rhs(t, y)``.

    ``y`` may be any object supporting ``+`` and scalar ``*`` (arrays,
    coefficient tensors).
    """
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = rhs(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def time_grid(T: float, dt: float, n_snapshots: int) -> tuple[int, int, float]:
    """Step count, snapshot stride and the exact step so that snapshots land on steps.

    The step count is ``round(T/dt)`` rounded up to a multiple of ``n_snapshots``.
    """
    if not T > 0 or not dt > 0:
        raise ConfigError(f"T and dt must be positive, got T={T}, dt={dt}")
    if n_snapshots < 1:
        raise ConfigError(f"need at least one snapshot, got {n_snapshots}")
    n_steps = max(1, int(round(T / dt)))
    stride = max(1, -(-n_steps // n_snapshots))
    n_steps = stride * n_snapshots
    return n_steps, stride, T / n_steps


def confidence_band(series: MomentSeries) -> MomentSeries:
    """Agent-averaged mean minus/plus the largest per-agent standard deviation."""
    centre = series.mean.mean(axis=1)
    spread = np.sqrt(np.maximum(series.variance, 0.0)).max(axis=1)
    return dataclasses.replace(series, band_low=centre - spread, band_high=centre + spread)


def _check(params: ModelParams, unc: UncertaintySpec, control: str) -> None:
    unc.check(params)
    if control not in CONTROLS:
        raise ConfigError(f"unknown control {control!r}; expected one of {CONTROLS}")


def _initial_state(v0, params: ModelParams) -> np.ndarray:
    v0 = np.asarray(v0, dtype=float)
    if v0.ndim == 1:
        v0 = v0[:, None]
    if v0.shape != (params.n_agents, params.dim):
        raise ConfigError(f"initial state has shape {v0.shape}, expected {(params.n_agents, params.dim)}")
    return v0


def mode_system(
    params: ModelParams,
    unc: UncertaintySpec,
    basis: GpcBasis,
    gains: RiccatiGains,
    control: str,
    moments: BasisMoments,
):
    """The projected linear generator for the requested control."""
    if control == "averaged":
        return averaged_system(params, gains, gains.s, moments, basis)
    return feedback_system(params, gains, moments, basis, corrected=control == "feedback_corrected")


def run_micro_sg(
    params: ModelParams,
    unc: UncertaintySpec,
    basis: GpcBasis,
    gains: RiccatiGains,
    control: str,
    T: float,
    dt: float,
    v0,
    n_snapshots: int = 100,
    moments: BasisMoments | None = None,
    gain_schedule: Callable[[float], RiccatiGains] | None = None,
) -> MomentSeries:
    """Integrate the stochastic Galerkin system and record moments.

    Parameters
    ----------
    gain_schedule : callable, optional
        Time-dependent gains ``t -> RiccatiGains``; when given, the generator
        is rebuilt at every RK4 stage and the numpy path is used.

    Returns
    -------
    MomentSeries with ``n_snapshots + 1`` equispaced times including 0 and T,
    confidence band included.
    """
    _check(params, unc, control)
    if tuple(basis.components) != tuple(unc.components):
        raise ConfigError("chaos basis does not match the uncertainty specification")
    v0 = _initial_state(v0, params)
    moments = moments if moments is not None else default_moments(basis)
    if moments.m0.shape != (basis.z, basis.order + 1):
        raise ConfigError("basis moments do not match the basis")
    n_steps, stride, h = time_grid(T, dt, n_snapshots)
    x = project_initial(v0, basis).data

    means = [x[:, 0, :].copy()]
    variances = [np.zeros_like(v0)]
    coeffs = project_initial(v0, basis)
    if gain_schedule is None:
        system = mode_system(params, unc, basis, gains, control, moments)
        for _ in range(n_snapshots):
            x = kernels.advance_modes(x, system, h, stride)
            m, v = reconstruct_moments(coeffs.replace(x), moments)
            means.append(m)
            variances.append(v)
    else:

        def rhs(t, y):
            system = mode_system(params, unc, basis, gain_schedule(t), control, moments)
            return system.apply(y)

        t = 0.0
        for _ in range(n_snapshots):
            for _ in range(stride):
                x = rk4_step(rhs, x, h, t)
                t += h
            m, v = reconstruct_moments(coeffs.replace(x), moments)
            means.append(m)
            variances.append(v)
    times = np.linspace(0.0, n_steps * h, n_snapshots + 1)
    return confidence_band(MomentSeries(times=times, mean=np.array(means), variance=np.array(variances)))


def averaged_stage_controls(
    params: ModelParams,
    unc: UncertaintySpec,
    gains: RiccatiGains,
    v0: np.ndarray,
    h: float,
    n_steps: int,
) -> np.ndarray:
    """Averaged control at the four RK4 stages of every step, ``(n_steps, 4, N, d)``.

    The expected state obeys a closed deterministic equation (the inputs
    enter additively), which is integrated with the same RK4 steps so that
    each sampled path sees the control of the augmented system.
    """
    mean_inputs = np.full((1, params.dim), unc.mean_sum)[None]  # (1, Z=1, d)
    out = np.empty((n_steps, 4) + v0.shape)

    def f(m):
        u = averaged_control(m, gains, params, unc)
        return drift(m, mean_inputs[0], u, params), u

    m = v0.copy()
    for step in range(n_steps):
        q1, out[step, 0] = f(m)
        q2, out[step, 1] = f(m + 0.5 * h * q1)
        q3, out[step, 2] = f(m + 0.5 * h * q2)
        q4, out[step, 3] = f(m + h * q3)
        m = m + (h / 6.0) * (q1 + 2 * q2 + 2 * q3 + q4)
    return out


def draw_inputs(unc: UncertaintySpec, n_samples: int, dim: int, seed: int) -> np.ndarray:
    """Input draws ``(n_samples, Z, d)`` from a counter-based Philox stream keyed by ``seed``."""
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    return unc.sample(rng, n_samples, dim)


def run_micro_sampled(
    params: ModelParams,
    unc: UncertaintySpec,
    gains: RiccatiGains,
    control: str,
    T: float,
    dt: float,
    n_samples: int,
    seed: int,
    v0,
    n_snapshots: int = 100,
) -> MomentSeries:
    """Monte-Carlo moments from independently integrated sample paths.

    Each sample draws one constant input ``theta`` and integrates the agent
    drift with the chosen control by RK4. The sample variance uses the
    ``n - 1`` denominator (zero for a single sample).
    """
    _check(params, unc, control)
    if n_samples < 1:
        raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
    v0 = _initial_state(v0, params)
    n_steps, stride, h = time_grid(T, dt, n_snapshots)
    theta_total = draw_inputs(unc, n_samples, params.dim, seed).sum(axis=1)
    if control == "averaged":
        ext = averaged_stage_controls(params, unc, gains, v0, h, n_steps)
        feedback, const = False, 0.0
    else:
        ext = np.zeros((n_steps, 4) + v0.shape)
        feedback = True
        const = -unc.mean_sum if control == "feedback_corrected" else 0.0
    mean, m2, count = kernels.sampled_moments(
        v0, theta_total, params, gains.k_d, gains.k_o, feedback, ext, const, h, n_steps, stride
    )
    variance = m2 / (count - 1) if count > 1 else np.zeros_like(m2)
    times = np.linspace(0.0, n_steps * h, n_snapshots + 1)
    series = MomentSeries(times=times, mean=mean, variance=variance, n_samples=int(count))
    return confidence_band(series)
