"""Inner loops of the simulations, in numba and in plain numpy.

Each public function dispatches on :func:`robust_consensus._accel.backend`.
The numba versions are fused loops parallel over independent blocks (modes,
sample chunks, quadrature nodes); reductions across blocks always happen in
a fixed order so results do not depend on the thread count. The numpy
versions are the reference path and are what runs when
``ROBUST_CONSENSUS_BACKEND=numpy``.
"""

from __future__ import annotations

import numpy as np

from . import _accel
from ._accel import njit, prange
from .model import ModelParams, drift

SAMPLE_CHUNK = 512


# ---------------------------------------------------------------------------
# stochastic Galerkin mode integration


@njit(parallel=True, cache=True)
def _advance_modes_nb(x, a_self, a_mean, forcing, b_self, b_mean, b_const, h, n_steps):
    n, n_modes, dim = x.shape
    out = np.empty_like(x)
    for p in prange(n_modes):
        zero = 1.0 if p == 0 else 0.0
        cs = a_self + zero * b_self
        cm = a_mean + zero * b_mean
        cf = forcing[p] + zero * b_const
        y = np.empty(n)
        tmp = np.empty(n)
        k1 = np.empty(n)
        k2 = np.empty(n)
        k3 = np.empty(n)
        k4 = np.empty(n)
        for c in range(dim):
            for i in range(n):
                y[i] = x[i, p, c]
            for _ in range(n_steps):
                m = 0.0
                for i in range(n):
                    m += y[i]
                m /= n
                for i in range(n):
                    k1[i] = cs * y[i] + cm * m + cf
                    tmp[i] = y[i] + 0.5 * h * k1[i]
                m = 0.0
                for i in range(n):
                    m += tmp[i]
                m /= n
                for i in range(n):
                    k2[i] = cs * tmp[i] + cm * m + cf
                for i in range(n):
                    tmp[i] = y[i] + 0.5 * h * k2[i]
                m = 0.0
                for i in range(n):
                    m += tmp[i]
                m /= n
                for i in range(n):
                    k3[i] = cs * tmp[i] + cm * m + cf
                for i in range(n):
                    tmp[i] = y[i] + h * k3[i]
                m = 0.0
                for i in range(n):
                    m += tmp[i]
                m /= n
                for i in range(n):
                    k4[i] = cs * tmp[i] + cm * m + cf
                for i in range(n):
                    y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(n):
                out[i, p, c] = y[i]
    return out


def _advance_modes_np(x, a_self, a_mean, forcing, b_self, b_mean, b_const, h, n_steps):
    f = forcing[None, :, None]

    def rhs(y):
        mean = y.mean(axis=0, keepdims=True)
        out = a_self * y + a_mean * mean + f
        out[:, 0, :] += b_self * y[:, 0, :] + b_mean * mean[:, 0, :] + b_const
        return out

    y = x.copy()
    for _ in range(n_steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def advance_modes(x: np.ndarray, system, h: float, n_steps: int) -> np.ndarray:
    """Advance ``(N, P, d)`` chaos coefficients by ``n_steps`` RK4 steps of size ``h``.

    ``system`` is a :class:`robust_consensus.gpc.LinearModeSystem`.
    """
    args = (
        np.ascontiguousarray(x, dtype=np.float64),
        float(system.a_self),
        float(system.a_mean),
        np.ascontiguousarray(system.forcing, dtype=np.float64),
        float(system.b_self),
        float(system.b_mean),
        float(system.b_const),
        float(h),
        int(n_steps),
    )
    if _accel.USE_NUMBA:
        return _advance_modes_nb(*args)
    return _advance_modes_np(*args)


# ---------------------------------------------------------------------------
# sampled trajectories


@njit(cache=True)
def _path_stage(y, n, dim, p_bar, nu, k_d, k_o, feedback, ext, const, theta, out):
    for c in range(dim):
        m = 0.0
        for i in range(n):
            m += y[i, c]
        m /= n
        for i in range(n):
            u = ext[i, c] + const
            if feedback:
                u -= ((k_d - k_o / n) * y[i, c] + k_o * m) / nu
            out[i, c] = p_bar * (m - y[i, c]) + u + theta[c]


@njit(parallel=True, cache=True)
def _sampled_moments_nb(v0, theta_total, p_bar, nu, k_d, k_o, feedback, ext, const, h, n_steps, stride, chunk):
    n, dim = v0.shape
    n_samples = theta_total.shape[0]
    n_snap = n_steps // stride + 1
    n_chunks = (n_samples + chunk - 1) // chunk
    c_mean = np.zeros((n_chunks, n_snap, n, dim))
    c_m2 = np.zeros((n_chunks, n_snap, n, dim))
    c_cnt = np.zeros(n_chunks)
    for b in prange(n_chunks):
        y = np.empty((n, dim))
        tmp = np.empty((n, dim))
        k1 = np.empty((n, dim))
        k2 = np.empty((n, dim))
        k3 = np.empty((n, dim))
        k4 = np.empty((n, dim))
        cnt = 0.0
        for s in range(b * chunk, min(n_samples, (b + 1) * chunk)):
            cnt += 1.0
            theta = theta_total[s]
            y[:, :] = v0
            snap = 0
            for step in range(n_steps + 1):
                if step % stride == 0:
                    for i in range(n):
                        for c in range(dim):
                            delta = y[i, c] - c_mean[b, snap, i, c]
                            c_mean[b, snap, i, c] += delta / cnt
                            c_m2[b, snap, i, c] += delta * (y[i, c] - c_mean[b, snap, i, c])
                    snap += 1
                if step == n_steps:
                    break
                _path_stage(y, n, dim, p_bar, nu, k_d, k_o, feedback, ext[step, 0], const, theta, k1)
                for i in range(n):
                    for c in range(dim):
                        tmp[i, c] = y[i, c] + 0.5 * h * k1[i, c]
                _path_stage(tmp, n, dim, p_bar, nu, k_d, k_o, feedback, ext[step, 1], const, theta, k2)
                for i in range(n):
                    for c in range(dim):
                        tmp[i, c] = y[i, c] + 0.5 * h * k2[i, c]
                _path_stage(tmp, n, dim, p_bar, nu, k_d, k_o, feedback, ext[step, 2], const, theta, k3)
                for i in range(n):
                    for c in range(dim):
                        tmp[i, c] = y[i, c] + h * k3[i, c]
                _path_stage(tmp, n, dim, p_bar, nu, k_d, k_o, feedback, ext[step, 3], const, theta, k4)
                for i in range(n):
                    for c in range(dim):
                        y[i, c] += (h / 6.0) * (k1[i, c] + 2.0 * k2[i, c] + 2.0 * k3[i, c] + k4[i, c])
        c_cnt[b] = cnt
    return c_mean, c_m2, c_cnt


def _sampled_moments_np(v0, theta_total, p_bar, nu, k_d, k_o, feedback, ext, const, h, n_steps, stride, chunk):
    from .model import apply_gain_matrix

    n, dim = v0.shape
    params = ModelParams(n_agents=n, dim=dim, p_bar=p_bar, nu=nu)
    n_samples = theta_total.shape[0]
    n_snap = n_steps // stride + 1
    n_chunks = (n_samples + chunk - 1) // chunk
    c_mean = np.zeros((n_chunks, n_snap, n, dim))
    c_m2 = np.zeros((n_chunks, n_snap, n, dim))
    c_cnt = np.zeros(n_chunks)
    for b in range(n_chunks):
        theta = theta_total[b * chunk : (b + 1) * chunk][:, None, :]  # (S, Z=1, d)
        y = np.broadcast_to(v0, (theta.shape[0], n, dim)).copy()

        def rhs(state, ext_stage):
            u = ext_stage + const
            if feedback:
                u = u - apply_gain_matrix(state, k_d, k_o) / nu
            return drift(state, theta, u, params)

        snap = 0
        for step in range(n_steps + 1):
            if step % stride == 0:
                c_mean[b, snap] = y.mean(axis=0)
                c_m2[b, snap] = ((y - c_mean[b, snap]) ** 2).sum(axis=0)
                snap += 1
            if step == n_steps:
                break
            q1 = rhs(y, ext[step, 0])
            q2 = rhs(y + 0.5 * h * q1, ext[step, 1])
            q3 = rhs(y + 0.5 * h * q2, ext[step, 2])
            q4 = rhs(y + h * q3, ext[step, 3])
            y = y + (h / 6.0) * (q1 + 2 * q2 + 2 * q3 + q4)
        c_cnt[b] = theta.shape[0]
    return c_mean, c_m2, c_cnt


def _merge_chunks(c_mean, c_m2, c_cnt):
    mean = c_mean[0].copy()
    m2 = c_m2[0].copy()
    cnt = c_cnt[0]
    for b in range(1, len(c_cnt)):
        nb = c_cnt[b]
        delta = c_mean[b] - mean
        tot = cnt + nb
        mean += delta * (nb / tot)
        m2 += c_m2[b] + delta * delta * (cnt * nb / tot)
        cnt = tot
    return mean, m2, cnt


def sampled_moments(
    v0: np.ndarray,
    theta_total: np.ndarray,
    params: ModelParams,
    k_d: float,
    k_o: float,
    feedback: bool,
    ext: np.ndarray,
    const: float,
    h: float,
    n_steps: int,
    stride: int,
    chunk: int = SAMPLE_CHUNK,
) -> tuple[np.ndarray, np.ndarray, int]:
    """RK4 on every sampled trajectory, accumulating per-snapshot statistics.

    Parameters
    ----------
    v0 : (N, d) deterministic initial state.
    theta_total : (S, d) summed input draw ``sum_k theta_k`` of each sample.
    feedback : apply the state feedback with gains ``(k_d, k_o)``.
    ext : (n_steps, 4, N, d) additive control at each RK4 stage.
    const : additive constant control (e.g. the mean-input correction).

    Returns
    -------
    mean, m2 : arrays of shape (n_snap, N, d); ``m2`` is the sum of squared
        deviations from the mean.
    count : number of samples.
    """
    args = (
        np.ascontiguousarray(v0, dtype=np.float64),
        np.ascontiguousarray(theta_total, dtype=np.float64),
        float(params.p_bar),
        float(params.nu),
        float(k_d),
        float(k_o),
        bool(feedback),
        np.ascontiguousarray(ext, dtype=np.float64),
        float(const),
        float(h),
        int(n_steps),
        int(stride),
        int(chunk),
    )
    if _accel.USE_NUMBA:
        parts = _sampled_moments_nb(*args)
    else:
        parts = _sampled_moments_np(*args)
    return _merge_chunks(*parts)


# ---------------------------------------------------------------------------
# histograms of chaos realizations at quadrature nodes


@njit(parallel=True, cache=True)
def _bin_columns(vals, lo, hi, bins, dens, clipped, offset):
    n_part, nb = vals.shape
    width = (hi - lo) / bins
    for q in prange(nb):
        for i in range(n_part):
            v = vals[i, q]
            k = int(np.floor((v - lo) / width))
            if k < 0:
                k = 0
                clipped[offset + q] += 1
            elif k >= bins:
                if v > hi:
                    clipped[offset + q] += 1
                k = bins - 1
            dens[offset + q, k] += 1.0
        for k in range(bins):
            dens[offset + q, k] /= n_part * width


def _node_histograms_nb(x, phi, lo, hi, bins, block=64):
    # the realizations come from one BLAS product per block of nodes; the
    # binning loop is compiled and parallel over nodes
    n_nodes = phi.shape[0]
    dens = np.zeros((n_nodes, bins))
    clipped = np.zeros(n_nodes, dtype=np.int64)
    for start in range(0, n_nodes, block):
        vals = np.ascontiguousarray(x @ phi[start : start + block].T)
        _bin_columns(vals, lo, hi, bins, dens, clipped, start)
    return dens, clipped


def _node_histograms_np(x, phi, lo, hi, bins, block=64):
    n_part = x.shape[0]
    n_nodes = phi.shape[0]
    width = (hi - lo) / bins
    dens = np.zeros((n_nodes, bins))
    clipped = np.zeros(n_nodes, dtype=np.int64)
    for start in range(0, n_nodes, block):
        vals = x @ phi[start : start + block].T  # (n_part, nb)
        k = np.floor((vals - lo) / width)
        clipped[start : start + block] = np.sum((k < 0) | (vals > hi), axis=0)
        k = np.clip(k, 0, bins - 1).astype(np.int64)
        nb = vals.shape[1]
        flat = (k + bins * np.arange(nb)[None, :]).ravel()
        counts = np.bincount(flat, minlength=nb * bins).reshape(nb, bins)
        dens[start : start + nb] = counts / (n_part * width)
    return dens, clipped


def node_histograms(x: np.ndarray, phi: np.ndarray, lo: float, hi: float, bins: int):
    """Density histograms of ``x @ phi[q]`` over particles, one per node ``q``.

    Parameters
    ----------
    x : (n_particles, P) chaos coefficients of a scalar state.
    phi : (n_nodes, P) basis products at the quadrature nodes.

    Returns
    -------
    densities : (n_nodes, bins), each row integrates to one over ``[lo, hi]``.
    clipped : (n_nodes,) number of values that fell outside and were clipped.
    """
    args = (
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(phi, dtype=np.float64),
        float(lo),
        float(hi),
        int(bins),
    )
    if _accel.USE_NUMBA:
        return _node_histograms_nb(*args)
    return _node_histograms_np(*args)
