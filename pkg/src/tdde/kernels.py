"""Hot inner loops.

Every kernel exists twice: a loop form compiled with numba, and a
vectorized numpy form. ``USE_NUMBA`` (env ``TDDE_NUMBA``) picks which one
the public names point at; both stay importable for the benchmark and the
agreement tests.
"""
import numpy as np
from scipy.special import logsumexp

from ._jit import USE_NUMBA, njit

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range

__all__ = [
    "softmin_rows",
    "softmin_cols",
    "kde_logsumexp",
    "duffing_paths",
    "bouc_wen_paths",
    "USE_NUMBA",
]


# ---------------------------------------------------------------------------
# Sinkhorn soft-min updates
#   rows: out_i = -eps * log sum_j exp((h_j - C_ij) / eps)
#   cols: out_j = -eps * log sum_i exp((h_i - C_ij) / eps)


def _softmin_rows_loop(C, h, eps):
    n, m = C.shape
    out = np.empty(n)
    for i in prange(n):
        mx = -np.inf
        for j in range(m):
            v = (h[j] - C[i, j]) / eps
            if v > mx:
                mx = v
        s = 0.0
        for j in range(m):
            s += np.exp((h[j] - C[i, j]) / eps - mx)
        out[i] = -eps * (mx + np.log(s))
    return out


def _softmin_cols_loop(C, h, eps):
    n, m = C.shape
    mx = np.full(m, -np.inf)
    for i in range(n):
        for j in range(m):
            v = (h[i] - C[i, j]) / eps
            if v > mx[j]:
                mx[j] = v
    s = np.zeros(m)
    for i in range(n):
        for j in range(m):
            s[j] += np.exp((h[i] - C[i, j]) / eps - mx[j])
    return -eps * (mx + np.log(s))


def _softmin_rows_numpy(C, h, eps):
    return -eps * logsumexp((h[None, :] - C) / eps, axis=1)


def _softmin_cols_numpy(C, h, eps):
    return -eps * logsumexp((h[:, None] - C) / eps, axis=0)


# ---------------------------------------------------------------------------
# Gaussian product-kernel log-sum-exp
#   out_q = log sum_k exp(-0.5 * || (x_q - d_k) * inv_h ||^2)


def _kde_logsumexp_loop(Xq, data, inv_h):
    nq, dim = Xq.shape
    nd = data.shape[0]
    out = np.empty(nq)
    for q in prange(nq):
        e = np.empty(nd)
        mx = -np.inf
        for k in range(nd):
            acc = 0.0
            for c in range(dim):
                u = (Xq[q, c] - data[k, c]) * inv_h[c]
                acc += u * u
            e[k] = -0.5 * acc
            if e[k] > mx:
                mx = e[k]
        s = 0.0
        for k in range(nd):
            s += np.exp(e[k] - mx)
        out[q] = mx + np.log(s)
    return out


def _kde_logsumexp_numpy(Xq, data, inv_h, chunk=256):
    Zd = data * inv_h
    out = np.empty(Xq.shape[0])
    for start in range(0, Xq.shape[0], chunk):
        Zq = Xq[start:start + chunk] * inv_h
        sq = (Zq ** 2).sum(1)[:, None] - 2.0 * Zq @ Zd.T + (Zd ** 2).sum(1)[None, :]
        np.maximum(sq, 0.0, out=sq)
        out[start:start + chunk] = logsumexp(-0.5 * sq, axis=1)
    return out


# ---------------------------------------------------------------------------
# Oscillator path integration: RK4 on the drift, then the pre-scaled noise
# increment is added to the velocity slot. ``rec_steps`` holds the step
# counts at which states are stored (sorted, may start at 0).


def _duffing_paths_loop(x0, noise, rec_steps, dt, zeta, omega0, eps_nl):
    n_paths = x0.shape[0]
    n_steps = noise.shape[0]
    n_rec = rec_steps.shape[0]
    out = np.empty((n_rec, n_paths, 2))
    c1 = 2.0 * zeta * omega0
    w2 = omega0 * omega0
    for p in range(n_paths):
        y = x0[p, 0]
        v = x0[p, 1]
        r = 0
        while r < n_rec and rec_steps[r] == 0:
            out[r, p, 0] = y
            out[r, p, 1] = v
            r += 1
        for s in range(n_steps):
            k1y = v
            k1v = -c1 * v - w2 * (y + eps_nl * y * y * y)
            y2 = y + 0.5 * dt * k1y
            v2 = v + 0.5 * dt * k1v
            k2y = v2
            k2v = -c1 * v2 - w2 * (y2 + eps_nl * y2 * y2 * y2)
            y3 = y + 0.5 * dt * k2y
            v3 = v + 0.5 * dt * k2v
            k3y = v3
            k3v = -c1 * v3 - w2 * (y3 + eps_nl * y3 * y3 * y3)
            y4 = y + dt * k3y
            v4 = v + dt * k3v
            k4y = v4
            k4v = -c1 * v4 - w2 * (y4 + eps_nl * y4 * y4 * y4)
            y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) + noise[s, p]
            while r < n_rec and rec_steps[r] == s + 1:
                out[r, p, 0] = y
                out[r, p, 1] = v
                r += 1
    return out


def _duffing_drift(y, v, c1, w2, eps_nl):
    return v, -c1 * v - w2 * (y + eps_nl * y ** 3)


def _duffing_paths_numpy(x0, noise, rec_steps, dt, zeta, omega0, eps_nl):
    c1 = 2.0 * zeta * omega0
    w2 = omega0 * omega0
    y = x0[:, 0].copy()
    v = x0[:, 1].copy()
    out = np.empty((len(rec_steps), x0.shape[0], 2))
    r = 0
    while r < len(rec_steps) and rec_steps[r] == 0:
        out[r, :, 0], out[r, :, 1] = y, v
        r += 1
    # blown-up paths overflow harmlessly; the caller detects and resamples them
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(noise.shape[0]):
            k1y, k1v = _duffing_drift(y, v, c1, w2, eps_nl)
            k2y, k2v = _duffing_drift(y + 0.5 * dt * k1y, v + 0.5 * dt * k1v, c1, w2, eps_nl)
            k3y, k3v = _duffing_drift(y + 0.5 * dt * k2y, v + 0.5 * dt * k2v, c1, w2, eps_nl)
            k4y, k4v = _duffing_drift(y + dt * k3y, v + dt * k3v, c1, w2, eps_nl)
            y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
            v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) + noise[s]
            while r < len(rec_steps) and rec_steps[r] == s + 1:
                out[r, :, 0], out[r, :, 1] = y, v
                r += 1
    return out


def _bw_drift_scalar(y, z, v, c1, w2, alpha_e, gamma, beta, nu_exp, a_bw):
    az = abs(z)
    if nu_exp == 1.0:
        zpow = az
    elif nu_exp == 2.0:
        zpow = az * az
    else:
        zpow = az ** nu_exp
    # |z|^(nu-1) z written as sign(z)|z|^nu so z = 0 stays finite for nu < 1
    sz = 0.0
    if z > 0.0:
        sz = zpow
    elif z < 0.0:
        sz = -zpow
    dz = a_bw * v - gamma * abs(v) * sz - beta * v * zpow
    dv = -c1 * v - w2 * (alpha_e * y + (1.0 - alpha_e) * z)
    return v, dz, dv


def _bouc_wen_paths_loop(x0, noise, rec_steps, dt, zeta, omega0, alpha_e, gamma,
                         beta, nu_exp, a_bw):
    n_paths = x0.shape[0]
    n_steps = noise.shape[0]
    n_rec = rec_steps.shape[0]
    out = np.empty((n_rec, n_paths, 3))
    c1 = 2.0 * zeta * omega0
    w2 = omega0 * omega0
    for p in range(n_paths):
        y = x0[p, 0]
        z = x0[p, 1]
        v = x0[p, 2]
        r = 0
        while r < n_rec and rec_steps[r] == 0:
            out[r, p, 0] = y
            out[r, p, 1] = z
            out[r, p, 2] = v
            r += 1
        for s in range(n_steps):
            a1, b1, c1_ = _bw_drift_scalar(y, z, v, c1, w2, alpha_e, gamma, beta, nu_exp, a_bw)
            a2, b2, c2_ = _bw_drift_scalar(y + 0.5 * dt * a1, z + 0.5 * dt * b1,
                                           v + 0.5 * dt * c1_, c1, w2, alpha_e, gamma,
                                           beta, nu_exp, a_bw)
            a3, b3, c3_ = _bw_drift_scalar(y + 0.5 * dt * a2, z + 0.5 * dt * b2,
                                           v + 0.5 * dt * c2_, c1, w2, alpha_e, gamma,
                                           beta, nu_exp, a_bw)
            a4, b4, c4_ = _bw_drift_scalar(y + dt * a3, z + dt * b3, v + dt * c3_, c1, w2,
                                           alpha_e, gamma, beta, nu_exp, a_bw)
            y = y + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            z = z + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            v = v + dt / 6.0 * (c1_ + 2.0 * c2_ + 2.0 * c3_ + c4_) + noise[s, p]
            while r < n_rec and rec_steps[r] == s + 1:
                out[r, p, 0] = y
                out[r, p, 1] = z
                out[r, p, 2] = v
                r += 1
    return out


def _bw_drift(y, z, v, c1, w2, alpha_e, gamma, beta, nu_exp, a_bw):
    zpow = np.abs(z) ** nu_exp
    sz = np.sign(z) * zpow
    dz = a_bw * v - gamma * np.abs(v) * sz - beta * v * zpow
    dv = -c1 * v - w2 * (alpha_e * y + (1.0 - alpha_e) * z)
    return v, dz, dv


def _bouc_wen_paths_numpy(x0, noise, rec_steps, dt, zeta, omega0, alpha_e, gamma,
                          beta, nu_exp, a_bw):
    c1 = 2.0 * zeta * omega0
    w2 = omega0 * omega0
    args = (c1, w2, alpha_e, gamma, beta, nu_exp, a_bw)
    y, z, v = (x0[:, k].copy() for k in range(3))
    out = np.empty((len(rec_steps), x0.shape[0], 3))
    r = 0
    while r < len(rec_steps) and rec_steps[r] == 0:
        out[r, :, 0], out[r, :, 1], out[r, :, 2] = y, z, v
        r += 1
    # blown-up paths overflow harmlessly; the caller detects and resamples them
    with np.errstate(over="ignore", invalid="ignore"):
        for s in range(noise.shape[0]):
            a1, b1, e1 = _bw_drift(y, z, v, *args)
            a2, b2, e2 = _bw_drift(y + 0.5 * dt * a1, z + 0.5 * dt * b1, v + 0.5 * dt * e1, *args)
            a3, b3, e3 = _bw_drift(y + 0.5 * dt * a2, z + 0.5 * dt * b2, v + 0.5 * dt * e2, *args)
            a4, b4, e4 = _bw_drift(y + dt * a3, z + dt * b3, v + dt * e3, *args)
            y = y + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            z = z + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            v = v + dt / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4) + noise[s]
            while r < len(rec_steps) and rec_steps[r] == s + 1:
                out[r, :, 0], out[r, :, 1], out[r, :, 2] = y, z, v
                r += 1
    return out


if USE_NUMBA:
    softmin_rows_jit = njit(_softmin_rows_loop, parallel=True)
    softmin_cols_jit = njit(_softmin_cols_loop)
    kde_logsumexp_jit = njit(_kde_logsumexp_loop, parallel=True)
    duffing_paths_jit = njit(_duffing_paths_loop)
    _bw_drift_scalar = njit(_bw_drift_scalar, inline="always")
    bouc_wen_paths_jit = njit(_bouc_wen_paths_loop)

    softmin_rows = softmin_rows_jit
    softmin_cols = softmin_cols_jit
    kde_logsumexp = kde_logsumexp_jit
    duffing_paths = duffing_paths_jit
    bouc_wen_paths = bouc_wen_paths_jit
else:
    softmin_rows_jit = softmin_cols_jit = kde_logsumexp_jit = None
    duffing_paths_jit = bouc_wen_paths_jit = None

    softmin_rows = _softmin_rows_numpy
    softmin_cols = _softmin_cols_numpy
    kde_logsumexp = _kde_logsumexp_numpy
    duffing_paths = _duffing_paths_numpy
    bouc_wen_paths = _bouc_wen_paths_numpy

NUMPY_KERNELS = {
    "softmin_rows": _softmin_rows_numpy,
    "softmin_cols": _softmin_cols_numpy,
    "kde_logsumexp": _kde_logsumexp_numpy,
    "duffing_paths": _duffing_paths_numpy,
    "bouc_wen_paths": _bouc_wen_paths_numpy,
}
JIT_KERNELS = {
    "softmin_rows": softmin_rows_jit,
    "softmin_cols": softmin_cols_jit,
    "kde_logsumexp": kde_logsumexp_jit,
    "duffing_paths": duffing_paths_jit,
    "bouc_wen_paths": bouc_wen_paths_jit,
}
