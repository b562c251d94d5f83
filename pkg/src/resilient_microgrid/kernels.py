"""Hot loops: closed-loop right-hand side and fixed-step RK4 blocks.

Two interchangeable paths exist. The loop-based kernels are compiled with
numba; the vectorized numpy versions are used when numba is disabled via
``RESILIENT_MG_DISABLE_NUMBA=1`` and also serve to reconstruct outputs for
whole trajectories at once.

State layout (length 7N): delta, omega_n, V_n, phi_f, phi_hat_f, phi_v,
phi_hat_v. The attack table ``mu`` for a block of ``n`` steps starting at
step ``k0`` holds values at the half-step times ``(2 k0 + j) dt / 2``,
``j = 0..2n``, shape ``(2n + 1, 2, N)``.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ._accel import HAVE_NUMBA, njit
from .control import ETA_FLOOR

N_BLOCKS = 7

STATUS_OK = 0
STATUS_DIVERGED = 1


class KernelParams(NamedTuple):
    adjacency: np.ndarray
    pinning: np.ndarray
    m_P: np.ndarray
    n_Q: np.ndarray
    b: np.ndarray
    w: np.ndarray  # q / (1 + q n_Q)
    omega_ref: np.ndarray
    v_ref: np.ndarray
    c_f: np.ndarray
    c_v: np.ndarray
    beta_f: np.ndarray
    beta_v: np.ndarray
    upsilon_f: np.ndarray
    upsilon_v: np.ndarray
    kappa_f: np.ndarray
    kappa_v: np.ndarray
    alpha_f: np.ndarray
    alpha_v: np.ndarray
    # P_L, Q_L, omega0, eta_form (0 gaussian / 1 exponential), resilient (0/1)
    scalars: np.ndarray


@njit(cache=True)
def _eta(t, alpha, form):
    if form == 0:
        e = np.exp(-alpha * t * t)
    else:
        e = np.exp(-alpha * t)
    return e if e > ETA_FLOOR else ETA_FLOOR


@njit(cache=True)
def rhs_loops(t, x, mu_f, mu_v, prm, dx):
    A = prm[0]
    G = prm[1]
    mP = prm[2]
    nQ = prm[3]
    b = prm[4]
    w = prm[5]
    oref = prm[6]
    vref = prm[7]
    sc = prm[18]
    n = mP.shape[0]
    P_L = sc[0]
    Q_L = sc[1]
    omega0 = sc[2]
    form = int(sc[3])
    resilient = sc[4] != 0.0

    bsum = 0.0
    bd = 0.0
    wsum = 0.0
    wv = 0.0
    for i in range(n):
        bsum += b[i]
        bd += b[i] * x[i]
        wsum += w[i]
        wv += w[i] * x[2 * n + i]
    dL = (bd - P_L) / bsum
    VL = (wv - Q_L) / wsum

    for i in range(n):
        wn_i = x[n + i]
        V_i = x[2 * n + i]
        P_i = b[i] * (x[i] - dL)
        Q_i = w[i] * (V_i - VL)
        sf = 0.0
        sv = 0.0
        for j in range(n):
            a = A[i, j]
            if a != 0.0:
                sf += a * (x[n + j] - wn_i)
                sv += a * (x[2 * n + j] - V_i)
        for k in range(2):
            g = G[k, i]
            if g != 0.0:
                sf += g * (oref[k] + mP[i] * P_i - wn_i)
                sv += g * (vref[k] + nQ[i] * Q_i - V_i)
        xf = prm[8][i] * sf
        xv = prm[9][i] * sv
        uf = xf
        uv = xv
        if resilient:
            phf = x[3 * n + i]
            phhf = x[4 * n + i]
            phv = x[5 * n + i]
            phhv = x[6 * n + i]
            uf += xf * np.exp(phf) / (abs(xf) + _eta(t, prm[16][i], form))
            uv += xv * np.exp(phv) / (abs(xv) + _eta(t, prm[17][i], form))
            dx[3 * n + i] = prm[10][i] * (abs(xf) - prm[12][i] * (phf - phhf))
            dx[4 * n + i] = prm[14][i] * (phf - phhf)
            dx[5 * n + i] = prm[11][i] * (abs(xv) - prm[13][i] * (phv - phhv))
            dx[6 * n + i] = prm[15][i] * (phv - phhv)
        else:
            dx[3 * n + i] = 0.0
            dx[4 * n + i] = 0.0
            dx[5 * n + i] = 0.0
            dx[6 * n + i] = 0.0
        dx[i] = wn_i - mP[i] * P_i - omega0
        dx[n + i] = uf + mu_f[i]
        dx[2 * n + i] = uv + mu_v[i]


@njit(cache=True, nogil=True)
def integrate_block_loops(x, k0, n_steps, dt, stride, mu, prm, blowup, samples):
    """Advance ``x`` in place by up to ``n_steps`` RK4 steps.

    Every ``stride``-th global step the state is copied into ``samples``.
    Returns ``(status, steps_done, samples_written)``.
    """
    m = x.shape[0]
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    tmp = np.empty(m)
    n_out = 0
    for s in range(n_steps):
        k = k0 + s
        t = k * dt
        th = (k + 0.5) * dt
        t1 = (k + 1) * dt
        rhs_loops(t, x, mu[2 * s, 0], mu[2 * s, 1], prm, k1)
        for r in range(m):
            tmp[r] = x[r] + 0.5 * dt * k1[r]
        rhs_loops(th, tmp, mu[2 * s + 1, 0], mu[2 * s + 1, 1], prm, k2)
        for r in range(m):
            tmp[r] = x[r] + 0.5 * dt * k2[r]
        rhs_loops(th, tmp, mu[2 * s + 1, 0], mu[2 * s + 1, 1], prm, k3)
        for r in range(m):
            tmp[r] = x[r] + dt * k3[r]
        rhs_loops(t1, tmp, mu[2 * s + 2, 0], mu[2 * s + 2, 1], prm, k4)
        bad = False
        for r in range(m):
            x[r] = x[r] + dt / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
            if not abs(x[r]) <= blowup:
                bad = True
        if (k + 1) % stride == 0:
            for r in range(m):
                samples[n_out, r] = x[r]
            n_out += 1
        if bad:
            return STATUS_DIVERGED, s + 1, n_out
    return STATUS_OK, n_steps, n_out


def stage_numpy(t, X, mu_f, mu_v, prm: KernelParams):
    """Vectorized algebraic solve and control laws.

    ``X`` has shape ``(..., 7N)``; ``t``, ``mu_f`` and ``mu_v`` broadcast
    against its leading axes. Returns a dict of intermediate signals and
    ``dx``.
    """
    X = np.asarray(X, dtype=float)
    n = prm.m_P.shape[0]
    delta, wn, V = X[..., :n], X[..., n:2 * n], X[..., 2 * n:3 * n]
    phf, phhf, phv, phhv = (X[..., r * n:(r + 1) * n] for r in range(3, 7))
    P_L, Q_L, omega0, form, resilient = prm.scalars

    dL = ((delta @ prm.b) - P_L) / prm.b.sum()
    VL = ((V @ prm.w) - Q_L) / prm.w.sum()
    P = prm.b * (delta - dL[..., None])
    Q = prm.w * (V - VL[..., None])

    deg = prm.adjacency.sum(axis=1)
    gsum = prm.pinning.sum(axis=0)
    sf = wn @ prm.adjacency.T - deg * wn
    sv = V @ prm.adjacency.T - deg * V
    sf = sf + gsum * (prm.m_P * P - wn) + prm.pinning.T @ prm.omega_ref
    sv = sv + gsum * (prm.n_Q * Q - V) + prm.pinning.T @ prm.v_ref
    xf = prm.c_f * sf
    xv = prm.c_v * sv

    t_arr = np.asarray(t, dtype=float)[..., None]
    if form == 0:
        ef = np.exp(-prm.alpha_f * t_arr * t_arr)
        ev = np.exp(-prm.alpha_v * t_arr * t_arr)
    else:
        ef = np.exp(-prm.alpha_f * t_arr)
        ev = np.exp(-prm.alpha_v * t_arr)
    ef = np.maximum(ef, ETA_FLOOR)
    ev = np.maximum(ev, ETA_FLOOR)

    dx = np.empty(np.broadcast_shapes(X.shape, xf.shape[:-1] + (7 * n,)))
    if resilient:
        with np.errstate(over="ignore", invalid="ignore"):
            gam_f = xf * np.exp(phf) / (np.abs(xf) + ef)
            gam_v = xv * np.exp(phv) / (np.abs(xv) + ev)
        dx[..., 3 * n:4 * n] = prm.beta_f * (np.abs(xf) - prm.upsilon_f * (phf - phhf))
        dx[..., 4 * n:5 * n] = prm.kappa_f * (phf - phhf)
        dx[..., 5 * n:6 * n] = prm.beta_v * (np.abs(xv) - prm.upsilon_v * (phv - phhv))
        dx[..., 6 * n:7 * n] = prm.kappa_v * (phv - phhv)
    else:
        gam_f = np.zeros_like(xf)
        gam_v = np.zeros_like(xv)
        dx[..., 3 * n:] = 0.0
    omega = wn - prm.m_P * P
    dx[..., :n] = omega - omega0
    dx[..., n:2 * n] = xf + gam_f + mu_f
    dx[..., 2 * n:3 * n] = xv + gam_v + mu_v
    return {
        "P": P, "Q": Q, "omega": omega, "v_od": V - prm.n_Q * Q, "delta_L": dL, "V_L": VL,
        "xi_f": xf, "xi_v": xv, "Gamma_f": gam_f, "Gamma_v": gam_v, "eta_f": ef, "eta_v": ev,
        "dx": dx,
    }


def rhs_numpy(t, x, mu_f, mu_v, prm: KernelParams):
    return stage_numpy(t, x, mu_f, mu_v, prm)["dx"]


def integrate_block_numpy(x, k0, n_steps, dt, stride, mu, prm, blowup, samples):
    """Pure-numpy twin of :func:`integrate_block_loops` (same arithmetic order per step)."""
    n_out = 0
    for s in range(n_steps):
        k = k0 + s
        t = k * dt
        th = (k + 0.5) * dt
        t1 = (k + 1) * dt
        k1 = rhs_numpy(t, x, mu[2 * s, 0], mu[2 * s, 1], prm)
        k2 = rhs_numpy(th, x + 0.5 * dt * k1, mu[2 * s + 1, 0], mu[2 * s + 1, 1], prm)
        k3 = rhs_numpy(th, x + 0.5 * dt * k2, mu[2 * s + 1, 0], mu[2 * s + 1, 1], prm)
        k4 = rhs_numpy(t1, x + dt * k3, mu[2 * s + 2, 0], mu[2 * s + 2, 1], prm)
        x[:] = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0:
            samples[n_out] = x
            n_out += 1
        if not np.all(np.abs(x) <= blowup):
            return STATUS_DIVERGED, s + 1, n_out
    return STATUS_OK, n_steps, n_out


integrate_block = integrate_block_loops if HAVE_NUMBA else integrate_block_numpy
