"""Hot loops of the 1D solvers for the power-log family.

Each kernel exists twice: a compiled loop version and a vectorized numpy
version.  ``USE_NUMBA`` (see ``_jit``) picks the one exported as
``eos_t``, ``compressible_rhs``, ``incompressible_rhs`` and ``dt_parts``.

Grid layout: ``rho`` is (n, N) at cell centers, ``mom`` is (n+1,) face
momenta with ``mom[0] = mom[n] = 0``.  The right-hand sides fill the
preallocated ``drho``/``dmom`` and return
``(E_free, E_kin, D_visc, D_diff, work)``.
"""
from __future__ import annotations

import math

import numpy as np

from ._jit import USE_NUMBA, njit

EOS_FTOL = 1e-12
EOS_MAXITER = 100


# ---------------------------------------------------------------- compiled path

@njit(cache=True, nogil=True)
def _g_all(t, vbar, alpha, g, g1, g2):
    for i in range(vbar.size):
        v = vbar[i]
        a = alpha[i]
        if t >= 0.0:
            g[i] = v * a * math.expm1(t / a)
            g1[i] = v * math.exp(t * (1.0 / a - 1.0))
            g2[i] = v * (1.0 / a - 1.0) * math.exp(t * (1.0 / a - 2.0))
        else:
            g[i] = v * t
            g1[i] = v * math.exp(-t)
            g2[i] = -v * math.exp(-2.0 * t)


@njit(cache=True, nogil=True)
def _eos_t_cell(r, vbar, alpha, g, g1, g2):
    N = r.size
    w = 0.0
    vr = 0.0
    ab = 0.0
    for i in range(N):
        w += r[i] * vbar[i]
        vr += r[i]
        ab += alpha[i]
    ab /= N
    lvr = math.log(vr)
    lo = 1e300
    hi = -1e300
    for i in range(N):
        a = math.log(vbar[i]) + lvr
        ti = a if a <= 0.0 else alpha[i] / (alpha[i] - 1.0) * a
        lo = min(lo, ti)
        hi = max(hi, ti)
    pad = 1e-12 * (1.0 + max(abs(lo), abs(hi)))
    lo -= pad
    hi += pad
    lw = math.log(w)
    t = lw if lw <= 0.0 else ab / (ab - 1.0) * lw
    t = min(max(t, lo), hi)
    for _ in range(EOS_MAXITER):
        _g_all(t, vbar, alpha, g, g1, g2)
        S = 0.0
        dS = 0.0
        for i in range(N):
            S += r[i] * g1[i]
            dS += r[i] * g2[i]
        F = math.log(S)
        if abs(F) <= EOS_FTOL:
            return t
        dF = math.exp(t) * dS / S
        if F > 0.0:
            lo = t
        else:
            hi = t
        tn = t - F / dF
        if not (tn > lo and tn < hi):
            tn = 0.5 * (lo + hi)
        if abs(tn - t) <= 4e-16 * (1.0 + abs(t)):
            return tn
        t = tn
    return math.nan


@njit(cache=True, nogil=True)
def _eos_t_jit(rho, vbar, alpha):
    n, N = rho.shape
    out = np.empty(n)
    g = np.empty(N)
    g1 = np.empty(N)
    g2 = np.empty(N)
    for j in range(n):
        out[j] = _eos_t_cell(rho[j], vbar, alpha, g, g1, g2)
    return out


@njit(cache=True, nogil=True)
def _apply_mob(ra, z, lam, dms, out):
    """out = M(ra) z for the uniform + Maxwell-Stefan mobility."""
    N = z.size
    zm = 0.0
    vr = 0.0
    rz = 0.0
    for i in range(N):
        zm += z[i]
        vr += ra[i]
        rz += ra[i] * z[i]
    zm /= N
    for i in range(N):
        out[i] = lam * (z[i] - zm) + dms * (ra[i] * z[i] - ra[i] * rz / vr)


@njit(cache=True, nogil=True)
def _momentum(mom, varrho, press, nu, b, dx, dmom):
    """Face momentum update shared by both models; returns (E_kin, D_visc, work)."""
    n = varrho.size
    vf = np.zeros(n + 1)
    rf = np.zeros(n + 1)
    for f in range(1, n):
        rf[f] = 0.5 * (varrho[f - 1] + varrho[f])
        vf[f] = mom[f] / rf[f]
    # face mass fluxes (upwind density)
    gface = np.zeros(n + 1)
    for f in range(1, n):
        gface[f] = (varrho[f - 1] if vf[f] >= 0.0 else varrho[f]) * vf[f]
    phi = np.empty(n)
    sig = np.empty(n)
    dvisc = 0.0
    for j in range(n):
        G = 0.5 * (gface[j] + gface[j + 1])
        phi[j] = G * (vf[j] if G >= 0.0 else vf[j + 1])
        dv = (vf[j + 1] - vf[j]) / dx
        sig[j] = nu * dv
        dvisc += dx * nu * dv * dv
    ekin = 0.0
    work = 0.0
    dmom[0] = 0.0
    dmom[n] = 0.0
    for f in range(1, n):
        dmom[f] = (-(phi[f] - phi[f - 1]) + (sig[f] - sig[f - 1]) - (press[f] - press[f - 1])) / dx \
            + rf[f] * b
        ekin += 0.5 * dx * rf[f] * vf[f] * vf[f]
        work += dx * rf[f] * b * vf[f]
    return ekin, dvisc, work


@njit(cache=True, nogil=True)
def _compressible_rhs_jit(rho, mom, vbar, alpha, M, RT, m, lam, dms, nu, b, dx,
                          drho, dmom, tcell, mu):
    n, N = rho.shape
    g = np.empty(N)
    g1 = np.empty(N)
    g2 = np.empty(N)
    varrho = np.empty(n)
    press = np.empty(n)
    efree = 0.0
    for j in range(n):
        t = _eos_t_cell(rho[j], vbar, alpha, g, g1, g2)
        tcell[j] = t
        _g_all(t, vbar, alpha, g, g1, g2)
        pi = m * math.expm1(t)
        press[j] = pi
        cn = 0.0
        vr = 0.0
        for i in range(N):
            cn += rho[j, i] / M[i]
            vr += rho[j, i]
        varrho[j] = vr
        lcn = math.log(cn)
        fj = -pi
        for i in range(N):
            lx = math.log(rho[j, i] / M[i]) - lcn
            mu[j, i] = m * g[i] + RT * lx / M[i]
            fj += rho[j, i] * m * g[i] + RT * rho[j, i] / M[i] * lx
        efree += dx * fj
    ddiff = _species_fluxes(rho, mom, varrho, mu, lam, dms, dx, drho)
    ekin, dvisc, work = _momentum(mom, varrho, press, nu, b, dx, dmom)
    return efree, ekin, dvisc, ddiff, work


@njit(cache=True, nogil=True)
def _species_fluxes(rho, mom, varrho, mu, lam, dms, dx, drho):
    """drho = -div(rho_up v + J) with J = -M(face) dmu/dx; returns D_diff."""
    n, N = rho.shape
    ra = np.empty(N)
    dmu = np.empty(N)
    Jm = np.empty(N)
    Fprev = np.zeros(N)
    ddiff = 0.0
    for f in range(1, n + 1):
        if f < n:
            rf = 0.5 * (varrho[f - 1] + varrho[f])
            v = mom[f] / rf
            up = f - 1 if v >= 0.0 else f
            for i in range(N):
                ra[i] = 0.5 * (rho[f - 1, i] + rho[f, i])
                dmu[i] = mu[f, i] - mu[f - 1, i]
            _apply_mob(ra, dmu, lam, dms, Jm)
            for i in range(N):
                J = -Jm[i] / dx
                ddiff -= J * dmu[i]
                Fi = rho[up, i] * v + J
                drho[f - 1, i] = -(Fi - Fprev[i]) / dx
                Fprev[i] = Fi
        else:
            for i in range(N):
                drho[f - 1, i] = Fprev[i] / dx
    return ddiff


@njit(cache=True, nogil=True)
def _incompressible_rhs_jit(rho, mom, vbar, M, RT, lam, dms, nu, b, dx, drho, dmom, ell, dp):
    n, N = rho.shape
    varrho = np.empty(n)
    efree = 0.0
    for j in range(n):
        cn = 0.0
        vr = 0.0
        for i in range(N):
            cn += rho[j, i] / M[i]
            vr += rho[j, i]
        varrho[j] = vr
        lcn = math.log(cn)
        for i in range(N):
            lx = math.log(rho[j, i] / M[i]) - lcn
            ell[j, i] = RT * lx / M[i]
            efree += dx * rho[j, i] * ell[j, i]
    ra = np.empty(N)
    z = np.empty(N)
    Mz = np.empty(N)
    Mv = np.empty(N)
    Jm = np.empty(N)
    Fprev = np.zeros(N)
    ddiff = 0.0
    dp[0] = 0.0
    for f in range(1, n + 1):
        if f < n:
            rf = 0.5 * (varrho[f - 1] + varrho[f])
            v = mom[f] / rf
            up = f - 1 if v >= 0.0 else f
            for i in range(N):
                ra[i] = 0.5 * (rho[f - 1, i] + rho[f, i])
                z[i] = ell[f, i] - ell[f - 1, i]
            _apply_mob(ra, z, lam, dms, Mz)
            _apply_mob(ra, vbar, lam, dms, Mv)
            d = 0.0
            h = 0.0
            for i in range(N):
                d += vbar[i] * Mv[i]
                h += vbar[i] * Mz[i]
            dpf = (v * dx - h) / d
            dp[f] = dpf
            for i in range(N):
                Jm[i] = Mv[i] * dpf + Mz[i]
            for i in range(N):
                J = -Jm[i] / dx
                ddiff -= J * (vbar[i] * dpf + z[i])
                Fi = rho[up, i] * v + J
                drho[f - 1, i] = -(Fi - Fprev[i]) / dx
                Fprev[i] = Fi
        else:
            dp[n] = 0.0
            for i in range(N):
                drho[f - 1, i] = Fprev[i] / dx
    press = np.zeros(n)
    for j in range(1, n):
        press[j] = press[j - 1] + dp[j]
    ekin, dvisc, work = _momentum(mom, varrho, press, nu, b, dx, dmom)
    return efree, ekin, dvisc, ddiff, work


@njit(cache=True, nogil=True)
def _trace_MH(r, H, lam, dms):
    """trace(M(r) H); bounds the spectral radius since M H has eigenvalues >= 0."""
    N = r.size
    vr = 0.0
    for i in range(N):
        vr += r[i]
    tr = 0.0
    for i in range(N):
        for j in range(N):
            mij = lam * ((1.0 if i == j else 0.0) - 1.0 / N)
            mij += dms * r[i] * ((1.0 if i == j else 0.0) - r[j] / vr)
            tr += mij * H[j, i]
    return tr


@njit(cache=True, nogil=True)
def _dt_parts_jit(rho, mom, vbar, alpha, M, RT, m, lam, dms, nu, incompressible):
    """(max|v|, max c^2, max trace(M H), max 1/(varrho d) on faces, min varrho)."""
    n, N = rho.shape
    g = np.empty(N)
    g1 = np.empty(N)
    g2 = np.empty(N)
    H = np.empty((N, N))
    varrho = np.empty(n)
    c2max = 0.0
    trmax = 0.0
    vrmin = 1e300
    for j in range(n):
        cn = 0.0
        vr = 0.0
        for i in range(N):
            cn += rho[j, i] / M[i]
            vr += rho[j, i]
        varrho[j] = vr
        vrmin = min(vrmin, vr)
        for i in range(N):
            xi = rho[j, i] / M[i] / cn
            for k in range(N):
                H[i, k] = RT / (M[i] * M[k] * cn) * ((1.0 / xi if i == k else 0.0) - 1.0)
        if not incompressible:
            t = _eos_t_cell(rho[j], vbar, alpha, g, g1, g2)
            _g_all(t, vbar, alpha, g, g1, g2)
            kappa = 0.0
            for i in range(N):
                kappa -= rho[j, i] * g2[i]
            K = m / kappa
            c2max = max(c2max, K / vr)
            for i in range(N):
                for k in range(N):
                    H[i, k] += K * g1[i] * g1[k]
        trmax = max(trmax, _trace_MH(rho[j], H, lam, dms))
    vmax = 0.0
    relax = 0.0
    ra = np.empty(N)
    Mv = np.empty(N)
    for f in range(1, n):
        rf = 0.5 * (varrho[f - 1] + varrho[f])
        vmax = max(vmax, abs(mom[f] / rf))
        if incompressible:
            for i in range(N):
                ra[i] = 0.5 * (rho[f - 1, i] + rho[f, i])
            _apply_mob(ra, vbar, lam, dms, Mv)
            d = 0.0
            for i in range(N):
                d += vbar[i] * Mv[i]
            relax = max(relax, 1.0 / (rf * d))
    return vmax, c2max, trmax, relax, vrmin


# ---------------------------------------------------------------- numpy path

def _g_np(t, vbar, alpha):
    t = t[:, None]
    hi = t >= 0.0
    th = np.where(hi, t, 0.0)
    tl = np.where(hi, 0.0, t)
    g = np.where(hi, vbar * alpha * np.expm1(th / alpha), vbar * tl)
    g1 = np.where(hi, vbar * np.exp(th * (1.0 / alpha - 1.0)), vbar * np.exp(-tl))
    g2 = np.where(hi, vbar * (1.0 / alpha - 1.0) * np.exp(th * (1.0 / alpha - 2.0)),
                  -vbar * np.exp(-2.0 * tl))
    return g, g1, g2


def _eos_t_np(rho, vbar, alpha):
    w = rho @ vbar
    lvr = np.log(rho.sum(axis=1))
    a = np.log(vbar)[None, :] + lvr[:, None]
    ti = np.where(a <= 0.0, a, alpha / (alpha - 1.0) * a)
    lo, hi = ti.min(axis=1), ti.max(axis=1)
    pad = 1e-12 * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
    lo, hi = lo - pad, hi + pad
    ab = alpha.mean()
    lw = np.log(w)
    t = np.clip(np.where(lw <= 0.0, lw, ab / (ab - 1.0) * lw), lo, hi)
    done = np.zeros(t.shape, dtype=bool)
    for _ in range(EOS_MAXITER):
        _, g1, g2 = _g_np(t, vbar, alpha)
        S = np.sum(rho * g1, axis=1)
        F = np.log(S)
        done |= np.abs(F) <= EOS_FTOL
        if done.all():
            return t
        dF = np.exp(t) * np.sum(rho * g2, axis=1) / S
        lo = np.where(F > 0, t, lo)
        hi = np.where(F > 0, hi, t)
        tn = t - F / dF
        tn = np.where((tn > lo) & (tn < hi), tn, 0.5 * (lo + hi))
        small = np.abs(tn - t) <= 4e-16 * (1.0 + np.abs(t))
        t = np.where(done, t, tn)
        done |= small
    return np.where(done, t, np.nan)


def _mob_np(ra, z, lam, dms):
    vr = ra.sum(axis=-1, keepdims=True)
    return lam * (z - z.mean(axis=-1, keepdims=True)) + dms * (
        ra * z - ra * np.sum(ra * z, axis=-1, keepdims=True) / vr)


def _momentum_np(mom, varrho, press, nu, b, dx, dmom):
    n = varrho.size
    rf = np.ones(n + 1)
    rf[1:n] = 0.5 * (varrho[:-1] + varrho[1:])
    vf = np.zeros(n + 1)
    vf[1:n] = mom[1:n] / rf[1:n]
    gface = np.zeros(n + 1)
    gface[1:n] = np.where(vf[1:n] >= 0, varrho[:-1], varrho[1:]) * vf[1:n]
    G = 0.5 * (gface[:-1] + gface[1:])
    phi = G * np.where(G >= 0, vf[:-1], vf[1:])
    dv = np.diff(vf) / dx
    sig = nu * dv
    dmom[0] = 0.0
    dmom[n] = 0.0
    dmom[1:n] = (-np.diff(phi) + np.diff(sig) - np.diff(press)) / dx + rf[1:n] * b
    inner = slice(1, n)
    ekin = 0.5 * dx * np.sum(rf[inner] * vf[inner] ** 2)
    work = dx * np.sum(rf[inner] * b * vf[inner])
    return ekin, dx * np.sum(nu * dv * dv), work


def _species_np(rho, mom, varrho, J, dx, drho):
    n = varrho.size
    rf = 0.5 * (varrho[:-1] + varrho[1:])
    v = mom[1:n] / rf
    up = np.where(v[:, None] >= 0, rho[:-1], rho[1:])
    F = np.zeros((n + 1, rho.shape[1]))
    F[1:n] = up * v[:, None] + J
    drho[:] = -np.diff(F, axis=0) / dx


def _compressible_rhs_np(rho, mom, vbar, alpha, M, RT, m, lam, dms, nu, b, dx,
                         drho, dmom, tcell, mu):
    t = _eos_t_np(rho, vbar, alpha)
    tcell[:] = t
    g, _, _ = _g_np(t, vbar, alpha)
    pi = m * np.expm1(t)
    c = rho / M
    lx = np.log(c) - np.log(c.sum(axis=1))[:, None]
    mu[:] = m * g + RT * lx / M
    varrho = rho.sum(axis=1)
    efree = dx * np.sum(np.sum(rho * m * g + RT * c * lx, axis=1) - pi)
    ra = 0.5 * (rho[:-1] + rho[1:])
    dmu = np.diff(mu, axis=0)
    J = -_mob_np(ra, dmu, lam, dms) / dx
    ddiff = -np.sum(J * dmu)
    _species_np(rho, mom, varrho, J, dx, drho)
    ekin, dvisc, work = _momentum_np(mom, varrho, pi, nu, b, dx, dmom)
    return efree, ekin, dvisc, ddiff, work


def _incompressible_rhs_np(rho, mom, vbar, M, RT, lam, dms, nu, b, dx, drho, dmom, ell, dp):
    n = rho.shape[0]
    c = rho / M
    lx = np.log(c) - np.log(c.sum(axis=1))[:, None]
    ell[:] = RT * lx / M
    varrho = rho.sum(axis=1)
    efree = dx * np.sum(rho * ell)
    ra = 0.5 * (rho[:-1] + rho[1:])
    z = np.diff(ell, axis=0)
    Mz = _mob_np(ra, z, lam, dms)
    Mv = _mob_np(ra, np.broadcast_to(vbar, ra.shape), lam, dms)
    d = Mv @ vbar
    h = Mz @ vbar
    rf = 0.5 * (varrho[:-1] + varrho[1:])
    v = mom[1:n] / rf
    dpf = (v * dx - h) / d
    dp[0] = 0.0
    dp[n] = 0.0
    dp[1:n] = dpf
    J = -(Mv * dpf[:, None] + Mz) / dx
    ddiff = -np.sum(J * (vbar * dpf[:, None] + z))
    _species_np(rho, mom, varrho, J, dx, drho)
    press = np.concatenate([[0.0], np.cumsum(dpf)])
    ekin, dvisc, work = _momentum_np(mom, varrho, press, nu, b, dx, dmom)
    return efree, ekin, dvisc, ddiff, work


def _dt_parts_np(rho, mom, vbar, alpha, M, RT, m, lam, dms, nu, incompressible):
    n, N = rho.shape
    c = rho / M
    cn = c.sum(axis=1)
    x = c / cn[:, None]
    eye = np.eye(N)
    H = RT / (M[:, None] * M[None, :] * cn[:, None, None]) * (eye / x[:, :, None] - 1.0)
    varrho = rho.sum(axis=1)
    c2max = 0.0
    if not incompressible:
        t = _eos_t_np(rho, vbar, alpha)
        _, g1, g2 = _g_np(t, vbar, alpha)
        K = m / -np.sum(rho * g2, axis=1)
        c2max = float(np.max(K / varrho))
        H = H + K[:, None, None] * g1[:, :, None] * g1[:, None, :]
    y = rho / varrho[:, None]
    Mob = lam * (eye - 1.0 / N) + dms * rho[:, :, None] * (eye - y[:, None, :])
    trmax = float(np.max(np.einsum("jik,jki->j", Mob, H)))
    rf = 0.5 * (varrho[:-1] + varrho[1:])
    vmax = float(np.max(np.abs(mom[1:n] / rf)))
    relax = 0.0
    if incompressible:
        ra = 0.5 * (rho[:-1] + rho[1:])
        d = _mob_np(ra, np.broadcast_to(vbar, ra.shape), lam, dms) @ vbar
        relax = float(np.max(1.0 / (rf * d)))
    return vmax, c2max, trmax, relax, float(varrho.min())


if USE_NUMBA:
    eos_t = _eos_t_jit
    compressible_rhs = _compressible_rhs_jit
    incompressible_rhs = _incompressible_rhs_jit
    dt_parts = _dt_parts_jit
else:
    eos_t = _eos_t_np
    compressible_rhs = _compressible_rhs_np
    incompressible_rhs = _incompressible_rhs_np
    dt_parts = _dt_parts_np

BACKEND = "numba" if USE_NUMBA else "numpy"
