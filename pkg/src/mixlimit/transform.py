"""Entropic variables, pressure maps and the pressure gauge.

For a basis xi^1..xi^N with xi^{N-1} = vbar and xi^N = 1 and its dual
eta^1..eta^N, a potential vector is written mu = Pi q + Mc 1 with
q_k = eta^k . mu.  The compressible maps invert mu -> rho through the
conjugate of f^m; the incompressible ones through the constrained
inversion w -> (rho, p) with rho . vbar = 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .roots import expand_bracket, newton_decreasing
from .thermo import (ConstraintError, MixtureSpec, ThermoFamily, hessian, log_mole_fractions,
                     pi_m, potentials_to_densities)

PIVOT_TOL = 1e-12


class ConfigurationError(ValueError):
    """Raised for setups the transforms cannot handle (vbar parallel to 1)."""


@dataclass(frozen=True)
class Basis:
    xi: np.ndarray      # columns xi^1..xi^N
    eta: np.ndarray     # rows eta^1..eta^N

    @property
    def N(self) -> int:
        return self.xi.shape[0]

    @property
    def Pi(self) -> np.ndarray:
        return self.xi[:, :-1]

    @property
    def PiPrime(self) -> np.ndarray:
        return self.xi[:, :-2]


@dataclass(frozen=True)
class GaugeVector:
    eta_g: np.ndarray


def _check_not_parallel(vbar):
    vbar = np.asarray(vbar, dtype=float)
    if vbar.size < 2:
        raise ConfigurationError("at least two species are required")
    if np.ptp(vbar) <= PIVOT_TOL * np.abs(vbar).max():
        raise ConfigurationError(
            "vbar is parallel to 1: constant-density mode has no pressure gauge or basis")
    return vbar


def make_basis(vbar) -> Basis:
    """Canonical basis: Gram-Schmidt completion of span{1, vbar}."""
    vbar = _check_not_parallel(vbar)
    N = vbar.size
    ones = np.ones(N)
    u1 = ones / np.sqrt(N)
    u2 = vbar - (vbar @ u1) * u1
    u2 = u2 / np.linalg.norm(u2)
    ortho = [u1, u2]
    free = []
    for j in range(N):
        if len(free) == N - 2:
            break
        e = np.zeros(N)
        e[j] = 1.0
        for _ in range(2):  # second pass for round-off
            for u in ortho:
                e = e - (e @ u) * u
        nrm = np.linalg.norm(e)
        if nrm > PIVOT_TOL:
            e = e / nrm
            ortho.append(e)
            free.append(e)
    xi = np.column_stack(free + [vbar, ones])
    eta = np.linalg.inv(xi)
    xi.setflags(write=False)
    eta.setflags(write=False)
    return Basis(xi=xi, eta=eta)


def project_P(xi_vec):
    xi_vec = np.asarray(xi_vec, dtype=float)
    return xi_vec - xi_vec.mean(axis=-1, keepdims=True)


def q_from_mu(basis: Basis, mu):
    return np.asarray(mu, dtype=float) @ basis.eta[:-1].T


def _mu_from(basis: Basis, q, Mc):
    return np.asarray(q, dtype=float) @ basis.Pi.T + np.asarray(Mc, dtype=float)[..., None]


def solve_M(fam: ThermoFamily, basis: Basis, varrho, q):
    """Mc with sum_i rho_i(Pi q + Mc 1) = varrho (finite m)."""
    varrho = np.asarray(varrho, dtype=float)
    q = np.asarray(q, dtype=float)
    shape = varrho.shape
    vr = varrho.reshape(-1)
    qq = q.reshape(-1, basis.N - 1)
    if np.any(vr <= 0):
        raise ValueError("varrho must be positive")
    one = np.ones(basis.N)
    lvr = np.log(vr)

    def value(Mc):
        rho = potentials_to_densities(fam, _mu_from(basis, qq, Mc))
        return lvr - np.log(rho.sum(axis=-1))

    def fun(Mc):
        rho = potentials_to_densities(fam, _mu_from(basis, qq, Mc))
        s = rho.sum(axis=-1)
        H = hessian(fam, rho)
        d = np.linalg.solve(H, np.broadcast_to(one, rho.shape)[..., None])[..., 0].sum(axis=-1)
        return lvr - np.log(s), -d / s

    lo, hi = expand_bracket(value, np.zeros(vr.shape))
    Mc = newton_decreasing(fun, lo, hi, ftol=1e-13, what="solve_M")
    return Mc.reshape(shape)


def R_map(fam: ThermoFamily, basis: Basis, varrho, q):
    Mc = solve_M(fam, basis, varrho, q)
    return potentials_to_densities(fam, _mu_from(basis, q, Mc))


def P_m(fam: ThermoFamily, basis: Basis, varrho, q):
    return pi_m(fam, R_map(fam, basis, varrho, q))


def P_tilde_m(fam: ThermoFamily, basis: Basis, varrho, q):
    return P_m(fam, basis, varrho, q) - np.asarray(q, dtype=float)[..., -1]


def _invert_parts(spec: MixtureSpec, w):
    w = np.asarray(w, dtype=float)
    c = spec.M / spec.RT
    v = spec.vbar

    def z_of(p):
        return c * (w - p[..., None] * v)

    def lse(z):
        zm = z.max(axis=-1, keepdims=True)
        return zm[..., 0] + np.log(np.sum(np.exp(z - zm), axis=-1))

    def fun(p):
        z = z_of(p)
        G = lse(z)
        x = np.exp(z - G[..., None])
        return G, -np.sum(x * c * v, axis=-1)

    p0 = np.mean(w / v, axis=-1)
    lo, hi = expand_bracket(lambda p: fun(p)[0], p0)
    p = newton_decreasing(fun, lo, hi, ftol=1e-14, what="incompressible inversion")
    z = z_of(p)
    x = np.exp(z - lse(z)[..., None])
    return p, x


def incompressible_invert(spec: MixtureSpec, w):
    """(rho, p) with w = p vbar + (RT/M) ln x(rho) and rho . vbar = 1."""
    p, x = _invert_parts(spec, w)
    n = 1.0 / np.sum(spec.M * x * spec.vbar, axis=-1)
    return n[..., None] * spec.M * x, p


def _check_window(spec, varrho):
    varrho = np.asarray(varrho, dtype=float)
    if np.any(varrho <= spec.rho_min) or np.any(varrho >= spec.rho_max):
        raise ConstraintError(
            f"varrho must lie in ({spec.rho_min}, {spec.rho_max}) for rho . vbar = 1")
    return varrho


def _solve_M_inf(spec: MixtureSpec, basis: Basis, varrho, qprime):
    varrho = _check_window(spec, varrho)
    shape = varrho.shape
    vr = varrho.reshape(-1)
    qp = np.asarray(qprime, dtype=float).reshape(vr.size, basis.N - 2)
    base = qp @ basis.PiPrime.T
    c = spec.M / spec.RT
    v = spec.vbar
    lvr = np.log(vr)

    def state(Mc):
        w = base + Mc[:, None]
        p, x = _invert_parts(spec, w)
        S = np.sum(spec.M * x * v, axis=-1)
        n = 1.0 / S
        rho = n[:, None] * spec.M * x
        return w, p, x, n, rho

    def fun(Mc):
        _, _, x, n, rho = state(Mc)
        dp = np.sum(x * c, axis=-1) / np.sum(x * c * v, axis=-1)
        dx = x * c * (1.0 - v * dp[:, None])
        dn = -n ** 2 * np.sum(spec.M * v * dx, axis=-1)
        drho = spec.M * (dn[:, None] * x + n[:, None] * dx)
        s = rho.sum(axis=-1)
        return lvr - np.log(s), -drho.sum(axis=-1) / s

    lo, hi = expand_bracket(lambda Mc: fun(Mc)[0], np.zeros(vr.size))
    Mc = newton_decreasing(fun, lo, hi, ftol=1e-13, what="P_inf")
    _, p, _, _, rho = state(Mc)
    return p.reshape(shape), rho.reshape(shape + (basis.N,))


def P_inf(spec: MixtureSpec, basis: Basis, varrho, qprime):
    return _solve_M_inf(spec, basis, varrho, qprime)[0]


def R_inf(spec: MixtureSpec, basis: Basis, varrho, qprime):
    return _solve_M_inf(spec, basis, varrho, qprime)[1]


def R_inf_linear(basis: Basis, varrho, rprime):
    """Densities on rho . vbar = 1 from varrho and R_k = xi^k . rho (k <= N-2).

    Uses rho = sum_k (xi^k . rho) eta^k, so the constraint coordinate is
    set to exactly 1.
    """
    varrho = np.asarray(varrho, dtype=float)
    rprime = np.asarray(rprime, dtype=float).reshape(varrho.shape + (basis.N - 2,))
    eta = basis.eta
    return rprime @ eta[:-2] + eta[-2] + varrho[..., None] * eta[-1]


def rprime_of(basis: Basis, rho):
    return np.asarray(rho, dtype=float) @ basis.PiPrime


def qprime_of(spec: MixtureSpec, basis: Basis, rho):
    """q' = eta^k . (RT/M) ln x for k <= N-2 (independent of the pressure)."""
    ent = spec.RT * log_mole_fractions(spec, rho) / spec.M
    return ent @ basis.eta[:-2].T


def gauge_eta(vbar) -> GaugeVector:
    """Minimum-norm eta with eta . vbar = 1 and eta . 1 = 0."""
    vbar = _check_not_parallel(vbar)
    A = np.vstack([vbar, np.ones_like(vbar)])
    eta = A.T @ np.linalg.solve(A @ A.T, np.array([1.0, 0.0]))
    eta.setflags(write=False)
    return GaugeVector(eta_g=eta)


def conven_residual(spec: MixtureSpec, gauge: GaugeVector, p_field, rho_field, weights):
    """int p + RT sum_i (eta_i/M_i) int ln x_i, by quadrature with ``weights``."""
    w = np.asarray(weights, dtype=float)
    lx = log_mole_fractions(spec, np.asarray(rho_field, dtype=float))
    integrand = np.asarray(p_field, dtype=float) + spec.RT * lx @ (gauge.eta_g / spec.M)
    return float(np.sum(w * integrand))


def gauge_shift(spec: MixtureSpec, gauge: GaugeVector, p_field, rho_field, weights):
    """Constant zeta_bar making p + zeta_bar satisfy the mean-value condition.

    ``weights`` are the midpoint-rule cell sizes (a scalar dx is accepted).
    """
    p_field = np.asarray(p_field, dtype=float)
    w = np.broadcast_to(np.asarray(weights, dtype=float), p_field.shape)
    return -conven_residual(spec, gauge, p_field, rho_field, w) / float(np.sum(w))
