"""Ideal-mixture thermodynamics in rescaled units.

Pressures are handled through their logarithm ``t = ln p`` wherever
possible, so that ``m * (g(1 + pi/m) - g(1))`` stays accurate when
``pi/m`` is tiny.  All array functions broadcast over leading axes; the
species axis is always last.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .roots import SolverError, expand_bracket, newton_decreasing

INF = math.inf
FAMILIES = ("power-log", "broken-convex")


class DomainError(ValueError):
    """Argument outside the domain of a thermodynamic function."""


class ConstraintError(ValueError):
    """State violates the volume constraint required by m = infinity."""


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MixtureSpec:
    """Static description of an N-species isothermal mixture."""

    M: np.ndarray
    vbar: np.ndarray
    alpha: np.ndarray
    sbar: float = 9.0
    RT: float = 1.0
    eta_visc: float = 0.05
    lambda_visc: float = 0.0
    family: str = "power-log"

    def __post_init__(self):
        M, vbar = _frozen(self.M), _frozen(self.vbar)
        alpha = np.broadcast_to(np.asarray(self.alpha, dtype=float), M.shape)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "vbar", vbar)
        object.__setattr__(self, "alpha", _frozen(alpha))
        if M.ndim != 1 or M.shape != vbar.shape or M.size < 1:
            raise ValueError("M and vbar must be 1-D of equal length")
        if np.any(M <= 0) or np.any(vbar <= 0):
            raise ValueError("molar masses and specific volumes must be positive")
        if np.any(self.alpha <= 1):
            raise ValueError("growth exponents must exceed 1")
        if self.RT <= 0 or self.sbar <= 0:
            raise ValueError("RT and sbar must be positive")
        if self.eta_visc < 0 or self.lambda_visc + 2.0 * self.eta_visc / 3.0 < 0:
            raise ValueError("viscosities violate eta >= 0, lambda + 2 eta/3 >= 0")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")

    @property
    def N(self) -> int:
        return self.M.size

    @property
    def rho_min(self) -> float:
        return 1.0 / float(self.vbar.max())

    @property
    def rho_max(self) -> float:
        return 1.0 / float(self.vbar.min())

    @property
    def nu(self) -> float:
        """1D viscosity 2 eta + lambda."""
        return 2.0 * self.eta_visc + self.lambda_visc

    @property
    def constant_density(self) -> bool:
        return bool(np.ptp(self.vbar) <= 1e-12 * self.vbar.max())

    @property
    def gamma(self) -> float:
        a = float(self.alpha.max())
        return a / (a - 1.0)

    @property
    def beta(self) -> float:
        """Growth constant of (A5) for the power-log family at s >= sbar."""
        a = float(self.alpha.min())
        return a * (1.0 - self.sbar ** (-1.0 / a))

    @property
    def theta0(self) -> float:
        b = self.beta
        return 2.0 * b * (1.0 / b - 1.0 / float(self.alpha.max())) / (b - 1.0)


def default_spec(**kw) -> MixtureSpec:
    base = dict(M=(1.0, 2.0), vbar=(1.0, 2.0), alpha=(2.0, 2.0))
    base.update(kw)
    return MixtureSpec(**base)


@dataclass(frozen=True)
class ThermoFamily:
    """Base family of ``spec`` rescaled by index ``m`` (``math.inf`` allowed)."""

    spec: MixtureSpec
    m: float = field(default=INF)

    def __post_init__(self):
        m = float(self.m)
        if not (m > 0):
            raise ValueError("rescaling index must be positive")
        object.__setattr__(self, "m", m)

    @property
    def infinite(self) -> bool:
        return math.isinf(self.m)


# ---------------------------------------------------------------- base family

def base_t(spec: MixtureSpec, t):
    """Return (g, g', g'') of every species at pressure ``exp(t)``.

    ``t`` has shape (...); results have shape (..., N).
    """
    t = np.asarray(t, dtype=float)[..., None]
    v = spec.vbar
    if spec.family == "broken-convex":
        s = np.exp(t)
        return v * (t + (s - 1.0) ** 2), v * (1.0 / s + 2.0 * (s - 1.0)), v * (2.0 - np.exp(-2.0 * t))
    a = spec.alpha
    hi = t >= 0.0
    tl = np.where(hi, 0.0, t)
    th = np.where(hi, t, 0.0)
    g = np.where(hi, v * a * np.expm1(th / a), v * tl)
    g1 = np.where(hi, v * np.exp(th * (1.0 / a - 1.0)), v * np.exp(-tl))
    g2 = np.where(hi, v * (1.0 / a - 1.0) * np.exp(th * (1.0 / a - 2.0)), -v * np.exp(-2.0 * tl))
    return g, g1, g2


def gbar(spec: MixtureSpec, s):
    """(g, g', g'') of all species at pressure ``s > 0``."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("base family needs s > 0")
    return base_t(spec, np.log(s))


def gbar_eval(spec: MixtureSpec, i: int, s: float):
    """(g_i(s), g_i'(s), g_i''(s)); the right value is used at s = 1."""
    g, g1, g2 = gbar(spec, s)
    return float(g[..., i]), float(g1[..., i]), float(g2[..., i])


def gprime_inverse_t(spec: MixtureSpec, y):
    """log of the pressure where g_i' equals ``y``, per species (power-log only)."""
    if spec.family != "power-log":
        raise NotImplementedError("closed-form inverse only for the power-log family")
    a = np.log(spec.vbar) - np.log(np.asarray(y, dtype=float))[..., None]
    return np.where(a <= 0.0, a, spec.alpha / (spec.alpha - 1.0) * a)


def gm(fam: ThermoFamily, pi):
    """(g^m, (g^m)', (g^m)'') of every species at rescaled pressure ``pi``."""
    pi = np.asarray(pi, dtype=float)
    v = fam.spec.vbar
    if fam.infinite:
        z = np.zeros(pi.shape + v.shape)
        return pi[..., None] * v, z + v, z
    if np.any(pi <= -fam.m):
        raise DomainError("rescaled pressure must exceed -m")
    return gm_t(fam, np.log1p(pi / fam.m))


def gm_t(fam: ThermoFamily, t):
    """Rescaled family at log-pressure ``t`` (finite m)."""
    g, g1, g2 = base_t(fam.spec, t)
    return fam.m * g, g1, g2 / fam.m


def gm_eval(fam: ThermoFamily, i: int, pi: float):
    g, g1, g2 = gm(fam, pi)
    return float(g[..., i]), float(g1[..., i]), float(g2[..., i])


# ---------------------------------------------------------------- composition

def _check_rho(rho, strict=False):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(~np.isfinite(rho)):
        raise DomainError("densities must be finite and nonnegative")
    if np.any(rho.sum(axis=-1) <= 0):
        raise DomainError("degenerate state: all densities vanish")
    if strict and np.any(rho <= 0):
        raise DomainError("log-singular state: a density vanishes")
    return rho


def fractions(spec: MixtureSpec, rho):
    """Mole fractions x, mass fractions y and molar concentration n."""
    rho = _check_rho(rho)
    c = rho / spec.M
    n = c.sum(axis=-1)
    return c / n[..., None], rho / rho.sum(axis=-1, keepdims=True), n


def mix_entropy(spec: MixtureSpec, rho):
    """k = RT sum (rho_i/M_i) ln x_i with its gradient and Hessian."""
    rho = _check_rho(rho, strict=True)
    x, _, n = fractions(spec, rho)
    M, RT = spec.M, spec.RT
    lx = np.log(x)
    k = RT * np.sum(rho / M * lx, axis=-1)
    Dk = RT * lx / M
    N = spec.N
    D2k = RT / (M[:, None] * M[None, :] * n[..., None, None]) * (
        np.eye(N) / x[..., None, :] - 1.0)
    return k, Dk, D2k


def log_mole_fractions(spec: MixtureSpec, rho):
    c = np.log(rho) - np.log(spec.M)
    return c - np.log(np.sum(rho / spec.M, axis=-1))[..., None]


# ---------------------------------------------------------------- equation of state

def eos_log_pressure(spec: MixtureSpec, rho):
    """t = ln p_hat solving sum rho_i g_i'(p) = 1 (bracketed Newton on ln p)."""
    rho = _check_rho(rho)
    shape = rho.shape[:-1]
    r = rho.reshape(-1, spec.N)
    w = r @ spec.vbar

    def fun(tt):
        _, g1, g2 = base_t(spec, tt)
        S = np.sum(r * g1, axis=-1)
        return np.log(S), np.exp(tt) * np.sum(r * g2, axis=-1) / S

    if spec.family == "power-log":
        ti = gprime_inverse_t(spec, 1.0 / r.sum(axis=-1))
        pad = 1e-12 * (1.0 + np.abs(ti).max(axis=-1))
        lo, hi = ti.min(axis=-1) - pad, ti.max(axis=-1) + pad
        ab = float(spec.alpha.mean())
        lw = np.log(w)
        x0 = np.where(lw <= 0, lw, ab / (ab - 1.0) * lw)
    else:
        lo, hi = expand_bracket(lambda tt: fun(tt)[0], np.zeros(w.shape))
        x0 = None
    t = newton_decreasing(fun, lo, hi, x0=x0, what="equation of state")
    return t.reshape(shape)


def eos_pressure(fam, rho):
    spec = fam.spec if isinstance(fam, ThermoFamily) else fam
    return np.exp(eos_log_pressure(spec, rho))


def eos_closed_form(spec: MixtureSpec, rho):
    """Closed-form p_hat for the power-log family with a common exponent."""
    a = spec.alpha
    if spec.family != "power-log" or np.ptp(a) != 0:
        raise ValueError("closed form needs the power-log family with common alpha")
    w = np.asarray(rho, dtype=float) @ spec.vbar
    return np.where(w <= 1.0, w, w ** (a[0] / (a[0] - 1.0)))


def pi_m(fam: ThermoFamily, rho, tol=1e-10):
    """Rescaled pressure m (p_hat - 1); zero on the surface when m = infinity."""
    rho = _check_rho(rho)
    if fam.infinite:
        dev = np.abs(rho @ fam.spec.vbar - 1.0)
        if np.any(dev > tol):
            raise ConstraintError(f"rho.vbar deviates from 1 by {dev.max():.3e}")
        return np.zeros(rho.shape[:-1])
    return fam.m * np.expm1(eos_log_pressure(fam.spec, rho))


def free_energy(fam: ThermoFamily, rho):
    """f^m(rho) = sum rho_i g_i^m(pi) - pi + k(rho)."""
    rho = _check_rho(rho, strict=True)
    k = mix_entropy(fam.spec, rho)[0]
    if fam.infinite:
        pi_m(fam, rho)
        return k
    t = eos_log_pressure(fam.spec, rho)
    g = gm_t(fam, t)[0]
    return np.sum(rho * g, axis=-1) - fam.m * np.expm1(t) + k


def chemical_potentials(fam: ThermoFamily, rho, p=None):
    """mu_i = g_i^m(pi) + (RT/M_i) ln x_i.

    For m = infinity the pressure ``p`` must be supplied and
    ``mu = p vbar + (RT/M) ln x``.
    """
    rho = _check_rho(rho, strict=True)
    spec = fam.spec
    ent = spec.RT * log_mole_fractions(spec, rho) / spec.M
    if fam.infinite:
        if p is None:
            raise ValueError("m = infinity needs an external pressure")
        return np.asarray(p, dtype=float)[..., None] * spec.vbar + ent
    t = eos_log_pressure(spec, rho)
    return gm_t(fam, t)[0] + ent


def hessian(fam: ThermoFamily, rho):
    """D^2 f^m = K u u^T + D^2 k with u = (g^m)'(pi), K = -1/sum rho_k (g_k^m)''."""
    rho = _check_rho(rho, strict=True)
    if fam.infinite:
        raise ValueError("f^infinity is singular off the constraint surface")
    D2k = mix_entropy(fam.spec, rho)[2]
    t = eos_log_pressure(fam.spec, rho)
    _, u, g2 = gm_t(fam, t)
    K = -1.0 / np.sum(rho * g2, axis=-1)
    return K[..., None, None] * u[..., :, None] * u[..., None, :] + D2k


def potentials_to_densities(fam: ThermoFamily, mu):
    """Invert mu -> rho for finite m.

    Solves sum_i exp(M_i (mu_i - g_i^m(s))/RT) = 1 for s = pi, then
    recovers the molar concentration from the equation of state.
    """
    if fam.infinite:
        raise ValueError("use transform.incompressible_invert for m = infinity")
    spec = fam.spec
    mu = np.asarray(mu, dtype=float)
    shape = mu.shape[:-1]
    u = mu.reshape(-1, spec.N)
    c = spec.M / spec.RT

    def expo(tt):
        return c * (u - gm_t(fam, tt)[0])

    def lse(z):
        zmax = z.max(axis=-1, keepdims=True)
        return zmax[..., 0] + np.log(np.sum(np.exp(z - zmax), axis=-1))

    def fun(tt):
        z = expo(tt)
        G = lse(z)
        x = np.exp(z - G[..., None])
        _, g1, _ = base_t(spec, tt)
        dG = -np.exp(tt) * np.sum(x * c * fam.m * g1, axis=-1)
        return G, dG

    t0 = np.zeros(u.shape[0])
    lo, hi = expand_bracket(lambda tt: fun(tt)[0], t0, step=1.0 / max(1.0, math.sqrt(fam.m)))
    t = newton_decreasing(fun, lo, hi, ftol=1e-14, what="potential inversion")
    z = expo(t)
    x = np.exp(z - lse(z)[..., None])
    _, g1, _ = base_t(spec, t)
    n = 1.0 / np.sum(spec.M * x * g1, axis=-1)
    return (n[..., None] * spec.M * x).reshape(shape + (spec.N,))


@dataclass(frozen=True)
class ThermoPoint:
    rho: np.ndarray
    p_hat: float
    pi_m: float
    x: np.ndarray
    f: float
    mu: np.ndarray


def thermo_point(fam: ThermoFamily, rho) -> ThermoPoint:
    rho = np.asarray(rho, dtype=float)
    return ThermoPoint(rho=rho, p_hat=float(eos_pressure(fam, rho)), pi_m=float(pi_m(fam, rho)),
                       x=fractions(fam.spec, rho)[0], f=float(free_energy(fam, rho)),
                       mu=chemical_potentials(fam, rho))


__all__ = [
    "MixtureSpec", "ThermoFamily", "ThermoPoint", "DomainError", "ConstraintError", "SolverError",
    "default_spec", "gbar", "gbar_eval", "gm", "gm_eval", "fractions", "mix_entropy",
    "eos_pressure", "eos_log_pressure", "eos_closed_form", "pi_m", "free_energy",
    "chemical_potentials", "hessian", "potentials_to_densities", "thermo_point",
]
