"""Property audits of the thermodynamics and the variable transforms.

Every check returns a :class:`Check` carrying its worst residual, its
tolerance and (on failure) the offending state, so that a failing report
can be replayed.  All sampling goes through one ``numpy`` generator.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .roots import SolverError
from .thermo import (MixtureSpec, ThermoFamily, base_t, chemical_potentials, eos_closed_form,
                     eos_log_pressure, free_energy, gm, hessian, mix_entropy, pi_m,
                     potentials_to_densities)
from .transform import (P_m, R_map, gauge_eta, incompressible_invert, make_basis, q_from_mu)

M_VALUES = (1.0, 10.0, 100.0, 1e3, 1e4)
FD_STEP = 1e-5
TOL = {
    "gibbs_duhem": 1e-9,
    "homogeneity": 1e-10,
    "gradient_fd": 1e-5,
    "hessian_fd": 1e-5,
    "eos_closed_form": 1e-10,
    "round_trip": 1e-8,
    "transform_round_trip": 1e-8,
    "affine_shift": 1e-10,
    "gauge": 1e-12,
}


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    tol: float
    n: int
    detail: dict = field(default_factory=dict)
    failing_state: dict | None = None

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "worst": _num(self.worst),
                "tol": _num(self.tol), "n": int(self.n), "detail": self.detail,
                "failing_state": self.failing_state}


@dataclass
class AuditReport:
    checks: list
    seed: int
    samples: int
    runtime_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def section(self, prefix):
        return [c for c in self.checks if c.name.startswith(prefix)]

    def to_json(self, include_runtime=False) -> str:
        doc = {"passed": self.passed, "seed": self.seed, "samples": self.samples,
               "checks": [c.as_dict() for c in self.checks]}
        if include_runtime:
            doc["runtime_s"] = self.runtime_s
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def summary_lines(self):
        return [f"{'PASS' if c.passed else 'FAIL'} {c.name}: worst={c.worst:.3e} tol={c.tol:.1e}"
                f" n={c.n}" for c in self.checks]


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def _state(rho, m, **extra):
    out = {"rho": [float(v) for v in np.ravel(rho)], "m": float(m)}
    out.update({k: (float(v) if np.ndim(v) == 0 else [float(z) for z in np.ravel(v)])
                for k, v in extra.items()})
    return out


def _finish(name, err, tol, rho, ms, detail=None, strict_less=False):
    """Build a Check from per-sample errors (NaN counts as a failure)."""
    err = np.asarray(err, dtype=float)
    bad = ~np.isfinite(err) | ((err >= tol) if strict_less else (err > tol))
    worst = float(np.nanmax(err)) if np.any(np.isfinite(err)) else math.inf
    if np.any(~np.isfinite(err)):
        worst = math.inf
    fs = None
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0]) if not np.all(np.isfinite(err)) else int(np.nanargmax(err))
        fs = _state(rho[k], ms[k], error=err[k])
    return Check(name=name, passed=not np.any(bad), worst=worst, tol=tol, n=int(err.size),
                 detail=detail or {}, failing_state=fs)


def _guard(name, tol, fn):
    try:
        return fn()
    except (SolverError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return Check(name=name, passed=False, worst=math.inf, tol=tol, n=0,
                     detail={"error": f"{type(exc).__name__}: {exc}"})


# ---------------------------------------------------------------- sampling

def sample_states(spec: MixtureSpec, k: int, rng, p_range=(0.2, 50.0), y_floor=0.05):
    """States with log-uniform target p_hat and compositions bounded away from 0.

    rho = s y with s = 1 / sum_i y_i g_i'(p_hat), so the EOS holds exactly
    at the target pressure for any family.
    """
    N = spec.N
    y = rng.dirichlet(np.ones(N), size=k)
    y = y_floor + (1.0 - N * y_floor) * y
    lp = rng.uniform(math.log(p_range[0]), math.log(p_range[1]), size=k)
    _, g1, _ = base_t(spec, lp)
    s = 1.0 / np.sum(y * g1, axis=1)
    ms = rng.choice(np.array(M_VALUES), size=k)
    return s[:, None] * y, ms, np.exp(lp)


def _by_m(ms):
    for m in np.unique(ms):
        yield float(m), np.flatnonzero(ms == m)


# ---------------------------------------------------------------- thermo checks

def check_gibbs_duhem(spec, rho, ms):
    err = np.empty(len(ms))
    for m, idx in _by_m(ms):
        fam = ThermoFamily(spec, m)
        r = rho[idx]
        pi = pi_m(fam, r)
        res = -free_energy(fam, r) + np.sum(r * chemical_potentials(fam, r), axis=1) - pi
        err[idx] = np.abs(res) / (1.0 + np.abs(pi))
    return _finish("thermo.gibbs_duhem", err, TOL["gibbs_duhem"], rho, ms)


def check_homogeneity(spec, rho, ms):
    k, Dk, D2k = mix_entropy(spec, rho)
    e1 = np.abs(np.sum(Dk * rho, axis=1) - k) / (1.0 + np.abs(k))
    e2 = np.max(np.abs(np.einsum("...ij,...j->...i", D2k, rho)), axis=1)
    return _finish("thermo.homogeneity", np.maximum(e1, e2), TOL["homogeneity"], rho, ms)


def _same_side(spec, rho, h):
    """Mask of samples whose +-h stencils all stay on one side of p_hat = 1."""
    t0 = eos_log_pressure(spec, rho)
    ok = np.ones(rho.shape[0], dtype=bool)
    for j in range(spec.N):
        for sgn in (1.0, -1.0):
            r = rho.copy()
            r[:, j] += sgn * h
            ok &= np.sign(eos_log_pressure(spec, r)) == np.sign(t0)
    return ok & (t0 != 0)


def check_gradient_fd(spec, rho, ms, h=FD_STEP):
    err = np.empty(len(ms))
    for m, idx in _by_m(ms):
        fam = ThermoFamily(spec, m)
        r = rho[idx]
        mu = chemical_potentials(fam, r)
        fd = np.empty_like(r)
        for j in range(spec.N):
            rp, rm = r.copy(), r.copy()
            rp[:, j] += h
            rm[:, j] -= h
            fd[:, j] = (free_energy(fam, rp) - free_energy(fam, rm)) / (2 * h)
        err[idx] = np.max(np.abs(mu - fd), axis=1) / (1.0 + np.max(np.abs(mu), axis=1))
    return _finish("thermo.gradient_fd", err, TOL["gradient_fd"], rho, ms)


def check_hessian_fd(spec, rho, ms, h=FD_STEP):
    keep = _same_side(spec, rho, h)
    rho_k, ms_k = rho[keep], ms[keep]
    err = np.empty(len(ms_k))
    for m, idx in _by_m(ms_k):
        fam = ThermoFamily(spec, m)
        r = rho_k[idx]
        H = hessian(fam, r)
        fd = np.empty_like(H)
        for j in range(spec.N):
            rp, rm = r.copy(), r.copy()
            rp[:, j] += h
            rm[:, j] -= h
            fd[:, :, j] = (chemical_potentials(fam, rp) - chemical_potentials(fam, rm)) / (2 * h)
        scale = np.max(np.abs(H), axis=(1, 2))
        err[idx] = np.max(np.abs(H - fd), axis=(1, 2)) / scale
    return _finish("thermo.hessian_fd", err, TOL["hessian_fd"], rho_k, ms_k,
                   detail={"skipped_kink_stencils": int((~keep).sum())})


def check_eos_closed_form(spec, rho, ms):
    if spec.family != "power-log" or np.ptp(spec.alpha) > 0:
        return Check("thermo.eos_closed_form", True, 0.0, TOL["eos_closed_form"], 0,
                     detail={"skipped": "no closed form for this family"})
    p = np.exp(eos_log_pressure(spec, rho))
    pc = eos_closed_form(spec, rho)
    return _finish("thermo.eos_closed_form", np.abs(p - pc) / pc, TOL["eos_closed_form"], rho, ms)


def check_round_trip(spec, rho, ms):
    err = np.empty(len(ms))
    for m, idx in _by_m(ms):
        fam = ThermoFamily(spec, m)
        r = rho[idx]
        back = potentials_to_densities(fam, chemical_potentials(fam, r))
        err[idx] = np.max(np.abs(back - r), axis=1) / np.max(np.abs(r), axis=1)
    return _finish("thermo.round_trip", err, TOL["round_trip"], rho, ms)


def check_monotone_eos(spec, rho, ms, n_s=64):
    """s -> sum_i rho_i g_i'(s) strictly decreasing on a log grid in [1e-3, 1e3]."""
    t = np.linspace(math.log(1e-3), math.log(1e3), n_s)
    _, g1, _ = base_t(spec, t)
    vals = rho @ g1.T
    worst = np.max(np.diff(vals, axis=1), axis=1)   # must be < 0
    err = np.where(worst < 0, 0.0, 1.0 + worst)
    return _finish("thermo.eos_monotone", err, 0.5, rho, ms, detail={"max_increment": float(worst.max())})


def check_assumptions(spec, t_grid=None):
    """(A2)-(A6) and (A') on a log grid of s."""
    if t_grid is None:
        t_grid = np.linspace(math.log(1e-4), math.log(1e4), 801)
        t_grid = t_grid[t_grid != 0.0]
    s = np.exp(t_grid)
    g, g1, g2 = base_t(spec, t_grid)
    sb = spec.sbar
    small = s < sb
    large = s >= sb
    out = {}
    out["A2"] = bool(np.all(g1 > 0) and np.all(g2 < 0))
    _, g1a, _ = base_t(spec, np.array([math.log(1e-12), math.log(1e12)]))
    out["A3"] = bool(np.all(g1a[0] > 1e6 * g1a[1]) and np.all(g1a[1] < 1e-3 * spec.vbar))
    pg = s[:, None] * g1
    c1 = float(pg[small].min())
    c2 = float(pg[small].max())
    out["A4"] = bool(c1 > 0 and c1 <= c2)
    a = spec.alpha
    beta = spec.beta
    ok5 = (a * pg[large] >= g[large] * (1 - 1e-12)) & (g[large] >= beta * pg[large] * (1 - 1e-12))
    out["A5"] = bool(np.all(ok5) and np.all(a >= beta) and beta > 1)
    c3 = float(np.max(s[:, None] * np.abs(g2) / g1))
    out["A6"] = bool(math.isfinite(c3))
    order = np.argsort(g1, axis=1, kind="stable")
    out["A_prime"] = bool(np.all(order == order[0]))
    failed = [k for k, v in out.items() if not v]
    return Check(name="thermo.assumptions", passed=not failed, worst=float(len(failed)), tol=0.0,
                 n=int(t_grid.size),
                 detail={"flags": out, "c1": c1, "c2": c2, "c3": c3, "beta": beta},
                 failing_state=None if not failed else {"failed": failed})


def _floor_terms(spec, rho):
    vr = rho.sum(axis=1)
    return vr * (1.0 + vr) ** spec.theta0


def calibrate_lambda1(spec, n=2000, seed=12345, safety=0.5):
    """Eigenvalue-floor constant fitted once at m = 1 on a fixed sample set."""
    rng = np.random.default_rng(seed)
    rho, _, _ = sample_states(spec, n, rng)
    lam = np.linalg.eigvalsh(hessian(ThermoFamily(spec, 1.0), rho))[:, 0]
    return safety * float(np.min(lam * _floor_terms(spec, rho)))


def check_eigen_floor(spec, rho, ms, lambda1=None):
    lam1 = calibrate_lambda1(spec) if lambda1 is None else lambda1
    if not (lam1 > 0):
        return Check("thermo.eigen_floor", False, math.inf, 0.0, 0,
                     detail={"lambda1": lam1, "error": "no positive floor at m = 1"})
    err = np.empty(len(ms))
    for m, idx in _by_m(ms):
        lam = np.linalg.eigvalsh(hessian(ThermoFamily(spec, m), rho[idx]))[:, 0]
        bound = lam1 / _floor_terms(spec, rho[idx])
        err[idx] = np.maximum(0.0, 1.0 - lam / bound)   # > 0 means below the floor
    return _finish("thermo.eigen_floor", err, 0.0, rho, ms, detail={"lambda1": lam1})


# ---------------------------------------------------------------- affine-limit bound

def sup_abs_g2(spec, t_lo, t_hi):
    """sup |g_i''| over [e^t_lo, e^t_hi] for the power-log family.

    |g''| decreases on each branch and jumps down at s = 1, so the sup is
    the value at the left endpoint (the left-branch value when t_lo < 0).
    """
    if spec.family != "power-log":
        t = np.linspace(t_lo, t_hi, 2001).T
        return np.max(np.abs(base_t(spec, t[..., None])[2]), axis=-2)
    _, _, g2 = base_t(spec, np.asarray(t_lo, dtype=float))
    return np.abs(g2)


def check_affine_bound(spec, n=200, seed=0, m_values=(10.0, 100.0, 1000.0), rng=None,
                       varrho_range=(0.55, 0.95)):
    rng = rng if rng is not None else np.random.default_rng(seed)
    y = rng.dirichlet(np.ones(spec.N), size=n)
    vr = rng.uniform(*varrho_range, size=n)
    rho = vr[:, None] * y
    a = np.log(spec.vbar)[None, :] + np.log(vr)[:, None]
    ti = np.where(a <= 0, a, spec.alpha / (spec.alpha - 1) * a)
    t_lo, t_hi = ti.min(axis=1), ti.max(axis=1)
    sup = sup_abs_g2(spec, t_lo, t_hi)
    viol = 0
    worst = 0.0
    fs = None
    rows, ms = [], []
    for m in m_values:
        fam = ThermoFamily(spec, m)
        pi = pi_m(fam, rho)
        g, _, _ = gm(fam, pi)
        lhs = np.abs(g - spec.vbar * pi[:, None])
        rhs = 0.5 * sup * (pi[:, None] ** 2) / m
        ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), np.where(lhs > 0, np.inf, 0.0))
        bad = lhs > rhs * (1 + 1e-12) + 1e-15
        viol += int(bad.sum())
        worst = max(worst, float(ratio.max()))
        if bad.any() and fs is None:
            k = int(np.flatnonzero(bad.any(axis=1))[0])
            fs = _state(rho[k], m, pi=pi[k], lhs=lhs[k], rhs=rhs[k])
        rows.append(rho)
        ms.append(np.full(n, m))
    return Check(name="affine.bound", passed=viol == 0, worst=worst, tol=1.0, n=n * len(m_values),
                 detail={"violations": viol, "metric": "max lhs/rhs"}, failing_state=fs)


# ---------------------------------------------------------------- transform checks

def check_transform_round_trip(spec, rho, ms):
    basis = make_basis(spec.vbar)
    err = np.empty(len(ms))
    for m, idx in _by_m(ms):
        fam = ThermoFamily(spec, m)
        r = rho[idx]
        vr = r.sum(axis=1)
        q = q_from_mu(basis, chemical_potentials(fam, r))
        back = R_map(fam, basis, vr, q)
        vr2 = back.sum(axis=1)
        q2 = q_from_mu(basis, chemical_potentials(fam, back))
        e_rho = np.max(np.abs(back - r), axis=1) / np.max(r, axis=1)
        e_vr = np.abs(vr2 - vr) / vr
        e_q = np.max(np.abs(q2 - q), axis=1) / (1.0 + np.max(np.abs(q), axis=1))
        err[idx] = np.maximum(np.maximum(e_rho, e_vr), e_q)
    return _finish("transform.round_trip", err, TOL["transform_round_trip"], rho, ms)


def check_pm_monotone(spec, rng, n_q=20, n_grid=12):
    basis = make_basis(spec.vbar)
    lo, hi = spec.rho_min, spec.rho_max
    vr = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), n_grid)
    worst = math.inf
    fs = None
    for m in (10.0, 100.0, 1e3, 1e4):
        fam = ThermoFamily(spec, m)
        q = rng.normal(scale=0.5, size=(n_q, spec.N - 1))
        P = P_m(fam, basis, np.broadcast_to(vr, (n_q, n_grid)),
                np.broadcast_to(q[:, None, :], (n_q, n_grid, spec.N - 1)))
        d = np.diff(P, axis=1)
        mn = float(d.min())
        if mn < worst:
            worst = mn
            if mn <= 0:
                k = int(np.unravel_index(np.argmin(d), d.shape)[0])
                fs = {"m": m, "q": [float(z) for z in q[k]], "varrho": [float(z) for z in vr]}
    return Check(name="transform.pm_monotone", passed=worst > 0, worst=worst, tol=0.0,
                 n=4 * n_q * (n_grid - 1), detail={"metric": "min finite difference (> 0)"},
                 failing_state=fs)


def check_affine_shift(spec, rng, n=200):
    w = rng.normal(size=(n, spec.N))
    _, p0 = incompressible_invert(spec, w)
    r0, _ = incompressible_invert(spec, w)
    worst = 0.0
    for t in (-3.0, 0.7, 12.0):
        r1, p1 = incompressible_invert(spec, w + t * spec.vbar)
        e = np.maximum(np.abs(p1 - p0 - t), np.max(np.abs(r1 - r0), axis=1))
        worst = max(worst, float(e.max()))
    return Check(name="transform.affine_shift", passed=worst <= TOL["affine_shift"], worst=worst,
                 tol=TOL["affine_shift"], n=3 * n)


def check_gauge(spec):
    eta = gauge_eta(spec.vbar).eta_g
    basis = make_basis(spec.vbar)
    e = max(abs(eta @ spec.vbar - 1.0), abs(eta.sum()))
    dual = float(np.max(np.abs(basis.eta @ basis.xi - np.eye(spec.N))))
    worst = max(e, dual)
    return Check(name="transform.gauge", passed=worst <= TOL["gauge"], worst=worst,
                 tol=TOL["gauge"], n=1, detail={"eta_g": [float(z) for z in eta]})


# ---------------------------------------------------------------- driver

def run_thermo_check(spec: MixtureSpec, samples: int = 10_000, seed: int = 0,
                     transform_samples: int = 1000, affine_samples: int = 200) -> AuditReport:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _run(spec, samples, seed, transform_samples, affine_samples)


def _run(spec, samples, seed, transform_samples, affine_samples):
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rho, ms, _ = sample_states(spec, samples, rng)
    fd_n = samples
    checks = [
        _guard("thermo.assumptions", 0.0, lambda: check_assumptions(spec)),
        _guard("thermo.gibbs_duhem", TOL["gibbs_duhem"], lambda: check_gibbs_duhem(spec, rho, ms)),
        _guard("thermo.homogeneity", TOL["homogeneity"], lambda: check_homogeneity(spec, rho, ms)),
        _guard("thermo.gradient_fd", TOL["gradient_fd"],
               lambda: check_gradient_fd(spec, rho, ms)),
        _guard("thermo.hessian_fd", TOL["hessian_fd"],
               lambda: check_hessian_fd(spec, rho[:fd_n], ms[:fd_n])),
        _guard("thermo.eos_closed_form", TOL["eos_closed_form"],
               lambda: check_eos_closed_form(spec, rho, ms)),
        _guard("thermo.round_trip", TOL["round_trip"], lambda: check_round_trip(spec, rho, ms)),
        _guard("thermo.eos_monotone", 0.5, lambda: check_monotone_eos(spec, rho, ms)),
        _guard("thermo.eigen_floor", 0.0, lambda: check_eigen_floor(spec, rho, ms)),
    ]
    k = min(samples, transform_samples)
    checks += [
        _guard("transform.round_trip", TOL["transform_round_trip"],
               lambda: check_transform_round_trip(spec, rho[:k], ms[:k])),
        _guard("transform.pm_monotone", 0.0, lambda: check_pm_monotone(spec, rng)),
        _guard("transform.affine_shift", TOL["affine_shift"], lambda: check_affine_shift(spec, rng)),
        _guard("transform.gauge", TOL["gauge"], lambda: check_gauge(spec)),
        _guard("affine.bound", 1.0, lambda: check_affine_bound(spec, n=affine_samples, rng=rng)),
    ]
    return AuditReport(checks=checks, seed=seed, samples=samples,
                       runtime_s=time.perf_counter() - t0)
