"""1D finite-volume solvers for the compressible and quasi-incompressible models.

Densities live at cell centers and velocities on faces (staggered grid);
no-slip is imposed by pinning the two boundary face velocities to zero and
no-flux by zero boundary fluxes.  Both models share one semi-discretization:
the incompressible scheme is what the compressible one becomes when the
pressure is slaved to the volume constraint, face by face.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .mobility import MobilityKind, mobility, onsager_reduced
from .thermo import ConstraintError, MixtureSpec, ThermoFamily, base_t, mix_entropy
from .transform import (P_inf, R_inf_linear, conven_residual, gauge_eta, gauge_shift, make_basis,
                        qprime_of, rprime_of)

CLIP_REL = 1e-12
MAX_STEPS = 50_000_000


class BlowUpError(RuntimeError):
    """Non-finite or non-positive state; ``state`` holds the last good fields."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True)
class Grid1D:
    L: float
    n: int

    def __post_init__(self):
        if self.n < 8 or not (self.L > 0):
            raise ValueError("grid needs n >= 8 cells and L > 0")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx

    @property
    def faces(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dx


@dataclass(frozen=True)
class RunConfig:
    spec: MixtureSpec
    m: float
    mobility: MobilityKind
    grid: Grid1D
    t_end: float
    cfl: float = 0.4
    b: float = 0.0
    snapshot_every: float = 0.0
    amplitude: float = 0.0
    mode: int = 1
    dt_fixed: float | None = None

    def __post_init__(self):
        if not (0 < self.cfl <= 0.5):
            raise ValueError("cfl must lie in (0, 0.5]")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.dt_fixed is not None and not (self.dt_fixed > 0):
            raise ValueError("fixed dt must be positive")
        if self.spec.family != "power-log":
            raise ValueError("the solver kernels implement the power-log family only")

    @property
    def fam(self) -> ThermoFamily:
        return ThermoFamily(self.spec, self.m)

    @property
    def incompressible(self) -> bool:
        return math.isinf(self.m)

    def with_m(self, m) -> "RunConfig":
        return replace(self, m=float(m))


@dataclass
class FieldState:
    """Compressible state; ``mom`` are face momenta (boundary entries are zero)."""

    t: float
    rho: np.ndarray
    mom: np.ndarray
    clips: int = 0
    last_dt: float = 0.0

    @property
    def varrho(self):
        return self.rho.sum(axis=1)

    @property
    def v_face(self):
        return face_velocity(self.rho, self.mom)

    @property
    def v(self):
        """Cell-centered velocity (mean of the two bounding faces)."""
        vf = self.v_face
        return 0.5 * (vf[:-1] + vf[1:])


@dataclass
class IncompState:
    """Incompressible state in (varrho, R', v) form plus the recovered pressure.

    ``rprime`` holds R_k = xi^k . rho for k <= N-2; ``zeta`` is gauged,
    ``zeta_raw`` is the same field before the gauge shift ``gauge``.
    """

    t: float
    varrho: np.ndarray
    rprime: np.ndarray
    mom: np.ndarray
    zeta: np.ndarray = None
    zeta_raw: np.ndarray = None
    p: np.ndarray = None
    qprime: np.ndarray = None
    gauge: float = 0.0
    last_dt: float = 0.0
    clips: int = 0

    def rho(self, basis):
        return R_inf_linear(basis, self.varrho, self.rprime)

    def v_face(self, basis):
        return face_velocity(self.rho(basis), self.mom)


def face_velocity(rho, mom):
    varrho = rho.sum(axis=1)
    vf = np.zeros_like(mom)
    vf[1:-1] = mom[1:-1] / (0.5 * (varrho[:-1] + varrho[1:]))
    return vf


def face_momentum(rho, v_face):
    varrho = rho.sum(axis=1)
    mom = np.zeros(rho.shape[0] + 1)
    mom[1:-1] = 0.5 * (varrho[:-1] + varrho[1:]) * np.asarray(v_face)[1:-1]
    return mom


@dataclass
class Snapshot:
    t: float
    rho: np.ndarray
    v_face: np.ndarray
    p: np.ndarray          # pi^m (compressible) or gauged P^inf + zeta
    mu: np.ndarray
    zeta: np.ndarray | None = None
    zeta_raw: np.ndarray | None = None

    @property
    def v(self):
        return 0.5 * (self.v_face[:-1] + self.v_face[1:])


@dataclass
class Trajectory:
    cfg: RunConfig
    snapshots: list
    t: np.ndarray          # step start times, plus the final time
    dt: np.ndarray
    energy: np.ndarray     # E_tot at the step start times, plus the final value
    d_visc: np.ndarray     # stage-averaged per step
    d_diff: np.ndarray
    work: np.ndarray
    clips: int
    constraint_residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gauge_residual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    backend: str = kernels.BACKEND

    @property
    def steps(self) -> int:
        return int(self.dt.size)


# ---------------------------------------------------------------- initial data

def well_prepared_initial(spec: MixtureSpec, grid: Grid1D, amplitude: float, mode: int = 1):
    """Densities on rho . vbar = 1 with a cosine composition perturbation.

    Mass fractions are y = 1/N + amplitude cos(mode pi x / L) (e^1 - e^N);
    the total density follows from the constraint, varrho = 1/(y . vbar).
    Returns (rho, v_face) with v = 0.
    """
    N = spec.N
    y = np.full((grid.n, N), 1.0 / N)
    pert = amplitude * np.cos(mode * math.pi * grid.x / grid.L)
    y[:, 0] += pert
    y[:, -1] -= pert
    if np.any(y <= 0):
        raise ValueError("amplitude too large: a mass fraction becomes nonpositive")
    varrho = 1.0 / (y @ spec.vbar)
    rho = varrho[:, None] * y
    return rho, np.zeros(grid.n + 1)


def initial_state(cfg: RunConfig):
    rho, vf = well_prepared_initial(cfg.spec, cfg.grid, cfg.amplitude, cfg.mode)
    mom = face_momentum(rho, vf)
    if cfg.incompressible:
        basis = make_basis(cfg.spec.vbar)
        state = IncompState(t=0.0, varrho=rho.sum(axis=1), rprime=rprime_of(basis, rho), mom=mom)
        _, extra = _incomp_rhs(cfg, basis, state.rho(basis), mom)
        _attach_pressure(cfg, basis, state, extra)
        return state
    return FieldState(t=0.0, rho=rho, mom=mom)


# ---------------------------------------------------------------- right-hand sides

def _consts(cfg):
    s = cfg.spec
    return s.vbar, s.alpha, s.M, s.RT, cfg.mobility.lam, cfg.mobility.dms, s.nu


def _comp_rhs(cfg, rho, mom):
    vbar, alpha, M, RT, lam, dms, nu = _consts(cfg)
    n, N = rho.shape
    drho = np.empty((n, N))
    dmom = np.empty(n + 1)
    tcell = np.empty(n)
    mu = np.empty((n, N))
    en = kernels.compressible_rhs(rho, mom, vbar, alpha, M, RT, cfg.m, lam, dms, nu, cfg.b,
                                  cfg.grid.dx, drho, dmom, tcell, mu)
    if not np.all(np.isfinite(tcell)):
        raise BlowUpError("equation of state failed in a cell")
    return (drho, dmom), dict(en=en, t=tcell, mu=mu)


def _incomp_rhs(cfg, basis, rho, mom):
    vbar, _, M, RT, lam, dms, nu = _consts(cfg)
    n, N = rho.shape
    drho = np.empty((n, N))
    dmom = np.empty(n + 1)
    ell = np.empty((n, N))
    dp = np.empty(n + 1)
    en = kernels.incompressible_rhs(rho, mom, vbar, M, RT, lam, dms, nu, cfg.b, cfg.grid.dx,
                                    drho, dmom, ell, dp)
    return (drho, dmom), dict(en=en, ell=ell, dp=dp, rho=rho)


def _attach_pressure(cfg, basis, state, extra):
    """Recover p from the face jumps, gauge it, and store zeta and q'."""
    spec = cfg.spec
    gauge = gauge_eta(spec.vbar)
    rho = extra["rho"]
    press = np.concatenate([[0.0], np.cumsum(extra["dp"][1:-1])])
    shift = gauge_shift(spec, gauge, press, rho, cfg.grid.dx)
    ell = extra["ell"]
    eta = basis.eta
    zeta_raw = press + ell @ eta[-2]
    state.zeta_raw = zeta_raw
    state.zeta = zeta_raw + shift
    state.p = press + shift
    state.gauge = shift
    state.qprime = ell @ eta[:-2].T
    return state


# ---------------------------------------------------------------- time step

def dt_components(cfg: RunConfig, state) -> dict:
    """The individual explicit limits (before the cfl factor).

    The diffusive limit uses trace(M H) >= spectral radius of M H (its
    eigenvalues are real and nonnegative; equality for N = 2), with H the
    Hessian of the free energy (incompressible: of the mixing entropy).
    """
    spec, dx = cfg.spec, cfg.grid.dx
    if cfg.incompressible:
        rho = state.rho(make_basis(spec.vbar))
    else:
        rho = state.rho
    if not np.all(np.isfinite(rho)) or not np.all(np.isfinite(state.mom)):
        raise BlowUpError("non-finite state")
    m = 0.0 if cfg.incompressible else cfg.m
    vmax, c2, trmax, relax, vrmin = kernels.dt_parts(
        rho, state.mom, spec.vbar, spec.alpha, spec.M, spec.RT, m, cfg.mobility.lam,
        cfg.mobility.dms, spec.nu, cfg.incompressible)
    nu = spec.nu
    out = {}
    visc = 4.0 * nu / (vrmin * dx * dx)
    if cfg.incompressible:
        out["convective"] = dx / vmax if vmax > 0 else math.inf
        out["momentum"] = 2.0 / (relax + visc)
    else:
        out["acoustic"] = dx / (vmax + math.sqrt(c2))
        out["viscous"] = 2.0 / visc if nu > 0 else math.inf
    out["diffusive"] = dx * dx / (2.0 * trmax) if trmax > 0 else math.inf
    return out


def dt_stable(cfg: RunConfig, state) -> float:
    dt = cfg.cfl * min(dt_components(cfg, state).values())
    if not (dt > 0 and math.isfinite(dt)):
        raise BlowUpError("no finite stable time step")
    return dt


def _clip(cfg, rho):
    floor = CLIP_REL * cfg.spec.rho_max
    low = rho < floor
    k = int(np.count_nonzero(low))
    if k:
        rho = np.where(low, floor, rho)
    return rho, k


def _check(rho, mom, state):
    if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(mom))):
        raise BlowUpError("non-finite fields after stage", state=state)


def step_compressible(cfg: RunConfig, state: FieldState, dt: float | None = None):
    """One SSP-RK2 step; returns (new_state, info) with stage-averaged budget terms."""
    if dt is None:
        dt = dt_stable(cfg, state)
    (k0r, k0m), ex0 = _comp_rhs(cfg, state.rho, state.mom)
    r1 = state.rho + dt * k0r
    m1 = state.mom + dt * k0m
    _check(r1, m1, state)
    r1, c1 = _clip(cfg, r1)
    (k1r, k1m), ex1 = _comp_rhs(cfg, r1, m1)
    r2 = 0.5 * state.rho + 0.5 * (r1 + dt * k1r)
    m2 = 0.5 * state.mom + 0.5 * (m1 + dt * k1m)
    _check(r2, m2, state)
    r2, c2 = _clip(cfg, r2)
    e0, e1 = ex0["en"], ex1["en"]
    info = dict(E=e0[0] + e0[1], d_visc=0.5 * (e0[2] + e1[2]), d_diff=0.5 * (e0[3] + e1[3]),
                work=0.5 * (e0[4] + e1[4]), mu=ex0["mu"], t_cell=ex0["t"])
    new = FieldState(t=state.t + dt, rho=r2, mom=m2, clips=state.clips + c1 + c2, last_dt=dt)
    return new, info


def _project(basis, rho):
    varrho = rho.sum(axis=1)
    out = R_inf_linear(basis, varrho, rprime_of(basis, rho))
    if np.any(out <= 0) or not np.all(np.isfinite(out)):
        raise ConstraintError("incompressible densities left the positive cone")
    return out


def step_incompressible(cfg: RunConfig, state: IncompState, dt: float | None = None, basis=None):
    """One SSP-RK2 step of the constrained system.

    Each stage updates varrho and R' conservatively (other coordinates of
    the species fluxes are discarded by the reconstruction), the face
    pressure jumps are fixed by requiring zero volume flux, and the new
    pressure is gauged by the mean-value condition.
    """
    basis = basis or make_basis(cfg.spec.vbar)
    if dt is None:
        dt = dt_stable(cfg, state)
    rho0 = state.rho(basis)
    (k0r, k0m), ex0 = _incomp_rhs(cfg, basis, rho0, state.mom)
    r1 = _project(basis, rho0 + dt * k0r)
    m1 = state.mom + dt * k0m
    _check(r1, m1, state)
    (k1r, k1m), ex1 = _incomp_rhs(cfg, basis, r1, m1)
    r2 = _project(basis, 0.5 * rho0 + 0.5 * (r1 + dt * k1r))
    m2 = 0.5 * state.mom + 0.5 * (m1 + dt * k1m)
    _check(r2, m2, state)
    e0, e1 = ex0["en"], ex1["en"]
    info = dict(E=e0[0] + e0[1], d_visc=0.5 * (e0[2] + e1[2]), d_diff=0.5 * (e0[3] + e1[3]),
                work=0.5 * (e0[4] + e1[4]))
    new = IncompState(t=state.t + dt, varrho=r2.sum(axis=1), rprime=rprime_of(basis, r2), mom=m2,
                      last_dt=dt)
    (_, _), exn = _incomp_rhs(cfg, basis, r2, m2)
    _attach_pressure(cfg, basis, new, exn)
    info["constraint"] = float(np.max(np.abs(r2 @ cfg.spec.vbar - 1.0)))
    info["gauge"] = abs(conven_residual(cfg.spec, gauge_eta(cfg.spec.vbar), new.p, r2,
                                        cfg.grid.dx))
    info["E_next"] = exn["en"][0] + exn["en"][1]
    return new, info


# ---------------------------------------------------------------- snapshots and runs

def snapshot_of(cfg: RunConfig, state, basis=None) -> Snapshot:
    if cfg.incompressible:
        basis = basis or make_basis(cfg.spec.vbar)
        rho = state.rho(basis)
        ell = cfg.spec.RT * (np.log(rho / cfg.spec.M)
                             - np.log(np.sum(rho / cfg.spec.M, axis=1))[:, None]) / cfg.spec.M
        mu = state.p[:, None] * cfg.spec.vbar + ell
        return Snapshot(t=state.t, rho=rho.copy(), v_face=face_velocity(rho, state.mom),
                        p=state.p.copy(), mu=mu, zeta=state.zeta.copy(),
                        zeta_raw=state.zeta_raw.copy())
    _, ex = _comp_rhs(cfg, state.rho, state.mom)
    pi = cfg.m * np.expm1(ex["t"])
    return Snapshot(t=state.t, rho=state.rho.copy(), v_face=state.v_face, p=pi, mu=ex["mu"])


def snapshot_times(cfg: RunConfig) -> np.ndarray:
    if cfg.t_end == 0:
        return np.zeros(1)
    if cfg.snapshot_every and cfg.snapshot_every > 0:
        k = int(math.floor(cfg.t_end / cfg.snapshot_every + 1e-9))
        ts = [i * cfg.snapshot_every for i in range(k + 1)]
        if cfg.t_end - ts[-1] > 1e-12 * cfg.t_end:
            ts.append(cfg.t_end)
        else:
            ts[-1] = cfg.t_end
        return np.array(ts)
    return np.array([0.0, cfg.t_end])


def run(cfg: RunConfig) -> Trajectory:
    """Integrate to t_end, landing exactly on the shared snapshot schedule."""
    basis = make_basis(cfg.spec.vbar) if cfg.incompressible else None
    state = initial_state(cfg)
    times = snapshot_times(cfg)
    snaps = [snapshot_of(cfg, state, basis)]
    tt, dts, E, dv, dd, wk, cres, gres = [], [], [], [], [], [], [], []
    stepper = step_incompressible if cfg.incompressible else step_compressible
    last_info = None
    for target in times[1:]:
        while state.t < target:
            dt = cfg.dt_fixed if cfg.dt_fixed is not None else dt_stable(cfg, state)
            if state.t + dt >= target - 1e-12 * max(target, 1.0):
                dt = target - state.t
            t0 = state.t
            if cfg.incompressible:
                state, info = stepper(cfg, state, dt, basis=basis)
                cres.append(info["constraint"])
                gres.append(info["gauge"])
            else:
                state, info = stepper(cfg, state, dt)
            if dt == target - t0:
                state.t = float(target)
            tt.append(t0)
            dts.append(dt)
            E.append(info["E"])
            dv.append(info["d_visc"])
            dd.append(info["d_diff"])
            wk.append(info["work"])
            last_info = info
            if len(dts) > MAX_STEPS:
                raise BlowUpError("step limit exceeded", state=state)
        snaps.append(snapshot_of(cfg, state, basis))
    # energy at the final time
    if cfg.incompressible:
        E_end = last_info["E_next"] if last_info else _incomp_rhs(
            cfg, basis, state.rho(basis), state.mom)[1]["en"]
        if not last_info:
            E_end = E_end[0] + E_end[1]
    else:
        en = _comp_rhs(cfg, state.rho, state.mom)[1]["en"]
        E_end = en[0] + en[1]
    tt.append(state.t)
    E.append(E_end)
    return Trajectory(cfg=cfg, snapshots=snaps, t=np.array(tt), dt=np.array(dts),
                      energy=np.array(E), d_visc=np.array(dv), d_diff=np.array(dd),
                      work=np.array(wk), clips=int(state.clips),
                      constraint_residual=np.array(cres), gauge_residual=np.array(gres))


def closure_residual(cfg: RunConfig, snap: Snapshot, basis=None):
    """Cell residual of div v = div((d dzeta + sum_l A_l dq_l)/dx) and a field scale.

    The scale is the largest sup norm of div v and of the separate terms
    div(A_l dq_l), div(d dp) and div(d dP^inf), which cancel at rest.

    zeta = p - P^inf(varrho, q') is rebuilt through the root-finding
    pressure map, independently of the solver's own face relation;
    Mt = Pi^T M Pi supplies d (last diagonal entry) and A_l (last row).
    """
    basis = basis or make_basis(cfg.spec.vbar)
    spec = cfg.spec
    rho = snap.rho
    dx = cfg.grid.dx
    varrho = rho.sum(axis=1)
    qp = qprime_of(spec, basis, rho)
    pinf = P_inf(spec, basis, varrho, qp)
    q = np.column_stack([qp, snap.p - pinf])
    ra = 0.5 * (rho[:-1] + rho[1:])
    Mt = onsager_reduced(basis, cfg.mobility, ra)
    flux = np.einsum("fk,fk->f", Mt[:, -1, :], np.diff(q, axis=0)) / dx
    res = np.concatenate([[0.0], snap.v_face[1:-1] - flux, [0.0]])
    div_res = np.diff(res) / dx
    # separate contributions: A_l dq_l, d dp and d dP^inf
    d = Mt[:, -1, -1:]
    terms = np.column_stack([Mt[:, -1, :-1] * np.diff(qp, axis=0), d * np.diff(snap.p)[:, None],
                             d * np.diff(pinf)[:, None]]) / dx
    pad = np.zeros((1, terms.shape[1]))
    div_terms = np.diff(np.concatenate([pad, terms, pad]), axis=0) / dx
    scale = max(float(np.max(np.abs(np.diff(snap.v_face) / dx))),
                float(np.max(np.abs(div_terms))), 1e-300)
    return float(np.max(np.abs(div_res))), scale
