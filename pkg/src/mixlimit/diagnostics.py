"""Energy budgets, relative energies and the Mach-number sweep."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mobility import MobilityKind, onsager_reduced
from .solver1d import BlowUpError, Grid1D, RunConfig, Snapshot, Trajectory, run
from .thermo import (ConstraintError, MixtureSpec, ThermoFamily, chemical_potentials, free_energy,
                     log_mole_fractions)
from .transform import Basis, gauge_eta, make_basis

STUDY_COLUMNS = ("m", "sup_relative_energy", "visc_dissipation_gap", "diff_dissipation_gap",
                 "constraint_L1inf", "pressure_L1_gap", "steps", "clip_count")
UNRELIABLE_CLIP_FRACTION = 0.01


@dataclass
class EnergyReport:
    t: np.ndarray
    E_tot: np.ndarray
    D_visc: np.ndarray     # accumulated
    D_diff: np.ndarray     # accumulated
    work: np.ndarray       # accumulated
    residual: np.ndarray   # E_tot + D_visc + D_diff - E_tot(0) - work

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "E_tot", "D_visc", "D_diff", "work", "residual"])
        for row in zip(self.t, self.E_tot, self.D_visc, self.D_diff, self.work, self.residual):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


@dataclass
class RelEnergyReport:
    t: np.ndarray
    E_rel: np.ndarray

    @property
    def E_sup_running(self):
        return np.maximum.accumulate(self.E_rel)


@dataclass
class GaugedPressure:
    p: np.ndarray
    unreliable: bool = False


@dataclass
class StudyRecord:
    m: float
    sup_relative_energy: float = math.nan
    visc_dissipation_gap: float = math.nan
    diff_dissipation_gap: float = math.nan
    constraint_L1inf: float = math.nan
    pressure_L1_gap: float = math.nan
    steps: int = 0
    clip_count: int = 0
    wall_time_s: float = math.nan
    failed: str = ""
    unreliable: bool = False
    rel_energy: RelEnergyReport | None = None
    sup_relative_energy_gauged: float = math.nan


@dataclass
class StudyResult:
    records: list
    reference_steps: int = 0
    reference_failed: str = ""
    reference_wall_time_s: float = math.nan
    m_list: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.reference_failed and any(not r.failed for r in self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self) -> str:
        """Deterministic study table (wall times live in :meth:`timing`)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STUDY_COLUMNS + ("status",))
        for r in self.records:
            row = []
            for c in STUDY_COLUMNS:
                v = getattr(r, c)
                row.append(str(v) if isinstance(v, int) else repr(float(v)))
            row.append(r.failed or ("unreliable" if r.unreliable or r.clip_count else "ok"))
            w.writerow(row)
        return buf.getvalue()

    def timing(self) -> dict:
        """Wall times in seconds, kept out of every CSV so reruns stay byte-identical."""
        return {"reference": self.reference_wall_time_s,
                "members": {repr(float(r.m)): r.wall_time_s for r in self.records}}

    def slopes(self) -> dict:
        """Log-log least-squares slopes of each diagnostic against m."""
        out = {}
        good = [r for r in self.records if not r.failed]
        for c in STUDY_COLUMNS[1:6]:
            xs = np.array([r.m for r in good], dtype=float)
            ys = np.array([getattr(r, c) for r in good], dtype=float)
            keep = (ys > 0) & np.isfinite(ys)
            if keep.sum() >= 2:
                out[c] = float(np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)[0])
            else:
                out[c] = None
        return out


# ---------------------------------------------------------------- helpers

def _check_grid(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"grid mismatch: {np.shape(a)} vs {np.shape(b)}")


def _kinetic(rho, v, u, dx):
    varrho = rho.sum(axis=1)
    w = np.asarray(v, dtype=float) - np.asarray(u, dtype=float)
    if w.size == varrho.size + 1:     # face velocities
        rf = 0.5 * (varrho[:-1] + varrho[1:])
        return 0.5 * dx * float(np.sum(rf * w[1:-1] ** 2))
    return 0.5 * dx * float(np.sum(varrho * w ** 2))


def _time_integral(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def _interp_snapshot(snaps, t):
    """Linear-in-time interpolation of reference snapshots."""
    ts = np.array([s.t for s in snaps])
    k = int(np.searchsorted(ts, t))
    if k < ts.size and abs(ts[k] - t) <= 1e-12 * max(1.0, abs(t)):
        return snaps[k]
    if k > 0 and abs(ts[k - 1] - t) <= 1e-12 * max(1.0, abs(t)):
        return snaps[k - 1]
    if k == 0 or k == ts.size:
        raise ValueError(f"time {t} outside the reference schedule")
    a, b = snaps[k - 1], snaps[k]
    s = (t - a.t) / (b.t - a.t)

    def lerp(x, y):
        return None if x is None else (1 - s) * x + s * y

    return Snapshot(t=t, rho=lerp(a.rho, b.rho), v_face=lerp(a.v_face, b.v_face),
                    p=lerp(a.p, b.p), mu=lerp(a.mu, b.mu), zeta=lerp(a.zeta, b.zeta),
                    zeta_raw=lerp(a.zeta_raw, b.zeta_raw))


# ---------------------------------------------------------------- functionals

def relative_energy(fam: ThermoFamily, snapshotA, snapshotB, grid: Grid1D, mu_ref=None) -> float:
    """int rho|v-u|^2/2 + f(rho) - f(r) - mu(r).(rho - r) by the midpoint rule.

    Snapshots are :class:`Snapshot` objects or ``(rho, v)`` pairs; ``v`` may be
    face (n+1) or cell (n) velocities.  ``mu_ref`` replaces the potentials of
    the reference (used for the gauged incompressible variant).
    """
    rho, v = _rv(snapshotA)
    r, u = _rv(snapshotB)
    _check_grid(rho, r)
    _check_grid(v, u)
    if np.any(r <= 0):
        raise ValueError("reference densities must be strictly positive")
    mu_r = chemical_potentials(fam, r) if mu_ref is None else np.asarray(mu_ref, dtype=float)
    dens = free_energy(fam, rho) - free_energy(fam, r) - np.sum(mu_r * (rho - r), axis=-1)
    return _kinetic(rho, v, u, grid.dx) + grid.dx * float(np.sum(dens))


def _rv(s):
    if isinstance(s, Snapshot):
        return s.rho, s.v_face
    rho, v = s
    return np.asarray(rho, dtype=float), np.asarray(v, dtype=float)


def dissipation_viscous(spec: MixtureSpec, vA, vB, grid: Grid1D) -> float:
    """(2 eta + lambda) int |d_x (vA - vB)|^2 for face velocities."""
    _check_grid(vA, vB)
    w = np.asarray(vA, dtype=float) - np.asarray(vB, dtype=float)
    if w.size != grid.n + 1:
        raise ValueError("velocities must be given on the n+1 faces")
    return spec.nu * float(np.sum(np.diff(w) ** 2)) / grid.dx


def dissipation_diffusive(basis: Basis, kind: MobilityKind, rhoField, qFieldA, qFieldB,
                          grid: Grid1D) -> float:
    """int Mt grad(qA - qB) . grad(qA - qB) with face gradients and face mobility."""
    _check_grid(qFieldA, qFieldB)
    rho = np.asarray(rhoField, dtype=float)
    dq = np.diff(np.asarray(qFieldA, dtype=float) - np.asarray(qFieldB, dtype=float), axis=0)
    dq = dq / grid.dx
    Mt = onsager_reduced(basis, kind, 0.5 * (rho[:-1] + rho[1:]))
    return grid.dx * float(np.einsum("fi,fij,fj->", dq, Mt, dq))


def constraint_deviation(spec: MixtureSpec, rhoField, grid: Grid1D):
    """(int |rho . vbar - 1| dx, max |rho . vbar - 1|)."""
    dev = np.abs(np.asarray(rhoField, dtype=float) @ spec.vbar - 1.0)
    return grid.dx * float(np.sum(dev)), float(np.max(dev))


def gauged_pressure(fam: ThermoFamily, snapshot: Snapshot, grid: Grid1D) -> GaugedPressure:
    """pi + zeta_bar with zeta_bar = -mean(eta_g . mu); the stored p when m is infinite."""
    spec = fam.spec
    floor = 1e-12 * spec.rho_max * (1 + 1e-9)
    clipped = int(np.count_nonzero(np.any(snapshot.rho <= floor, axis=1)))
    unreliable = clipped > UNRELIABLE_CLIP_FRACTION * grid.n
    if fam.infinite:
        return GaugedPressure(p=np.array(snapshot.p, dtype=float), unreliable=unreliable)
    eta = gauge_eta(spec.vbar).eta_g
    zbar = -float(np.mean(snapshot.mu @ eta))
    return GaugedPressure(p=snapshot.p + zbar, unreliable=unreliable)


def energy_budget(traj: Trajectory) -> EnergyReport:
    dt = traj.dt
    Dv = np.concatenate([[0.0], np.cumsum(dt * traj.d_visc)])
    Dd = np.concatenate([[0.0], np.cumsum(dt * traj.d_diff)])
    W = np.concatenate([[0.0], np.cumsum(dt * traj.work)])
    E = traj.energy
    return EnergyReport(t=traj.t, E_tot=E, D_visc=Dv, D_diff=Dd, work=W,
                        residual=E + Dv + Dd - E[0] - W)


# ---------------------------------------------------------------- the sweep

def _q_of(basis, mu):
    return mu @ basis.eta[:-1].T


def _reference_mu(spec, snap):
    ell = spec.RT * log_mole_fractions(spec, snap.rho) / spec.M
    return snap.p[:, None] * spec.vbar + ell


def evaluate_member(cfg: RunConfig, traj: Trajectory, ref: Trajectory) -> StudyRecord:
    spec, grid = cfg.spec, cfg.grid
    fam = cfg.fam
    basis = make_basis(spec.vbar)
    ts, erel, erel_g, dvis, ddif, cdev, pgap = [], [], [], [], [], [], []
    unreliable = False
    for s in traj.snapshots:
        r = _interp_snapshot(ref.snapshots, s.t)
        mu_inf = _reference_mu(spec, r)
        ts.append(s.t)
        erel.append(relative_energy(fam, s, r, grid))
        erel_g.append(relative_energy(fam, s, r, grid, mu_ref=mu_inf))
        dvis.append(dissipation_viscous(spec, s.v_face, r.v_face, grid))
        ddif.append(dissipation_diffusive(basis, cfg.mobility, s.rho, _q_of(basis, s.mu),
                                          _q_of(basis, mu_inf), grid))
        cdev.append(constraint_deviation(spec, s.rho, grid)[0])
        gp = gauged_pressure(fam, s, grid)
        unreliable |= gp.unreliable
        pgap.append(grid.dx * float(np.sum(np.abs(gp.p - r.p))))
    rel = RelEnergyReport(t=np.array(ts), E_rel=np.array(erel))
    return StudyRecord(m=float(cfg.m), sup_relative_energy=float(np.max(erel)),
                       visc_dissipation_gap=_time_integral(ts, dvis),
                       diff_dissipation_gap=_time_integral(ts, ddif),
                       constraint_L1inf=float(np.max(cdev)),
                       pressure_L1_gap=_time_integral(ts, pgap), steps=traj.steps,
                       clip_count=traj.clips, unreliable=unreliable, rel_energy=rel,
                       sup_relative_energy_gauged=float(np.max(erel_g)))


def _timed_run(cfg):
    t0 = time.perf_counter()
    try:
        traj = run(cfg)
        err = ""
    except (BlowUpError, ConstraintError, FloatingPointError) as exc:
        traj, err = None, f"failed: {type(exc).__name__}: {exc}"
    return traj, err, time.perf_counter() - t0


def limit_study(base: RunConfig, m_list, threads: int = 1, keep_trajectories: bool = False):
    """Reference run at m = infinity, then one compressible run per m.

    Returns a :class:`StudyResult`; with ``keep_trajectories`` also the
    reference and member trajectories as a second value.
    """
    m_list = [float(m) for m in m_list]
    if not m_list:
        raise ValueError("m_list is empty")
    if any(not (m > 0) or math.isinf(m) for m in m_list):
        raise ValueError("every m must be positive and finite")
    if threads < 1:
        raise ValueError("threads must be at least 1")
    ref, err, wt = _timed_run(base.with_m(math.inf))
    result = StudyResult(records=[], reference_failed=err, reference_wall_time_s=wt,
                         m_list=m_list)
    if ref is None:
        result.records = [StudyRecord(m=m, failed="reference failed") for m in m_list]
        return (result, None, []) if keep_trajectories else result
    result.reference_steps = ref.steps
    cfgs = [base.with_m(m) for m in m_list]

    def member(cfg):
        traj, err, wt = _timed_run(cfg)
        if traj is None:
            return StudyRecord(m=cfg.m, failed=err, wall_time_s=wt), None
        rec = evaluate_member(cfg, traj, ref)
        rec.wall_time_s = wt
        return rec, traj

    if threads == 1:
        out = [member(c) for c in cfgs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(member, cfgs))
    result.records = [o[0] for o in out]
    if keep_trajectories:
        return result, ref, [o[1] for o in out]
    return result
