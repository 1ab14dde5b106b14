"""The eight acceptance criteria, one test each, one PASS/FAIL line each."""
import dataclasses
import json
import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from mixlimit import config
from mixlimit.audit import (check_affine_shift, check_gauge, check_pm_monotone,
                            check_transform_round_trip, run_thermo_check, sample_states)
from mixlimit.cli import main
from mixlimit.diagnostics import energy_budget, limit_study
from mixlimit.solver1d import Grid1D, closure_residual, dt_stable, initial_state, run
from mixlimit.thermo import ThermoFamily, base_t, default_spec, gm, pi_m

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
EPS = np.finfo(float).eps


@contextmanager
def criterion(capsys, k, title):
    info = {}
    try:
        yield info
    except BaseException as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        _line(capsys, "FAIL", k, title, msg)
        raise
    _line(capsys, "PASS", k, title, info.get("detail", ""))


def _line(capsys, status, k, title, detail):
    with capsys.disabled():
        print(f"\n[{status}] criterion {k} ({title}): {detail}")


def test_criterion_1_thermo_audit(capsys):
    with criterion(capsys, 1, "thermo audit") as info:
        spec = default_spec()
        assert list(spec.M) == [1, 2] and list(spec.vbar) == [1, 2] and spec.sbar == 9
        t0 = time.perf_counter()
        rep = run_thermo_check(spec, samples=10_000, seed=0)
        wall = time.perf_counter() - t0
        by = {c.name: c for c in rep.checks}
        limits = {"thermo.gibbs_duhem": 1e-9, "thermo.homogeneity": 1e-10,
                  "thermo.gradient_fd": 1e-5, "thermo.hessian_fd": 1e-5,
                  "thermo.eos_closed_form": 1e-10, "thermo.round_trip": 1e-8}
        for name, tol in limits.items():
            assert by[name].n == 10_000, name
            assert by[name].worst <= tol, f"{name}: {by[name].worst:.3g} > {tol:g}"
        assert rep.passed, [c.name for c in rep.checks if not c.passed]
        assert wall < 30, f"runtime {wall:.1f} s"
        info["detail"] = ", ".join(f"{n.split('.')[1]} {by[n].worst:.1e}" for n in limits) \
            + f"; {wall:.1f} s"


def test_criterion_2_transform_audit(capsys):
    with criterion(capsys, 2, "transform audit") as info:
        spec = default_spec()
        t0 = time.perf_counter()
        rng = np.random.default_rng(2)
        rho, ms, _ = sample_states(spec, 1000, rng)
        rt = check_transform_round_trip(spec, rho, ms)
        mono = check_pm_monotone(spec, rng)
        aff = check_affine_shift(spec, rng)
        gauge = check_gauge(spec)
        wall = time.perf_counter() - t0
        assert rt.n == 1000 and rt.worst <= 1e-8, rt.worst
        assert mono.passed and mono.worst > 0, mono.worst
        assert aff.worst <= 1e-10, aff.worst
        assert gauge.worst <= 1e-12, gauge.worst
        assert wall < 30
        info["detail"] = (f"round trip {rt.worst:.1e}, min dP/dvarrho {mono.worst:.3f} > 0, "
                          f"affine {aff.worst:.1e}, gauge {gauge.worst:.1e}; {wall:.1f} s")


def _sup_g2_dense(spec, t_lo, t_hi, k=4001):
    # brute-force sup over a grid containing both bracket ends and the knot s = 1
    out = np.empty((t_lo.size, spec.N))
    for j, (a, b) in enumerate(zip(t_lo, t_hi)):
        t = np.linspace(a, b, k)
        if a < 0 < b:
            t = np.concatenate([t, [-1e-15]])
        out[j] = np.max(np.abs(base_t(spec, t[:, None])[2]), axis=0)
    return out


def test_criterion_3_affine_bound(capsys):
    with criterion(capsys, 3, "affine-limit bound") as info:
        spec = default_spec()
        rng = np.random.default_rng(3)
        n = 200
        y = rng.dirichlet(np.ones(spec.N), size=n)
        vr = rng.uniform(0.55, 0.95, size=n)
        rho = vr[:, None] * y
        a = np.log(spec.vbar)[None, :] + np.log(vr)[:, None]
        ti = np.where(a <= 0, a, spec.alpha / (spec.alpha - 1) * a)
        sup = _sup_g2_dense(spec, ti.min(axis=1), ti.max(axis=1))
        viol, worst = 0, 0.0
        for m in (10.0, 100.0, 1000.0):
            pi = pi_m(ThermoFamily(spec, m), rho)
            g, _, _ = gm(ThermoFamily(spec, m), pi)
            lhs = np.abs(g - spec.vbar * pi[:, None])
            rhs = 0.5 * sup * pi[:, None] ** 2 / m
            viol += int(np.count_nonzero(lhs > rhs))
            worst = max(worst, float(np.max(lhs / rhs)))
        assert viol == 0, f"{viol} violations"
        info["detail"] = f"600 states, 0 violations, max lhs/rhs {worst:.3f}"


def test_criterion_4_conservation_equilibrium(capsys):
    with criterion(capsys, 4, "conservation and equilibrium") as info:
        c = config.load(CONFIGS / "conservation.json")
        rc = c.run_config(c.simulate_m)
        assert (rc.grid.n, rc.m, rc.amplitude, rc.t_end) == (100, 100.0, 0.05, 0.05)
        tr = run(rc)
        mass = np.array([s.rho.sum(axis=0) for s in tr.snapshots])
        drift = float(np.max(np.abs(mass - mass[0]) / mass[0]))
        assert drift <= 1e-10, drift
        eq = dataclasses.replace(rc, amplitude=0.0, b=0.0)
        te = run(eq)
        s0 = te.snapshots[0]
        dev = max(max(float(np.max(np.abs(s.rho - s0.rho))), float(np.max(np.abs(s.v_face))))
                  for s in te.snapshots)
        assert dev <= 1e-13, dev
        info["detail"] = (f"mass drift {drift:.1e} over {tr.steps} steps; "
                          f"equilibrium deviation {dev:.1e} over {te.steps} steps")


def test_criterion_5_energy_inequality(capsys):
    with criterion(capsys, 5, "discrete energy inequality") as info:
        c = config.load(CONFIGS / "conservation.json")
        rc = c.run_config(c.simulate_m)
        fine = dataclasses.replace(rc, grid=Grid1D(rc.grid.L, 2 * rc.grid.n))
        dt = 2.0 * dt_stable(fine, initial_state(fine))
        res, inc = [], []
        for cfg, d in ((rc, dt), (fine, dt / 2)):
            rep = energy_budget(run(dataclasses.replace(cfg, dt_fixed=d)))
            R = rep.residual
            # a-priori round-off bound of the cell sums behind each increment
            tol = 2 * cfg.grid.n * EPS * float(np.max(np.abs(rep.E_tot)))
            inc.append(float(np.max(np.diff(R))))
            assert inc[-1] <= tol, f"n={cfg.grid.n}: residual grows by {inc[-1]:.2e} > {tol:.1e}"
            res.append(float(np.max(np.abs(R))))
        ratio = res[0] / res[1]
        assert res[1] <= res[0] / 1.5, f"ratio {ratio:.2f}"
        info["detail"] = (f"max|R| {res[0]:.3e} -> {res[1]:.3e} (ratio {ratio:.2f}); "
                          f"largest step increase {max(inc):.1e}")


def test_criterion_6_incompressible_limit(capsys):
    with criterion(capsys, 6, "incompressible limit") as info:
        c = config.from_dict(config.preset("n2"))
        base = c.run_config(c.m_list[0])
        assert (base.grid.n, base.t_end, base.amplitude) == (200, 0.1, 0.05)
        assert c.m_list == [100.0, 1000.0, 10000.0]
        t0 = time.perf_counter()
        res = limit_study(base, c.m_list, threads=1)
        wall = time.perf_counter() - t0
        assert res.ok and not any(r.failed for r in res.records)
        E = res.column("sup_relative_energy")
        C = res.column("constraint_L1inf")
        P = res.column("pressure_L1_gap")
        slope = float(np.polyfit(np.log(c.m_list), np.log(C), 1)[0])
        assert np.all(np.diff(E) < 0), E
        assert E[-1] <= E[0] / 10, E
        assert np.all(np.diff(C) < 0), C
        assert slope <= -0.8, slope
        assert np.all(np.diff(P) < 0), P
        assert wall < 15 * 60, wall
        fmt = lambda a: ", ".join(f"{x:.2e}" for x in a)  # noqa: E731
        info["detail"] = (f"E_rel [{fmt(E)}]; constraint [{fmt(C)}] slope {slope:.2f}; "
                          f"pressure gap [{fmt(P)}]; {wall:.0f} s")


@pytest.mark.parametrize("name", ["n2", "n3"])
def test_criterion_7_incompressible_integrity(capsys, name):
    with criterion(capsys, f"7/{name}", "incompressible solver integrity") as info:
        c = config.from_dict(config.preset(name))
        rc = dataclasses.replace(c.run_config(math.inf), t_end=0.05)
        tr = run(rc)
        cres = float(np.max(tr.constraint_residual))
        gres = float(np.max(tr.gauge_residual))
        assert tr.constraint_residual.size == tr.steps
        assert cres <= 1e-12, cres
        assert gres <= 1e-12 * rc.grid.L, gres
        worst = 0.0
        for s in tr.snapshots:
            r, scale = closure_residual(rc, s)
            worst = max(worst, r / (10 * rc.grid.dx * scale))
        assert worst <= 1.0, worst
        info["detail"] = (f"{tr.steps} steps, constraint {cres:.1e}, gauge {gres:.1e}, "
                          f"closure/(10 dx scale) {worst:.1e}")


def test_criterion_8_determinism(capsys, tmp_path):
    with criterion(capsys, 8, "determinism") as info:
        d = config.preset("n2")
        d["grid"]["n"] = 50
        d["time"].update(t_end=0.01, snapshot_every=0.0025)
        cfg = tmp_path / "study.json"
        cfg.write_text(json.dumps(d))
        outs = [tmp_path / "a", tmp_path / "b"]
        for o in outs:
            assert main(["limit-study", str(cfg), "--out", str(o), "--seed", "1"]) == 0
        files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*.csv"))
        assert files == sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*.csv"))
        assert len(files) > 10
        diff = [f for f in files if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
        assert not diff, diff
        assert (outs[0] / "summary.json").read_bytes() == (outs[1] / "summary.json").read_bytes()
        info["detail"] = f"{len(files)} CSV files and summary.json byte-identical"
