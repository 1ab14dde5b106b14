"""Command line: ``simulate``, ``limit-study`` and ``thermo-check``.

Exit codes: 0 success, 1 configuration error, 2 blow-up, 3 audit failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import config as cfgmod
from .audit import run_thermo_check
from .diagnostics import energy_budget, limit_study
from .solver1d import BlowUpError, Snapshot, run
from .thermo import ConstraintError

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_AUDIT = 0, 1, 2, 3


def _f(x) -> str:
    return repr(float(x))


def snapshot_csv(snap: Snapshot, grid) -> str:
    N = snap.rho.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "t"] + [f"rho_{i + 1}" for i in range(N)] + ["v", "p"]
               + [f"mu_{i + 1}" for i in range(N)])
    v = snap.v
    for j, x in enumerate(grid.x):
        w.writerow([_f(x), _f(snap.t)] + [_f(r) for r in snap.rho[j]] + [_f(v[j]), _f(snap.p[j])]
                   + [_f(u) for u in snap.mu[j]])
    return buf.getvalue()


def write_trajectory(traj, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    for k, s in enumerate(traj.snapshots):
        (outdir / f"snapshot_{k:05d}.csv").write_text(snapshot_csv(s, traj.cfg.grid))
    (outdir / "energy.csv").write_text(energy_budget(traj).to_csv())


def _err(msg):
    print(f"mixlimit: {msg}", file=sys.stderr)


def _load(path):
    try:
        return cfgmod.load(path)
    except cfgmod.ConfigError as exc:
        _err(f"configuration error: {exc}")
        return None


def cmd_simulate(args) -> int:
    c = _load(args.config)
    if c is None:
        return EXIT_CONFIG
    try:
        m = math.inf if args.model == "incompressible" else c.simulate_m
        rc = c.run_config(m)
    except (cfgmod.ConfigError, ValueError) as exc:
        _err(f"configuration error: {exc}")
        return EXIT_CONFIG
    try:
        traj = run(rc)
    except (BlowUpError, ConstraintError, FloatingPointError) as exc:
        _err(f"blow-up: {exc}")
        return EXIT_BLOWUP
    out = Path(args.out)
    write_trajectory(traj, out)
    info = {"model": args.model, "m": "inf" if math.isinf(m) else m, "steps": traj.steps,
            "clip_count": traj.clips, "flagged": traj.clips > 0,
            "snapshots": len(traj.snapshots), "backend": traj.backend}
    (out / "run.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    print(f"{args.model}: {traj.steps} steps, {len(traj.snapshots)} snapshots -> {out}")
    return EXIT_OK


def cmd_limit_study(args) -> int:
    c = _load(args.config)
    if c is None:
        return EXIT_CONFIG
    if not c.m_list:
        _err("configuration error: study.m_list is empty")
        return EXIT_CONFIG
    if args.threads < 1:
        _err("--threads must be at least 1")
        return EXIT_CONFIG
    base = c.run_config(c.m_list[0])
    res, ref, trajs = limit_study(base, c.m_list, threads=args.threads, keep_trajectories=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "study.csv").write_text(res.to_csv())
    (out / "timing.json").write_text(json.dumps(res.timing(), indent=2, sort_keys=True) + "\n")
    if ref is not None:
        write_trajectory(ref, out / "reference")
    for rec, tr in zip(res.records, trajs):
        if tr is not None:
            write_trajectory(tr, out / f"m_{rec.m:g}")
    summary = {
        "m_list": res.m_list,
        "reference": {"steps": res.reference_steps, "failed": res.reference_failed or None},
        "slopes": res.slopes(),
        "records": [{"m": r.m, "status": r.failed or "ok", "unreliable": bool(r.unreliable),
                     "sup_relative_energy_gauged": r.sup_relative_energy_gauged}
                    for r in res.records],
        "seed": args.seed,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(res.to_csv())
    if res.reference_failed:
        _err(f"reference run {res.reference_failed}")
        return EXIT_BLOWUP
    if not res.ok:
        _err("every member run failed")
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_thermo_check(args) -> int:
    c = _load(args.config)
    if c is None:
        return EXIT_CONFIG
    if args.samples < 1:
        _err("--samples must be positive")
        return EXIT_CONFIG
    rep = run_thermo_check(c.spec, samples=args.samples, seed=args.seed)
    text = rep.to_json()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    for line in rep.summary_lines():
        print(line)
    print(f"runtime {rep.runtime_s:.2f} s")
    if not rep.passed:
        failed = [ch.as_dict() for ch in rep.checks if not ch.passed]
        _err("property failures: " + json.dumps(failed, sort_keys=True))
        return EXIT_AUDIT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixlimit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one solver and dump snapshots")
    s.add_argument("config")
    s.add_argument("--model", choices=("compressible", "incompressible"), default="compressible")
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("limit-study", help="incompressible reference plus the m sweep")
    s.add_argument("config")
    s.add_argument("--out", required=True)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_limit_study)

    s = sub.add_parser("thermo-check", help="property audit of the thermodynamics")
    s.add_argument("config")
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None, help="write the JSON report here")
    s.set_defaults(func=cmd_thermo_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
