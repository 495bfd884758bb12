"""Command-line interface: run experiments, emit CSV/JSON artifacts.

Exit codes: 0 success, 1 runtime failure (trapped orbit, Newton divergence),
2 configuration error.  Identical inputs produce byte-identical outputs
(floats are written with 17 significant digits; sweeps reduce in a fixed
order regardless of worker count).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .billiard import BilliardError, billiard_orbit, find_two_periodic, jacobian
from .collar import CollarError
from .config import ConfigError, build_domain, load_config
from .fields import ExpressionError
from .flow import (
    COLLAR,
    FlowError,
    SectionPoint,
    hamiltonian,
    integrate,
    interior_state,
    project_to_base,
    section_state,
)
from .geometry import GeometryError
from .invariants import (
    InvariantsError,
    caustic_curve,
    fit_invariant_circle,
    liouville_integral_drift,
    noether_drift,
)
from .normalform import (
    NormalFormError,
    adiabatic_drift,
    compare_T_vs_N,
    estimate_boundary_jets,
)

__all__ = ["main"]

_CONFIG_ERRORS = (ConfigError, ExpressionError, GeometryError)
_RUNTIME_ERRORS = (FlowError, BilliardError, NormalFormError, InvariantsError, CollarError)


def _fmt(x):
    return format(float(x), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


def _write_table(outdir, stem, header, rows, fmt):
    if fmt == "json":
        obj = [dict(zip(header, row)) for row in rows]
        _write_json(outdir / f"{stem}.json", obj)
        return outdir / f"{stem}.json"
    _write_csv(outdir / f"{stem}.csv", header, rows)
    return outdir / f"{stem}.csv"


def _common_args(sub):
    src = sub.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=str, help="JSON domain config")
    src.add_argument("--preset", type=str, help="built-in preset name")
    sub.add_argument("--out", type=str, required=True, help="output directory")
    sub.add_argument("--energy", type=float, default=1.0, help="energy level h (default 1)")
    sub.add_argument("--tol", type=float, default=None, help="integrator drift budget")
    sub.add_argument("--max-time", type=float, default=None, help="max flight/trajectory time")
    sub.add_argument("--format", choices=("csv", "json"), default="csv",
                     help="sampled-data format (default csv)")
    sub.add_argument("--workers", type=int, default=1, help="parallel workers for sweeps")


def _domain_from_args(args):
    if args.preset is not None:
        config = {"preset": args.preset}
    else:
        config = load_config(args.config)
    domain = build_domain(config)
    if args.tol is not None:
        if args.tol <= 0:
            raise ConfigError("tol", "must be positive")
        domain.tol = args.tol
    if args.max_time is not None:
        if args.max_time <= 0:
            raise ConfigError("max-time", "must be positive")
        domain.max_time = args.max_time
    return domain, config


def _parse_floats(text, name, count=None):
    try:
        vals = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(name, f"expected comma-separated numbers, got {text!r}")
    if count is not None and len(vals) != count:
        raise ConfigError(name, f"expected {count} numbers, got {len(vals)}")
    return vals


def _start_state(domain, args):
    if args.start_interior is not None:
        vals = _parse_floats(args.start_interior, "start-interior", 2 * domain.n)
        state = interior_state(vals[: domain.n], vals[domain.n:])
        if domain.phi_value(state.x) <= 0:
            raise ConfigError("start-interior", "start point is not interior (phi <= 0)")
        return state
    if args.start_section is not None:
        vals = [v.strip() for v in args.start_section.split(",")]
        if len(vals) not in (2, 3):
            raise ConfigError("start-section", "expected 'q,p[,sheet]'")
        q, p = float(vals[0]), float(vals[1])
        sheet = int(vals[2]) if len(vals) == 3 else 1
        if sheet not in (1, -1):
            raise ConfigError("start-section", "sheet must be 1 or -1")
        sp = SectionPoint(q, p, sheet, args.energy)
        return section_state(domain, sp)
    raise ConfigError("start", "provide --start-interior or --start-section")


def _trajectory_rows(domain, traj):
    rows = []
    for t, pt in zip(traj.times, traj.points):
        x = project_to_base(domain, pt)
        if pt.chart == COLLAR:
            mom = (pt.pq, pt.eta)
        else:
            mom = tuple(pt.p)
        rows.append((t, pt.chart, pt.sheet, *x, *mom, hamiltonian(domain, pt)))
    return rows


def _events_obj(traj):
    return [
        {"type": ev.kind, "t": ev.t, "data": ev.data}
        for ev in traj.events
    ]


def cmd_simulate(args):
    domain, _ = _domain_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    state = _start_state(domain, args)
    traj = integrate(domain, state, args.t_end, tol=args.tol)
    header = ["t", "chart", "sheet"] + [f"x{i+1}" for i in range(domain.n)] + \
             [f"p{i+1}" for i in range(domain.n)] + ["H"]
    _write_table(outdir, "trajectory", header, _trajectory_rows(domain, traj), args.format)
    _write_json(outdir / "events.json", _events_obj(traj))
    return 0


def cmd_billiard(args):
    domain, _ = _domain_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    sp = SectionPoint(args.q, args.p, args.sheet, args.energy)
    orbit = billiard_orbit(domain, sp, args.bounces, tol=args.tol)
    rows = []
    for i, pt in enumerate(orbit.points):
        ell = orbit.lengths[i - 1] if i > 0 else 0.0
        rows.append((i, pt.q, pt.p, pt.sheet, ell))
    _write_table(outdir, "bounces", ["i", "q", "p", "sheet", "flight_length"], rows, args.format)
    jac = jacobian(domain, sp, tol=args.tol)
    _write_json(outdir / "symplectic.json", {
        "jacobian": [[jac[0, 0], jac[0, 1]], [jac[1, 0], jac[1, 1]]],
        "det": float(np.linalg.det(jac)),
        "det_defect": abs(float(np.linalg.det(jac)) - 1.0),
        "trapped": orbit.trapped,
        "trapped_reason": orbit.trapped_reason,
    })
    if orbit.trapped:
        print(f"warning: orbit trapped after {len(orbit) - 1} bounces: "
              f"{orbit.trapped_reason}", file=sys.stderr)
        return 1
    return 0


def cmd_normalform(args):
    domain, _ = _domain_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else None
    nf = estimate_boundary_jets(domain, m_q=args.mq, seed=seed)
    _write_json(outdir / "normalform.json", nf.to_dict())
    p_list = _parse_floats(args.p_list, "p-list")
    res = compare_T_vs_N(domain, nf, p_list, samples=args.samples,
                         tol=args.tol if args.tol else 1e-11)
    drifts = []
    for p in p_list:
        m = int(max(1, math.floor(args.adiabatic_floor * p * p)))
        drifts.append(adiabatic_drift(domain, nf, SectionPoint(0.1, p, 1, 1.0), m,
                                      c_floor=args.adiabatic_floor, tol=args.tol))
    rows = [
        (p, qe, pe, d)
        for (p, qe, pe), d in zip(res.rows(), drifts)
    ]
    _write_table(outdir, "compare", ["p", "q_error", "p_error", "adiabatic_drift"],
                 rows, args.format)
    lp = np.log(np.asarray(p_list))
    drift_slope = float(np.polyfit(lp, np.log(np.maximum(drifts, 1e-300)), 1)[0])
    _write_json(outdir / "slopes.json", {
        "q_error_slope": res.q_slope,
        "p_error_slope": res.p_slope,
        "adiabatic_drift_slope": drift_slope,
    })
    return 0


def _fit_one(packed):
    config, eps, orbit_len, tol, seed, mq = packed
    domain = build_domain(config)
    nf = estimate_boundary_jets(domain, m_q=mq, seed=seed)
    fit = fit_invariant_circle(domain, nf, eps, orbit_len=orbit_len, tol=tol)
    pts = caustic_curve(domain, 2.0 * eps)
    return fit.to_dict(), pts.tolist()


def cmd_caustics(args):
    domain, config = _domain_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    eps_list = _parse_floats(args.eps_list, "eps-list")
    packed = [
        (config, eps, args.orbit_len, args.tol, args.seed, args.mq)
        for eps in eps_list
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as ex:
            results = list(ex.map(_fit_one, packed))
    else:
        results = [_fit_one(p) for p in packed]
    for eps, (fit_obj, pts) in zip(eps_list, results):
        tag = _fmt(eps)
        _write_json(outdir / f"fit_eps{tag}.json", fit_obj)
        _write_table(outdir, f"caustic_eps{tag}", ["x1", "x2"], pts, args.format)
    return 0


def cmd_twoperiodic(args):
    domain, _ = _domain_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    q_init = _parse_floats(args.q_init, "q-init")
    orbit, residual = find_two_periodic(domain, q_init, tol=args.newton_tol,
                                        flight_tol=args.tol)
    rows = []
    for i, pt in enumerate(orbit.points):
        ell = orbit.lengths[i - 1] if i > 0 else 0.0
        rows.append((i, pt.q, pt.p, pt.sheet, ell))
    _write_table(outdir, "twoperiodic", ["i", "q", "p", "sheet", "flight_length"],
                 rows, args.format)
    _write_json(outdir / "twoperiodic.json", {
        "q0": orbit.points[0].q,
        "q1": orbit.points[1].q,
        "residual": residual,
    })
    return 0


def cmd_check(args):
    domain, _ = _domain_from_args(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    state = _start_state(domain, args)
    traj = integrate(domain, state, args.t_end, tol=args.tol)
    report = {"t_end": args.t_end, "h": traj.h}
    hs = [hamiltonian(domain, pt) for pt in traj.points]
    report["energy_drift"] = float(max(abs(h - traj.h) for h in hs) / traj.h)
    if domain.so_invariant:
        report["noether_drift"] = noether_drift(domain, traj)
    if domain.separable_phis:
        res = liouville_integral_drift(domain, traj)
        report["liouville_drift"] = res.drift
        report["liouville_samples"] = res.n_samples
        report["corner_excluded"] = res.n_corner_excluded
        report["corner_proximity"] = res.corner_proximity
    if not domain.so_invariant and not domain.separable_phis:
        report["note"] = "domain has no integrability flags; only energy drift checked"
    _write_json(outdir / "check.json", report)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="degenbill",
        description="Billiard-like dynamics of boundary-degenerate metrics g/phi.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="integrate the regularized flow")
    _common_args(sp)
    sp.add_argument("--start-interior", type=str, help="x1,..,xn,p1,..,pn")
    sp.add_argument("--start-section", type=str, help="q,p[,sheet]")
    sp.add_argument("--t-end", type=float, required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("billiard", help="iterate the billiard map")
    _common_args(sp)
    sp.add_argument("--q", type=float, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--sheet", type=int, default=1, choices=(1, -1))
    sp.add_argument("--bounces", type=int, required=True)
    sp.set_defaults(func=cmd_billiard)

    sp = sub.add_parser("normalform", help="boundary jets and averaged-map comparison")
    _common_args(sp)
    sp.add_argument("--p-list", type=str, required=True, help="e.g. 4,8,16,32")
    sp.add_argument("--samples", type=int, default=8)
    sp.add_argument("--mq", type=int, default=192, help="boundary jet samples")
    sp.add_argument("--adiabatic-floor", type=float, default=1.0,
                    help="bounce budget coefficient m = floor * p^2")
    sp.add_argument("--seed", type=int, default=None,
                    help="jet sample jitter seed (default: DEGENBILL_SEED or 0)")
    sp.set_defaults(func=cmd_normalform)

    sp = sub.add_parser("caustics", help="invariant-circle fits and caustic curves")
    _common_args(sp)
    sp.add_argument("--eps-list", type=str, required=True, help="e.g. 0.05,0.1")
    sp.add_argument("--orbit-len", type=int, default=None)
    sp.add_argument("--m-points", type=int, default=128)
    sp.add_argument("--mq", type=int, default=192)
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=cmd_caustics)

    sp = sub.add_parser("twoperiodic", help="find a two-periodic orbit")
    _common_args(sp)
    sp.add_argument("--q-init", type=str, required=True, help="q1,q2 initial guesses")
    sp.add_argument("--newton-tol", type=float, default=1e-8)
    sp.set_defaults(func=cmd_twoperiodic)

    sp = sub.add_parser("check", help="integrability report (conserved quantities)")
    _common_args(sp)
    sp.add_argument("--start-interior", type=str)
    sp.add_argument("--start-section", type=str)
    sp.add_argument("--t-end", type=float, required=True)
    sp.set_defaults(func=cmd_check)

    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except _CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
