"""Command-line runner: scenarios in, rasters/CSV reports and a manifest out.

Subcommands cover the full pipeline: ``stefan`` (one diffusivity), ``mesa``
(the sweep), ``obstacle`` (per-time slices), ``compare`` (both routes plus
cross-validation), ``barriers`` (closed-form profiles and certified
constants), and ``diagnose`` (free-boundary reports for a finished run).

Every run writes ``manifest.json`` recording the scenario hash, package
version, every tolerance actually used, and a hash of every output file;
single-threaded reruns of the same manifest are bit-identical.  Exit codes:
1 bad configuration, 2 solver failure, 3 envelope violation, 4 internal.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, baiocchi, barriers, fbdiag, mesa, snapshots, stefan
from .errors import ConfigError, EnvelopeError, MesaHSError, SolverError
from .geometry import load_scenario
from .stencil import build_stencil

EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_ENVELOPE = 3
EXIT_INTERNAL = 4


def _parse_times(text):
    try:
        return [float(x) for x in text.replace(";", ",").split(",") if x]
    except ValueError as exc:
        raise ConfigError(f"cannot parse time list {text!r}") from exc


def _jobs(args):
    env = os.environ.get("HS_JOBS")
    if env is not None:
        return max(1, int(env))
    return max(1, args.jobs)


def _base_manifest(args, scenario, scenario_path, extras):
    manifest = {
        "package_version": __version__,
        "command": args.command,
        "scenario_path": str(scenario_path),
        "scenario_sha256": snapshots.file_sha256(scenario_path),
        "scenario_content_hash": scenario.content_hash(),
        "grid": {"h": scenario.grid.h, "shape": list(scenario.grid.shape),
                 "counts": scenario.grid.counts()},
        "jobs": _jobs(args),
    }
    manifest.update(extras)
    return manifest


def _dump_run(out_dir, result, scenario, tag):
    h = scenario.grid.h
    for i, t in enumerate(result.times):
        header = {"t": t, "m": result.m, "h": h}
        if result.u_fields:
            snapshots.dump_raster(out_dir, f"{tag}_u_{i:04d}",
                                  result.u_fields[i].u, header)
        snapshots.dump_raster(out_dir, f"{tag}_theta_{i:04d}",
                              result.theta_fields[i].theta, header)
    snapshots.write_csv(out_dir / f"{tag}_flux.csv",
                        ["step", "t", "influx", "cumulative"],
                        result.ledger.rows)


def cmd_stefan(args):
    scenario = load_scenario(args.scenario)
    snapshot_times = _parse_times(args.snapshots)
    params = stefan.StepParams(tol=args.tol)
    envelope = barriers.supersolution_envelope(scenario)
    result = stefan.run(scenario, args.m, snapshot_times, dt=args.dt,
                        params=params)
    out = Path(args.out)
    _dump_run(out, result, scenario, f"stefan_m{args.m:g}")
    manifest = _base_manifest(args, scenario, args.scenario, {
        "m": args.m, "dt": result.dt, "snapshot_times": snapshot_times,
        "solver_tol": params.tol, "mass_error": result.mass_error,
        "steps": result.steps, "envelope": envelope.to_dict(),
    })
    snapshots.write_manifest(out, manifest)
    print(f"stefan m={args.m:g}: {result.steps} steps, "
          f"mass error {result.mass_error:.3e}, wrote {out}")
    return 0


def _mesa_worker(payload):
    scenario_path, m, snapshot_times, dt, tol, keep_u = payload
    scenario = load_scenario(scenario_path)
    result = stefan.run(scenario, m, snapshot_times, dt=dt,
                        params=stefan.StepParams(tol=tol), keep_u=keep_u)
    return m, result


def _run_sweep(args, scenario, snapshot_times):
    if args.m_list is not None:
        m_list = tuple(float(x) for x in _parse_times(args.m_list))
        scenario = dataclasses.replace(scenario, m_list=m_list)
    params = stefan.StepParams(tol=args.tol)
    jobs = _jobs(args)
    precomputed = {}
    if jobs > 1:
        dt = args.dt if args.dt is not None else stefan.default_dt(scenario)
        payloads = [(args.scenario, m, snapshot_times, dt, args.tol,
                     m == scenario.m_list[-1]) for m in scenario.m_list]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            precomputed = dict(pool.map(_mesa_worker, payloads))
    return scenario, mesa.sweep(scenario, snapshot_times, dt=args.dt,
                                params=params, precomputed=precomputed)


def cmd_mesa(args):
    scenario = load_scenario(args.scenario)
    snapshot_times = _parse_times(args.snapshots)
    scenario, limit = _run_sweep(args, scenario, snapshot_times)
    out = Path(args.out)
    h = scenario.grid.h
    q_counts = []
    for i, t in enumerate(limit.times):
        header = {"t": t, "m": limit.m_list[-1], "h": h}
        snapshots.dump_raster(out, f"mesa_V_{i:04d}", limit.pressure[i].theta,
                              header)
        snapshots.dump_raster(out, f"mesa_uinf_{i:04d}", limit.u_inf[i], header)
        q_counts.append(int(limit.q_masks[i].sum()))
    manifest = _base_manifest(args, scenario, args.scenario, {
        "m_list": list(scenario.m_list), "snapshot_times": snapshot_times,
        "tail_gap": [float(g) for g in limit.tail_gap],
        "q_cell_counts": q_counts, "solver_tol": args.tol,
    })
    snapshots.write_manifest(out, manifest)
    print(f"mesa sweep m={list(scenario.m_list)}: tail gap "
          f"{max(limit.tail_gap):.3e}, wrote {out}")
    return 0


def cmd_obstacle(args):
    scenario = load_scenario(args.scenario)
    times = _parse_times(args.times)
    params = baiocchi.ObstacleSolveParams(tol=args.tol, omega=args.omega)
    st = build_stencil(scenario)
    out = Path(args.out)
    rows = []
    warm = None
    for i, t in enumerate(sorted(times)):
        sl = baiocchi.solve_slice(scenario, t, params, warm=warm, stencil=st)
        warm = sl
        snapshots.dump_raster(out, f"obstacle_W_{i:04d}", sl.w,
                              {"t": t, "m": None, "h": scenario.grid.h})
        balance = baiocchi.mass_balance_check(scenario, sl, stencil=st)
        center, _ = scenario.geometry.bounding_center_radius()
        radius = baiocchi.fb_radius_stats(sl.active_mask, scenario.grid, center)
        rows.append([t, sl.residual, sl.sweeps, balance["discrepancy"],
                     radius[0], radius[1], radius[2]])
    snapshots.write_csv(out / "obstacle_report.csv",
                        ["t", "residual", "sweeps", "mass_discrepancy",
                         "fb_r_min", "fb_r_median", "fb_r_max"], rows)
    manifest = _base_manifest(args, scenario, args.scenario, {
        "times": sorted(times), "solver_tol": params.tol,
        "omega": params.omega, "report": "obstacle_report.csv",
    })
    snapshots.write_manifest(out, manifest)
    print(f"obstacle slices at {sorted(times)}: wrote {out}")
    return 0


def cmd_compare(args):
    scenario = load_scenario(args.scenario)
    times = sorted(_parse_times(args.times))
    scenario, limit = _run_sweep(args, scenario, times)
    params = baiocchi.ObstacleSolveParams(tol=args.tol)
    st = build_stencil(scenario)
    slices = []
    warm = None
    for t in times:
        sl = baiocchi.solve_slice(scenario, t, params, warm=warm, stencil=st)
        slices.append(sl)
        warm = sl
    rows = baiocchi.cross_validate(limit, slices, scenario)

    contact = _contact_record(scenario, limit, st, params)
    out = Path(args.out)
    csv_rows = [[r["t"], r["supgap_w"], r["supgap_rel"], r["hausdorff_cells"],
                 contact is not None] for r in rows]
    snapshots.write_csv(out / "compare.csv",
                        ["t", "supgap_W", "supgap_rel", "hausdorff_cells",
                         "contact_flags"], csv_rows)
    manifest = _base_manifest(args, scenario, args.scenario, {
        "times": times, "m_list": list(scenario.m_list),
        "solver_tol": args.tol, "cross_validation": rows,
        "contact": contact,
    })
    snapshots.write_manifest(out, manifest)
    worst = max((r["supgap_rel"] for r in rows), default=0.0)
    print(f"compare: worst relative W gap {worst:.3%}, wrote {out}")
    return 0


def _contact_record(scenario, limit, st, params):
    """Contact-time agreement between the two routes, when a patch exists."""
    patch = scenario.grid.fluid & (scenario.u_init >= 1.0 - 1e-9)
    if not patch.any():
        return None
    tf = limit.time_functions[limit.m_list[-1]].first_theta
    hit = tf[patch]
    if not np.any(np.isfinite(hit)):
        return None
    t_mesa = float(np.nanmin(np.where(np.isfinite(hit), hit, np.nan)))
    dt = stefan.default_dt(scenario)
    try:
        t_obstacle = baiocchi.contact_time(
            scenario, patch, t_lo=max(dt, t_mesa / 4), t_hi=scenario.t_max,
            tol_t=dt, params=params, stencil=st)
    except ConfigError as exc:
        return {"t_mesa": t_mesa, "t_obstacle": None,
                "note": f"bracketing failed: {exc}"}
    return {"t_mesa": t_mesa, "t_obstacle": t_obstacle,
            "gap": abs(t_mesa - t_obstacle), "tol": 2 * dt}


def cmd_barriers(args):
    n, k, eps = args.n, args.k, args.eps
    bounds = barriers.derivative_bounds(n)
    sub = barriers.subsolution_speed(n, k, eps, bounds=bounds)
    out = Path(args.out)
    rows = []
    for alpha, beta in [(1.0, 0.0), (1.0, 1.0), (4.0, 0.5)]:
        r = np.linspace(alpha, 1 + alpha + beta, 101)
        u = barriers.annulus_harmonic(r, n, alpha, beta)
        v = barriers.annulus_poisson(r, n, alpha, beta)
        du = barriers.annulus_harmonic_outer_slope(n, alpha, beta)
        dv = barriers.annulus_poisson_outer_slope(n, alpha, beta)
        rows += [[alpha, beta, ri, ui, vi, du, dv]
                 for ri, ui, vi in zip(r, u, v)]
    snapshots.write_csv(out / "barrier_profiles.csv",
                        ["alpha", "beta", "r", "harmonic", "poisson",
                         "harmonic_outer_slope", "poisson_outer_slope"], rows)
    record = {
        "n": n, "k": k, "eps": eps,
        "gamma": [bounds.gamma1, bounds.gamma2, bounds.gamma3, bounds.gamma4],
        "scan": {"alpha": bounds.scan_alpha, "beta": bounds.scan_beta,
                 "pad": bounds.pad},
        "ell_upper": k, "ell_sub": sub.ell_sub, "m_min": sub.m_min,
    }
    (out / "barrier_bounds.json").write_text(json.dumps(record, indent=2))
    manifest = {"package_version": __version__, "command": "barriers",
                **record}
    snapshots.write_manifest(out, manifest)
    print(f"barriers n={n}: ell in [{sub.ell_sub:.4f}, {k:g}], wrote {out}")
    return 0


def cmd_diagnose(args):
    scenario = load_scenario(args.scenario)
    run_dir = Path(args.run_dir)
    fields, times = [], []
    for json_path in sorted(run_dir.glob("*_W_*.json")) or \
            sorted(run_dir.glob("*_V_*.json")) or \
            sorted(run_dir.glob("*_theta_*.json")):
        arr, meta = snapshots.load_raster(json_path)
        fields.append(arr)
        times.append(meta["t"])
    if not fields:
        raise ConfigError(f"no field rasters found in {run_dir}")
    series = fbdiag.extract_regions(fields, scenario, times=times)
    out = Path(args.out)
    rows = [[t, series.measures[i], series.weighted_measures[i],
             series.fb_points[i].shape[0] * scenario.grid.h ** (scenario.grid.n - 1)]
            for i, t in enumerate(series.times)]
    snapshots.write_csv(out / "regions.csv",
                        ["t", "measure", "weighted_measure",
                         "fb_size_estimate"], rows)

    h = scenario.grid.h
    radii = ([float(x) for x in _parse_times(args.radii)] if args.radii
             else [4 * h, 8 * h, 16 * h])
    t_last = series.times[-1]
    if args.points == "auto":
        pts = series.fb_points[-1]
        step = max(1, pts.shape[0] // 8)
        points = pts[::step][:8]
    else:
        points = [tuple(float(v) for v in chunk.split(","))
                  for chunk in args.points.split(";")]
    reports = []
    for p in points:
        rep = fbdiag.classify_point(series, p, t_last, radii)
        reports.append({
            "point": list(map(float, np.asarray(p))), "t": t_last,
            "radii": rep.radii, "density_ratios": rep.density_ratios,
            "md_ratios": rep.md_ratios,
            "classification": rep.classification, "notes": rep.notes})
    (out / "fb_points.json").write_text(json.dumps(reports, indent=2))
    growth = fbdiag.measure_continuity(series, scenario.lambda_bound) \
        if len(series.times) > 1 else None
    manifest = _base_manifest(args, scenario, args.scenario, {
        "run_dir": str(run_dir), "radii": radii,
        "max_growth_slope": None if growth is None else growth["max_slope"],
        "classifications": [r["classification"] for r in reports],
    })
    snapshots.write_manifest(out, manifest)
    print(f"diagnose: {len(reports)} points classified, wrote {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mesahs",
        description="Hele-Shaw mushy-region laboratory: enthalpy sweep route "
                    "and obstacle-slice route with cross-validation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel jobs (HS_JOBS overrides)")
        p.add_argument("--tol", type=float, default=1e-10,
                       help="solver tolerance")

    p = sub.add_parser("stefan", help="run one diffusivity")
    common(p)
    p.add_argument("--m", type=float, required=True)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--snapshots", required=True, help="comma-separated times")
    p.set_defaults(func=cmd_stefan)

    p = sub.add_parser("mesa", help="run the diffusivity sweep")
    common(p)
    p.add_argument("--m-list", default=None, help="override scenario m_list")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--snapshots", required=True)
    p.set_defaults(func=cmd_mesa)

    p = sub.add_parser("obstacle", help="solve obstacle slices")
    common(p)
    p.add_argument("--times", required=True)
    p.add_argument("--omega", type=float, default=None)
    p.set_defaults(func=cmd_obstacle)

    p = sub.add_parser("compare", help="both routes plus cross-validation")
    common(p)
    p.add_argument("--m-list", default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--times", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("barriers", help="emit barrier profiles and constants")
    p.add_argument("--n", type=int, default=2, choices=(2, 3))
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_barriers)

    p = sub.add_parser("diagnose", help="free-boundary reports for a run dir")
    p.add_argument("run_dir", help="directory written by a previous command")
    p.add_argument("scenario", help="scenario JSON file of that run")
    p.add_argument("--points", default="auto",
                   help='"auto" or "x,y;x,y;..."')
    p.add_argument("--radii", default=None, help="comma-separated scan radii")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        _emit_error("solver", exc,
                    extra={"residual_history": exc.residual_history[-20:]})
        return EXIT_SOLVER
    except EnvelopeError as exc:
        _emit_error("envelope", exc)
        return EXIT_ENVELOPE
    except MesaHSError as exc:
        _emit_error("internal", exc)
        return EXIT_INTERNAL
    except Exception as exc:   # noqa: BLE001 - CLI boundary
        _emit_error("internal", exc, extra={"traceback":
                                            traceback.format_exc()})
        return EXIT_INTERNAL


def _emit_error(kind, exc, extra=None):
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    if extra:
        record.update(extra)
    print(json.dumps(record), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
