"""Batch experiment runner.

    phasecurv <subcommand> [--config run.ini] [flags] [--set section.key=value ...]

Each run writes CSV tables, a manifest.json and optional figures to a run directory
under $PHASECURV_OUTPUT (default ./runs).  Exit codes: 0 success, 1 configuration
error, 2 numerical check missed, 3 divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import anisotropy as an
from . import config as cf
from . import field as fl

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_DIVERGED = 0, 1, 2, 3
OUTPUT_ENV = "PHASECURV_OUTPUT"

# flag -> (section, key), per subcommand
FLAGS = {
    "profile-check": {"--eps": ("profile", "eps"), "--lambda": ("profile", "lambda")},
    "convexify": {"--phi": ("anisotropy", "name"), "--beta": ("anisotropy", "beta"), "--s": ("anisotropy", "s"),
                  "--a": ("anisotropy", "a"), "--b": ("anisotropy", "b"), "--n-dirs": ("anisotropy", "n_dirs")},
    "recovery-energy": {"--shape": ("shape", "name"), "--R": ("shape", "R"), "--a": ("shape", "a"),
                        "--b": ("shape", "b"), "--phi": ("anisotropy", "name"), "--beta": ("anisotropy", "beta"),
                        "--eps": ("recovery", "eps"), "--lambda": ("recovery", "lambda"), "--n": ("recovery", "n"),
                        "--half-width": ("recovery", "half_width"), "--r-eps": ("recovery", "r_eps")},
    "point-energy": {"--eps": ("point", "eps"), "--beta": ("point", "beta"), "--lambda": ("point", "lambda")},
    "ms-recovery": {"--state": ("ms", "state"), "--eps": ("ms", "eps"), "--gamma": ("ms", "gamma"),
                    "--amplitude": ("ms", "amplitude"), "--length": ("ms", "length"), "--R": ("ms", "R"),
                    "--beta": ("ms", "beta"), "--eta": ("ms", "eta"), "--n": ("ms", "n"),
                    "--half-width": ("ms", "half_width")},
    "varifold-check": {"--shape": ("shape", "name"), "--R": ("shape", "R"), "--a": ("shape", "a"),
                       "--b": ("shape", "b"), "--k": ("shape", "k"), "--side": ("shape", "side"),
                       "--h": ("varifold", "h"), "--sweep": ("varifold", "sweep")},
    "minimize": {"--phi": ("anisotropy", "name"), "--beta": ("anisotropy", "beta"), "--eps": ("minimize", "eps"),
                 "--n": ("minimize", "n"), "--R": ("minimize", "R"), "--dt": ("minimize", "dt"),
                 "--steps": ("minimize", "steps"), "--perturb": ("minimize", "perturb"),
                 "--gtol": ("minimize", "gtol")},
    "ms-minimize": {"--data": ("ms_minimize", "data"), "--eps": ("ms_minimize", "eps"),
                    "--n": ("ms_minimize", "n"), "--gamma": ("ms_minimize", "gamma"), "--mu": ("ms_minimize", "mu"),
                    "--cycles": ("ms_minimize", "cycles"), "--noise": ("ms_minimize", "noise"),
                    "--gtol": ("ms_minimize", "gtol")},
}

# sections that determine each subcommand's output (hashed into the run directory name)
SECTIONS = {
    "profile-check": ["profile"],
    "convexify": ["anisotropy"],
    "recovery-energy": ["shape", "anisotropy", "recovery"],
    "point-energy": ["point"],
    "ms-recovery": ["ms", "anisotropy"],
    "varifold-check": ["shape", "varifold"],
    "minimize": ["anisotropy", "minimize", "run"],
    "ms-minimize": ["anisotropy", "ms_minimize", "run"],
}


class CheckFailed(RuntimeError):
    pass


# --- small helpers ----------------------------------------------------------------


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_table(path: Path, rows: list[dict]):
    """CSV with a fixed column order and round-trip float formatting (bit-reproducible)."""
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(r.get(c, "")) for c in cols) + "\n")


def _check(checks: dict, name: str, ok: bool, value=None, target=None):
    checks[name] = {"pass": bool(ok), "value": value, "target": target}


def _phi(cfg) -> an.Anisotropy:
    a = cfg["anisotropy"]
    return an.from_name(a["name"], beta=a["beta"], s=a["s"], a=a["a"], b=a["b"])


def _shape(cfg):
    from . import sharp_geometry as sg

    s = cfg["shape"]
    name = s["name"]
    kwargs = {"circle": {"R": s["R"]}, "ellipse": {"a": s["a"], "b": s["b"]}, "limacon": {"a": s["a"], "b": s["b"]},
              "arc": {"R": s["R"]}, "star": {"k": s["k"], "length": s["length"]}, "corner": {"length": s["length"]},
              "square": {"side": s["side"]}, "segment": {}}
    if name not in kwargs:
        return sg.shape_from_name(name)
    return sg.shape_from_name(name, **kwargs[name])


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# --- pipelines: each returns (tables, checks, extra) -------------------------------


def _profile_point(args):
    from .profiles import C0_EXACT, ProfileParams, profile_mass, profile_residual

    eps, lam = args
    p = ProfileParams(eps, lam)
    m = profile_mass(p)
    res = profile_residual(p)
    return {"eps": eps, "lambda": lam, "delta": p.delta, "kinetic": m.kinetic, "potential": m.potential,
            "tail": m.tail, "residual": res, "kinetic_target": 0.5 * C0_EXACT,
            "kinetic_error": abs(m.kinetic_gap), "residual_over_eps2": res / eps**2}


def run_profile_check(cfg, jobs, run_dir):
    p = cfg["profile"]
    eps = sorted(p["eps"], reverse=True)
    rows = _map(_profile_point, [(e, p["lambda"]) for e in eps], jobs)
    checks = {}
    errs = [r["kinetic_error"] for r in rows]
    if len(errs) > 1:
        _check(checks, "kinetic_error_decreasing", all(b < a for a, b in zip(errs, errs[1:])), errs)
    small = [r for r in rows if r["eps"] <= 1e-3]
    if small:
        worst = max(r["residual_over_eps2"] for r in small)
        _check(checks, "residual_below_eps2", worst <= 1.0, worst, 1.0)
    return {"profile.csv": rows}, checks, {}


def run_convexify(cfg, jobs, run_dir):
    phi = _phi(cfg)
    env = an.convex_envelope(phi, cfg["anisotropy"]["n_dirs"])
    theta = np.linspace(0.0, 2.0 * np.pi, 720, endpoint=False)
    nu = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    a, b = phi(nu), env(nu)
    rows = [{"theta": t, "phi": x, "phi_env": y, "gap": x - y} for t, x, y in zip(theta, a, b)]
    checks = {}
    # the envelope is exact at its hull directions and piecewise between them
    over = float(np.max(env(env.directions) - phi(env.directions)))
    _check(checks, "envelope_below_phi", over <= 1e-9, over, 0.0)
    extra = {"max_gap": float(np.max(a - b)), "convexity_defect": an.convexity_defect(phi)}
    return {"convexify.csv": rows}, checks, extra


def _recovery_point(args):
    from .phase_energy import F_eps
    from .recovery import recover_set

    cfg, eps = args
    r = cfg["recovery"]
    net = _shape(cfg)
    phi = _phi(cfg)
    grid = fl.Grid.square(-r["half_width"], r["half_width"], r["n"], boundary=fl.NEUMANN)
    t0 = time.perf_counter()
    v = recover_set(net, eps, grid, r["lambda"])
    E = F_eps(v, phi, eps, r["r_eps"])
    return {"eps": eps, "h": grid.h[0], "n": r["n"], "anisotropic_mm": E.anisotropic_mm,
            "curvature": E.curvature, "total": E.total, "mm_mass": E.parts["mm_mass"]}, time.perf_counter() - t0


def run_recovery_energy(cfg, jobs, run_dir):
    from .sharp_geometry import sharp_set_energy

    net = _shape(cfg)
    if not net.is_closed:
        raise ValueError(f"recovery-energy needs a closed boundary; {net.name} is open")
    sharp = sharp_set_energy(net, _phi(cfg))
    eps = sorted(cfg["recovery"]["eps"], reverse=True)
    out = _map(_recovery_point, [(cfg, e) for e in eps], jobs)
    rows = []
    for row, secs in out:
        row.update(sharp_total=sharp.total, rel_error=row["total"] / sharp.total - 1.0)
        rows.append(row)
    checks = {}
    tol = cfg["recovery"]["tolerance"]
    _check(checks, "finest_within_tolerance", abs(rows[-1]["rel_error"]) < tol, rows[-1]["rel_error"], tol)
    errs = [abs(r["rel_error"]) for r in rows]
    if len(errs) > 1:
        _check(checks, "error_decreasing", all(b < a for a, b in zip(errs, errs[1:])), errs)
    return {"recovery.csv": rows}, checks, {"sharp": sharp.terms(), "seconds": [s for _, s in out]}


def _point_point(args):
    from .recovery import radial_point_energy

    eps, beta, lam = args
    pe = radial_point_energy(eps, beta, lam)
    return {"eps": eps, "beta": math.sqrt(eps) if beta is None else beta, "total": pe.total,
            "mm_half": pe.mm_half, "willmore_half": pe.willmore_half,
            "total_rel_error": pe.total / (4 * math.pi) - 1.0,
            "mm_rel_error": pe.mm_half / (2 * math.pi) - 1.0,
            "willmore_rel_error": pe.willmore_half / (2 * math.pi) - 1.0}


def run_point_energy(cfg, jobs, run_dir):
    p = cfg["point"]
    eps = sorted(p["eps"], reverse=True)
    rows = _map(_point_point, [(e, p["beta"], p["lambda"]) for e in eps], jobs)
    tol = p["tolerance"]
    last = rows[-1]
    checks = {}
    for k in ("total_rel_error", "mm_rel_error", "willmore_rel_error"):
        _check(checks, k, abs(last[k]) < tol, last[k], tol)
    return {"point_energy.csv": rows}, checks, {}


def run_ms_recovery(cfg, jobs, run_dir):
    from . import sharp_geometry as sg
    from .phase_energy import MS_energy_eps, MsParams
    from .profiles import C0_EXACT
    from .recovery import recover_ms

    m = cfg["ms"]
    hw = m["half_width"]
    if m["state"] == "crack":
        state = sg.crack_state(m["length"], m["amplitude"], m["gamma"], hw)
    elif m["state"] == "disc":
        state = sg.disc_state(m["R"], m["amplitude"], m["gamma"], hw)
    else:
        raise ValueError(f"unknown Mumford-Shah state {m['state']!r}; expected crack or disc")
    params = MsParams(m["eps"], m["gamma"], m["beta"], m["eta"], m["lambda"])
    phi = _phi(cfg)
    grid = fl.Grid.square(-hw, hw, m["n"], boundary=fl.NEUMANN)
    u, v, w = recover_ms(state, params, grid)
    E = MS_energy_eps(u, v, w, phi, params)
    S = sg.sharp_ms_energy(state, phi, zero_junctions="count")
    tol = m["tolerance"]
    rows, checks = [], {}
    for term in ("bulk", "anisotropic_mm", "curvature", "point", "penalty_v", "penalty_w", "total"):
        a = E.total if term == "total" else getattr(E, term)
        b = S.total if term == "total" else getattr(S, term)
        rel = a / b - 1.0 if b else float("nan")
        rows.append({"term": term, "phase_field": a, "sharp": b, "rel_error": rel})
        if b and term in ("bulk", "anisotropic_mm", "point", "total"):
            _check(checks, f"{term}_within_tolerance", abs(rel) < tol, rel, tol)
    extra = {"scaling_flags": params.scaling_flags(), "params": params.as_dict(),
             "mm_mass_raw_over_c0": E.parts["mm_mass_raw"] / C0_EXACT,
             "jump_length": state.network.length(), "mollified_nodes": v.meta.get("mollified_nodes", 0)}
    fl.write_binary(v, run_dir / "v.bin", {"field": "v", **params.as_dict()})
    fl.write_binary(w, run_dir / "w.bin", {"field": "w", **params.as_dict()})
    return {"ms_terms.csv": rows}, checks, extra


def run_varifold_check(cfg, jobs, run_dir):
    from . import varifold as vf

    net = _shape(cfg)
    V = vf.discretize(net, cfg["varifold"]["h"])
    checks, extra = {}, {"mass": V.mass, "atoms": int(len(V.atom_points))}
    if V.has_atoms:
        extra["gauss_bonnet"] = "refused: first variation has atoms"
        extra["monotonicity"] = "refused: first variation has atoms"
        return {}, checks, extra
    deficit = vf.gauss_bonnet_deficit(V)
    extra["gauss_bonnet_deficit"] = deficit
    _check(checks, "gauss_bonnet", deficit >= -1e-4, deficit, -1e-4)
    k = cfg["varifold"]["sweep"]
    lo, hi = V.points.min(axis=0), V.points.max(axis=0)
    diam = float(np.linalg.norm(hi - lo))
    on = V.points[np.linspace(0, len(V.points) - 1, k // 2 + k % 2).astype(int)]
    off = lo + (hi - lo) * np.column_stack([np.linspace(0.1, 0.9, k // 2), np.linspace(0.3, 0.7, k // 2)])
    centres = np.vstack([on, off])
    radii = np.geomspace(0.02 * diam, 2.0 * diam, k)
    rows = [{"x0": c[0], "y0": c[1], "r": r, "gap": vf.monotonicity_gap(V, c, r)} for c in centres for r in radii]
    worst = min(r["gap"] for r in rows)
    extra["monotonicity_min_gap"] = worst
    _check(checks, "monotonicity", worst >= -1e-6, worst, -1e-6)
    return {"monotonicity.csv": rows}, checks, extra


def _nonincreasing(values, slack=1e-8):
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def run_minimize(cfg, jobs, run_dir):
    from . import minimize as mn
    from .recovery import recover_set
    from .sharp_geometry import circle

    m = cfg["minimize"]
    hw = m["half_width"]
    grid = fl.Grid.square(-hw, hw, m["n"], boundary=fl.PERIODIC)
    eps = m["eps"] if m["eps"] is not None else 4.0 * grid.h[0]
    v0 = recover_set(circle(m["R"]), eps, grid).plain()
    if m["perturb"] > 0:
        v0 = fl.ScalarField(grid, v0.values + mn.seeded_perturbation(grid, m["perturb"], cfg["run"]["seed"]))
    res = mn.flow_F_eps(v0, _phi(cfg), eps, m["dt"], m["steps"], m["record_every"], gtol=m["gtol"])
    checks = {}
    totals = [r["total"] for r in res.trace]
    _check(checks, "energy_nonincreasing", _nonincreasing(totals), None, 1e-8)
    if m["gtol"] is not None:
        _check(checks, "stationary", res.converged, res.residual, m["gtol"])
    fl.write_binary(res.field, run_dir / "v_final.bin", {"field": "v", "eps": eps})
    extra = {"eps": eps, "radius_initial": mn.level_set_radius(v0), "radius_final": mn.level_set_radius(res.field),
             "residual": res.residual, "accepted": res.accepted, "rejected": res.rejected}
    return {"trace.csv": res.trace}, checks, extra


def run_ms_minimize(cfg, jobs, run_dir):
    from . import minimize as mn
    from .phase_energy import MsParams

    m = cfg["ms_minimize"]
    hw = m["half_width"]
    grid = fl.Grid.square(-hw, hw, m["n"], boundary=fl.PERIODIC)
    eps = m["eps"] if m["eps"] is not None else 4.0 * grid.h[0]
    u0, v0, w0, g, dist = mn.ms_initial_state(grid, m["data"], eps, m["dip"], m["noise"], cfg["run"]["seed"])
    params = MsParams(eps, m["gamma"])
    sched = mn.Schedule(cycles=m["cycles"], vw_steps=m["vw_steps"], gtol=m["gtol"])
    res = mn.alternate_ms(u0, v0, w0, g, m["mu"], _phi(cfg), params, sched)
    checks = {}
    _check(checks, "objective_nonincreasing", _nonincreasing([r["objective"] for r in res.trace]), None, 1e-8)
    extra = {"eps": eps, "residual": res.residual, "cg_iterations": res.cg_iterations,
             "params": params.as_dict()}
    if np.isfinite(dist).any():
        band = dist < 0.75 * grid.h[0]
        depth = float(np.max(1.0 - res.v.values[band]))
        extra["sup_one_minus_v_on_jump"] = depth
        _check(checks, "tube_formed", depth > 0.9, depth, 0.9)
    for name, f in (("u", res.u), ("v", res.v), ("w", res.w)):
        fl.write_binary(f, run_dir / f"{name}_final.bin", {"field": name, "eps": eps})
    return {"trace.csv": res.trace}, checks, extra


PIPELINES = {
    "profile-check": run_profile_check,
    "convexify": run_convexify,
    "recovery-energy": run_recovery_energy,
    "point-energy": run_point_energy,
    "ms-recovery": run_ms_recovery,
    "varifold-check": run_varifold_check,
    "minimize": run_minimize,
    "ms-minimize": run_ms_minimize,
}


# --- driver ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="phasecurv", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"phasecurv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, flags in FLAGS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI file; flags below override it")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        sp.add_argument("--out", help="run directory (default: $%s/<command>-<hash>)" % OUTPUT_ENV)
        sp.add_argument("--jobs", type=int, help="worker processes for parameter sweeps")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--plot", action="store_true", help="render figures (needs matplotlib)")
        for flag in flags:
            sp.add_argument(flag, dest="opt_" + flag[2:].replace("-", "_"))
    return ap


def resolve_config(args) -> cf.Config:
    cfg = cf.load(args.config) if args.config else cf.Config(cf.defaults())
    for flag, (section, key) in FLAGS[args.command].items():
        raw = getattr(args, "opt_" + flag[2:].replace("-", "_"))
        if raw is not None:
            cf.override(cfg, section, key, raw, flag)
    for item in args.set:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise cf.ConfigError(f"option --set {item!r}: expected SECTION.KEY=VALUE")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        cf.override(cfg, section.strip(), key.strip(), raw, "--set")
    if args.jobs is not None:
        cf.override(cfg, "run", "jobs", args.jobs, "--jobs")
    if args.seed is not None:
        cf.override(cfg, "run", "seed", args.seed, "--seed")
    if args.plot:
        cfg.values["run"]["plot"] = True
    if cfg["run"]["jobs"] < 1:
        raise cf.ConfigError("field run.jobs: must be at least 1")
    return cfg


def run_directory(command: str, cfg: cf.Config, out: str | None) -> Path:
    if out:
        return Path(out)
    key = json.dumps({s: cfg[s] for s in SECTIONS[command]}, sort_keys=True, default=str)
    digest = hashlib.sha256(f"{command}:{key}".encode()).hexdigest()[:10]
    return Path(os.environ.get(OUTPUT_ENV, "runs")) / f"{command}-{digest}"


def _versions():
    import scipy

    return {"phasecurv": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except cf.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    run_dir = run_directory(args.command, cfg, args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"command": args.command, "argv": list(sys.argv[1:] if argv is None else argv),
                "config": cfg.as_dict(), "config_source": cfg.source, "versions": _versions(), "timings": {}}
    from .minimize import DivergenceError, SolverError

    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            tables, checks, extra = PIPELINES[args.command](cfg, cfg["run"]["jobs"], run_dir)
        manifest["warnings"] = sorted({str(w.message) for w in caught})
        manifest["timings"]["pipeline_s"] = time.perf_counter() - t0
        for fname, rows in tables.items():
            write_table(run_dir / fname, rows)
        manifest.update(outputs=sorted(tables), checks=checks, results=extra)
        failed = [k for k, c in checks.items() if not c["pass"]]
        if failed:
            code = EXIT_CHECK
            print(f"checks missed: {', '.join(failed)}", file=sys.stderr)
        for k, c in checks.items():
            print(f"{'PASS' if c['pass'] else 'FAIL'} {k}: {c['value']}")
        if cfg["run"]["plot"]:
            t1 = time.perf_counter()
            try:
                from . import plotting
            except ImportError as e:
                print(f"plotting skipped: {e} (install the [plot] extra)", file=sys.stderr)
            else:
                manifest["figures"] = plotting.render(args.command, tables, run_dir)
            manifest["timings"]["plot_s"] = time.perf_counter() - t1
    except DivergenceError as e:
        print(f"diverged: {e}", file=sys.stderr)
        manifest["error"] = str(e)
        code = EXIT_DIVERGED
    except SolverError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        manifest["error"] = str(e)
        code = EXIT_CHECK
    except (ValueError, cf.ConfigError) as e:
        print(f"invalid parameters: {e}", file=sys.stderr)
        manifest["error"] = str(e)
        code = EXIT_CONFIG
    manifest["exit_code"] = code
    manifest["timings"]["total_s"] = time.perf_counter() - t0
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default))
    print(f"run directory: {run_dir}")
    return code


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


if __name__ == "__main__":
    sys.exit(main())
