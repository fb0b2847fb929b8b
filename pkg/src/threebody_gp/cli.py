"""Configuration-driven experiment runner.

    tbgp <subcommand> --config run.toml [--seed S] [--out DIR]

Subcommands ``scatter``, ``gpe``, ``boxes``, ``fewbody`` and ``thetas`` run one
experiment each and write CSV tables plus ``manifest.json`` into the output
directory.  ``report`` aggregates finished run directories into summary
tables and gnuplot ``.dat``/``.gp`` files.

The config is TOML.  Each subcommand reads its own table (``[scatter]``,
``[gpe]``, ...); a top-level ``seed`` is allowed.  Unknown tables or keys are
rejected, every resolved parameter is echoed into the manifest, and all
physical quantities use units with hbar = 2m = 1.  On failure an
``error.json`` record is written and the process exits with a nonzero status.
"""

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, boxes, fewbody, gpe, prefactors
from .errors import ConfigError, MissingManifest, ModuleError, ThreeBodyGPError
from .scattering import (field_norms, hypervolume, make_grid, potential_from_config,
                         solve_scattering, truncate)
from .scattering.coupling import effective_coupling_error, periodic_test_profile
from .scattering.norms import NORM_COLUMNS

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SUBCOMMANDS = ("scatter", "gpe", "boxes", "fewbody", "thetas", "report")
SEED_MAX = 2 ** 64 - 1

# Per-subcommand schema: key -> default.  ``None`` marks an optional key.
SCHEMAS = {
    "scatter": {
        "potential": "step", "strength": 10.0, "radius": 1.0,
        "table_radii": None, "table_values": None,
        "core_nodes": 8000, "r_max_factor": 10.0,
        "lams": [], "Ns": [],
        "coupling_Ns": [], "coupling_lam": 0.5, "coupling_directions": 512,
    },
    "gpe": {
        "dim": 1, "extent": 2.0 * np.pi, "points": 256,
        "coupling": 1.0, "gauge": "none", "dt": 1e-3, "t_end": 1.0, "checkpoint_stride": 100,
        "initial": "gaussian", "sigma": 0.6, "center": None, "mass": 1.0,
        "rho": 1.0, "k": None, "path": None, "snapshots": True,
    },
    "boxes": {
        "alpha": 2.0, "beta": 3.0, "calibration_configs": 20000, "search_configs": 100000,
        "n_seeds": 4, "batch": 2000, "safety": 2.0, "recombination_configs": 1000,
    },
    "fewbody": {
        "sites": 12, "n_list": [3, 4, 5, 6], "g3": 2.0, "t_end": 1.0, "checkpoints": 21,
        "tol": 1e-12, "nls_dt": 1e-3, "orbital": "default", "amplitude": 0.3,
        "sigma": 1.0, "center": None, "floor": 0.02, "gamma_snapshots": False,
    },
    "thetas": {"n_list": [50, 100, 200]},
    "report": {"runs": []},
}
TOP_LEVEL = {"seed"}


# -- config ---------------------------------------------------------------

def load_config(path):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from None
    return data


def resolve_params(subcommand, data):
    """Validate ``data`` and return ``(params, seed)`` for ``subcommand`` with
    defaults filled in."""
    for key, value in data.items():
        if isinstance(value, dict):
            if key not in SCHEMAS:
                raise ConfigError(f"unknown config table [{key}]")
            unknown = sorted(set(value) - set(SCHEMAS[key]))
            if unknown:
                raise ConfigError(f"unknown keys in [{key}]: {', '.join(unknown)}")
        elif key not in TOP_LEVEL:
            raise ConfigError(f"unknown top-level key {key!r}")
    params = dict(SCHEMAS[subcommand])
    params.update(data.get(subcommand, {}))
    seed = data.get("seed", 0)
    return params, seed


def check_seed(seed):
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= SEED_MAX:
        raise ConfigError(f"seed must be an integer in [0, 2^64 - 1], got {seed!r}")
    return seed


def config_hash(subcommand, params, seed):
    blob = json.dumps({"subcommand": subcommand, "params": params, "seed": seed},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def child_seeds(seed, count):
    """``count`` independent integer seeds derived from one 64-bit seed."""
    state = np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)
    return [int(s) for s in state]


# -- output helpers -------------------------------------------------------

def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _guard(module, operation, fn, *args, **kw):
    """Call ``fn`` and wrap any numerical failure in ``ModuleError``."""
    try:
        return fn(*args, **kw)
    except (ConfigError, ModuleError):
        raise
    except (ThreeBodyGPError, ValueError, ArithmeticError) as exc:
        raise ModuleError(module, operation, exc) from exc


# -- experiments ----------------------------------------------------------

def run_scatter(p, seed, out):
    v = _guard("scattering", "potential_from_config", potential_from_config, p)
    grid = _guard("scattering", "make_grid", make_grid, v.support_radius or 1.0,
                  int(p["core_nodes"]), float(p["r_max_factor"]))
    sol = _guard("scattering", "solve_scattering", solve_scattering, v, grid)
    b_int, b_tail, A, disc = _guard("scattering", "hypervolume", hypervolume, sol)
    files = ["hypervolume.csv"]
    write_csv(out / "hypervolume.csv", ["potential", "b_integral", "b_tail", "tail_coeff", "rel_discrepancy"],
              [[p["potential"], b_int, b_tail, A, disc]])
    results = {"b_integral": b_int, "b_tail": b_tail, "tail_coeff": A, "rel_discrepancy": disc}

    if p["lams"] and p["Ns"]:
        rows = []
        for lam in p["lams"]:
            for n in p["Ns"]:
                ts = _guard("scattering", "truncate", truncate, sol, float(lam), float(n))
                rows.append(_guard("scattering", "field_norms", field_norms, ts).as_row())
        write_csv(out / "norms.csv", NORM_COLUMNS, rows)
        files.append("norms.csv")

    if p["coupling_Ns"]:
        phi = periodic_test_profile()
        rows = []
        for n in p["coupling_Ns"]:
            ts = _guard("scattering", "truncate", truncate, sol, float(p["coupling_lam"]), float(n))
            res = _guard("scattering", "effective_coupling_error", effective_coupling_error, ts, phi,
                         directions=int(p["coupling_directions"]), seed=seed)
            rows.append([float(n), res.deviation, res.b])
        write_csv(out / "coupling.csv", ["N", "deviation", "b"], rows)
        files.append("coupling.csv")
        if len(rows) >= 2:
            results["coupling_exponent"] = fit_power([r[0] for r in rows], [r[1] for r in rows])[0]
    return files, results


def run_gpe(p, seed, out):
    grid = _guard("gpe", "GridSpec", gpe.GridSpec, int(p["dim"]), float(p["extent"]), int(p["points"]))
    cfg = {k: p[k] for k in ("initial", "sigma", "center", "mass", "rho", "k", "path") if p[k] is not None}
    field = _guard("gpe", "initial_field", gpe.initial_field, grid, cfg)
    params = _guard("gpe", "GpeParams", gpe.GpeParams, float(p["coupling"]), p["gauge"], float(p["dt"]),
                    float(p["t_end"]), int(p["checkpoint_stride"]))
    traj = _guard("gpe", "evolve", gpe.evolve, field, params, neighbours=False)
    gpe.write_trajectory_csv(out / "trajectory.csv", traj)
    files = ["trajectory.csv"]
    if p["snapshots"]:
        for i, snap in enumerate(traj.snapshots):
            name = f"snapshot_{i:04d}.bin"
            gpe.write_snapshot(out / name, snap)
            files.append(name)
    rows = gpe.trajectory_rows(traj)
    mass = np.array([r[1] for r in rows])
    total = np.array([r[4] for r in rows])
    results = {"mass_drift": float(np.max(np.abs(mass - mass[0]))),
               "energy_drift": float(np.max(np.abs(total - total[0]))),
               "steps": params.steps}
    return files, results


def run_boxes(p, seed, out):
    alpha, beta = float(p["alpha"]), float(p["beta"])
    seeds = child_seeds(seed, 2 * int(p["n_seeds"]) + 1)
    cal_seeds, search_seeds, recomb_seed = seeds[:int(p["n_seeds"])], seeds[int(p["n_seeds"]):-1], seeds[-1]

    rng = np.random.default_rng(recomb_seed)
    worst_recomb = 0
    for _ in range(int(p["recombination_configs"])):
        m = int(rng.integers(0, 101))
        cfg = boxes.Configuration(rng.uniform(-5.0, 5.0, (m, 3)))
        worst_recomb = max(worst_recomb, abs(boxes.recombination_identity(cfg, float(rng.uniform(0.2, 3.0)))))

    consts = _guard("boxes", "calibrate_constants", boxes.calibrate_constants,
                    int(p["calibration_configs"]), ((alpha, beta),), tuple(cal_seeds), float(p["safety"]))
    pair = consts["pairs"][0]
    res = _guard("boxes", "adversarial_search", boxes.adversarial_search, int(p["search_configs"]), alpha, beta,
                 pair["C_beta"], tuple(search_seeds), int(p["batch"]),
                 c_alpha_beta=pair["C_alpha_beta"], c_intermediate=pair["C_intermediate"])
    boxes.write_constants(out / "constants.json", consts)
    header = ["alpha", "beta", "C_beta", "C_alpha_beta", "C_intermediate", "configs", "max_ratio",
              "max_per_box", "nontrivial", "violations", "per_box_violations", "recombination_residual"]
    write_csv(out / "summary.csv", header,
              [[alpha, beta, pair["C_beta"], pair["C_alpha_beta"], pair["C_intermediate"], res.configs,
                res.max_ratio, res.max_per_box, res.nontrivial, res.violations, res.per_box_violations,
                worst_recomb]])
    results = {"violations": res.violations, "per_box_violations": res.per_box_violations,
               "recombination_residual": worst_recomb, "calibration_seeds": cal_seeds,
               "search_seeds": search_seeds}
    return ["constants.json", "summary.csv"], results


def fewbody_orbital(p):
    sites = int(p["sites"])
    if p["orbital"] == "default":
        return fewbody.default_orbital(sites, float(p["amplitude"]))
    if p["orbital"] == "gaussian":
        x = np.arange(sites)
        c = 0.5 * sites if p["center"] is None else float(p["center"])
        d = (x - c + 0.5 * sites) % sites - 0.5 * sites
        phi = np.exp(-d ** 2 / (2.0 * float(p["sigma"]) ** 2)) + float(p["floor"])
        return phi / np.linalg.norm(phi)
    raise ConfigError(f"unknown orbital {p['orbital']!r}")


def run_fewbody(p, seed, out):
    phi0 = fewbody_orbital(p)
    comp = _guard("fewbody", "mean_field_comparison", fewbody.mean_field_comparison, int(p["sites"]),
                  [int(n) for n in p["n_list"]], float(p["g3"]), phi0, float(p["t_end"]),
                  int(p["checkpoints"]), float(p["tol"]), float(p["nls_dt"]),
                  keep_gamma=bool(p["gamma_snapshots"]))
    files = []
    for rec in comp.records:
        name = f"run_N{rec.n}.csv"
        fewbody.write_run_csv(out / name, rec)
        files.append(name)
        for i, g in enumerate(rec.gammas):
            gname = f"gamma_N{rec.n}_{i:04d}.bin"
            fewbody.write_gamma(out / gname, g, rec.n, rec.times[i])
            files.append(gname)
    fewbody.write_summary_csv(out / "summary.csv", comp)
    files.append("summary.csv")
    d = [r.max_depletion for r in comp.records]
    results = {"max_depletion": d, "slope": comp.slope(),
               "nonincreasing": bool(all(b <= a for a, b in zip(d, d[1:])))}
    return files, results


def run_thetas(p, seed, out):
    report = _guard("prefactors", "theta_bound_report", prefactors.theta_bound_report,
                    [int(n) for n in p["n_list"]])
    prefactors.write_bound_csv(out / "theta_bounds.csv", report)
    return ["theta_bounds.csv"], {"max_C": max(r.c for r in report)}


RUNNERS = {"scatter": run_scatter, "gpe": run_gpe, "boxes": run_boxes,
           "fewbody": run_fewbody, "thetas": run_thetas}


def run(subcommand, params, seed, out):
    """Execute one experiment and write its manifest; returns the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files, results = RUNNERS[subcommand](params, seed, out)
    manifest = {
        "artifact": "threebody_gp",
        "version": __version__,
        "subcommand": subcommand,
        "config_hash": config_hash(subcommand, params, seed),
        "seed": seed,
        "params": params,
        "wall_clock_seconds": time.perf_counter() - start,
        "files": files,
        "results": results,
    }
    write_json(out / "manifest.json", manifest)
    return manifest


# -- report ---------------------------------------------------------------

def fit_power(x, y):
    """Least-squares exponent and R^2 of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    # a flat series (relative spread at rounding level) is fitted exactly
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 1e-20 * ly.size else 1.0
    return float(slope), r2


def _load_manifests(run_dirs):
    if not run_dirs:
        raise MissingManifest("report needs at least one run directory")
    loaded = []
    for d in run_dirs:
        path = Path(d) / "manifest.json"
        if not path.is_file():
            raise MissingManifest(f"{d} has no manifest.json")
        with open(path) as fh:
            loaded.append((Path(d), json.load(fh)))
    return loaded


def _scaling_tables(run_dir):
    """Norm table with exponents fitted against N (fixed lam) and lam (fixed N)."""
    header, rows = read_csv(run_dir / "norms.csv")
    data = np.array([[float(v) for v in r] for r in rows])
    lam, n = data[:, 0], data[:, 1]
    table, fits = [], []
    for j, name in enumerate(header[2:], start=2):
        for var, fixed_col, vary in (("N", lam, n), ("lam", n, lam)):
            for fixed in sorted(set(fixed_col)):
                sel = fixed_col == fixed
                if np.count_nonzero(sel) < 2 or np.any(data[sel, j] <= 0):
                    continue
                e, r2 = fit_power(vary[sel], data[sel, j])
                fits.append([name, var, fixed, e, r2, int(np.count_nonzero(sel))])
        for row in data:
            sel = lam == row[0]
            e = fit_power(n[sel], data[sel, j])[0] if np.count_nonzero(sel) >= 2 and np.all(data[sel, j] > 0) \
                else float("nan")
            table.append([row[0], row[1], name, row[j], e])
    return table, fits


def _write_dat(path, header, rows):
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def report(run_dirs, out):
    """Aggregate finished runs into summary tables and gnuplot data."""
    loaded = _load_manifests(run_dirs)
    norm_rows, fit_rows, dep_rows, box_rows, theta_rows, gpe_rows = [], [], [], [], [], []
    for d, man in loaded:
        tag = d.name
        kind = man.get("subcommand")
        if kind == "scatter" and (d / "norms.csv").is_file():
            table, fits = _scaling_tables(d)
            norm_rows += [[tag] + r for r in table]
            fit_rows += [[tag] + r for r in fits]
        elif kind == "fewbody":
            _, rows = read_csv(d / "summary.csv")
            slope = man["results"]["slope"]
            dep_rows += [[tag, int(r[0]), float(r[1]), slope] for r in rows]
        elif kind == "boxes":
            header, rows = read_csv(d / "summary.csv")
            box_rows += [[tag] + r for r in rows]
        elif kind == "thetas":
            header, rows = read_csv(d / "theta_bounds.csv")
            theta_rows += [[tag] + r for r in rows]
        elif kind == "gpe":
            r = man["results"]
            gpe_rows.append([tag, r["mass_drift"], r["energy_drift"], r["steps"]])

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = []

    def emit(name, header, rows):
        if rows:
            write_csv(out / f"{name}.csv", header, rows)
            files.append(f"{name}.csv")

    emit("norm_table", ["run", "lam", "N", "norm", "value", "exponent_vs_N"], norm_rows)
    emit("scaling_fits", ["run", "norm", "variable", "fixed_value", "exponent", "r2", "points"], fit_rows)
    emit("depletion", ["run", "N", "max_depletion", "fitted_slope"], dep_rows)
    emit("constants", ["run"] + (["alpha", "beta", "C_beta", "C_alpha_beta", "C_intermediate", "configs",
                                  "max_ratio", "max_per_box", "nontrivial", "violations",
                                  "per_box_violations", "recombination_residual"]), box_rows)
    emit("theta_bounds", ["run"] + list(prefactors.BOUND_COLUMNS), theta_rows)
    emit("gpe_drifts", ["run", "mass_drift", "energy_drift", "steps"], gpe_rows)

    if dep_rows:
        _write_dat(out / "depletion.dat", ["N", "max_depletion"], [r[1:3] for r in dep_rows])
        (out / "depletion.gp").write_text(
            "set logscale xy\nset xlabel 'N'\nset ylabel 'max depletion'\n"
            "plot 'depletion.dat' using 1:2 with linespoints title 'exact dynamics'\n")
        files += ["depletion.dat", "depletion.gp"]
    if norm_rows:
        names = sorted({r[3] for r in norm_rows})
        blocks = []
        for name in names:
            blocks.append((name, [[r[2], r[4]] for r in norm_rows if r[3] == name]))
        with open(out / "norms.dat", "w") as fh:
            for name, rows in blocks:
                fh.write(f"# {name}: N value\n")
                for row in rows:
                    fh.write(" ".join(_fmt(v) for v in row) + "\n")
                fh.write("\n\n")
        plots = ", ".join(f"'norms.dat' index {i} using 1:2 with linespoints title '{name}'"
                          for i, (name, _) in enumerate(blocks))
        (out / "norms.gp").write_text("set logscale xy\nset xlabel 'N'\nset ylabel 'norm'\nplot " + plots + "\n")
        files += ["norms.dat", "norms.gp"]

    summary = {"artifact": "threebody_gp", "version": __version__, "runs": [str(d) for d, _ in loaded],
               "files": files}
    write_json(out / "report.json", summary)
    return summary


# -- entry point ----------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="tbgp", description="Three-body GP numerical experiments.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("runs", nargs="*", help="run directories (report only)")
    ap.add_argument("--config", help="TOML config file")
    ap.add_argument("--seed", type=int, help="64-bit seed; overrides the config")
    ap.add_argument("--out", help="output directory (default tbgp-out/<subcommand>)")
    return ap


def _error_record(exc):
    rec = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ModuleError):
        rec.update(module=exc.module, operation=exc.operation, cause=type(exc.cause).__name__)
    return rec


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out or f"tbgp-out/{args.subcommand}")
    try:
        data = {}
        if args.config:
            data = load_config(args.config)
        elif args.subcommand != "report":
            raise ConfigError("--config is required")
        params, seed = resolve_params(args.subcommand, data)
        seed = check_seed(seed if args.seed is None else args.seed)
        if args.subcommand == "report":
            runs = list(args.runs) or list(params["runs"])
            report(runs, out)
        else:
            run(args.subcommand, params, seed, out)
        (out / "error.json").unlink(missing_ok=True)
    except ThreeBodyGPError as exc:
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "error.json", _error_record(exc))
        print(f"tbgp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, MissingManifest)) else 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
