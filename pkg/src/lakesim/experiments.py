"""Experiment orchestration: dispatch a RunConfig, write reports and fields.

Every run produces a manifest.json (config echo, package version, timings)
plus experiment-specific artifacts.  Reports never contain wall-clock data,
so a rerun with the same config and seed is byte-identical; timings live
only in the manifest.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, initial_field, parse_config
from .elliptic import (
    green_disk,
    regularity_report,
    solve_green_remainder,
    solve_stream,
)
from .fieldio import save_field
from .geometry import ScalarField, build_domain, build_grid, weighted_norm
from .sweep import viscosity_sweep
from .transport import conservation_report, run_inviscid
from .viscous import ViscousConfig, run_viscous

_REPORT = "report.json"


@dataclass
class ExperimentResult:
    out_dir: Path
    report: dict
    ok: bool
    failure: str | None = None


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path, headers, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _build(config: RunConfig):
    grid_kwargs = {"kappa": config.numerics.kappa}
    domain = build_domain(config.domain)
    grid = build_grid(domain, config.grid_resolution(), **grid_kwargs)
    return domain, grid


def _save_fields(out, names_fields, formats):
    if "bin" not in formats:
        return []
    paths = []
    for name, field in names_fields:
        p = out / f"{name}.field"
        save_field(p, field)
        paths.append(p.name)
    return paths


# ---------------------------------------------------------------------------
# individual experiments
# ---------------------------------------------------------------------------

def _exp_solve_elliptic(config, grid, out):
    f = initial_field(grid, config.physics.initial_data)
    f.name = "source"
    sol = solve_stream(grid, f, config.numerics.tol_solve)
    report = {
        "experiment": "solve-elliptic",
        "residual": sol.residual,
        "energy": sol.energy,
        "sup_u": weighted_norm(sol.u, math.inf, "none"),
        "div_b_residual": sol.u.div_residual,
        "psi_min": float(sol.psi.values[grid.interior].min()),
        "psi_max": float(sol.psi.values[grid.interior].max()),
        "source_ops": ["solve_stream", "velocity_from_stream", "weighted_norm"],
    }
    fields = _save_fields(out, [("psi", sol.psi), ("u", sol.u), ("source", f)],
                          config.output.formats)
    report["fields"] = fields
    return report


def _exp_green_check(config, grid, out):
    rng = np.random.default_rng(config.seed)
    npairs = 10000
    r = np.sqrt(rng.uniform(0.0, 1.0, npairs))
    t = rng.uniform(0.0, 2.0 * math.pi, npairs)
    x = r * np.exp(1j * t)
    r2 = np.sqrt(rng.uniform(0.0, 1.0, npairs))
    t2 = rng.uniform(0.0, 2.0 * math.pi, npairs)
    y = r2 * np.exp(1j * t2)
    ystar = y / np.abs(y) ** 2
    lhs = np.abs(x - ystar) ** 2 * np.abs(y) ** 2
    rhs = np.abs(x - y) ** 2 + (1.0 - np.abs(x) ** 2) * (1.0 - np.abs(y) ** 2)
    identity_dev = float(np.abs(lhs - rhs).max())
    symmetry_dev = float(np.abs(green_disk(x, y) - green_disk(y, x)).max())
    boundary_val = float(
        np.abs(green_disk(0.999999 * np.exp(1j * t[:100]), 0.3 + 0j)).max()
    )
    report = {
        "experiment": "green-check",
        "pairs": npairs,
        "identity_max_deviation": identity_dev,
        "symmetry_max_deviation": symmetry_dev,
        "near_boundary_max": boundary_val,
        "source_ops": ["green_disk"],
    }
    return report


def _exp_run_inviscid(config, grid, out):
    omega0 = initial_field(grid, config.physics.initial_data)
    traj = run_inviscid(
        omega0,
        config.physics.T,
        window_init=config.numerics.window_init,
        tol_picard=config.numerics.tol_picard,
        solver_tol=config.numerics.tol_solve,
        snapshots=config.numerics.snapshot_cadence,
    )
    cons = conservation_report(traj)
    report = {
        "experiment": "run-inviscid",
        "times": [float(t) for t in traj.times],
        "support_distance": [s.support_distance for s in traj.states],
        "lp_ledgers": [
            {str(p): v for p, v in s.lp_ledger.items()} for s in traj.states
        ],
        "windows": [
            {
                "window": list(w.window),
                "iterates": w.iterates,
                "contraction_ratios": w.contraction_ratios,
                "converged": w.converged,
            }
            for w in traj.windows
        ],
        "grad_sup_history": traj.grad_sup_history,
        "grad_growth_alert": traj.grad_growth_alert(),
        "conservation": cons.to_dict(),
        "source_ops": ["run_inviscid", "picard_window", "transport_vorticity",
                       "conservation_report"],
    }
    if "csv" in config.output.formats:
        rows = []
        for t, s in zip(traj.times, traj.states):
            rows.append((t, s.support_distance, s.lp_ledger[1], s.lp_ledger[2],
                         s.lp_ledger[4], s.lp_ledger[math.inf]))
        _write_csv(out / "conservation.csv",
                   ["t", "support_distance", "lp1", "lp2", "lp4", "lp_inf"], rows)
    names = []
    for k, (t, s) in enumerate(zip(traj.times, traj.states)):
        names.append((f"omega_{k:04d}", s.omega))
    names += [(f"u_{k:04d}", v) for k, v in enumerate(traj.velocities)]
    report["fields"] = _save_fields(out, names, config.output.formats)
    return report


def _exp_run_viscous(config, grid, out):
    omega0 = initial_field(grid, config.physics.initial_data)
    sol = solve_stream(grid, ScalarField(grid, grid.b_node * omega0.values),
                       config.numerics.tol_solve)
    dt = config.numerics.dt
    if dt is None:
        sup0 = float(np.abs(sol.u.magnitude()).max())
        dt = 0.4 * grid.h / max(sup0, 1e-12)
        dt = config.physics.T / max(1, int(math.ceil(config.physics.T / dt)))
    vc = ViscousConfig(mu=config.physics.mu, dt=dt, eta=config.physics.eta,
                       beta=config.physics.beta, theta=config.numerics.theta)
    traj = run_viscous(sol.u, config.physics.T, vc)
    report = {
        "experiment": "run-viscous",
        "dt": dt,
        "mu": config.physics.mu,
        "eta_mu": vc.eta_mu,
        "step_times": [float(t) for t in traj.step_times],
        "kinetic_energy": [float(e) for e in traj.energies],
        "dissipation_integral": [float(d) for d in traj.dissipation],
        "source_ops": ["run_viscous", "viscous_step", "project_divfree_b"],
    }
    if "csv" in config.output.formats:
        _write_csv(out / "energy.csv", ["t", "kinetic_energy", "dissipation_integral"],
                   list(zip(traj.step_times, traj.energies, traj.dissipation)))
    names = [(f"u_{k:04d}", f) for k, f in enumerate(traj.fields)]
    report["fields"] = _save_fields(out, names, config.output.formats)
    return report


def _exp_sweep(config, grid, out):
    omega0 = initial_field(grid, config.physics.initial_data)
    rep = viscosity_sweep(
        omega0,
        config.physics.mu_list,
        beta=config.physics.beta,
        eta=config.physics.eta,
        T=config.physics.T,
        config={
            "dt": config.numerics.dt,
            "snapshots": config.numerics.snapshot_cadence,
            "window_init": config.numerics.window_init,
            "tol_picard": config.numerics.tol_picard,
            "solver_tol": config.numerics.tol_solve,
            "theta": config.numerics.theta,
            "tol_audit": config.numerics.tol_audit,
        },
    )
    report = {"experiment": "sweep", **rep.to_dict()}
    if "csv" in config.output.formats:
        _write_csv(out / "sweep.csv", ["mu", "sup_error", "fitted_slope", "fit_points"],
                   list(rep.csv_rows()))
        for k, mu in enumerate(rep.mu_list):
            _write_csv(out / f"audit_{k:02d}.csv",
                       ["t", "lhs", "rhs", "envelope", "w_norm"],
                       list(rep.audits[mu].rows()))
    fields = []
    if "bin" in config.output.formats:
        for k, mu in enumerate(rep.mu_list):
            fields += _save_fields(out, [(f"u_final_{k:02d}", rep.final_fields[mu])],
                                   config.output.formats)
    report["fields"] = fields
    return report


def _exp_regularity_audit(config, grid, out):
    sources = {
        "uniform": lambda z: np.ones(z.shape),
        "linear": lambda z: z.real,
        "bump": lambda z: np.where(
            (np.abs(z) / 0.7) ** 2 < 1,
            np.exp(1.0 - 1.0 / np.maximum(1e-12, 1.0 - (np.abs(z) / 0.7) ** 2)),
            0.0,
        ),
        "stripes": lambda z: np.sin(3.0 * z.real) * np.cos(2.0 * z.imag),
        "swirl": lambda z: np.sin(2.0 * z.real + 3.0 * z.imag),
    }
    battery = {}
    for name, fn in sources.items():
        f = ScalarField.from_function(grid, fn, name=name)
        sup = float(np.abs(f.values[grid.interior]).max())
        if sup > 0:
            f = ScalarField(grid, f.values / sup, name=name)
        sol = solve_stream(grid, f, config.numerics.tol_solve)
        rep = regularity_report(grid, sol, samples=10000, K_margin=0.2,
                                seed=config.seed, include_phi_diag=True)
        battery[name] = {**rep.to_dict(), "energy": sol.energy}

    osc = {}
    for k in (4, 8, 16, 32):
        def fk(z, k=k):
            s2 = (np.abs(z) / 0.75) ** 2
            base = np.where(s2 < 1, np.exp(1.0 - 1.0 / np.maximum(1e-12, 1.0 - s2)), 0.0)
            return base * np.sin(k * z.real)

        f = ScalarField.from_function(grid, fk, name=f"osc_{k}")
        sol = solve_stream(grid, f, config.numerics.tol_solve)
        rep = regularity_report(grid, sol, samples=10000, K_margin=0.2,
                                seed=config.seed)
        gsup = float(
            np.abs(np.diff(f.values, axis=0)).max() / grid.h
        )
        osc[str(k)] = {
            "c1_interior": rep.c1_interior,
            "grad_f_sup": gsup,
            "ratio_to_log": rep.c1_interior / math.log(2.0 + gsup),
        }
    remainder = solve_green_remainder(grid, 0j, delta=0.4,
                                      tol_solve=config.numerics.tol_solve)
    report = {
        "experiment": "regularity-audit",
        "battery": battery,
        "oscillatory": osc,
        "green_remainder_grad_norm": remainder.grad_norm,
        "source_ops": ["solve_stream", "regularity_report", "solve_green_remainder"],
    }
    return report


_DISPATCH = {
    "solve-elliptic": _exp_solve_elliptic,
    "green-check": _exp_green_check,
    "run-inviscid": _exp_run_inviscid,
    "run-viscous": _exp_run_viscous,
    "sweep": _exp_sweep,
    "regularity-audit": _exp_regularity_audit,
}


def run(config, out_dir=None, seed=None) -> ExperimentResult:
    """Execute one experiment; writes manifest, report, and artifacts."""
    config = parse_config(config)
    if seed is not None:
        config = config.model_copy(update={"seed": seed})
    out = Path(out_dir if out_dir is not None else config.output.directory)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    failure = None
    report = {}
    try:
        domain, grid = _build(config)
        report = _DISPATCH[config.experiment](config, grid, out)
        ok = True
    except Exception as exc:  # any failure becomes a machine-readable record
        ok = False
        failure = f"{type(exc).__name__}: {exc}"
    elapsed = time.perf_counter() - t0

    manifest = {
        "config": json.loads(config.model_dump_json()),
        "version": __version__,
        "timings": {"total_seconds": elapsed},
        "status": "ok" if ok else "failed",
    }
    _write_json(out / "manifest.json", manifest)
    if ok:
        _write_json(out / _REPORT, report)
    else:
        _write_json(out / "failure.json",
                    {"status": "failed", "error": failure,
                     "experiment": config.experiment})
    return ExperimentResult(out_dir=out, report=report, ok=ok, failure=failure)
