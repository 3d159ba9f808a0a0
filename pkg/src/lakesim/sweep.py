"""Vanishing-viscosity rate study.

Runs the inviscid reference once, then one viscous run per viscosity with the
drag law eta_mu = eta * mu**(-beta) and identical initial velocity, measures
sup_t ||u_mu(t) - u(t)||_{L2_b} over the snapshot times, and fits the log-log
slope of the sup error against mu over the small-viscosity tail.  The
expected decay is mu**((1-beta)/2) as an upper bound, so acceptance checks a
slope floor, never equality.  Each leg carries its per-step energy audit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import FitUnderdetermined, GridMismatch, NonpositiveError
from .geometry import ScalarField, VectorField, weighted_norm
from .transport import run_inviscid
from .viscous import ViscousConfig, energy_audit, run_viscous

_DEF = {
    "dt": None,              # advective default from u0 when None
    "snapshots": 50,
    "window_init": 0.25,
    "tol_picard": 1e-5,
    "solver_tol": 1e-8,
    "theta": 1.0,
    "tol_audit": 0.1,
}


def compare_fields(u_a: VectorField, u_b: VectorField) -> float:
    """||u_a - u_b||_{L2_b} on a shared grid."""
    if u_a.grid is not u_b.grid and u_a.grid.signature() != u_b.grid.signature():
        raise GridMismatch("fields live on different grids")
    diff = VectorField(u_a.grid, u_a.values - u_b.values, name="diff")
    return weighted_norm(diff, 2, "b")


def fit_rate(errors, mu_list):
    """Ordinary least squares of ln(error) on ln(mu).

    Zero errors mean exact agreement; they cannot enter the log fit and are
    excluded with a note.  Returns (slope, intercept, rms_residual, notes).
    """
    mu = np.asarray(mu_list, dtype=float)
    err = np.asarray(errors, dtype=float)
    if np.any(err < 0):
        raise NonpositiveError("negative sup error")
    notes = []
    keep = err > 0
    if not keep.all():
        excluded = [float(m) for m in mu[~keep]]
        notes.append(f"excluded exact-agreement points at mu={excluded}")
    mu, err = mu[keep], err[keep]
    if mu.size < 3:
        raise FitUnderdetermined(f"{mu.size} usable points, need >= 3")
    lx, ly = np.log(mu), np.log(err)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return float(coef[0]), float(coef[1]), resid, notes


@dataclass
class SweepReport:
    """Per-viscosity error series, fitted rate, and energy-audit ledger."""

    mu_list: list
    beta: float
    eta: float
    times: list
    errors: dict                  # mu -> error time series (list)
    sup_errors: dict              # mu -> sup over snapshot times
    fitted_slope: float | None
    intercept: float | None
    fit_residual: float | None
    fit_points: int
    fit_notes: list
    envelope_pass: dict           # mu -> bool from the energy audit
    audit_c_emp: dict             # mu -> recorded constant
    provenance: dict
    audits: dict = None           # mu -> EnergyAudit (not serialized)
    final_fields: dict = None     # mu -> VectorField at T (not serialized)

    def __post_init__(self):
        mus = list(self.mu_list)
        if any(b >= a for a, b in zip(mus, mus[1:])):
            raise ValueError("mu_list must be strictly decreasing")
        for series in self.errors.values():
            if any(e < 0 for e in series):
                raise ValueError("negative error in sweep series")

    def to_dict(self):
        return {
            "mu_list": [float(m) for m in self.mu_list],
            "beta": self.beta,
            "eta": self.eta,
            "times": [float(t) for t in self.times],
            "errors": {f"{m:.6g}": [float(e) for e in s] for m, s in self.errors.items()},
            "sup_errors": {f"{m:.6g}": float(v) for m, v in self.sup_errors.items()},
            "fitted_slope": self.fitted_slope,
            "intercept": self.intercept,
            "fit_residual": self.fit_residual,
            "fit_points": self.fit_points,
            "fit_notes": self.fit_notes,
            "envelope_pass": {f"{m:.6g}": bool(v) for m, v in self.envelope_pass.items()},
            "audit_c_emp": {f"{m:.6g}": float(v) for m, v in self.audit_c_emp.items()},
            "provenance": self.provenance,
            "source_ops": ["run_inviscid", "run_viscous", "compare_fields",
                           "fit_rate", "energy_audit"],
        }

    def csv_rows(self):
        slope = self.fitted_slope if self.fitted_slope is not None else float("nan")
        for m in self.mu_list:
            yield (m, self.sup_errors[m], slope, self.fit_points)


def _interp_series(times, fields, t):
    times = np.asarray(times)
    if t <= times[0]:
        return fields[0]
    if t >= times[-1]:
        return fields[-1]
    k = int(np.searchsorted(times, t, side="right")) - 1
    lam = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - lam) * fields[k] + lam * fields[k + 1]


def _config_hash(payload):
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def viscosity_sweep(omega0: ScalarField, mu_list, beta, eta, T, config=None) -> SweepReport:
    """Full rate experiment from one initial potential vorticity.

    The inviscid reference runs once; every viscous leg starts from the same
    initial velocity (u_mu(0) = u(0), so only the mu term of the error bound
    is exercised) with eta_mu = eta * mu**(-beta).
    """
    cfg = dict(_DEF)
    cfg.update(config or {})
    grid = omega0.grid
    mus = [float(m) for m in mu_list]
    if any(m <= 0 for m in mus):
        raise ValueError("viscosities must be positive")

    traj = run_inviscid(
        omega0, T,
        window_init=cfg["window_init"], tol_picard=cfg["tol_picard"],
        solver_tol=cfg["solver_tol"], snapshots=cfg["snapshots"],
    )
    ref_times = list(traj.times)
    ref_fields = [v.values for v in traj.velocities]
    u0 = traj.velocities[0]

    dt = cfg["dt"]
    if dt is None:
        sup0 = float(np.abs(u0.magnitude()).max())
        dt = 0.4 * grid.h / max(sup0, 1e-12)
        dt = T / max(1, int(math.ceil(T / dt)))

    times = None
    errors = {}
    sups = {}
    env = {}
    cemp = {}
    audits = {}
    finals = {}
    for mu in mus:
        vc = ViscousConfig(mu=mu, dt=dt, eta=eta, beta=beta, theta=cfg["theta"])
        vtraj = run_viscous(u0, T, vc, snapshot_every=1)
        series = []
        for t, fld in zip(vtraj.times, vtraj.fields):
            uref = _interp_series(ref_times, ref_fields, t)
            diff = VectorField(grid, fld.values - uref, name="w")
            series.append(weighted_norm(diff, 2, "b"))
        if times is None:
            times = list(vtraj.times)
        errors[mu] = series
        sups[mu] = max(series)
        audit = energy_audit(vtraj, ref_times, ref_fields, tol_audit=cfg["tol_audit"])
        env[mu] = audit.passed
        cemp[mu] = audit.c_emp
        audits[mu] = audit
        finals[mu] = vtraj.fields[-1]

    slope = intercept = resid = None
    notes = []
    n_fit = max(3, math.ceil(len(mus) * 2.0 / 3.0))
    if len(mus) >= 3:
        tail = mus[-n_fit:]
        slope, intercept, resid, notes = fit_rate([sups[m] for m in tail], tail)
    provenance = {
        "n": grid.n,
        "h": grid.h,
        "dt": dt,
        "T": T,
        "snapshots": cfg["snapshots"],
        "config_hash": _config_hash(
            {"mu_list": mus, "beta": beta, "eta": eta, "T": T, "n": grid.n,
             "dt": dt, "alpha": grid.domain.alpha, **{k: cfg[k] for k in sorted(cfg)}}
        ),
    }
    return SweepReport(
        mu_list=mus, beta=beta, eta=eta, times=times, errors=errors,
        sup_errors=sups, fitted_slope=slope, intercept=intercept,
        fit_residual=resid, fit_points=n_fit if slope is not None else 0,
        fit_notes=notes, envelope_pass=env, audit_c_emp=cemp,
        provenance=provenance, audits=audits, final_fields=finals,
    )


def perturbation_shift(omega0: ScalarField, mu, beta, eta, T, eps,
                       config=None, seed=0):
    """Shift of the sup error under a perturbed initial viscous velocity.

    Builds a unit-norm b-divergence-free perturbation from an offset stream
    source, reruns one viscous leg from u0 + eps*v, and returns
    (shift, bound) with bound = eps * exp(2 int ||grad u||_inf dt).
    """
    from .elliptic import grad_vector, solve_stream
    from .viscous import project_divfree_b

    cfg = dict(_DEF)
    cfg.update(config or {})
    grid = omega0.grid

    traj = run_inviscid(
        omega0, T,
        window_init=cfg["window_init"], tol_picard=cfg["tol_picard"],
        solver_tol=cfg["solver_tol"], snapshots=cfg["snapshots"],
    )
    ref_times = list(traj.times)
    ref_fields = [v.values for v in traj.velocities]
    u0 = traj.velocities[0]

    # perturbation: velocity of an offset source, normalized in L2_b
    rng = np.random.default_rng(seed)
    zc = 0.25 * np.exp(2j * math.pi * rng.uniform())

    def pert_src(z):
        s2 = (np.abs(z - zc) / 0.25) ** 2
        out = np.zeros(z.shape)
        mm = s2 < 1
        out[mm] = np.exp(1.0 - 1.0 / (1.0 - s2[mm]))
        return out

    src = ScalarField.from_function(grid, pert_src)
    vsol = solve_stream(grid, ScalarField(grid, grid.b_node * src.values), cfg["solver_tol"])
    vnorm = weighted_norm(vsol.u, 2, "b")
    vvals = vsol.u.values / vnorm

    dt = cfg["dt"]
    if dt is None:
        sup0 = float(np.abs(u0.magnitude()).max())
        dt = 0.4 * grid.h / max(sup0, 1e-12)
        dt = T / max(1, int(math.ceil(T / dt)))
    vc = ViscousConfig(mu=mu, dt=dt, eta=eta, beta=beta, theta=cfg["theta"])

    def sup_err(u_init):
        vtraj = run_viscous(u_init, T, vc, snapshot_every=1)
        worst = 0.0
        for t, fld in zip(vtraj.times, vtraj.fields):
            uref = _interp_series(ref_times, ref_fields, t)
            diff = VectorField(grid, fld.values - uref, name="w")
            worst = max(worst, weighted_norm(diff, 2, "b"))
        return worst

    base = sup_err(u0)
    pert_init, _ = project_divfree_b(
        grid, VectorField(grid, u0.values + eps * vvals, name="u0_pert")
    )
    pert = sup_err(pert_init)

    # Gronwall factor from the reference gradients
    m = grid.interior
    gsup = []
    for v in ref_fields:
        gt = grad_vector(grid, v)
        gsup.append(float(np.sqrt(np.sum(gt**2, axis=(2, 3)))[m].max(initial=0.0)))
    ts = np.asarray(ref_times)
    order = np.argsort(ts)
    ts = ts[order]
    gs = np.asarray(gsup)[order]
    integral = float(np.trapezoid(gs, ts)) if ts.size > 1 else 0.0
    bound = eps * math.exp(2.0 * integral)
    return abs(pert - base), bound
