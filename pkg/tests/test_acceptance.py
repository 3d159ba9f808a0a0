"""Acceptance suite: every criterion at its stated tolerance and resolution.

Each test prints one PASS/FAIL line (visible with pytest -s); the assertions
carry the same bounds, so the suite doubles as the exit gate.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import bump_field
from lakesim import experiments
from lakesim.config import InitialData, initial_field
from lakesim.elliptic import (
    assemble_green_solution,
    green_disk,
    regularity_report,
    solve_stream,
)
from lakesim.geometry import ScalarField, VectorField, build_domain, build_grid, weighted_norm
from lakesim.sweep import perturbation_shift, viscosity_sweep
from lakesim.transport import conservation_report, run_inviscid
from lakesim.viscous import ViscousConfig, run_viscous


def _report(num, name, ok, detail):
    line = f"ACCEPTANCE {num:02d} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    assert ok, line


# -- shared expensive runs ---------------------------------------------------

@pytest.fixture(scope="module")
def offset_run(disk_flat):
    """Offset bump on flat depth, T = 1: feeds criteria 6 and 7."""
    g = build_grid(disk_flat, 96)
    om0 = bump_field(g, center=0.25 + 0j, radius=0.3)
    sol = solve_stream(g, ScalarField(g, g.b_node * om0.values))
    rep = regularity_report(g, sol, samples=10000, K_margin=0.2, seed=0)
    traj = run_inviscid(om0, 1.0, snapshots=10)
    return g, om0, rep, traj


@pytest.fixture(scope="module")
def headline_sweeps(disk_flat):
    """Criterion 9 sweeps at n = 128 over both drag regimes."""
    g = build_grid(disk_flat, 128)
    om0 = initial_field(g, InitialData(type="shielded_bump", radius=0.6))
    mus = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
    t0 = time.perf_counter()
    reps = {
        beta: viscosity_sweep(om0, mus, beta=beta, eta=1.0, T=1.0)
        for beta in (0.0, 0.5)
    }
    return reps, time.perf_counter() - t0


def test_criterion_01_elliptic_closed_form(disk_alpha1):
    t0 = time.perf_counter()
    errs = {}
    for n in (64, 128):
        g = build_grid(disk_alpha1, n)
        f = ScalarField.from_function(g, lambda z: np.ones(z.shape))
        sol = solve_stream(g, f, 1e-8)
        z = g.interior_points()
        exact = -((1.0 - np.abs(z) ** 2) ** 2) / 8.0
        errs[n] = float(np.abs(sol.psi.values[g.interior] - exact).max())
    order = math.log2(errs[64] / errs[128])
    elapsed = time.perf_counter() - t0
    ok = errs[128] <= 5e-3 and order >= 1.7 and elapsed <= 30.0
    _report(1, "elliptic closed form", ok,
            f"err128={errs[128]:.2e} (<=5e-3), order={order:.2f} (>=1.7), "
            f"{elapsed:.1f}s (<=30s)")


def test_criterion_02_green_identity_symmetry():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    n = 10000
    x = np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * math.pi * rng.uniform(0, 1, n))
    y = np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * math.pi * rng.uniform(0, 1, n))
    ystar = y / np.abs(y) ** 2
    ident = np.abs(
        np.abs(x - ystar) ** 2 * np.abs(y) ** 2
        - np.abs(x - y) ** 2
        - (1 - np.abs(x) ** 2) * (1 - np.abs(y) ** 2)
    ).max()
    sym = np.abs(green_disk(x, y) - green_disk(y, x)).max()
    elapsed = time.perf_counter() - t0
    ok = ident <= 1e-12 and sym <= 1e-12 and elapsed <= 1.0
    _report(2, "green identity/symmetry", ok,
            f"identity={ident:.1e}, symmetry={sym:.1e} (<=1e-12), {elapsed:.2f}s")


def test_criterion_03_decomposition_cross_check():
    t0 = time.perf_counter()
    worst = 0.0
    for alpha in (0.0, 1.0):
        dom = build_domain({"family": "disk", "alpha": alpha})
        g = build_grid(dom, 96)
        f = bump_field(g, radius=0.4)
        direct = solve_stream(g, f, 1e-8)
        via = assemble_green_solution(g, f, delta=0.1)
        rel = (np.abs(via.values - direct.psi.values)[g.interior].max()
               / np.abs(direct.psi.values[g.interior]).max())
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    ok = worst <= 5e-2 and elapsed <= 300.0
    _report(3, "kernel decomposition", ok,
            f"worst rel err={worst:.3f} (<=0.05), {elapsed:.1f}s (<=300s)")


def test_criterion_04_regularity_audits(disk_alpha1):
    t0 = time.perf_counter()
    sources = [
        lambda z: np.ones(z.shape),
        lambda z: z.real,
        lambda z: np.sin(3 * z.real) * np.cos(2 * z.imag),
        lambda z: np.sin(2 * z.real + 3 * z.imag),
        lambda z: np.exp(-np.abs(z) ** 2),
    ]
    # (a) (1/p)||grad u||_p bounded by one constant across p
    bound_ok = True
    loglip = {}
    for n in (64, 128):
        g = build_grid(disk_alpha1, n)
        for fn in sources:
            f = ScalarField.from_function(g, fn)
            f = ScalarField(g, f.values / np.abs(f.values[g.interior]).max())
            sol = solve_stream(g, f)
            rep = regularity_report(g, sol, samples=10000, seed=0)
            vals = list(rep.grad_p_norms.values())
            if max(vals) > 1.5 * vals[0] + 1e-12:
                bound_ok = False
        fix = ScalarField.from_function(g, sources[2])
        sol = solve_stream(g, fix)
        loglip[n] = regularity_report(g, sol, samples=10000, seed=0).loglip_modulus
    # (b) log-Lipschitz modulus stable across refinement
    ll_ok = abs(loglip[128] - loglip[64]) <= 0.30 * loglip[64]
    # (c) interior C1 grows at most like log of the source gradient
    g = build_grid(disk_alpha1, 96)
    ratios = []
    for k in (4, 8, 16, 32):
        def fk(z, k=k):
            s2 = (np.abs(z) / 0.75) ** 2
            base = np.where(s2 < 1, np.exp(1 - 1 / np.maximum(1e-12, 1 - s2)), 0.0)
            return base * np.sin(k * z.real)

        f = ScalarField.from_function(g, fk)
        sol = solve_stream(g, f)
        rep = regularity_report(g, sol, samples=10000, seed=0)
        gsup = float(np.abs(np.diff(f.values, axis=0)).max() / g.h)
        ratios.append(rep.c1_interior / math.log(2.0 + gsup))
    c1_ok = max(ratios) / min(ratios) <= 2.5
    elapsed = time.perf_counter() - t0
    ok = bound_ok and ll_ok and c1_ok and elapsed <= 600.0
    _report(4, "regularity audits", ok,
            f"gradp bounded={bound_ok}, loglip {loglip[64]:.3f}->{loglip[128]:.3f}"
            f" (+-30%), c1/log ratio spread={max(ratios)/min(ratios):.2f} (<=2.5),"
            f" {elapsed:.0f}s")


def test_criterion_05_inviscid_steady_state(disk_alpha1):
    t0 = time.perf_counter()
    g = build_grid(disk_alpha1, 128)
    om0 = bump_field(g, radius=0.75)
    traj = run_inviscid(om0, 2.0, snapshots=8)
    rep = conservation_report(traj)
    drift = max(
        float(np.abs(s.omega.values - om0.values)[g.interior].max())
        for s in traj.states
    )
    lp_ok = all(rep.lp_drift[p] <= 0.02 for p in (1, 2, 4))
    sup_ok = rep.sup_drift <= 1e-6
    elapsed = time.perf_counter() - t0
    ok = drift <= 5e-3 and lp_ok and sup_ok and elapsed <= 600.0
    _report(5, "inviscid steady state", ok,
            f"max drift={drift:.2e} (<=5e-3), lp drifts<=2%={lp_ok}, "
            f"sup preserved={sup_ok}, {elapsed:.0f}s (<=600s)")


def test_criterion_06_picard_contraction(offset_run):
    from lakesim.transport import VorticityState, picard_window

    g, om0, _, traj = offset_run
    t0 = time.perf_counter()
    ratio_ok = all(
        r <= 0.75 for w in traj.windows for r in w.contraction_ratios
    )
    decay_ok = all(
        all(b < a for a, b in zip(w.sup_differences, w.sup_differences[1:]))
        for w in traj.windows if len(w.sup_differences) > 1
    )
    state = VorticityState.from_field(om0)
    _, full, _ = picard_window(state, (0.0, 0.2), tol_picard=1e-7, max_iter=20)
    _, half, _ = picard_window(state, (0.0, 0.1), tol_picard=1e-7, max_iter=20)
    halving_ok = half.contraction_ratios[0] < full.contraction_ratios[0]
    elapsed = time.perf_counter() - t0
    ok = ratio_ok and decay_ok and halving_ok and elapsed <= 600.0
    _report(6, "picard contraction", ok,
            f"ratios<=0.75={ratio_ok}, geometric decay={decay_ok}, "
            f"halving lowers ratio {full.contraction_ratios[0]:.3f}->"
            f"{half.contraction_ratios[0]:.3f}, {elapsed:.0f}s")


def test_criterion_07_support_confinement(offset_run):
    g, om0, reg, traj = offset_run
    d0 = traj.states[0].support_distance
    c_lip = reg.loglip_modulus
    floor = d0 ** math.exp(1.5 * c_lip * 1.0)
    dists = [s.support_distance for s in traj.states]
    ok = all(d >= floor for d in dists) and min(dists) > 0.0
    _report(7, "support confinement", ok,
            f"min dist={min(dists):.3f} >= floor={floor:.3f} "
            f"(d0={d0:.3f}, C_lip={c_lip:.3f})")


def test_criterion_08_viscous_energy_decay():
    t0 = time.perf_counter()
    worst = -np.inf
    for alpha in (0.0, 0.25):
        dom = build_domain({"family": "disk", "alpha": alpha})
        g = build_grid(dom, 96)
        om0 = bump_field(g, radius=0.6)
        sol = solve_stream(g, ScalarField(g, g.b_node * om0.values))
        for mu in (1e-2, 1e-3):
            traj = run_viscous(sol.u, 1.0, ViscousConfig(mu=mu, dt=0.02, eta=1.0))
            e = np.array(traj.energies)
            worst = max(worst, float(np.diff(e).max() / e[0]))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed <= 600.0
    _report(8, "viscous energy decay", ok,
            f"max relative step increase={worst:.1e} (<=1e-10), {elapsed:.0f}s")


def test_criterion_09_quantitative_rate(headline_sweeps):
    reps, elapsed = headline_sweeps
    s0 = reps[0.0].fitted_slope
    s5 = reps[0.5].fitted_slope
    env_ok = all(all(r.envelope_pass.values()) for r in reps.values())
    ok = s0 >= 0.35 and s5 >= 0.10 and env_ok and elapsed <= 1800.0
    _report(9, "vanishing-viscosity rate", ok,
            f"slope(beta=0)={s0:.3f} (>=0.35), slope(beta=0.5)={s5:.3f} (>=0.10), "
            f"energy audit pass={env_ok}, {elapsed:.0f}s (<=1800s)")


def test_criterion_10_gronwall_initial_data(disk_flat):
    t0 = time.perf_counter()
    g = build_grid(disk_flat, 96)
    om0 = initial_field(g, InitialData(type="shielded_bump", radius=0.6))
    shift, bound = perturbation_shift(om0, mu=1e-3, beta=0.0, eta=1.0,
                                      T=1.0, eps=1e-3)
    elapsed = time.perf_counter() - t0
    ok = shift <= bound * 1.2 and elapsed <= 900.0
    _report(10, "gronwall initial-data term", ok,
            f"shift={shift:.2e} <= 1.2*bound={1.2*bound:.2e}, {elapsed:.0f}s")


def test_criterion_11_determinism(tmp_path):
    cfg = {
        "experiment": "sweep",
        "numerics": {"n": 48, "snapshot_cadence": 10},
        "physics": {"mu_list": [3e-3, 1e-3, 3e-4], "eta": 1.0, "beta": 0.0,
                    "T": 0.4,
                    "initial_data": {"type": "shielded_bump", "radius": 0.6}},
        "output": {"directory": str(tmp_path / "a")},
        "seed": 3,
    }
    r1 = experiments.run(cfg, out_dir=str(tmp_path / "a"))
    r2 = experiments.run(cfg, out_dir=str(tmp_path / "b"))
    assert r1.ok and r2.ok
    same_report = ((tmp_path / "a" / "report.json").read_bytes()
                   == (tmp_path / "b" / "report.json").read_bytes())
    same_csv = all(
        (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("sweep.csv", "audit_00.csv", "audit_01.csv", "audit_02.csv")
    )
    green = {
        "experiment": "green-check", "numerics": {"n": 32}, "seed": 5,
        "output": {"directory": str(tmp_path / "c")},
    }
    g1 = experiments.run(green, out_dir=str(tmp_path / "c"))
    g2 = experiments.run(green, out_dir=str(tmp_path / "d"))
    same_green = ((tmp_path / "c" / "report.json").read_bytes()
                  == (tmp_path / "d" / "report.json").read_bytes())
    ok = same_report and same_csv and same_green
    _report(11, "determinism", ok,
            f"sweep report identical={same_report}, csv identical={same_csv}, "
            f"green report identical={same_green}")
