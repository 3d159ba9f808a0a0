"""Viscous lake stepping in primitive variables with a weighted projection.

One step is: semi-Lagrangian self-advection of the velocity (clamped cubic
sampling along backward RK4 feet), a theta-scheme solve of the degenerate
viscous term 2*mu*(div(b D(u)) + grad(b div u))/b discretized in variational
form (so the operator is symmetric positive semidefinite and the natural
boundary condition is zero tangential stress), a Navier drag term
mu*eta_mu * b * u_tau on the shoreline layer that is active only when the
depth does not vanish there (alpha = 0), and finally a projection onto
discretely b-divergence-free fields.

The projection is computed through the stream formulation: psi minimizes the
b-weighted distance between (1/b) perp-grad(psi) and the predictor, which
makes the projected field orthogonal to the removed gradient in the discrete
b-inner product; kinetic energy therefore never grows in the projection, and
the theta >= 1/2 diffusion solve is unconditionally dissipative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import div_b_residual
from .errors import AuditFailed, StabilityViolation
from .geometry import Grid, ScalarField, VectorField
from .transport import fill_ghost, sample_bicubic, sample_lagrange6

_REG = 1e-11


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------

@dataclass
class ViscousConfig:
    """Viscosity, drag law eta_mu = eta * mu**(-beta), and stepping knobs."""

    mu: float
    dt: float
    eta: float = 0.0
    beta: float = 0.0
    theta: float = 1.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("viscosity mu must be >= 0")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError("drag exponent beta must lie in [0, 1)")
        if self.eta < 0:
            raise ValueError("drag scale eta must be >= 0")
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError("theta must lie in [0, 1]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def eta_mu(self):
        if self.mu == 0.0:
            return 0.0
        return self.eta * self.mu ** (-self.beta)

    def validate_stability(self, grid: Grid):
        """Advective cap is checked per step; the explicit-diffusion bound
        only binds for theta < 1/2."""
        if self.theta >= 0.5 or self.mu == 0.0:
            return
        m = grid.interior
        b = grid.b_node[m]
        ratio = float(b.max() / b.min())
        cap = grid.h**2 * float(b.min()) / (8.0 * self.mu * ratio)
        if self.dt > cap:
            raise ValueError(
                f"dt={self.dt:.3e} violates the explicit diffusion cap {cap:.3e}"
            )


@dataclass
class ViscousState:
    """Velocity, pressure, and kinetic energy at one time."""

    t: float
    u: VectorField
    p: ScalarField
    kinetic_energy: float
    psi: np.ndarray | None = None      # stream values behind u, for advection


# ---------------------------------------------------------------------------
# discrete operators (assembled once per grid / config and cached)
# ---------------------------------------------------------------------------

def _centered_matrix(grid: Grid, axis):
    """Centered difference with ghost-zero values, antisymmetric on unknowns."""
    n = grid.n_interior
    h = grid.h
    ii, jj = grid.nodes_ij[:, 0], grid.nodes_ij[:, 1]
    rows, cols, vals = [], [], []
    for s in (+1, -1):
        ni = ii + (s if axis == 0 else 0)
        nj = jj + (s if axis == 1 else 0)
        nb = grid.index_of[ni, nj]
        have = nb >= 0
        rows.append(np.arange(n)[have])
        cols.append(nb[have])
        vals.append(np.full(have.sum(), s / (2.0 * h)))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


def _onesided_matrix(grid: Grid, axis):
    """d/dx_axis: centered where both neighbors are interior, one-sided at the
    edge layer, zero where isolated.  Used for the strain-rate entries."""
    n = grid.n_interior
    h = grid.h
    ii, jj = grid.nodes_ij[:, 0], grid.nodes_ij[:, 1]
    ni_p = ii + (1 if axis == 0 else 0)
    nj_p = jj + (1 if axis == 1 else 0)
    ni_m = ii - (1 if axis == 0 else 0)
    nj_m = jj - (1 if axis == 1 else 0)
    nb_p = grid.index_of[ni_p, nj_p]
    nb_m = grid.index_of[ni_m, nj_m]
    rows, cols, vals = [], [], []
    idx = np.arange(n)
    both = (nb_p >= 0) & (nb_m >= 0)
    only_p = (nb_p >= 0) & ~both
    only_m = (nb_m >= 0) & ~both
    rows += [idx[both], idx[both]]
    cols += [nb_p[both], nb_m[both]]
    vals += [np.full(both.sum(), 0.5 / h), np.full(both.sum(), -0.5 / h)]
    rows += [idx[only_p], idx[only_p]]
    cols += [nb_p[only_p], idx[only_p]]
    vals += [np.full(only_p.sum(), 1.0 / h), np.full(only_p.sum(), -1.0 / h)]
    rows += [idx[only_m], idx[only_m]]
    cols += [idx[only_m], nb_m[only_m]]
    vals += [np.full(only_m.sum(), 1.0 / h), np.full(only_m.sum(), -1.0 / h)]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )


class ViscousOperators:
    """Sparse machinery shared by the stepper; one instance per grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.n_interior
        self.n = n
        m = grid.interior
        self.b = grid.b_node[m]
        self.mass = grid.h**2 * self.b          # uniform-cell b-weighted mass

        Gx = _centered_matrix(grid, 0)
        Gy = _centered_matrix(grid, 1)
        # stream displacement: u = (1/b) (-Gy, Gx) psi
        self.Q = sp.vstack([-Gy, Gx]).tocsr()
        Binv = sp.diags(1.0 / self.b)
        A = (self.Q.T @ sp.block_diag([Binv, Binv]) @ self.Q).tocsc()
        A = A + _REG * sp.eye(n, format="csc") * float(A.diagonal().mean())
        self._proj_lu = spla.splu(A)

        Dx = _onesided_matrix(grid, 0)
        Dy = _onesided_matrix(grid, 1)
        Z = sp.csr_matrix((n, n))
        s = 1.0 / math.sqrt(2.0)
        self.R_strain = sp.vstack(
            [sp.hstack([Dx, Z]), sp.hstack([s * Dy, s * Dx]), sp.hstack([Z, Dy])]
        ).tocsr()
        self.R_div = sp.hstack([Dx, Dy]).tocsr()
        W = sp.diags(np.tile(self.mass, 3))
        self.A_strain = (self.R_strain.T @ W @ self.R_strain).tocsr()
        self.A_div = (self.R_div.T @ sp.diags(self.mass) @ self.R_div).tocsr()

        # shoreline-layer drag: arc-length weighted tangential projector
        edge = grid.edge_layer
        z_edge = grid.interior_points()[edge]
        gphi = grid.domain.bathymetry.grad_phi(z_edge)
        nrm = np.abs(gphi)
        tau = 1j * gphi / np.where(nrm > 0, nrm, 1.0)
        n_edge = int(edge.sum())
        perimeter = 2.0 * math.pi * np.mean(np.abs(grid.domain.boundary))
        ds = perimeter / max(n_edge, 1)
        w_drag = ds * self.b[edge]
        tx, ty = tau.real, tau.imag
        idx = np.where(edge)[0]
        rows = np.concatenate([idx, idx, idx + self.n, idx + self.n])
        cols = np.concatenate([idx, idx + self.n, idx, idx + self.n])
        vals = np.concatenate([w_drag * tx * tx, w_drag * tx * ty,
                               w_drag * tx * ty, w_drag * ty * ty])
        self.A_drag_unit = sp.csr_matrix(
            (vals, (rows, cols)), shape=(2 * n, 2 * n)
        )
        self._diff_lu = {}

    # -- projection --------------------------------------------------------

    def project(self, u_flat):
        """L2_b-orthogonal projection onto (1/b) perp-grad(psi) fields."""
        rhs = self.Q.T @ u_flat
        psi = self._proj_lu.solve(rhs)
        q = self.Q @ psi
        u1 = q[: self.n] / self.b
        u2 = q[self.n :] / self.b
        return np.concatenate([u1, u2]), psi

    def energy(self, u_flat):
        return 0.5 * float(
            np.sum(self.mass * (u_flat[: self.n] ** 2 + u_flat[self.n :] ** 2))
        )

    def dissipation_rate(self, u_flat, cfg: ViscousConfig):
        """2 mu (||D(u)||^2 + ||div u||^2)_b plus the boundary drag power."""
        s = self.R_strain @ u_flat
        d = self.R_div @ u_flat
        visc = 2.0 * cfg.mu * (
            float(np.sum(np.tile(self.mass, 3) * s * s))
            + float(np.sum(self.mass * d * d))
        )
        drag = 0.0
        if self.grid.domain.alpha == 0.0 and cfg.eta_mu > 0.0:
            drag = cfg.mu * cfg.eta_mu * float(u_flat @ (self.A_drag_unit @ u_flat))
        return visc, drag

    def diffusion_solver(self, cfg: ViscousConfig):
        key = (cfg.mu, cfg.eta_mu, cfg.dt, cfg.theta, self.grid.domain.alpha)
        if key not in self._diff_lu:
            M = sp.diags(np.tile(self.mass, 2))
            K = 2.0 * cfg.mu * (self.A_strain + self.A_div)
            if self.grid.domain.alpha == 0.0 and cfg.eta_mu > 0.0:
                K = K + cfg.mu * cfg.eta_mu * self.A_drag_unit
            lhs = (M + cfg.theta * cfg.dt * K).tocsc()
            self._diff_lu[key] = (spla.splu(lhs), M, K)
        return self._diff_lu[key]


def get_operators(grid: Grid) -> ViscousOperators:
    key = ("viscous_ops",)
    if key not in grid._op_cache:
        grid._op_cache[key] = ViscousOperators(grid)
    return grid._op_cache[key]


# ---------------------------------------------------------------------------
# field helpers
# ---------------------------------------------------------------------------

def _flat(grid: Grid, u: VectorField):
    m = grid.interior
    return np.concatenate([u.values[m, 0], u.values[m, 1]])


def _unflat(grid: Grid, flat, name="u", time=0.0):
    n = grid.n_interior
    vals = np.zeros(grid.shape + (2,))
    m = grid.interior
    vals[m, 0] = flat[:n]
    vals[m, 1] = flat[n:]
    f = VectorField(grid, vals, name=name, time=time)
    f.div_residual = div_b_residual(grid, vals)
    return f


def _pressure_system(grid: Grid):
    """Face-flux Poisson pieces for div(b grad p) = div(b u): the matrix with
    natural zero-flux arms, its factorization, and the face divergence of a
    b-weighted node field."""
    key = ("pressure",)
    if key not in grid._op_cache:
        from .elliptic import _get_operator

        A = _get_operator(grid, "b", "neumann")
        n = grid.n_interior
        Areg = (A + _REG * float(A.diagonal().mean()) * sp.eye(n)).tocsc()
        grid._op_cache[key] = (A, spla.splu(Areg))
    return grid._op_cache[key]


def _face_div_b(grid: Grid, u_flat):
    """Divergence of b*u through face-averaged fluxes (interior faces only)."""
    n = grid.n_interior
    bath = grid.domain.bathymetry
    key = ("face_b",)
    if key not in grid._op_cache:
        grid._op_cache[key] = bath.depth_from_phi(bath.phi(grid.arm_face))
    bf = grid._op_cache[key]
    u1, u2 = u_flat[:n], u_flat[n:]
    div = np.zeros(n)
    comps = (u1, u1, u2, u2)
    signs = (1.0, -1.0, 1.0, -1.0)
    for d in range(4):
        nb = grid.arm_nb[d]
        have = nb >= 0
        c = comps[d]
        face_val = 0.5 * (c[have] + c[nb[have]])
        div[have] += signs[d] * bf[d][have] * face_val / grid.h
    return div


def _face_grad(grid: Grid, p_int):
    """Node gradient averaged from face differences of p (one-sided when a
    direction has a single interior face)."""
    n = grid.n_interior
    g = np.zeros(2 * n)
    for axis, (dp, dm) in enumerate(((0, 1), (2, 3))):
        nb_p = grid.arm_nb[dp]
        nb_m = grid.arm_nb[dm]
        gp = np.where(nb_p >= 0, (p_int[nb_p] - p_int) / grid.h, 0.0)
        gm = np.where(nb_m >= 0, (p_int - p_int[nb_m]) / grid.h, 0.0)
        cnt = (nb_p >= 0).astype(float) + (nb_m >= 0).astype(float)
        g[axis * n : (axis + 1) * n] = (gp + gm) / np.maximum(cnt, 1.0)
    return g


def project_divfree_b(grid: Grid, u_star: VectorField):
    """Project onto div(b u) = 0; returns (projected field, pressure).

    Two passes: the weighted Poisson solve div(b grad p) = div(b u_star)
    with natural boundary data removes the gradient part consistently (a pure
    gradient input comes back as p up to quadrature error), then the stream
    form of the constraint absorbs the leftover so the output divergence
    vanishes to roundoff.  p is normalized to zero mean.
    """
    ops = get_operators(grid)
    flat = _flat(grid, u_star)

    # a field this module already projected has no gradient part to remove;
    # skipping the pressure pass keeps re-projection exact.  The residual
    # alone is not a membership test (a harmonic gradient is divergence-free
    # but not tangent), hence the tag check.
    r_in = div_b_residual(grid, u_star.values)
    if u_star.divergence_free and np.isfinite(r_in) and r_in <= 1e-10:
        p_int = np.zeros(grid.n_interior)
        flat1 = flat
    else:
        _, lu = _pressure_system(grid)
        rhs = -_face_div_b(grid, flat)
        rhs = rhs - rhs.mean()
        p_int = lu.solve(rhs)
        p_int = p_int - p_int.mean()
        flat1 = flat - _face_grad(grid, p_int)

    proj, _ = ops.project(flat1)
    u = _unflat(grid, proj, name=u_star.name or "u", time=u_star.time)
    u.divergence_free = True
    pvals = np.zeros(grid.shape)
    pvals[grid.interior] = p_int
    p = ScalarField(grid, pvals, name="p", time=u_star.time)
    return u, p


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _advect(grid: Grid, u: VectorField, dt: float):
    """Semi-Lagrangian self-advection: sample u at backward RK4 feet."""
    vals = fill_ghost(grid, u.values)
    m = grid.interior
    z = grid.interior_points()

    def vel(pts):
        v = sample_bicubic(grid, vals, pts)
        return v[..., 0] + 1j * v[..., 1]

    sup = float(np.hypot(vals[..., 0], vals[..., 1]).max())
    nsub = max(1, int(math.ceil(dt * sup / (0.45 * grid.h))))
    hstep = -dt / nsub
    feet = z.copy()
    for _ in range(nsub):
        k1 = vel(feet)
        k2 = vel(feet + 0.5 * hstep * k1)
        k3 = vel(feet + 0.5 * hstep * k2)
        k4 = vel(feet + hstep * k3)
        feet = feet + (hstep / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    # sixth-order sampling: the cubic's dissipation would swamp the physical
    # one for mu below ~1e-3
    sampled = sample_lagrange6(grid, vals, feet)
    out = np.zeros(grid.shape + (2,))
    out[m] = sampled
    return out


def viscous_step(state: ViscousState, cfg: ViscousConfig) -> ViscousState:
    """One advection + theta-diffusion + projection step."""
    grid = state.u.grid
    ops = get_operators(grid)
    e_prev = state.kinetic_energy

    adv = _advect(grid, state.u, cfg.dt)
    flat = np.concatenate([adv[grid.interior, 0], adv[grid.interior, 1]])

    if cfg.mu > 0.0:
        lu, M, K = ops.diffusion_solver(cfg)
        rhs = M @ flat - (1.0 - cfg.theta) * cfg.dt * (K @ flat)
        flat = lu.solve(rhs)

    # remove the gradient content of the update increment through the face
    # Poisson solve before the stream cleanup: the stream form alone misreads
    # a sampled pressure gradient as rim vorticity and would slowly deform
    # the shoreline layer
    delta = flat - _flat(grid, state.u)
    _, plu = _pressure_system(grid)
    rhs_p = -_face_div_b(grid, delta)
    p_inc = plu.solve(rhs_p - rhs_p.mean())
    flat = flat - _face_grad(grid, p_inc)

    proj, psi = ops.project(flat)
    e_new = ops.energy(proj)

    # the pressure gauge never feeds back into u; the potential is recovered
    # on demand through project_divfree_b, the stepper carries p = 0
    p = ScalarField(grid, np.zeros(grid.shape), name="p", time=state.t + cfg.dt)

    budget = 1e-10 * max(e_prev, 1.0) + 1e-7 * e_prev
    if cfg.mu > 0.0 and e_new > e_prev + budget:
        raise StabilityViolation(
            f"energy grew from {e_prev:.6e} to {e_new:.6e} in one step"
        )

    u = _unflat(grid, proj, name="u", time=state.t + cfg.dt)
    u.divergence_free = True
    return ViscousState(t=state.t + cfg.dt, u=u, p=p, kinetic_energy=e_new, psi=psi)


@dataclass
class ViscousTrajectory:
    """Snapshots of one viscous run with the energy/dissipation ledger."""

    grid: Grid
    times: list
    fields: list                   # VectorField snapshots
    energies: list                 # kinetic energy per step time
    step_times: list
    dissipation: list              # cumulative 2mu ||D(u)||^2 + drag integral
    config: ViscousConfig


def run_viscous(u0: VectorField, T: float, cfg: ViscousConfig,
                snapshot_every: int = 1) -> ViscousTrajectory:
    """Fixed-step integration to time T with snapshot cadence in steps."""
    grid = u0.grid
    cfg.validate_stability(grid)
    ops = get_operators(grid)
    u_start, _ = project_divfree_b(grid, u0)
    flat0, psi0 = ops.project(_flat(grid, u_start))
    u_start = _unflat(grid, flat0, name="u", time=0.0)
    u_start.divergence_free = True
    state = ViscousState(t=0.0, u=u_start, p=ScalarField(grid, np.zeros(grid.shape)),
                         kinetic_energy=ops.energy(flat0), psi=psi0)

    nsteps = max(1, int(round(T / cfg.dt)))
    times = [0.0]
    fields = [state.u]
    energies = [state.kinetic_energy]
    step_times = [0.0]
    dissipation = [0.0]
    acc = 0.0
    for k in range(1, nsteps + 1):
        state = viscous_step(state, cfg)
        visc, drag = ops.dissipation_rate(_flat(grid, state.u), cfg)
        acc += (visc + drag) * cfg.dt
        step_times.append(state.t)
        energies.append(state.kinetic_energy)
        dissipation.append(acc)
        if k % snapshot_every == 0 or k == nsteps:
            times.append(state.t)
            fields.append(state.u)
    return ViscousTrajectory(grid=grid, times=times, fields=fields,
                             energies=energies, step_times=step_times,
                             dissipation=dissipation, config=cfg)


# ---------------------------------------------------------------------------
# energy audit against a reference trajectory
# ---------------------------------------------------------------------------

@dataclass
class EnergyAudit:
    """Per-step verification of the comparison-energy inequality."""

    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    envelope: np.ndarray
    w_norm: np.ndarray             # ||u_mu - u||_{L2_b} per step
    passed: bool
    c_emp: float
    first_violation: int = -1

    def rows(self):
        for k in range(self.times.size):
            yield (self.times[k], self.lhs[k], self.rhs[k],
                   self.envelope[k], self.w_norm[k])


def _interp_fields(times, fields, t):
    times = np.asarray(times)
    if t <= times[0]:
        return fields[0]
    if t >= times[-1]:
        return fields[-1]
    k = int(np.searchsorted(times, t, side="right")) - 1
    lam = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - lam) * fields[k] + lam * fields[k + 1]


def energy_audit(traj: ViscousTrajectory, ref_times, ref_fields,
                 tol_audit: float = 0.1, strict: bool = False) -> EnergyAudit:
    """Check, per step, that the discrete energy balance of w = u_mu - u is
    dominated by the viscous/drag/transport bound, and that ||w||^2 stays
    under its integrated exponential envelope.  ``strict`` raises AuditFailed
    at the first violating step instead of returning a failed report."""
    grid = traj.grid
    ops = get_operators(grid)
    cfg = traj.config
    m = grid.interior

    ref_vals = [f.values if isinstance(f, VectorField) else f for f in ref_fields]
    ref_grad_sup = []
    ref_h1 = []
    from .elliptic import grad_vector

    for v in ref_vals:
        gt = grad_vector(grid, v)
        gmag2 = np.sum(gt**2, axis=(2, 3))
        ref_grad_sup.append(float(np.sqrt(gmag2[m]).max(initial=0.0)))
        h1 = float(
            np.sum(grid.weights[m] * (v[m, 0] ** 2 + v[m, 1] ** 2))
            + np.sum(grid.weights[m] * gmag2[m])
        )
        ref_h1.append(h1)
    ref_times = np.asarray(ref_times, dtype=float)

    nt = len(traj.step_times)
    ts = np.asarray(traj.step_times)
    if len(traj.fields) != nt:
        raise ValueError("energy_audit needs snapshot_every=1 trajectories")
    u_flat = []
    w_flat = []
    for k, t in enumerate(ts):
        uref = _interp_fields(ref_times, ref_vals, t)
        u_flat.append(np.concatenate([uref[m, 0], uref[m, 1]]))
        w_flat.append(_flat(grid, traj.fields[k]) - u_flat[k])

    w2 = np.array([float(np.sum(ops.mass * (w[: ops.n] ** 2 + w[ops.n:] ** 2)))
                   for w in w_flat])
    grad_sup_t = np.interp(ts, ref_times, np.asarray(ref_grad_sup))
    h1_t = np.interp(ts, ref_times, np.asarray(ref_h1))

    mu = cfg.mu
    lhs = np.zeros(nt - 1)
    rhs = np.zeros(nt - 1)
    c_int = 0.0
    c_bnd = 0.0
    for k in range(nt - 1):
        wmid = w_flat[k + 1]
        umid = u_flat[k + 1]
        v = wmid + 0.5 * umid
        s = ops.R_strain @ v
        d = ops.R_div @ v
        quad = 2.0 * mu * (
            float(np.sum(np.tile(ops.mass, 3) * s * s))
            + float(np.sum(ops.mass * d * d))
        )
        drag_v = 0.0
        drag_u4 = 0.0
        if grid.domain.alpha == 0.0 and cfg.eta_mu > 0.0:
            drag_v = mu * cfg.eta_mu * float(v @ (ops.A_drag_unit @ v))
            drag_u4 = 0.25 * mu * cfg.eta_mu * float(umid @ (ops.A_drag_unit @ umid))
        su = ops.R_strain @ umid
        du = ops.R_div @ umid
        visc_u = 0.5 * mu * (
            float(np.sum(np.tile(ops.mass, 3) * su * su))
            + float(np.sum(ops.mass * du * du))
        )
        lhs[k] = 0.5 * (w2[k + 1] - w2[k]) / cfg.dt + quad + drag_v
        rhs[k] = visc_u + grad_sup_t[k + 1] * w2[k + 1] + drag_u4
        if h1_t[k + 1] > 0:
            c_int = max(c_int, (visc_u / max(mu, 1e-300)) / h1_t[k + 1])
            if cfg.eta_mu > 0 and grid.domain.alpha == 0.0:
                c_bnd = max(
                    c_bnd,
                    (drag_u4 / max(mu * cfg.eta_mu, 1e-300)) / h1_t[k + 1],
                )
    c_emp = max(c_int, c_bnd, 1e-300)

    eta_term = cfg.eta * mu ** (1.0 - cfg.beta) if mu > 0 else 0.0
    int_h1 = np.concatenate([[0.0], np.cumsum(0.5 * (h1_t[1:] + h1_t[:-1]) * np.diff(ts))])
    int_gs = np.concatenate([[0.0], np.cumsum(0.5 * (grad_sup_t[1:] + grad_sup_t[:-1]) * np.diff(ts))])
    envelope = (w2[0] + (mu + eta_term) * c_emp * int_h1) * np.exp(2.0 * int_gs)

    ok_steps = lhs <= rhs * (1.0 + tol_audit) + 1e-14
    ok_env = w2 <= envelope * (1.0 + tol_audit) + 1e-14
    passed = bool(ok_steps.all() and ok_env.all())
    first = -1
    if not passed:
        bad = np.nonzero(~ok_steps)[0]
        first = int(bad[0]) if bad.size else int(np.nonzero(~ok_env)[0][0])
        if strict:
            raise AuditFailed(
                f"energy inequality violated at step {first} (t={ts[first + 1]:.4g})"
            )
    return EnergyAudit(times=ts[1:], lhs=lhs, rhs=rhs,
                       envelope=envelope[1:], w_norm=np.sqrt(w2[1:]),
                       passed=passed, c_emp=float(c_emp), first_violation=first)
