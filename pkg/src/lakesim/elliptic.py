"""Degenerate elliptic stream solves and the disk Green kernel.

Solves div((1/b) grad psi) = f with psi = 0 on the shoreline, on the masked
grid from :mod:`lakesim.geometry`.  The stencil is a 5-point flux form: the
face coefficient is 1/b at the face midpoint, arms that cross the shoreline
are shortened to the phi = 0 crossing and carry homogeneous Dirichlet data.
The resulting matrix is symmetric positive definite (after sign flip) and is
solved by AMG-preconditioned conjugate gradients.

The velocity is recovered as u = (1/b) * perp-grad(psi) with centered
differences on the zero-extended stream values; the same centered operators
define the discrete div/curl, so div(b u) vanishes to roundoff on bulk nodes
by the discrete curl-of-gradient identity.

The kernel of the solve factors through the disk kernel
    G(x, y) = (1/4 pi) * ln( |x-y|^2 / (|x-y|^2 + (1-|x|^2)(1-|y|^2)) ),
the stabilized form of ln(|x-y| / (|x-y*| |y|)) obtained from the identity
|x-y*|^2 |y|^2 = |x-y|^2 + (1-|x|^2)(1-|y|^2), which is well defined at y = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pyamg
import scipy.sparse as sp

from .errors import (
    CoincidentPoints,
    SingularCoefficient,
    SolverDiverged,
    SourceTooCloseToBoundary,
    SupportTooClose,
)
from .geometry import Grid, ScalarField, VectorField

_COINCIDENT_TOL = 1e-14


# ---------------------------------------------------------------------------
# discrete calculus on the full lattice (ghost values are zero)
# ---------------------------------------------------------------------------

def ddx(vals, h):
    out = np.zeros_like(vals)
    out[1:-1, :] = (vals[2:, :] - vals[:-2, :]) / (2.0 * h)
    return out


def ddy(vals, h):
    out = np.zeros_like(vals)
    out[:, 1:-1] = (vals[:, 2:] - vals[:, :-2]) / (2.0 * h)
    return out


def perp_grad(vals, h):
    """(-d/dy, d/dx) of a zero-extended lattice scalar."""
    return -ddy(vals, h), ddx(vals, h)


def bulk_mask(grid: Grid):
    """Interior nodes whose four neighbors are all interior."""
    m = grid.interior
    out = m.copy()
    out[1:-1, 1:-1] = (
        m[1:-1, 1:-1] & m[2:, 1:-1] & m[:-2, 1:-1] & m[1:-1, 2:] & m[1:-1, :-2]
    )
    out[0, :] = out[-1, :] = False
    out[:, 0] = out[:, -1] = False
    return out


def div_b_residual(grid: Grid, u_vals):
    """Relative residual of div(b u) over bulk nodes, centered differences."""
    bu_x = grid.b_node * u_vals[..., 0]
    bu_y = grid.b_node * u_vals[..., 1]
    div = ddx(bu_x, grid.h) + ddy(bu_y, grid.h)
    bulk = bulk_mask(grid)
    if not bulk.any():
        return float("nan")
    r = float(np.sqrt(np.mean(div[bulk] ** 2)))
    scale = float(np.sqrt(np.mean(bu_x[bulk] ** 2 + bu_y[bulk] ** 2))) / grid.h
    return r / max(scale, 1e-300)


def grad_vector(grid: Grid, u_vals):
    """Per-node gradient tensor of a vector field, one-sided at the edge layer.

    Returns (nx, ny, 2, 2) with entry [..., i, j] = d u_i / d x_j; zero at
    non-interior nodes.
    """
    h = grid.h
    m = grid.interior
    out = np.zeros(grid.shape + (2, 2))
    for comp in range(2):
        v = u_vals[..., comp]
        for axis in range(2):
            sl_p = [slice(None)] * 2
            sl_m = [slice(None)] * 2
            sl_p[axis] = slice(2, None)
            sl_m[axis] = slice(None, -2)
            core = slice(1, -1)
            sl_c = [slice(None)] * 2
            sl_c[axis] = core
            has_p = np.zeros(grid.shape, dtype=bool)
            has_m = np.zeros(grid.shape, dtype=bool)
            has_p[tuple(sl_c)] = m[tuple(sl_p)]
            has_m[tuple(sl_c)] = m[tuple(sl_m)]
            vp = np.zeros(grid.shape)
            vm = np.zeros(grid.shape)
            vp[tuple(sl_c)] = v[tuple(sl_p)]
            vm[tuple(sl_c)] = v[tuple(sl_m)]
            d = np.zeros(grid.shape)
            both = m & has_p & has_m
            d[both] = (vp[both] - vm[both]) / (2.0 * h)
            only_p = m & has_p & ~has_m
            d[only_p] = (vp[only_p] - v[only_p]) / h
            only_m = m & ~has_p & has_m
            d[only_m] = (v[only_m] - vm[only_m]) / h
            out[..., comp, axis] = d
    return out


# ---------------------------------------------------------------------------
# operator assembly and linear solves
# ---------------------------------------------------------------------------

def _face_coefficient(grid: Grid, mode):
    zf = grid.arm_face
    p = grid.domain.bathymetry.phi(zf)
    if np.any(p <= 0.0):
        raise SingularCoefficient("depth nonpositive at a stencil face")
    b = grid.domain.bathymetry.depth_from_phi(p)
    return 1.0 / b if mode == "inv_b" else b


def assemble_elliptic(grid: Grid, mode="inv_b", bc="dirichlet"):
    """Positive-definite matrix of -div(a grad .), a = 1/b or b at faces.

    ``bc='dirichlet'``: shortened arms end at zero-valued points on the
    shoreline.  ``bc='neumann'``: arms that would leave the interior carry no
    flux (natural condition a * dpsi/dn = 0); the matrix is then singular with
    the constants as nullspace.
    """
    n = grid.n_interior
    a = _face_coefficient(grid, mode)
    h2 = grid.h * grid.h
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    idx = np.arange(n)
    for d in range(4):
        nb = grid.arm_nb[d]
        coeff = a[d] / grid.arm_theta[d] / h2
        if bc == "neumann":
            coeff = np.where(nb >= 0, coeff, 0.0)
        diag += coeff
        have = nb >= 0
        rows.append(idx[have])
        cols.append(nb[have])
        vals.append(-coeff[have])
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return A


def _get_ml(grid: Grid, key, A):
    cache = grid._op_cache
    if key not in cache:
        # pyamg estimates spectral radii with the global numpy RNG; pin it so
        # hierarchy construction (and hence every solve) is bit-reproducible
        state = np.random.get_state()
        np.random.seed(0)
        try:
            cache[key] = pyamg.smoothed_aggregation_solver(A, max_coarse=64)
        finally:
            np.random.set_state(state)
    return cache[key]


def _get_operator(grid: Grid, mode, bc="dirichlet"):
    key = ("op", mode, bc)
    if key not in grid._op_cache:
        grid._op_cache[key] = assemble_elliptic(grid, mode, bc)
    return grid._op_cache[key]


def solve_spd(grid: Grid, mode, rhs, tol, bc="dirichlet", x0=None):
    """CG solve of A x = rhs with AMG preconditioning; relative residual stop."""
    A = _get_operator(grid, mode, bc)
    ml = _get_ml(grid, ("ml", mode, bc), A)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros_like(rhs)
    maxiter = 50 * grid.n
    x = ml.solve(rhs, x0=x0, tol=tol, maxiter=maxiter, accel="cg")
    res = float(np.linalg.norm(A @ x - rhs)) / rhs_norm
    if not np.isfinite(res) or res > tol * 1.001:
        raise SolverDiverged(
            f"residual {res:.3e} above tol {tol:.1e} after {maxiter} iterations"
        )
    return x


# ---------------------------------------------------------------------------
# stream solve and velocity recovery
# ---------------------------------------------------------------------------

@dataclass
class StreamSolution:
    """Stream function, recovered velocity, and solve diagnostics."""

    psi: ScalarField
    u: VectorField
    f: ScalarField
    residual: float
    energy: float


def velocity_from_stream(grid: Grid, psi: ScalarField) -> VectorField:
    """u = (1/b) * (-dpsi/dy, dpsi/dx), centered on the zero-extended stream."""
    qx, qy = perp_grad(psi.values, grid.h)
    vals = np.zeros(grid.shape + (2,))
    m = grid.interior
    vals[m, 0] = qx[m] / grid.b_node[m]
    vals[m, 1] = qy[m] / grid.b_node[m]
    u = VectorField(grid, vals, name="u", time=psi.time)
    u.div_residual = div_b_residual(grid, vals)
    u.divergence_free = True
    return u


def solve_stream(grid: Grid, f: ScalarField, tol_solve: float = 1e-8, x0=None) -> StreamSolution:
    """Solve div((1/b) grad psi) = f, psi = 0 on the shoreline."""
    if not (0.0 < tol_solve <= 1e-4):
        raise ValueError(f"tol_solve must lie in (0, 1e-4], got {tol_solve}")
    f_int = f.values[grid.interior]
    x = solve_spd(grid, "inv_b", -f_int, tol_solve, x0=x0)
    vals = np.zeros(grid.shape)
    vals[grid.interior] = x
    psi = ScalarField(grid, vals, name="psi", time=f.time)
    u = velocity_from_stream(grid, psi)

    A = _get_operator(grid, "inv_b")
    rhs_norm = float(np.linalg.norm(f_int))
    residual = 0.0 if rhs_norm == 0.0 else float(np.linalg.norm(A @ x + f_int)) / rhs_norm

    gx, gy = ddx(psi.values, grid.h), ddy(psi.values, grid.h)
    m = grid.interior
    e2 = np.sum(grid.weights[m] * (gx[m] ** 2 + gy[m] ** 2) / grid.b_node[m])
    return StreamSolution(psi=psi, u=u, f=f, residual=residual, energy=float(math.sqrt(e2)))


# ---------------------------------------------------------------------------
# disk Green kernel and its smoother remainder
# ---------------------------------------------------------------------------

def green_disk(x, y):
    """Dirichlet Green kernel of the Laplacian on the unit disk.

    Evaluated through |x-y|^2 / (|x-y|^2 + (1-|x|^2)(1-|y|^2)), which keeps
    the reflected-point factor finite at y = 0 and vanishes on |x| = 1.
    Accepts scalars or broadcastable complex arrays.
    """
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    d2 = np.abs(x - y) ** 2
    if np.any(d2 < _COINCIDENT_TOL**2):
        raise CoincidentPoints("green_disk evaluated at coincident points")
    denom = d2 + (1.0 - np.abs(x) ** 2) * (1.0 - np.abs(y) ** 2)
    return np.log(d2 / denom) / (4.0 * math.pi)


def green_domain(grid: Grid, x, y):
    """Green kernel of the basin, pulled back through the disk map."""
    T = grid.domain.disk_map.to_disk
    return green_disk(T(x), T(y))


def _green_domain_cellmean(grid: Grid, x, y):
    """Kernel at nodes x for a fixed source y; the node coincident with y
    (if any) takes the mean of the kernel over its own cell."""
    T = grid.domain.disk_map.to_disk
    wx = T(np.asarray(x, dtype=complex))
    wy = complex(T(np.asarray([y], dtype=complex))[0])
    d2 = np.abs(wx - wy) ** 2
    denom = d2 + (1.0 - np.abs(wx) ** 2) * (1.0 - np.abs(wy) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.log(d2 / denom) / (4.0 * math.pi)
    hit = d2 < (0.01 * grid.h) ** 2
    if np.any(hit):
        dT = complex(grid.domain.disk_map.deriv_to_disk(np.asarray([y], dtype=complex))[0])
        g[hit] = (
            math.log(grid.h) + _LOG_CELL + math.log(abs(dT)) - math.log(1.0 - abs(wy) ** 2)
        ) / (2.0 * math.pi)
    return g


@dataclass
class GreenRemainder:
    """Smoother remainder of the kernel split at one source point."""

    y: complex
    s_field: ScalarField
    grad_norm: float


def solve_green_remainder(grid: Grid, y, delta: float, tol_solve: float = 1e-8) -> GreenRemainder:
    """Solve the correction problem for the kernel remainder at source y.

    The remainder S(., y) satisfies
        div((1/b) grad_x S) = G(x, y) sqrt(b(y)) Lap(1/sqrt(b))(x),
    with the Laplacian factor evaluated in closed form; S = 0 on the
    shoreline.  Requires dist(y, shoreline) >= delta.
    """
    y = complex(y)
    bath = grid.domain.bathymetry
    dy = float(grid.domain.boundary_distance(np.asarray([y]))[0])
    if dy < delta:
        raise SourceTooCloseToBoundary(
            f"source at distance {dy:.3e} < delta {delta:.3e} from the shoreline"
        )
    z = grid.interior_points()
    sqrt_by = math.sqrt(float(bath.depth(np.asarray([y]))[0]))
    rhs = _green_domain_cellmean(grid, z, y) * sqrt_by * bath.laplacian_inv_sqrt_depth(z)
    x = solve_spd(grid, "inv_b", -rhs, tol_solve)
    vals = np.zeros(grid.shape)
    vals[grid.interior] = x
    s_field = ScalarField(grid, vals, name="green_remainder")

    gx, gy_ = ddx(vals, grid.h), ddy(vals, grid.h)
    m = grid.interior
    g2 = np.sum(grid.weights[m] * (gx[m] ** 2 + gy_[m] ** 2) / grid.b_node[m])
    return GreenRemainder(y=y, s_field=s_field, grad_norm=float(math.sqrt(g2)))


def _log_cell_constant():
    """Mean of ln|z| over the unit square, for the self-cell kernel integral."""
    t = (np.arange(48) + 0.5) / 48 - 0.5
    gx, gy = np.meshgrid(t, t, indexing="ij")
    return float(np.mean(np.log(np.hypot(gx, gy))))


_LOG_CELL = _log_cell_constant()


def assemble_green_solution(grid: Grid, f: ScalarField, delta: float = 0.1,
                            tol_solve: float = 1e-8) -> ScalarField:
    """Stream function by kernel quadrature plus one remainder solve.

    psi(x) = sum_y [ G(x,y) sqrt(b(x) b(y)) + S(x,y) ] f(y) w(y)
    over the support of f, which must keep distance >= delta from the
    shoreline.  The remainder sum is obtained from a single elliptic solve by
    linearity of the correction problem in its right-hand side.
    """
    m = grid.interior
    supp = m & (np.abs(f.values) > 0.0)
    if not supp.any():
        return ScalarField(grid, np.zeros(grid.shape), name="psi_green", time=f.time)
    if float(grid.boundary_distance[supp].min()) < delta:
        raise SupportTooClose(
            f"source support closer than delta={delta} to the shoreline"
        )
    bath = grid.domain.bathymetry
    z_all = grid.interior_points()
    z_src = grid.points()[supp]
    fw = f.values[supp] * grid.weights[supp]
    sqrt_b_src = np.sqrt(bath.depth(z_src))
    sqrt_b_all = np.sqrt(bath.depth(z_all))

    T = grid.domain.disk_map.to_disk
    wx = T(z_all)
    wy = T(z_src)
    dT = grid.domain.disk_map.deriv_to_disk(z_src)

    # g(x) = sum_y G(x,y) sqrt(b(y)) f(y) w(y), diagonal handled by the
    # analytic mean of ln|.| over one cell
    g = np.zeros(z_all.shape[0])
    src_w = fw * sqrt_b_src
    step = 512
    for k in range(0, z_src.shape[0], step):
        d2 = np.abs(wx[:, None] - wy[None, k : k + step]) ** 2
        denom = d2 + (1.0 - np.abs(wx[:, None]) ** 2) * (
            1.0 - np.abs(wy[None, k : k + step]) ** 2
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = np.log(d2 / denom) / (4.0 * math.pi)
        np.nan_to_num(kern, copy=False, neginf=0.0, nan=0.0)
        g += kern @ src_w[k : k + step]
    # self-cell correction: ln|T(x)-T(y)| ~ ln(|T'(y)| |x-y|) near the diagonal
    src_index = grid.index_of[supp]
    phi_src = 1.0 - np.abs(wy) ** 2
    self_term = (
        (math.log(grid.h) + _LOG_CELL + np.log(np.abs(dT)) - np.log(phi_src))
        / (2.0 * math.pi)
    )
    g[src_index] += self_term * src_w

    rhs = bath.laplacian_inv_sqrt_depth(z_all) * g
    if np.any(rhs != 0.0):
        s_sum = solve_spd(grid, "inv_b", -rhs, tol_solve)
    else:
        s_sum = np.zeros_like(g)

    vals = np.zeros(grid.shape)
    vals[m] = sqrt_b_all * g + s_sum
    return ScalarField(grid, vals, name="psi_green", time=f.time)


# ---------------------------------------------------------------------------
# regularity audits
# ---------------------------------------------------------------------------

@dataclass
class RegularityReport:
    """Sampled regularity functionals of one stream solution."""

    sup_u: float
    grad_p_norms: dict            # p -> ||grad u||_Lp / p
    loglip_modulus: float
    c1_interior: float            # sup |grad u| on dist >= K_margin, -1 if empty
    phi_diag: dict | None = None  # sup |Phi| and Hoelder-1/2 quotient near shore

    def to_dict(self):
        out = {
            "sup_u": self.sup_u,
            "grad_p_norms": {str(p): v for p, v in self.grad_p_norms.items()},
            "loglip_modulus": self.loglip_modulus,
            "c1_interior": self.c1_interior,
        }
        if self.phi_diag is not None:
            out["phi_diag"] = self.phi_diag
        return out


def regularity_report(grid: Grid, solution: StreamSolution, samples: int = 10000,
                      K_margin: float = 0.2, seed: int = 0,
                      include_phi_diag: bool = False) -> RegularityReport:
    """Empirical regularity functionals: sup, L^p gradients, log-Lipschitz
    modulus over sampled node pairs (pairs below 2h are under-resolved and
    skipped), interior C^1 bound, and optionally the boundary diagnostic
    Phi = phi**-(alpha+1) * psi."""
    m = grid.interior
    u = solution.u.values
    sup_u = float(np.hypot(u[..., 0], u[..., 1])[m].max(initial=0.0))

    gt = grad_vector(grid, u)
    gmag = np.sqrt(np.sum(gt**2, axis=(2, 3)))
    w = grid.weights[m]
    gm = gmag[m]
    grad_p = {}
    for p in (2, 4, 8, 16, 32):
        grad_p[p] = float(np.sum(w * gm**p) ** (1.0 / p) / p)

    rng = np.random.default_rng(seed)
    z = grid.interior_points()
    n = z.shape[0]
    i1 = rng.integers(0, n, samples)
    i2 = rng.integers(0, n, samples)
    dz = np.abs(z[i1] - z[i2])
    ok = dz >= 2.0 * grid.h
    loglip = 0.0
    if ok.any():
        ui = u[m]
        du = np.hypot(ui[i1, 0] - ui[i2, 0], ui[i1, 1] - ui[i2, 1])[ok]
        den = dz[ok] * (1.0 + np.abs(np.log(dz[ok])))
        loglip = float((du / den).max(initial=0.0))

    far = m & (grid.boundary_distance >= K_margin)
    c1 = float(gmag[far].max()) if far.any() else -1.0

    phi_diag = None
    if include_phi_diag:
        bath = grid.domain.bathymetry
        band = m & (grid.boundary_distance >= 2.0 * grid.h) & (
            grid.boundary_distance <= K_margin
        )
        if band.any():
            zb = grid.points()[band]
            phi_b = bath.phi(zb)
            Phi = solution.psi.values[band] / phi_b ** (bath.alpha + 1.0)
            nb = Phi.shape[0]
            j1 = rng.integers(0, nb, min(samples, 20000))
            j2 = rng.integers(0, nb, min(samples, 20000))
            dd = np.abs(zb[j1] - zb[j2])
            okb = dd >= 2.0 * grid.h
            quot = 0.0
            if okb.any():
                quot = float(
                    (np.abs(Phi[j1] - Phi[j2])[okb] / np.sqrt(dd[okb])).max(initial=0.0)
                )
            phi_diag = {"sup": float(np.abs(Phi).max()), "holder_half": quot}
        else:
            phi_diag = {"sup": -1.0, "holder_half": -1.0}

    return RegularityReport(
        sup_u=sup_u,
        grad_p_norms=grad_p,
        loglip_modulus=loglip,
        c1_interior=c1,
        phi_diag=phi_diag,
    )
