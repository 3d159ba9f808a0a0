"""Lake geometry: domain, depth profile, masked Cartesian grid, weighted norms.

A lake is a pair (Omega, b) of a bounded simply-connected basin and a depth
profile b(x) = c0 * phi(x)**alpha that is positive inside and vanishes on the
shoreline when alpha > 0.  The basin is described through an analytic map T
onto the unit disk; phi(x) = 1 - |T(x)|**2 is the boundary-defining function,
so Omega = {phi > 0} and grad(phi) never vanishes on the shoreline as long as
T' does not.

Everything downstream (elliptic solves, transport, viscous stepping) consumes
the uniform node-centered grid built here: an interior/boundary/exterior mask,
per-node distance to the shoreline, cut-cell quadrature weights, and the
cut-arm geometry used by the 5-point stencils.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateBathymetry,
    InvalidExponent,
    ResolutionTooCoarse,
    UnsupportedDomain,
)

_BOUNDARY_SAMPLES = 4096
_ROUNDTRIP_TOL = 1e-10


# ---------------------------------------------------------------------------
# conformal maps onto the unit disk
# ---------------------------------------------------------------------------

class IdentityMap:
    """Map for the unit-disk basin itself: T = id."""

    def to_disk(self, z):
        return np.asarray(z, dtype=complex)

    def from_disk(self, w):
        return np.asarray(w, dtype=complex)

    def deriv_to_disk(self, z):
        return np.ones_like(np.asarray(z, dtype=complex))


class PolynomialMap:
    """Analytic map given by truncated power series for T and its inverse.

    ``to_coeffs`` are the coefficients a_k of T(z) = sum a_k z^k mapping the
    basin onto the unit disk, ``from_coeffs`` those of the inverse.  The pair
    must be mutually inverse to 1e-10 on the basin; build_domain checks this.
    """

    def __init__(self, to_coeffs, from_coeffs):
        self.to_coeffs = np.asarray(to_coeffs, dtype=complex)
        self.from_coeffs = np.asarray(from_coeffs, dtype=complex)
        if self.to_coeffs.size < 2 or self.from_coeffs.size < 2:
            raise UnsupportedDomain("map series need at least a linear term")
        k = np.arange(1, self.to_coeffs.size)
        self._dto = self.to_coeffs[1:] * k

    @staticmethod
    def _horner(coeffs, z):
        out = np.zeros_like(z)
        for c in coeffs[::-1]:
            out = out * z + c
        return out

    def to_disk(self, z):
        return self._horner(self.to_coeffs, np.asarray(z, dtype=complex))

    def from_disk(self, w):
        return self._horner(self.from_coeffs, np.asarray(w, dtype=complex))

    def deriv_to_disk(self, z):
        return self._horner(self._dto, np.asarray(z, dtype=complex))


# ---------------------------------------------------------------------------
# bathymetry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bathymetry:
    """Depth profile b = c0 * phi**alpha with phi = 1 - |T|^2.

    c0 is the constant depth scale (strictly positive), alpha >= 0 the
    shoreline-vanishing exponent; alpha = 0 is a flat non-vanishing shore.
    """

    c0: float
    alpha: float
    disk_map: IdentityMap | PolynomialMap

    def phi(self, z):
        w = self.disk_map.to_disk(z)
        return 1.0 - np.abs(w) ** 2

    def grad_phi(self, z):
        """Gradient of phi as a complex number gx + i*gy."""
        w = self.disk_map.to_disk(z)
        dT = self.disk_map.deriv_to_disk(z)
        return -2.0 * w * np.conj(dT)

    def depth(self, z):
        """b at points strictly inside the basin (phi > 0)."""
        p = self.phi(z)
        return self.c0 * np.power(np.maximum(p, 0.0), self.alpha)

    def depth_from_phi(self, p):
        return self.c0 * np.power(np.maximum(p, 0.0), self.alpha)

    def laplacian_inv_sqrt_depth(self, z):
        """Closed form of Laplace(1/sqrt(b)) at interior points.

        With b = c0 * p(T(x))**alpha, p(w) = 1 - |w|^2, conformal invariance
        of the Laplacian gives
            Lap(1/sqrt(b)) = |T'|^2 / sqrt(c0)
                * (2*alpha*p**(-alpha/2-1) + alpha*(alpha+2)*|w|^2*p**(-alpha/2-2)).
        Singular on the shoreline; callers only evaluate at interior nodes.
        """
        z = np.asarray(z, dtype=complex)
        if self.alpha == 0.0:
            return np.zeros(z.shape, dtype=float)
        w = self.disk_map.to_disk(z)
        dT = self.disk_map.deriv_to_disk(z)
        r2 = np.abs(w) ** 2
        p = 1.0 - r2
        a = self.alpha
        val = 2.0 * a * p ** (-a / 2.0 - 1.0) + a * (a + 2.0) * r2 * p ** (-a / 2.0 - 2.0)
        return np.abs(dT) ** 2 / math.sqrt(self.c0) * val


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LakeDomain:
    """The pair (Omega, b): bathymetry, map to the disk, sampled shoreline."""

    family: str
    bathymetry: Bathymetry
    boundary: np.ndarray          # complex shoreline samples, closed curve
    _tree: cKDTree = field(repr=False)

    @property
    def disk_map(self):
        return self.bathymetry.disk_map

    @property
    def alpha(self):
        return self.bathymetry.alpha

    def boundary_distance(self, z):
        """Unsigned distance to the shoreline."""
        z = np.asarray(z, dtype=complex)
        if self.family == "disk":
            return np.abs(1.0 - np.abs(z))
        pts = np.stack([z.real.ravel(), z.imag.ravel()], axis=1)
        d, _ = self._tree.query(pts)
        return d.reshape(z.shape)

    def bounding_box(self):
        return (
            float(self.boundary.real.min()),
            float(self.boundary.real.max()),
            float(self.boundary.imag.min()),
            float(self.boundary.imag.max()),
        )


def _cfg_get(config, key, default=None):
    if isinstance(config, dict):
        return config.get(key, default)
    return getattr(config, key, default)


def build_domain(config) -> LakeDomain:
    """Build a LakeDomain from a config carrying family, alpha, c0, map_series.

    Supported families: "disk" (unit disk, identity map) and "mapped"
    (basin given by explicit power series for the map to the disk and its
    inverse).  Rejects alpha < 0 and non-positive depth scales.
    """
    family = _cfg_get(config, "family")
    alpha = float(_cfg_get(config, "alpha", 0.0))
    c0 = float(_cfg_get(config, "c0", 1.0))
    if alpha < 0:
        raise DegenerateBathymetry(f"alpha must be >= 0, got {alpha}")
    if c0 <= 0:
        raise DegenerateBathymetry(f"depth scale c0 must be positive, got {c0}")

    if family == "disk":
        disk_map = IdentityMap()
    elif family == "mapped":
        series = _cfg_get(config, "map_series")
        if series is None:
            raise UnsupportedDomain("family 'mapped' needs map_series")
        to_c = [complex(a, b) for a, b in _cfg_get(series, "to_disk")]
        from_c = [complex(a, b) for a, b in _cfg_get(series, "from_disk")]
        disk_map = PolynomialMap(to_c, from_c)
    else:
        raise UnsupportedDomain(f"unknown domain family {family!r}")

    bath = Bathymetry(c0=c0, alpha=alpha, disk_map=disk_map)

    theta = np.linspace(0.0, 2.0 * math.pi, _BOUNDARY_SAMPLES, endpoint=False)
    boundary = disk_map.from_disk(np.exp(1j * theta))

    # shoreline must be non-flat: |grad phi| = 2 |T'| > 0 there
    g = np.abs(bath.grad_phi(boundary * (1.0 - 1e-9)))
    if g.min() <= 1e-12:
        raise DegenerateBathymetry("grad(phi) vanishes at a sampled shoreline point")

    # round-trip check of the map pair on sampled interior points
    rng = np.random.default_rng(0)
    w = (0.98 * np.sqrt(rng.uniform(0, 1, 256))) * np.exp(
        2j * math.pi * rng.uniform(0, 1, 256)
    )
    pts = disk_map.from_disk(w)
    err = np.abs(disk_map.from_disk(disk_map.to_disk(pts)) - pts)
    if err.max() > _ROUNDTRIP_TOL:
        raise UnsupportedDomain(
            f"map series round-trip error {err.max():.2e} exceeds {_ROUNDTRIP_TOL}"
        )
    back = np.abs(disk_map.to_disk(pts))
    if back.max() >= 1.0:
        raise UnsupportedDomain("map sends interior points outside the unit disk")

    tree = cKDTree(np.stack([boundary.real, boundary.imag], axis=1))
    return LakeDomain(family=family, bathymetry=bath, boundary=boundary, _tree=tree)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

# arm directions: E, W, N, S as (di, dj) index offsets
_DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))

MASK_EXTERIOR = 0
MASK_BOUNDARY = 1
MASK_INTERIOR = 2


@dataclass
class Grid:
    """Uniform node-centered lattice over the basin's bounding box.

    Interior nodes sit at distance >= kappa*h/2 from the shoreline so the
    depth is strictly positive on them and on every stencil face.  Arms from
    interior nodes that cross the shoreline are shortened to the crossing
    (theta < 1) and carry homogeneous Dirichlet data there.
    """

    domain: LakeDomain
    n: int
    h: float
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray                 # (nx, ny) int8
    boundary_distance: np.ndarray    # (nx, ny) unsigned
    weights: np.ndarray              # (nx, ny) cut-cell quadrature, 0 outside
    kappa: float
    b_node: np.ndarray               # depth at nodes with phi > 0, else 0
    interior: np.ndarray             # (nx, ny) bool
    index_of: np.ndarray             # (nx, ny) -> unknown index or -1
    nodes_ij: np.ndarray             # (n_int, 2) int
    arm_theta: np.ndarray            # (4, n_int) arm fraction in (0, 1]
    arm_face: np.ndarray             # (4, n_int) complex face eval points
    arm_nb: np.ndarray               # (4, n_int) neighbor unknown index or -1
    edge_layer: np.ndarray           # (n_int,) bool: has a Dirichlet arm
    _op_cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def n_interior(self):
        return self.nodes_ij.shape[0]

    def points(self):
        """Complex coordinates of the full lattice, shape (nx, ny)."""
        return self.x[:, None] + 1j * self.y[None, :]

    def interior_points(self):
        return self.x[self.nodes_ij[:, 0]] + 1j * self.y[self.nodes_ij[:, 1]]

    def signature(self):
        return (self.domain.family, self.domain.alpha, self.n, self.kappa)


def _cell_fractions(bath, centers, h, lanes=8):
    """Inside-area fraction of node cells near the shoreline.

    Each cell is sliced into lanes transverse to the local boundary (search
    axis = the larger gradient component of phi, so a lane crosses the
    shoreline at most once); the crossing is bisected per lane and the inside
    lengths averaged.  Smooth O(h^2) area convergence, no subgrid aliasing.
    """
    n = centers.shape[0]
    g = bath.grad_phi(centers)
    use_x = np.abs(g.real) >= np.abs(g.imag)
    # lane offsets across the cell, search direction along +/- the other axis
    t = ((np.arange(lanes) + 0.5) / lanes - 0.5) * h
    across = np.where(use_x, 1j, 1.0)
    along = np.where(use_x, 1.0, 1j)
    starts = centers[:, None] + across[:, None] * t[None, :] - 0.5 * h * along[:, None]
    ends = starts + h * along[:, None]

    phi_s = bath.phi(starts)
    phi_e = bath.phi(ends)
    lane_len = np.zeros((n, lanes))
    lane_len[(phi_s > 0) & (phi_e > 0)] = h
    cross = (phi_s > 0) != (phi_e > 0)
    if np.any(cross):
        a = starts[cross]
        b = ends[cross]
        sa = phi_s[cross] > 0
        lo = np.zeros(a.shape[0])
        hi = np.ones(a.shape[0])
        for _ in range(44):
            mid = 0.5 * (lo + hi)
            inside = bath.phi(a + mid * (b - a)) > 0
            same = inside == sa
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        theta = 0.5 * (lo + hi)
        lane_len[cross] = np.where(sa, theta, 1.0 - theta) * h
    return lane_len.mean(axis=1) / h


def build_grid(domain: LakeDomain, n: int, kappa: float = 0.5, bbox=None, pad: int = 4) -> Grid:
    """Build the masked grid at resolution n (cells across the wider extent)."""
    if n < 16:
        raise ResolutionTooCoarse(f"resolution n={n} below minimum 16")
    if bbox is None:
        bbox = domain.bounding_box()
    xmin, xmax, ymin, ymax = bbox
    h = max(xmax - xmin, ymax - ymin) / n
    nx = int(math.ceil((xmax - xmin) / h)) + 1 + 2 * pad
    ny = int(math.ceil((ymax - ymin) / h)) + 1 + 2 * pad
    x = xmin - pad * h + h * np.arange(nx)
    y = ymin - pad * h + h * np.arange(ny)
    Z = x[:, None] + 1j * y[None, :]

    bath = domain.bathymetry
    phi = bath.phi(Z)
    dist = domain.boundary_distance(Z)
    inside = phi > 0.0
    interior = inside & (dist >= kappa * h / 2.0)
    n_int = int(interior.sum())
    if n_int < 100:
        raise ResolutionTooCoarse(
            f"only {n_int} interior nodes (need >= 100); basin may not meet the grid"
        )

    # Dirichlet ring: non-interior nodes 4-adjacent to an interior node
    ring = np.zeros_like(interior)
    ring[1:, :] |= interior[:-1, :]
    ring[:-1, :] |= interior[1:, :]
    ring[:, 1:] |= interior[:, :-1]
    ring[:, :-1] |= interior[:, 1:]
    ring &= ~interior

    mask = np.zeros(interior.shape, dtype=np.int8)
    mask[ring] = MASK_BOUNDARY
    mask[interior] = MASK_INTERIOR

    index_of = -np.ones(interior.shape, dtype=np.int64)
    ii, jj = np.nonzero(interior)
    index_of[ii, jj] = np.arange(n_int)
    nodes_ij = np.stack([ii, jj], axis=1)
    zc = Z[ii, jj]

    # arm geometry
    arm_theta = np.ones((4, n_int))
    arm_face = np.empty((4, n_int), dtype=complex)
    arm_nb = -np.ones((4, n_int), dtype=np.int64)
    for d, (di, dj) in enumerate(_DIRS):
        ni, nj = ii + di, jj + dj
        step = di * h + 1j * dj * h
        nb_interior = interior[ni, nj]
        arm_nb[d, nb_interior] = index_of[ni[nb_interior], nj[nb_interior]]
        arm_face[d] = zc + 0.5 * step
        # arms reaching outside the basin stop at the phi = 0 crossing
        crosses = ~nb_interior & (phi[ni, nj] <= 0.0)
        if np.any(crosses):
            z0 = zc[crosses]
            lo = np.zeros(z0.shape[0])
            hi = np.ones(z0.shape[0])
            for _ in range(48):
                mid = 0.5 * (lo + hi)
                good = bath.phi(z0 + mid * step) > 0.0
                lo = np.where(good, mid, lo)
                hi = np.where(good, hi, mid)
            theta = hi
            arm_theta[d, crosses] = theta
            arm_face[d, crosses] = z0 + 0.5 * theta * step
    if np.any(bath.phi(arm_face) <= 0.0):
        raise ResolutionTooCoarse("a stencil face fell outside the basin; refine the grid")

    edge_layer = (arm_nb < 0).any(axis=0)

    # quadrature: full h^2 deep inside, subsampled fraction near the shoreline
    weights = np.zeros(interior.shape)
    near = dist < 1.5 * h
    weights[interior & ~near] = h * h
    ci, cj = np.nonzero(near)
    if ci.size:
        frac = _cell_fractions(bath, Z[ci, cj], h)
        for k in range(ci.size):
            a = h * h * frac[k]
            if a == 0.0:
                continue
            i0, j0 = ci[k], cj[k]
            if interior[i0, j0]:
                weights[i0, j0] += a
            else:
                # attribute shoreline slivers to the nearest interior node
                best = None
                bd = np.inf
                for di in range(-3, 4):
                    for dj in range(-3, 4):
                        i1, j1 = i0 + di, j0 + dj
                        if 0 <= i1 < nx and 0 <= j1 < ny and interior[i1, j1]:
                            dd = di * di + dj * dj
                            if dd < bd:
                                bd, best = dd, (i1, j1)
                if best is not None:
                    weights[best] += a

    b_node = np.zeros(interior.shape)
    b_node[inside] = bath.depth_from_phi(phi[inside])

    return Grid(
        domain=domain,
        n=n,
        h=h,
        x=x,
        y=y,
        mask=mask,
        boundary_distance=dist,
        weights=weights,
        kappa=kappa,
        b_node=b_node,
        interior=interior,
        index_of=index_of,
        nodes_ij=nodes_ij,
        arm_theta=arm_theta,
        arm_face=arm_face,
        arm_nb=arm_nb,
        edge_layer=edge_layer,
    )


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass
class ScalarField:
    """Grid-sampled scalar, stored on the full lattice, zero outside interior."""

    grid: Grid
    values: np.ndarray
    name: str = ""
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError("field shape does not match grid")
        if not np.isfinite(self.values[self.grid.interior]).all():
            raise ValueError(f"non-finite values in field {self.name!r}")

    @classmethod
    def from_function(cls, grid, fn, name="", time=0.0):
        vals = np.zeros(grid.shape)
        z = grid.interior_points()
        vals[grid.interior] = np.asarray(fn(z), dtype=float)
        return cls(grid, vals, name=name, time=time)

    def interior_values(self):
        return self.values[self.grid.interior]

    def copy(self):
        return ScalarField(self.grid, self.values.copy(), self.name, self.time)


@dataclass
class VectorField:
    """Grid-sampled 2-vector, full lattice layout (nx, ny, 2)."""

    grid: Grid
    values: np.ndarray
    name: str = ""
    time: float = 0.0
    divergence_free: bool = False    # discrete div(b u) residual passed
    div_residual: float = float("nan")

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape + (2,):
            raise ValueError("vector field shape does not match grid")
        if not np.isfinite(self.values[self.grid.interior]).all():
            raise ValueError(f"non-finite values in vector field {self.name!r}")

    @classmethod
    def from_function(cls, grid, fn, name="", time=0.0):
        vals = np.zeros(grid.shape + (2,))
        z = grid.interior_points()
        vx, vy = fn(z)
        vals[grid.interior, 0] = vx
        vals[grid.interior, 1] = vy
        return cls(grid, vals, name=name, time=time)

    def magnitude(self):
        return np.hypot(self.values[..., 0], self.values[..., 1])

    def copy(self):
        out = VectorField(self.grid, self.values.copy(), self.name, self.time)
        out.divergence_free = self.divergence_free
        out.div_residual = self.div_residual
        return out


# ---------------------------------------------------------------------------
# weighted norms
# ---------------------------------------------------------------------------

_WEIGHT_MODES = ("b", "b^{1/p}", "none")


def weighted_norm(f, p, weight_mode="b"):
    """Quadrature approximation of the depth-weighted L^p norm.

    Modes "b" and "b^{1/p}" both integrate |f|^p against the depth; they
    differ only at p = inf, where all modes reduce to the plain interior sup
    (the pointwise weight b**(1/p) tends to 1 wherever the depth is positive).
    """
    if weight_mode not in _WEIGHT_MODES:
        raise ValueError(f"weight_mode must be one of {_WEIGHT_MODES}")
    if p != math.inf and p < 1:
        raise InvalidExponent(f"norm exponent p={p} < 1")
    grid = f.grid
    mag = f.magnitude() if isinstance(f, VectorField) else np.abs(f.values)
    mag = mag[grid.interior]
    if p == math.inf:
        return float(mag.max(initial=0.0))
    w = grid.weights[grid.interior]
    if weight_mode in ("b", "b^{1/p}"):
        w = w * grid.b_node[grid.interior]
    return float(np.sum(w * mag**p) ** (1.0 / p))
