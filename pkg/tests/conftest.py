import math

import numpy as np
import pytest

from lakesim.geometry import ScalarField, build_domain, build_grid


@pytest.fixture(scope="session")
def disk_flat():
    return build_domain({"family": "disk", "alpha": 0.0, "c0": 1.0})


@pytest.fixture(scope="session")
def disk_alpha1():
    return build_domain({"family": "disk", "alpha": 1.0, "c0": 1.0})


@pytest.fixture(scope="session")
def grid_flat_64(disk_flat):
    return build_grid(disk_flat, 64)


@pytest.fixture(scope="session")
def grid_flat_96(disk_flat):
    return build_grid(disk_flat, 96)


@pytest.fixture(scope="session")
def grid_a1_64(disk_alpha1):
    return build_grid(disk_alpha1, 64)


@pytest.fixture(scope="session")
def grid_a1_128(disk_alpha1):
    return build_grid(disk_alpha1, 128)


def smooth_bump(z, center=0j, radius=0.6, amplitude=1.0):
    s2 = (np.abs(np.asarray(z) - center) / radius) ** 2
    out = np.zeros(np.shape(s2))
    m = s2 < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s2[m]))
    return amplitude * out


def bump_field(grid, center=0j, radius=0.6, amplitude=1.0, name="omega"):
    return ScalarField.from_function(
        grid, lambda z: smooth_bump(z, center, radius, amplitude), name=name
    )


def radial_stream_oracle(f_of_r, b_of_r, r_nodes=20001):
    """1-D quadrature oracle for the radial stream problem on the unit disk.

    (1/r) d/dr ( r psi'(r) / b(r) ) = f(r), psi(1) = 0, gives
    psi'(r) = (b(r)/r) * int_0^r s f(s) ds.  Returns r, psi(r), u_theta(r).
    """
    r = np.linspace(0.0, 1.0, r_nodes)
    s = r[1:]
    integrand = s * f_of_r(s)
    circ = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1])
                                            * np.diff(s))])
    circ = np.concatenate([[0.0], circ])
    with np.errstate(divide="ignore", invalid="ignore"):
        psi_prime = np.where(r > 0, b_of_r(r) * circ / np.where(r > 0, r, 1.0), 0.0)
    # psi(r) = -int_r^1 psi'
    rev = np.cumsum((0.5 * (psi_prime[1:] + psi_prime[:-1]) * np.diff(r))[::-1])[::-1]
    psi = -np.concatenate([rev, [0.0]])
    with np.errstate(divide="ignore", invalid="ignore"):
        u_theta = np.where(b_of_r(r) > 0, psi_prime / np.maximum(b_of_r(r), 1e-300), 0.0)
    return r, psi, u_theta
